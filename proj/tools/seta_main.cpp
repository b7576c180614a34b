#include "seta/cli.hpp"

int main(int argc, char** argv) { return seta::cli_main(argc, argv); }
