#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace seta {

using Engine = std::mt19937_64;

// 64-bit FNV-1a over raw bytes; used for checksums and stream naming.
std::uint64_t fnv1a(const void* data, std::size_t size,
                    std::uint64_t h = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL);

// Independent engine for a named sub-stream ("selection", "data", "init",
// "shuffle", ...) of one master seed. `index` separates per-task streams.
Engine substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

}  // namespace seta
