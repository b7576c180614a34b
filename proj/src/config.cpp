#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "seta/cli.hpp"
#include "seta/errors.hpp"

namespace seta {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: '{}' is not a finite number", key, v));
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("{}: '{}' is not an integer", key, v));
  }
}

int to_int32(const std::string& key, const std::string& v) {
  const long long i = to_int(key, v);
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max())
    throw ConfigError(fmt::format("{}: {} is out of range", key, v));
  return int(i);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::vector<std::string> to_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string join(const std::vector<std::string>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + v[i];
  return out;
}

std::string num(double v) { return fmt::format("{}", v); }

struct Field {
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

#define SETA_INT(member) \
  Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_int32(k, v); }, \
        [](const ExperimentConfig& c) { return std::to_string(c.member); }}
#define SETA_REAL(member) \
  Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.member = to_double(k, v); }, \
        [](const ExperimentConfig& c) { return num(c.member); }}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = {
      {"model.dim", SETA_INT(geometry.dim)},
      {"model.hidden_layers", SETA_INT(geometry.hidden_layers)},
      {"model.block_size", SETA_INT(geometry.block_size)},
      {"model.classes", SETA_INT(geometry.n_classes)},
      {"model.context_blocks", SETA_INT(geometry.context_blocks)},
      {"model.base_diag", SETA_REAL(geometry.base_diag)},
      {"model.base_scale", SETA_REAL(geometry.base_scale)},
      {"model.readout_gain", SETA_REAL(geometry.readout_gain)},
      {"selection.budget", SETA_INT(seta.selection.budget)},
      {"selection.tau_block", SETA_REAL(seta.selection.tau_block)},
      {"selection.tie_break",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               if (v == "coord_asc") c.seta.selection.tie_break = TieBreak::CoordAscending;
               else if (v == "coord_desc") c.seta.selection.tie_break = TieBreak::CoordDescending;
               else throw ConfigError(fmt::format("{}: expected coord_asc or coord_desc, got '{}'", k, v));
             },
             [](const ExperimentConfig& c) {
               return std::string(c.seta.selection.tie_break == TieBreak::CoordAscending ? "coord_asc" : "coord_desc");
             }}},
      {"selection.warmup_fraction", SETA_REAL(seta.train.selection_warmup_fraction)},
      {"sos.tau_ect", SETA_INT(seta.sos.tau_ect)},
      {"sos.tau_trt", SETA_INT(seta.sos.tau_trt)},
      {"gating.top_k", SETA_INT(seta.top_k)},
      {"gating.learning_rate", SETA_REAL(seta.train.gate_learning_rate)},
      {"gating.init_scale", SETA_REAL(seta.train.gate_init_scale)},
      {"gating.init",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               if (v == "prototype") c.seta.train.gate_init = GateInitMode::Prototype;
               else if (v == "zero") c.seta.train.gate_init = GateInitMode::Zero;
               else throw ConfigError(fmt::format("{}: expected prototype or zero, got '{}'", k, v));
             },
             [](const ExperimentConfig& c) {
               return std::string(c.seta.train.gate_init == GateInitMode::Prototype ? "prototype" : "zero");
             }}},
      {"train.learning_rate", SETA_REAL(seta.train.learning_rate)},
      {"train.lr_warmup_fraction", SETA_REAL(seta.train.lr_warmup_fraction)},
      {"train.epochs", SETA_INT(seta.train.epochs_per_task)},
      {"train.batch_size", SETA_INT(seta.train.batch_size)},
      {"train.lambda", SETA_REAL(seta.train.lambda)},
      {"train.momentum", SETA_REAL(seta.train.momentum)},
      {"train.seed",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               const long long s = to_int(k, v);
               if (s < 0) throw ConfigError(fmt::format("{}: seed must be >= 0", k));
               c.seta.train.seed = std::uint64_t(s);
             },
             [](const ExperimentConfig& c) { return std::to_string(c.seta.train.seed); }}},
      {"train.optimizer",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               if (v == "sgd") c.seta.train.optimizer = Optimizer::Sgd;
               else if (v == "momentum") c.seta.train.optimizer = Optimizer::Momentum;
               else throw ConfigError(fmt::format("{}: expected sgd or momentum, got '{}'", k, v));
             },
             [](const ExperimentConfig& c) {
               return std::string(c.seta.train.optimizer == Optimizer::Sgd ? "sgd" : "momentum");
             }}},
      {"train.check_gradients",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seta.train.check_gradients = to_bool(k, v); },
             [](const ExperimentConfig& c) { return std::string(c.seta.train.check_gradients ? "true" : "false"); }}},
      {"baseline.ewc_lambda", SETA_REAL(ewc_lambda)},
      {"tasks.count", SETA_INT(tasks)},
      {"tasks.kind",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               if (v == "classification") c.kind = TaskKind::Classification;
               else if (v == "regression") c.kind = TaskKind::Regression;
               else throw ConfigError(fmt::format("{}: expected classification or regression, got '{}'", k, v));
             },
             [](const ExperimentConfig& c) {
               return std::string(c.kind == TaskKind::Classification ? "classification" : "regression");
             }}},
      {"tasks.planted_blocks", SETA_INT(planted)},
      {"tasks.overlaps",
       Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
               c.overlaps.clear();
               for (const auto& item : to_list(v)) c.overlaps.push_back(to_double(k, item));
             },
             [](const ExperimentConfig& c) {
               std::vector<std::string> s;
               for (double o : c.overlaps) s.push_back(num(o));
               return join(s);
             }}},
      {"tasks.n_train", SETA_INT(n_train)},
      {"tasks.n_eval", SETA_INT(n_eval)},
      {"tasks.noise_std", SETA_REAL(noise)},
      {"tasks.delta_scale", SETA_REAL(geometry.delta_scale)},
      {"tasks.signature_norm", SETA_REAL(geometry.signature_norm)},
      {"tasks.context_noise", SETA_REAL(geometry.context_noise)},
      {"tasks.label_margin", SETA_REAL(geometry.label_margin)},
      {"tasks.train_files",
       Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.train_files = to_list(v); },
             [](const ExperimentConfig& c) { return join(c.train_files); }}},
      {"tasks.eval_files",
       Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.eval_files = to_list(v); },
             [](const ExperimentConfig& c) { return join(c.eval_files); }}},
      {"output.dir",
       Field{[](ExperimentConfig& c, const std::string&, const std::string& v) { c.out_dir = v; },
             [](const ExperimentConfig& c) { return c.out_dir; }}},
  };
  return table;
}

#undef SETA_INT
#undef SETA_REAL

}  // namespace

void ExperimentConfig::validate() const {
  if (geometry.dim < 1) throw ConfigError("model.dim must be >= 1");
  if (geometry.hidden_layers < 1) throw ConfigError("model.hidden_layers must be >= 1");
  if (geometry.block_size < 1) throw ConfigError("model.block_size must be >= 1");
  if (geometry.n_classes < 2 || geometry.n_classes > geometry.dim) throw ConfigError("model.classes must be in [2, dim]");
  if (geometry.context_blocks < 0 || geometry.context_dims() >= geometry.dim)
    throw ConfigError("model.context_blocks must leave content dimensions");
  if (seta.selection.budget < 1) throw ConfigError("selection.budget must be >= 1");
  if (!(seta.selection.tau_block >= 0.0)) throw ConfigError("selection.tau_block must be >= 0");
  if (seta.sos.tau_ect < 1 || seta.sos.tau_trt < 1) throw ConfigError("sos thresholds must be >= 1");
  if (seta.top_k < 1) throw ConfigError("gating.top_k must be >= 1");
  seta.train.validate();
  if (!(ewc_lambda >= 0.0)) throw ConfigError("baseline.ewc_lambda must be >= 0");
  if (tasks < 1) throw ConfigError("tasks.count must be >= 1");
  if (planted < 1) throw ConfigError("tasks.planted_blocks must be >= 1");
  for (double o : overlaps)
    if (!(o >= 0.0 && o <= 1.0)) throw ConfigError("tasks.overlaps entries must be in [0,1]");
  if (tasks > 1 && overlaps.empty() && train_files.empty()) throw ConfigError("tasks.overlaps is empty");
  if (n_train < 1 || n_eval < 1) throw ConfigError("tasks.n_train and tasks.n_eval must be >= 1");
  if (!(noise >= 0.0)) throw ConfigError("tasks.noise_std must be >= 0");
  if (!(geometry.label_margin >= 0.0)) throw ConfigError("tasks.label_margin must be >= 0");
  if (train_files.size() != eval_files.size())
    throw ConfigError("tasks.train_files and tasks.eval_files must list the same number of files");
  if (!train_files.empty() && int(train_files.size()) != tasks)
    throw ConfigError("tasks.train_files must list one file per task");
  if (out_dir.empty()) throw ConfigError("output.dir is empty");
}

ExperimentConfig parse_config(std::istream& is, const std::string& source) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(fmt::format("{}:{}: expected 'key = value'", source, lineno));
    const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    auto it = fields().find(key);
    if (it == fields().end()) throw ConfigError(fmt::format("{}:{}: unknown key '{}'", source, lineno, key));
    if (!seen.insert(key).second) throw ConfigError(fmt::format("{}:{}: key '{}' given twice", source, lineno, key));
    it->second.set(cfg, key, value);
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  return parse_config(is, path.string());
}

std::string render_config(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [key, f] : fields()) out += key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace seta
