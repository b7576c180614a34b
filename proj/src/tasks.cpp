#include "seta/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "seta/errors.hpp"
#include "seta/rng.hpp"

namespace seta {

namespace {

Matrix gaussian(Engine& rng, Index r, Index c, double scale) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = scale * n(rng);
  return m;
}

Vector task_signature(const BenchmarkGeometry& geo, int index, Engine& rng) {
  const int cd = geo.context_dims();
  Vector s = Vector::Zero(cd);
  if (cd == 0) return s;
  if (index < 2 * cd) {
    // Antipodal axis pairs keep the first 2*cd signatures mutually non-positive.
    s(index / 2) = (index % 2 == 0 ? 1.0 : -1.0) * geo.signature_norm;
  } else {
    s = gaussian(rng, cd, 1, 1.0);
    s *= geo.signature_norm / s.norm();
  }
  return s;
}

template <class T>
void draw_without_replacement(std::vector<T>& pool, std::size_t k, Engine& rng, std::vector<T>& out) {
  for (std::size_t i = 0; i < k && !pool.empty(); ++i) {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    const std::size_t at = pick(rng);
    out.push_back(pool[at]);
    pool.erase(pool.begin() + std::ptrdiff_t(at));
  }
}

}  // namespace

BaseModel generate_base(const BenchmarkGeometry& geo, std::uint64_t seed) {
  if (geo.dim < 1 || geo.hidden_layers < 1 || geo.block_size < 1 || geo.n_classes < 2)
    throw ConfigError("benchmark geometry needs dim, layers, block size >= 1 and >= 2 classes");
  if (geo.context_blocks < 0 || geo.context_dims() >= geo.dim)
    throw ConfigError("context blocks must leave at least one content dimension");
  if (geo.n_classes > geo.dim) throw ConfigError("more classes than hidden units");
  Engine rng = substream(seed, "init");
  const Index d = geo.dim, cd = geo.context_dims();
  std::vector<Matrix> weights;
  for (int l = 0; l < geo.hidden_layers; ++l) {
    Matrix w = geo.base_diag * Matrix::Identity(d, d) + gaussian(rng, d, d, geo.base_scale / std::sqrt(double(d)));
    if (cd > 0) {
      w.rightCols(cd).setZero();
      if (l == 0) w.bottomRows(cd).setZero();
    }
    weights.push_back(std::move(w));
  }
  const Index group = d / geo.n_classes;
  Matrix readout = Matrix::Zero(geo.n_classes, d);
  for (Index c = 0; c < geo.n_classes; ++c) readout.block(c, c * group, 1, group).setConstant(geo.readout_gain);
  weights.push_back(std::move(readout));
  std::vector<bool> eligible(weights.size(), true);
  eligible.back() = false;
  return BaseModel(std::move(weights), geo.block_size, std::move(eligible), seed);
}

IndexSet plantable_blocks(const BaseModel& base, const BenchmarkGeometry& geo) {
  IndexSet out;
  const Grid& g = base.grid();
  for (int l = 0; l < base.layer_count(); ++l) {
    if (!base.eligible(l)) continue;
    const int content_cols = g.layer(l).block_cols - geo.context_blocks;
    // Context rows feed zeroed columns of the next hidden layer, so a delta there is invisible.
    const bool dead_rows = l + 2 < base.layer_count();
    const int content_rows = g.layer(l).block_rows - (dead_rows ? geo.context_blocks : 0);
    for (const auto& b : g.coords(l))
      if (b.col < content_cols && b.row < content_rows) out.insert(b);
  }
  return out;
}

std::vector<TaskSpec> chain_specs(int tasks, const std::vector<double>& overlaps, int planted_count,
                                  int n_train, int n_eval, double noise_std, TaskKind kind, int n_classes) {
  if (tasks < 1) throw ConfigError("need at least one task");
  if (tasks > 1 && overlaps.empty()) throw ConfigError("overlap list is empty");
  std::vector<TaskSpec> out;
  for (int t = 1; t <= tasks; ++t) {
    TaskSpec s;
    s.task_id = t;
    s.kind = kind;
    s.n_classes = n_classes;
    s.planted_count = planted_count;
    s.n_train = n_train;
    s.n_eval = n_eval;
    s.noise_std = noise_std;
    if (t > 1) s.overlap_with[t - 1] = overlaps[std::size_t(t - 2) % overlaps.size()];
    out.push_back(std::move(s));
  }
  return out;
}

Vector teacher_output(const BaseModel& base, const TaskData& task, const Vector& x) {
  return forward(base, {{1.0, &task.teacher}}, x);
}

std::vector<TaskData> generate_sequence(const BaseModel& base, const BenchmarkGeometry& geo,
                                        const std::vector<TaskSpec>& specs, std::uint64_t seed,
                                        std::vector<std::string>* warnings) {
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };
  if (base.input_dim() != geo.dim) throw ConfigError("base model and geometry disagree on dim");
  const IndexSet plantable = plantable_blocks(base, geo);
  const Grid& grid = base.grid();
  std::vector<TaskData> out;
  std::map<int, std::size_t> by_id;

  for (const auto& spec : specs) {
    if (by_id.count(spec.task_id)) throw ConfigError(fmt::format("duplicate task id {}", spec.task_id));
    if (spec.n_train < 1 || spec.n_eval < 1) throw ConfigError(fmt::format("task {} has no samples", spec.task_id));
    if (spec.kind == TaskKind::Classification && spec.n_classes != base.output_dim())
      throw ConfigError(fmt::format("task {} wants {} classes, model has {}", spec.task_id, spec.n_classes,
                                    base.output_dim()));
    if (spec.noise_std < 0.0) throw ConfigError("noise_std must be >= 0");
    Engine rng = substream(seed, "data", std::uint64_t(spec.task_id));
    TaskData td;
    td.spec = spec;

    IndexSet prior_planted;
    for (const auto& t : out) prior_planted |= t.planted;

    std::vector<BlockCoord> chosen;
    if (!spec.planted_blocks.empty()) {
      for (const auto& b : spec.planted_blocks) {
        if (!grid.valid(b) || !base.eligible(b.layer)) throw ConfigError("planted block " + to_string(b) + " is not eligible");
        chosen.push_back(b);
      }
    } else {
      if (spec.planted_count < 1) throw ConfigError("planted_count must be >= 1");
      for (const auto& [sid, frac] : spec.overlap_with) {
        auto it = by_id.find(sid);
        if (it == by_id.end()) throw ConfigError(fmt::format("task {} overlaps unknown or later task {}", spec.task_id, sid));
        if (frac < 0.0 || frac > 1.0) throw ConfigError("overlap fraction outside [0,1]");
        const double want = frac * spec.planted_count;
        const auto k = std::size_t(std::llround(want));
        if (std::abs(want - double(k)) > 1e-9)
          warn(fmt::format("task {}: overlap {} x {} blocks rounded to {}", spec.task_id, frac, spec.planted_count, k));
        const IndexSet& src = out[it->second].planted;
        IndexSet elsewhere;
        for (const auto& t : out)
          if (t.spec.task_id != sid) elsewhere |= t.planted;
        std::vector<BlockCoord> clean, dirty;
        for (const auto& b : src) {
          if (std::find(chosen.begin(), chosen.end(), b) != chosen.end()) continue;
          (elsewhere.contains(b) ? dirty : clean).push_back(b);
        }
        std::vector<BlockCoord> picked;
        draw_without_replacement(clean, k, rng, picked);
        if (picked.size() < k) draw_without_replacement(dirty, k - picked.size(), rng, picked);
        if (picked.size() < k) warn(fmt::format("task {}: only {} blocks available to share with task {}", spec.task_id, picked.size(), sid));
        chosen.insert(chosen.end(), picked.begin(), picked.end());
      }
      std::vector<BlockCoord> fresh;
      for (const auto& b : plantable)
        if (!prior_planted.contains(b)) fresh.push_back(b);
      const std::size_t need = std::size_t(spec.planted_count) > chosen.size() ? std::size_t(spec.planted_count) - chosen.size() : 0;
      if (fresh.size() < need) throw ConfigError(fmt::format("task {}: only {} unplanted blocks left, need {}", spec.task_id, fresh.size(), need));
      draw_without_replacement(fresh, need, rng, chosen);
    }
    std::sort(chosen.begin(), chosen.end());
    td.planted = IndexSet(chosen.begin(), chosen.end());

    // Shared support reuses the earlier teacher's sub-matrix so the overlap means something.
    for (const auto& b : td.planted) {
      const Matrix* reused = nullptr;
      for (const auto& t : out)
        if (const Matrix* m = t.teacher.find(b)) reused = m;
      const auto e = grid.extent(b);
      td.teacher.set(b, reused ? *reused : gaussian(rng, e.rows, e.cols, geo.delta_scale));
    }
    for (const auto& [sid, frac] : spec.overlap_with) {
      const IndexSet& src = out[by_id.at(sid)].planted;
      const double real = double((td.planted & src).size()) / double(td.planted.size());
      if (std::abs(real - frac) > 1.0 / double(td.planted.size()) + 1e-12)
        warn(fmt::format("task {}: realised overlap {} with task {} (asked {})", spec.task_id, real, sid, frac));
    }

    td.signature = task_signature(geo, int(out.size()), rng);
    const Index cd = geo.context_dims(), d = geo.dim;
    std::normal_distribution<double> normal(0.0, 1.0);
    auto make = [&](int n) {
      Dataset ds;
      ds.reserve(std::size_t(n));
      for (int i = 0; i < n; ++i) {
        Sample s;
        s.x.resize(d);
        Vector y;
        for (int attempt = 0;; ++attempt) {
          if (attempt == 10000)
            throw ConfigError(fmt::format("task {}: no input reaches label margin {}", spec.task_id, geo.label_margin));
          for (Index k = 0; k < d - cd; ++k) s.x(k) = normal(rng);
          for (Index k = 0; k < cd; ++k) s.x(d - cd + k) = td.signature(k) + geo.context_noise * normal(rng);
          y = teacher_output(base, td, s.x);
          if (spec.kind != TaskKind::Classification || geo.label_margin <= 0.0 || y.size() < 2) break;
          Vector sorted = y;
          std::partial_sort(sorted.data(), sorted.data() + 2, sorted.data() + sorted.size(), std::greater<>());
          if (sorted(0) - sorted(1) >= geo.label_margin) break;
        }
        if (spec.kind == TaskKind::Classification) {
          if (spec.noise_std > 0.0)
            for (Index k = 0; k < y.size(); ++k) y(k) += spec.noise_std * normal(rng);
          s.y = double(argmax(y));
        } else {
          s.y = y(0) + (spec.noise_std > 0.0 ? spec.noise_std * normal(rng) : 0.0);
        }
        ds.push_back(std::move(s));
      }
      return ds;
    };
    td.train = make(spec.n_train);
    td.eval = make(spec.n_eval);
    by_id[spec.task_id] = out.size();
    out.push_back(std::move(td));
  }
  return out;
}

LoadedDataset parse_jsonl(std::istream& is, const std::string& source) {
  LoadedDataset out;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw ParseError(fmt::format("{} line {}: not valid JSON", source, lineno));
    }
    if (!j.is_object() || !j.contains("x") || !j.contains("y") || !j["x"].is_array() || !j["y"].is_number())
      throw ParseError(fmt::format("{} line {}: expected {{\"x\": [numbers], \"y\": number}}", source, lineno));
    Sample s;
    s.x.resize(Index(j["x"].size()));
    for (std::size_t k = 0; k < j["x"].size(); ++k) {
      if (!j["x"][k].is_number()) throw ParseError(fmt::format("{} line {}: x[{}] is not a number", source, lineno, k));
      s.x(Index(k)) = j["x"][k].get<double>();
      if (!std::isfinite(s.x(Index(k)))) throw ParseError(fmt::format("{} line {}: non-finite x", source, lineno));
    }
    s.y = j["y"].get<double>();
    if (!out.dim) out.dim = s.x.size();
    if (s.x.size() != *out.dim)
      throw ParseError(fmt::format("{} line {}: x has dim {}, earlier lines have {}", source, lineno, s.x.size(), *out.dim));
    out.samples.push_back(std::move(s));
  }
  if (out.samples.empty()) out.warnings.push_back(source + ": no samples; dimension undefined");
  return out;
}

LoadedDataset load_jsonl(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ArtifactError("cannot open dataset " + path.string());
  return parse_jsonl(is, path.string());
}

void write_jsonl(std::ostream& os, const Dataset& data, TaskKind kind) {
  for (const auto& s : data) {
    nlohmann::json j;
    j["x"] = std::vector<double>(s.x.data(), s.x.data() + s.x.size());
    if (kind == TaskKind::Classification)
      j["y"] = s.label();
    else
      j["y"] = s.y;
    os << j.dump() << "\n";
  }
}

}  // namespace seta
