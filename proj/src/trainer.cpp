#include "seta/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "seta/errors.hpp"
#include "seta/rng.hpp"

namespace seta {

namespace {

LossValue sample_loss(const Vector& out, const Sample& s, TaskKind kind) {
  return kind == TaskKind::Classification ? softmax_cross_entropy(out, s.label()) : squared_error(out, s.y);
}

double scheduled(double base, long step, long total, double warm) {
  if (warm <= 0.0 || total <= 0) return base;
  const double ramp = warm * double(total);
  return base * std::min(1.0, double(step + 1) / ramp);
}

std::size_t batch_count(std::size_t n, int batch_size) {
  return (n + std::size_t(batch_size) - 1) / std::size_t(batch_size);
}

std::size_t warmup_batches(std::size_t n, const TrainConfig& cfg) {
  const std::size_t nb = batch_count(n, cfg.batch_size);
  const auto w = std::size_t(std::ceil(cfg.selection_warmup_fraction * double(nb)));
  return std::clamp<std::size_t>(w, 1, nb);
}

std::vector<Sample> gather(const Dataset& data, const std::vector<std::size_t>& order, std::size_t from,
                           std::size_t to) {
  std::vector<Sample> out;
  out.reserve(to - from);
  for (std::size_t i = from; i < to; ++i) out.push_back(data[order[i]]);
  return out;
}

template <class Key, class Param>
void descend(Param& p, const Param& g, double lr, const TrainConfig& cfg, std::map<Key, Param>& velocity,
             const Key& key) {
  if (cfg.optimizer == Optimizer::Momentum) {
    auto it = velocity.find(key);
    if (it == velocity.end()) it = velocity.emplace(key, Param::Zero(g.rows(), g.cols())).first;
    it->second = cfg.momentum * it->second + g;
    p -= lr * it->second;
  } else {
    p -= lr * g;
  }
}

// Closed-form step on the quadratic pull: argmin_p ||p - q||^2 / (2 lr) + w ||p - a||^2.
void anchor_prox(Matrix& p, const Matrix& anchor, double lr, double weight) {
  const double c = 2.0 * lr * weight;
  p = (p + c * anchor) / (1.0 + c);
}

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed, int task, int epoch) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Engine rng = substream(seed, "shuffle", (std::uint64_t(task) << 20) | std::uint64_t(epoch));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double accuracy_of(const Dataset& eval, TaskKind kind, const std::function<Vector(const Vector&)>& predict) {
  if (eval.empty()) throw ConfigError("empty evaluation set");
  if (kind == TaskKind::Classification) {
    std::size_t hit = 0;
    for (const auto& s : eval) hit += argmax(predict(s.x)) == s.label() ? 1 : 0;
    return 100.0 * double(hit) / double(eval.size());
  }
  double mean = 0.0;
  for (const auto& s : eval) mean += s.y;
  mean /= double(eval.size());
  double var = 0.0, mse = 0.0;
  for (const auto& s : eval) {
    var += (s.y - mean) * (s.y - mean);
    const double r = predict(s.x)(0) - s.y;
    mse += r * r;
  }
  if (var <= 0.0) return mse <= 0.0 ? 100.0 : 0.0;
  return 100.0 * std::max(0.0, 1.0 - mse / var);
}

// Flat parameter vector: trainable blocks (coordinate order, row-major) then gate rows.
struct ParamLayout {
  std::vector<BlockCoord> blocks;
  std::vector<ExpertId> rows;
};

Vector pack(const ParamLayout& lay, const std::map<BlockCoord, Matrix>& blocks,
            const std::map<ExpertId, Vector>& rows) {
  std::vector<double> v;
  for (const auto& b : lay.blocks) {
    const Matrix& m = blocks.at(b);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) v.push_back(m(i, j));
  }
  for (ExpertId id : lay.rows) {
    const Vector& r = rows.at(id);
    v.insert(v.end(), r.data(), r.data() + r.size());
  }
  return Eigen::Map<Vector>(v.data(), Index(v.size()));
}

std::map<BlockCoord, ExpertId> block_owner(const Registry& reg) {
  std::map<BlockCoord, ExpertId> out;
  for (ExpertId id : reg.live_ids())
    for (const auto& b : reg.at(id).owned) out.emplace(b, id);
  return out;
}

void unpack(const ParamLayout& lay, const Vector& v, Registry& reg, GateState& gate,
            const std::map<BlockCoord, ExpertId>& owner) {
  Index k = 0;
  for (const auto& b : lay.blocks) {
    Matrix& m = reg.at(owner.at(b)).deltas.at(b);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = v(k++);
  }
  for (ExpertId id : lay.rows) {
    Vector& r = gate.row(id);
    for (Index i = 0; i < r.size(); ++i) r(i) = v(k++);
  }
}

}  // namespace

void TrainConfig::validate() const {
  auto finite = [](double v) { return std::isfinite(v); };
  if (!(learning_rate > 0.0) || !finite(learning_rate)) throw ConfigError("learning_rate must be > 0");
  if (!(gate_learning_rate >= 0.0) || !finite(gate_learning_rate)) throw ConfigError("gate learning rate must be >= 0");
  if (!(lr_warmup_fraction >= 0.0 && lr_warmup_fraction <= 1.0)) throw ConfigError("lr warmup fraction must be in [0,1]");
  if (!(selection_warmup_fraction >= 0.0 && selection_warmup_fraction <= 1.0))
    throw ConfigError("selection warmup fraction must be in [0,1]");
  if (epochs_per_task < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  if (!(lambda >= 0.0) || !finite(lambda)) throw ConfigError("lambda must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (!(gate_init_scale >= 0.0) || !finite(gate_init_scale)) throw ConfigError("gate init scale must be >= 0");
  if (!(fd_step > 0.0) || !(fd_tolerance > 0.0) || fd_samples < 1) throw ConfigError("bad gradient-check settings");
}

CompositeLoss composite_loss(std::span<const Sample> batch, TaskKind kind, const BaseModel& base,
                             const Registry& reg, const GateState& gate, const IndexSet& trainable,
                             double lambda, const PinnedRouting* pinned, PinnedRouting* record) {
  if (batch.empty()) throw ConfigError("empty batch");
  if (pinned && pinned->size() != batch.size()) throw StateError("pinned routing does not match the batch");
  CompositeLoss out;
  const Grid& grid = base.grid();
  for (const auto& b : trainable) {
    const auto e = grid.extent(b);
    out.data_grad.emplace(b, Matrix::Zero(e.rows, e.cols));
  }
  for (ExpertId id : gate.order()) out.gate_grad.emplace(id, Vector::Zero(gate.dim()));

  const double inv = 1.0 / double(batch.size());
  const bool routed = !reg.live_ids().empty();
  Tape tape(base);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const Sample& s = batch[i];
    Routing r;
    std::vector<WeightedOverlay> overlays;
    if (routed) {
      r = route(gate, s.x);
      if (pinned) {
        r.active = (*pinned)[i];
        double z = 0.0;
        for (auto k : r.active) z += r.softmax(Index(k));
        r.active_weights.clear();
        for (auto k : r.active) r.active_weights.push_back(r.softmax(Index(k)) / z);
      }
      if (record) record->push_back(r.active);
      overlays = routed_overlays(reg, r);
    }
    const Vector& y = tape.forward(overlays, s.x);
    const LossValue lv = sample_loss(y, s, kind);
    out.data += inv * lv.loss;
    const Gradients g = tape.backward(inv * lv.grad, trainable);
    for (std::size_t k = 0; k < g.blocks.size(); ++k)
      for (const auto& [b, m] : g.blocks[k]) out.data_grad.at(b) += m;
    if (routed) {
      double mean = 0.0;
      for (std::size_t k = 0; k < r.active.size(); ++k) mean += r.active_weights[k] * g.overlay_weights[k];
      for (std::size_t k = 0; k < r.active.size(); ++k) {
        const double dz = r.active_weights[k] * (g.overlay_weights[k] - mean);
        out.gate_grad.at(r.experts[r.active[k]]) += dz * s.x;
      }
    }
  }
  if (const ExpertRecord* sh = reg.shared()) {
    out.penalty = anchoring_penalty(*sh, lambda);
    for (const auto& [b, m] : sh->deltas)
      out.penalty_grad.emplace(b, (2.0 * lambda * sh->share_count.at(b)) * (m - sh->anchors.at(b)));
  }
  out.loss = out.data + out.penalty;
  if (!std::isfinite(out.loss))
    throw NumericError(fmt::format("non-finite loss (data {}, penalty {}) on a batch of {}", out.data,
                                   out.penalty, batch.size()));
  return out;
}

ImportanceMap warmup_importance(const BaseModel& base, const TaskData& task, const TrainConfig& cfg,
                                const std::function<std::vector<WeightedOverlay>(const Vector&)>& overlays) {
  const Dataset& data = task.train;
  if (data.empty()) throw ConfigError(fmt::format("task {} has no training data", task.spec.task_id));
  const std::size_t nw = warmup_batches(data.size(), cfg);
  std::vector<Matrix> acc;
  for (int l = 0; l < base.layer_count(); ++l) acc.push_back(Matrix::Zero(base.weight(l).rows(), base.weight(l).cols()));
  Tape tape(base);
  for (std::size_t b = 0; b < nw; ++b) {
    const std::size_t from = b * std::size_t(cfg.batch_size);
    const std::size_t to = std::min(data.size(), from + std::size_t(cfg.batch_size));
    Gradients g;
    for (std::size_t i = from; i < to; ++i) {
      const Vector& y = tape.forward(overlays(data[i].x), data[i].x);
      const LossValue lv = sample_loss(y, data[i], task.spec.kind);
      tape.backward(lv.grad / double(to - from), IndexSet{}, g, true);
    }
    for (std::size_t l = 0; l < acc.size(); ++l) acc[l] += g.dense[l];
  }
  // Gradient of the mean warm-up loss; batch noise cancels here instead of piling up under |.|.
  for (auto& a : acc) a /= double(nw);
  return score_blocks(acc, base.grid());
}

RunState start_run(const BaseModel& base, const SetaConfig& cfg) {
  cfg.train.validate();
  if (cfg.sos.tau_ect < 1 || cfg.sos.tau_trt < 1) throw ConfigError("SoS thresholds must be >= 1");
  RunState st;
  st.base = &base;
  st.gate = GateState(base.input_dim(), cfg.top_k);
  return st;
}

TaskReport run_task(RunState& st, const TaskData& task, std::span<const TaskData> seen, const SetaConfig& cfg,
                    RunObserver* observer) {
  const auto clock0 = std::chrono::steady_clock::now();
  const BaseModel& base = *st.base;
  const TrainConfig& tc = cfg.train;
  const Grid& grid = base.grid();
  Registry& reg = st.registry;
  GateState& gate = st.gate;
  if (task.train.empty()) throw ConfigError(fmt::format("task {} has no training data", task.spec.task_id));
  const int t = st.tasks_done + 1;
  TaskReport rep;
  rep.task_id = t;

  // Warm-up with the current model, then pick the subspace.
  const ImportanceMap importance = warmup_importance(base, task, tc, [&](const Vector& x) {
    if (reg.live_ids().empty()) return std::vector<WeightedOverlay>{};
    return routed_overlays(reg, route(gate, x));
  });
  SelectionConfig sel = cfg.selection;
  sel.eligible_layers = base.eligibility();
  rep.selection = select_topk(importance, sel);
  rep.trace = make_trace(t, rep.selection, importance);

  GateInitRule rule;
  if (tc.gate_init == GateInitMode::Prototype) {
    const std::size_t n = std::min(task.train.size(), warmup_batches(task.train.size(), tc) * std::size_t(tc.batch_size));
    Vector mean = Vector::Zero(base.input_dim());
    for (std::size_t i = 0; i < n; ++i) mean += task.train[i].x;
    mean /= double(n);
    rule.kind = GateInit::Copy;
    rule.value = mean.norm() > 0.0 ? Vector(tc.gate_init_scale * mean / mean.norm()) : Vector(mean);
  }

  if (reg.empty()) {
    const ExpertId id = init_first_task(reg, rep.selection, grid);
    register_new_expert(gate, id, rule);
    rep.new_unique = id;
  } else {
    const SplitOutcome plan = plan_evolution(reg, rep.selection, cfg.sos);
    const FormationResult formed = form_experts(reg, t, rep.selection, plan, grid);
    for (const auto& ev : formed.splits) {
      GateSplit gs = expand_on_split(gate, ev.parent, ev.new_children);
      if (observer) observer->on_gate_split(gate, gs);
      rep.gate_splits.push_back(std::move(gs));
    }
    if (formed.new_unique) {
      register_new_expert(gate, *formed.new_unique, rule);
      rep.new_unique = formed.new_unique;
    }
  }
  freeze_history(reg, t);
  reg.check_invariants();

  IndexSet trainable;
  if (rep.new_unique) trainable |= reg.at(*rep.new_unique).owned;
  ExpertRecord* shared = reg.shared();
  if (shared) trainable |= shared->owned;

  if (tc.check_gradients) {
    const std::size_t n = std::min<std::size_t>(task.train.size(), std::size_t(tc.fd_samples));
    const std::span<const Sample> probe(task.train.data(), n);
    PinnedRouting pins;
    const CompositeLoss at = composite_loss(probe, task.spec.kind, base, reg, gate, trainable, tc.lambda, nullptr, &pins);
    ParamLayout lay{std::vector<BlockCoord>(trainable.begin(), trainable.end()), gate.order()};
    std::map<BlockCoord, Matrix> total = at.data_grad;
    for (const auto& [b, m] : at.penalty_grad) total.at(b) += m;
    const Vector analytic = pack(lay, total, at.gate_grad);
    std::map<BlockCoord, Matrix> values;
    for (const auto& b : lay.blocks) values.emplace(b, reg.at(block_owner(reg).at(b)).deltas.at(b));
    std::map<ExpertId, Vector> rows;
    for (ExpertId id : lay.rows) rows.emplace(id, gate.row(id));
    const Vector params = pack(lay, values, rows);
    Registry scratch = reg;
    GateState scratch_gate = gate;
    const auto owner = block_owner(reg);
    const auto fd = finite_diff_check(
        [&](const Vector& p) {
          unpack(lay, p, scratch, scratch_gate, owner);
          return composite_loss(probe, task.spec.kind, base, scratch, scratch_gate, trainable, tc.lambda, &pins).loss;
        },
        params, analytic, tc.fd_step, tc.fd_tolerance);
    rep.fd_error = fd.max_rel_error;
    if (!fd.passed)
      throw NumericError(fmt::format("task {}: gradient check failed, relative error {} at parameter {}", t,
                                     fd.max_rel_error, fd.worst));
  }

  if (observer) observer->before_optimize(st, rep);

  std::map<ExpertId, std::string> frozen_bytes;
  for (ExpertId id : reg.live_ids())
    if (reg.at(id).frozen) frozen_bytes[id] = serialize_deltas(reg.at(id));

  std::map<BlockCoord, Matrix*> params;
  for (const auto& b : trainable) params[b] = &reg.at(block_owner(reg).at(b)).deltas.at(b);
  std::map<BlockCoord, Matrix> velocity;
  std::map<ExpertId, Vector> gate_velocity;
  const std::size_t n = task.train.size();
  const std::size_t nb = batch_count(n, tc.batch_size);
  const long total_steps = long(nb) * tc.epochs_per_task;
  long step = 0;
  for (int epoch = 0; epoch < tc.epochs_per_task; ++epoch) {
    const auto order = shuffled(n, tc.seed, t, epoch);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < nb; ++b, ++step) {
      const std::size_t from = b * std::size_t(tc.batch_size), to = std::min(n, from + std::size_t(tc.batch_size));
      const auto batch = gather(task.train, order, from, to);
      CompositeLoss cl;
      try {
        cl = composite_loss(batch, task.spec.kind, base, reg, gate, trainable, tc.lambda);
      } catch (const NumericError& e) {
        throw NumericError(fmt::format("task {} epoch {} batch {}: {}", t, epoch, b, e.what()));
      }
      epoch_loss += cl.loss / double(nb);
      const double lr = scheduled(tc.learning_rate, step, total_steps, tc.lr_warmup_fraction);
      const double glr = scheduled(tc.gate_learning_rate, step, total_steps, tc.lr_warmup_fraction);
      for (auto& [coord, g] : cl.data_grad) {
        Matrix& p = *params.at(coord);
        descend(p, g, lr, tc, velocity, coord);
        if (shared && tc.lambda > 0.0 && shared->owned.contains(coord))
          anchor_prox(p, shared->anchors.at(coord), lr, tc.lambda * shared->share_count.at(coord));
      }
      if (glr > 0.0)
        for (auto& [id, g] : cl.gate_grad) {
          Vector& row = gate.row(id);
          descend(row, g, glr, tc, gate_velocity, id);
        }
    }
    rep.final_loss = epoch_loss;
    for (const auto& [id, bytes] : frozen_bytes)
      if (serialize_deltas(reg.at(id)) != bytes)
        throw IntegrityError(fmt::format("frozen expert {} changed during task {}", id, t));
  }

  if (shared) {
    double drift = 0.0;
    for (const auto& [b, m] : shared->deltas) drift += (m - shared->anchors.at(b)).squaredNorm();
    rep.shared_drift = std::sqrt(drift);
    set_anchors(*shared);
  }
  if (observer) observer->after_optimize(st, rep);

  for (const auto& s : seen) rep.accuracy.push_back(evaluate(base, reg, gate, s));
  rep.capacity = capacity_snapshot(reg, t);
  st.tasks_done = t;
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock0).count();
  return rep;
}

double evaluate(const BaseModel& base, const Registry& reg, const GateState& gate, const TaskData& task) {
  return accuracy_of(task.eval, task.spec.kind,
                     [&](const Vector& x) { return taskfree_forward(base, reg, gate, x); });
}

double evaluate_overlay(const BaseModel& base, const DeltaOverlay& delta, const TaskData& task) {
  return accuracy_of(task.eval, task.spec.kind, [&](const Vector& x) { return forward(base, {{1.0, &delta}}, x); });
}

RunResult run_sequence(const BaseModel& base, const std::vector<TaskData>& tasks, const SetaConfig& cfg,
                       RunObserver* observer) {
  if (tasks.empty()) throw ConfigError("no tasks to run");
  RunResult res;
  res.state = start_run(base, cfg);
  std::vector<std::string> names;
  for (const auto& t : tasks) names.push_back(fmt::format("T{}", t.spec.task_id));
  res.accuracy = AccuracyMatrix(int(tasks.size()), names);
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    TaskReport rep = run_task(res.state, tasks[i], std::span<const TaskData>(tasks.data(), i + 1), cfg, observer);
    for (std::size_t j = 0; j < rep.accuracy.size(); ++j) res.accuracy.set(int(i), int(j), rep.accuracy[j]);
    res.ledger.rows.push_back(rep.capacity);
    res.trace.insert(res.trace.end(), rep.trace.begin(), rep.trace.end());
    res.reports.push_back(std::move(rep));
  }
  return res;
}

double fit_overlay(const BaseModel& base, const TaskData& task, const IndexSet& support, DeltaOverlay& delta,
                   const TrainConfig& tc, int stream, const DeltaOverlay* anchor, double pull_lambda) {
  for (const auto& b : support)
    if (!delta.contains(b)) {
      const auto e = base.grid().extent(b);
      delta.set(b, Matrix::Zero(e.rows, e.cols));
    }
  const bool pull = anchor != nullptr && pull_lambda > 0.0;
  auto anchor_of = [&](const BlockCoord& b) -> Matrix {
    if (const Matrix* a = anchor->find(b)) return *a;
    const auto e = base.grid().extent(b);
    return Matrix::Zero(e.rows, e.cols);
  };
  Tape tape(base);
  std::map<BlockCoord, Matrix> velocity;
  const std::size_t n = task.train.size();
  const std::size_t nb = batch_count(n, tc.batch_size);
  const long total_steps = long(nb) * tc.epochs_per_task;
  long step = 0;
  double epoch_loss = 0.0;
  for (int epoch = 0; epoch < tc.epochs_per_task; ++epoch) {
    const auto order = shuffled(n, tc.seed, stream, epoch);
    epoch_loss = 0.0;
    for (std::size_t b = 0; b < nb; ++b, ++step) {
      const std::size_t from = b * std::size_t(tc.batch_size), to = std::min(n, from + std::size_t(tc.batch_size));
      std::map<BlockCoord, Matrix> grad;
      double loss = 0.0;
      const double inv = 1.0 / double(to - from);
      for (std::size_t i = from; i < to; ++i) {
        const Sample& s = task.train[order[i]];
        const Vector& y = tape.forward({{1.0, &delta}}, s.x);
        const LossValue lv = sample_loss(y, s, task.spec.kind);
        loss += inv * lv.loss;
        const Gradients g = tape.backward(inv * lv.grad, support);
        for (const auto& [c, m] : g.blocks[0]) {
          auto it = grad.find(c);
          if (it == grad.end()) grad.emplace(c, m);
          else it->second += m;
        }
      }
      if (!std::isfinite(loss))
        throw NumericError(fmt::format("task {} epoch {} batch {}: non-finite loss", stream, epoch, b));
      epoch_loss += loss / double(nb);
      const double lr = scheduled(tc.learning_rate, step, total_steps, tc.lr_warmup_fraction);
      for (auto& [c, g] : grad) {
        Matrix& w = delta.at(c);
        descend(w, g, lr, tc, velocity, c);
        if (pull) anchor_prox(w, anchor_of(c), lr, pull_lambda);
      }
    }
  }
  return epoch_loss;
}

namespace {

BaselineResult single_delta_run(const BaseModel& base, const std::vector<TaskData>& tasks, const SetaConfig& cfg,
                                double ewc_lambda) {
  const TrainConfig& tc = cfg.train;
  tc.validate();
  if (!(ewc_lambda >= 0.0)) throw ConfigError("ewc lambda must be >= 0");
  if (tasks.empty()) throw ConfigError("no tasks to run");
  BaselineResult res;
  std::vector<std::string> names;
  for (const auto& t : tasks) names.push_back(fmt::format("T{}", t.spec.task_id));
  res.accuracy = AccuracyMatrix(int(tasks.size()), names);
  std::vector<long> first_owner;  // blocks first selected by each task
  DeltaOverlay& delta = res.delta;

  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const TaskData& task = tasks[ti];
    const int t = int(ti) + 1;
    const ImportanceMap importance = warmup_importance(base, task, tc, [&](const Vector&) {
      return delta.empty() ? std::vector<WeightedOverlay>{} : std::vector<WeightedOverlay>{{1.0, &delta}};
    });
    SelectionConfig sel = cfg.selection;
    sel.eligible_layers = base.eligibility();
    const IndexSet p = select_topk(importance, sel);
    auto tr = make_trace(t, p, importance);
    res.trace.insert(res.trace.end(), tr.begin(), tr.end());

    long fresh = 0;
    for (const auto& b : p) fresh += delta.contains(b) ? 0 : 1;
    first_owner.push_back(fresh);
    const DeltaOverlay anchor = delta;  // final weights of the previous task
    fit_overlay(base, task, p, delta, tc, t, t >= 2 ? &anchor : nullptr, ewc_lambda);
    for (std::size_t j = 0; j <= ti; ++j) res.accuracy.set(int(ti), int(j), evaluate_overlay(base, delta, tasks[j]));
    CapacityRow row;
    row.step = t;
    row.task_added = t;
    row.unique = first_owner;
    row.total = long(delta.size());
    res.ledger.rows.push_back(row);
  }
  return res;
}

}  // namespace

BaselineResult baseline_seq_train(const BaseModel& base, const std::vector<TaskData>& tasks, const SetaConfig& cfg) {
  return single_delta_run(base, tasks, cfg, 0.0);
}

BaselineResult baseline_ewc_lite(const BaseModel& base, const std::vector<TaskData>& tasks, const SetaConfig& cfg,
                                 double ewc_lambda) {
  return single_delta_run(base, tasks, cfg, ewc_lambda);
}

}  // namespace seta
