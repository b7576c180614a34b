#include "seta/nanonet.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "seta/errors.hpp"
#include "seta/rng.hpp"

namespace seta {

namespace {

std::vector<LayerDims> dims_of(const std::vector<Matrix>& weights) {
  std::vector<LayerDims> out;
  for (const auto& w : weights) out.push_back({w.rows(), w.cols()});
  return out;
}

void check_block_shape(const Grid& grid, const BlockCoord& b, const Matrix& m) {
  const auto e = grid.extent(b);
  if (m.rows() != e.rows || m.cols() != e.cols)
    throw ShapeError(fmt::format("delta block {} is {}x{}, grid expects {}x{}", to_string(b),
                                 m.rows(), m.cols(), e.rows, e.cols));
}

void check_overlays(const BaseModel& base, const std::vector<WeightedOverlay>& overlays) {
  for (const auto& o : overlays) {
    if (!std::isfinite(o.weight)) throw NumericError("non-finite overlay weight");
    if (o.overlay == nullptr) throw StateError("null overlay");
    for (const auto& [b, m] : *o.overlay) check_block_shape(base.grid(), b, m);
  }
}

}  // namespace

BaseModel::BaseModel(std::vector<Matrix> weights, int block_size, std::vector<bool> eligible,
                     std::uint64_t seed)
    : weights_(std::move(weights)), eligible_(std::move(eligible)), seed_(seed) {
  if (weights_.empty()) throw ConfigError("model needs at least one layer");
  for (std::size_t l = 1; l < weights_.size(); ++l)
    if (weights_[l].cols() != weights_[l - 1].rows())
      throw ShapeError(fmt::format("layer {} expects input {} but layer {} emits {}", l,
                                   weights_[l].cols(), l - 1, weights_[l - 1].rows()));
  if (eligible_.empty()) eligible_.assign(weights_.size(), true);
  if (eligible_.size() != weights_.size())
    throw ConfigError("eligibility mask length differs from layer count");
  grid_ = Grid(dims_of(weights_), block_size);
}

std::uint64_t BaseModel::checksum() const {
  std::uint64_t h = fnv1a("base");
  for (const auto& w : weights_) {
    const std::int64_t dims[2] = {w.rows(), w.cols()};
    h = fnv1a(dims, sizeof dims, h);
    const std::string bytes = encode_f64(w);
    h = fnv1a(bytes.data(), bytes.size(), h);
  }
  return h;
}

DeltaOverlay DeltaOverlay::zeros(const Grid& grid, const IndexSet& blocks) {
  DeltaOverlay out;
  for (const auto& b : blocks) {
    const auto e = grid.extent(b);
    out.blocks_.emplace_hint(out.blocks_.end(), b, Matrix::Zero(e.rows, e.cols));
  }
  return out;
}

Matrix& DeltaOverlay::at(const BlockCoord& b) {
  auto it = blocks_.find(b);
  if (it == blocks_.end()) throw OwnershipError("overlay has no block " + to_string(b));
  return it->second;
}

const Matrix& DeltaOverlay::at(const BlockCoord& b) const {
  auto it = blocks_.find(b);
  if (it == blocks_.end()) throw OwnershipError("overlay has no block " + to_string(b));
  return it->second;
}

const Matrix* DeltaOverlay::find(const BlockCoord& b) const {
  auto it = blocks_.find(b);
  return it == blocks_.end() ? nullptr : &it->second;
}

IndexSet DeltaOverlay::coords() const {
  IndexSet out;
  for (const auto& kv : blocks_) out.insert(kv.first);
  return out;
}

double DeltaOverlay::squared_norm() const {
  double s = 0.0;
  for (const auto& kv : blocks_) s += kv.second.squaredNorm();
  return s;
}

bool DeltaOverlay::operator==(const DeltaOverlay& other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  auto a = blocks_.begin();
  auto b = other.blocks_.begin();
  for (; a != blocks_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    if (a->second.rows() != b->second.rows() || a->second.cols() != b->second.cols()) return false;
    if (encode_f64(a->second) != encode_f64(b->second)) return false;
  }
  return true;
}

Vector forward(const BaseModel& base, const std::vector<WeightedOverlay>& overlays, const Vector& x) {
  Tape tape(base);
  return tape.forward(overlays, x);
}

Matrix Gradients::block(std::size_t overlay, const BlockCoord& b, const Grid& grid) const {
  if (overlay < blocks.size())
    if (const Matrix* m = blocks[overlay].find(b)) return *m;
  const auto e = grid.extent(b);
  return Matrix::Zero(e.rows, e.cols);
}

const Vector& Tape::forward(const std::vector<WeightedOverlay>& overlays, const Vector& x) {
  const BaseModel& base = *base_;
  if (x.size() != base.input_dim())
    throw ShapeError(fmt::format("input has dim {}, model expects {}", x.size(), base.input_dim()));
  check_overlays(base, overlays);
  const Grid& grid = base.grid();

  overlays_ = overlays;
  acts_.resize(std::size_t(base.layer_count()) + 1);
  acts_[0] = x;
  for (int l = 0; l < base.layer_count(); ++l) {
    const Vector& in = acts_[std::size_t(l)];
    Vector a = base.weight(l) * in;
    for (const auto& o : overlays_) {
      if (o.weight == 0.0) continue;
      for (auto it = o.overlay->layer_begin(l); it != o.overlay->layer_end(l); ++it) {
        const auto e = grid.extent(it->first);
        a.segment(e.row0, e.rows).noalias() += o.weight * (it->second * in.segment(e.col0, e.cols));
      }
    }
    if (base.activation(l) == Activation::Tanh) a = a.array().tanh();
    acts_[std::size_t(l) + 1] = std::move(a);
  }
  recorded_ = true;
  return acts_.back();
}

void Tape::backward(const Vector& dout, const IndexSet& active, Gradients& acc, bool dense) const {
  if (!recorded_) throw StateError("backward called without a recorded forward pass");
  const BaseModel& base = *base_;
  const Grid& grid = base.grid();
  if (dout.size() != base.output_dim()) throw ShapeError("output gradient has wrong dim");

  acc.blocks.resize(overlays_.size());
  acc.overlay_weights.resize(overlays_.size(), 0.0);
  if (dense && acc.dense.size() != std::size_t(base.layer_count())) {
    acc.dense.clear();
    for (int l = 0; l < base.layer_count(); ++l)
      acc.dense.push_back(Matrix::Zero(base.weight(l).rows(), base.weight(l).cols()));
  }

  Vector g = dout;
  for (int l = base.layer_count() - 1; l >= 0; --l) {
    const Vector& in = acts_[std::size_t(l)];
    const Vector& out = acts_[std::size_t(l) + 1];
    Vector delta = g;
    if (base.activation(l) == Activation::Tanh)
      delta = (g.array() * (1.0 - out.array().square())).matrix();
    if (dense) acc.dense[std::size_t(l)].noalias() += delta * in.transpose();

    Vector next;
    if (l > 0) next = base.weight(l).transpose() * delta;
    for (std::size_t k = 0; k < overlays_.size(); ++k) {
      const auto& o = overlays_[k];
      for (auto it = o.overlay->layer_begin(l); it != o.overlay->layer_end(l); ++it) {
        const auto e = grid.extent(it->first);
        const auto d_seg = delta.segment(e.row0, e.rows);
        const auto x_seg = in.segment(e.col0, e.cols);
        acc.overlay_weights[k] += d_seg.dot(it->second * x_seg);
        if (active.contains(it->first)) {
          Matrix gb = o.weight * (d_seg * x_seg.transpose());
          auto& slot = acc.blocks[k];
          if (slot.contains(it->first))
            slot.at(it->first) += gb;
          else
            slot.set(it->first, std::move(gb));
        }
        if (l > 0 && o.weight != 0.0)
          next.segment(e.col0, e.cols).noalias() += o.weight * (it->second.transpose() * d_seg);
      }
    }
    g = std::move(next);
  }
}

Gradients Tape::backward(const Vector& dout, const IndexSet& active, bool dense) const {
  Gradients g;
  backward(dout, active, g, dense);
  return g;
}

LossValue softmax_cross_entropy(const Vector& logits, int label) {
  if (label < 0 || label >= logits.size())
    throw PreconditionError(fmt::format("label {} outside {} classes", label, logits.size()));
  const double m = logits.maxCoeff();
  Vector p = (logits.array() - m).exp().matrix();
  const double z = p.sum();
  p /= z;
  LossValue out;
  out.loss = -(logits(label) - m - std::log(z));
  out.grad = p;
  out.grad(label) -= 1.0;
  return out;
}

LossValue squared_error(const Vector& out, double target) {
  LossValue v;
  const double r = out(0) - target;
  v.loss = r * r;
  v.grad = Vector::Zero(out.size());
  v.grad(0) = 2.0 * r;
  return v;
}

int argmax(const Vector& v) {
  Index i = 0;
  v.maxCoeff(&i);
  return static_cast<int>(i);
}

FiniteDiffResult finite_diff_check(const std::function<double(const Vector&)>& loss,
                                   const Vector& params, const Vector& analytic, double step,
                                   double tolerance) {
  if (!(step > 0.0)) throw ConfigError("finite-difference step must be > 0");
  if (analytic.size() != params.size()) throw ShapeError("analytic gradient size differs from params");
  FiniteDiffResult r;
  Vector p = params;
  for (Index i = 0; i < p.size(); ++i) {
    const double orig = p(i);
    p(i) = orig + step;
    const double up = loss(p);
    p(i) = orig - step;
    const double down = loss(p);
    p(i) = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError(fmt::format("non-finite loss while probing coordinate {}", i));
    const double fd = (up - down) / (2.0 * step);
    const double err = std::abs(analytic(i) - fd) / std::max(1.0, std::abs(analytic(i)));
    if (r.worst < 0 || err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst = i;
    }
  }
  r.passed = r.max_rel_error <= tolerance;
  return r;
}

AttentionGradients attention_gradients(double s, std::uint64_t seed, const AttentionSpec& spec) {
  if (spec.n_keys < 2) throw ConfigError("attention profile needs at least 2 key positions");
  if (spec.d_model < 1 || spec.d_head < 1) throw ConfigError("attention dims must be >= 1");
  if (!(s >= 0.0)) throw ConfigError("attention scale must be >= 0");
  Engine rng = substream(seed, "attention");
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](Index r, Index c, double scale) {
    Matrix m(r, c);
    for (Index i = 0; i < r; ++i)
      for (Index j = 0; j < c; ++j) m(i, j) = scale * normal(rng);
    return m;
  };
  const Index n = spec.n_keys, d = spec.d_model, h = spec.d_head;
  const Matrix x = draw(n, d, 1.0);
  const double ws = 1.0 / std::sqrt(double(d));
  const Matrix wq = draw(d, h, ws), wk = draw(d, h, ws), wv = draw(d, h, ws);
  const Matrix target = draw(n, h, 1.0);

  const Matrix q = x * wq, k = x * wk, v = x * wv;
  const double inv = 1.0 / std::sqrt(double(h));
  Matrix a = (s * inv) * (q * k.transpose());
  for (Index i = 0; i < n; ++i) {
    const double m = a.row(i).maxCoeff();
    a.row(i) = (a.row(i).array() - m).exp().matrix();
    a.row(i) /= a.row(i).sum();
  }
  const Matrix y = a * v;
  const Matrix dy = y - target;
  const Matrix dv = a.transpose() * dy;
  const Matrix da = dy * v.transpose();
  Matrix dz(n, n);
  for (Index i = 0; i < n; ++i) {
    const double dot = a.row(i).dot(da.row(i));
    dz.row(i) = (a.row(i).array() * (da.row(i).array() - dot)).matrix();
  }
  const Matrix du = inv * dz;  // per unit of softmax input
  AttentionGradients g;
  g.wq = x.transpose() * (du * k);
  g.wk = x.transpose() * (du.transpose() * q);
  g.wv = x.transpose() * dv;
  return g;
}

GradientReport attention_grad_profile(double s, std::uint64_t seed, const AttentionSpec& spec) {
  const auto g = attention_gradients(s, seed, spec);
  GradientReport r;
  r.q_grad = g.wq.cwiseAbs().mean();
  r.k_grad = g.wk.cwiseAbs().mean();
  r.v_grad = g.wv.cwiseAbs().mean();
  const double total = r.q_grad + r.k_grad + r.v_grad;
  r.v_share = total > 0.0 ? r.v_grad / total : 0.0;
  return r;
}

std::string encode_f64(const Matrix& m) {
  std::string out;
  out.resize(std::size_t(m.size()) * 8);
  std::size_t pos = 0;
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      std::uint64_t bits = std::bit_cast<std::uint64_t>(m(i, j));
      for (int b = 0; b < 8; ++b) out[pos++] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  return out;
}

Matrix decode_f64(std::string_view bytes, Index rows, Index cols) {
  if (bytes.size() != std::size_t(rows * cols) * 8)
    throw ParseError(fmt::format("expected {} bytes for {}x{} f64 array, got {}", rows * cols * 8,
                                 rows, cols, bytes.size()));
  Matrix m(rows, cols);
  std::size_t pos = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= std::uint64_t(static_cast<unsigned char>(bytes[pos++])) << (8 * b);
      m(i, j) = std::bit_cast<double>(bits);
    }
  return m;
}

namespace {

void write_file(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw ArtifactError("cannot write " + p.string());
  os.write(bytes.data(), std::streamsize(bytes.size()));
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw ArtifactError("missing file " + p.string());
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

void save_model(const BaseModel& base, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["format"] = "seta-model";
  j["version"] = 1;
  j["block_size"] = base.grid().block_size();
  j["seed"] = base.seed();
  j["layers"] = nlohmann::json::array();
  for (int l = 0; l < base.layer_count(); ++l) {
    const std::string file = fmt::format("layer_{}.f64", l);
    j["layers"].push_back({{"rows", base.weight(l).rows()},
                           {"cols", base.weight(l).cols()},
                           {"eligible", bool(base.eligible(l))},
                           {"file", file}});
    write_file(dir / file, encode_f64(base.weight(l)));
  }
  std::ofstream(dir / "manifest.json") << j.dump(2) << "\n";
}

BaseModel load_model(const std::filesystem::path& dir) {
  const std::string text = read_file(dir / "manifest.json");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model manifest: ") + e.what());
  }
  std::vector<Matrix> weights;
  std::vector<bool> eligible;
  for (const auto& layer : j.at("layers")) {
    const Index r = layer.at("rows").get<Index>(), c = layer.at("cols").get<Index>();
    weights.push_back(decode_f64(read_file(dir / layer.at("file").get<std::string>()), r, c));
    eligible.push_back(layer.at("eligible").get<bool>());
  }
  return BaseModel(std::move(weights), j.at("block_size").get<int>(), std::move(eligible),
                   j.at("seed").get<std::uint64_t>());
}

}  // namespace seta
