#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "seta/blockgrid.hpp"

namespace seta {

enum class Activation { Tanh, Identity };

// Frozen stack of linear layers: tanh after every layer except the last.
class BaseModel {
 public:
  BaseModel() = default;
  BaseModel(std::vector<Matrix> weights, int block_size, std::vector<bool> eligible = {},
            std::uint64_t seed = 0);

  int layer_count() const { return static_cast<int>(weights_.size()); }
  const Matrix& weight(int l) const { return weights_.at(static_cast<std::size_t>(l)); }
  Index input_dim() const { return weights_.front().cols(); }
  Index output_dim() const { return weights_.back().rows(); }
  const Grid& grid() const { return grid_; }
  bool eligible(int l) const { return eligible_.at(static_cast<std::size_t>(l)); }
  const std::vector<bool>& eligibility() const { return eligible_; }
  std::uint64_t seed() const { return seed_; }
  Activation activation(int l) const {
    return l + 1 < layer_count() ? Activation::Tanh : Activation::Identity;
  }
  std::uint64_t checksum() const;

 private:
  std::vector<Matrix> weights_;
  std::vector<bool> eligible_;
  Grid grid_;
  std::uint64_t seed_ = 0;
};

// Sparse per-block additive deltas. Absent blocks contribute exactly zero.
class DeltaOverlay {
 public:
  using Storage = std::map<BlockCoord, Matrix>;
  using const_iterator = Storage::const_iterator;

  static DeltaOverlay zeros(const Grid& grid, const IndexSet& blocks);

  void set(const BlockCoord& b, Matrix m) { blocks_[b] = std::move(m); }
  Matrix& at(const BlockCoord& b);
  const Matrix& at(const BlockCoord& b) const;
  const Matrix* find(const BlockCoord& b) const;
  bool contains(const BlockCoord& b) const { return blocks_.count(b) > 0; }
  bool erase(const BlockCoord& b) { return blocks_.erase(b) > 0; }
  void clear() { blocks_.clear(); }
  std::size_t size() const { return blocks_.size(); }
  bool empty() const { return blocks_.empty(); }
  const_iterator begin() const { return blocks_.begin(); }
  const_iterator end() const { return blocks_.end(); }
  const_iterator layer_begin(int l) const { return blocks_.lower_bound({l, 0, 0}); }
  const_iterator layer_end(int l) const { return blocks_.lower_bound({l + 1, 0, 0}); }
  IndexSet coords() const;
  double squared_norm() const;

  bool operator==(const DeltaOverlay& other) const;

 private:
  Storage blocks_;
};

struct WeightedOverlay {
  double weight = 1.0;
  const DeltaOverlay* overlay = nullptr;
};

// Per layer: h = act(W0 x + sum_k weight_k * (dW_k x)).
Vector forward(const BaseModel& base, const std::vector<WeightedOverlay>& overlays, const Vector& x);

struct Gradients {
  std::vector<DeltaOverlay> blocks;     // one per recorded overlay, active coords only
  std::vector<double> overlay_weights;  // dL/d weight_k
  std::vector<Matrix> dense;            // dL/dW_eff per layer (only when requested)

  // Gradient for a block, zero when it was not active.
  Matrix block(std::size_t overlay, const BlockCoord& b, const Grid& grid) const;
};

// Records one forward pass so that backward can replay it.
class Tape {
 public:
  explicit Tape(const BaseModel& base) : base_(&base) {}

  const Vector& forward(const std::vector<WeightedOverlay>& overlays, const Vector& x);
  // Adds the gradients of a loss with dL/d(output) = dout into `acc`.
  void backward(const Vector& dout, const IndexSet& active, Gradients& acc,
                bool dense = false) const;
  Gradients backward(const Vector& dout, const IndexSet& active, bool dense = false) const;

  bool recorded() const { return recorded_; }
  void reset() { recorded_ = false; }
  const Vector& output() const { return acts_.back(); }

 private:
  const BaseModel* base_;
  std::vector<WeightedOverlay> overlays_;
  std::vector<Vector> acts_;  // acts_[0] = x, acts_[l+1] = output of layer l
  bool recorded_ = false;
};

struct LossValue {
  double loss = 0.0;
  Vector grad;  // dL/d(output)
};

LossValue softmax_cross_entropy(const Vector& logits, int label);
// (out[0] - target)^2 on the first output unit.
LossValue squared_error(const Vector& out, double target);
int argmax(const Vector& v);

struct FiniteDiffResult {
  double max_rel_error = 0.0;
  Index worst = -1;
  bool passed = true;
};

// max_i |analytic_i - fd_i| / max(1, |analytic_i|) with central differences.
FiniteDiffResult finite_diff_check(const std::function<double(const Vector&)>& loss,
                                   const Vector& params, const Vector& analytic, double step,
                                   double tolerance);

struct AttentionSpec {
  int d_model = 8;
  int d_head = 8;
  int n_keys = 8;
};

struct AttentionGradients {
  Matrix wq;
  Matrix wk;
  Matrix wv;
};

struct GradientReport {
  double q_grad = 0.0;
  double k_grad = 0.0;
  double v_grad = 0.0;
  double v_share = 0.0;
};

// Single-head self-attention with logits s * Q K^T / sqrt(d_head) and a squared
// loss against a random target. Q/K gradients are reported per unit of softmax
// input, so they measure the softmax Jacobian rather than the factor s.
AttentionGradients attention_gradients(double s, std::uint64_t seed, const AttentionSpec& spec = {});
GradientReport attention_grad_profile(double s, std::uint64_t seed, const AttentionSpec& spec = {});

// Raw little-endian f64, row-major.
std::string encode_f64(const Matrix& m);
Matrix decode_f64(std::string_view bytes, Index rows, Index cols);

void save_model(const BaseModel& base, const std::filesystem::path& dir);
BaseModel load_model(const std::filesystem::path& dir);

}  // namespace seta
