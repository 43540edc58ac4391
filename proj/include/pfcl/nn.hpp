#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "pfcl/linalg.hpp"

namespace pfcl {

struct Layer {
  Matrix weight;  // in x out
  Matrix bias;    // 1 x out

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// Fully connected single-head classifier. ReLU on hidden layers, identity
/// on the output. The output width covers every class of every task and is
/// fixed for the lifetime of the model.
class MlpModel {
 public:
  MlpModel() = default;
  /// dims = {in, hidden..., out}; weights Glorot-uniform, biases zero.
  MlpModel(std::span<const std::size_t> dims, Rng& rng);
  explicit MlpModel(std::vector<Layer> layers);

  std::size_t in_dim() const noexcept { return layers_.front().weight.rows(); }
  std::size_t out_dim() const noexcept { return layers_.back().weight.cols(); }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  std::vector<std::size_t> dims() const;
  std::size_t parameter_count() const noexcept;

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::vector<Layer>& layers() noexcept { return layers_; }

  friend bool operator==(const MlpModel&, const MlpModel&) = default;

 private:
  std::vector<Layer> layers_;
};

/// Inputs to every layer plus hidden pre-activations, enough for backward.
struct ForwardCache {
  std::vector<Matrix> inputs;          // inputs[l] feeds layer l
  std::vector<Matrix> pre_activation;  // pre_activation[l] = inputs[l]·W + b
};

struct ForwardResult {
  Matrix logits;
  ForwardCache cache;
};

struct Gradients {
  std::vector<Layer> layers;  // dW, db with the model's shapes
};

ForwardResult forward(const MlpModel& model, const Matrix& x);
/// Logits only; skips building the cache.
Matrix predict(const MlpModel& model, const Matrix& x);
Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& dlogits);
void sgd_step(MlpModel& model, const Gradients& grads, double lr);
/// Deep copy used as the frozen old model.
MlpModel snapshot(const MlpModel& model);

/// Binary checkpoint. Layout (all integers and doubles little-endian):
///   8 bytes  magic "PFCLMLP1"
///   u64      layer count L
///   u64[L+1] dims {in, hidden..., out}
///   per layer: weight (in*out doubles, row-major), then bias (out doubles)
void save_checkpoint(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_checkpoint(const std::filesystem::path& path);

}  // namespace pfcl
