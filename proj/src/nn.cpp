#include "pfcl/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <string>

#include "pfcl/errors.hpp"

namespace pfcl {

namespace {

constexpr std::array<char, 8> kCheckpointMagic = {'P', 'F', 'C', 'L', 'M', 'L', 'P', '1'};

void add_bias(Matrix& z, const Matrix& bias) {
  for (std::size_t r = 0; r < z.rows(); ++r) {
    auto row = z.row(r);
    auto b = bias.row(0);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += b[c];
  }
}

Matrix relu(const Matrix& z) {
  Matrix out = z;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

void write_u64(std::ostream& os, std::uint64_t v) {
  std::array<unsigned char, 8> bytes{};
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(bytes.data()), 8);
}

std::uint64_t read_u64(std::istream& is, const std::filesystem::path& path) {
  std::array<unsigned char, 8> bytes{};
  const auto offset = static_cast<long long>(is.tellg());
  if (!is.read(reinterpret_cast<char*>(bytes.data()), 8)) {
    throw FormatError(path.string() + ": truncated at byte " + std::to_string(offset));
  }
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

MlpModel::MlpModel(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw ShapeError("an MLP needs at least input and output dims");
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    layers_.push_back({init_uniform_scaled(dims[l], dims[l + 1], rng), Matrix(1, dims[l + 1])});
  }
}

MlpModel::MlpModel(std::vector<Layer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeError("an MLP needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.cols()) {
      throw ShapeError("layer " + std::to_string(l) + " bias " + layer.bias.shape_string() + " vs weight " +
                       layer.weight.shape_string());
    }
    if (l > 0 && layers_[l - 1].weight.cols() != layer.weight.rows()) {
      throw ShapeError("layer " + std::to_string(l) + " does not chain: " + layers_[l - 1].weight.shape_string() +
                       " then " + layer.weight.shape_string());
    }
  }
}

std::vector<std::size_t> MlpModel::dims() const {
  std::vector<std::size_t> d{in_dim()};
  for (const auto& layer : layers_) d.push_back(layer.weight.cols());
  return d;
}

std::size_t MlpModel::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

ForwardResult forward(const MlpModel& model, const Matrix& x) {
  if (x.cols() != model.in_dim()) {
    throw ShapeError("input " + x.shape_string() + " for model with input dim " + std::to_string(model.in_dim()));
  }
  ForwardResult result;
  const auto& layers = model.layers();
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = matmul(h, layers[l].weight);
    add_bias(z, layers[l].bias);
    result.cache.inputs.push_back(std::move(h));
    if (l + 1 == layers.size()) {
      result.cache.pre_activation.push_back(z);
      result.logits = std::move(z);
    } else {
      h = relu(z);
      result.cache.pre_activation.push_back(std::move(z));
    }
  }
  return result;
}

Matrix predict(const MlpModel& model, const Matrix& x) {
  if (x.cols() != model.in_dim()) {
    throw ShapeError("input " + x.shape_string() + " for model with input dim " + std::to_string(model.in_dim()));
  }
  const auto& layers = model.layers();
  Matrix h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = matmul(h, layers[l].weight);
    add_bias(z, layers[l].bias);
    h = (l + 1 == layers.size()) ? std::move(z) : relu(z);
  }
  return h;
}

Gradients backward(const MlpModel& model, const ForwardCache& cache, const Matrix& dlogits) {
  const auto& layers = model.layers();
  if (cache.inputs.size() != layers.size() || cache.pre_activation.size() != layers.size()) {
    throw ShapeError("forward cache has " + std::to_string(cache.inputs.size()) + " layers, model has " +
                     std::to_string(layers.size()));
  }
  const std::size_t batch = cache.inputs.front().rows();
  if (dlogits.rows() != batch || dlogits.cols() != model.out_dim()) {
    throw ShapeError("dlogits " + dlogits.shape_string() + " for batch of " + std::to_string(batch) +
                     " and out dim " + std::to_string(model.out_dim()));
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (cache.inputs[l].cols() != layers[l].weight.rows() || cache.pre_activation[l].cols() != layers[l].weight.cols()) {
      throw ShapeError("stale forward cache at layer " + std::to_string(l));
    }
  }

  Gradients grads;
  grads.layers.resize(layers.size());
  Matrix delta = dlogits;  // gradient w.r.t. pre-activation of the current layer
  for (std::size_t l = layers.size(); l-- > 0;) {
    auto& g = grads.layers[l];
    g.weight = matmul_tn(cache.inputs[l], delta);
    g.bias = Matrix(1, delta.cols());
    for (std::size_t r = 0; r < delta.rows(); ++r) {
      auto d = delta.row(r);
      for (std::size_t c = 0; c < d.size(); ++c) g.bias(0, c) += d[c];
    }
    if (l == 0) break;
    Matrix upstream = matmul_nt(delta, layers[l].weight);
    const Matrix& z_prev = cache.pre_activation[l - 1];
    auto u = upstream.data();
    auto z = z_prev.data();
    for (std::size_t i = 0; i < u.size(); ++i)
      if (z[i] <= 0.0) u[i] = 0.0;
    delta = std::move(upstream);
  }
  return grads;
}

void sgd_step(MlpModel& model, const Gradients& grads, double lr) {
  auto& layers = model.layers();
  if (grads.layers.size() != layers.size()) throw ShapeError("gradient layer count does not match model");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto apply = [&](Matrix& p, const Matrix& g) {
      if (p.rows() != g.rows() || p.cols() != g.cols()) {
        throw ShapeError("gradient " + g.shape_string() + " for parameter " + p.shape_string());
      }
      auto pd = p.data();
      auto gd = g.data();
      for (std::size_t i = 0; i < pd.size(); ++i) pd[i] -= lr * gd[i];
    };
    apply(layers[l].weight, grads.layers[l].weight);
    apply(layers[l].bias, grads.layers[l].bias);
  }
}

MlpModel snapshot(const MlpModel& model) { return model; }

void save_checkpoint(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  write_u64(os, model.layer_count());
  for (auto d : model.dims()) write_u64(os, d);
  for (const auto& layer : model.layers()) {
    for (double v : layer.weight.data()) write_u64(os, std::bit_cast<std::uint64_t>(v));
    for (double v : layer.bias.data()) write_u64(os, std::bit_cast<std::uint64_t>(v));
  }
  if (!os) throw FormatError("write failed for " + path.string());
}

MlpModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw FormatError(path.string() + ": bad checkpoint magic at byte 0");
  }
  const std::uint64_t count = read_u64(is, path);
  if (count == 0 || count > 1024) throw FormatError(path.string() + ": implausible layer count at byte 8");
  std::vector<std::size_t> dims;
  for (std::uint64_t i = 0; i <= count; ++i) dims.push_back(read_u64(is, path));
  std::vector<Layer> layers;
  for (std::uint64_t l = 0; l < count; ++l) {
    Matrix w(dims[l], dims[l + 1]);
    Matrix b(1, dims[l + 1]);
    for (double& v : w.data()) v = std::bit_cast<double>(read_u64(is, path));
    for (double& v : b.data()) v = std::bit_cast<double>(read_u64(is, path));
    layers.push_back({std::move(w), std::move(b)});
  }
  return MlpModel(std::move(layers));
}

}  // namespace pfcl
