#include "pfcl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pfcl/errors.hpp"

namespace pfcl {

namespace {

// log-softmax of one row, written into out.
void log_softmax_row(std::span<const double> z, double scale, std::span<double> out) {
  double mx = z[0] * scale;
  for (double v : z) mx = std::max(mx, v * scale);
  double sum = 0.0;
  for (double v : z) sum += std::exp(v * scale - mx);
  const double log_norm = mx + std::log(sum);
  for (std::size_t c = 0; c < z.size(); ++c) out[c] = z[c] * scale - log_norm;
}

}  // namespace

void Hyperparams::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be > 0, got " + std::to_string(alpha));
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("tau must be > 0, got " + std::to_string(tau));
}

LossOutput cross_entropy(const Matrix& logits, std::span<const int> labels) {
  const std::size_t n = logits.rows();
  const std::size_t classes = logits.cols();
  if (n == 0) throw DomainError("cross_entropy on an empty batch");
  if (labels.size() != n) {
    throw ShapeError(std::to_string(labels.size()) + " labels for logits " + logits.shape_string());
  }
  LossOutput out{0.0, Matrix(n, classes)};
  std::vector<double> logp(classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw DomainError("label " + std::to_string(y) + " outside [0, " + std::to_string(classes) + ")");
    }
    log_softmax_row(logits.row(i), 1.0, logp);
    out.value -= logp[static_cast<std::size_t>(y)];
    auto g = out.dlogits.row(i);
    for (std::size_t c = 0; c < classes; ++c) g[c] = std::exp(logp[c]) * inv_n;
    g[static_cast<std::size_t>(y)] -= inv_n;
  }
  out.value *= inv_n;
  return out;
}

Matrix soften(const Matrix& logits, double tau) {
  if (!(tau > 0.0)) throw DomainError("temperature must be > 0, got " + std::to_string(tau));
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    auto z = logits.row(i);
    auto out = p.row(i);
    double mx = z[0] / tau;
    for (double v : z) mx = std::max(mx, v / tau);
    double sum = 0.0;
    for (std::size_t c = 0; c < z.size(); ++c) {
      out[c] = std::exp(z[c] / tau - mx);
      sum += out[c];
    }
    for (double& v : out) v /= sum;
  }
  return p;
}

LossOutput kd_loss(const Matrix& z_new, const Matrix& z_old, double tau) {
  if (z_new.rows() != z_old.rows() || z_new.cols() != z_old.cols()) {
    throw ShapeError("kd_loss on " + z_new.shape_string() + " and " + z_old.shape_string());
  }
  if (!(tau > 0.0)) throw DomainError("temperature must be > 0, got " + std::to_string(tau));
  const std::size_t n = z_new.rows();
  const std::size_t classes = z_new.cols();
  LossOutput out{0.0, Matrix(n, classes)};
  if (n == 0) return out;

  const Matrix p_old = soften(z_old, tau);
  const Matrix p_new = soften(z_new, tau);
  std::vector<double> logp_new(classes);
  const double inv_n = 1.0 / static_cast<double>(n);
  const double grad_scale = tau * inv_n;
  for (std::size_t i = 0; i < n; ++i) {
    log_softmax_row(z_new.row(i), 1.0 / tau, logp_new);
    auto po = p_old.row(i);
    auto pn = p_new.row(i);
    auto g = out.dlogits.row(i);
    double row_value = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      row_value -= po[c] * logp_new[c];
      g[c] = grad_scale * (pn[c] - po[c]);
    }
    out.value += row_value;
  }
  out.value *= tau * tau * inv_n;
  return out;
}

LossOutput combined_loss(const Matrix& logits_new_t, const Matrix& logits_old_t, std::span<const int> labels,
                         const Matrix& logits_new_sel, const Matrix& logits_old_sel, const Hyperparams& hp) {
  LossOutput ce = cross_entropy(logits_new_t, labels);
  const bool has_old = logits_old_t.rows() > 0;
  if (has_old && (logits_old_t.rows() != logits_new_t.rows() || logits_old_t.cols() != logits_new_t.cols())) {
    throw ShapeError("old-model logits " + logits_old_t.shape_string() + " for new-model logits " +
                     logits_new_t.shape_string());
  }
  if (logits_new_sel.rows() > 0 && logits_new_sel.cols() != logits_new_t.cols()) {
    throw ShapeError("selected logits " + logits_new_sel.shape_string() + " vs labeled logits " +
                     logits_new_t.shape_string());
  }
  if (!has_old || logits_new_sel.rows() == 0) {
    if (logits_new_sel.rows() == 0) return ce;
    return {ce.value, vstack(ce.dlogits, Matrix(logits_new_sel.rows(), logits_new_sel.cols()))};
  }

  LossOutput kd = kd_loss(logits_new_sel, logits_old_sel, hp.tau);
  for (double& g : kd.dlogits.data()) g *= hp.alpha;
  return {ce.value + hp.alpha * kd.value, vstack(ce.dlogits, kd.dlogits)};
}

}  // namespace pfcl
