#pragma once

// Test-only reference computations. Written independently of the library's
// loss and selection code so they can serve as oracles for it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "pfcl/linalg.hpp"
#include "pfcl/nn.hpp"
#include "pfcl/selection.hpp"

namespace oracle {

inline bool close_rel(double analytic, double numeric, double rel = 1e-4, double abs_floor = 1e-8) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return true;
  return diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

// Naive log(Σ exp(v_c)), no max subtraction; fine for the moderate logits
// the gradient checks draw.
inline double naive_logsumexp(std::span<const double> v, double scale = 1.0) {
  double s = 0.0;
  for (double x : v) s += std::exp(x * scale);
  return std::log(s);
}

inline double ce_value(const pfcl::Matrix& z, const std::vector<int>& y) {
  double total = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) total += naive_logsumexp(z.row(i)) - z(i, static_cast<std::size_t>(y[i]));
  return total / static_cast<double>(z.rows());
}

inline double kd_value(const pfcl::Matrix& z_new, const pfcl::Matrix& z_old, double tau) {
  if (z_new.rows() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < z_new.rows(); ++i) {
    const double lse_old = naive_logsumexp(z_old.row(i), 1.0 / tau);
    const double lse_new = naive_logsumexp(z_new.row(i), 1.0 / tau);
    for (std::size_t c = 0; c < z_new.cols(); ++c) {
      const double p_old = std::exp(z_old(i, c) / tau - lse_old);
      total -= p_old * (z_new(i, c) / tau - lse_new);
    }
  }
  return tau * tau * total / static_cast<double>(z_new.rows());
}

/// Central differences of f over every entry of m (m is restored).
inline pfcl::Matrix numeric_gradient(pfcl::Matrix& m, const std::function<double()>& f, double eps = 1e-5) {
  pfcl::Matrix g(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double saved = m.data()[i];
    m.data()[i] = saved + eps;
    const double up = f();
    m.data()[i] = saved - eps;
    const double down = f();
    m.data()[i] = saved;
    g.data()[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

/// Top-k by a full sort: score descending, index ascending; returned sorted by index.
inline std::vector<std::size_t> top_k_full_sort(std::vector<pfcl::DiscrepancyScore> scores, std::size_t k) {
  std::stable_sort(scores.begin(), scores.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  k = std::min(k, scores.size());
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back(scores[i].index);
  std::sort(out.begin(), out.end());
  return out;
}

/// Final average accuracy by direct summation over a nested vector.
inline double acc_direct(const std::vector<std::vector<double>>& a) {
  double s = 0.0;
  for (double v : a.back()) s += v;
  return s / static_cast<double>(a.size());
}

/// Average forgetting, max over every earlier step except the final one.
inline double forget_direct(const std::vector<std::vector<double>>& a) {
  const std::size_t T = a.size();
  double s = 0.0;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    std::vector<double> drops;
    for (std::size_t i = 0; i + 1 < T; ++i) drops.push_back(a[i][t] - a[T - 1][t]);
    s += *std::max_element(drops.begin(), drops.end());
  }
  return s / static_cast<double>(T - 1);
}

/// Bilinear rotation by brute force: every source pixel contributes with the
/// tent weight max(0, 1-|dx|) * max(0, 1-|dy|) at the back-projected point.
inline pfcl::Matrix rotate_brute(const pfcl::Matrix& img, double theta) {
  const double cy = (static_cast<double>(img.rows()) - 1.0) / 2.0;
  const double cx = (static_cast<double>(img.cols()) - 1.0) / 2.0;
  pfcl::Matrix out(img.rows(), img.cols());
  for (std::size_t r = 0; r < img.rows(); ++r) {
    for (std::size_t c = 0; c < img.cols(); ++c) {
      const double dx = static_cast<double>(c) - cx, dy = static_cast<double>(r) - cy;
      const double sx = cx + std::cos(theta) * dx - std::sin(theta) * dy;
      const double sy = cy + std::sin(theta) * dx + std::cos(theta) * dy;
      double v = 0.0;
      for (std::size_t rr = 0; rr < img.rows(); ++rr)
        for (std::size_t cc = 0; cc < img.cols(); ++cc) {
          const double wx = std::max(0.0, 1.0 - std::abs(sx - static_cast<double>(cc)));
          const double wy = std::max(0.0, 1.0 - std::abs(sy - static_cast<double>(rr)));
          v += wx * wy * img(rr, cc);
        }
      out(r, c) = v;
    }
  }
  return out;
}

/// Smallest |pre-activation| over hidden layers; finite differences are
/// unreliable when a ReLU input sits within a perturbation of its kink.
inline double min_hidden_margin(const pfcl::MlpModel& model, const pfcl::Matrix& x) {
  auto fwd = pfcl::forward(model, x);
  double m = 1e300;
  for (std::size_t l = 0; l + 1 < fwd.cache.pre_activation.size(); ++l)
    for (double v : fwd.cache.pre_activation[l].data()) m = std::min(m, std::abs(v));
  return m;
}

}  // namespace oracle
