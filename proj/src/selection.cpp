#include "pfcl/selection.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <spdlog/spdlog.h>

#include "pfcl/errors.hpp"

namespace pfcl {

std::vector<DiscrepancyScore> l1_discrepancy(const Matrix& z_new, const Matrix& z_old) {
  if (z_new.rows() != z_old.rows() || z_new.cols() != z_old.cols()) {
    throw ShapeError("l1_discrepancy on " + z_new.shape_string() + " and " + z_old.shape_string());
  }
  std::vector<DiscrepancyScore> scores(z_new.rows());
  for (std::size_t i = 0; i < z_new.rows(); ++i) {
    auto a = z_new.row(i);
    auto b = z_old.row(i);
    double d = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) d += std::abs(a[c] - b[c]);
    scores[i] = {i, d};
  }
  return scores;
}

std::vector<std::size_t> select_top_k(std::span<const DiscrepancyScore> scores, std::size_t k) {
  if (scores.empty()) throw DomainError("select_top_k on an empty score list");
  if (k == 0) throw DomainError("select_top_k needs k >= 1");
  if (k > scores.size()) {
    spdlog::warn("select_top_k: k = {} exceeds {} candidates, selecting all", k, scores.size());
    k = scores.size();
  }
  std::vector<DiscrepancyScore> ranked(scores.begin(), scores.end());
  auto higher = [](const DiscrepancyScore& a, const DiscrepancyScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
  };
  std::nth_element(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k - 1), ranked.end(), higher);
  std::vector<std::size_t> picked;
  picked.reserve(k);
  for (std::size_t i = 0; i < k; ++i) picked.push_back(ranked[i].index);
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace pfcl
