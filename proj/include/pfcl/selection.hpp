#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "pfcl/linalg.hpp"

namespace pfcl {

struct DiscrepancyScore {
  std::size_t index = 0;  // row in the candidate batch
  double score = 0.0;     // L1 distance between the two logit rows

  friend bool operator==(const DiscrepancyScore&, const DiscrepancyScore&) = default;
};

/// score_i = Σ_c |z_new[i,c] - z_old[i,c]|
std::vector<DiscrepancyScore> l1_discrepancy(const Matrix& z_new, const Matrix& z_old);

/// Indices of the k highest scores, larger score first and lower index on
/// ties, returned in ascending index order. k > M selects everything (with a
/// warning). Throws DomainError for k == 0 or an empty score list.
std::vector<std::size_t> select_top_k(std::span<const DiscrepancyScore> scores, std::size_t k);

}  // namespace pfcl
