#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pfcl/linalg.hpp"
#include "pfcl/nn.hpp"
#include "pfcl/tasks.hpp"

namespace pfcl {

/// a(i, t) = accuracy on task t's test set after training through task i
/// (both zero-based here; the CSV uses one-based step numbers).
class EvalMatrix {
 public:
  EvalMatrix() = default;
  explicit EvalMatrix(std::size_t tasks) : a_(tasks, tasks) {}
  explicit EvalMatrix(Matrix a);

  std::size_t tasks() const noexcept { return a_.rows(); }
  double& operator()(std::size_t i, std::size_t t) noexcept { return a_(i, t); }
  double operator()(std::size_t i, std::size_t t) const noexcept { return a_(i, t); }
  void set_row(std::size_t i, std::span<const double> row);
  const Matrix& values() const noexcept { return a_; }

  friend bool operator==(const EvalMatrix&, const EvalMatrix&) = default;

 private:
  Matrix a_;
};

enum class Protocol { class_il, task_il, domain_il };

const char* to_string(Protocol p);

/// Fraction of samples whose argmax over the (masked) logits equals the
/// label. Ties go to the lowest class index. An empty mask means no masking.
double accuracy(const MlpModel& model, const Dataset& test, std::span<const int> mask = {});
/// Same, from precomputed logits.
double accuracy_from_logits(const Matrix& logits, std::span<const int> labels, std::span<const int> mask = {});

/// Mean of the final row.
double avg_accuracy(const EvalMatrix& m);
/// Mean over t < T-1 of (max over i < T-1 of a(i, t)) - a(T-1, t).
/// The max excludes the final row. Throws DomainError for a single task.
double forgetting(const EvalMatrix& m);

std::vector<double> evaluate_all(const MlpModel& model, const TaskStream& stream, Protocol protocol);

/// Class-IL (or Domain-IL) row and, for class-incremental streams, the
/// Task-IL row, from one forward pass per task.
struct ProtocolRows {
  std::vector<double> primary;
  std::vector<double> task_il;  // empty for domain-incremental streams
};
ProtocolRows evaluate_protocols(const MlpModel& model, const TaskStream& stream);

/// Header `step,task_1,...,task_T`; one row per training step.
void write_eval_csv(const EvalMatrix& m, const std::filesystem::path& path);
std::string eval_csv_string(const EvalMatrix& m);
EvalMatrix read_eval_csv(const std::filesystem::path& path);

/// Running average accuracy after each step: (1/(i+1)) Σ_{t<=i} a(i, t).
std::vector<double> running_accuracy(const EvalMatrix& m);

}  // namespace pfcl
