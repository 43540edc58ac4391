#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfcl/eval.hpp"
#include "pfcl/losses.hpp"
#include "pfcl/nn.hpp"
#include "pfcl/tasks.hpp"

namespace pfcl {

enum class Method { pfcl, kd_only, ft, jt, er };

const char* to_string(Method m);
/// Throws ConfigError listing the valid names.
Method parse_method(const std::string& name);

struct TrainConfig {
  std::size_t epochs_per_task = 5;
  std::size_t batch_n = 32;                   // labeled samples per mini-batch
  double lr = 0.03;
  std::vector<std::size_t> lr_drop_epochs;    // lr /= 10 at each listed epoch
  Hyperparams hp;
  std::size_t k_select = 0;                   // 0 means batch_n
  std::size_t kd_stop_last_batches = 5;
  Method method = Method::pfcl;
  std::size_t er_buffer = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> hidden = {100, 100};
  /// Off: distill on every current and auxiliary row, as two separate means.
  bool use_selection = true;
  /// Also distill on all current rows in addition to the selected ones.
  bool regularize_all_current = false;

  std::size_t effective_k() const noexcept { return k_select == 0 ? batch_n : k_select; }
  /// Throws ConfigError on invariant violations. alpha == 0 is accepted here
  /// (it reduces the distillation methods to fine-tuning); the experiment
  /// config rejects it.
  void validate() const;
};

double lr_at(std::size_t epoch, const TrainConfig& cfg);

/// Bounded store of labeled samples for replay, filled by reservoir sampling.
struct MemoryBuffer {
  std::size_t capacity = 0;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  std::size_t seen = 0;

  explicit MemoryBuffer(std::size_t cap = 0) : capacity(cap) {}
  std::size_t size() const noexcept { return y.size(); }
};

void reservoir_update(MemoryBuffer& buffer, std::span<const double> x, int y, Rng& rng);

struct EpochRecord {
  std::size_t task = 0;  // zero-based
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double aux_share = 0.0;  // auxiliary fraction of distilled rows; NaN if none
};
using EpochObserver = std::function<void(const EpochRecord&)>;

/// Loss, gradients and the rows chosen for distillation for one batch.
struct BatchStep {
  double loss = 0.0;
  Gradients grads;
  std::vector<std::size_t> selected;  // rows of [current; auxiliary] used for distillation
};

/// One PFCL mini-batch: both models see the concatenated [x_t; x_u] batch,
/// rows are scored by L1 logit discrepancy, the top K are distilled, and the
/// labeled rows carry cross-entropy. With distill == false the step is pure
/// cross-entropy on the labeled rows (the forward still covers all rows).
BatchStep pfcl_batch(const MlpModel& model, const MlpModel& old_model, const Matrix& x_t, std::span<const int> y_t,
                     const Matrix& x_u, const TrainConfig& cfg, bool distill);

/// Cross-entropy-only training, used for the first task, FT and JT.
void train_first_task(MlpModel& model, const Dataset& train, const TrainConfig& cfg, Rng& rng,
                      std::size_t task_index = 0, const EpochObserver& observer = {});
void train_task_pfcl(MlpModel& model, const MlpModel& old_model, const Dataset& train, AuxiliarySampler& aux,
                     const TrainConfig& cfg, Rng& rng, std::size_t task_index = 0, const EpochObserver& observer = {});
void train_task_kd_only(MlpModel& model, const MlpModel& old_model, const Dataset& train, const TrainConfig& cfg,
                        Rng& rng, std::size_t task_index = 0, const EpochObserver& observer = {});
void train_task_er(MlpModel& model, MemoryBuffer& buffer, const Dataset& train, const TrainConfig& cfg, Rng& rng,
                   Rng& buffer_rng, std::size_t task_index = 0, const EpochObserver& observer = {});

struct ContinualResult {
  EvalMatrix primary;                 // Class-IL or Domain-IL
  std::optional<EvalMatrix> task_il;  // class-incremental streams only
  MlpModel model;
};

/// Sequential training over the stream with per-task evaluation. JT trains
/// once on the union of all tasks and fills only the last row.
ContinualResult run_continual(const TaskStream& stream, const AuxiliaryPool* aux, const TrainConfig& cfg,
                              const EpochObserver& observer = {});

}  // namespace pfcl
