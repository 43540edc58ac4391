#include "pfcl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "pfcl/errors.hpp"
#include "pfcl/selection.hpp"

namespace pfcl {

namespace {

constexpr Method kAllMethods[] = {Method::pfcl, Method::kd_only, Method::ft, Method::jt, Method::er};

std::vector<std::size_t> iota_rows(std::size_t first, std::size_t last) {
  std::vector<std::size_t> rows(last - first);
  std::iota(rows.begin(), rows.end(), first);
  return rows;
}

void scatter_add_rows(Matrix& dst, const Matrix& src, std::size_t src_first, std::span<const std::size_t> dst_rows) {
  for (std::size_t j = 0; j < dst_rows.size(); ++j) {
    auto s = src.row(src_first + j);
    auto d = dst.row(dst_rows[j]);
    for (std::size_t c = 0; c < d.size(); ++c) d[c] += s[c];
  }
}

void require_train_data(const Dataset& train) {
  if (train.size() == 0) throw DomainError("task has no training data");
}

struct StepStats {
  double loss = 0.0;
  std::size_t selected = 0;      // rows distilled from [current; auxiliary]
  std::size_t selected_aux = 0;  // of which auxiliary
};

// Shuffled mini-batch loop shared by every method. `step(rows, lr, distill)`
// returns the batch statistics; distill is false for the final
// kd_stop_last_batches batches of the final epoch.
template <typename Step>
void run_epochs(const Dataset& train, const TrainConfig& cfg, Rng& rng, std::size_t task_index,
                const EpochObserver& observer, Step step) {
  require_train_data(train);
  const std::size_t n = train.size();
  const std::size_t batches = (n + cfg.batch_n - 1) / cfg.batch_n;
  std::vector<std::size_t> order = iota_rows(0, n);
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
    const double lr = lr_at(epoch, cfg);
    rng.shuffle(order);
    double loss_sum = 0.0;
    std::size_t selected = 0, selected_aux = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t first = b * cfg.batch_n;
      const std::size_t last = std::min(n, first + cfg.batch_n);
      std::span<const std::size_t> rows(order.data() + first, last - first);
      const bool final_stretch = epoch + 1 == cfg.epochs_per_task && b + cfg.kd_stop_last_batches >= batches;
      const StepStats st = step(rows, lr, !final_stretch);
      loss_sum += st.loss;
      selected += st.selected;
      selected_aux += st.selected_aux;
    }
    const double aux_share = selected == 0 ? std::numeric_limits<double>::quiet_NaN()
                                           : static_cast<double>(selected_aux) / static_cast<double>(selected);
    if (observer) observer({task_index, epoch, loss_sum / static_cast<double>(batches), lr, aux_share});
  }
}

std::vector<int> gather_labels(const Dataset& d, std::span<const std::size_t> rows) {
  std::vector<int> y;
  y.reserve(rows.size());
  for (auto r : rows) y.push_back(d.y[r]);
  return y;
}

double ce_step(MlpModel& model, const Matrix& x, std::span<const int> y, double lr) {
  ForwardResult fwd = forward(model, x);
  LossOutput ce = cross_entropy(fwd.logits, y);
  sgd_step(model, backward(model, fwd.cache, ce.dlogits), lr);
  return ce.value;
}

}  // namespace

const char* to_string(Method m) {
  switch (m) {
    case Method::pfcl: return "pfcl";
    case Method::kd_only: return "kd_only";
    case Method::ft: return "ft";
    case Method::jt: return "jt";
    case Method::er: return "er";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (Method m : kAllMethods)
    if (name == to_string(m)) return m;
  throw ConfigError("unknown method '" + name + "' (valid: pfcl, kd_only, ft, jt, er)");
}

void TrainConfig::validate() const {
  if (batch_n == 0) throw ConfigError("batch must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
  if (!(hp.alpha >= 0.0) || !std::isfinite(hp.alpha)) throw ConfigError("alpha must be >= 0");
  if (!(hp.tau > 0.0) || !std::isfinite(hp.tau)) throw ConfigError("tau must be > 0");
  if (effective_k() > 2 * batch_n) {
    throw ConfigError("k_select = " + std::to_string(effective_k()) + " exceeds 2 * batch = " + std::to_string(2 * batch_n));
  }
  if (method == Method::er && er_buffer == 0) throw ConfigError("method er needs er_buffer > 0");
  for (auto h : hidden)
    if (h == 0) throw ConfigError("hidden layer widths must be >= 1");
}

double lr_at(std::size_t epoch, const TrainConfig& cfg) {
  double lr = cfg.lr;
  for (auto drop : cfg.lr_drop_epochs)
    if (drop <= epoch) lr /= 10.0;
  return lr;
}

void reservoir_update(MemoryBuffer& buffer, std::span<const double> x, int y, Rng& rng) {
  ++buffer.seen;
  if (buffer.capacity == 0) return;
  if (buffer.size() < buffer.capacity) {
    buffer.x.emplace_back(x.begin(), x.end());
    buffer.y.push_back(y);
    return;
  }
  const auto slot = static_cast<std::size_t>(rng.below(buffer.seen));
  if (slot < buffer.capacity) {
    buffer.x[slot].assign(x.begin(), x.end());
    buffer.y[slot] = y;
  }
}

BatchStep pfcl_batch(const MlpModel& model, const MlpModel& old_model, const Matrix& x_t, std::span<const int> y_t,
                     const Matrix& x_u, const TrainConfig& cfg, bool distill) {
  if (x_u.rows() > 0 && x_u.cols() != x_t.cols()) {
    throw ShapeError("auxiliary batch " + x_u.shape_string() + " vs labeled batch " + x_t.shape_string());
  }
  const std::size_t n = x_t.rows();
  const Matrix x = vstack(x_t, x_u);
  const std::size_t m = x.rows();

  ForwardResult fwd = forward(model, x);
  const Matrix z_old = predict(old_model, x);
  const std::vector<std::size_t> labeled = iota_rows(0, n);
  const Matrix new_t = fwd.logits.gather_rows(labeled);

  BatchStep step;
  Matrix dlogits(m, model.out_dim());
  if (!distill) {
    LossOutput ce = cross_entropy(new_t, y_t);
    scatter_add_rows(dlogits, ce.dlogits, 0, labeled);
    step.loss = ce.value;
    step.grads = backward(model, fwd.cache, dlogits);
    return step;
  }

  std::vector<std::vector<std::size_t>> extra_blocks;
  if (cfg.use_selection) {
    const auto scores = l1_discrepancy(fwd.logits, z_old);
    step.selected = select_top_k(scores, cfg.effective_k());
    if (cfg.regularize_all_current) extra_blocks.push_back(labeled);
  } else {
    // Separate means over current and auxiliary rows.
    step.selected = labeled;
    if (m > n) extra_blocks.push_back(iota_rows(n, m));
  }

  const Matrix old_t = z_old.gather_rows(labeled);
  LossOutput combined = combined_loss(new_t, old_t, y_t, fwd.logits.gather_rows(step.selected),
                                      z_old.gather_rows(step.selected), cfg.hp);
  scatter_add_rows(dlogits, combined.dlogits, 0, labeled);
  scatter_add_rows(dlogits, combined.dlogits, n, step.selected);
  step.loss = combined.value;

  for (const auto& block : extra_blocks) {
    LossOutput kd = kd_loss(fwd.logits.gather_rows(block), z_old.gather_rows(block), cfg.hp.tau);
    for (double& g : kd.dlogits.data()) g *= cfg.hp.alpha;
    scatter_add_rows(dlogits, kd.dlogits, 0, block);
    step.loss += cfg.hp.alpha * kd.value;
  }
  step.grads = backward(model, fwd.cache, dlogits);
  return step;
}

void train_first_task(MlpModel& model, const Dataset& train, const TrainConfig& cfg, Rng& rng, std::size_t task_index,
                      const EpochObserver& observer) {
  run_epochs(train, cfg, rng, task_index, observer, [&](std::span<const std::size_t> rows, double lr, bool) {
    return StepStats{ce_step(model, train.x.gather_rows(rows), gather_labels(train, rows), lr)};
  });
}

void train_task_pfcl(MlpModel& model, const MlpModel& old_model, const Dataset& train, AuxiliarySampler& aux,
                     const TrainConfig& cfg, Rng& rng, std::size_t task_index, const EpochObserver& observer) {
  run_epochs(train, cfg, rng, task_index, observer, [&](std::span<const std::size_t> rows, double lr, bool distill) {
    const Matrix x_t = train.x.gather_rows(rows);
    const Matrix x_u = aux.sample(rows.size());
    BatchStep step = pfcl_batch(model, old_model, x_t, gather_labels(train, rows), x_u, cfg, distill);
    sgd_step(model, step.grads, lr);
    const auto aux_rows = static_cast<std::size_t>(
        std::count_if(step.selected.begin(), step.selected.end(), [&](std::size_t r) { return r >= rows.size(); }));
    return StepStats{step.loss, step.selected.size() + (cfg.use_selection ? 0 : x_u.rows()),
                     aux_rows + (cfg.use_selection ? 0 : x_u.rows())};
  });
}

void train_task_kd_only(MlpModel& model, const MlpModel& old_model, const Dataset& train, const TrainConfig& cfg,
                        Rng& rng, std::size_t task_index, const EpochObserver& observer) {
  run_epochs(train, cfg, rng, task_index, observer, [&](std::span<const std::size_t> rows, double lr, bool distill) {
    const Matrix x = train.x.gather_rows(rows);
    const std::vector<int> y = gather_labels(train, rows);
    ForwardResult fwd = forward(model, x);
    if (!distill) {
      LossOutput ce = cross_entropy(fwd.logits, y);
      sgd_step(model, backward(model, fwd.cache, ce.dlogits), lr);
      return StepStats{ce.value};
    }
    const Matrix z_old = predict(old_model, x);
    LossOutput combined = combined_loss(fwd.logits, z_old, y, fwd.logits, z_old, cfg.hp);
    // Both blocks cover the same rows: fold the stacked gradient back.
    Matrix dlogits(x.rows(), model.out_dim());
    const std::vector<std::size_t> all = iota_rows(0, x.rows());
    scatter_add_rows(dlogits, combined.dlogits, 0, all);
    scatter_add_rows(dlogits, combined.dlogits, x.rows(), all);
    sgd_step(model, backward(model, fwd.cache, dlogits), lr);
    return StepStats{combined.value, x.rows(), 0};
  });
}

void train_task_er(MlpModel& model, MemoryBuffer& buffer, const Dataset& train, const TrainConfig& cfg, Rng& rng,
                   Rng& buffer_rng, std::size_t task_index, const EpochObserver& observer) {
  run_epochs(train, cfg, rng, task_index, observer, [&](std::span<const std::size_t> rows, double lr, bool) {
    Matrix x = train.x.gather_rows(rows);
    std::vector<int> y = gather_labels(train, rows);
    if (buffer.size() > 0) {
      std::vector<std::size_t> picks;
      if (buffer.size() < cfg.batch_n) {
        for (std::size_t i = 0; i < cfg.batch_n; ++i) picks.push_back(static_cast<std::size_t>(buffer_rng.below(buffer.size())));
      } else {
        std::vector<std::size_t> slots = iota_rows(0, buffer.size());
        for (std::size_t i = 0; i < cfg.batch_n; ++i) {
          const auto j = i + static_cast<std::size_t>(buffer_rng.below(slots.size() - i));
          std::swap(slots[i], slots[j]);
          picks.push_back(slots[i]);
        }
      }
      Matrix replay(picks.size(), x.cols());
      for (std::size_t i = 0; i < picks.size(); ++i) {
        std::copy(buffer.x[picks[i]].begin(), buffer.x[picks[i]].end(), replay.row(i).begin());
        y.push_back(buffer.y[picks[i]]);
      }
      x = vstack(x, replay);
    }
    const double loss = ce_step(model, x, y, lr);
    for (auto r : rows) reservoir_update(buffer, train.x.row(r), train.y[r], buffer_rng);
    return StepStats{loss};
  });
}

ContinualResult run_continual(const TaskStream& stream, const AuxiliaryPool* aux, const TrainConfig& cfg,
                              const EpochObserver& observer) {
  cfg.validate();
  stream.validate();
  const std::size_t T = stream.size();
  const bool class_il = stream.scenario == Scenario::class_il;
  if (cfg.method == Method::pfcl) {
    if (aux == nullptr || aux->size() == 0) throw DomainError("pfcl needs a non-empty auxiliary pool");
    if (aux->x.cols() != stream.dim()) {
      throw ShapeError("auxiliary dim " + std::to_string(aux->x.cols()) + " vs stream dim " + std::to_string(stream.dim()));
    }
  }

  Rng master(cfg.seed);
  Rng init_rng = master.split();
  Rng shuffle_rng = master.split();
  Rng aux_rng = master.split();
  Rng buffer_rng = master.split();

  std::vector<std::size_t> dims{stream.dim()};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(stream.total_classes);

  ContinualResult result{EvalMatrix(T), std::nullopt, MlpModel(dims, init_rng)};
  if (class_il) result.task_il = EvalMatrix(T);
  MlpModel& model = result.model;

  auto record = [&](std::size_t row) {
    ProtocolRows rows = evaluate_protocols(model, stream);
    result.primary.set_row(row, rows.primary);
    if (class_il) result.task_il->set_row(row, rows.task_il);
  };

  if (cfg.method == Method::jt) {
    std::vector<Dataset> parts;
    for (const auto& t : stream.tasks) parts.push_back(t.train);
    train_first_task(model, concat(parts), cfg, shuffle_rng, 0, observer);
    record(T - 1);
    return result;
  }

  std::optional<AuxiliarySampler> sampler;
  if (cfg.method == Method::pfcl) sampler.emplace(*aux, aux_rng.split());
  MemoryBuffer buffer(cfg.er_buffer);
  MlpModel old_model;

  for (std::size_t t = 0; t < T; ++t) {
    const Dataset& train = stream.tasks[t].train;
    switch (cfg.method) {
      case Method::ft:
        train_first_task(model, train, cfg, shuffle_rng, t, observer);
        break;
      case Method::er:
        train_task_er(model, buffer, train, cfg, shuffle_rng, buffer_rng, t, observer);
        break;
      case Method::pfcl:
        if (t == 0) train_first_task(model, train, cfg, shuffle_rng, t, observer);
        else train_task_pfcl(model, old_model, train, *sampler, cfg, shuffle_rng, t, observer);
        break;
      case Method::kd_only:
        if (t == 0) train_first_task(model, train, cfg, shuffle_rng, t, observer);
        else train_task_kd_only(model, old_model, train, cfg, shuffle_rng, t, observer);
        break;
      case Method::jt:
        break;
    }
    old_model = snapshot(model);
    record(t);
  }
  return result;
}

}  // namespace pfcl
