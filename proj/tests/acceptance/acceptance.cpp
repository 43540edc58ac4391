// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fail.
//
//   pfcl_acceptance --cli <pfcl binary> --spec-dir <configs> --work <scratch dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "../oracles.hpp"
#include "pfcl/eval.hpp"
#include "pfcl/experiment.hpp"
#include "pfcl/losses.hpp"
#include "pfcl/nn.hpp"
#include "pfcl/selection.hpp"
#include "pfcl/trainer.hpp"

using namespace pfcl;
namespace fs = std::filesystem;

namespace {

// Tolerances and thresholds.
constexpr int kGradInstances = 50;
constexpr double kFdEps = 1e-5;
constexpr double kFdRel = 1e-4;
constexpr double kFdAbsFloor = 1e-8;
constexpr double kGradSeconds = 60.0;
constexpr int kStationaryInstances = 20;
constexpr double kKdStationaryNorm = 1e-15;
constexpr double kCombinedVsCe = 1e-12;
constexpr int kSelectionInstances = 1000;
constexpr int kMetricInstances = 100;
constexpr double kMetricTol = 1e-12;
constexpr double kJtFloor = 0.95;
constexpr double kFtCeiling = 0.35;
constexpr double kFtLastTaskFloor = 0.90;
constexpr double kRunSeconds = 120.0;
constexpr double kKdTaskIlMargin = 0.10;
constexpr double kPfclClassIlMargin = 0.15;
constexpr double kRssSlack = 0.03;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const Outcome& o) {
  std::printf("%s  %2d  %-34s %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// ---- 1: gradients against central differences --------------------------

struct GradStats {
  std::size_t checked = 0;
  std::size_t bad = 0;
  double worst_abs = 0.0;
  double worst_rel = 0.0;  // over partials of magnitude > 1e-6
};

void compare(GradStats& st, const Gradients& g, MlpModel& model, const std::function<double()>& f) {
  for (std::size_t l = 0; l < model.layer_count(); ++l) {
    for (Matrix* p : {&model.layers()[l].weight, &model.layers()[l].bias}) {
      const Matrix& analytic = p == &model.layers()[l].weight ? g.layers[l].weight : g.layers[l].bias;
      Matrix numeric = oracle::numeric_gradient(*p, f, kFdEps);
      for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double a = analytic.data()[i], n = numeric.data()[i];
        ++st.checked;
        const double diff = std::abs(a - n), mag = std::max(std::abs(a), std::abs(n));
        st.worst_abs = std::max(st.worst_abs, diff);
        if (mag > 1e-6) st.worst_rel = std::max(st.worst_rel, diff / mag);
        if (!oracle::close_rel(a, n, kFdRel, kFdAbsFloor)) ++st.bad;
      }
    }
  }
}

Outcome gradient_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  GradStats ce_st, kd_st, comb_st;
  int instances = 0;
  while (instances < kGradInstances) {
    const std::size_t in = 2 + rng.below(4), classes = 3 + rng.below(5), n = 2 + rng.below(5);
    std::vector<std::size_t> dims{in};
    for (std::size_t h = rng.below(3); h > 0; --h) dims.push_back(3 + rng.below(6));
    dims.push_back(classes);
    MlpModel model(dims, rng), old(dims, rng);
    for (auto& l : model.layers())
      for (double& b : l.bias.data()) b = 0.1 * rng.normal();
    const double tau = rng.uniform(0.5, 5.0), alpha = rng.uniform(0.1, 2.0);
    Matrix xt(n, in), xu(n, in);
    for (double& v : xt.data()) v = rng.normal();
    for (double& v : xu.data()) v = rng.normal();
    const Matrix x = vstack(xt, xu);
    if (oracle::min_hidden_margin(model, x) < 1e-3) continue;  // too close to a ReLU kink
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.below(classes));

    // Cross-entropy alone.
    auto fwd_t = forward(model, xt);
    compare(ce_st, backward(model, fwd_t.cache, cross_entropy(fwd_t.logits, y).dlogits), model,
            [&] { return oracle::ce_value(predict(model, xt), y); });

    // Distillation alone, against a frozen old model.
    const Matrix z_old = predict(old, x);
    auto fwd = forward(model, x);
    compare(kd_st, backward(model, fwd.cache, kd_loss(fwd.logits, z_old, tau).dlogits), model,
            [&] { return oracle::kd_value(predict(model, x), z_old, tau); });

    // Full batch objective with selection.
    TrainConfig cfg;
    cfg.batch_n = n;
    cfg.hp = {alpha, tau};
    BatchStep step = pfcl_batch(model, old, xt, y, xu, cfg, true);
    const Matrix z_old_sel = z_old.gather_rows(step.selected);
    std::vector<std::size_t> labeled(n);
    for (std::size_t i = 0; i < n; ++i) labeled[i] = i;
    compare(comb_st, step.grads, model, [&] {
      Matrix z = predict(model, x);
      return oracle::ce_value(z.gather_rows(labeled), y) +
             alpha * oracle::kd_value(z.gather_rows(step.selected), z_old_sel, tau);
    });
    ++instances;
  }
  const double secs = seconds_since(t0);
  Outcome o;
  o.pass = ce_st.bad == 0 && kd_st.bad == 0 && comb_st.bad == 0 && secs < kGradSeconds;
  o.detail = std::to_string(instances) + " instances, " +
             std::to_string(ce_st.checked + kd_st.checked + comb_st.checked) + " partials; mismatches ce/kd/combined " +
             std::to_string(ce_st.bad) + "/" + std::to_string(kd_st.bad) + "/" + std::to_string(comb_st.bad) +
             ", worst abs " + sci(std::max({ce_st.worst_abs, kd_st.worst_abs, comb_st.worst_abs})) + ", worst rel " +
             sci(std::max({ce_st.worst_rel, kd_st.worst_rel, comb_st.worst_rel})) + ", " + fmt(secs, 1) + " s";
  return o;
}

// ---- 2: stationarity -------------------------------------------------------

Outcome kd_stationarity() {
  Rng rng(202);
  double kd_norm = 0.0, comb_diff = 0.0;
  for (int i = 0; i < kStationaryInstances; ++i) {
    const std::size_t n = 1 + rng.below(8), k = 1 + rng.below(8), c = 2 + rng.below(10);
    Matrix zt(n, c), zs(k, c);
    const double scale = rng.uniform(0.1, 20.0);
    for (double& v : zt.data()) v = scale * rng.normal();
    for (double& v : zs.data()) v = scale * rng.normal();
    std::vector<int> y(n);
    for (int& v : y) v = static_cast<int>(rng.below(c));
    const double tau = rng.uniform(0.5, 5.0);
    const LossOutput kd = kd_loss(zs, zs, tau);
    for (double g : kd.dlogits.data()) kd_norm = std::max(kd_norm, std::abs(g));

    Hyperparams hp{rng.uniform(0.1, 2.0), tau};
    LossOutput comb = combined_loss(zt, zt, y, zs, zs, hp);
    LossOutput ce = cross_entropy(zt, y);
    for (std::size_t r = 0; r < n + k; ++r)
      for (std::size_t j = 0; j < c; ++j) {
        const double pure = r < n ? ce.dlogits(r, j) : 0.0;
        comb_diff = std::max(comb_diff, std::abs(comb.dlogits(r, j) - pure));
      }
  }
  Outcome o;
  o.pass = kd_norm <= kKdStationaryNorm && comb_diff <= kCombinedVsCe;
  o.detail = "max |dKD| " + sci(kd_norm) + ", max |combined - CE| " + sci(comb_diff) + " over " +
             std::to_string(kStationaryInstances) + " instances";
  return o;
}

// ---- 3: selection ------------------------------------------------------------

Outcome selection_oracle() {
  Rng rng(303);
  int mismatches = 0, with_ties = 0;
  for (int i = 0; i < kSelectionInstances; ++i) {
    const std::size_t m = 1 + rng.below(64);
    const std::size_t k = 1 + rng.below(m);
    // Small integer alphabet in half the cases forces duplicated scores.
    const bool tied = i % 2 == 0;
    std::vector<DiscrepancyScore> s;
    for (std::size_t j = 0; j < m; ++j)
      s.push_back({j, tied ? static_cast<double>(rng.below(4)) : rng.uniform(0.0, 10.0)});
    if (tied) ++with_ties;
    if (select_top_k(s, k) != oracle::top_k_full_sort(s, k)) ++mismatches;
  }
  return {mismatches == 0, std::to_string(kSelectionInstances) + " instances (" + std::to_string(with_ties) +
                               " with duplicated scores), " + std::to_string(mismatches) + " mismatches"};
}

// ---- 4: metrics -------------------------------------------------------------

Outcome metric_oracle() {
  Rng rng(404);
  double worst = 0.0;
  for (int i = 0; i < kMetricInstances; ++i) {
    const std::size_t t = 2 + rng.below(19);
    EvalMatrix m(t);
    std::vector<std::vector<double>> nested(t, std::vector<double>(t, 0.0));
    for (std::size_t r = 0; r < t; ++r)
      for (std::size_t c = 0; c < t; ++c) m(r, c) = nested[r][c] = rng.uniform();
    worst = std::max(worst, std::abs(avg_accuracy(m) - oracle::acc_direct(nested)));
    worst = std::max(worst, std::abs(forgetting(m) - oracle::forget_direct(nested)));
  }
  EvalMatrix hand(2);
  hand(0, 0) = 0.9;
  hand(1, 0) = 0.5;
  hand(1, 1) = 1.0;
  const double f = forgetting(hand);
  Outcome o;
  o.pass = worst <= kMetricTol && f == 0.4;
  o.detail = "worst |diff| " + sci(worst) + " over " + std::to_string(kMetricInstances) + " matrices; hand case " +
             (f == 0.4 ? std::string("== 0.4") : fmt(f, 17));
  return o;
}

// ---- 5-9: desk-scale streams --------------------------------------------------

struct Suite {
  std::map<std::string, std::vector<RunOutput>> by_method;
  double slowest_run = 0.0;

  double mean(const std::string& method, const std::function<double(const RunOutput&)>& f) const {
    const auto& runs = by_method.at(method);
    double s = 0.0;
    for (const auto& r : runs) s += f(r);
    return s / static_cast<double>(runs.size());
  }
  double acc(const std::string& m) const {
    return mean(m, [](const RunOutput& r) { return r.summary.acc; });
  }
  double acc_task_il(const std::string& m) const {
    return mean(m, [](const RunOutput& r) { return r.summary.acc_task_il; });
  }
};

Suite run_suite(const fs::path& spec_path, const fs::path& out, const std::vector<std::string>& methods) {
  std::string list;
  for (const auto& m : methods) list += (list.empty() ? "" : ",") + m;
  ExperimentSpec spec = parse_spec(spec_path, {"experiment.methods=" + list, "experiment.seeds=1,2,3"});
  spec.output = out;
  Suite s;
  for (auto& r : run_experiment(spec, 1)) {
    s.slowest_run = std::max(s.slowest_run, r.summary.wall_time_s);
    s.by_method[r.summary.method].push_back(std::move(r));
  }
  return s;
}

Outcome forgetting_reproduction(const Suite& g) {
  const double jt = g.acc("jt"), ft = g.acc("ft");
  const double ft_last = g.mean("ft", [](const RunOutput& r) {
    const std::size_t t = r.primary.tasks() - 1;
    return r.primary(t, t);
  });
  const double slowest = std::max(g.slowest_run, 0.0);
  Outcome o;
  o.pass = jt >= kJtFloor && ft <= kFtCeiling && ft_last >= kFtLastTaskFloor && slowest < kRunSeconds;
  o.detail = "jt " + fmt(jt) + ", ft Class-IL " + fmt(ft) + ", ft a[T][T] " + fmt(ft_last) + ", slowest run " +
             fmt(slowest, 1) + " s";
  return o;
}

Outcome regularization_trend(const Suite& g) {
  const double kd_t = g.acc_task_il("kd_only"), ft_t = g.acc_task_il("ft");
  const double pf = g.acc("pfcl"), ft = g.acc("ft");
  Outcome o;
  o.pass = kd_t - ft_t >= kKdTaskIlMargin && pf - ft >= kPfclClassIlMargin;
  o.detail = "Task-IL kd_only " + fmt(kd_t) + " vs ft " + fmt(ft_t) + " (+" + fmt(kd_t - ft_t) + "); Class-IL pfcl " +
             fmt(pf) + " vs ft " + fmt(ft) + " (+" + fmt(pf - ft) + ")";
  return o;
}

Outcome rss_non_degradation(const Suite& g) {
  const double with = g.acc("pfcl"), without = g.acc("pfcl_no_rss");
  return {with >= without - kRssSlack, "pfcl " + fmt(with) + " vs pfcl_no_rss " + fmt(without) + " (diff " +
                                           fmt(with - without) + ", slack " + fmt(kRssSlack, 2) + ")"};
}

Outcome method_ordering(const Suite& g, const Suite& r) {
  const double gj = g.acc("jt"), gp = g.acc("pfcl"), gf = g.acc("ft");
  const double rj = r.acc("jt"), rp = r.acc("pfcl"), rf = r.acc("ft");
  Outcome o;
  o.pass = gj >= gp && gp >= gf && rj >= rp && rp >= rf;
  o.detail = "gauss10-5 jt/pfcl/ft " + fmt(gj) + "/" + fmt(gp) + "/" + fmt(gf) + "; rot-digits-20 " + fmt(rj) + "/" +
             fmt(rp) + "/" + fmt(rf);
  return o;
}

Outcome masking_dominance(const std::vector<const Suite*>& suites) {
  std::size_t matrices = 0, entries = 0, violations = 0;
  for (const Suite* s : suites)
    for (const auto& [method, runs] : s->by_method)
      for (const auto& r : runs) {
        if (!r.task_il) continue;
        ++matrices;
        for (std::size_t i = 0; i < r.primary.tasks(); ++i)
          for (std::size_t t = 0; t < r.primary.tasks(); ++t) {
            ++entries;
            if (!((*r.task_il)(i, t) >= r.primary(i, t))) ++violations;
          }
      }
  return {matrices > 0 && violations == 0, std::to_string(matrices) + " class-incremental runs, " +
                                               std::to_string(entries) + " entries, " + std::to_string(violations) +
                                               " violations"};
}

// ---- 10: determinism across processes ----------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome cli_determinism(const std::string& cli, const fs::path& spec, const fs::path& work) {
  std::vector<fs::path> outs{work / "run_a", work / "run_b"};
  for (const auto& out : outs) {
    fs::remove_all(out);
    const std::string cmd = "\"" + cli + "\" --log-level warn run \"" + spec.string() + "\" --output \"" +
                            out.string() + "\" --set experiment.seeds=7 --set experiment.methods=pfcl,ft > /dev/null";
    if (std::system(cmd.c_str()) != 0) return {false, "command failed: " + cmd};
  }
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(outs[0])) {
    const auto name = e.path().filename().string();
    if (name.find(".matrix.csv") == std::string::npos && name.find(".task_il.csv") == std::string::npos) continue;
    ++compared;
    if (!fs::exists(outs[1] / name) || slurp(e.path()) != slurp(outs[1] / name))
      return {false, name + " differs between executions"};
  }
  return {compared >= 2, std::to_string(compared) + " matrix CSVs byte-identical across two executions"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string cli;
  fs::path spec_dir = "configs", work = "acceptance_work";
  app.add_option("--cli", cli, "pfcl executable")->required();
  app.add_option("--spec-dir", spec_dir, "directory holding the shipped specs");
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);
  fs::create_directories(work);

  report(1, "gradient oracle", gradient_oracle());
  report(2, "distillation stationarity", kd_stationarity());
  report(3, "selection oracle", selection_oracle());
  report(4, "metric oracle", metric_oracle());

  const Suite gauss = run_suite(spec_dir / "gauss10-5.ini", work / "gauss10-5",
                                {"ft", "kd_only", "pfcl", "pfcl_no_rss", "jt"});
  const Suite rot = run_suite(spec_dir / "rot-digits-20.ini", work / "rot-digits-20", {"ft", "pfcl", "jt"});

  report(5, "catastrophic forgetting", forgetting_reproduction(gauss));
  report(6, "regularization trend", regularization_trend(gauss));
  report(7, "selection non-degradation", rss_non_degradation(gauss));
  report(8, "method ordering", method_ordering(gauss, rot));
  report(9, "task-il masking dominance", masking_dominance({&gauss, &rot}));
  report(10, "determinism", cli_determinism(cli, spec_dir / "gauss10-5.ini", work));

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
