// Command-line front end: run, validate, curves, summarize.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "pfcl/errors.hpp"
#include "pfcl/experiment.hpp"

namespace {

int exit_code(const std::exception& e) {
  if (const auto* err = dynamic_cast<const pfcl::Error*>(&e)) return static_cast<int>(err->kind());
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return static_cast<int>(pfcl::ErrorKind::format);
  return 1;
}

void print_aggregate(const std::vector<pfcl::Aggregate>& rows) {
  std::printf("%-14s %-10s %4s %10s %10s %10s %10s\n", "method", "protocol", "runs", "acc", "acc_std", "forget",
              "forget_std");
  for (const auto& r : rows) {
    std::printf("%-14s %-10s %4zu %10.4f %10.4f %10.4f %10.4f\n", r.method.c_str(), r.protocol.c_str(), r.runs,
                r.acc_mean, r.acc_std, r.forget_mean, r.forget_std);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual learning runs with distillation on auxiliary unlabeled data"};
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error, off");

  std::string spec_path;
  std::vector<std::string> overrides;
  std::size_t workers = 0;
  auto* run = app.add_subcommand("run", "Run every (method, seed) pair of an experiment spec");
  run->add_option("spec", spec_path, "Experiment spec file")->required();
  run->add_option("--set", overrides, "Override a spec value: section.key=value");
  run->add_option("--output", [&](const CLI::results_t& r) { overrides.push_back("experiment.output=" + r[0]); return true; },
                  "Output directory (same as --set experiment.output=DIR)");
  run->add_option("--workers", workers, "Parallel runs (default: $PFCL_WORKERS or 1)");

  auto* validate = app.add_subcommand("validate", "Parse and validate a spec without running it");
  validate->add_option("spec", spec_path, "Experiment spec file")->required();
  validate->add_option("--set", overrides, "Override a spec value: section.key=value");

  std::vector<std::string> matrix_files;
  std::string curves_out;
  auto* curves = app.add_subcommand("curves", "Running average accuracy per step from evaluation matrices");
  curves->add_option("matrices", matrix_files, "Matrix CSV files (<label>_seed<N>.matrix.csv)")->required();
  curves->add_option("-o,--output", curves_out, "Write here instead of stdout");

  std::string dir;
  auto* summarize = app.add_subcommand("summarize", "Rebuild summary.csv and curves.csv for a results directory");
  summarize->add_option("dir", dir, "Results directory")->required();

  CLI11_PARSE(app, argc, argv);
  spdlog::set_default_logger(spdlog::stderr_color_mt("pfcl"));
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    if (*run) {
      const auto spec = pfcl::parse_spec(spec_path, overrides);
      const auto results = pfcl::run_experiment(spec, workers);
      std::vector<pfcl::RunSummary> summaries;
      for (const auto& r : results) summaries.push_back(r.summary);
      print_aggregate(pfcl::aggregate(summaries));
      std::cout << "results written to " << spec.output.string() << "\n";
    } else if (*validate) {
      const auto spec = pfcl::parse_spec(spec_path, overrides);
      std::cout << "ok: " << spec.methods.size() << " method(s) x " << spec.seeds.size() << " seed(s), stream "
                << spec.stream.kind << ", alpha " << spec.train.hp.alpha << ", tau " << spec.train.hp.tau << ", k "
                << spec.train.effective_k() << ", kd_stop " << spec.train.kd_stop_last_batches << "\n";
    } else if (*curves) {
      std::map<std::string, std::vector<pfcl::EvalMatrix>> grouped;
      for (const auto& f : matrix_files) grouped[pfcl::label_from_matrix_path(f)].push_back(pfcl::read_eval_csv(f));
      if (curves_out.empty()) std::cout << pfcl::curves_csv_string(grouped);
      else pfcl::emit_curves(grouped, curves_out);
    } else if (*summarize) {
      print_aggregate(pfcl::summarize_dir(dir));
    }
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return exit_code(e);
  }
  return 0;
}
