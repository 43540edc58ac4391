#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "pfcl/eval.hpp"
#include "pfcl/tasks.hpp"
#include "pfcl/trainer.hpp"

namespace pfcl {

/// How the task stream is built. `kind` is one of: gaussian, glyph-rotated,
/// idx, csv, or a preset (gauss10-5, rot-digits-20, digits-5) that fills in
/// the other fields before the file's own keys are applied.
struct StreamSpec {
  std::string kind = "gauss10-5";
  std::string scenario = "class_il";  // idx / csv only
  std::size_t classes = 10;
  std::size_t tasks = 5;
  std::size_t dim = 20;
  double separation = 4.0;
  std::size_t per_class = 500;
  std::size_t side = 16;
  std::size_t image_side = 0;          // csv only, for rotation
  std::uint64_t data_seed = 20240601;
  std::filesystem::path images, labels, csv;
};

/// Unlabeled pool. `kind`: gaussian, scribble, glyph-digits, csv, none.
struct AuxSpec {
  std::string kind = "gaussian";
  std::size_t size = 5000;
  std::size_t centers = 50;
  double separation = 4.0;
  double spread = 1.0;
  std::vector<int> classes;  // glyph-digits only
  std::size_t side = 16;     // scribble / glyph-digits
  std::filesystem::path csv;
  std::uint64_t data_seed = 777;
};

/// A named training recipe; `pfcl_no_rss` is pfcl with selection disabled.
struct MethodVariant {
  std::string label;
  Method method = Method::pfcl;
  bool use_selection = true;
};
MethodVariant parse_method_variant(const std::string& name);

struct ExperimentSpec {
  StreamSpec stream;
  AuxSpec aux;
  TrainConfig train;
  std::vector<MethodVariant> methods;
  std::vector<std::uint64_t> seeds;
  std::filesystem::path output = "results";

  /// Rejects invariant-violating specs before any compute.
  void validate() const;
};

/// INI-style `key = value` under `[stream]`, `[aux]`, `[train]`,
/// `[experiment]`. Overrides are `section.key=value` strings applied after
/// the file. Unknown keys and bad values raise ConfigError naming key and line.
ExperimentSpec parse_spec(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});
ExperimentSpec parse_spec_text(const std::string& text, const std::string& origin,
                               const std::vector<std::string>& overrides = {});

TaskStream build_stream(const StreamSpec& spec);
AuxiliaryPool build_aux(const AuxSpec& spec, const TaskStream& stream);

struct RunSummary {
  std::string method;
  std::uint64_t seed = 0;
  std::string protocol;
  double acc = 0.0;
  double forget = 0.0;           // NaN when undefined (one task, or jt)
  double acc_task_il = 0.0;      // NaN for domain-incremental streams
  double forget_task_il = 0.0;
  double wall_time_s = 0.0;
};

struct RunOutput {
  RunSummary summary;
  EvalMatrix primary;
  std::optional<EvalMatrix> task_il;
};

/// One (method, seed) run with its result files written into `dir`.
RunOutput run_single(const ExperimentSpec& spec, const MethodVariant& method, std::uint64_t seed,
                     const TaskStream& stream, const AuxiliaryPool* aux, const std::filesystem::path& dir);

/// All (method, seed) runs, then summary.csv and curves.csv. Worker threads
/// come from `workers` (0 = PFCL_WORKERS env var, default 1).
std::vector<RunOutput> run_experiment(const ExperimentSpec& spec, std::size_t workers = 0);

struct Aggregate {
  std::string method;
  std::string protocol;
  std::size_t runs = 0;
  double acc_mean = 0.0, acc_std = 0.0;
  double forget_mean = 0.0, forget_std = 0.0;
};
/// Mean and sample standard deviation across seeds, per (method, protocol),
/// ordered by method name.
std::vector<Aggregate> aggregate(const std::vector<RunSummary>& runs);
void write_aggregate_csv(const std::vector<Aggregate>& rows, const std::filesystem::path& path);

/// Columns step, <label>_mean, <label>_std of the running average accuracy
/// across the matrices grouped under each label. Throws DomainError on mixed T.
void emit_curves(const std::map<std::string, std::vector<EvalMatrix>>& matrices, const std::filesystem::path& path);
std::string curves_csv_string(const std::map<std::string, std::vector<EvalMatrix>>& matrices);

/// Label of a matrix file: the file name up to `_seed`.
std::string label_from_matrix_path(const std::filesystem::path& path);

/// Rebuilds summary.csv (and curves.csv) from the run files in `dir`.
std::vector<Aggregate> summarize_dir(const std::filesystem::path& dir);

RunSummary read_summary_json(const std::filesystem::path& path);

}  // namespace pfcl
