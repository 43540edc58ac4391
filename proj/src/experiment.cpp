#include "pfcl/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "pfcl/errors.hpp"

namespace pfcl {

namespace {

using json = nlohmann::ordered_json;

struct Entry {
  std::string section;
  std::string key;
  std::string value;
  std::string where;  // "file:line" or "override"
};

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<Entry> parse_ini(const std::string& text, const std::string& origin) {
  std::vector<Entry> entries;
  std::istringstream is(text);
  std::string line, section;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value, got '" + line + "'");
    if (section.empty()) throw ConfigError(where + ": key outside of any [section]");
    entries.push_back({section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where});
  }
  return entries;
}

Entry parse_override(const std::string& text) {
  const auto eq = text.find('=');
  const auto dot = text.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw ConfigError("override '" + text + "' must look like section.key=value");
  }
  return {trim(text.substr(0, dot)), trim(text.substr(dot + 1, eq - dot - 1)), trim(text.substr(eq + 1)),
          "override '" + text + "'"};
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

[[noreturn]] void bad_value(const Entry& e, const std::string& why) {
  throw ConfigError(e.where + ": " + e.section + "." + e.key + " = '" + e.value + "': " + why);
}

std::uint64_t to_uint(const Entry& e, const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) bad_value(e, "expected a non-negative integer");
  return v;
}

std::size_t to_size(const Entry& e) { return static_cast<std::size_t>(to_uint(e, e.value)); }

double to_real(const Entry& e) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
  if (ec != std::errc() || ptr != e.value.data() + e.value.size() || !std::isfinite(v)) bad_value(e, "expected a real");
  return v;
}

bool to_bool(const Entry& e) {
  if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
  if (e.value == "false" || e.value == "0" || e.value == "no") return false;
  bad_value(e, "expected true or false");
}

std::vector<std::size_t> to_size_list(const Entry& e) {
  std::vector<std::size_t> out;
  for (const auto& s : split_list(e.value)) out.push_back(static_cast<std::size_t>(to_uint(e, s)));
  return out;
}

void apply_preset(ExperimentSpec& spec, const std::string& kind) {
  StreamSpec& s = spec.stream;
  AuxSpec& a = spec.aux;
  TrainConfig& t = spec.train;
  if (kind == "gauss10-5") {
    // Low dimension and wide separation: JT is near perfect while FT loses
    // every earlier task.
    s.kind = "gaussian";
    s.classes = 10;
    s.tasks = 5;
    s.dim = 3;
    s.separation = 20.0;
    s.per_class = 2000;
    a.kind = "gaussian";
    a.size = 5000;
    a.centers = 50;
    a.separation = 15.0;
    a.spread = 4.0;
    t.epochs_per_task = 5;
    t.batch_n = 32;
    t.lr = 0.055;
    t.hp.alpha = 0.5;
  } else if (kind == "rot-digits-20") {
    s.kind = "glyph-rotated";
    s.classes = 10;
    s.tasks = 20;
    s.side = 16;
    s.per_class = 250;
    a.kind = "scribble";
    a.size = 5000;
    a.side = 16;
    t.epochs_per_task = 1;
    t.batch_n = 64;
    t.lr = 0.03;
    t.hp.alpha = 1.0;
  } else if (kind == "digits-5") {
    s.kind = "idx";
    s.scenario = "class_il";
    s.classes = 10;
    s.tasks = 5;
    a.kind = "scribble";
    a.size = 5000;
    a.side = 28;
    t.epochs_per_task = 1;
    t.batch_n = 64;
    t.lr = 0.03;
    t.hp.alpha = 1.0;
  } else {
    s.kind = kind;
  }
}

void apply_entry(ExperimentSpec& spec, const Entry& e, const std::filesystem::path& base_dir) {
  auto path_of = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_absolute() ? p : base_dir / p;
  };
  StreamSpec& s = spec.stream;
  AuxSpec& a = spec.aux;
  TrainConfig& t = spec.train;
  const std::string& k = e.key;
  if (e.section == "stream") {
    if (k == "kind") return;  // handled by the preset pass
    if (k == "scenario") s.scenario = e.value;
    else if (k == "classes") s.classes = to_size(e);
    else if (k == "tasks") s.tasks = to_size(e);
    else if (k == "dim") s.dim = to_size(e);
    else if (k == "separation") s.separation = to_real(e);
    else if (k == "per_class") s.per_class = to_size(e);
    else if (k == "side") s.side = to_size(e);
    else if (k == "image_side") s.image_side = to_size(e);
    else if (k == "data_seed") s.data_seed = to_uint(e, e.value);
    else if (k == "images") s.images = path_of(e.value);
    else if (k == "labels") s.labels = path_of(e.value);
    else if (k == "csv") s.csv = path_of(e.value);
    else throw ConfigError(e.where + ": unknown key stream." + k);
  } else if (e.section == "aux") {
    if (k == "kind") a.kind = e.value;
    else if (k == "size") a.size = to_size(e);
    else if (k == "centers") a.centers = to_size(e);
    else if (k == "separation") a.separation = to_real(e);
    else if (k == "spread") a.spread = to_real(e);
    else if (k == "side") a.side = to_size(e);
    else if (k == "csv") a.csv = path_of(e.value);
    else if (k == "data_seed") a.data_seed = to_uint(e, e.value);
    else if (k == "classes") {
      a.classes.clear();
      for (auto c : to_size_list(e)) a.classes.push_back(static_cast<int>(c));
    } else throw ConfigError(e.where + ": unknown key aux." + k);
  } else if (e.section == "train") {
    if (k == "epochs") t.epochs_per_task = to_size(e);
    else if (k == "batch") t.batch_n = to_size(e);
    else if (k == "lr") t.lr = to_real(e);
    else if (k == "lr_drops") t.lr_drop_epochs = to_size_list(e);
    else if (k == "alpha") t.hp.alpha = to_real(e);
    else if (k == "tau") t.hp.tau = to_real(e);
    else if (k == "k_select") t.k_select = to_size(e);
    else if (k == "kd_stop") t.kd_stop_last_batches = to_size(e);
    else if (k == "er_buffer") t.er_buffer = to_size(e);
    else if (k == "hidden") t.hidden = to_size_list(e);
    else if (k == "use_selection") t.use_selection = to_bool(e);
    else if (k == "regularize_all_current") t.regularize_all_current = to_bool(e);
    else throw ConfigError(e.where + ": unknown key train." + k);
  } else if (e.section == "experiment") {
    if (k == "methods") {
      spec.methods.clear();
      try {
        for (const auto& m : split_list(e.value)) spec.methods.push_back(parse_method_variant(m));
      } catch (const ConfigError& err) {
        throw ConfigError(e.where + ": experiment.methods: " + err.what());
      }
    } else if (k == "seeds") {
      spec.seeds.clear();
      for (const auto& sd : split_list(e.value)) spec.seeds.push_back(to_uint(e, sd));
    } else if (k == "output") {
      spec.output = e.value;
    } else throw ConfigError(e.where + ": unknown key experiment." + k);
  } else {
    throw ConfigError(e.where + ": unknown section [" + e.section + "]");
  }
}

std::string sha256_hex(const std::vector<const Matrix*>& matrices, const std::vector<const std::vector<int>*>& labels) {
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  for (const Matrix* m : matrices) {
    const std::uint64_t dims[2] = {m->rows(), m->cols()};
    EVP_DigestUpdate(ctx, dims, sizeof dims);
    EVP_DigestUpdate(ctx, m->data().data(), m->size() * sizeof(double));
  }
  for (const auto* y : labels) EVP_DigestUpdate(ctx, y->data(), y->size() * sizeof(int));
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::string stream_digest(const TaskStream& stream) {
  std::vector<const Matrix*> m;
  std::vector<const std::vector<int>*> y;
  for (const auto& t : stream.tasks) {
    m.push_back(&t.train.x);
    m.push_back(&t.test.x);
    y.push_back(&t.train.y);
    y.push_back(&t.test.y);
  }
  return sha256_hex(m, y);
}

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw FormatError("cannot open " + tmp.string());
    os << contents;
    if (!os) throw FormatError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

json nan_to_null(double v) { return std::isnan(v) ? json(nullptr) : json(v); }
double null_to_nan(const json& j) { return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>(); }

json config_json(const ExperimentSpec& spec, const MethodVariant& method, std::uint64_t seed) {
  const TrainConfig& t = spec.train;
  json j;
  j["method"] = method.label;
  j["seed"] = seed;
  j["stream"] = {{"kind", spec.stream.kind},         {"scenario", spec.stream.scenario},
                 {"classes", spec.stream.classes},   {"tasks", spec.stream.tasks},
                 {"dim", spec.stream.dim},           {"separation", spec.stream.separation},
                 {"per_class", spec.stream.per_class}, {"side", spec.stream.side},
                 {"data_seed", spec.stream.data_seed}};
  j["aux"] = {{"kind", spec.aux.kind},       {"size", spec.aux.size},     {"centers", spec.aux.centers},
              {"separation", spec.aux.separation}, {"spread", spec.aux.spread}, {"side", spec.aux.side},
              {"data_seed", spec.aux.data_seed}};
  j["train"] = {{"epochs", t.epochs_per_task},
                {"batch", t.batch_n},
                {"lr", t.lr},
                {"lr_drops", t.lr_drop_epochs},
                {"alpha", t.hp.alpha},
                {"tau", t.hp.tau},
                {"k_select", t.effective_k()},
                {"kd_stop", t.kd_stop_last_batches},
                {"er_buffer", t.er_buffer},
                {"hidden", t.hidden},
                {"use_selection", method.use_selection && t.use_selection},
                {"regularize_all_current", t.regularize_all_current}};
  return j;
}

std::string run_stem(const std::string& label, std::uint64_t seed) { return label + "_seed" + std::to_string(seed); }

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return v.empty() ? std::numeric_limits<double>::quiet_NaN() : 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

std::string fmt_real(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

MethodVariant parse_method_variant(const std::string& name) {
  if (name == "pfcl_no_rss") return {name, Method::pfcl, false};
  try {
    return {name, parse_method(name), true};
  } catch (const ConfigError&) {
    throw ConfigError("unknown method '" + name + "' (valid: pfcl, pfcl_no_rss, kd_only, ft, jt, er)");
  }
}

void ExperimentSpec::validate() const {
  if (methods.empty()) throw ConfigError("experiment.methods: at least one method is required");
  if (seeds.empty()) throw ConfigError("experiment.seeds: at least one seed is required");
  train.hp.validate();
  TrainConfig probe = train;
  for (const auto& m : methods) {
    probe.method = m.method;
    probe.validate();
    if (m.method == Method::pfcl && aux.kind == "none") {
      throw ConfigError("method " + m.label + " needs an auxiliary pool (aux.kind is none)");
    }
  }
  const auto& s = stream;
  if (s.kind != "gaussian" && s.kind != "glyph-rotated" && s.kind != "idx" && s.kind != "csv") {
    throw ConfigError("stream.kind '" + s.kind + "' (valid: gauss10-5, rot-digits-20, digits-5, gaussian, glyph-rotated, idx, csv)");
  }
  if (s.tasks == 0) throw ConfigError("stream.tasks must be >= 1");
  if (s.scenario != "class_il" && s.scenario != "domain_il") throw ConfigError("stream.scenario must be class_il or domain_il");
  if (s.kind == "idx") {
    if (!std::filesystem::exists(s.images)) throw ConfigError("stream.images: file not found: " + s.images.string());
    if (!std::filesystem::exists(s.labels)) throw ConfigError("stream.labels: file not found: " + s.labels.string());
  }
  if (s.kind == "csv" && !std::filesystem::exists(s.csv)) throw ConfigError("stream.csv: file not found: " + s.csv.string());
  if (s.kind == "gaussian" && s.classes % s.tasks != 0) {
    throw ConfigError("stream.classes = " + std::to_string(s.classes) + " is not divisible by stream.tasks = " +
                      std::to_string(s.tasks));
  }
  if (s.separation < 0.0) throw ConfigError("stream.separation must be >= 0");
  const auto& a = aux;
  if (a.kind != "gaussian" && a.kind != "scribble" && a.kind != "glyph-digits" && a.kind != "csv" && a.kind != "none") {
    throw ConfigError("aux.kind '" + a.kind + "' (valid: gaussian, scribble, glyph-digits, csv, none)");
  }
  if (a.kind == "csv" && !std::filesystem::exists(a.csv)) throw ConfigError("aux.csv: file not found: " + a.csv.string());
  if (a.kind != "none" && a.kind != "csv" && a.size == 0) throw ConfigError("aux.size must be >= 1");
  if (a.kind == "glyph-digits") {
    if (a.classes.empty()) throw ConfigError("aux.classes: glyph-digits needs at least one class");
    for (int c : a.classes)
      if (c < 0 || c > 9) throw ConfigError("aux.classes: digit " + std::to_string(c) + " outside 0-9");
  }
}

ExperimentSpec parse_spec_text(const std::string& text, const std::string& origin,
                               const std::vector<std::string>& overrides) {
  std::vector<Entry> entries = parse_ini(text, origin);
  for (const auto& o : overrides) entries.push_back(parse_override(o));
  ExperimentSpec spec;
  std::string kind = spec.stream.kind;
  for (const auto& e : entries)
    if (e.section == "stream" && e.key == "kind") kind = e.value;
  apply_preset(spec, kind);
  const auto base_dir = std::filesystem::path(origin).parent_path();
  for (const auto& e : entries) apply_entry(spec, e, base_dir);
  spec.validate();
  return spec;
}

ExperimentSpec parse_spec(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open spec file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_spec_text(ss.str(), path.string(), overrides);
}

TaskStream build_stream(const StreamSpec& s) {
  Rng rng(s.data_seed);
  if (s.kind == "gaussian") {
    return split_class_stream(make_gaussian_dataset(s.classes, s.dim, s.separation, s.per_class, rng), s.tasks);
  }
  if (s.kind == "glyph-rotated") {
    Dataset base = make_glyph_digits(s.per_class, s.side, rng);
    return rotated_stream(base, s.tasks, rng);
  }
  Dataset base;
  if (s.kind == "idx") {
    base = load_idx(s.images, s.labels);
  } else if (s.kind == "csv") {
    base = load_csv(s.csv);
    if (s.image_side > 0) base.image_rows = base.image_cols = s.image_side;
  } else {
    throw ConfigError("stream.kind '" + s.kind + "' cannot be built");
  }
  if (s.scenario == "domain_il") return rotated_stream(base, s.tasks, rng);
  return split_class_stream(base, s.tasks);
}

AuxiliaryPool build_aux(const AuxSpec& a, const TaskStream& stream) {
  Rng rng(a.data_seed);
  const std::size_t dim = stream.dim();
  const auto& first = stream.tasks.front().train;
  const std::size_t target_side = first.is_image() && first.image_rows == first.image_cols ? first.image_rows : 0;
  AuxiliaryPool pool;
  std::size_t from_side = 0;
  if (a.kind == "gaussian") {
    pool = make_gaussian_pool(a.size, dim, a.centers, a.separation, a.spread, rng);
  } else if (a.kind == "scribble") {
    pool = make_scribble_pool(a.size, a.side, rng);
    from_side = a.side;
  } else if (a.kind == "glyph-digits") {
    const std::size_t per_class = std::max<std::size_t>(2, (a.size + a.classes.size() - 1) / a.classes.size());
    Dataset digits = make_glyph_digits(per_class, a.side, rng);
    pool = pool_from_classes(digits, a.classes, "glyph-digits");
    from_side = a.side;
  } else if (a.kind == "csv") {
    pool = load_aux_csv(a.csv);
    const auto side = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(pool.x.cols()))));
    if (side * side == pool.x.cols()) from_side = side;
  } else {
    throw ConfigError("aux.kind '" + a.kind + "' cannot be built");
  }
  pool.x = match_dimension(pool.x, from_side, dim, target_side);
  return pool;
}

RunOutput run_single(const ExperimentSpec& spec, const MethodVariant& method, std::uint64_t seed,
                     const TaskStream& stream, const AuxiliaryPool* aux, const std::filesystem::path& dir) {
  TrainConfig cfg = spec.train;
  cfg.method = method.method;
  cfg.use_selection = cfg.use_selection && method.use_selection;
  cfg.seed = seed;

  const std::string stem = run_stem(method.label, seed);
  std::ostringstream progress;
  progress << "task,epoch,mean_loss,lr,aux_share\n";
  EpochObserver observer = [&](const EpochRecord& r) {
    progress << (r.task + 1) << "," << (r.epoch + 1) << "," << fmt_real(r.mean_loss) << "," << fmt_real(r.lr) << ","
             << fmt_real(r.aux_share) << "\n";
    spdlog::debug("{} task {} epoch {} loss {:.5f} lr {}", stem, r.task + 1, r.epoch + 1, r.mean_loss, r.lr);
  };

  const auto start = std::chrono::steady_clock::now();
  ContinualResult result = run_continual(stream, method.method == Method::pfcl ? aux : nullptr, cfg, observer);
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const double nan = std::numeric_limits<double>::quiet_NaN();
  const bool forget_defined = stream.size() >= 2 && method.method != Method::jt;
  RunSummary summary;
  summary.method = method.label;
  summary.seed = seed;
  summary.protocol = stream.scenario == Scenario::class_il ? "class_il" : "domain_il";
  summary.acc = avg_accuracy(result.primary);
  summary.forget = forget_defined ? forgetting(result.primary) : nan;
  summary.acc_task_il = result.task_il ? avg_accuracy(*result.task_il) : nan;
  summary.forget_task_il = result.task_il && forget_defined ? forgetting(*result.task_il) : nan;
  summary.wall_time_s = wall;

  if (!dir.empty()) {
    std::filesystem::create_directories(dir);
    write_atomic(dir / (stem + ".matrix.csv"), eval_csv_string(result.primary));
    if (result.task_il) write_atomic(dir / (stem + ".task_il.csv"), eval_csv_string(*result.task_il));
    write_atomic(dir / (stem + ".progress.csv"), progress.str());
    json s;
    s["method"] = summary.method;
    s["seed"] = summary.seed;
    s["protocol"] = summary.protocol;
    s["acc"] = nan_to_null(summary.acc);
    s["forget"] = nan_to_null(summary.forget);
    s["acc_task_il"] = nan_to_null(summary.acc_task_il);
    s["forget_task_il"] = nan_to_null(summary.forget_task_il);
    s["wall_time_s"] = summary.wall_time_s;
    write_atomic(dir / (stem + ".summary.json"), s.dump(2) + "\n");
    json manifest = config_json(spec, method, seed);
    manifest["stream_digest"] = stream_digest(stream);
    if (aux != nullptr) manifest["aux_digest"] = sha256_hex({&aux->x}, {});
    write_atomic(dir / (stem + ".manifest.json"), manifest.dump(2) + "\n");
  }
  spdlog::info("{}: acc {:.4f}{} ({:.1f}s)", stem, summary.acc,
               std::isnan(summary.acc_task_il) ? std::string() : " task-il " + fmt_real(summary.acc_task_il), wall);
  return {summary, result.primary, result.task_il};
}

std::vector<RunOutput> run_experiment(const ExperimentSpec& spec, std::size_t workers) {
  spec.validate();
  if (workers == 0) {
    workers = 1;
    if (const char* env = std::getenv("PFCL_WORKERS")) {
      const long v = std::strtol(env, nullptr, 10);
      if (v < 1) throw ConfigError("PFCL_WORKERS must be a positive integer, got '" + std::string(env) + "'");
      workers = static_cast<std::size_t>(v);
    }
  }
  const TaskStream stream = build_stream(spec.stream);
  std::optional<AuxiliaryPool> aux;
  const bool needs_aux = std::any_of(spec.methods.begin(), spec.methods.end(),
                                     [](const MethodVariant& m) { return m.method == Method::pfcl; });
  if (needs_aux) aux = build_aux(spec.aux, stream);

  struct Job {
    const MethodVariant* method;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& m : spec.methods)
    for (auto seed : spec.seeds) jobs.push_back({&m, seed});

  std::vector<std::optional<RunOutput>> outputs(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        outputs[j] = run_single(spec, *jobs[j].method, jobs[j].seed, stream, aux ? &*aux : nullptr, spec.output);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t w = 1; w < std::min(workers, jobs.size()); ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);

  std::vector<RunOutput> results;
  std::vector<RunSummary> summaries;
  std::map<std::string, std::vector<EvalMatrix>> curves;
  for (auto& o : outputs) {
    summaries.push_back(o->summary);
    curves[o->summary.method].push_back(o->primary);
    results.push_back(std::move(*o));
  }
  if (!spec.output.empty()) {
    write_aggregate_csv(aggregate(summaries), spec.output / "summary.csv");
    emit_curves(curves, spec.output / "curves.csv");
  }
  return results;
}

std::vector<Aggregate> aggregate(const std::vector<RunSummary>& runs) {
  std::map<std::string, std::vector<const RunSummary*>> by_method;
  for (const auto& r : runs) by_method[r.method].push_back(&r);
  std::vector<Aggregate> rows;
  for (const auto& [method, group] : by_method) {
    auto collect = [&](auto field) {
      std::vector<double> v;
      for (const auto* r : group)
        if (!std::isnan(r->*field)) v.push_back(r->*field);
      return v;
    };
    auto acc = collect(&RunSummary::acc);
    auto fg = collect(&RunSummary::forget);
    rows.push_back({method, group.front()->protocol, group.size(), mean_of(acc), sample_std(acc), mean_of(fg), sample_std(fg)});
    auto acc_t = collect(&RunSummary::acc_task_il);
    if (!acc_t.empty()) {
      auto fg_t = collect(&RunSummary::forget_task_il);
      rows.push_back({method, "task_il", group.size(), mean_of(acc_t), sample_std(acc_t), mean_of(fg_t), sample_std(fg_t)});
    }
  }
  return rows;
}

void write_aggregate_csv(const std::vector<Aggregate>& rows, const std::filesystem::path& path) {
  std::ostringstream os;
  os << "method,protocol,runs,acc_mean,acc_std,forget_mean,forget_std\n";
  for (const auto& r : rows) {
    os << r.method << "," << r.protocol << "," << r.runs << "," << fmt_real(r.acc_mean) << "," << fmt_real(r.acc_std)
       << "," << fmt_real(r.forget_mean) << "," << fmt_real(r.forget_std) << "\n";
  }
  write_atomic(path, os.str());
}

std::string curves_csv_string(const std::map<std::string, std::vector<EvalMatrix>>& matrices) {
  std::size_t T = 0;
  for (const auto& [label, list] : matrices) {
    for (const auto& m : list) {
      if (T == 0) T = m.tasks();
      if (m.tasks() != T) throw DomainError("curves over matrices with different task counts (" + std::to_string(T) + " and " + std::to_string(m.tasks()) + ")");
    }
  }
  std::map<std::string, std::vector<std::vector<double>>> curves;
  for (const auto& [label, list] : matrices)
    for (const auto& m : list) curves[label].push_back(running_accuracy(m));
  std::ostringstream os;
  os << "step";
  for (const auto& [label, list] : curves) os << "," << label << "_mean," << label << "_std";
  os << "\n";
  for (std::size_t i = 0; i < T; ++i) {
    os << (i + 1);
    for (const auto& [label, list] : curves) {
      std::vector<double> v;
      for (const auto& c : list) v.push_back(c[i]);
      os << "," << fmt_real(mean_of(v)) << "," << fmt_real(sample_std(v));
    }
    os << "\n";
  }
  return os.str();
}

void emit_curves(const std::map<std::string, std::vector<EvalMatrix>>& matrices, const std::filesystem::path& path) {
  write_atomic(path, curves_csv_string(matrices));
}

std::string label_from_matrix_path(const std::filesystem::path& path) {
  const std::string name = path.filename().string();
  const auto pos = name.rfind("_seed");
  if (pos != std::string::npos) return name.substr(0, pos);
  const auto dot = name.find('.');
  return dot == std::string::npos ? name : name.substr(0, dot);
}

RunSummary read_summary_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  try {
    json j = json::parse(is);
    RunSummary r;
    r.method = j.at("method").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.protocol = j.at("protocol").get<std::string>();
    r.acc = null_to_nan(j.at("acc"));
    r.forget = null_to_nan(j.at("forget"));
    r.acc_task_il = null_to_nan(j.at("acc_task_il"));
    r.forget_task_il = null_to_nan(j.at("forget_task_il"));
    r.wall_time_s = j.at("wall_time_s").get<double>();
    return r;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<Aggregate> summarize_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw ConfigError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> summaries, matrices;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    auto ends_with = [&](const std::string& suffix) {
      return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
    };
    if (ends_with(".summary.json")) summaries.push_back(entry.path());
    if (ends_with(".matrix.csv")) matrices.push_back(entry.path());
  }
  std::sort(summaries.begin(), summaries.end());
  std::sort(matrices.begin(), matrices.end());
  if (summaries.empty()) throw DomainError("no *.summary.json files in " + dir.string());
  std::vector<RunSummary> runs;
  for (const auto& p : summaries) runs.push_back(read_summary_json(p));
  auto rows = aggregate(runs);
  write_aggregate_csv(rows, dir / "summary.csv");
  std::map<std::string, std::vector<EvalMatrix>> grouped;
  for (const auto& p : matrices) grouped[label_from_matrix_path(p)].push_back(read_eval_csv(p));
  if (!grouped.empty()) emit_curves(grouped, dir / "curves.csv");
  return rows;
}

}  // namespace pfcl
