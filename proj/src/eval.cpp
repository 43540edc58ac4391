#include "pfcl/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pfcl/errors.hpp"

namespace pfcl {

namespace {

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

EvalMatrix::EvalMatrix(Matrix a) : a_(std::move(a)) {
  if (a_.rows() != a_.cols()) throw ShapeError("evaluation matrix must be square, got " + a_.shape_string());
  for (double v : a_.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("accuracy " + shortest(v) + " outside [0, 1]");
  }
}

void EvalMatrix::set_row(std::size_t i, std::span<const double> row) {
  if (row.size() != tasks()) throw ShapeError("row of " + std::to_string(row.size()) + " for " + std::to_string(tasks()) + " tasks");
  for (double v : row)
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError("accuracy " + shortest(v) + " outside [0, 1]");
  std::copy(row.begin(), row.end(), a_.row(i).begin());
}

const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::class_il: return "class_il";
    case Protocol::task_il: return "task_il";
    case Protocol::domain_il: return "domain_il";
  }
  return "?";
}

double accuracy_from_logits(const Matrix& logits, std::span<const int> labels, std::span<const int> mask) {
  if (logits.rows() == 0) throw DomainError("accuracy on an empty test set");
  if (labels.size() != logits.rows()) throw ShapeError("labels do not match logits " + logits.shape_string());
  std::vector<char> allowed(logits.cols(), mask.empty() ? 1 : 0);
  for (int c : mask) {
    if (c < 0 || static_cast<std::size_t>(c) >= logits.cols()) throw DomainError("mask class " + std::to_string(c) + " out of range");
    allowed[static_cast<std::size_t>(c)] = 1;
  }
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int y = labels[i];
    if (!mask.empty() && (y < 0 || static_cast<std::size_t>(y) >= allowed.size() || !allowed[static_cast<std::size_t>(y)])) {
      throw DomainError("label " + std::to_string(y) + " is not in the task mask");
    }
    auto z = logits.row(i);
    std::size_t best = z.size();
    for (std::size_t c = 0; c < z.size(); ++c) {
      if (!allowed[c]) continue;
      if (best == z.size() || z[c] > z[best]) best = c;
    }
    if (static_cast<int>(best) == y) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

double accuracy(const MlpModel& model, const Dataset& test, std::span<const int> mask) {
  if (test.size() == 0) throw DomainError("accuracy on an empty test set");
  return accuracy_from_logits(predict(model, test.x), test.y, mask);
}

double avg_accuracy(const EvalMatrix& m) {
  const std::size_t T = m.tasks();
  if (T == 0) throw DomainError("empty evaluation matrix");
  double sum = 0.0;
  for (std::size_t t = 0; t < T; ++t) sum += m(T - 1, t);
  return sum / static_cast<double>(T);
}

double forgetting(const EvalMatrix& m) {
  const std::size_t T = m.tasks();
  if (T < 2) throw DomainError("forgetting needs at least 2 tasks");
  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < T; ++t) {
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < T; ++i) peak = std::max(peak, m(i, t));
    sum += peak - m(T - 1, t);
  }
  return sum / static_cast<double>(T - 1);
}

std::vector<double> evaluate_all(const MlpModel& model, const TaskStream& stream, Protocol protocol) {
  const bool domain = stream.scenario == Scenario::domain_il;
  if ((protocol == Protocol::domain_il) != domain) {
    throw ConfigError(std::string("protocol ") + to_string(protocol) + " does not fit a " +
                      (domain ? "domain" : "class") + "-incremental stream");
  }
  ProtocolRows rows = evaluate_protocols(model, stream);
  return protocol == Protocol::task_il ? rows.task_il : rows.primary;
}

ProtocolRows evaluate_protocols(const MlpModel& model, const TaskStream& stream) {
  const std::size_t T = stream.size();
  const bool class_il = stream.scenario == Scenario::class_il;
  ProtocolRows rows;
  rows.primary.assign(T, 0.0);
  if (class_il) rows.task_il.assign(T, 0.0);
  const auto n = static_cast<std::ptrdiff_t>(T);
  // Tasks are independent reads of a frozen model.
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t ti = 0; ti < n; ++ti) {
    const auto t = static_cast<std::size_t>(ti);
    const Task& task = stream.tasks[t];
    const Matrix logits = predict(model, task.test.x);
    rows.primary[t] = accuracy_from_logits(logits, task.test.y);
    if (class_il) rows.task_il[t] = accuracy_from_logits(logits, task.test.y, task.class_subset);
  }
  return rows;
}

std::string eval_csv_string(const EvalMatrix& m) {
  std::ostringstream os;
  os << "step";
  for (std::size_t t = 0; t < m.tasks(); ++t) os << ",task_" << (t + 1);
  os << "\n";
  for (std::size_t i = 0; i < m.tasks(); ++i) {
    os << (i + 1);
    for (std::size_t t = 0; t < m.tasks(); ++t) os << "," << shortest(m(i, t));
    os << "\n";
  }
  return os.str();
}

void write_eval_csv(const EvalMatrix& m, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string());
  os << eval_csv_string(m);
  if (!os) throw FormatError("write failed for " + path.string());
}

EvalMatrix read_eval_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line.rfind("step", 0) != 0) throw FormatError(path.string() + ":1: expected header step,task_1,...");
  const auto T = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  if (T == 0) throw FormatError(path.string() + ":1: no task columns");
  Matrix a(T, T);
  std::size_t r = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (r >= T) throw FormatError(path.string() + ":" + std::to_string(r + 2) + ": more rows than tasks");
    std::istringstream ss(line);
    std::string field;
    std::getline(ss, field, ',');
    for (std::size_t t = 0; t < T; ++t) {
      if (!std::getline(ss, field, ',')) throw FormatError(path.string() + ":" + std::to_string(r + 2) + ": short row");
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc()) throw FormatError(path.string() + ":" + std::to_string(r + 2) + ": bad number '" + field + "'");
      a(r, t) = v;
    }
    ++r;
  }
  if (r != T) throw FormatError(path.string() + ": expected " + std::to_string(T) + " rows, got " + std::to_string(r));
  return EvalMatrix(std::move(a));
}

std::vector<double> running_accuracy(const EvalMatrix& m) {
  std::vector<double> curve(m.tasks());
  for (std::size_t i = 0; i < m.tasks(); ++i) {
    double sum = 0.0;
    for (std::size_t t = 0; t <= i; ++t) sum += m(i, t);
    curve[i] = sum / static_cast<double>(i + 1);
  }
  return curve;
}

}  // namespace pfcl
