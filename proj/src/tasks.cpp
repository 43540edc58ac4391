#include "pfcl/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "pfcl/errors.hpp"

namespace pfcl {

void Dataset::validate() const {
  if (y.size() != x.rows()) {
    throw DomainError(std::to_string(y.size()) + " labels for " + std::to_string(x.rows()) + " samples");
  }
  for (int label : y) {
    if (label < 0 || static_cast<std::size_t>(label) >= class_count) {
      throw DomainError("label " + std::to_string(label) + " outside [0, " + std::to_string(class_count) + ")");
    }
  }
  if (is_image() && image_rows * image_cols != x.cols()) {
    throw DomainError("declared image " + std::to_string(image_rows) + "x" + std::to_string(image_cols) +
                      " for feature dim " + std::to_string(x.cols()));
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x = x.gather_rows(rows);
  out.y.reserve(rows.size());
  for (auto r : rows) out.y.push_back(y[r]);
  out.class_count = class_count;
  out.image_rows = image_rows;
  out.image_cols = image_cols;
  return out;
}

Dataset concat(std::span<const Dataset> parts) {
  Dataset out;
  if (parts.empty()) return out;
  out.image_rows = parts.front().image_rows;
  out.image_cols = parts.front().image_cols;
  for (const auto& p : parts) {
    if (out.x.rows() > 0 && p.x.rows() > 0 && p.dim() != out.dim()) {
      throw ShapeError("concatenating datasets of dim " + std::to_string(out.dim()) + " and " + std::to_string(p.dim()));
    }
    out.x = vstack(out.x, p.x);
    out.y.insert(out.y.end(), p.y.begin(), p.y.end());
    out.class_count = std::max(out.class_count, p.class_count);
  }
  return out;
}

void TaskStream::validate() const {
  if (tasks.empty()) throw DomainError("task stream is empty");
  if (scenario == Scenario::class_il) {
    std::set<int> seen;
    for (const auto& t : tasks) {
      for (int c : t.class_subset) {
        if (c < 0 || static_cast<std::size_t>(c) >= total_classes) {
          throw DomainError("class " + std::to_string(c) + " outside the stream's " + std::to_string(total_classes));
        }
        if (!seen.insert(c).second) throw DomainError("class " + std::to_string(c) + " appears in two tasks");
      }
    }
  } else {
    for (const auto& t : tasks) {
      if (t.class_subset != tasks.front().class_subset) {
        throw DomainError("domain-incremental tasks must share one label set");
      }
    }
  }
  for (const auto& t : tasks) {
    t.train.validate();
    t.test.validate();
  }
}

Dataset make_gaussian_dataset(std::size_t class_count, std::size_t dim, double separation, std::size_t per_class,
                              Rng& rng) {
  if (class_count < 2) throw DomainError("need at least 2 classes");
  if (dim < 2) throw DomainError("need dim >= 2");
  if (per_class < 2) throw DomainError("need at least 2 samples per class");
  if (!(separation >= 0.0)) throw DomainError("separation must be >= 0");

  Matrix means(class_count, dim);
  for (std::size_t c = 0; c < class_count; ++c) {
    auto m = means.row(c);
    double norm = 0.0;
    do {
      norm = 0.0;
      for (double& v : m) {
        v = rng.normal();
        norm += v * v;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (double& v : m) v = v / norm * separation;
  }

  Dataset d;
  d.class_count = class_count;
  d.x = Matrix(class_count * per_class, dim);
  d.y.reserve(class_count * per_class);
  for (std::size_t c = 0; c < class_count; ++c) {
    for (std::size_t k = 0; k < per_class; ++k) {
      auto row = d.x.row(c * per_class + k);
      auto m = means.row(c);
      for (std::size_t j = 0; j < dim; ++j) row[j] = m[j] + rng.normal();
      d.y.push_back(static_cast<int>(c));
    }
  }
  return d;
}

void stratified_split(const Dataset& base, double train_fraction, Dataset& train, Dataset& test) {
  std::vector<std::vector<std::size_t>> by_class(base.class_count);
  for (std::size_t i = 0; i < base.size(); ++i) by_class[static_cast<std::size_t>(base.y[i])].push_back(i);
  std::vector<std::size_t> train_rows, test_rows;
  for (const auto& rows : by_class) {
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(rows.size())));
    for (std::size_t k = 0; k < rows.size(); ++k) (k < n_train ? train_rows : test_rows).push_back(rows[k]);
  }
  std::sort(train_rows.begin(), train_rows.end());
  std::sort(test_rows.begin(), test_rows.end());
  train = base.subset(train_rows);
  test = base.subset(test_rows);
}

TaskStream split_class_stream(const Dataset& base, std::size_t t_count) {
  base.validate();
  if (t_count == 0 || base.class_count % t_count != 0) {
    throw DomainError(std::to_string(base.class_count) + " classes cannot be split evenly into " +
                      std::to_string(t_count) + " tasks");
  }
  const std::size_t per_task = base.class_count / t_count;
  TaskStream stream;
  stream.scenario = Scenario::class_il;
  stream.total_classes = base.class_count;
  for (std::size_t t = 0; t < t_count; ++t) {
    Task task;
    std::vector<std::size_t> rows;
    for (std::size_t c = t * per_task; c < (t + 1) * per_task; ++c) task.class_subset.push_back(static_cast<int>(c));
    for (std::size_t i = 0; i < base.size(); ++i) {
      const auto label = static_cast<std::size_t>(base.y[i]);
      if (label >= t * per_task && label < (t + 1) * per_task) rows.push_back(i);
    }
    if (rows.empty()) throw DomainError("task " + std::to_string(t) + " has no samples");
    stratified_split(base.subset(rows), 0.8, task.train, task.test);
    stream.tasks.push_back(std::move(task));
  }
  stream.validate();
  return stream;
}

Matrix rotate_image(const Matrix& img, double theta) {
  const std::size_t h = img.rows();
  const std::size_t w = img.cols();
  if (h < 2 || w < 2) throw DomainError("rotate_image needs at least a 2x2 image, got " + img.shape_string());
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  auto pixel = [&](std::ptrdiff_t r, std::ptrdiff_t c) -> double {
    if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(h) || c >= static_cast<std::ptrdiff_t>(w)) return 0.0;
    return img(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
  };
  Matrix out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      const double dx = static_cast<double>(c) - cx;
      const double dy = static_cast<double>(r) - cy;
      const double sx = cx + cs * dx - sn * dy;
      const double sy = cy + sn * dx + cs * dy;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      const auto x0 = static_cast<std::ptrdiff_t>(fx);
      const auto y0 = static_cast<std::ptrdiff_t>(fy);
      double v = (1.0 - ay) * ((1.0 - ax) * pixel(y0, x0));
      if (ax != 0.0) v += (1.0 - ay) * (ax * pixel(y0, x0 + 1));
      if (ay != 0.0) {
        v += ay * ((1.0 - ax) * pixel(y0 + 1, x0));
        if (ax != 0.0) v += ay * (ax * pixel(y0 + 1, x0 + 1));
      }
      out(r, c) = v;
    }
  }
  return out;
}

namespace {

Dataset rotate_dataset(const Dataset& d, double theta) {
  Dataset out = d;
  Matrix img(d.image_rows, d.image_cols);
  for (std::size_t i = 0; i < d.size(); ++i) {
    auto src = d.x.row(i);
    std::copy(src.begin(), src.end(), img.data().begin());
    Matrix rotated = rotate_image(img, theta);
    std::copy(rotated.data().begin(), rotated.data().end(), out.x.row(i).begin());
  }
  return out;
}

}  // namespace

TaskStream rotated_stream(const Dataset& base, std::size_t t_count, Rng& rng) {
  if (t_count == 0) throw DomainError("need at least one task");
  std::vector<double> angles(t_count);
  for (double& a : angles) a = rng.uniform(0.0, std::numbers::pi);
  return rotated_stream(base, angles);
}

TaskStream rotated_stream(const Dataset& base, std::span<const double> angles) {
  base.validate();
  if (!base.is_image()) throw DomainError("rotated_stream needs a declared image shape");
  if (base.image_rows != base.image_cols) {
    throw DomainError("rotated_stream needs square images, got " + std::to_string(base.image_rows) + "x" +
                      std::to_string(base.image_cols));
  }
  if (angles.empty()) throw DomainError("need at least one task");
  Dataset train, test;
  stratified_split(base, 0.8, train, test);
  std::vector<int> labels;
  for (std::size_t c = 0; c < base.class_count; ++c) labels.push_back(static_cast<int>(c));

  TaskStream stream;
  stream.scenario = Scenario::domain_il;
  stream.total_classes = base.class_count;
  for (double theta : angles) {
    Task task;
    task.angle = theta;
    task.class_subset = labels;
    task.train = theta == 0.0 ? train : rotate_dataset(train, theta);
    task.test = theta == 0.0 ? test : rotate_dataset(test, theta);
    stream.tasks.push_back(std::move(task));
  }
  stream.validate();
  return stream;
}

Matrix match_dimension(const Matrix& x, std::size_t from_side, std::size_t target_dim, std::size_t target_side) {
  if (x.cols() == target_dim) return x;
  Matrix out(x.rows(), target_dim);
  const bool images = from_side > 0 && target_side > 0 && from_side * from_side == x.cols() &&
                      target_side * target_side == target_dim;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto src = x.row(i);
    auto dst = out.row(i);
    if (images) {
      for (std::size_t r = 0; r < target_side; ++r) {
        const std::size_t sr = std::min(from_side - 1, r * from_side / target_side);
        for (std::size_t c = 0; c < target_side; ++c) {
          const std::size_t sc = std::min(from_side - 1, c * from_side / target_side);
          dst[r * target_side + c] = src[sr * from_side + sc];
        }
      }
    } else {
      std::copy_n(src.begin(), std::min(src.size(), dst.size()), dst.begin());
    }
  }
  return out;
}

AuxiliaryPool make_gaussian_pool(std::size_t size, std::size_t dim, std::size_t centers, double separation,
                                 double spread, Rng& rng) {
  if (size == 0) throw DomainError("auxiliary pool size must be >= 1");
  if (centers == 0) throw DomainError("auxiliary pool needs at least one center");
  Matrix means(centers, dim);
  for (std::size_t c = 0; c < centers; ++c) {
    auto m = means.row(c);
    double norm = 0.0;
    for (double& v : m) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : m) v = norm > 0.0 ? v / norm * separation : 0.0;
  }
  AuxiliaryPool pool;
  pool.source_tag = "gaussian-pool";
  pool.x = Matrix(size, dim);
  for (std::size_t i = 0; i < size; ++i) {
    auto m = means.row(i % centers);
    auto row = pool.x.row(i);
    for (std::size_t j = 0; j < dim; ++j) row[j] = m[j] + spread * rng.normal();
  }
  return pool;
}

AuxiliaryPool pool_from_classes(const Dataset& data, std::span<const int> classes, std::string tag) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (std::find(classes.begin(), classes.end(), data.y[i]) != classes.end()) rows.push_back(i);
  }
  if (rows.empty()) throw DomainError("no samples of the requested classes for the auxiliary pool");
  return {data.x.gather_rows(rows), std::move(tag)};
}

AuxiliarySampler::AuxiliarySampler(const AuxiliaryPool& pool, Rng rng) : pool_(&pool), rng_(rng) {
  if (pool.size() == 0) throw DomainError("auxiliary pool is empty");
  order_.resize(pool.size());
  reshuffle();
}

void AuxiliarySampler::reshuffle() {
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  rng_.shuffle(order_);
  cursor_ = 0;
}

Matrix AuxiliarySampler::sample(std::size_t n) {
  std::vector<std::size_t> rows;
  rows.reserve(n);
  while (rows.size() < n) {
    if (cursor_ == order_.size()) reshuffle();
    rows.push_back(order_[cursor_++]);
  }
  return pool_->x.gather_rows(rows);
}

Matrix sample_auxiliary(const AuxiliaryPool& pool, std::size_t n, Rng& rng) {
  AuxiliarySampler sampler(pool, rng.split());
  return sampler.sample(n);
}

}  // namespace pfcl
