#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pfcl/linalg.hpp"

namespace pfcl {

struct Dataset {
  Matrix x;                     // n x d
  std::vector<int> y;           // n labels, each < class_count
  std::size_t class_count = 0;
  std::size_t image_rows = 0;   // 0 when the features are not an image
  std::size_t image_cols = 0;

  std::size_t size() const noexcept { return y.size(); }
  std::size_t dim() const noexcept { return x.cols(); }
  bool is_image() const noexcept { return image_rows > 0 && image_cols > 0; }
  /// Throws DomainError when labels and rows disagree or a label is out of range.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

/// Concatenation of datasets with the same dimension; class_count is the max.
Dataset concat(std::span<const Dataset> parts);

enum class Scenario { class_il, domain_il };

struct Task {
  Dataset train;
  Dataset test;
  std::vector<int> class_subset;  // global class indices, ascending
  double angle = 0.0;             // rotation applied (domain-incremental only)
};

struct TaskStream {
  Scenario scenario = Scenario::class_il;
  std::vector<Task> tasks;
  std::size_t total_classes = 0;

  std::size_t size() const noexcept { return tasks.size(); }
  std::size_t dim() const noexcept { return tasks.front().train.dim(); }
  /// Checks the scenario invariants (disjoint subsets / shared label set).
  void validate() const;
};

/// Unlabeled samples from outside the task distribution.
struct AuxiliaryPool {
  Matrix x;
  std::string source_tag;

  std::size_t size() const noexcept { return x.rows(); }
};

/// Isotropic unit-variance Gaussian per class, centered on a random unit
/// direction scaled by `separation`. Samples are grouped by class.
Dataset make_gaussian_dataset(std::size_t class_count, std::size_t dim, double separation, std::size_t per_class,
                              Rng& rng);

/// Procedurally rendered handwriting-like digits 0-9 on a side x side canvas,
/// with random affine jitter, stroke width and pixel noise. Values in [0, 1].
Dataset make_glyph_digits(std::size_t per_class, std::size_t side, Rng& rng);

/// Stratified split: the first round(train_fraction * count) samples of each
/// class (in dataset order) go to train, the rest to test.
void stratified_split(const Dataset& base, double train_fraction, Dataset& train, Dataset& test);

/// Task i gets classes [i*C/T, (i+1)*C/T); 80/20 stratified split per class.
TaskStream split_class_stream(const Dataset& base, std::size_t t_count);

/// Rotation about the image center with bilinear interpolation; source
/// coordinates outside the image read as 0. Positive theta is
/// counter-clockwise as displayed (row 0 at the top).
Matrix rotate_image(const Matrix& img, double theta);

/// Domain-incremental stream: one angle per task drawn uniformly from [0, pi),
/// applied to every train and test image of that task.
TaskStream rotated_stream(const Dataset& base, std::size_t t_count, Rng& rng);
/// Same, with caller-chosen angles (one per task).
TaskStream rotated_stream(const Dataset& base, std::span<const double> angles);

/// IDX (big-endian, magic 0x803 images / 0x801 labels). Pixels scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// CSV with header `label,f0,f1,...`.
Dataset load_csv(const std::filesystem::path& path);
/// CSV with header `f0,f1,...` and no label column.
AuxiliaryPool load_aux_csv(const std::filesystem::path& path);

void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels);
void write_csv(const Dataset& data, const std::filesystem::path& path);

/// Dimension matching for auxiliary data: nearest-neighbour resize when both
/// sides are square images, truncate / zero-pad otherwise.
Matrix match_dimension(const Matrix& x, std::size_t from_side, std::size_t target_dim, std::size_t target_side);

/// Gaussian pool whose centers are drawn independently of any task class.
AuxiliaryPool make_gaussian_pool(std::size_t size, std::size_t dim, std::size_t centers, double separation,
                                 double spread, Rng& rng);
/// Random stroke scribbles rendered like the glyph digits.
AuxiliaryPool make_scribble_pool(std::size_t size, std::size_t side, Rng& rng);
/// Unlabeled view of the rows of `data` whose label is in `classes`.
AuxiliaryPool pool_from_classes(const Dataset& data, std::span<const int> classes, std::string tag);

/// Draws auxiliary rows without replacement; reshuffles when the pool is
/// exhausted, so every row is visited once per pass.
class AuxiliarySampler {
 public:
  AuxiliarySampler(const AuxiliaryPool& pool, Rng rng);
  Matrix sample(std::size_t n);

 private:
  void reshuffle();

  const AuxiliaryPool* pool_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// One-shot helper: a fresh sampler drawing n rows.
Matrix sample_auxiliary(const AuxiliaryPool& pool, std::size_t n, Rng& rng);

}  // namespace pfcl
