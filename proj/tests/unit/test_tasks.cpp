#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>
#include <vector>

#include "../oracles.hpp"
#include "pfcl/errors.hpp"
#include "pfcl/tasks.hpp"

using namespace pfcl;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("pfcl_test_" + name); }

Dataset tiny_images(std::size_t n, Rng& rng) {
  Dataset d;
  d.class_count = 10;
  d.image_rows = d.image_cols = 4;
  d.x = Matrix(n, 16);
  for (std::size_t i = 0; i < n; ++i) {
    // Multiples of 1/255 survive the byte round trip exactly.
    for (double& v : d.x.row(i)) v = static_cast<double>(rng.below(256)) / 255.0;
    d.y.push_back(static_cast<int>(i % 10));
  }
  return d;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("gaussian dataset layout and determinism") {
  Rng a(5), b(5);
  Dataset d = make_gaussian_dataset(4, 6, 3.0, 20, a);
  CHECK(d.size() == 80);
  CHECK(d.dim() == 6);
  CHECK(d.class_count == 4);
  CHECK(d.y[0] == 0);
  CHECK(d.y[79] == 3);
  CHECK_NOTHROW(d.validate());
  CHECK(make_gaussian_dataset(4, 6, 3.0, 20, b).x == d.x);
}

TEST_CASE("gaussian class means sit at the requested distance") {
  Rng rng(6);
  Dataset d = make_gaussian_dataset(3, 5, 8.0, 4000, rng);
  for (std::size_t c = 0; c < 3; ++c) {
    std::vector<double> mean(5, 0.0);
    for (std::size_t i = 0; i < 4000; ++i)
      for (std::size_t j = 0; j < 5; ++j) mean[j] += d.x(c * 4000 + i, j) / 4000.0;
    double norm = 0.0;
    for (double m : mean) norm += m * m;
    CHECK(std::sqrt(norm) == doctest::Approx(8.0).epsilon(0.02));
  }
}

TEST_CASE("gaussian generator argument checks") {
  Rng rng(1);
  CHECK_THROWS_AS(make_gaussian_dataset(1, 4, 1.0, 5, rng), DomainError);
  CHECK_THROWS_AS(make_gaussian_dataset(3, 4, -1.0, 5, rng), DomainError);
}

TEST_CASE("class stream partitions the label set") {
  Rng rng(2);
  Dataset d = make_gaussian_dataset(10, 4, 3.0, 10, rng);
  TaskStream s = split_class_stream(d, 5);
  CHECK_NOTHROW(s.validate());
  CHECK(s.size() == 5);
  CHECK(s.total_classes == 10);
  std::set<int> all;
  for (std::size_t t = 0; t < 5; ++t) {
    CHECK(s.tasks[t].class_subset == std::vector<int>{static_cast<int>(2 * t), static_cast<int>(2 * t + 1)});
    CHECK(s.tasks[t].train.size() == 16);
    CHECK(s.tasks[t].test.size() == 4);
    for (int y : s.tasks[t].train.y) CHECK((y == static_cast<int>(2 * t) || y == static_cast<int>(2 * t + 1)));
    all.insert(s.tasks[t].class_subset.begin(), s.tasks[t].class_subset.end());
  }
  CHECK(all.size() == 10);
  CHECK_THROWS_AS(split_class_stream(d, 3), DomainError);
}

TEST_CASE("overlapping class subsets are rejected") {
  Rng rng(3);
  TaskStream s = split_class_stream(make_gaussian_dataset(4, 3, 3.0, 5, rng), 2);
  s.tasks[1].class_subset = {1, 2};
  CHECK_THROWS_AS(s.validate(), DomainError);
}

TEST_CASE("rotation by zero is the identity") {
  Rng rng(4);
  Matrix img(9, 9);
  for (double& v : img.data()) v = rng.uniform();
  CHECK(rotate_image(img, 0.0) == img);
}

TEST_CASE("rotation matches the brute-force bilinear reference") {
  Rng rng(5);
  Matrix img(8, 8);
  for (double& v : img.data()) v = rng.uniform();
  for (double theta : {0.3, std::numbers::pi / 4, 1.9, 3.0}) {
    Matrix got = rotate_image(img, theta), ref = oracle::rotate_brute(img, theta);
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got.data()[i] == doctest::Approx(ref.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("quarter turn is counter-clockwise as displayed") {
  Matrix img(5, 5);
  img(2, 4) = 1.0;  // right of center
  Matrix r = rotate_image(img, std::numbers::pi / 2);
  CHECK(r(0, 2) == doctest::Approx(1.0));  // now above center
  CHECK(r(2, 4) == doctest::Approx(0.0));
}

TEST_CASE("rotation preserves the mass of a smooth bump") {
  Matrix img(32, 32);
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c) {
      const double dy = static_cast<double>(r) - 12.0, dx = static_cast<double>(c) - 19.0;
      img(r, c) = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
    }
  double before = 0.0, after = 0.0;
  for (double v : img.data()) before += v;
  const Matrix rotated = rotate_image(img, std::numbers::pi / 4);
  for (double v : rotated.data()) after += v;
  CHECK(std::abs(after - before) <= 0.02 * before);
}

TEST_CASE("single-pixel impulse at the center spreads into its four neighbours") {
  // The center maps to itself; each edge neighbour back-projects to
  // (1/sqrt2, 1/sqrt2) from the impulse and picks up (1 - 1/sqrt2)^2.
  Matrix img(15, 15);
  img(7, 7) = 1.0;
  double mass = 0.0;
  const Matrix rotated = rotate_image(img, std::numbers::pi / 4);
  for (double v : rotated.data()) mass += v;
  const double edge = (1.0 - 1.0 / std::numbers::sqrt2) * (1.0 - 1.0 / std::numbers::sqrt2);
  CHECK(mass == doctest::Approx(1.0 + 4.0 * edge).epsilon(1e-12));
}

TEST_CASE("rotated stream shares labels and applies one angle per task") {
  Rng rng(6);
  Dataset d = make_glyph_digits(6, 8, rng);
  CHECK(d.is_image());
  std::vector<double> angles{0.0, 1.0, 2.0};
  TaskStream s = rotated_stream(d, angles);
  CHECK(s.scenario == Scenario::domain_il);
  CHECK_NOTHROW(s.validate());
  for (std::size_t t = 0; t < 3; ++t) {
    CHECK(s.tasks[t].angle == angles[t]);
    CHECK(s.tasks[t].class_subset.size() == 10);
  }
  Matrix first(8, 8, std::vector<double>(s.tasks[1].train.x.row(0).begin(), s.tasks[1].train.x.row(0).end()));
  Matrix base(8, 8, std::vector<double>(s.tasks[0].train.x.row(0).begin(), s.tasks[0].train.x.row(0).end()));
  CHECK(rotate_image(base, 1.0) == first);

  Rng r2(7);
  TaskStream random = rotated_stream(d, 4, r2);
  for (const auto& t : random.tasks) CHECK((t.angle >= 0.0 && t.angle < std::numbers::pi));

  Dataset flat = d;
  flat.image_rows = flat.image_cols = 0;
  CHECK_THROWS_AS(rotated_stream(flat, angles), DomainError);
}

TEST_CASE("glyph digits are in range and deterministic") {
  Rng a(8), b(8);
  Dataset d = make_glyph_digits(3, 12, a);
  CHECK(d.size() == 30);
  CHECK(d.dim() == 144);
  for (double v : d.x.data()) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(make_glyph_digits(3, 12, b).x == d.x);
}

TEST_CASE("idx round trip") {
  Rng rng(9);
  Dataset d = tiny_images(25, rng);
  auto img = temp_path("img.idx"), lab = temp_path("lab.idx");
  write_idx(d, img, lab);
  Dataset back = load_idx(img, lab);
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);
  CHECK(back.image_rows == 4);
  CHECK(back.class_count == 10);
  fs::remove(img);
  fs::remove(lab);
}

TEST_CASE("idx format errors") {
  Rng rng(10);
  Dataset d = tiny_images(5, rng);
  auto img = temp_path("bad_img.idx"), lab = temp_path("bad_lab.idx");
  write_idx(d, img, lab);
  const auto good_labels = read_bytes(lab);
  const auto good_images = read_bytes(img);

  auto bad = good_labels;
  bad[8 + 2] = 10;
  write_bytes(lab, bad);
  CHECK_THROWS_AS(load_idx(img, lab), FormatError);
  try {
    load_idx(img, lab);
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte 10") != std::string::npos);
  }

  write_bytes(lab, good_labels);
  auto truncated = good_images;
  truncated.resize(truncated.size() - 3);
  write_bytes(img, truncated);
  CHECK_THROWS_AS(load_idx(img, lab), FormatError);

  auto wrong_magic = good_images;
  wrong_magic[3] = 0x01;
  write_bytes(img, wrong_magic);
  CHECK_THROWS_AS(load_idx(img, lab), FormatError);

  write_bytes(img, good_images);
  auto short_count = good_labels;
  short_count[7] = 4;
  short_count.pop_back();
  write_bytes(lab, short_count);
  CHECK_THROWS_AS(load_idx(img, lab), FormatError);

  fs::remove(img);
  fs::remove(lab);
}

TEST_CASE("csv round trip and errors") {
  Rng rng(11);
  Dataset d = make_gaussian_dataset(3, 4, 2.0, 5, rng);
  auto p = temp_path("data.csv");
  write_csv(d, p);
  Dataset back = load_csv(p);
  CHECK(back.x == d.x);
  CHECK(back.y == d.y);

  {
    std::ofstream out(p, std::ios::trunc);
    out << "label,f0,f1\n0,1.0,2.0\n1,oops,3\n";
  }
  CHECK_THROWS_AS(load_csv(p), FormatError);
  {
    std::ofstream out(p, std::ios::trunc);
    out << "label,f0,f1\n0,1.0\n";
  }
  CHECK_THROWS_AS(load_csv(p), FormatError);
  {
    std::ofstream out(p, std::ios::trunc);
    out << "f0,f1\n1.0,2.0\n3,4\n";
  }
  AuxiliaryPool pool = load_aux_csv(p);
  CHECK(pool.size() == 2);
  CHECK(pool.x(1, 1) == 4.0);
  fs::remove(p);
}

TEST_CASE("auxiliary sampler visits every row once per pass") {
  Rng rng(12);
  AuxiliaryPool pool;
  pool.x = Matrix(10, 1);
  for (std::size_t i = 0; i < 10; ++i) pool.x(i, 0) = static_cast<double>(i);
  AuxiliarySampler sampler(pool, rng.split());
  std::multiset<double> seen;
  for (int k = 0; k < 5; ++k) {
    Matrix m = sampler.sample(4);
    CHECK(m.rows() == 4);
    for (double v : m.data()) seen.insert(v);
  }
  // 20 draws = exactly two passes.
  for (int i = 0; i < 10; ++i) CHECK(seen.count(static_cast<double>(i)) == 2);
}

TEST_CASE("gaussian pool is disjoint in origin and sized as asked") {
  Rng rng(13);
  AuxiliaryPool p = make_gaussian_pool(50, 7, 5, 4.0, 1.0, rng);
  CHECK(p.size() == 50);
  CHECK(p.x.cols() == 7);
  CHECK(p.x.all_finite());
  CHECK_THROWS_AS(make_gaussian_pool(0, 7, 5, 4.0, 1.0, rng), DomainError);
}

TEST_CASE("pool from held-out classes carries no labels from the stream") {
  Rng rng(14);
  Dataset d = make_gaussian_dataset(4, 3, 2.0, 6, rng);
  std::vector<int> classes{3};
  AuxiliaryPool p = pool_from_classes(d, classes, "held-out");
  CHECK(p.size() == 6);
  CHECK(p.source_tag == "held-out");
  std::vector<int> missing{9};
  CHECK_THROWS_AS(pool_from_classes(d, missing, "none"), DomainError);
}

TEST_CASE("dimension matching") {
  Matrix sq(1, 4, std::vector<double>{1, 2, 3, 4});
  Matrix up = match_dimension(sq, 2, 16, 4);
  CHECK(up.cols() == 16);
  CHECK(up(0, 0) == 1);
  CHECK(up(0, 15) == 4);
  Matrix flat(1, 3, std::vector<double>{1, 2, 3});
  CHECK(match_dimension(flat, 0, 2, 0) == Matrix(1, 2, std::vector<double>{1, 2}));
  CHECK(match_dimension(flat, 0, 5, 0) == Matrix(1, 5, std::vector<double>{1, 2, 3, 0, 0}));
}
