#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "pfcl/errors.hpp"
#include "pfcl/tasks.hpp"

namespace pfcl {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kIdxClassCount = 10;

std::vector<unsigned char> read_bytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path.string() + ": truncated header at byte " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  os.write(b, 4);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    if (!field.empty() && field.back() == '\r') field.pop_back();
    out.push_back(field);
  }
  return out;
}

double parse_double(const std::string& s, const std::filesystem::path& path, std::size_t line) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  while (first < last && *first == ' ') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw FormatError(path.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
  }
  return v;
}

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Rows of numbers after a header; the header's field count fixes the width.
std::vector<std::vector<double>> read_numeric_csv(const std::filesystem::path& path, std::vector<std::string>& header) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw FormatError(path.string() + ": missing header");
  header = split_commas(line);
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_commas(line);
    if (fields.size() != header.size()) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                        " fields, got " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_double(f, path, line_no));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_bytes(images);
  const auto lab = read_bytes(labels);
  if (be32(img, 0, images) != kIdxImagesMagic) throw FormatError(images.string() + ": bad magic at byte 0");
  if (be32(lab, 0, labels) != kIdxLabelsMagic) throw FormatError(labels.string() + ": bad magic at byte 0");
  const std::size_t n = be32(img, 4, images);
  const std::size_t rows = be32(img, 8, images);
  const std::size_t cols = be32(img, 12, images);
  const std::size_t n_labels = be32(lab, 4, labels);
  if (n != n_labels) {
    throw FormatError(labels.string() + ": label count " + std::to_string(n_labels) + " at byte 4 vs " +
                      std::to_string(n) + " images");
  }
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels) {
    throw FormatError(images.string() + ": truncated at byte " + std::to_string(img.size()) + ", expected " +
                      std::to_string(16 + n * pixels));
  }
  if (lab.size() < 8 + n) {
    throw FormatError(labels.string() + ": truncated at byte " + std::to_string(lab.size()) + ", expected " +
                      std::to_string(8 + n));
  }
  Dataset d;
  d.class_count = kIdxClassCount;
  d.image_rows = rows;
  d.image_cols = cols;
  d.x = Matrix(n, pixels);
  d.y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char label = lab[8 + i];
    if (label >= kIdxClassCount) {
      throw FormatError(labels.string() + ": label " + std::to_string(label) + " at byte " + std::to_string(8 + i));
    }
    d.y[i] = label;
    auto row = d.x.row(i);
    for (std::size_t p = 0; p < pixels; ++p) row[p] = img[16 + i * pixels + p] / 255.0;
  }
  return d;
}

void write_idx(const Dataset& data, const std::filesystem::path& images, const std::filesystem::path& labels) {
  if (!data.is_image()) throw DomainError("write_idx needs a declared image shape");
  std::ofstream im(images, std::ios::binary);
  std::ofstream lb(labels, std::ios::binary);
  if (!im || !lb) throw FormatError("cannot open IDX output files");
  put_be32(im, kIdxImagesMagic);
  put_be32(im, static_cast<std::uint32_t>(data.size()));
  put_be32(im, static_cast<std::uint32_t>(data.image_rows));
  put_be32(im, static_cast<std::uint32_t>(data.image_cols));
  for (double v : data.x.data()) {
    const long q = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    im.put(static_cast<char>(q));
  }
  put_be32(lb, kIdxLabelsMagic);
  put_be32(lb, static_cast<std::uint32_t>(data.size()));
  for (int y : data.y) lb.put(static_cast<char>(y));
}

Dataset load_csv(const std::filesystem::path& path) {
  std::vector<std::string> header;
  auto rows = read_numeric_csv(path, header);
  if (header.size() < 2 || header.front() != "label") {
    throw FormatError(path.string() + ":1: header must be label,f0,f1,...");
  }
  Dataset d;
  d.x = Matrix(rows.size(), header.size() - 1);
  d.y.resize(rows.size());
  int max_label = -1;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const double label = rows[i][0];
    if (label < 0 || label != std::floor(label)) {
      throw FormatError(path.string() + ":" + std::to_string(i + 2) + ": label must be a non-negative integer");
    }
    d.y[i] = static_cast<int>(label);
    max_label = std::max(max_label, d.y[i]);
    std::copy(rows[i].begin() + 1, rows[i].end(), d.x.row(i).begin());
  }
  d.class_count = static_cast<std::size_t>(max_label + 1);
  return d;
}

AuxiliaryPool load_aux_csv(const std::filesystem::path& path) {
  std::vector<std::string> header;
  auto rows = read_numeric_csv(path, header);
  if (!header.empty() && header.front() == "label") {
    throw FormatError(path.string() + ":1: auxiliary pools carry no label column");
  }
  AuxiliaryPool pool;
  pool.source_tag = path.filename().string();
  pool.x = Matrix(rows.size(), header.size());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(rows[i].begin(), rows[i].end(), pool.x.row(i).begin());
  return pool;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot open " + path.string());
  os << "label";
  for (std::size_t j = 0; j < data.dim(); ++j) os << ",f" << j;
  os << "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.y[i];
    for (double v : data.x.row(i)) os << "," << shortest(v);
    os << "\n";
  }
}

}  // namespace pfcl
