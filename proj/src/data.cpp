#include "ccnn/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace ccnn {

// ---------------------------------------------------------------------------
// Dataset

Dataset::Dataset(Matrix inputs, Matrix targets, TaskKind task)
    : inputs_(std::move(inputs)), targets_(std::move(targets)), task_(task) {
  if (inputs_.rows() != targets_.rows()) {
    throw DataError("Dataset: " + std::to_string(inputs_.rows()) + " input rows but " +
                    std::to_string(targets_.rows()) + " target rows");
  }
  if (!inputs_.all_finite()) throw DataError("Dataset: non-finite input value");
  if (task_ == TaskKind::binary && targets_.cols() != 1) throw DataError("Dataset: binary targets must have one column");
  for (std::size_t r = 0; r < targets_.rows(); ++r) {
    double ones = 0.0;
    for (double t : targets_.row(r)) {
      if (t != 0.0 && t != 1.0) throw DataError("Dataset: target in row " + std::to_string(r) + " is not 0/1");
      ones += t;
    }
    if (task_ == TaskKind::categorical && ones != 1.0) {
      throw DataError("Dataset: categorical target in row " + std::to_string(r) + " is not one-hot");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Matrix x(rows.size(), input_dim());
  Matrix y(rows.size(), output_dim());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= size()) throw ConfigError("Dataset::subset: row index out of range");
    std::copy_n(inputs_.row(rows[i]).begin(), input_dim(), x.row(i).begin());
    std::copy_n(targets_.row(rows[i]).begin(), output_dim(), y.row(i).begin());
  }
  return Dataset(std::move(x), std::move(y), task_);
}

std::size_t Dataset::label_of(std::size_t row) const {
  auto t = targets_.row(row);
  return static_cast<std::size_t>(std::max_element(t.begin(), t.end()) - t.begin());
}

void standardize_inputs(Matrix& inputs) {
  const std::size_t n = inputs.rows();
  if (n == 0) return;
  for (std::size_t c = 0; c < inputs.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += inputs(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (inputs(r, c) - mean) * (inputs(r, c) - mean);
    var /= static_cast<double>(n);
    const double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (std::size_t r = 0; r < n; ++r) inputs(r, c) = (inputs(r, c) - mean) / sd;
  }
}

// ---------------------------------------------------------------------------
// Two spirals

std::string_view to_string(SpiralVariant v) {
  switch (v) {
    case SpiralVariant::easy: return "easy";
    case SpiralVariant::medium: return "medium";
    case SpiralVariant::difficult: return "difficult";
  }
  return "unknown";
}

SpiralVariant spiral_variant_from_string(std::string_view s) {
  if (s == "easy") return SpiralVariant::easy;
  if (s == "medium") return SpiralVariant::medium;
  if (s == "difficult") return SpiralVariant::difficult;
  throw ConfigError("unknown spiral variant '" + std::string(s) + "' (expected easy|medium|difficult)");
}

SpiralSpec SpiralSpec::defaults(SpiralVariant variant, std::uint64_t seed) {
  constexpr double pi = std::numbers::pi;
  SpiralSpec s;
  s.variant = variant;
  s.theta0 = pi / 6.0;
  s.r_min = 0.2;
  s.radius_slope = 1.0 / (2.0 * pi);
  s.seed = seed;
  switch (variant) {
    case SpiralVariant::easy: s.angle_span = pi; break;
    case SpiralVariant::medium: s.angle_span = 2.0 * pi; break;
    case SpiralVariant::difficult: s.angle_span = 3.5 * pi; break;
  }
  return s;
}

Dataset generate_two_spirals(const SpiralSpec& spec) {
  if (spec.points_per_class < 2) throw ConfigError("generate_two_spirals: points_per_class must be at least 2");
  if (!(spec.angle_span > 0.0)) throw ConfigError("generate_two_spirals: angle_span must be positive");
  if (spec.noise_sd < 0.0) throw ConfigError("generate_two_spirals: noise_sd must be non-negative");
  const std::size_t n = spec.points_per_class;
  Rng rng(spec.seed);
  Matrix x(2 * n, 2);
  Matrix y(2 * n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = spec.theta0 + spec.angle_span * static_cast<double>(i) / static_cast<double>(n);
    const double r = spec.r_min + spec.radius_slope * theta;
    for (std::size_t cls = 0; cls < 2; ++cls) {
      const double angle = theta + (cls == 1 ? std::numbers::pi : 0.0);
      const std::size_t row = 2 * i + cls;
      x(row, 0) = r * std::cos(angle);
      x(row, 1) = r * std::sin(angle);
      if (spec.noise_sd > 0.0) {
        x(row, 0) += spec.noise_sd * rng.normal();
        x(row, 1) += spec.noise_sd * rng.normal();
      }
      y(row, 0) = static_cast<double>(cls);
    }
  }
  if (spec.standardize) standardize_inputs(x);
  return Dataset(std::move(x), std::move(y), TaskKind::binary);
}

// ---------------------------------------------------------------------------
// MNIST IDX

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;
constexpr std::size_t kSide = 28;

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw ParseError(path.string() + ": truncated header at offset " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                              static_cast<char>(v)};
  out.write(b.data(), 4);
}

}  // namespace

Dataset load_mnist_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);

  const std::uint32_t image_magic = read_be32(images, 0, images_path);
  if (image_magic != kImageMagic) {
    throw ParseError(images_path.string() + ": bad magic " + std::to_string(image_magic) + " at offset 0 (expected 2051)");
  }
  const std::uint32_t label_magic = read_be32(labels, 0, labels_path);
  if (label_magic != kLabelMagic) {
    throw ParseError(labels_path.string() + ": bad magic " + std::to_string(label_magic) + " at offset 0 (expected 2049)");
  }
  const std::size_t n_images = read_be32(images, 4, images_path);
  const std::size_t rows = read_be32(images, 8, images_path);
  const std::size_t cols = read_be32(images, 12, images_path);
  if (rows != kSide || cols != kSide) {
    throw ParseError(images_path.string() + ": image dimensions " + std::to_string(rows) + "x" + std::to_string(cols) +
                     " at offset 8 (expected 28x28)");
  }
  const std::size_t n_labels = read_be32(labels, 4, labels_path);
  if (n_labels != n_images) {
    throw ParseError(labels_path.string() + ": label count " + std::to_string(n_labels) + " at offset 4 does not match " +
                     std::to_string(n_images) + " images in " + images_path.string());
  }
  const std::size_t pixels = rows * cols;
  if (images.size() < 16 + n_images * pixels) {
    throw ParseError(images_path.string() + ": truncated pixel data at offset " + std::to_string(images.size()) +
                     " (need " + std::to_string(16 + n_images * pixels) + " bytes)");
  }
  if (labels.size() < 8 + n_labels) {
    throw ParseError(labels_path.string() + ": truncated label data at offset " + std::to_string(labels.size()) +
                     " (need " + std::to_string(8 + n_labels) + " bytes)");
  }

  Matrix x(n_images, pixels);
  Matrix y(n_images, 10);
  for (std::size_t i = 0; i < n_images; ++i) {
    const unsigned char* src = images.data() + 16 + i * pixels;
    auto dst = x.row(i);
    for (std::size_t p = 0; p < pixels; ++p) dst[p] = static_cast<double>(src[p]) / 255.0;
    const unsigned label = labels[8 + i];
    if (label > 9) {
      throw ParseError(labels_path.string() + ": label " + std::to_string(label) + " at offset " +
                       std::to_string(8 + i) + " is outside 0..9");
    }
    y(i, label) = 1.0;
  }
  return Dataset(std::move(x), std::move(y), TaskKind::categorical);
}

void write_mnist_idx(const Dataset& d, const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  if (d.task() != TaskKind::categorical || d.input_dim() != kSide * kSide || d.output_dim() != 10) {
    throw ConfigError("write_mnist_idx: need a 10-class dataset of 28x28 images");
  }
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  if (!img || !lab) throw ConfigError("write_mnist_idx: cannot open output files");
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(d.size()));
  write_be32(img, kSide);
  write_be32(img, kSide);
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(d.size()));
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (double v : d.inputs().row(i)) img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    lab.put(static_cast<char>(d.label_of(i)));
  }
}

Dataset filter_binary_mnist(const Dataset& d, std::size_t class_a, std::size_t class_b) {
  if (class_a == class_b) throw ConfigError("filter_binary_mnist: the two classes must differ");
  if (d.task() != TaskKind::categorical) throw ConfigError("filter_binary_mnist: dataset must be categorical");
  if (class_a >= d.output_dim() || class_b >= d.output_dim()) throw ConfigError("filter_binary_mnist: class index out of range");
  std::vector<std::size_t> keep;
  bool seen_a = false, seen_b = false;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t label = d.label_of(i);
    if (label == class_a) seen_a = true;
    if (label == class_b) seen_b = true;
    if (label == class_a || label == class_b) keep.push_back(i);
  }
  if (!seen_a || !seen_b) {
    throw DataError("filter_binary_mnist: class " + std::to_string(seen_a ? class_b : class_a) + " is absent");
  }
  Matrix x(keep.size(), d.input_dim());
  Matrix y(keep.size(), 1);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    std::copy_n(d.inputs().row(keep[i]).begin(), d.input_dim(), x.row(i).begin());
    y(i, 0) = d.label_of(keep[i]) == class_b ? 1.0 : 0.0;
  }
  return Dataset(std::move(x), std::move(y), TaskKind::binary);
}

std::pair<Dataset, Dataset> split_train_validation(const Dataset& d, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ConfigError("split_train_validation: train fraction must lie in (0, 1)");
  }
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(d.size()) * train_fraction));
  if (n_train == 0 || n_train >= d.size()) {
    throw ConfigError("split_train_validation: " + std::to_string(d.size()) + " rows give an empty split");
  }
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  const std::span<const std::size_t> all(order);
  return {d.subset(all.first(n_train)), d.subset(all.subspan(n_train))};
}

Dataset sample_subset(const Dataset& d, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n > d.size()) throw ConfigError("sample_subset: requested " + std::to_string(n) + " of " + std::to_string(d.size()) + " rows");
  std::vector<std::size_t> order(d.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(n);
  return d.subset(order);
}

// ---------------------------------------------------------------------------
// CSV

namespace {

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  const auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && issp(static_cast<unsigned char>(s.back()))) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && issp(static_cast<unsigned char>(s[i]))) ++i;
  return s.substr(i);
}

double parse_number(const std::string& cell, const std::filesystem::path& path, std::size_t line) {
  const std::string t = trim(cell);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty() || !std::isfinite(v)) {
    throw ParseError(path.string() + ":" + std::to_string(line) + ": '" + t + "' is not a finite number");
  }
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::size_t> line_numbers;
};

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file (missing header)");
  for (auto& h : split_commas(line)) t.header.push_back(trim(h));
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    if (cells.size() != t.header.size()) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                       " fields, found " + std::to_string(cells.size()));
    }
    std::vector<double> row;
    row.reserve(cells.size());
    for (const auto& c : cells) row.push_back(parse_number(c, path, line_no));
    t.rows.push_back(std::move(row));
    t.line_numbers.push_back(line_no);
  }
  if (t.rows.empty()) throw DataError(path.string() + ": no data rows after the header");
  return t;
}

void write_number(std::ostream& out, double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.write(buf.data(), ptr - buf.data());
}

}  // namespace

Dataset load_multilabel_csv(const std::filesystem::path& path, bool standardize) {
  CsvTable t = read_csv(path);
  std::size_t features = 0;
  while (features < t.header.size() && t.header[features] == "f" + std::to_string(features)) ++features;
  const std::size_t labels = t.header.size() - features;
  for (std::size_t j = 0; j < labels; ++j) {
    if (t.header[features + j] != "l" + std::to_string(j)) {
      throw ParseError(path.string() + ":1: header column '" + t.header[features + j] + "' (expected f0..fD-1,l0..lC-1)");
    }
  }
  if (features == 0 || labels == 0) throw ParseError(path.string() + ":1: header needs at least one f and one l column");
  Matrix x(t.rows.size(), features);
  Matrix y(t.rows.size(), labels);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < features; ++c) x(r, c) = t.rows[r][c];
    for (std::size_t j = 0; j < labels; ++j) {
      const double v = t.rows[r][features + j];
      if (v != 0.0 && v != 1.0) {
        throw ParseError(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": label l" + std::to_string(j) +
                         " must be 0 or 1");
      }
      y(r, j) = v;
    }
  }
  if (standardize) standardize_inputs(x);
  return Dataset(std::move(x), std::move(y), TaskKind::multilabel);
}

void write_multilabel_csv(const Dataset& d, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_multilabel_csv: cannot open " + path.string());
  for (std::size_t c = 0; c < d.input_dim(); ++c) out << (c ? "," : "") << 'f' << c;
  for (std::size_t j = 0; j < d.output_dim(); ++j) out << ",l" << j;
  out << '\n';
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t c = 0; c < d.input_dim(); ++c) {
      if (c) out << ',';
      write_number(out, d.inputs()(r, c));
    }
    for (std::size_t j = 0; j < d.output_dim(); ++j) out << ',' << static_cast<int>(d.targets()(r, j));
    out << '\n';
  }
}

Dataset load_binary_csv(const std::filesystem::path& path) {
  CsvTable t = read_csv(path);
  if (t.header.size() < 2 || t.header.back() != "label") {
    throw ParseError(path.string() + ":1: header must be x0,...,x{D-1},label");
  }
  const std::size_t dim = t.header.size() - 1;
  Matrix x(t.rows.size(), dim);
  Matrix y(t.rows.size(), 1);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    for (std::size_t c = 0; c < dim; ++c) x(r, c) = t.rows[r][c];
    const double v = t.rows[r][dim];
    if (v != 0.0 && v != 1.0) throw ParseError(path.string() + ":" + std::to_string(t.line_numbers[r]) + ": label must be 0 or 1");
    y(r, 0) = v;
  }
  return Dataset(std::move(x), std::move(y), TaskKind::binary);
}

void write_binary_csv(const Dataset& d, const std::filesystem::path& path) {
  if (d.task() != TaskKind::binary) throw ConfigError("write_binary_csv: dataset must be binary");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("write_binary_csv: cannot open " + path.string());
  for (std::size_t c = 0; c < d.input_dim(); ++c) out << 'x' << c << ',';
  out << "label\n";
  for (std::size_t r = 0; r < d.size(); ++r) {
    for (std::size_t c = 0; c < d.input_dim(); ++c) {
      write_number(out, d.inputs()(r, c));
      out << ',';
    }
    out << static_cast<int>(d.targets()(r, 0)) << '\n';
  }
}

Dataset generate_synthetic_multilabel(std::size_t n, std::size_t features, std::size_t labels, std::uint64_t seed) {
  if (n == 0 || features == 0 || labels == 0) throw ConfigError("generate_synthetic_multilabel: sizes must be positive");
  Rng rng(seed);
  Matrix w(labels, features);
  for (double& v : w.data()) v = rng.normal();
  Matrix x(n, features);
  for (double& v : x.data()) v = rng.normal();
  Matrix scores = matmul_nt(x, w);
  Matrix y(n, labels);
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = scores.data()[i] > 0.0 ? 1.0 : 0.0;
  return Dataset(std::move(x), std::move(y), TaskKind::multilabel);
}

}  // namespace ccnn
