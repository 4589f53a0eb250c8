#include "condnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>

namespace condnet {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarPixels = 3072;
constexpr std::size_t kCifarRecord = kCifarPixels + 1;

std::vector<std::uint8_t> read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::filesystem::path& p) {
  if (off + 4 > b.size())
    throw std::runtime_error(p.string() + ": truncated header at offset " + std::to_string(off));
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& p) {
  if (got != want) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": bad magic 0x%08x at offset 0 (expected 0x%08x)", got, want);
    throw std::runtime_error(p.string() + buf);
  }
}

Dataset concat(const std::vector<Dataset>& parts) {
  Dataset out;
  std::size_t rows = 0;
  for (const auto& d : parts) rows += d.size();
  const std::size_t cols = parts.empty() ? 0 : parts.front().x.cols();
  out.x = Matrix(rows, cols);
  out.n_classes = parts.empty() ? 0 : parts.front().n_classes;
  std::size_t r = 0;
  for (const auto& d : parts) {
    std::copy(d.x.flat().begin(), d.x.flat().end(), out.x.data() + r * cols);
    out.labels.insert(out.labels.end(), d.labels.begin(), d.labels.end());
    r += d.size();
  }
  return out;
}

}  // namespace

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

void Dataset::validate() const {
  if (x.rows() != labels.size())
    throw std::invalid_argument("dataset: " + std::to_string(x.rows()) + " rows but " +
                                std::to_string(labels.size()) + " labels");
  for (const int y : labels)
    if (y < 0 || static_cast<std::size_t>(y) >= n_classes)
      throw std::invalid_argument("dataset: label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
  for (const double v : x.flat())
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("dataset: feature outside [0, 1]");
}

Dataset Dataset::head(std::size_t count) const { return slice(0, std::min(count, size())); }

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > size()) throw std::out_of_range("dataset: bad slice");
  std::vector<std::size_t> idx(end - begin);
  std::iota(idx.begin(), idx.end(), begin);
  Dataset d;
  d.x = x.gather_rows(idx);
  d.labels.assign(labels.begin() + static_cast<std::ptrdiff_t>(begin),
                  labels.begin() + static_cast<std::ptrdiff_t>(end));
  d.n_classes = n_classes;
  d.split = split;
  return d;
}

Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split) {
  const auto ib = read_file(images);
  expect_magic(be32(ib, 0, images), kIdxImagesMagic, images);
  const std::size_t n = be32(ib, 4, images);
  const std::size_t rows = be32(ib, 8, images);
  const std::size_t cols = be32(ib, 12, images);
  const std::size_t features = rows * cols;
  if (ib.size() != 16 + n * features)
    throw std::runtime_error(images.string() + ": header promises " + std::to_string(n) +
                             " images of " + std::to_string(features) + " bytes, file has " +
                             std::to_string(ib.size() - 16) + " payload bytes");

  const auto lb = read_file(labels);
  expect_magic(be32(lb, 0, labels), kIdxLabelsMagic, labels);
  const std::size_t nl = be32(lb, 4, labels);
  if (lb.size() != 8 + nl)
    throw std::runtime_error(labels.string() + ": header promises " + std::to_string(nl) +
                             " labels, file has " + std::to_string(lb.size() - 8));
  if (nl != n)
    throw std::runtime_error("idx: " + std::to_string(n) + " images but " + std::to_string(nl) +
                             " labels");

  Dataset d;
  d.split = split;
  d.n_classes = 10;
  d.x = Matrix(n, features);
  auto flat = d.x.flat();
  for (std::size_t k = 0; k < n * features; ++k) flat[k] = ib[16 + k] / 255.0;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = lb[8 + i];
    if (d.labels[i] > 9)
      throw std::runtime_error(labels.string() + ": label " + std::to_string(d.labels[i]) +
                               " at offset " + std::to_string(8 + i));
  }
  return d;
}

DataSplits load_mnist_idx(const std::filesystem::path& dir, std::size_t valid_count) {
  const Dataset train_all =
      read_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", Split::train);
  if (valid_count >= train_all.size())
    throw std::invalid_argument("mnist: validation split larger than the training set");
  DataSplits s;
  s.train = train_all.slice(0, train_all.size() - valid_count);
  s.valid = train_all.slice(train_all.size() - valid_count, train_all.size());
  s.valid.split = Split::valid;
  s.test = read_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", Split::test);
  return s;
}

Dataset read_cifar10_batch(const std::filesystem::path& file, Split split) {
  const auto b = read_file(file);
  if (b.size() % kCifarRecord != 0)
    throw std::runtime_error(file.string() + ": size " + std::to_string(b.size()) +
                             " is not a multiple of " + std::to_string(kCifarRecord));
  const std::size_t n = b.size() / kCifarRecord;
  Dataset d;
  d.split = split;
  d.n_classes = 10;
  d.x = Matrix(n, kCifarPixels);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = i * kCifarRecord;
    if (b[off] > 9)
      throw std::runtime_error(file.string() + ": label " + std::to_string(b[off]) +
                               " at offset " + std::to_string(off));
    d.labels[i] = b[off];
    auto row = d.x.row(i);
    for (std::size_t k = 0; k < kCifarPixels; ++k) row[k] = b[off + 1 + k] / 255.0;
  }
  return d;
}

DataSplits load_cifar10_bin(const std::filesystem::path& dir, std::size_t valid_count) {
  std::vector<Dataset> parts;
  for (int i = 1; i <= 5; ++i)
    parts.push_back(read_cifar10_batch(dir / ("data_batch_" + std::to_string(i) + ".bin")));
  const Dataset train_all = concat(parts);
  if (valid_count >= train_all.size())
    throw std::invalid_argument("cifar10: validation split larger than the training set");
  DataSplits s;
  s.train = train_all.slice(0, train_all.size() - valid_count);
  s.valid = train_all.slice(train_all.size() - valid_count, train_all.size());
  s.valid.split = Split::valid;
  s.test = read_cifar10_batch(dir / "test_batch.bin", Split::test);
  return s;
}

Dataset synth_blobs(std::size_t n_classes, std::size_t n_features, std::size_t n_examples,
                    double separation, Rng& rng) {
  if (n_classes < 2 || n_features == 0 || n_examples == 0)
    throw std::invalid_argument("synth_blobs: need n_classes >= 2, n_features > 0, n_examples > 0");

  // Centers on distinct axes at distance separation/√2 from the origin are
  // pairwise exactly `separation` apart.
  Matrix centers(n_classes, n_features);
  if (n_features >= n_classes) {
    std::vector<std::size_t> axes(n_features);
    std::iota(axes.begin(), axes.end(), 0);
    for (std::size_t i = n_features - 1; i > 0; --i) std::swap(axes[i], axes[rng.below(i + 1)]);
    for (std::size_t c = 0; c < n_classes; ++c) centers(c, axes[c]) = separation / std::sqrt(2.0);
  } else {
    for (std::size_t c = 0; c < n_classes; ++c) {
      double norm = 0.0;
      for (double& v : centers.row(c)) {
        v = rng.normal();
        norm += v * v;
      }
      for (double& v : centers.row(c)) v *= separation / (2.0 * std::sqrt(norm));
    }
  }

  Dataset d;
  d.n_classes = n_classes;
  d.x = Matrix(n_examples, n_features);
  d.labels.resize(n_examples);
  for (std::size_t i = 0; i < n_examples; ++i) {
    const std::size_t c = i % n_classes;
    d.labels[i] = static_cast<int>(c);
    for (std::size_t f = 0; f < n_features; ++f) d.x(i, f) = centers(c, f) + rng.normal();
  }
  const auto [lo, hi] = std::minmax_element(d.x.flat().begin(), d.x.flat().end());
  const double min = *lo, span = *hi - *lo;
  for (double& v : d.x.flat()) v = span > 0 ? (v - min) / span : 0.0;
  return d;
}

DataSplits split_consecutive(const Dataset& all, std::size_t n_train, std::size_t n_valid) {
  if (n_train + n_valid >= all.size())
    throw std::invalid_argument("split_consecutive: no examples left for the test split");
  DataSplits s;
  s.train = all.slice(0, n_train);
  s.valid = all.slice(n_train, n_train + n_valid);
  s.test = all.slice(n_train + n_valid, all.size());
  s.train.split = Split::train;
  s.valid.split = Split::valid;
  s.test.split = Split::test;
  return s;
}

}  // namespace condnet
