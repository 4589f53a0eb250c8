#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "condnet/matrix.hpp"
#include "condnet/rng.hpp"

namespace condnet {

enum class Split { train, valid, test };
std::string to_string(Split s);

/// Features scaled to [0, 1], one row per example.
struct Dataset {
  Matrix x;
  std::vector<int> labels;
  std::size_t n_classes = 0;
  Split split = Split::train;

  std::size_t size() const noexcept { return labels.size(); }
  /// Checks shape agreement, label range and feature range.
  void validate() const;
  /// First `count` examples (all if count >= size()).
  Dataset head(std::size_t count) const;
  Dataset slice(std::size_t begin, std::size_t end) const;
};

struct DataSplits {
  Dataset train, valid, test;
};

/// IDX image file (magic 0x00000803) with its label file (0x00000801).
Dataset read_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                 Split split = Split::train);

/// MNIST from `dir` holding the four official uncompressed IDX files. The
/// last `valid_count` training examples become the validation split.
DataSplits load_mnist_idx(const std::filesystem::path& dir, std::size_t valid_count = 10000);

/// One CIFAR-10 binary batch: 3073-byte records (label byte + 3072 pixels).
Dataset read_cifar10_batch(const std::filesystem::path& file, Split split = Split::train);

/// CIFAR-10 from `dir` holding data_batch_{1..5}.bin and test_batch.bin. The
/// last `valid_count` training records become the validation split.
DataSplits load_cifar10_bin(const std::filesystem::path& dir, std::size_t valid_count = 5000);

/// Unit-variance Gaussian clusters whose centers are `separation` apart,
/// min-max scaled into [0, 1]. Labels cycle through the classes.
Dataset synth_blobs(std::size_t n_classes, std::size_t n_features, std::size_t n_examples,
                    double separation, Rng& rng);

/// Consecutive train/valid/test blocks of a dataset, in order.
DataSplits split_consecutive(const Dataset& all, std::size_t n_train, std::size_t n_valid);

}  // namespace condnet
