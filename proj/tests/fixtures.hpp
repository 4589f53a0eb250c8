#pragma once

// Writers for tiny dataset files in the on-disk formats the loaders accept.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fixture {

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

inline void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream os(p, std::ios::binary);
  os.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

/// Image i has pixel k equal to (i + k) % 256.
inline std::vector<std::uint8_t> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                            std::uint32_t magic = 0x00000803) {
  std::vector<std::uint8_t> b;
  put_be32(b, magic);
  put_be32(b, n);
  put_be32(b, rows);
  put_be32(b, cols);
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t k = 0; k < rows * cols; ++k) b.push_back(static_cast<std::uint8_t>((i + k) % 256));
  return b;
}

/// Label i is i % 10.
inline std::vector<std::uint8_t> idx_labels(std::uint32_t n, std::uint32_t magic = 0x00000801) {
  std::vector<std::uint8_t> b;
  put_be32(b, magic);
  put_be32(b, n);
  for (std::uint32_t i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(i % 10));
  return b;
}

inline void write_mnist_dir(const std::filesystem::path& dir, std::uint32_t n_train,
                            std::uint32_t n_test, std::uint32_t side = 28) {
  std::filesystem::create_directories(dir);
  write_bytes(dir / "train-images-idx3-ubyte", idx_images(n_train, side, side));
  write_bytes(dir / "train-labels-idx1-ubyte", idx_labels(n_train));
  write_bytes(dir / "t10k-images-idx3-ubyte", idx_images(n_test, side, side));
  write_bytes(dir / "t10k-labels-idx1-ubyte", idx_labels(n_test));
}

/// n records; record i has label i % 10 and pixel k equal to (i * 7 + k) % 256.
inline std::vector<std::uint8_t> cifar_batch(std::uint32_t n) {
  std::vector<std::uint8_t> b;
  for (std::uint32_t i = 0; i < n; ++i) {
    b.push_back(static_cast<std::uint8_t>(i % 10));
    for (std::uint32_t k = 0; k < 3072; ++k) b.push_back(static_cast<std::uint8_t>((i * 7 + k) % 256));
  }
  return b;
}

inline void write_cifar_dir(const std::filesystem::path& dir, std::uint32_t per_batch,
                            std::uint32_t n_test) {
  std::filesystem::create_directories(dir);
  for (int k = 1; k <= 5; ++k)
    write_bytes(dir / ("data_batch_" + std::to_string(k) + ".bin"), cifar_batch(per_batch));
  write_bytes(dir / "test_batch.bin", cifar_batch(n_test));
}

}  // namespace fixture
