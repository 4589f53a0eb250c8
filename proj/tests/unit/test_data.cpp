#include <doctest.h>

#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>

#include "condnet/data.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace condnet;

namespace {

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("IDX files load with pixels scaled to [0, 1]") {
  const auto dir = oracle::temp_dir("idx_ok");
  fixture::write_bytes(dir / "img", fixture::idx_images(300, 2, 2));
  fixture::write_bytes(dir / "lab", fixture::idx_labels(300));
  const Dataset d = read_idx(dir / "img", dir / "lab", Split::test);
  CHECK(d.size() == 300);
  CHECK(d.x.cols() == 4);
  CHECK(d.n_classes == 10);
  CHECK(d.split == Split::test);
  CHECK(d.labels[13] == 3);
  CHECK(d.x(1, 2) == 3.0 / 255.0);
  CHECK(d.x(255, 0) == 1.0);  // pixel 255
  CHECK(d.x(256, 0) == 0.0);
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("malformed IDX files are rejected with the offending offset") {
  const auto dir = oracle::temp_dir("idx_bad");
  fixture::write_bytes(dir / "lab", fixture::idx_labels(5));

  fixture::write_bytes(dir / "magic", fixture::idx_images(5, 2, 2, 0x00000802));
  const std::string magic = error_of([&] { read_idx(dir / "magic", dir / "lab"); });
  CHECK(magic.find("bad magic") != std::string::npos);
  CHECK(magic.find("offset 0") != std::string::npos);

  auto img = fixture::idx_images(5, 2, 2);
  img.resize(img.size() - 3);
  fixture::write_bytes(dir / "short", img);
  CHECK_THROWS_AS(read_idx(dir / "short", dir / "lab"), std::runtime_error);

  fixture::write_bytes(dir / "hdr", std::vector<std::uint8_t>{0, 0, 8, 3, 0, 0});
  CHECK(error_of([&] { read_idx(dir / "hdr", dir / "lab"); }).find("offset 4") !=
        std::string::npos);

  fixture::write_bytes(dir / "six", fixture::idx_images(6, 2, 2));
  CHECK_THROWS_AS(read_idx(dir / "six", dir / "lab"), std::runtime_error);
  CHECK_THROWS_AS(read_idx(dir / "missing", dir / "lab"), std::runtime_error);
}

TEST_CASE("MNIST directory splits off the last training examples for validation") {
  const auto dir = oracle::temp_dir("mnist");
  fixture::write_mnist_dir(dir, 50, 20, 3);
  const DataSplits s = load_mnist_idx(dir, 10);
  CHECK(s.train.size() == 40);
  CHECK(s.valid.size() == 10);
  CHECK(s.test.size() == 20);
  CHECK(s.valid.labels[0] == 0);  // example 40
  CHECK(s.valid.x(0, 0) == 40.0 / 255.0);
  CHECK(s.valid.split == Split::valid);
  CHECK_THROWS_AS(load_mnist_idx(dir, 50), std::invalid_argument);
}

TEST_CASE("CIFAR-10 batches") {
  const auto dir = oracle::temp_dir("cifar");
  fixture::write_bytes(dir / "b.bin", fixture::cifar_batch(12));
  const Dataset d = read_cifar10_batch(dir / "b.bin");
  CHECK(d.size() == 12);
  CHECK(d.x.cols() == 3072);
  CHECK(d.labels[11] == 1);
  CHECK(d.x(1, 0) == 7.0 / 255.0);

  auto bytes = fixture::cifar_batch(2);
  bytes.pop_back();
  fixture::write_bytes(dir / "short.bin", bytes);
  CHECK(error_of([&] { read_cifar10_batch(dir / "short.bin"); }).find("not a multiple of 3073") !=
        std::string::npos);

  bytes = fixture::cifar_batch(2);
  bytes[3073] = 10;
  fixture::write_bytes(dir / "label.bin", bytes);
  CHECK(error_of([&] { read_cifar10_batch(dir / "label.bin"); }).find("offset 3073") !=
        std::string::npos);

  fixture::write_cifar_dir(dir / "all", 4, 3);
  const DataSplits s = load_cifar10_bin(dir / "all", 5);
  CHECK(s.train.size() == 15);
  CHECK(s.valid.size() == 5);
  CHECK(s.test.size() == 3);
}

TEST_CASE("synthetic blobs are deterministic and linearly separable") {
  Rng a(4), b(4), c(5);
  const Dataset d = synth_blobs(2, 10, 2000, 10.0, a);
  CHECK(d.x == synth_blobs(2, 10, 2000, 10.0, b).x);
  CHECK(d.x != synth_blobs(2, 10, 2000, 10.0, c).x);
  CHECK_NOTHROW(d.validate());
  CHECK(d.labels[3] == 1);

  // Nearest class mean, a linear rule for two classes, fit on the first half.
  std::vector<Vector> mean(2, Vector(10, 0.0));
  std::vector<int> count(2, 0);
  for (std::size_t i = 0; i < 1000; ++i) {
    ++count[d.labels[i]];
    for (std::size_t f = 0; f < 10; ++f) mean[d.labels[i]][f] += d.x(i, f);
  }
  for (int k = 0; k < 2; ++k)
    for (double& v : mean[k]) v /= count[k];
  std::size_t right = 0;
  for (std::size_t i = 1000; i < 2000; ++i) {
    double d0 = 0.0, d1 = 0.0;
    for (std::size_t f = 0; f < 10; ++f) {
      d0 += (d.x(i, f) - mean[0][f]) * (d.x(i, f) - mean[0][f]);
      d1 += (d.x(i, f) - mean[1][f]) * (d.x(i, f) - mean[1][f]);
    }
    right += (d1 < d0 ? 1 : 0) == d.labels[i];
  }
  CHECK(right / 1000.0 > 0.99);

  Rng r(0);
  CHECK_THROWS_AS(synth_blobs(2, 3, 0, 1.0, r), std::invalid_argument);
  CHECK_THROWS_AS(synth_blobs(1, 3, 5, 1.0, r), std::invalid_argument);
}

TEST_CASE("consecutive splits are disjoint and cover the data") {
  Rng rng(1);
  const Dataset d = synth_blobs(3, 4, 100, 2.0, rng);
  const DataSplits s = split_consecutive(d, 60, 25);
  CHECK(s.train.size() + s.valid.size() + s.test.size() == 100);
  CHECK(s.valid.x.row(0)[0] == d.x(60, 0));
  CHECK(s.test.labels.front() == d.labels[85]);
  CHECK(s.test.split == Split::test);
  CHECK_THROWS_AS(split_consecutive(d, 60, 40), std::invalid_argument);
}

TEST_CASE("dataset validation and slicing") {
  Dataset d;
  d.x = Matrix(2, 2, 0.5);
  d.labels = {0, 3};
  d.n_classes = 3;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  d.labels = {0, 2};
  CHECK_NOTHROW(d.validate());
  d.x(0, 0) = 1.5;
  CHECK_THROWS_AS(d.validate(), std::invalid_argument);
  CHECK(d.head(1).size() == 1);
  CHECK(d.head(10).size() == 2);
  CHECK_THROWS_AS(d.slice(1, 3), std::out_of_range);
}

}  // TEST_SUITE
