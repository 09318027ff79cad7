#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "scoretune/data.hpp"
#include "scoretune/error.hpp"

using namespace scoretune;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("scoretune_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CifarBatch synthetic_batch(std::size_t records, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> byte(0, 255), label(0, 9);
  CifarBatch b;
  b.labels.resize(records);
  b.pixels.resize(records * kCifarPixels);
  for (auto& l : b.labels) l = static_cast<std::uint8_t>(label(rng));
  for (auto& p : b.pixels) p = static_cast<std::uint8_t>(byte(rng));
  return b;
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("gaussian mixture generator") {
  Matrix one(1, 3);
  one << 0.25, -1, 4;
  const double w1 = 1.0;
  const auto copies = gen_gaussian_mixture(one, {&w1, 1}, 0.0, 10, 1);
  CHECK(copies.N() == 10);
  for (Eigen::Index m = 0; m < 10; ++m) CHECK(copies.x.row(m) == one.row(0));

  Matrix two(2, 2);
  two << -2, 0, 2, 0;
  const std::vector<double> w{0.5, 0.5};
  const std::size_t n = 100000;
  const auto d = gen_gaussian_mixture(two, w, 0.5, n, 7);
  CHECK(d.x.allFinite());
  const auto ones = std::count(d.labels.begin(), d.labels.end(), 1);
  CHECK(std::abs(static_cast<double>(ones) - n / 2.0) <= 3.0 * std::sqrt(n / 4.0));

  // Mixture mean is (0, 0); per-coordinate total variance is 0.25 + 4 along x, 0.25 along y.
  const RowVector mean = d.x.colwise().mean();
  CHECK(std::abs(mean(0)) <= 4.0 * std::sqrt(4.25 / n));
  CHECK(std::abs(mean(1)) <= 4.0 * std::sqrt(0.25 / n));

  const auto again = gen_gaussian_mixture(two, w, 0.5, n, 7);
  CHECK(again.x == d.x);
  CHECK(again.labels == d.labels);

  const std::vector<double> bad{0.7, 0.7};
  CHECK_THROWS_AS(gen_gaussian_mixture(two, bad, 0.5, 10, 1), InvalidInput);
  const std::vector<double> neg{1.5, -0.5};
  CHECK_THROWS_AS(gen_gaussian_mixture(two, neg, 0.5, 10, 1), InvalidInput);
  CHECK_THROWS_AS(gen_gaussian_mixture(two, w, -0.1, 10, 1), InvalidInput);
}

TEST_CASE("gaussian generator") {
  Vector mu(2);
  mu << 1, 2;
  const auto d = gen_gaussian(mu, 0.3, 20000, 3);
  CHECK(d.labels.empty());
  CHECK(d.D() == 2);
  const RowVector mean = d.x.colwise().mean();
  CHECK(std::abs(mean(0) - 1) <= 4 * 0.3 / std::sqrt(20000.0));
  CHECK(std::abs(mean(1) - 2) <= 4 * 0.3 / std::sqrt(20000.0));
  CHECK(gen_gaussian(mu, 0.3, 20000, 3).x == d.x);
}

TEST_CASE("CIFAR batch files") {
  const auto dir = scratch_dir("cifar");

  CifarBatch white;
  white.labels = {3};
  white.pixels.assign(kCifarPixels, 255);
  write_cifar_batch(dir / "white.bin", white);
  CHECK(fs::file_size(dir / "white.bin") == kCifarRecord);
  const CifarBatch wb = read_cifar_batch(dir / "white.bin");
  const auto ds = cifar_to_dataset({&wb, 1}, "white");
  CHECK(ds.N() == 1);
  CHECK(ds.D() == 3072);
  CHECK((ds.x.array() == 1.0).all());

  const auto two = synthetic_batch(2, 5);
  write_cifar_batch(dir / "two.bin", two);
  const CifarBatch tb = read_cifar_batch(dir / "two.bin");
  CHECK(tb.labels == two.labels);
  CHECK(tb.pixels == two.pixels);
  const auto d2 = cifar_to_dataset({&tb, 1}, "two");
  CHECK(d2.N() == 2);
  CHECK(d2.x(1, 5) == two.pixels[kCifarPixels + 5] / 255.0);
  CHECK(d2.x.minCoeff() >= 0.0);
  CHECK(d2.x.maxCoeff() <= 1.0);

  // Re-serializing reproduces the file byte for byte.
  write_cifar_batch(dir / "two_again.bin", tb);
  CHECK(slurp(dir / "two.bin") == slurp(dir / "two_again.bin"));

  {
    std::ofstream os(dir / "short.bin", std::ios::binary);
    os << std::string(kCifarRecord + 10, 'x');
  }
  try {
    read_cifar_batch(dir / "short.bin");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("short.bin") != std::string::npos);
  }
  CHECK_THROWS_AS(read_cifar_batch(dir / "absent.bin"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("load_cifar10 directory layout") {
  const auto dir = scratch_dir("layout");
  for (int k = 1; k <= 5; ++k)
    write_cifar_batch(dir / ("data_batch_" + std::to_string(k) + ".bin"), synthetic_batch(3, k));
  const auto train = load_cifar10(dir, CifarSplit::train);
  CHECK(train.N() == 15);
  CHECK(train.D() == 3072);
  CHECK(train.value_min == 0.0);
  CHECK(train.value_max == 1.0);
  const auto first = synthetic_batch(3, 1);
  CHECK(train.x(0, 0) == first.pixels[0] / 255.0);
  const auto fifth = synthetic_batch(3, 5);
  CHECK(train.x(14, 3071) == fifth.pixels[3 * kCifarPixels - 1] / 255.0);

  try {
    load_cifar10(dir, CifarSplit::test);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("test_batch.bin") != std::string::npos);
  }
  fs::remove(dir / "data_batch_3.bin");
  try {
    load_cifar10(dir, CifarSplit::train);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("data_batch_3.bin") != std::string::npos);
  }
  fs::remove_all(dir);
}

TEST_CASE("distance stats") {
  Dataset square;
  square.x.resize(4, 2);
  square.x << 0, 0, 1, 0, 0, 1, 1, 1;
  const auto s = distance_stats(square);
  CHECK(s.max == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(s.median == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(s.pairs == 6);
  CHECK(s.mean == doctest::Approx((4 + 2 * std::sqrt(2.0)) / 6).epsilon(1e-14));

  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  Dataset pts;
  pts.x.resize(60, 7);
  for (Eigen::Index i = 0; i < pts.x.rows(); ++i)
    for (Eigen::Index j = 0; j < 7; ++j) pts.x(i, j) = n01(rng);
  const auto base = distance_stats(pts, 100, 0);

  Dataset shifted = pts;
  shifted.x.rowwise() += RowVector::Constant(7, 1234.5);
  const auto moved = distance_stats(shifted, 100, 0);
  CHECK(moved.max == doctest::Approx(base.max).epsilon(1e-12));
  CHECK(moved.median == doctest::Approx(base.median).epsilon(1e-12));
  CHECK(moved.mean == doctest::Approx(base.mean).epsilon(1e-12));

  std::vector<int> order(60);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  Dataset permuted = pts;
  for (int k = 0; k < 60; ++k) permuted.x.row(k) = pts.x.row(order[k]);
  const auto perm = distance_stats(permuted, 100, 0);
  CHECK(perm.max == doctest::Approx(base.max).epsilon(1e-12));
  CHECK(perm.median == doctest::Approx(base.median).epsilon(1e-12));
  CHECK(perm.mean == doctest::Approx(base.mean).epsilon(1e-12));
}

TEST_CASE("CSV matrices") {
  const auto dir = scratch_dir("csv");
  Matrix m(3, 2);
  m << 1.0 / 3.0, -2e-300, 1e300, 0.1, -0.0, 42;
  const auto header = coordinate_header(2);
  CHECK(header == std::vector<std::string>{"x0", "x1"});

  write_csv_matrix(dir / "h.csv", m, header);
  std::vector<std::string> got;
  const Matrix back = read_csv_matrix(dir / "h.csv", &got);
  CHECK(back == m);
  CHECK(got == header);

  write_csv_matrix(dir / "plain.csv", m);
  got.clear();
  CHECK(read_csv_matrix(dir / "plain.csv", &got) == m);
  CHECK(got.empty());

  {
    std::ofstream os(dir / "ragged.csv");
    os << "1,2\n3\n";
  }
  CHECK_THROWS_AS(read_csv_matrix(dir / "ragged.csv"), FormatError);
  {
    std::ofstream os(dir / "words.csv");
    os << "a,b\n1,2\nx,3\n";
  }
  CHECK_THROWS_AS(read_csv_matrix(dir / "words.csv"), FormatError);
  {
    std::ofstream os(dir / "crlf.csv");
    os << "x0, x1\r\n1.5, +2\r\n";
  }
  const Matrix crlf = read_csv_matrix(dir / "crlf.csv");
  CHECK(crlf.rows() == 1);
  CHECK(crlf(0, 0) == 1.5);
  CHECK(crlf(0, 1) == 2.0);
  CHECK_THROWS_AS(write_csv_matrix(dir / "x.csv", m, coordinate_header(3)), InvalidInput);
  CHECK_THROWS_AS(read_csv_matrix(dir / "missing.csv"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("binary matrices with sidecar") {
  const auto dir = scratch_dir("bin");
  Matrix m(4, 3);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::sin(1.0 + i) * 1e3;
  write_matrix_binary(dir / "m.bin", m, R"({"seed": 12, "note": "x"})");
  CHECK(fs::file_size(dir / "m.bin") == 4 * 3 * 8);
  const auto back = read_matrix_binary(dir / "m.bin");
  CHECK(back.matrix == m);
  CHECK(back.sidecar_json.find("\"seed\": 12") != std::string::npos);
  CHECK(back.sidecar_json.find("\"dtype\": \"f64le\"") != std::string::npos);

  // Raw bytes are the row-major little-endian values.
  const auto bytes = slurp(dir / "m.bin");
  double second = 0.0;
  std::memcpy(&second, bytes.data() + 8, 8);
  CHECK(second == m(0, 1));

  fs::resize_file(dir / "m.bin", 40);
  CHECK_THROWS_AS(read_matrix_binary(dir / "m.bin"), FormatError);
  fs::remove(sidecar_path(dir / "m.bin"));
  CHECK_THROWS_AS(read_matrix_binary(dir / "m.bin"), FormatError);
  CHECK_THROWS_AS(write_matrix_binary(dir / "n.bin", m, "[1,2]"), InvalidInput);
  fs::remove_all(dir);
}
