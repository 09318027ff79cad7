#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scoretune/linalg.hpp"
#include "scoretune/schedule.hpp"

namespace scoretune {

struct Dataset {
  Matrix x;  // N x D
  std::string name;
  double value_min = 0.0;
  double value_max = 0.0;
  std::vector<std::int32_t> labels;  // component index for synthetic data; empty otherwise

  std::size_t N() const { return static_cast<std::size_t>(x.rows()); }
  std::int64_t D() const { return x.cols(); }
};

/// n i.i.d. draws from sum_k w_k N(c_k, component_sigma^2 I). Weights must
/// be non-negative and sum to one. `labels` records the drawn component.
Dataset gen_gaussian_mixture(const Matrix& centers, std::span<const double> weights,
                             double component_sigma, std::size_t n, std::uint64_t seed);

/// n i.i.d. draws from N(mean, sigma^2 I).
Dataset gen_gaussian(const Vector& mean, double sigma, std::size_t n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// CIFAR-10 binary batches
// ---------------------------------------------------------------------------

inline constexpr std::size_t kCifarPixels = 3072;
inline constexpr std::size_t kCifarRecord = kCifarPixels + 1;

/// Raw records: one label byte followed by 1024 R, 1024 G, 1024 B bytes.
struct CifarBatch {
  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> pixels;  // records * 3072

  std::size_t records() const { return labels.size(); }
};

CifarBatch read_cifar_batch(const std::filesystem::path& file);
void write_cifar_batch(const std::filesystem::path& file, const CifarBatch& batch);

/// Pixels scaled by 1/255 into [0, 1]; labels are dropped.
Dataset cifar_to_dataset(std::span<const CifarBatch> batches, std::string name);

enum class CifarSplit { train, test };

/// Reads data_batch_1..5.bin (train) or test_batch.bin (test) from `directory`.
/// Missing or malformed files raise FormatError naming the file.
Dataset load_cifar10(const std::filesystem::path& directory, CifarSplit split = CifarSplit::train);

// ---------------------------------------------------------------------------
// Distance statistics
// ---------------------------------------------------------------------------

PairwiseStats distance_stats(const Dataset& dataset,
                             std::size_t subsample = kDefaultDistanceSubsample,
                             std::uint64_t seed = 0);

// ---------------------------------------------------------------------------
// Matrix files
// ---------------------------------------------------------------------------

/// CSV with an optional header row. On read, a first line containing any
/// field that does not parse as a number is treated as the header.
void write_csv_matrix(const std::filesystem::path& file, const Matrix& m,
                      std::span<const std::string> header = {});
Matrix read_csv_matrix(const std::filesystem::path& file, std::vector<std::string>* header = nullptr);

/// Column names x0, x1, ..., x{D-1}.
std::vector<std::string> coordinate_header(std::int64_t D);

/// Raw little-endian f64 matrix (row-major) at `file` plus a JSON sidecar at
/// `file` + ".json" holding {"format", "version", "M", "D", "dtype"} and the
/// fields of `extra_json` (a JSON object, may be empty).
void write_matrix_binary(const std::filesystem::path& file, const Matrix& m,
                         const std::string& extra_json = "{}");

struct MatrixFile {
  Matrix matrix;
  std::string sidecar_json;
};

MatrixFile read_matrix_binary(const std::filesystem::path& file);

std::filesystem::path sidecar_path(const std::filesystem::path& file);

}  // namespace scoretune
