#include "scoretune/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "scoretune/error.hpp"
#include "scoretune/random.hpp"

namespace scoretune {

Dataset gen_gaussian_mixture(const Matrix& centers, std::span<const double> weights,
                             double component_sigma, std::size_t n, std::uint64_t seed) {
  if (centers.rows() < 1) throw InvalidInput("mixture needs at least one center");
  if (weights.size() != static_cast<std::size_t>(centers.rows()))
    throw InvalidInput("one weight per center is required");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw InvalidInput("mixture weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidInput("mixture weights must sum to 1");
  if (!(component_sigma >= 0.0)) throw InvalidInput("component sigma must be non-negative");

  Rng rng(seed);
  std::discrete_distribution<std::int32_t> pick(weights.begin(), weights.end());
  std::normal_distribution<double> n01(0.0, 1.0);
  Dataset out;
  out.name = "gaussian-mixture";
  out.x.resize(static_cast<Eigen::Index>(n), centers.cols());
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int32_t k = pick(rng);
    out.labels[i] = k;
    auto row = out.x.row(static_cast<Eigen::Index>(i));
    for (Eigen::Index d = 0; d < centers.cols(); ++d)
      row(d) = centers(k, d) + component_sigma * n01(rng);
  }
  if (n > 0) {
    out.value_min = out.x.minCoeff();
    out.value_max = out.x.maxCoeff();
  }
  return out;
}

Dataset gen_gaussian(const Vector& mean, double sigma, std::size_t n, std::uint64_t seed) {
  const Matrix center = mean.transpose();
  const double one = 1.0;
  Dataset out = gen_gaussian_mixture(center, {&one, 1}, sigma, n, seed);
  out.name = "gaussian";
  out.labels.clear();
  return out;
}

CifarBatch read_cifar_batch(const std::filesystem::path& file) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(file, ec);
  if (ec) throw FormatError("CIFAR-10 batch not found or unreadable: " + file.string());
  if (size == 0 || size % kCifarRecord != 0)
    throw FormatError("CIFAR-10 batch " + file.string() + " has size " + std::to_string(size) +
                      ", not a positive multiple of 3073 bytes");
  std::ifstream is(file, std::ios::binary);
  if (!is) throw FormatError("cannot open CIFAR-10 batch: " + file.string());
  const std::size_t records = size / kCifarRecord;
  CifarBatch batch;
  batch.labels.resize(records);
  batch.pixels.resize(records * kCifarPixels);
  std::vector<char> record(kCifarRecord);
  for (std::size_t r = 0; r < records; ++r) {
    if (!is.read(record.data(), static_cast<std::streamsize>(kCifarRecord)))
      throw FormatError("truncated CIFAR-10 batch: " + file.string());
    batch.labels[r] = static_cast<std::uint8_t>(record[0]);
    std::memcpy(batch.pixels.data() + r * kCifarPixels, record.data() + 1, kCifarPixels);
  }
  return batch;
}

void write_cifar_batch(const std::filesystem::path& file, const CifarBatch& batch) {
  if (batch.pixels.size() != batch.records() * kCifarPixels)
    throw InvalidInput("CIFAR batch pixel count does not match its labels");
  std::ofstream os(file, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + file.string());
  for (std::size_t r = 0; r < batch.records(); ++r) {
    os.put(static_cast<char>(batch.labels[r]));
    os.write(reinterpret_cast<const char*>(batch.pixels.data() + r * kCifarPixels),
             static_cast<std::streamsize>(kCifarPixels));
  }
  if (!os) throw FormatError("failed writing " + file.string());
}

Dataset cifar_to_dataset(std::span<const CifarBatch> batches, std::string name) {
  std::size_t total = 0;
  for (const auto& b : batches) total += b.records();
  Dataset out;
  out.name = std::move(name);
  out.value_min = 0.0;
  out.value_max = 1.0;
  out.x.resize(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(kCifarPixels));
  Eigen::Index row = 0;
  for (const auto& b : batches) {
    for (std::size_t r = 0; r < b.records(); ++r, ++row) {
      const std::uint8_t* px = b.pixels.data() + r * kCifarPixels;
      for (std::size_t d = 0; d < kCifarPixels; ++d)
        out.x(row, static_cast<Eigen::Index>(d)) = static_cast<double>(px[d]) / 255.0;
    }
  }
  return out;
}

Dataset load_cifar10(const std::filesystem::path& directory, CifarSplit split) {
  std::vector<std::filesystem::path> files;
  if (split == CifarSplit::train) {
    for (int k = 1; k <= 5; ++k) files.push_back(directory / ("data_batch_" + std::to_string(k) + ".bin"));
  } else {
    files.push_back(directory / "test_batch.bin");
  }
  std::vector<CifarBatch> batches;
  for (const auto& f : files) {
    if (!std::filesystem::exists(f)) throw FormatError("missing CIFAR-10 file: " + f.string());
    batches.push_back(read_cifar_batch(f));
  }
  return cifar_to_dataset(batches, split == CifarSplit::train ? "cifar10-train" : "cifar10-test");
}

PairwiseStats distance_stats(const Dataset& dataset, std::size_t subsample, std::uint64_t seed) {
  return pairwise_distance_stats(dataset.x, subsample, seed, true);
}

std::vector<std::string> coordinate_header(std::int64_t D) {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(D));
  for (std::int64_t d = 0; d < D; ++d) out.push_back("x" + std::to_string(d));
  return out;
}

void write_csv_matrix(const std::filesystem::path& file, const Matrix& m,
                      std::span<const std::string> header) {
  if (!header.empty() && header.size() != static_cast<std::size_t>(m.cols()))
    throw InvalidInput("CSV header width does not match the matrix");
  std::ofstream os(file);
  if (!os) throw FormatError("cannot open for writing: " + file.string());
  for (std::size_t c = 0; c < header.size(); ++c) os << (c ? "," : "") << header[c];
  if (!header.empty()) os << '\n';
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      os << (c ? "," : "") << buf;
    }
    os << '\n';
  }
  if (!os) throw FormatError("failed writing " + file.string());
}

namespace {

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    std::size_t start = 0;
    while (start < field.size() && field[start] == ' ') ++start;
    out.push_back(field.substr(start));
  }
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

}  // namespace

Matrix read_csv_matrix(const std::filesystem::path& file, std::vector<std::string>* header) {
  std::ifstream is(file);
  if (!is) throw FormatError("cannot open CSV: " + file.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    std::vector<double> values(fields.size());
    bool numeric = true;
    for (std::size_t k = 0; k < fields.size(); ++k) numeric = numeric && parse_double(fields[k], values[k]);
    if (!numeric) {
      if (rows.empty() && width == 0) {
        if (header) *header = fields;
        width = fields.size();
        continue;
      }
      throw FormatError("non-numeric field in " + file.string() + " line " + std::to_string(line_no));
    }
    if (width == 0) width = values.size();
    if (values.size() != width)
      throw FormatError("ragged row in " + file.string() + " line " + std::to_string(line_no));
    rows.push_back(std::move(values));
  }
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

std::filesystem::path sidecar_path(const std::filesystem::path& file) {
  return std::filesystem::path(file.string() + ".json");
}

void write_matrix_binary(const std::filesystem::path& file, const Matrix& m,
                         const std::string& extra_json) {
  nlohmann::ordered_json side;
  side["format"] = "scoretune.matrix";
  side["version"] = 1;
  side["M"] = m.rows();
  side["D"] = m.cols();
  side["dtype"] = "f64le";
  try {
    const auto extra = nlohmann::ordered_json::parse(extra_json);
    if (!extra.is_object()) throw InvalidInput("matrix sidecar extras must be a JSON object");
    for (const auto& [key, value] : extra.items()) side[key] = value;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("matrix sidecar extras: ") + e.what());
  }

  std::ofstream os(file, std::ios::binary);
  if (!os) throw FormatError("cannot open for writing: " + file.string());
  detail::write_f64(os, {m.data(), static_cast<std::size_t>(m.size())});
  if (!os) throw FormatError("failed writing " + file.string());
  std::ofstream js(sidecar_path(file));
  js << side.dump(2) << '\n';
  if (!js) throw FormatError("failed writing " + sidecar_path(file).string());
}

MatrixFile read_matrix_binary(const std::filesystem::path& file) {
  std::ifstream js(sidecar_path(file));
  if (!js) throw FormatError("missing matrix sidecar: " + sidecar_path(file).string());
  std::stringstream text;
  text << js.rdbuf();
  MatrixFile out;
  out.sidecar_json = text.str();
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  try {
    const auto side = nlohmann::json::parse(out.sidecar_json);
    if (side.at("format") != "scoretune.matrix" || side.at("version") != 1 ||
        side.at("dtype") != "f64le")
      throw FormatError("unsupported matrix sidecar: " + sidecar_path(file).string());
    rows = side.at("M").get<Eigen::Index>();
    cols = side.at("D").get<Eigen::Index>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad matrix sidecar " + sidecar_path(file).string() + ": " + e.what());
  }
  if (rows < 0 || cols < 0) throw FormatError("negative shape in " + sidecar_path(file).string());

  std::error_code ec;
  const auto size = std::filesystem::file_size(file, ec);
  const auto expected = static_cast<std::uintmax_t>(rows) * static_cast<std::uintmax_t>(cols) * 8u;
  if (ec || size != expected)
    throw FormatError("matrix file " + file.string() + " does not hold " + std::to_string(rows) +
                      "x" + std::to_string(cols) + " f64 values");
  std::ifstream is(file, std::ios::binary);
  out.matrix.resize(rows, cols);
  if (!detail::read_f64(is, {out.matrix.data(), static_cast<std::size_t>(out.matrix.size())}))
    throw FormatError("failed reading " + file.string());
  return out;
}

}  // namespace scoretune
