#include "scoretune/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "scoretune/error.hpp"
#include "scoretune/random.hpp"

namespace scoretune {

namespace {

// Rows of x handled per dense block in the batched mixture evaluation.
constexpr Eigen::Index kRowBlock = 256;

// Log-weights this far below the row maximum contribute less than 1e-282
// relative weight. They are set to exactly zero: left alone they become
// subnormal after exp(), and subnormal operands slow the following matrix
// product down by two orders of magnitude.
constexpr double kLogWeightFloor = -650.0;

// In-place softmax over each row of log-weights.
void softmax_rows(Matrix& logits) {
  for (Eigen::Index m = 0; m < logits.rows(); ++m) {
    auto row = logits.row(m);
    const double peak = row.maxCoeff();
    row = (row.array() - peak).unaryExpr([](double v) { return v < kLogWeightFloor ? 0.0 : std::exp(v); });
    row /= row.sum();
  }
}

}  // namespace

Vector ScoreField::score(const Vector& x, double sigma) const {
  Matrix one = x.transpose();
  return score(one, sigma).row(0).transpose();
}

Vector gaussian_score(const Vector& x, const Vector& mu, double s2, double sigma) {
  if (x.size() != mu.size()) throw InvalidInput("gaussian_score: x and mu differ in size");
  if (s2 < 0.0 || sigma < 0.0) throw InvalidInput("gaussian_score: negative variance");
  const double var = s2 + sigma * sigma;
  if (!(var > 0.0)) throw DegenerateDistribution("gaussian_score: s2 + sigma^2 is zero");
  return -(x - mu) / var;
}

GaussianMixtureOracle::GaussianMixtureOracle(Matrix centers, double base_sigma)
    : centers_(std::move(centers)), base_sigma_(base_sigma) {
  if (centers_.rows() < 1) throw InvalidInput("mixture oracle needs at least one center");
  if (centers_.cols() < 1) throw InvalidInput("mixture oracle centers have zero width");
  if (!(base_sigma_ >= 0.0)) throw InvalidInput("base_sigma must be non-negative");
  if (!centers_.allFinite()) throw InvalidInput("mixture centers must be finite");
  centroid_ = centers_.colwise().mean();
  centered_ = centers_.rowwise() - centroid_;
  centered_sq_norms_ = centered_.rowwise().squaredNorm();
}

double GaussianMixtureOracle::component_variance(double sigma) const {
  const double var = base_sigma_ * base_sigma_ + sigma * sigma;
  if (!(var > 0.0)) throw DegenerateDistribution("mixture component variance is zero");
  return var;
}

Matrix GaussianMixtureOracle::responsibilities(const Matrix& x, double sigma) const {
  if (x.cols() != centers_.cols()) throw InvalidInput("responsibilities: dimension mismatch");
  const double inv_two_var = 0.5 / component_variance(sigma);
  const Matrix shifted = x.rowwise() - centroid_;
  Matrix logits(x.rows(), centers_.rows());
  for (Eigen::Index start = 0; start < x.rows(); start += kRowBlock) {
    const Eigen::Index rows = std::min(kRowBlock, x.rows() - start);
    auto block = logits.middleRows(start, rows);
    block.noalias() = 2.0 * shifted.middleRows(start, rows) * centered_.transpose();
    const Vector x_sq = shifted.middleRows(start, rows).rowwise().squaredNorm();
    block.colwise() -= x_sq;
    block.rowwise() -= centered_sq_norms_.transpose();
    block *= inv_two_var;  // block = -||x - c||^2 / (2 var)
  }
  softmax_rows(logits);
  return logits;
}

Matrix GaussianMixtureOracle::score(const Matrix& x, double sigma) const {
  const double var = component_variance(sigma);
  const Matrix r = responsibilities(x, sigma);
  // sum_i r_i (c_i - x) / var == (R C - x) / var since rows of R sum to one.
  Matrix out = r * centered_;
  out.rowwise() += centroid_;
  out -= x;
  out /= var;
  return out;
}

Vector responsibilities(const Vector& x, const GaussianMixtureOracle& oracle, double sigma) {
  if (x.size() != oracle.dims()) throw InvalidInput("responsibilities: dimension mismatch");
  const double var = oracle.component_variance(sigma);
  Vector logw = -(oracle.centers().rowwise() - x.transpose()).rowwise().squaredNorm() / (2.0 * var);
  const double peak = logw.maxCoeff();
  logw = (logw.array() - peak).unaryExpr([](double v) { return v < kLogWeightFloor ? 0.0 : std::exp(v); });
  return logw / logw.sum();
}

Vector mixture_score(const Vector& x, const GaussianMixtureOracle& oracle, double sigma) {
  const Vector r = responsibilities(x, oracle, sigma);
  const double s2 = oracle.base_sigma() * oracle.base_sigma();
  Vector out = Vector::Zero(x.size());
  for (Eigen::Index i = 0; i < r.size(); ++i) {
    if (r(i) == 0.0) continue;
    out += r(i) * gaussian_score(x, oracle.centers().row(i).transpose(), s2, sigma);
  }
  return out;
}

double prop1_bound(const Vector& xi, const Vector& xj, double sigma1) {
  if (xi.size() != xj.size()) throw InvalidInput("prop1_bound: size mismatch");
  if (!(sigma1 > 0.0)) throw InvalidInput("prop1_bound: sigma1 must be positive");
  return 0.5 * std::exp(-(xi - xj).squaredNorm() / (8.0 * sigma1 * sigma1));
}

MonteCarloEstimate empirical_responsibility_mean(const GaussianMixtureOracle& oracle,
                                                 std::size_t i, std::size_t j, double sigma1,
                                                 std::size_t n_samples, std::uint64_t seed) {
  if (i == j) throw InvalidInput("empirical_responsibility_mean: i and j must differ");
  if (i >= oracle.components() || j >= oracle.components())
    throw InvalidInput("empirical_responsibility_mean: component index out of range");
  if (n_samples < 100) throw InvalidInput("empirical_responsibility_mean: need >= 100 samples");

  const double sd = std::sqrt(oracle.component_variance(sigma1));
  const Vector center = oracle.centers().row(static_cast<Eigen::Index>(i)).transpose();
  Rng rng(seed);
  Vector z(center.size());

  // Welford accumulation of r_j.
  double mean = 0.0;
  double m2 = 0.0;
  for (std::size_t k = 0; k < n_samples; ++k) {
    fill_standard_normal(rng, z);
    const Vector x = center + sd * z;
    const double r = responsibilities(x, oracle, sigma1)(static_cast<Eigen::Index>(j));
    const double delta = r - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (r - mean);
  }
  const double var = m2 / static_cast<double>(n_samples - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_samples)), n_samples};
}

}  // namespace scoretune
