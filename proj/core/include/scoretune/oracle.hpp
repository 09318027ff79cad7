#pragma once

#include <cstddef>
#include <cstdint>

#include "scoretune/linalg.hpp"

namespace scoretune {

/// A map (x, sigma) -> score of the sigma-perturbed density at x.
/// Implementations are immutable after construction and safe to share
/// between threads.
class ScoreField {
 public:
  virtual ~ScoreField() = default;

  virtual std::int64_t dims() const = 0;

  /// Row-wise scores: row m of the result is the score at row m of `x`.
  virtual Matrix score(const Matrix& x, double sigma) const = 0;

  Vector score(const Vector& x, double sigma) const;
};

/// -(x - mu) / (s2 + sigma^2), the score of N(mu, (s2 + sigma^2) I).
/// Throws DegenerateDistribution when s2 + sigma^2 == 0.
Vector gaussian_score(const Vector& x, const Vector& mu, double s2, double sigma);

/// Equal-weight mixture of isotropic Gaussians N(c_i, base_sigma^2 I). Under
/// perturbation sigma each component has variance base_sigma^2 + sigma^2;
/// base_sigma == 0 is the empirical point-mass mixture.
class GaussianMixtureOracle final : public ScoreField {
 public:
  GaussianMixtureOracle(Matrix centers, double base_sigma);

  std::int64_t dims() const override { return centers_.cols(); }
  std::size_t components() const { return static_cast<std::size_t>(centers_.rows()); }
  double base_sigma() const { return base_sigma_; }
  const Matrix& centers() const { return centers_; }

  /// Component variance under perturbation sigma.
  double component_variance(double sigma) const;

  using ScoreField::score;
  Matrix score(const Matrix& x, double sigma) const override;

  /// Row-wise responsibilities (M x N) computed with dense blocked products
  /// and a per-row max shift.
  Matrix responsibilities(const Matrix& x, double sigma) const;

 private:
  Matrix centers_;
  // Centers shifted by their centroid; distances use the Gram expansion on
  // these so cancellation stays small.
  Matrix centered_;
  RowVector centroid_;
  Vector centered_sq_norms_;
  double base_sigma_;
};

/// r_i(x) = p_i(x) / sum_k p_k(x), evaluated in log space from exact
/// squared distances.
Vector responsibilities(const Vector& x, const GaussianMixtureOracle& oracle, double sigma);

/// sum_i r_i(x) * gaussian_score(x, c_i, base_sigma^2, sigma).
Vector mixture_score(const Vector& x, const GaussianMixtureOracle& oracle, double sigma);

/// (1/2) exp(-||xi - xj||^2 / (8 sigma1^2)).
double prop1_bound(const Vector& xi, const Vector& xj, double sigma1);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  std::size_t samples = 0;
};

/// Monte-Carlo estimate of E_{x ~ p_i}[r_j(x)] where p_i is component i
/// perturbed by sigma1. One mt19937_64 stream seeded with `seed`.
MonteCarloEstimate empirical_responsibility_mean(const GaussianMixtureOracle& oracle,
                                                 std::size_t i, std::size_t j, double sigma1,
                                                 std::size_t n_samples, std::uint64_t seed);

}  // namespace scoretune
