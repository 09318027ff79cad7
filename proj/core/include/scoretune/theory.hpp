#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scoretune/schedule.hpp"

namespace scoretune {

/// Law of r = ||x|| for x ~ N(0, sigma^2 I_D).
struct RadialLaw {
  std::int64_t D = 1;
  double sigma = 1.0;

  void validate() const;
};

/// log p(r) = (D-1) log r - D log sigma - r^2/(2 sigma^2) - (D/2 - 1) log 2 - lgamma(D/2).
double radial_log_pdf(double r, const RadialLaw& law);
double radial_pdf(double r, const RadialLaw& law);

struct GaussianApprox {
  double mean = 0.0;
  double variance = 0.0;
};

/// Large-D normal approximation N(sqrt(D) sigma, sigma^2 / 2) of the radial law.
GaussianApprox radial_gaussian_approx(const RadialLaw& law);

/// sqrt(D) / sigma, the typical norm of the score of N(0, sigma^2 I_D).
double expected_score_norm(std::int64_t D, double sigma);

/// Draws n radii. `exact_norm` samples ||x|| from D Gaussian coordinates;
/// otherwise sigma * sqrt(chi^2_D) through a gamma variate. Both are exact.
std::vector<double> sample_radii(const RadialLaw& law, std::size_t n, std::uint64_t seed,
                                 bool exact_norm = true);

/// Kolmogorov-Smirnov statistic of `samples` (sorted internally) against a
/// normal N(mean, variance).
double ks_statistic_normal(std::vector<double> samples, double mean, double variance);

/// Asymptotic p-value of a one-sample KS statistic with sample size n
/// (Stephens' small-sample correction applied to the Kolmogorov series).
double ks_pvalue(double statistic, std::size_t n);

struct Prop3Check {
  double empirical_ratio = 0.0;
  double closed_form_ratio = 0.0;
  double z_score = 0.0;
  double std_error = 0.0;
};

/// Simulates x0 ~ N(0, sigma_prev^2 I_D) and T steps of Langevin dynamics on
/// N(0, sigma_i^2 I_D) with alpha = epsilon sigma_i^2 / sigmaL^2, for n_chains
/// chains. The empirical ratio pools the squares of all D coordinates of all
/// chains (the mean is known to be zero); its standard error is taken as
/// closed_form * sqrt(2 / (n_chains D)).
Prop3Check verify_prop3(double sigma_prev, double sigma_i, double epsilon, double sigmaL, int T,
                        std::int64_t D, std::size_t n_chains, std::uint64_t seed);

/// Per-scale variance of annealed Langevin dynamics on N(mean, base_var I)
/// data started from per-coordinate variance init_var, obtained by iterating
/// v <- (1 - alpha/(base_var + sigma_i^2))^2 v + 2 alpha. Entry i is the
/// variance after the last step at scale i.
std::vector<double> variance_trajectory(const NoiseSchedule& schedule, double epsilon, int T,
                                        double base_var, double init_var);

/// Closed-form s_T^2 / sigma_i^2 for every scale index 2..L, each evaluated
/// with that scale's own realized ratio sigma_{i-1} / sigma_i.
std::vector<double> per_scale_variance_ratios(const NoiseSchedule& schedule, double epsilon, int T);

}  // namespace scoretune
