#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scoretune/linalg.hpp"

namespace scoretune {

// ---------------------------------------------------------------------------
// Gaussian CDF
// ---------------------------------------------------------------------------

/// Standard normal CDF, via the C library erfc. Absolute error is at the
/// level of double rounding over the whole real line.
double std_normal_cdf(double x);

/// Upper tail 1 - Phi(x), computed without cancellation for large x.
double std_normal_sf(double x);

// ---------------------------------------------------------------------------
// Pairwise distance statistics (initial noise scale)
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultDistanceSubsample = 10000;

struct PairwiseStats {
  double max = 0.0;
  double median = 0.0;
  double mean = 0.0;
  std::size_t points = 0;  // rows actually used after subsampling
  std::size_t pairs = 0;
};

/// Picks min(subsample, N) distinct row indices uniformly without replacement
/// (partial Fisher-Yates on mt19937_64 seeded with `seed`), returned sorted.
/// When N <= subsample every row is used.
std::vector<std::size_t> subsample_rows(std::size_t n_rows, std::size_t subsample,
                                        std::uint64_t seed);

/// Euclidean distance statistics over all pairs of the (sub)sampled rows.
/// `with_median` controls whether all N(N-1)/2 distances are kept in memory.
PairwiseStats pairwise_distance_stats(const Matrix& data, std::size_t subsample,
                                      std::uint64_t seed, bool with_median = true);

double max_pairwise_distance(const Matrix& data, std::size_t subsample, std::uint64_t seed);
double median_pairwise_distance(const Matrix& data, std::size_t subsample, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Geometric noise schedule (overlap constant C)
// ---------------------------------------------------------------------------

inline constexpr double kDefaultTargetC = 0.5;

/// Probability that a sample of the radial law at scale sigma_i falls in the
/// three-sigma window of the radial law at sigma_{i-1} = gamma * sigma_i:
///   Phi(sqrt(2D)(gamma-1) + 3 gamma) - Phi(sqrt(2D)(gamma-1) - 3 gamma).
double overlap_C(double gamma, std::int64_t D);

/// Finds gamma > 1 with overlap_C(gamma, D) == target_C by bracketing and
/// bisection on the decreasing branch. Throws InfeasibleTarget when
/// target_C >= overlap_C(1, D) or when C never falls to the target (D <= 4).
double solve_gamma(std::int64_t D, double target_C);

struct NoiseSchedule {
  std::vector<double> sigmas;  // descending, sigmas.front() == sigma1, sigmas.back() == sigmaL
  double gamma = 1.0;          // sigmas[i-1] / sigmas[i]
  std::int64_t D = 1;
  double target_C = kDefaultTargetC;  // C the schedule was solved for (informational)

  std::size_t L() const { return sigmas.size(); }
  double sigma1() const { return sigmas.front(); }
  double sigmaL() const { return sigmas.back(); }

  /// Geometric progression from sigma1 to sigmaL with L entries, endpoints
  /// stored exactly as given.
  static NoiseSchedule geometric(double sigma1, double sigmaL, std::size_t L, std::int64_t D,
                                 double target_C = kDefaultTargetC);

  /// Throws InvalidInput if the invariants do not hold.
  void validate() const;

  /// Stable identifier derived from the schedule contents.
  std::string id() const;
};

/// gamma* = solve_gamma(D, target_C); L = max(2, round(1 + ln(sigma1/sigmaL)/ln gamma*));
/// the realized gamma is (sigma1/sigmaL)^(1/(L-1)).
NoiseSchedule build_schedule(double sigma1, double sigmaL, std::int64_t D,
                             double target_C = kDefaultTargetC);

std::string schedule_to_json(const NoiseSchedule& schedule);
NoiseSchedule schedule_from_json(const std::string& text);

// ---------------------------------------------------------------------------
// Langevin step size
// ---------------------------------------------------------------------------

struct LangevinConfig {
  double epsilon = 0.0;
  int T = 1;
  bool denoise = true;

  void validate() const;
};

/// Per-scale step size alpha_i = epsilon * sigma_i^2 / sigma_L^2.
double step_size(const NoiseSchedule& schedule, std::size_t i, double epsilon);
std::vector<double> step_sizes(const NoiseSchedule& schedule, double epsilon);

/// s_T^2 / sigma_i^2 for a chain started at N(0, sigma_{i-1}^2 I) and run T
/// steps on N(0, sigma_i^2 I):
///   (1 - eps/sL^2)^{2T} (gamma^2 - c) + c,   c = 2 eps / (sL^2 - sL^2 (1 - eps/sL^2)^2).
/// Requires 0 < epsilon < sigmaL^2; throws DivergentRegime otherwise.
double langevin_variance_ratio(double gamma, double epsilon, double sigmaL, int T);

/// `count` log-spaced points covering [lo, hi] inclusive.
std::vector<double> log_spaced(double lo, double hi, std::size_t count);

/// 200 points log-spaced over [sigmaL^2 * 1e-6, sigmaL^2 * 0.5].
std::vector<double> default_epsilon_grid(double sigmaL, std::size_t count = 200);

/// Grid point minimizing |ratio - 1|; ties go to the smaller epsilon. Points
/// outside (0, sigmaL^2) are skipped; InvalidInput if none remain.
LangevinConfig solve_epsilon(double gamma, double sigmaL, int T, std::span<const double> grid);
LangevinConfig solve_epsilon(const NoiseSchedule& schedule, int T, std::span<const double> grid);

}  // namespace scoretune
