#include "scoretune/theory.hpp"

#include <algorithm>
#include <limits>
#include <string>
#include <cmath>
#include <numbers>
#include <random>

#include "scoretune/error.hpp"
#include "scoretune/linalg.hpp"
#include "scoretune/random.hpp"

namespace scoretune {

void RadialLaw::validate() const {
  if (D < 1) throw InvalidInput("radial law: D must be at least 1");
  if (!(sigma > 0.0)) throw InvalidInput("radial law: sigma must be positive");
}

double radial_log_pdf(double r, const RadialLaw& law) {
  law.validate();
  if (r < 0.0) throw InvalidInput("radial_pdf: r must be non-negative");
  const double d = static_cast<double>(law.D);
  const double norm = (0.5 * d - 1.0) * std::numbers::ln2 + std::lgamma(0.5 * d);
  const double z = r / law.sigma;
  if (r == 0.0) {
    if (law.D == 1) return -norm - std::log(law.sigma);
    return -std::numeric_limits<double>::infinity();
  }
  // (D-1) log r - D log sigma == (D-1) log(r/sigma) - log sigma
  return (d - 1.0) * std::log(z) - std::log(law.sigma) - 0.5 * z * z - norm;
}

double radial_pdf(double r, const RadialLaw& law) { return std::exp(radial_log_pdf(r, law)); }

GaussianApprox radial_gaussian_approx(const RadialLaw& law) {
  law.validate();
  return {std::sqrt(static_cast<double>(law.D)) * law.sigma, 0.5 * law.sigma * law.sigma};
}

double expected_score_norm(std::int64_t D, double sigma) {
  if (D < 1) throw InvalidInput("expected_score_norm: D must be at least 1");
  if (!(sigma > 0.0)) throw InvalidInput("expected_score_norm: sigma must be positive");
  return std::sqrt(static_cast<double>(D)) / sigma;
}

std::vector<double> sample_radii(const RadialLaw& law, std::size_t n, std::uint64_t seed,
                                 bool exact_norm) {
  law.validate();
  Rng rng(seed);
  std::vector<double> out(n);
  if (exact_norm) {
    std::normal_distribution<double> n01(0.0, 1.0);
    for (auto& r : out) {
      double sq = 0.0;
      for (std::int64_t d = 0; d < law.D; ++d) {
        const double z = n01(rng);
        sq += z * z;
      }
      r = law.sigma * std::sqrt(sq);
    }
  } else {
    std::gamma_distribution<double> chi2(0.5 * static_cast<double>(law.D), 2.0);
    for (auto& r : out) r = law.sigma * std::sqrt(chi2(rng));
  }
  return out;
}

double ks_statistic_normal(std::vector<double> samples, double mean, double variance) {
  if (samples.empty()) throw InvalidInput("ks_statistic_normal: no samples");
  if (!(variance > 0.0)) throw InvalidInput("ks_statistic_normal: variance must be positive");
  std::sort(samples.begin(), samples.end());
  const double sd = std::sqrt(variance);
  const double n = static_cast<double>(samples.size());
  double stat = 0.0;
  for (std::size_t k = 0; k < samples.size(); ++k) {
    const double F = std_normal_cdf((samples[k] - mean) / sd);
    const double above = static_cast<double>(k + 1) / n - F;
    const double below = F - static_cast<double>(k) / n;
    stat = std::max({stat, above, below});
  }
  return stat;
}

double ks_pvalue(double statistic, std::size_t n) {
  if (n == 0) throw InvalidInput("ks_pvalue: n must be positive");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * statistic;
  if (lambda <= 0.0) return 1.0;
  constexpr double pi = std::numbers::pi;
  if (lambda < 1.18) {
    // Theta-function form converges quickly for small lambda.
    const double y = std::exp(-pi * pi / (8.0 * lambda * lambda));
    double sum = 0.0;
    for (int k = 1; k <= 50; ++k) sum += std::pow(y, (2 * k - 1) * (2 * k - 1));
    return std::clamp(1.0 - std::sqrt(2.0 * pi) / lambda * sum, 0.0, 1.0);
  }
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-300) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

Prop3Check verify_prop3(double sigma_prev, double sigma_i, double epsilon, double sigmaL, int T,
                        std::int64_t D, std::size_t n_chains, std::uint64_t seed) {
  if (!(sigma_prev > 0.0) || !(sigma_i > 0.0)) throw InvalidInput("verify_prop3: scales must be positive");
  if (D < 1) throw InvalidInput("verify_prop3: D must be at least 1");
  if (n_chains < 100) throw InvalidInput("verify_prop3: need at least 100 chains");
  if (T < 0) throw InvalidInput("verify_prop3: T must be non-negative");

  Prop3Check out;
  // Also validates 0 < epsilon < sigmaL^2.
  out.closed_form_ratio = langevin_variance_ratio(sigma_prev / sigma_i, epsilon, sigmaL, T);

  const double alpha = epsilon * (sigma_i / sigmaL) * (sigma_i / sigmaL);
  const double shrink = 1.0 - alpha / (sigma_i * sigma_i);
  const double kick = std::sqrt(2.0 * alpha);

  Rng rng(seed);
  Matrix x(static_cast<Eigen::Index>(n_chains), D);
  fill_standard_normal(rng, x);
  x *= sigma_prev;
  Matrix z(x.rows(), x.cols());
  for (int t = 0; t < T; ++t) {
    fill_standard_normal(rng, z);
    // Exact score of N(0, sigma_i^2 I) is -x / sigma_i^2.
    x = shrink * x + kick * z;
    if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e6 * sigma_prev)
      throw Diverged("verify_prop3: chains diverged at step " + std::to_string(t + 1));
  }

  const double count = static_cast<double>(n_chains) * static_cast<double>(D);
  out.empirical_ratio = x.squaredNorm() / count / (sigma_i * sigma_i);
  out.std_error = out.closed_form_ratio * std::sqrt(2.0 / count);
  out.z_score = (out.empirical_ratio - out.closed_form_ratio) / out.std_error;
  return out;
}

std::vector<double> variance_trajectory(const NoiseSchedule& schedule, double epsilon, int T,
                                        double base_var, double init_var) {
  if (T < 0) throw InvalidInput("variance_trajectory: T must be non-negative");
  if (base_var < 0.0 || init_var < 0.0) throw InvalidInput("variance_trajectory: negative variance");
  std::vector<double> out;
  out.reserve(schedule.L());
  double v = init_var;
  for (std::size_t i = 0; i < schedule.L(); ++i) {
    const double alpha = step_size(schedule, i, epsilon);
    const double shrink = 1.0 - alpha / (base_var + schedule.sigmas[i] * schedule.sigmas[i]);
    for (int t = 0; t < T; ++t) v = shrink * shrink * v + 2.0 * alpha;
    out.push_back(v);
  }
  return out;
}

std::vector<double> per_scale_variance_ratios(const NoiseSchedule& schedule, double epsilon, int T) {
  std::vector<double> out;
  for (std::size_t i = 1; i < schedule.L(); ++i) {
    const double gamma = schedule.sigmas[i - 1] / schedule.sigmas[i];
    out.push_back(langevin_variance_ratio(gamma, epsilon, schedule.sigmaL(), T));
  }
  return out;
}

}  // namespace scoretune
