#include "scoretune/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "scoretune/error.hpp"
#include "scoretune/random.hpp"

namespace scoretune {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;

// Rows per block when forming Gram blocks for pairwise distances.
constexpr Eigen::Index kDistanceBlock = 512;

template <typename Visit>
void for_each_pair_distance(const Matrix& points, Visit&& visit) {
  const Eigen::Index n = points.rows();
  const Vector sq = points.rowwise().squaredNorm();
  Matrix gram;
  for (Eigen::Index start = 0; start < n; start += kDistanceBlock) {
    const Eigen::Index rows = std::min(kDistanceBlock, n - start);
    const Eigen::Index cols = n - start;
    gram.noalias() = points.middleRows(start, rows) * points.bottomRows(cols).transpose();
    for (Eigen::Index r = 0; r < rows; ++r) {
      const Eigen::Index i = start + r;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d2 = sq(i) + sq(j) - 2.0 * gram(r, j - start);
        visit(std::sqrt(std::max(d2, 0.0)));
      }
    }
  }
}

}  // namespace

double std_normal_cdf(double x) { return 0.5 * std::erfc(-x * kInvSqrt2); }

double std_normal_sf(double x) { return 0.5 * std::erfc(x * kInvSqrt2); }

std::vector<std::size_t> subsample_rows(std::size_t n_rows, std::size_t subsample,
                                        std::uint64_t seed) {
  std::vector<std::size_t> idx(n_rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  if (n_rows <= subsample) return idx;
  Rng rng(seed);
  for (std::size_t k = 0; k < subsample; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n_rows - 1);
    std::swap(idx[k], idx[pick(rng)]);
  }
  idx.resize(subsample);
  std::sort(idx.begin(), idx.end());
  return idx;
}

PairwiseStats pairwise_distance_stats(const Matrix& data, std::size_t subsample,
                                      std::uint64_t seed, bool with_median) {
  if (data.rows() < 2) throw InvalidInput("pairwise distances need at least 2 points");
  if (subsample < 2) throw InvalidInput("subsample must be at least 2");

  const auto rows = subsample_rows(static_cast<std::size_t>(data.rows()), subsample, seed);
  Matrix points(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t k = 0; k < rows.size(); ++k)
    points.row(static_cast<Eigen::Index>(k)) = data.row(static_cast<Eigen::Index>(rows[k]));
  // Centering keeps the Gram expansion well conditioned and translation invariant.
  const RowVector centroid = points.colwise().mean();
  points.rowwise() -= centroid;

  PairwiseStats stats;
  stats.points = rows.size();
  stats.pairs = rows.size() * (rows.size() - 1) / 2;

  std::vector<double> all;
  if (with_median) all.reserve(stats.pairs);
  double sum = 0.0;
  double max = 0.0;
  for_each_pair_distance(points, [&](double d) {
    sum += d;
    max = std::max(max, d);
    if (with_median) all.push_back(d);
  });
  stats.max = max;
  stats.mean = sum / static_cast<double>(stats.pairs);

  if (with_median) {
    const std::size_t mid = all.size() / 2;
    std::nth_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(mid), all.end());
    double median = all[mid];
    if (all.size() % 2 == 0) {
      const double below = *std::max_element(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(mid));
      median = 0.5 * (median + below);
    }
    stats.median = median;
  }
  return stats;
}

double max_pairwise_distance(const Matrix& data, std::size_t subsample, std::uint64_t seed) {
  return pairwise_distance_stats(data, subsample, seed, false).max;
}

double median_pairwise_distance(const Matrix& data, std::size_t subsample, std::uint64_t seed) {
  return pairwise_distance_stats(data, subsample, seed, true).median;
}

double overlap_C(double gamma, std::int64_t D) {
  const double shift = std::sqrt(2.0 * static_cast<double>(D)) * (gamma - 1.0);
  const double hi = shift + 3.0 * gamma;
  const double lo = shift - 3.0 * gamma;
  // Pick the form that subtracts the two smallest tail masses.
  if (lo > 0.0) return std_normal_sf(lo) - std_normal_sf(hi);
  if (hi < 0.0) return std_normal_cdf(hi) - std_normal_cdf(lo);
  return 1.0 - std_normal_sf(hi) - std_normal_cdf(lo);
}

double solve_gamma(std::int64_t D, double target_C) {
  if (D < 1) throw InvalidInput("solve_gamma: D must be positive");
  if (!(target_C > 0.0 && target_C < 1.0))
    throw InvalidInput("solve_gamma: target_C must lie in (0, 1)");
  const double at_one = overlap_C(1.0, D);
  if (target_C >= at_one) {
    char msg[160];
    std::snprintf(msg, sizeof msg,
                  "target C=%.6g is not below overlap_C(1, D=%lld)=%.6g; no gamma > 1 reaches it",
                  target_C, static_cast<long long>(D), at_one);
    throw InfeasibleTarget(msg);
  }

  // f(gamma) = C(gamma) - target is positive on [1, peak] and beyond the peak
  // until C drops back under C(1); there is a single sign change after that.
  auto f = [&](double g) { return overlap_C(g, D) - target_C; };
  double lo = 1.0;
  double step = 1e-4;
  double hi = 1.0 + step;
  while (f(hi) >= 0.0) {
    lo = hi;
    step *= 2.0;
    hi = 1.0 + step;
    if (step > 1e6) {
      char msg[160];
      std::snprintf(msg, sizeof msg,
                    "overlap C never drops to %.6g for D=%lld (C stays near 1 when sqrt(2D) <= 3)",
                    target_C, static_cast<long long>(D));
      throw InfeasibleTarget(msg);
    }
  }

  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (f(mid) >= 0.0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * hi) break;
  }
  return std::abs(f(lo)) <= std::abs(f(hi)) ? lo : hi;
}

NoiseSchedule NoiseSchedule::geometric(double sigma1, double sigmaL, std::size_t L, std::int64_t D,
                                       double target_C) {
  if (!(sigmaL > 0.0) || !(sigma1 > sigmaL))
    throw InvalidInput("geometric schedule requires sigma1 > sigmaL > 0");
  if (L < 2) throw InvalidInput("geometric schedule requires L >= 2");
  if (D < 1) throw InvalidInput("geometric schedule requires D >= 1");

  NoiseSchedule s;
  s.D = D;
  s.target_C = target_C;
  const double log_ratio = std::log(sigma1 / sigmaL);
  const double steps = static_cast<double>(L - 1);
  s.gamma = std::exp(log_ratio / steps);
  s.sigmas.resize(L);
  s.sigmas.front() = sigma1;
  for (std::size_t i = 1; i + 1 < L; ++i)
    s.sigmas[i] = sigma1 * std::exp(-log_ratio * static_cast<double>(i) / steps);
  s.sigmas.back() = sigmaL;
  return s;
}

void NoiseSchedule::validate() const {
  if (sigmas.size() < 2) throw InvalidInput("schedule needs at least two scales");
  if (D < 1) throw InvalidInput("schedule dimensionality must be positive");
  if (!(gamma > 1.0)) throw InvalidInput("schedule ratio gamma must exceed 1");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0) || !std::isfinite(sigmas[i]))
      throw InvalidInput("schedule scales must be positive and finite");
    if (i > 0) {
      if (!(sigmas[i] < sigmas[i - 1])) throw InvalidInput("schedule must be strictly decreasing");
      const double ratio = sigmas[i - 1] / sigmas[i];
      if (std::abs(ratio / gamma - 1.0) > 1e-10)
        throw InvalidInput("schedule is not geometric with the stored gamma");
    }
  }
}

std::string NoiseSchedule::id() const {
  // FNV-1a over the raw scale bits plus D.
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffU;
      h *= 1099511628211ULL;
    }
  };
  mix(static_cast<std::uint64_t>(D));
  for (double s : sigmas) {
    std::uint64_t bits;
    static_assert(sizeof bits == sizeof s);
    std::memcpy(&bits, &s, sizeof bits);
    mix(bits);
  }
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

NoiseSchedule build_schedule(double sigma1, double sigmaL, std::int64_t D, double target_C) {
  if (!(sigmaL > 0.0) || !(sigma1 > sigmaL))
    throw InvalidInput("build_schedule requires sigma1 > sigmaL > 0");
  const double gamma_star = solve_gamma(D, target_C);
  const double raw = 1.0 + std::log(sigma1 / sigmaL) / std::log(gamma_star);
  const auto L = static_cast<std::size_t>(std::max(2.0, std::round(raw)));
  return NoiseSchedule::geometric(sigma1, sigmaL, L, D, target_C);
}

std::string schedule_to_json(const NoiseSchedule& s) {
  nlohmann::ordered_json j;
  j["format"] = "scoretune.schedule";
  j["version"] = 1;
  j["sigma1"] = s.sigma1();
  j["sigmaL"] = s.sigmaL();
  j["L"] = s.L();
  j["gamma"] = s.gamma;
  j["D"] = s.D;
  j["target_C"] = s.target_C;
  j["sigmas"] = s.sigmas;
  return j.dump(2);
}

NoiseSchedule schedule_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("schedule JSON: ") + e.what());
  }
  try {
    if (j.value("format", std::string{}) != "scoretune.schedule")
      throw FormatError("schedule JSON: missing or wrong \"format\"");
    if (j.at("version").get<int>() != 1) throw FormatError("schedule JSON: unsupported version");
    NoiseSchedule s;
    s.sigmas = j.at("sigmas").get<std::vector<double>>();
    s.gamma = j.at("gamma").get<double>();
    s.D = j.at("D").get<std::int64_t>();
    s.target_C = j.value("target_C", kDefaultTargetC);
    if (j.at("L").get<std::size_t>() != s.sigmas.size())
      throw FormatError("schedule JSON: L does not match the number of sigmas");
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("schedule JSON: ") + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("schedule JSON: ") + e.what());
  }
}

void LangevinConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidInput("epsilon must be positive");
  if (T < 1) throw InvalidInput("T must be at least 1");
}

double step_size(const NoiseSchedule& schedule, std::size_t i, double epsilon) {
  const double ratio = schedule.sigmas.at(i) / schedule.sigmaL();
  return epsilon * ratio * ratio;
}

std::vector<double> step_sizes(const NoiseSchedule& schedule, double epsilon) {
  std::vector<double> out(schedule.L());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = step_size(schedule, i, epsilon);
  return out;
}

double langevin_variance_ratio(double gamma, double epsilon, double sigmaL, int T) {
  if (T < 0) throw InvalidInput("T must be non-negative");
  if (!(sigmaL > 0.0)) throw InvalidInput("sigmaL must be positive");
  if (!(epsilon > 0.0)) throw InvalidInput("epsilon must be positive");
  const double u = epsilon / (sigmaL * sigmaL);
  if (!(u < 1.0)) throw DivergentRegime("epsilon must be below sigmaL^2");
  const double g2 = gamma * gamma;
  if (T == 0) return g2;
  // 2u / (1 - (1-u)^2) simplified to 2 / (2 - u); the raw form cancels badly as u -> 0.
  const double c = 2.0 / (2.0 - u);
  const double contraction = std::exp(2.0 * static_cast<double>(T) * std::log1p(-u));
  return contraction * (g2 - c) + c;
}

std::vector<double> log_spaced(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi >= lo)) throw InvalidInput("log_spaced requires 0 < lo <= hi");
  if (count == 0) return {};
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t k = 0; k < count; ++k)
    out[k] = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(count - 1));
  out.front() = lo;
  out.back() = hi;
  return out;
}

std::vector<double> default_epsilon_grid(double sigmaL, std::size_t count) {
  const double s2 = sigmaL * sigmaL;
  return log_spaced(s2 * 1e-6, s2 * 0.5, count);
}

LangevinConfig solve_epsilon(double gamma, double sigmaL, int T, std::span<const double> grid) {
  if (grid.empty()) throw InvalidInput("epsilon grid is empty");
  if (T < 1) throw InvalidInput("T must be at least 1");
  double best_eps = std::numeric_limits<double>::quiet_NaN();
  double best_gap = std::numeric_limits<double>::infinity();
  const double limit = sigmaL * sigmaL;
  for (double eps : grid) {
    // Points at or beyond sigmaL^2 are in the divergent regime; never select them.
    if (!(eps > 0.0 && eps < limit)) continue;
    const double gap = std::abs(langevin_variance_ratio(gamma, eps, sigmaL, T) - 1.0);
    if (gap < best_gap || (gap == best_gap && eps < best_eps)) {
      best_gap = gap;
      best_eps = eps;
    }
  }
  if (std::isnan(best_eps)) throw InvalidInput("no epsilon grid point lies in (0, sigmaL^2)");
  return LangevinConfig{best_eps, T, true};
}

LangevinConfig solve_epsilon(const NoiseSchedule& schedule, int T, std::span<const double> grid) {
  return solve_epsilon(schedule.gamma, schedule.sigmaL(), T, grid);
}

}  // namespace scoretune
