#pragma once

// Independent reference computations used only by the tests.

#include <cmath>
#include <functional>
#include <numbers>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "scoretune/linalg.hpp"

namespace scoretune::test {

/// Phi(x) as 1/2 + integral_0^x of the standard normal density.
inline double normal_cdf_by_quadrature(double x) {
  auto density = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * std::numbers::pi); };
  if (x == 0.0) return 0.5;
  const double part = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      density, 0.0, std::abs(x), 15, 1e-15);
  return x > 0 ? 0.5 + part : 0.5 - part;
}

inline double overlap_by_quadrature(double gamma, double D) {
  const double shift = std::sqrt(2.0 * D) * (gamma - 1.0);
  return normal_cdf_by_quadrature(shift + 3.0 * gamma) - normal_cdf_by_quadrature(shift - 3.0 * gamma);
}

/// Central-difference gradient of f at x with per-coordinate step h.
inline Vector finite_difference_gradient(const std::function<double(const Vector&)>& f,
                                         const Vector& x, double h) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector up = x;
    Vector down = x;
    up(i) += h;
    down(i) -= h;
    g(i) = (f(up) - f(down)) / (2.0 * h);
  }
  return g;
}

inline double max_relative_error(const Vector& got, const Vector& want, double floor = 1e-8) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < got.size(); ++i)
    worst = std::max(worst, std::abs(got(i) - want(i)) / std::max(std::abs(want(i)), floor));
  return worst;
}

}  // namespace scoretune::test

/// Absolute-tolerance check that reports both values on failure.
#define CHECK_NEAR(got, want, tol)                                      \
  do {                                                                  \
    const double got_ = (got);                                          \
    const double want_ = (want);                                        \
    INFO("got ", got_, " want ", want_, " tol ", (tol));                \
    CHECK(std::abs(got_ - want_) <= (tol));                             \
  } while (0)
