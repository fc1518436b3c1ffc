#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <random>
#include <stdexcept>
#include <vector>

#include "mixres/rng.hpp"

namespace mixres {

using cplx = std::complex<double>;
using ComplexScalar = cplx;

class numeric_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;
inline constexpr double kInvSqrt2Pi = 0.39894228040143267794;
// Above this argument the erfc-based Mills ratio is replaced by its
// asymptotic series; erfc is still well inside the normal range here.
inline constexpr double kMillsSwitch = 30.0;

// Phi(-x)/phi(x) for large positive x.
inline double mills_reciprocal_asymptotic(double x) {
  const double r = 1.0 / (x * x);
  const double series =
      1.0 + r * (-1.0 + r * (3.0 + r * (-15.0 + r * (105.0 + r * (-945.0)))));
  return series / x;
}
}  // namespace detail

inline double std_normal_pdf(double x) {
  return detail::kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

inline double log_std_normal_pdf(double x) { return -0.5 * x * x - detail::kLogSqrt2Pi; }

// erfc keeps relative accuracy in the lower tail, so Phi(x) is accurate for
// negative x down to the underflow limit (x ~ -38.5).
inline double std_normal_cdf(double x) {
  return 0.5 * std::erfc(-x * std::numbers::sqrt2 * 0.5);
}

// log Phi(x), finite for every finite x.
inline double log_std_normal_cdf(double x) {
  if (x < -detail::kMillsSwitch) {
    return log_std_normal_pdf(x) + std::log(detail::mills_reciprocal_asymptotic(-x));
  }
  if (x > 5.0) return std::log1p(-std_normal_cdf(-x));
  return std::log(std_normal_cdf(x));
}

// phi(x)/Phi(-x)
inline double mills_ratio(double x) {
  if (x > detail::kMillsSwitch) return 1.0 / detail::mills_reciprocal_asymptotic(x);
  return std::exp(log_std_normal_pdf(x) - log_std_normal_cdf(-x));
}

// phi(z)^2 / (Phi(z) Phi(-z)) as a product of two Mills ratios.
inline double d_term(double zeta) { return mills_ratio(zeta) * mills_ratio(-zeta); }

inline double log_d_term(double zeta) {
  const double a = std::abs(zeta);
  return 2.0 * log_std_normal_pdf(a) - log_std_normal_cdf(a) - log_std_normal_cdf(-a);
}

// d/dzeta of d_term.
inline double d_term_derivative(double zeta) {
  const double mp = mills_ratio(zeta);
  const double mm = mills_ratio(-zeta);
  return mp * mm * (mp - mm - 2.0 * zeta);
}

inline double default_wirtinger_step(cplx theta) { return 1e-5 * (1.0 + std::abs(theta)); }

// Central-difference estimate of df/dtheta* = (df/dx + i df/dy) / 2.
template <class F>
cplx wirtinger_derivative(F&& f, cplx theta, double step) {
  if (!(step > 0.0)) throw std::invalid_argument("wirtinger_derivative: step must be positive");
  const cplx fxp = f(theta + cplx(step, 0.0));
  const cplx fxm = f(theta - cplx(step, 0.0));
  const cplx fyp = f(theta + cplx(0.0, step));
  const cplx fym = f(theta - cplx(0.0, step));
  for (const cplx& v : {fxp, fxm, fyp, fym}) {
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag()))
      throw numeric_error("wirtinger_derivative: non-finite function value at stencil point");
  }
  const cplx dx = (fxp - fxm) / (2.0 * step);
  const cplx dy = (fyp - fym) / (2.0 * step);
  return 0.5 * (dx + cplx(0.0, 1.0) * dy);
}

template <class F>
cplx wirtinger_derivative(F&& f, cplx theta) {
  return wirtinger_derivative(std::forward<F>(f), theta, default_wirtinger_step(theta));
}

// Two-step Richardson extrapolation of the central difference (error O(h^4)).
template <class F>
cplx wirtinger_derivative_richardson(F&& f, cplx theta, double step) {
  const cplx coarse = wirtinger_derivative(f, theta, step);
  const cplx fine = wirtinger_derivative(f, theta, 0.5 * step);
  return (4.0 * fine - coarse) / 3.0;
}

inline cplx sample_complex_gaussian(RngStream& rng, double variance) {
  std::normal_distribution<double> n(0.0, std::sqrt(0.5 * variance));
  const double re = n(rng);
  const double im = n(rng);
  return {re, im};
}

inline std::vector<cplx> sample_complex_gaussian(std::size_t n, double variance, RngStream& rng) {
  if (!(variance > 0.0)) throw std::invalid_argument("sample_complex_gaussian: variance must be positive");
  std::vector<cplx> out(n);
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * variance));
  for (auto& z : out) {
    const double re = nd(rng);
    const double im = nd(rng);
    z = {re, im};
  }
  return out;
}

}  // namespace mixres
