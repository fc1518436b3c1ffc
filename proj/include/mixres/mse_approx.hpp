#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "mixres/bounds.hpp"
#include "mixres/estimators.hpp"
#include "mixres/lgo.hpp"
#include "mixres/parallel.hpp"
#include "mixres/quadrature.hpp"

namespace mixres {

enum class SatMethod { closed_form_quadrature, monte_carlo };

struct SaturationEstimate {
  double prob = 0.0;
  double std_err = 0.0;
  SatMethod method = SatMethod::closed_form_quadrature;
};

inline SaturationEstimate saturation_prob_closed(const LgoModel& m, const QuadratureRule& q, unsigned threads = 1) {
  if (m.n_q() < 1) throw config_error("saturation probability: requires n_q >= 1");
  if (q.dim() != m.M()) throw config_error("saturation probability: rule dimension does not match model");
  const Expectation e = expect(q, 1, [&](const VecC& theta, VecR& out) {
    out[0] = saturation_prob_given_theta(m, theta);
  }, threads);
  SaturationEstimate s;
  s.prob = std::clamp(e.mean[0], 0.0, 1.0);
  s.std_err = q.kind == QuadKind::monte_carlo ? e.se[0] : 0.0;
  s.method = SatMethod::closed_form_quadrature;
  return s;
}

// Fraction of prior draws for which S independent quantized vectors coincide.
inline SaturationEstimate saturation_prob_mc(const LgoModel& m, std::size_t K, std::size_t S, const RngStream& rng,
                                             unsigned threads = 1) {
  if (m.n_q() < 1) throw config_error("saturation probability: requires n_q >= 1");
  if (K < 1 || S < 2) throw config_error("saturation_prob_mc: need K >= 1 and S >= 2");
  const std::vector<char> hit = parallel_map<char>(K, threads, [&](std::size_t k) -> char {
    RngStream sub = rng.split(static_cast<std::uint64_t>(k));
    const VecC theta = sample_prior(m, sub);
    const VecC first = generate_quantized(m, theta, sub);
    for (std::size_t s = 1; s < S; ++s)
      if (generate_quantized(m, theta, sub) != first) return 0;
    return 1;
  });
  const auto count = static_cast<std::size_t>(std::count(hit.begin(), hit.end(), char{1}));
  SaturationEstimate r;
  r.prob = static_cast<double>(count) / static_cast<double>(K);
  r.std_err = std::sqrt(r.prob * (1.0 - r.prob) / static_cast<double>(K));
  r.method = SatMethod::monte_carlo;
  return r;
}

namespace detail {
// Sum over cells of P(cell) Var(x | cell) for x ~ Normal(0, 1/2) split at
// the given thresholds.
inline double cell_conditioned_variance(std::vector<double> thresholds) {
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  // Work with z = sqrt2 x ~ Normal(0, 1).
  std::vector<double> edges;
  edges.push_back(-INFINITY);
  for (double t : thresholds) edges.push_back(std::numbers::sqrt2 * t);
  edges.push_back(INFINITY);
  auto phi = [](double z) { return std::isfinite(z) ? std_normal_pdf(z) : 0.0; };
  auto zphi = [](double z) { return std::isfinite(z) ? z * std_normal_pdf(z) : 0.0; };
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    const double a = edges[i], b = edges[i + 1];
    // Mass from the tail nearer to zero keeps relative accuracy.
    const double Z = (b <= 0.0) ? std_normal_cdf(b) - std_normal_cdf(a) : std_normal_cdf(-a) - std_normal_cdf(-b);
    if (!(Z > 0.0)) continue;
    const double m1 = phi(a) - phi(b);
    total += Z + (zphi(a) - zphi(b)) - m1 * m1 / Z;
  }
  return 0.5 * total;
}
}  // namespace detail

// Error covariance of the posterior mean when the only data are noiseless
// 1-bit measurements: the prior truncated to the observed decision cell.
inline MatC saturated_one_bit_mse(const LgoModel& m) {
  if (m.n_q() < 1) throw config_error("saturated_one_bit_mse: requires n_q >= 1");
  const int M = m.M();
  const double sq = std::sqrt(m.rho_q());
  VecR diag(M);
  for (int r = 0; r < M; ++r) {
    std::vector<double> tr, ti;
    for (const auto& g : m.groups()) {
      if (g.row != r) continue;
      tr.push_back(g.tau.real() / sq);
      ti.push_back(g.tau.imag() / sq);
    }
    diag[r] = detail::cell_conditioned_variance(tr) + detail::cell_conditioned_variance(ti);
  }
  const MatC U = m.T1() / sq;  // u = U theta ~ CN(0, I)
  return U.adjoint() * diag.asDiagonal() * U;
}

struct MseApproxParts {
  MatC approx;
  MatC saturated;  // MSE matrix used inside the saturation event
  MatC wbcrb;
  SaturationEstimate pr_sat;
};

// Pr(N) * (saturated-regime MSE) + (1 - Pr(N)) * WBCRB. The saturated regime
// uses the analog-only LMMSE error, or the truncated-prior 1-bit error when
// there are no analog measurements.
inline MseApproxParts mse_approx_parts(const LgoModel& m, const QuadratureRule& q, const MatC& wbcrb,
                                       unsigned threads = 1) {
  if (wbcrb.rows() != m.M() || wbcrb.cols() != m.M()) throw config_error("mse_approx: WBCRB has wrong size");
  MseApproxParts r;
  r.wbcrb = wbcrb;
  r.saturated = m.n_a() > 0 ? lmmse_analog_mse(m) : saturated_one_bit_mse(m);
  if (m.n_q() == 0) {
    r.pr_sat = SaturationEstimate{1.0, 0.0, SatMethod::closed_form_quadrature};
  } else {
    r.pr_sat = saturation_prob_closed(m, q, threads);
  }
  const double p = r.pr_sat.prob;
  r.approx = p * r.saturated + (1.0 - p) * wbcrb;
  return r;
}

inline MatC mse_approx(const LgoModel& m, const QuadratureRule& q, const MatC& wbcrb, unsigned threads = 1) {
  return mse_approx_parts(m, q, wbcrb, threads).approx;
}

}  // namespace mixres
