#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "mixres/lgo.hpp"
#include "mixres/parallel.hpp"

namespace mixres {

struct McConfig {
  std::size_t S = 1000;  // prior samples per posterior mean
  std::size_t K = 1000;  // trials
  std::uint64_t seed = 1;
  unsigned threads = 1;

  void validate() const {
    if (S < 1) throw config_error("McConfig: S must be >= 1");
    if (K < 1) throw config_error("McConfig: K must be >= 1");
  }
};

struct EstimatorResult {
  VecC estimate;
  double weights_ess = 1.0;
  bool degenerate = false;
};

using Estimator = std::function<EstimatorResult(const LgoModel&, const MixedSample&, RngStream&)>;

namespace detail {
inline void check_measurements(const LgoModel& m, const VecC& x_a, const VecC& x_q) {
  if (x_a.size() != m.N_a()) throw config_error("x_a length does not match model");
  if (x_q.size() != m.N_q()) throw config_error("x_q length does not match model");
}
}  // namespace detail

// Self-normalized posterior mean over the given prior samples. Terms are
// summed in a canonical order (sorted by log-weight, then by sample value),
// so the result does not depend on the order of the samples.
inline EstimatorResult posterior_mean(const LgoModel& m, const VecC& x_a, const VecC& x_q,
                                      const std::vector<VecC>& theta) {
  detail::check_measurements(m, x_a, x_q);
  const int M = m.M();
  const std::size_t S = theta.size();
  if (S < 1) throw config_error("posterior_mean: need at least one sample");
  const VecC y = m.N_a() > 0 ? VecC(m.H().adjoint() * x_a) : VecC::Zero(M);
  const QuantCounts counts = quantized_counts(m, x_q);

  std::vector<double> logw(S);
  for (std::size_t s = 0; s < S; ++s) {
    if (theta[s].size() != M) throw config_error("posterior_mean: sample has wrong dimension");
    double lw = 0.0;
    if (m.N_a() > 0) {
      const cplx q = theta[s].dot(m.HtH() * theta[s]);
      lw += (2.0 * y.dot(theta[s]).real() - q.real()) / m.sigma_a2();
    }
    if (m.N_q() > 0) lw += quantized_log_pmf(m, counts, theta[s]);
    logw[s] = lw;
  }

  std::vector<std::size_t> order(S);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (logw[a] != logw[b]) return logw[a] < logw[b];
    for (int i = 0; i < M; ++i) {
      if (theta[a][i].real() != theta[b][i].real()) return theta[a][i].real() < theta[b][i].real();
      if (theta[a][i].imag() != theta[b][i].imag()) return theta[a][i].imag() < theta[b][i].imag();
    }
    return false;
  });

  EstimatorResult r;
  const double lmax = logw[order.back()];
  if (!std::isfinite(lmax)) {
    r.estimate = VecC::Zero(M);
    r.degenerate = true;
    return r;
  }
  double sw = 0.0, sw2 = 0.0;
  VecC acc = VecC::Zero(M);
  for (std::size_t idx : order) {
    const double w = std::exp(logw[idx] - lmax);
    sw += w;
    sw2 += w * w;
    acc += w * theta[idx];
  }
  if (!(sw > 0.0)) {
    r.estimate = VecC::Zero(M);
    r.degenerate = true;
    return r;
  }
  r.estimate = acc / sw;
  r.weights_ess = sw * sw / sw2;
  return r;
}

// Posterior mean from cfg.S fresh prior draws.
inline EstimatorResult mmse_estimate(const LgoModel& m, const VecC& x_a, const VecC& x_q,
                                     const McConfig& cfg, RngStream& rng) {
  cfg.validate();
  detail::check_measurements(m, x_a, x_q);
  std::vector<VecC> theta(cfg.S);
  for (auto& t : theta) t = sample_prior(m, rng);
  return posterior_mean(m, x_a, x_q, theta);
}

inline Estimator mmse_estimator(const McConfig& cfg) {
  return [cfg](const LgoModel& m, const MixedSample& s, RngStream& rng) {
    return mmse_estimate(m, s.x_a, s.x_q, cfg, rng);
  };
}

inline Estimator prior_mean_estimator() {
  return [](const LgoModel& m, const MixedSample&, RngStream&) {
    return EstimatorResult{VecC::Zero(m.M()), 1.0, false};
  };
}

struct MseResult {
  MatC mse;
  double std_err = 0.0;  // standard error of the trace
  std::size_t trials = 0;
  std::size_t flagged = 0;  // degenerate trials, excluded from mse
};

// Trial k draws theta and the measurements from RngStream(seed, k); the
// estimator continues on the same stream.
inline MseResult empirical_mse(const LgoModel& m, const Estimator& est, const McConfig& cfg) {
  cfg.validate();
  struct Trial {
    VecC err;
    bool flagged = false;
  };
  const auto trials = parallel_map<Trial>(cfg.K, cfg.threads, [&](std::size_t k) {
    RngStream rng(cfg.seed, k);
    const MixedSample s = draw(m, rng);
    EstimatorResult r;
    try {
      r = est(m, s, rng);
    } catch (const std::exception& e) {
      throw std::runtime_error("trial " + std::to_string(k) + ": " + e.what());
    }
    if (r.estimate.size() != m.M()) throw std::runtime_error("trial " + std::to_string(k) + ": bad estimate size");
    return Trial{r.estimate - s.theta, r.degenerate};
  });

  MseResult out;
  out.trials = cfg.K;
  std::vector<std::size_t> used;
  for (std::size_t k = 0; k < trials.size(); ++k) {
    if (trials[k].flagged) ++out.flagged;
    else used.push_back(k);
  }
  const int M = m.M();
  if (used.empty()) {
    out.mse = MatC::Constant(M, M, cplx(std::numeric_limits<double>::quiet_NaN(), 0.0));
    out.std_err = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double n = static_cast<double>(used.size());
  out.mse = pairwise_sum<MatC>(0, used.size(),
                               [&](std::size_t i) -> MatC {
                                 const VecC& e = trials[used[i]].err;
                                 return e * e.adjoint();
                               },
                               MatC::Zero(M, M)) /
            n;
  const double mean_tr = out.mse.trace().real();
  const double ss = pairwise_sum<double>(
      0, used.size(),
      [&](std::size_t i) {
        const double d = trials[used[i]].err.squaredNorm() - mean_tr;
        return d * d;
      },
      0.0);
  out.std_err = used.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
  return out;
}

struct CovarianceSet {
  MatC Sigma_theta;
  MatC C_theta_x;
  MatC C_x;
  VecC mean_x;
  VecC mean_theta;
  double ridge = 0.0;  // added to the diagonal of C_x before solving
};

// Closed-form covariances of (theta, x_a) for x = x_a.
inline CovarianceSet analog_covariances(const LgoModel& m) {
  if (m.n_a() == 0) throw config_error("analog covariances: model has no analog measurements");
  CovarianceSet c;
  c.Sigma_theta = MatC::Identity(m.M(), m.M());
  c.C_theta_x = m.H().adjoint();
  c.C_x = m.H() * m.H().adjoint() + m.sigma_a2() * MatC::Identity(m.N_a(), m.N_a());
  c.mean_x = VecC::Zero(m.N_a());
  c.mean_theta = VecC::Zero(m.M());
  return c;
}

// Sample means and covariances of (theta, [x_a; x_q]) over K draws.
inline CovarianceSet scm_covariances(const LgoModel& m, std::size_t K, RngStream& rng) {
  if (K < 2) throw config_error("scm_covariances: K must be >= 2");
  const int M = m.M();
  const int N = m.N_a() + m.N_q();
  MatC Th(M, static_cast<Eigen::Index>(K));
  MatC X(N, static_cast<Eigen::Index>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const MixedSample s = draw(m, rng);
    const auto kk = static_cast<Eigen::Index>(k);
    Th.col(kk) = s.theta;
    X.col(kk).head(m.N_a()) = s.x_a;
    X.col(kk).tail(m.N_q()) = s.x_q;
  }
  CovarianceSet c;
  c.mean_theta = Th.rowwise().mean();
  c.mean_x = X.rowwise().mean();
  Th.colwise() -= c.mean_theta;
  X.colwise() -= c.mean_x;
  const double denom = static_cast<double>(K - 1);
  c.Sigma_theta = Th * Th.adjoint() / denom;
  c.Sigma_theta = 0.5 * (c.Sigma_theta + c.Sigma_theta.adjoint()).eval();
  c.C_theta_x = Th * X.adjoint() / denom;
  c.C_x = X * X.adjoint() / denom;
  c.C_x = 0.5 * (c.C_x + c.C_x.adjoint()).eval();
  c.ridge = 1e-8 * c.C_x.trace().real() / N;
  return c;
}

namespace detail {
inline VecC stack_measurements(const CovarianceSet& c, const VecC& x_a, const VecC& x_q) {
  const auto n = c.C_x.rows();
  if (n == x_a.size() + x_q.size()) {
    VecC x(n);
    x << x_a, x_q;
    return x;
  }
  if (n == x_a.size()) return x_a;
  throw config_error("covariance set does not match measurement dimensions");
}
}  // namespace detail

// C_theta_x (C_x + ridge I)^{-1} via an LDL^T solve.
inline MatC lmmse_gain(const CovarianceSet& c) {
  const auto n = c.C_x.rows();
  const MatC Cx = c.C_x + c.ridge * MatC::Identity(n, n);
  Eigen::LDLT<MatC> ldlt(Cx);
  if (ldlt.info() != Eigen::Success) throw numeric_error("lmmse: LDLT factorization failed");
  const MatC G = ldlt.solve(c.C_theta_x.adjoint()).adjoint();
  if (!G.allFinite() || !ldlt.isPositive()) throw numeric_error("lmmse: ill-conditioned covariance");
  return G;
}

inline VecC lmmse_apply(const CovarianceSet& c, const MatC& gain, const VecC& x_a, const VecC& x_q) {
  return c.mean_theta + gain * (detail::stack_measurements(c, x_a, x_q) - c.mean_x);
}

inline VecC lmmse_apply(const CovarianceSet& c, const VecC& x_a, const VecC& x_q) {
  return lmmse_apply(c, lmmse_gain(c), x_a, x_q);
}

inline Estimator lmmse_estimator(const CovarianceSet& c) {
  MatC gain = lmmse_gain(c);
  return [c, gain](const LgoModel&, const MixedSample& s, RngStream&) {
    return EstimatorResult{lmmse_apply(c, gain, s.x_a, s.x_q), 1.0, false};
  };
}

inline MatC clip_psd(const MatC& A) {
  const MatC H = 0.5 * (A + A.adjoint());
  Eigen::SelfAdjointEigenSolver<MatC> es(H);
  const VecR lam = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().adjoint();
}

inline MatC lmmse_mse_from_cov(const CovarianceSet& c) {
  return clip_psd(c.Sigma_theta - lmmse_gain(c) * c.C_theta_x.adjoint());
}

// (I + H^H H / sigma_a^2)^{-1}, the error covariance of the analog-only LMMSE.
inline MatC lmmse_analog_mse(const LgoModel& m) {
  if (m.n_a() == 0) throw config_error("lmmse_analog_mse: not applicable without analog measurements");
  const MatC J = MatC::Identity(m.M(), m.M()) + m.HtH() / m.sigma_a2();
  return J.ldlt().solve(MatC::Identity(m.M(), m.M()));
}

}  // namespace mixres
