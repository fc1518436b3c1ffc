#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "mixres/estimators.hpp"
#include "mixres/lgo.hpp"
#include "mixres/quadrature.hpp"

namespace mixres {

struct BfimDecomposition {
  MatC J_prior;
  MatC J_analog;
  MatC J_quant;
  MatC J_total;
};

// Expected d-term of each quantization group.
inline Expectation expected_group_d(const LgoModel& m, const QuadratureRule& q, unsigned threads = 1) {
  const auto G = static_cast<Eigen::Index>(m.groups().size());
  return expect(q, G, [&](const VecC& theta, VecR& out) {
    const ZetaPair z = group_zeta(m, theta);
    for (Eigen::Index k = 0; k < G; ++k) out[k] = d_term(z.zeta_R[k]) + d_term(z.zeta_I[k]);
  }, threads);
}

inline BfimDecomposition bfim(const LgoModel& m, const QuadratureRule& q, unsigned threads = 1) {
  if (q.kind != QuadKind::monte_carlo && q.order < 8) throw config_error("bfim: quadrature order must be >= 8");
  if (q.dim() != m.M()) throw config_error("bfim: rule dimension does not match model");
  const int M = m.M();
  BfimDecomposition b;
  b.J_prior = MatC::Identity(M, M);
  b.J_analog = m.HtH() / m.sigma_a2();
  b.J_quant = MatC::Zero(M, M);
  if (m.N_q() > 0) {
    const VecR Ed = expected_group_d(m, q, threads).mean;
    const double c = 0.5 / m.sigma_q2();
    for (std::size_t k = 0; k < m.groups().size(); ++k) {
      const auto t = m.T1().row(m.groups()[k].row);
      b.J_quant += (c * Ed[static_cast<Eigen::Index>(k)] * static_cast<double>(m.groups()[k].members.size())) *
                   (t.adjoint() * t);
    }
  }
  b.J_total = b.J_prior + b.J_analog + b.J_quant;
  return b;
}

inline MatC hermitian_inverse(const MatC& A) {
  const MatC H = 0.5 * (A + A.adjoint());
  return H.ldlt().solve(MatC::Identity(A.rows(), A.cols()));
}

inline MatC bcrb(const LgoModel& m, const QuadratureRule& q, unsigned threads = 1) {
  return hermitian_inverse(bfim(m, q, threads).J_total);
}

// fim_inverse: W = (theta theta^H + J_data(theta))^{-1}.
// expected_prior: theta theta^H replaced by its mean I.
enum class WeightKind { fim_inverse, expected_prior };

struct WeightEval {
  MatC W;
  VecC v;               // v_k = sum_m dW_{k,m}/dtheta*_m
  std::vector<MatC> dW; // dW[m] = dW/dtheta*_m
};

inline constexpr double kWeightRegularization = 1e-12;

inline MatC weight_information(const LgoModel& m, const VecC& theta, WeightKind kind) {
  const int M = m.M();
  MatC J = data_fim(m, theta);
  if (kind == WeightKind::fim_inverse) J += theta * theta.adjoint();
  else J += MatC::Identity(M, M);
  return J;
}

inline WeightEval fim_inverse_weight(const LgoModel& m, const VecC& theta, WeightKind kind = WeightKind::fim_inverse) {
  check_theta(m, theta);
  const int M = m.M();
  WeightEval e;
  e.W = hermitian_inverse(weight_information(m, theta, kind) + kWeightRegularization * MatC::Identity(M, M));

  // Derivatives of d_g with respect to theta*_m are t*_{g,m} (d'(zR) + i d'(zI)) / (sqrt2 sigma_q).
  const ZetaPair z = group_zeta(m, theta);
  const auto& groups = m.groups();
  std::vector<cplx> dd(groups.size());
  for (std::size_t k = 0; k < groups.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    dd[k] = cplx(d_term_derivative(z.zeta_R[kk]), d_term_derivative(z.zeta_I[kk])) *
            (kInvSqrt2 / m.sigma_q()) * (0.5 / m.sigma_q2()) * static_cast<double>(groups[k].members.size());
  }
  e.dW.resize(static_cast<std::size_t>(M));
  e.v = VecC::Zero(M);
  for (int mm = 0; mm < M; ++mm) {
    MatC dJ = MatC::Zero(M, M);
    if (kind == WeightKind::fim_inverse) dJ.col(mm) += theta;
    for (std::size_t k = 0; k < groups.size(); ++k) {
      const auto t = m.T1().row(groups[k].row);
      dJ += (std::conj(t(mm)) * dd[k]) * (t.adjoint() * t);
    }
    e.dW[static_cast<std::size_t>(mm)] = -e.W * dJ * e.W;
    e.v += e.dW[static_cast<std::size_t>(mm)].col(mm);
  }
  return e;
}

enum class AMethod { divergence, by_parts };

// Integrand of A: -sum_m d(W_{n,m} v*_k)/dtheta*_m by central differences,
// or the equivalent -W theta v^H obtained by integrating by parts against
// the CN(0, I) prior.
inline MatC a_integrand(const LgoModel& m, const VecC& theta, WeightKind kind, AMethod method) {
  const int M = m.M();
  if (method == AMethod::by_parts) {
    const WeightEval e = fim_inverse_weight(m, theta, kind);
    return -e.W * theta * e.v.adjoint();
  }
  const double h = 1e-4 * (1.0 + theta.norm());
  MatC acc = MatC::Zero(M, M);
  for (int mm = 0; mm < M; ++mm) {
    auto C = [&](const VecC& th) {
      const WeightEval e = fim_inverse_weight(m, th, kind);
      return MatC(e.W.col(mm) * e.v.adjoint());
    };
    VecC tp = theta, tm = theta;
    tp[mm] += h;
    tm[mm] -= h;
    const MatC dx = (C(tp) - C(tm)) / (2.0 * h);
    tp = theta;
    tm = theta;
    tp[mm] += cplx(0.0, h);
    tm[mm] -= cplx(0.0, h);
    const MatC dy = (C(tp) - C(tm)) / (2.0 * h);
    acc += 0.5 * (dx + cplx(0.0, 1.0) * dy);
  }
  return -acc;
}

struct WbcrbParts {
  MatC EW;
  MatC first;  // E[W Jtilde W]; equals EW for the fim_inverse weight
  MatC A;
  MatC Evv;
  MatC G;
  MatC bound;
  Expectation raw;  // packed EW, first, A, Evv
};

inline WbcrbParts wbcrb_parts(const LgoModel& m, const QuadratureRule& q, WeightKind kind = WeightKind::fim_inverse,
                              AMethod method = AMethod::divergence, unsigned threads = 1) {
  if (q.kind != QuadKind::monte_carlo && q.order < 16) throw config_error("wbcrb: quadrature order must be >= 16");
  if (q.dim() != m.M()) throw config_error("wbcrb: rule dimension does not match model");
  const int M = m.M();
  const Eigen::Index blk = 2 * M * M;
  WbcrbParts r;
  r.raw = expect(q, 4 * blk, [&](const VecC& theta, VecR& out) {
    const WeightEval e = fim_inverse_weight(m, theta, kind);
    detail::pack(e.W, out, 0);
    if (kind == WeightKind::fim_inverse) {
      detail::pack(e.W, out, blk);
    } else {
      const MatC Jt = data_fim(m, theta) + theta * theta.adjoint();
      detail::pack(e.W * Jt * e.W, out, blk);
    }
    detail::pack(a_integrand(m, theta, kind, method), out, 2 * blk);
    detail::pack(e.v * e.v.adjoint(), out, 3 * blk);
  }, threads);
  r.EW = detail::unpack(r.raw.mean, 0, M, M);
  r.first = detail::unpack(r.raw.mean, blk, M, M);
  r.A = detail::unpack(r.raw.mean, 2 * blk, M, M);
  r.Evv = detail::unpack(r.raw.mean, 3 * blk, M, M);
  r.G = r.first + r.A + r.A.adjoint() + r.Evv;
  r.G = 0.5 * (r.G + r.G.adjoint()).eval();
  Eigen::LLT<MatC> llt(r.G);
  if (llt.info() != Eigen::Success) throw numeric_error("wbcrb: G is not positive definite");
  r.bound = r.EW * llt.solve(r.EW.adjoint());
  r.bound = 0.5 * (r.bound + r.bound.adjoint()).eval();
  return r;
}

inline MatC wbcrb_fim_inverse(const LgoModel& m, const QuadratureRule& q, unsigned threads = 1) {
  return wbcrb_parts(m, q, WeightKind::fim_inverse, AMethod::divergence, threads).bound;
}

struct EcrbResult {
  MatC value;
  double flagged_mass = 0.0;  // prior mass of nodes with singular data information
};

inline EcrbResult ecrb_detail(const LgoModel& m, const QuadratureRule& q, unsigned threads = 1) {
  if (q.dim() != m.M()) throw config_error("ecrb: rule dimension does not match model");
  const int M = m.M();
  const Eigen::Index blk = 2 * M * M;
  const Expectation e = expect(q, blk + 1, [&](const VecC& theta, VecR& out) {
    const MatC J = data_fim(m, theta);
    Eigen::SelfAdjointEigenSolver<MatC> es(0.5 * (J + J.adjoint()));
    const VecR lam = es.eigenvalues();
    const double tol = std::max(lam.maxCoeff(), 0.0) * 1e-14;
    VecR inv(M);
    bool singular = false;
    for (int i = 0; i < M; ++i) {
      if (lam[i] > tol && lam[i] > 0.0) inv[i] = 1.0 / lam[i];
      else {
        inv[i] = 0.0;
        singular = true;
      }
    }
    detail::pack(es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().adjoint(), out, 0);
    out[blk] = singular ? 1.0 : 0.0;
  }, threads);
  EcrbResult r;
  r.value = detail::unpack(e.mean, 0, M, M);
  r.value = 0.5 * (r.value + r.value.adjoint()).eval();
  r.flagged_mass = e.mean[blk];
  return r;
}

inline MatC ecrb(const LgoModel& m, const QuadratureRule& q, unsigned threads = 1) {
  return ecrb_detail(m, q, threads).value;
}

// Relative change of a scalar functional when the rule resolution doubles.
template <class F>
double order_doubling_gap(const LgoModel& m, const QuadratureRule& q, F&& functional) {
  const double a = functional(q);
  const double b = functional(refined_rule(m, q));
  return std::abs(a - b) / std::max(std::abs(b), std::numeric_limits<double>::min());
}

// Optimal scalar WBCRB on a grid. For M = 1 the real and imaginary parts of
// theta' = theta t/|t| decouple into two real problems with prior Normal(0, 1/2).
struct OptGrid {
  double delta = 0.0;
  std::size_t L = 0;
  VecR points;  // grid points with non-negligible prior mass
  VecR f;       // delta * p(points)
  VecR Z;       // Jtilde at the points: prior score squared plus data information
  VecR score;   // prior score -2x
  double mass = 0.0;  // sum of delta * p over the full grid
};

enum class OptForm {
  // (S + K)^T F (S + K) + diag(J_data) F: positive definite by construction.
  factored,
  // Z F + Psi_bar with Psi_bar = -(F K K + (F K K)^T + K^T F K).
  paper
};

enum class Axis { real, imag };

inline Eigen::SparseMatrix<double> discrete_derivative_matrix(Eigen::Index n, double delta) {
  std::vector<Eigen::Triplet<double>> t;
  for (Eigen::Index i = 0; i < n; ++i) {
    t.emplace_back(i, i, 1.0 / delta);
    if (i > 0) t.emplace_back(i, i - 1, -1.0 / delta);
  }
  Eigen::SparseMatrix<double> K(n, n);
  K.setFromTriplets(t.begin(), t.end());
  return K;
}

inline constexpr double kOptMassFloor = 1e-250;

inline OptGrid build_opt_grid(const LgoModel& m, Axis axis, double delta, std::size_t L) {
  if (m.M() != 1) throw config_error("optimal WBCRB: requires M = 1");
  if (!(delta > 0.0) || L < 3) throw config_error("optimal WBCRB: need delta > 0 and L >= 3");
  const cplx t = m.T1()(0, 0);
  const cplx phase = t / std::abs(t);
  const double sq = std::sqrt(m.rho_q());
  const double analog = 2.0 * m.HtH()(0, 0).real() / m.sigma_a2();
  const double qscale = 2.0 * m.rho_q() / m.sigma_q2();
  const double zscale = std::numbers::sqrt2 * sq / m.sigma_q();
  std::vector<double> centers, counts;
  for (const auto& g : m.groups()) {
    const cplx c = g.tau * std::conj(phase) / sq;
    centers.push_back(axis == Axis::real ? c.real() : c.imag());
    counts.push_back(static_cast<double>(g.members.size()));
  }
  OptGrid g;
  g.delta = delta;
  g.L = L;
  std::vector<double> pts, fs;
  const double norm = delta / std::sqrt(std::numbers::pi);
  for (std::size_t l = 1; l <= L; ++l) {
    const double x = (static_cast<double>(l) - 0.5 * static_cast<double>(L + 1)) * delta;
    const double fl = norm * std::exp(-x * x);
    g.mass += fl;
    if (fl > kOptMassFloor) {
      pts.push_back(x);
      fs.push_back(fl);
    }
  }
  if (g.mass < 1.0 - 1e-4) throw numeric_error("optimal WBCRB: grid holds too little prior mass; increase L or delta");
  const auto n = static_cast<Eigen::Index>(pts.size());
  g.points = Eigen::Map<VecR>(pts.data(), n);
  g.f = Eigen::Map<VecR>(fs.data(), n);
  g.Z.resize(n);
  g.score.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = g.points[i];
    double J = analog;
    for (std::size_t k = 0; k < centers.size(); ++k) J += qscale * counts[k] * d_term(zscale * (x - centers[k]));
    g.score[i] = -2.0 * x;
    g.Z[i] = g.score[i] * g.score[i] + J;
  }
  return g;
}

// max_w (f^T w)^2 / (w^T M w) = f^T M^{-1} f, solved in the F^{1/2}-scaled
// basis so that grid points deep in the prior tail stay representable.
inline double opt_grid_bound(const OptGrid& g, OptForm form = OptForm::factored) {
  using Sp = Eigen::SparseMatrix<double>;
  const Eigen::Index n = g.points.size();
  const VecR s = g.f.cwiseSqrt();
  // B = F^{1/2} K F^{-1/2}
  std::vector<Eigen::Triplet<double>> tb;
  for (Eigen::Index i = 0; i < n; ++i) {
    tb.emplace_back(i, i, 1.0 / g.delta);
    if (i > 0) tb.emplace_back(i, i - 1, -(s[i] / s[i - 1]) / g.delta);
  }
  Sp B(n, n);
  B.setFromTriplets(tb.begin(), tb.end());
  Sp Mp(n, n);
  if (form == OptForm::factored) {
    Sp S(n, n);
    std::vector<Eigen::Triplet<double>> ts;
    for (Eigen::Index i = 0; i < n; ++i) ts.emplace_back(i, i, g.score[i]);
    S.setFromTriplets(ts.begin(), ts.end());
    const Sp D = S + B;
    Sp Jd(n, n);
    std::vector<Eigen::Triplet<double>> tj;
    for (Eigen::Index i = 0; i < n; ++i) tj.emplace_back(i, i, g.Z[i] - g.score[i] * g.score[i]);
    Jd.setFromTriplets(tj.begin(), tj.end());
    Mp = Sp(D.transpose()) * D + Jd;
    Eigen::SimplicialLDLT<Sp> solver(Mp);
    if (solver.info() != Eigen::Success) throw numeric_error("optimal WBCRB: factorization failed");
    const VecR y = solver.solve(s);
    return s.dot(y);
  }
  Sp Zd(n, n);
  std::vector<Eigen::Triplet<double>> tz;
  for (Eigen::Index i = 0; i < n; ++i) tz.emplace_back(i, i, g.Z[i]);
  Zd.setFromTriplets(tz.begin(), tz.end());
  const Sp BB = B * B;
  Mp = Zd - (BB + Sp(BB.transpose()) + Sp(B.transpose()) * B);
  Eigen::SparseLU<Sp> solver;
  solver.analyzePattern(Mp);
  solver.factorize(Mp);
  if (solver.info() != Eigen::Success) throw numeric_error("optimal WBCRB: factorization failed");
  const VecR y = solver.solve(s);
  return s.dot(y);
}

inline double wbcrb_optimal_scalar(const LgoModel& m, double delta, std::size_t L, OptForm form = OptForm::factored) {
  return opt_grid_bound(build_opt_grid(m, Axis::real, delta, L), form) +
         opt_grid_bound(build_opt_grid(m, Axis::imag, delta, L), form);
}

// Monte Carlo estimate of E[score score^T] over theta and x_q.
struct PseudoFimEstimate {
  MatC estimate;
  MatC std_err;  // per-entry, real and imaginary parts separately
};

inline PseudoFimEstimate pseudo_fim_mc(const LgoModel& m, const McConfig& cfg) {
  cfg.validate();
  if (m.N_q() == 0) throw config_error("pseudo_fim_mc: model has no quantized measurements");
  const int M = m.M();
  const Eigen::Index blk = 2 * M * M;
  const Expectation e = mc_expect(cfg.K, blk, [&](Eigen::Index k, VecR& out) {
    RngStream rng(cfg.seed, static_cast<std::uint64_t>(k));
    const VecC theta = sample_prior(m, rng);
    const VecC x_q = generate_quantized(m, theta, rng);
    const VecC s = quantized_score(m, x_q, theta);
    detail::pack(s * s.transpose(), out, 0);
  }, cfg.threads);
  PseudoFimEstimate r;
  r.estimate = detail::unpack(e.mean, 0, M, M);
  r.std_err = detail::unpack(e.se, 0, M, M);
  return r;
}

}  // namespace mixres
