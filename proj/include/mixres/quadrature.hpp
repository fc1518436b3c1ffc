#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mixres/lgo.hpp"
#include "mixres/parallel.hpp"

namespace mixres {

enum class QuadKind { gauss_hermite, ridge_adapted, monte_carlo };

// Nodes and weights for E[f(theta)] with theta ~ CN(0, I_M).
struct QuadratureRule {
  QuadKind kind = QuadKind::gauss_hermite;
  int order = 0;
  MatC nodes;     // M x n
  VecR weights;   // sums to 1

  Eigen::Index size() const { return weights.size(); }
  int dim() const { return static_cast<int>(nodes.rows()); }
};

// 1-D rule for x ~ Normal(0, 1/2), i.e. weight exp(-x^2)/sqrt(pi).
struct AxisRule {
  std::vector<double> x;
  std::vector<double> w;
};

// Golub-Welsch on the Hermite Jacobi matrix.
inline AxisRule gauss_hermite_axis(int order) {
  if (order < 1) throw config_error("gauss_hermite: order must be >= 1");
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) J(k, k - 1) = J(k - 1, k) = std::sqrt(0.5 * k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  AxisRule r;
  for (int i = 0; i < order; ++i) {
    r.x.push_back(es.eigenvalues()[i]);
    const double v0 = es.eigenvectors()(0, i);
    r.w.push_back(v0 * v0);
  }
  return r;
}

inline AxisRule gauss_legendre_unit(int order) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  AxisRule r;
  for (int i = 0; i < order; ++i) {
    r.x.push_back(es.eigenvalues()[i]);
    const double v0 = es.eigenvectors()(0, i);
    r.w.push_back(2.0 * v0 * v0);
  }
  return r;
}

// Composite Gauss-Legendre on [-R, R] with half-unit panels plus panels that
// shrink geometrically towards each center (the quantizer thresholds), where
// d(theta) and the saturation integrand vary on the scale `width`.
inline AxisRule ridge_adapted_axis(const std::vector<double>& centers, double width, int points_per_panel,
                                   double R = 8.5) {
  std::set<double> bp;
  const int uniform = static_cast<int>(std::ceil(2.0 * R / 0.5));
  for (int i = 0; i <= uniform; ++i) bp.insert(-R + 2.0 * R * i / uniform);
  for (double c : centers) {
    if (c > -R && c < R) bp.insert(c);
    for (double k = 0.25; k * width < 2.0 * R; k *= 2.0) {
      bp.insert(c + k * width);
      bp.insert(c - k * width);
    }
  }
  std::vector<double> b;
  for (double v : bp)
    if (v >= -R && v <= R) b.push_back(v);
  const AxisRule gl = gauss_legendre_unit(points_per_panel);
  AxisRule r;
  const double norm = 1.0 / std::sqrt(std::numbers::pi);
  for (std::size_t i = 0; i + 1 < b.size(); ++i) {
    const double a = b[i], c = b[i + 1];
    if (c - a < 1e-14) continue;
    for (int j = 0; j < points_per_panel; ++j) {
      const double x = 0.5 * (c - a) * gl.x[static_cast<std::size_t>(j)] + 0.5 * (a + c);
      r.x.push_back(x);
      r.w.push_back(0.5 * (c - a) * gl.w[static_cast<std::size_t>(j)] * norm * std::exp(-x * x));
    }
  }
  return r;
}

namespace detail {
inline QuadratureRule tensor_2d(const AxisRule& re, const AxisRule& im, cplx rotate, QuadKind kind, int order) {
  QuadratureRule q;
  q.kind = kind;
  q.order = order;
  const auto n = static_cast<Eigen::Index>(re.x.size() * im.x.size());
  q.nodes.resize(1, n);
  q.weights.resize(n);
  Eigen::Index k = 0;
  for (std::size_t i = 0; i < re.x.size(); ++i)
    for (std::size_t j = 0; j < im.x.size(); ++j, ++k) {
      q.nodes(0, k) = rotate * cplx(re.x[i], im.x[j]);
      q.weights[k] = re.w[i] * im.w[j];
    }
  q.weights /= q.weights.sum();
  return q;
}
}  // namespace detail

// Tensor Gauss-Hermite over the 2M real coordinates.
inline QuadratureRule gauss_hermite_rule(int M, int order) {
  if (M < 1 || M > 2) throw config_error("gauss_hermite_rule: tensor grids are limited to M <= 2");
  const AxisRule ax = gauss_hermite_axis(order);
  if (M == 1) return detail::tensor_2d(ax, ax, 1.0, QuadKind::gauss_hermite, order);
  const auto n1 = static_cast<Eigen::Index>(ax.x.size());
  QuadratureRule q;
  q.kind = QuadKind::gauss_hermite;
  q.order = order;
  const Eigen::Index n = n1 * n1 * n1 * n1;
  q.nodes.resize(2, n);
  q.weights.resize(n);
  Eigen::Index k = 0;
  for (Eigen::Index a = 0; a < n1; ++a)
    for (Eigen::Index b = 0; b < n1; ++b)
      for (Eigen::Index c = 0; c < n1; ++c)
        for (Eigen::Index d = 0; d < n1; ++d, ++k) {
          q.nodes(0, k) = cplx(ax.x[a], ax.x[b]);
          q.nodes(1, k) = cplx(ax.x[c], ax.x[d]);
          q.weights[k] = ax.w[a] * ax.w[b] * ax.w[c] * ax.w[d];
        }
  q.weights /= q.weights.sum();
  return q;
}

// M = 1 only. Works in the coordinate theta' = theta t/|t|, in which the
// quantizer ridges are axis-aligned; the circular prior makes the rotation free.
inline QuadratureRule ridge_adapted_rule(const LgoModel& m, int order) {
  if (m.M() != 1) throw config_error("ridge_adapted_rule: requires M = 1");
  if (order < 8) throw config_error("ridge_adapted_rule: order must be >= 8");
  const cplx t = m.T1()(0, 0);
  const cplx phase = t / std::abs(t);
  std::vector<double> cr, ci;
  for (const auto& g : m.groups()) {
    const cplx c = g.tau * std::conj(phase) / std::sqrt(m.rho_q());
    cr.push_back(c.real());
    ci.push_back(c.imag());
  }
  const double width = m.sigma_q() / std::sqrt(2.0 * m.rho_q());
  const int pp = std::max(4, order / 8);
  return detail::tensor_2d(ridge_adapted_axis(cr, width, pp), ridge_adapted_axis(ci, width, pp),
                           std::conj(phase), QuadKind::ridge_adapted, order);
}

inline QuadratureRule monte_carlo_rule(int M, std::size_t n, std::uint64_t seed) {
  QuadratureRule q;
  q.kind = QuadKind::monte_carlo;
  q.order = static_cast<int>(std::min<std::size_t>(n, 2147483647));
  q.nodes.resize(M, static_cast<Eigen::Index>(n));
  q.weights = VecR::Constant(static_cast<Eigen::Index>(n), 1.0 / static_cast<double>(n));
  std::normal_distribution<double> nd(0.0, kInvSqrt2);
  for (std::size_t k = 0; k < n; ++k) {
    RngStream rng(seed, k);
    for (int i = 0; i < M; ++i) {
      const double re = nd(rng);
      const double im = nd(rng);
      q.nodes(i, static_cast<Eigen::Index>(k)) = cplx(re, im);
    }
    nd.reset();
  }
  return q;
}

inline constexpr std::uint64_t kQuadratureSeed = 0x6d69787265735151ULL;

inline QuadratureRule default_rule(const LgoModel& m, int order = 64) {
  if (m.M() == 1) return ridge_adapted_rule(m, order);
  return monte_carlo_rule(m.M(), 1000000, kQuadratureSeed);
}

// Same rule with twice the resolution, for convergence checks.
inline QuadratureRule refined_rule(const LgoModel& m, const QuadratureRule& q) {
  switch (q.kind) {
    case QuadKind::gauss_hermite: return gauss_hermite_rule(q.dim(), 2 * q.order);
    case QuadKind::ridge_adapted: return ridge_adapted_rule(m, 2 * q.order);
    case QuadKind::monte_carlo: return monte_carlo_rule(q.dim(), 2 * static_cast<std::size_t>(q.size()), kQuadratureSeed + 1);
  }
  return q;
}

struct Expectation {
  VecR mean;
  VecR se;  // Monte Carlo standard error; zero for deterministic rules
};

namespace detail {
// Weighted first and second moments of eval(k, out) over k in [0, n),
// reduced in fixed blocks so the result does not depend on the thread count.
template <class Weight, class Eval>
std::pair<VecR, VecR> block_moments(Eigen::Index n, Eigen::Index P, const Weight& weight, const Eval& eval,
                                    unsigned threads) {
  constexpr Eigen::Index kBlock = 2048;
  const Eigen::Index blocks = (n + kBlock - 1) / kBlock;
  struct Partial {
    VecR s1, s2;
  };
  auto parts = parallel_map<Partial>(static_cast<std::size_t>(blocks), threads, [&](std::size_t b) {
    Partial p{VecR::Zero(P), VecR::Zero(P)};
    VecR val(P);
    const Eigen::Index lo = static_cast<Eigen::Index>(b) * kBlock;
    const Eigen::Index hi = std::min(n, lo + kBlock);
    for (Eigen::Index k = lo; k < hi; ++k) {
      val.setZero();
      eval(k, val);
      const double w = weight(k);
      p.s1 += w * val;
      p.s2 += w * val.cwiseAbs2();
    }
    return p;
  });
  VecR s1 = pairwise_sum<VecR>(0, parts.size(), [&](std::size_t i) -> VecR { return parts[i].s1; }, VecR::Zero(P));
  VecR s2 = pairwise_sum<VecR>(0, parts.size(), [&](std::size_t i) -> VecR { return parts[i].s2; }, VecR::Zero(P));
  return {s1, s2};
}

inline VecR mean_se(const VecR& m1, const VecR& m2, Eigen::Index n) {
  if (n < 2) return VecR::Zero(m1.size());
  return ((m2 - m1.cwiseAbs2()).cwiseMax(0.0) / static_cast<double>(n - 1)).cwiseSqrt();
}
}  // namespace detail

// E[f(theta)] for a vector-valued integrand f(theta, out).
template <class F>
Expectation expect(const QuadratureRule& q, Eigen::Index P, F&& f, unsigned threads = 1) {
  auto [m1, m2] = detail::block_moments(
      q.size(), P, [&](Eigen::Index k) { return q.weights[k]; },
      [&](Eigen::Index k, VecR& out) { f(VecC(q.nodes.col(k)), out); }, threads);
  Expectation e;
  e.se = q.kind == QuadKind::monte_carlo ? detail::mean_se(m1, m2, q.size()) : VecR::Zero(P);
  e.mean = std::move(m1);
  return e;
}

// Plain Monte Carlo average of f(k, out) over n independent replicates.
template <class F>
Expectation mc_expect(std::size_t n, Eigen::Index P, F&& f, unsigned threads = 1) {
  const auto nn = static_cast<Eigen::Index>(n);
  const double w = 1.0 / static_cast<double>(n);
  auto [m1, m2] = detail::block_moments(nn, P, [w](Eigen::Index) { return w; }, f, threads);
  Expectation e;
  e.se = detail::mean_se(m1, m2, nn);
  e.mean = std::move(m1);
  return e;
}

namespace detail {
inline void pack(const MatC& A, VecR& out, Eigen::Index offset) {
  for (Eigen::Index j = 0; j < A.cols(); ++j)
    for (Eigen::Index i = 0; i < A.rows(); ++i) {
      out[offset++] = A(i, j).real();
      out[offset++] = A(i, j).imag();
    }
}
inline MatC unpack(const VecR& v, Eigen::Index offset, Eigen::Index rows, Eigen::Index cols) {
  MatC A(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      A(i, j) = cplx(v[offset], v[offset + 1]);
      offset += 2;
    }
  return A;
}
}  // namespace detail

}  // namespace mixres
