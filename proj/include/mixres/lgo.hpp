#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixres/prob.hpp"
#include "mixres/rng.hpp"

namespace mixres {

using VecC = Eigen::VectorXcd;
using VecR = Eigen::VectorXd;
using MatC = Eigen::MatrixXcd;

class config_error : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

// 1-bit quantizer; the boundary maps to +1 on both parts.
inline cplx quantize(cplx z) {
  return {z.real() >= 0.0 ? kInvSqrt2 : -kInvSqrt2, z.imag() >= 0.0 ? kInvSqrt2 : -kInvSqrt2};
}

inline MatC unitary_dft(int M) {
  MatC F(M, M);
  const double scale = 1.0 / std::sqrt(static_cast<double>(M));
  for (int j = 0; j < M; ++j)
    for (int k = 0; k < M; ++k)
      F(j, k) = std::polar(scale, -2.0 * std::numbers::pi * j * k / M);
  return F;
}

struct LgoConfig {
  int M = 1;
  int n_a = 1;
  int n_q = 1;
  double sigma_a2 = 1.0;
  double sigma_q2 = 1.0;
  double rho_a = 1.0;
  double rho_q = 1.0;
  cplx tau = 0.0;
};

// Quantized rows sharing the same sensing row and threshold. Their
// outcome counts are sufficient statistics for theta.
struct QuantGroup {
  int row = 0;  // row of T1
  cplx tau = 0.0;
  std::vector<int> members;
};

class LgoModel {
 public:
  LgoModel(int M, int n_a, int n_q, MatC H, MatC T1, VecC tau, double sigma_a2, double sigma_q2,
           double rho_a, double rho_q)
      : M_(M), n_a_(n_a), n_q_(n_q), H_(std::move(H)), T1_(std::move(T1)), tau_(std::move(tau)),
        sigma_a2_(sigma_a2), sigma_q2_(sigma_q2), rho_a_(rho_a), rho_q_(rho_q) {
    validate();
    HtH_ = n_a_ > 0 ? MatC(H_.adjoint() * H_) : MatC::Zero(M_, M_);
    build_groups();
  }

  // H blocks and T1 are sqrt(rho) times the unitary DFT (a positive scalar for M = 1).
  static LgoModel standard(const LgoConfig& c) {
    if (c.M < 1) throw config_error("LgoModel: M must be >= 1");
    if (c.n_a < 0 || c.n_q < 0) throw config_error("LgoModel: negative block count");
    const MatC F = unitary_dft(c.M);
    MatC H(static_cast<Eigen::Index>(c.n_a) * c.M, c.M);
    for (int b = 0; b < c.n_a; ++b) H.middleRows(b * c.M, c.M) = std::sqrt(c.rho_a) * F;
    VecC tau = VecC::Constant(static_cast<Eigen::Index>(c.n_q) * c.M, c.tau);
    return LgoModel(c.M, c.n_a, c.n_q, H, std::sqrt(c.rho_q) * F, tau, c.sigma_a2, c.sigma_q2,
                    c.rho_a, c.rho_q);
  }

  static LgoModel standard(int M, int n_a, int n_q, double sigma2, cplx tau = 0.0) {
    LgoConfig c;
    c.M = M;
    c.n_a = n_a;
    c.n_q = n_q;
    c.sigma_a2 = sigma2;
    c.sigma_q2 = sigma2;
    c.tau = tau;
    return standard(c);
  }

  int M() const { return M_; }
  int n_a() const { return n_a_; }
  int n_q() const { return n_q_; }
  int N_a() const { return n_a_ * M_; }
  int N_q() const { return n_q_ * M_; }
  const MatC& H() const { return H_; }
  const MatC& T1() const { return T1_; }
  const VecC& tau() const { return tau_; }
  double sigma_a2() const { return sigma_a2_; }
  double sigma_q2() const { return sigma_q2_; }
  double sigma_q() const { return std::sqrt(sigma_q2_); }
  double rho_a() const { return rho_a_; }
  double rho_q() const { return rho_q_; }
  const MatC& HtH() const { return HtH_; }
  const std::vector<QuantGroup>& groups() const { return groups_; }

  // Row n of the full quantized sensing matrix.
  auto t_row(int n) const { return T1_.row(n % M_); }

  MatC T() const {
    MatC T(N_q(), M_);
    for (int b = 0; b < n_q_; ++b) T.middleRows(b * M_, M_) = T1_;
    return T;
  }

 private:
  void validate() const {
    if (M_ < 1) throw config_error("LgoModel: M must be >= 1");
    if (n_a_ < 0 || n_q_ < 0 || n_a_ + n_q_ < 1)
      throw config_error("LgoModel: need n_a >= 0, n_q >= 0 and n_a + n_q >= 1");
    if (!(sigma_a2_ > 0.0) || !(sigma_q2_ > 0.0))
      throw config_error("LgoModel: noise powers must be positive");
    if (!(rho_a_ > 0.0) || !(rho_q_ > 0.0)) throw config_error("LgoModel: gains must be positive");
    if (H_.rows() != N_a() || (n_a_ > 0 && H_.cols() != M_))
      throw config_error("LgoModel: H must be (n_a*M) x M");
    if (T1_.rows() != M_ || T1_.cols() != M_) throw config_error("LgoModel: T1 must be M x M");
    if (tau_.size() != N_q()) throw config_error("LgoModel: tau must have n_q*M entries");
    const MatC I = MatC::Identity(M_, M_);
    for (int b = 0; b < n_a_; ++b) {
      const MatC Hb = H_.middleRows(b * M_, M_);
      if ((Hb.adjoint() * Hb - rho_a_ * I).norm() > 1e-10)
        throw config_error("LgoModel: analog block " + std::to_string(b) + " violates H_n^H H_n = rho_a I");
    }
    if ((T1_.adjoint() * T1_ - rho_q_ * I).norm() > 1e-10)
      throw config_error("LgoModel: T1^H T1 must equal rho_q I");
    for (Eigen::Index n = 0; n < tau_.size(); ++n)
      if (!std::isfinite(tau_[n].real()) || !std::isfinite(tau_[n].imag()))
        throw config_error("LgoModel: non-finite threshold");
  }

  void build_groups() {
    for (int n = 0; n < N_q(); ++n) {
      const int r = n % M_;
      bool placed = false;
      for (auto& g : groups_) {
        if (g.row == r && g.tau == tau_[n]) {
          g.members.push_back(n);
          placed = true;
          break;
        }
      }
      if (!placed) groups_.push_back({r, tau_[n], {n}});
    }
  }

  int M_, n_a_, n_q_;
  MatC H_, T1_;
  VecC tau_;
  double sigma_a2_, sigma_q2_, rho_a_, rho_q_;
  MatC HtH_;
  std::vector<QuantGroup> groups_;
};

struct MixedSample {
  VecC theta;
  VecC x_a;
  VecC x_q;
};

struct ZetaPair {
  VecR zeta_R;
  VecR zeta_I;
};

inline void check_theta(const LgoModel& m, const VecC& theta) {
  if (theta.size() != m.M()) throw config_error("theta length does not match model dimension M");
}

inline VecC sample_prior(const LgoModel& m, RngStream& rng) {
  std::normal_distribution<double> nd(0.0, kInvSqrt2);
  VecC theta(m.M());
  for (int i = 0; i < m.M(); ++i) {
    const double re = nd(rng);
    const double im = nd(rng);
    theta[i] = {re, im};
  }
  return theta;
}

inline VecC generate_quantized(const LgoModel& m, const VecC& theta, RngStream& rng) {
  check_theta(m, theta);
  std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * m.sigma_q2()));
  const VecC clean = m.T1() * theta;
  VecC x_q(m.N_q());
  for (int n = 0; n < m.N_q(); ++n) {
    const double ur = nd(rng);
    const double ui = nd(rng);
    x_q[n] = quantize(clean[n % m.M()] + cplx(ur, ui) - m.tau()[n]);
  }
  return x_q;
}

inline MixedSample generate(const LgoModel& m, const VecC& theta, RngStream& rng) {
  check_theta(m, theta);
  MixedSample s;
  s.theta = theta;
  s.x_a.resize(m.N_a());
  if (m.N_a() > 0) {
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * m.sigma_a2()));
    const VecC clean = m.H() * theta;
    for (int n = 0; n < m.N_a(); ++n) {
      const double ur = nd(rng);
      const double ui = nd(rng);
      s.x_a[n] = clean[n] + cplx(ur, ui);
    }
  }
  s.x_q = generate_quantized(m, theta, rng);
  return s;
}

// Draws theta from the CN(0, I) prior, then the measurements.
inline MixedSample draw(const LgoModel& m, RngStream& rng) {
  VecC theta = sample_prior(m, rng);
  return generate(m, theta, rng);
}

inline ZetaPair zeta(const LgoModel& m, const VecC& theta) {
  check_theta(m, theta);
  const double s = std::numbers::sqrt2 / m.sigma_q();
  const VecC clean = m.T1() * theta;
  ZetaPair z{VecR(m.N_q()), VecR(m.N_q())};
  for (int n = 0; n < m.N_q(); ++n) {
    const cplx e = clean[n % m.M()] - m.tau()[n];
    z.zeta_R[n] = s * e.real();
    z.zeta_I[n] = s * e.imag();
  }
  return z;
}

// One zeta pair per quantization group.
inline ZetaPair group_zeta(const LgoModel& m, const VecC& theta) {
  const double s = std::numbers::sqrt2 / m.sigma_q();
  const VecC clean = m.T1() * theta;
  const auto& g = m.groups();
  ZetaPair z{VecR(static_cast<Eigen::Index>(g.size())), VecR(static_cast<Eigen::Index>(g.size()))};
  for (std::size_t k = 0; k < g.size(); ++k) {
    const cplx e = clean[g[k].row] - g[k].tau;
    z.zeta_R[k] = s * e.real();
    z.zeta_I[k] = s * e.imag();
  }
  return z;
}

// Number of members with positive real / imaginary part in each group.
struct QuantCounts {
  std::vector<int> pos_R;
  std::vector<int> pos_I;
  std::vector<int> size;
};

inline QuantCounts quantized_counts(const LgoModel& m, const VecC& x_q) {
  if (x_q.size() != m.N_q()) throw config_error("x_q length does not match model");
  QuantCounts c;
  for (const auto& g : m.groups()) {
    int r = 0, i = 0;
    for (int n : g.members) {
      r += x_q[n].real() > 0.0;
      i += x_q[n].imag() > 0.0;
    }
    c.pos_R.push_back(r);
    c.pos_I.push_back(i);
    c.size.push_back(static_cast<int>(g.members.size()));
  }
  return c;
}

inline double quantized_log_pmf(const LgoModel& m, const QuantCounts& c, const VecC& theta) {
  const ZetaPair z = group_zeta(m, theta);
  double lp = 0.0;
  for (std::size_t k = 0; k < c.size.size(); ++k) {
    const double zr = z.zeta_R[static_cast<Eigen::Index>(k)];
    const double zi = z.zeta_I[static_cast<Eigen::Index>(k)];
    if (c.pos_R[k] > 0) lp += c.pos_R[k] * log_std_normal_cdf(zr);
    if (c.size[k] > c.pos_R[k]) lp += (c.size[k] - c.pos_R[k]) * log_std_normal_cdf(-zr);
    if (c.pos_I[k] > 0) lp += c.pos_I[k] * log_std_normal_cdf(zi);
    if (c.size[k] > c.pos_I[k]) lp += (c.size[k] - c.pos_I[k]) * log_std_normal_cdf(-zi);
  }
  return lp;
}

// log p(x_q | theta). The exponent (1/2 + Re x_q / sqrt 2) is 0 or 1 on the
// lexicon, so each part selects log Phi(zeta) or log Phi(-zeta).
inline double quantized_log_pmf(const LgoModel& m, const VecC& x_q, const VecC& theta) {
  check_theta(m, theta);
  return quantized_log_pmf(m, quantized_counts(m, x_q), theta);
}

// d log Phi(+-zeta) / d zeta for the observed sign, via Mills ratios.
inline double sign_score(double zeta, bool positive) {
  return positive ? mills_ratio(-zeta) : -mills_ratio(zeta);
}

// Gradient d log p(x_q|theta) / d theta (Wirtinger); the conjugate
// derivative is its complex conjugate.
inline VecC quantized_score(const LgoModel& m, const VecC& x_q, const VecC& theta) {
  check_theta(m, theta);
  if (x_q.size() != m.N_q()) throw config_error("x_q length does not match model");
  const ZetaPair z = zeta(m, theta);
  const double scale = kInvSqrt2 / m.sigma_q();
  VecC g = VecC::Zero(m.M());
  for (int n = 0; n < m.N_q(); ++n) {
    const double gr = sign_score(z.zeta_R[n], x_q[n].real() > 0.0);
    const double gi = sign_score(z.zeta_I[n], x_q[n].imag() > 0.0);
    g += scale * cplx(gr, -gi) * m.t_row(n).transpose();
  }
  return g;
}

inline VecR d_matrix(const LgoModel& m, const VecC& theta) {
  const ZetaPair z = zeta(m, theta);
  VecR d(m.N_q());
  for (int n = 0; n < m.N_q(); ++n) d[n] = d_term(z.zeta_R[n]) + d_term(z.zeta_I[n]);
  return d;
}

// Analog plus quantized Fisher information at theta (no prior term).
inline MatC data_fim(const LgoModel& m, const VecC& theta) {
  MatC J = m.HtH() / m.sigma_a2();
  const ZetaPair z = group_zeta(m, theta);
  const double c = 0.5 / m.sigma_q2();
  const auto& g = m.groups();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double d = d_term(z.zeta_R[kk]) + d_term(z.zeta_I[kk]);
    if (d == 0.0) continue;
    const auto t = m.T1().row(g[k].row);
    J += (c * d * static_cast<double>(g[k].members.size())) * (t.adjoint() * t);
  }
  return J;
}

// E[score score^T | theta] (non-conjugated), in closed form.
inline MatC pseudo_fim_given_theta(const LgoModel& m, const VecC& theta) {
  MatC P = MatC::Zero(m.M(), m.M());
  const ZetaPair z = group_zeta(m, theta);
  const double c = 0.5 / m.sigma_q2();
  const auto& g = m.groups();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    const double diff = d_term(z.zeta_R[kk]) - d_term(z.zeta_I[kk]);
    const auto t = m.T1().row(g[k].row);
    P += (c * diff * static_cast<double>(g[k].members.size())) * (t.transpose() * t);
  }
  return P;
}

inline double log_saturation_prob_given_theta(const LgoModel& m, const VecC& theta) {
  check_theta(m, theta);
  const ZetaPair z = group_zeta(m, theta);
  double lp = 0.0;
  const auto& g = m.groups();
  for (std::size_t k = 0; k < g.size(); ++k) {
    const auto kk = static_cast<Eigen::Index>(k);
    lp += static_cast<double>(g[k].members.size()) *
          (log_std_normal_cdf(std::abs(z.zeta_R[kk])) + log_std_normal_cdf(std::abs(z.zeta_I[kk])));
  }
  return lp;
}

inline double saturation_prob_given_theta(const LgoModel& m, const VecC& theta) {
  return std::exp(log_saturation_prob_given_theta(m, theta));
}

}  // namespace mixres
