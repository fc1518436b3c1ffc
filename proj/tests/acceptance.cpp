// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any fails. Per-point details go to stderr.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "mixres/sweep.hpp"

using namespace mixres;

namespace {

const double kOneBitLimit = 1.0 - 2.0 / std::numbers::pi;

unsigned threads() { return std::max(1u, std::thread::hardware_concurrency()); }

double tr(const MatC& A) { return A.trace().real(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Outcome()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++failures;
  std::printf("%s  %s  [%.1fs] %s\n", o.pass ? "PASS" : "FAIL", name, secs, o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char b[64];
  std::snprintf(b, sizeof b, f, a);
  return b;
}

struct Moments {
  double s = 0, s2 = 0;
  std::size_t n = 0;
  void add(double x) {
    s += x;
    s2 += x * x;
    ++n;
  }
  double mean() const { return s / n; }
  double se() const { return std::sqrt(std::max(0.0, s2 / n - mean() * mean()) / (n - 1)); }
};

std::vector<SweepRecord> run_logged(const SweepConfig& c, const char* tag) {
  return run_sweep(c, [tag](std::size_t i, std::size_t n, const SweepRecord& r) {
    std::fprintf(stderr,
                 "[%s %zu/%zu] snr=%.2f n=(%d,%d) bcrb=%.6g wbcrb=%.6g opt=%.6g ecrb=%.6g mmse=%.6g+-%.2g "
                 "lmmse=%.6g approx=%.6g pr=%.4g %s\n",
                 tag, i, n, r.snr_db, r.n_a, r.n_q, r.bcrb, r.wbcrb_fiminv, r.wbcrb_opt, r.ecrb, r.mse_mmse,
                 r.mse_mmse_se, r.mse_lmmse, r.mse_approx, r.pr_sat, r.error.c_str());
  });
}

Outcome analog_exactness() {
  Outcome o;
  const LgoModel m = LgoModel::standard(1, 1, 0, 1.0);
  const double b = tr(bcrb(m, default_rule(m)));
  McConfig cfg;
  cfg.K = 2000;
  cfg.S = 1000;
  cfg.threads = threads();
  const MseResult mm = empirical_mse(m, mmse_estimator(cfg), cfg);
  RngStream fit(cfg.seed, std::numeric_limits<std::uint64_t>::max());
  const MseResult lm = empirical_mse(m, lmmse_estimator(scm_covariances(m, 20000, fit)), cfg);
  const double em = tr(mm.mse), el = tr(lm.mse);
  o.pass = std::abs(b - 0.5) <= 1e-9 && std::abs(em - 0.5) <= 3 * mm.std_err && std::abs(el - 0.5) <= 3 * lm.std_err;
  o.detail = "bcrb=" + fmt("%.12g", b) + " mmse=" + fmt("%.5f", em) + "+-" + fmt("%.4f", mm.std_err) +
             " lmmse=" + fmt("%.5f", el) + "+-" + fmt("%.4f", lm.std_err);
  return o;
}

Outcome pure_one_bit() {
  Outcome o;
  SweepConfig c = figure_preset("fig5");
  c.sigma_grid = {0.05};
  c.outputs = {Quantity::mmse, Quantity::approx, Quantity::pr_sat};
  c.mc.threads = threads();
  const auto recs = run_logged(c, "fig5@0.05");
  for (const auto& r : recs) {
    const bool ok = r.error.empty() && std::abs(r.mse_mmse - kOneBitLimit) <= 0.03 &&
                    std::abs(r.mse_approx - kOneBitLimit) <= 0.01;
    o.pass = o.pass && ok;
    o.detail += "n_q=" + std::to_string(r.n_q) + ": mmse=" + fmt("%.4f", r.mse_mmse) + " approx=" +
                fmt("%.4f", r.mse_approx) + " pr=" + fmt("%.3f", r.pr_sat) + "; ";
  }
  o.detail += "limit=" + fmt("%.4f", kOneBitLimit);
  return o;
}

Outcome bound_ordering(const std::vector<SweepRecord>& f3) {
  Outcome o;
  for (const auto& r : f3) {
    const bool a = r.bcrb <= r.wbcrb_fiminv + 1e-9;
    const bool b = r.wbcrb_fiminv <= r.mse_mmse + 3 * r.mse_mmse_se;
    const bool c = r.wbcrb_opt >= r.wbcrb_fiminv - 0.02;
    if (!(a && b && c && r.error.empty())) {
      o.pass = false;
      o.detail += fmt("%.2fdB:", r.snr_db) + (a ? "" : " bcrb>wbcrb") + (b ? "" : " wbcrb>mmse") +
                  (c ? "" : " opt<wbcrb") + (r.error.empty() ? "" : " error") + "; ";
    }
  }
  if (o.pass) o.detail = "all " + std::to_string(f3.size()) + " points";
  return o;
}

Outcome non_monotonicity(const std::vector<SweepRecord>& f3) {
  Outcome o;
  const double tol = 1e-9;
  bool mono = true;
  for (std::size_t i = 1; i < f3.size(); ++i) mono = mono && f3[i].bcrb <= f3[i - 1].bcrb + tol;
  int peak = -1;
  for (std::size_t i = 1; i + 1 < f3.size(); ++i) {
    if (f3[i].wbcrb_fiminv > f3[i - 1].wbcrb_fiminv + 2 * tol && f3[i].wbcrb_fiminv > f3[i + 1].wbcrb_fiminv + 2 * tol) {
      peak = static_cast<int>(i);
      break;
    }
  }
  o.pass = mono && peak >= 0;
  o.detail = std::string("bcrb monotone=") + (mono ? "yes" : "no");
  if (peak >= 0)
    o.detail += " wbcrb local max at " + fmt("%.2f dB", f3[peak].snr_db) + " (" +
                fmt("%.5f", f3[peak - 1].wbcrb_fiminv) + " < " + fmt("%.5f", f3[peak].wbcrb_fiminv) + " > " +
                fmt("%.5f", f3[peak + 1].wbcrb_fiminv) + ")";
  else
    o.detail += " no interior wbcrb maximum";
  return o;
}

Outcome approx_fidelity(const std::vector<SweepRecord>& f3) {
  Outcome o;
  const std::size_t n = f3.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double rel = std::abs(f3[i].mse_approx - f3[i].mse_mmse) / f3[i].mse_mmse;
    const double lim = i + 3 >= n ? 0.10 : 0.25;
    if (!(rel <= lim)) o.pass = false;
    o.detail += fmt("%.1fdB:", f3[i].snr_db) + fmt("%.0f%%", 100 * rel) + (rel <= lim ? " " : "! ");
  }
  return o;
}

Outcome score_calibration() {
  Outcome o;
  std::mt19937_64 g(20240601);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int mean_bad = 0, cov_bad = 0, fd_bad = 0, fd_checked = 0, cov_checked = 0;
  double worst_fd = 0.0;
  const int draws = 100000;
  for (int pair = 0; pair < 20; ++pair) {
    const int M = 1 + pair % 2;
    const int n_q = 1 + static_cast<int>(u(g) * 4);
    const double sigma = std::pow(10.0, -0.5 + u(g));
    const double tau = 2.0 * u(g) - 1.0;
    const LgoModel m = LgoModel::standard(M, 0, n_q, sigma * sigma, tau);
    RngStream rng(77, static_cast<std::uint64_t>(pair));
    const VecC th = sample_prior(m, rng);

    std::vector<Moments> mean(2 * M), cov(M * M);
    for (int k = 0; k < draws; ++k) {
      const VecC s = quantized_score(m, generate_quantized(m, th, rng), th);
      for (int i = 0; i < M; ++i) {
        mean[2 * i].add(s[i].real());
        mean[2 * i + 1].add(s[i].imag());
      }
      // Independent entries of the Hermitian outer product: diagonal, upper real and imaginary parts.
      int e = 0;
      for (int i = 0; i < M; ++i) {
        for (int j = i; j < M; ++j) {
          const cplx v = s[i] * std::conj(s[j]);
          cov[e++].add(v.real());
          if (j > i) cov[e++].add(v.imag());
        }
      }
    }
    for (const auto& mm : mean) mean_bad += std::abs(mm.mean()) > 5 * mm.se();
    const MatC J = data_fim(m, th);
    int e = 0;
    for (int i = 0; i < M; ++i) {
      for (int j = i; j < M; ++j) {
        cov_bad += std::abs(cov[e].mean() - J(i, j).real()) > 3 * cov[e].se();
        ++e;
        ++cov_checked;
        if (j > i) {
          cov_bad += std::abs(cov[e].mean() - J(i, j).imag()) > 3 * cov[e].se();
          ++e;
          ++cov_checked;
        }
      }
    }
    const ZetaPair z = zeta(m, th);
    if (z.zeta_R.cwiseAbs().maxCoeff() <= 3.0 && z.zeta_I.cwiseAbs().maxCoeff() <= 3.0) {
      const VecC xq = generate_quantized(m, th, rng);
      const VecC s = quantized_score(m, xq, th);
      for (int j = 0; j < M; ++j) {
        auto f = [&](cplx t) {
          VecC p = th;
          p[j] = t;
          return cplx(quantized_log_pmf(m, xq, p));
        };
        const cplx fd = std::conj(wirtinger_derivative_richardson(f, th[j], 1e-3));
        const double rel = std::abs(s[j] - fd) / std::abs(fd);
        worst_fd = std::max(worst_fd, rel);
        fd_bad += rel > 1e-5;
        ++fd_checked;
      }
    }
  }
  o.pass = mean_bad == 0 && cov_bad == 0 && fd_bad == 0 && fd_checked > 0;
  o.detail = "mean>5SE: " + std::to_string(mean_bad) + ", cov>3SE: " + std::to_string(cov_bad) + "/" +
             std::to_string(cov_checked) + ", fd rel err max " + fmt("%.2e", worst_fd) + " over " +
             std::to_string(fd_checked) + " components";
  return o;
}

Outcome saturation_probability() {
  Outcome o;
  const auto grid = sigma_grid_db(-10.0, 20.0, 10);
  int bad = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const LgoModel m = LgoModel::standard(1, 0, 20, grid[i] * grid[i]);
    const SaturationEstimate cf = saturation_prob_closed(m, default_rule(m), threads());
    const SaturationEstimate mc = saturation_prob_mc(m, 100000, 64, RngStream(99, i), threads());
    const bool ok = std::abs(cf.prob - mc.prob) <= 3 * mc.std_err;
    bad += !ok;
    o.detail += fmt("%.1fdB:", snr_db_from_sigma(grid[i])) + fmt("%.4f", cf.prob) + "/" + fmt("%.4f", mc.prob) +
                (ok ? " " : "! ");
  }
  o.pass = bad == 0;
  o.detail = "closed/mc " + o.detail;
  return o;
}

Outcome pseudo_fim() {
  Outcome o;
  struct Cfg {
    int M, n_a, n_q;
    double sigma;
  };
  int bad = 0, checked = 0;
  for (const Cfg& c : {Cfg{1, 0, 10, 1.0}, Cfg{1, 1, 100, 0.3}, Cfg{2, 1, 5, 0.7}}) {
    const LgoModel m = LgoModel::standard(c.M, c.n_a, c.n_q, c.sigma * c.sigma);
    McConfig cfg;
    cfg.K = 100000;
    cfg.seed = 5;
    cfg.threads = threads();
    const PseudoFimEstimate p = pseudo_fim_mc(m, cfg);
    for (int i = 0; i < c.M; ++i) {
      for (int j = i; j < c.M; ++j) {
        bad += std::abs(p.estimate(i, j).real()) > 3 * p.std_err(i, j).real();
        bad += std::abs(p.estimate(i, j).imag()) > 3 * p.std_err(i, j).imag();
        checked += 2;
      }
    }
    o.detail += "M=" + std::to_string(c.M) + " n_q=" + std::to_string(c.n_q) + " |P00|=" +
                fmt("%.2e", std::abs(p.estimate(0, 0))) + "; ";
  }
  o.pass = bad == 0;
  o.detail += std::to_string(bad) + "/" + std::to_string(checked) + " entries beyond 3 SE";
  return o;
}

Outcome quadrature_vs_mc() {
  Outcome o;
  struct Cfg {
    int n_a, n_q;
    double sigma, tau;
  };
  int bad = 0, checked = 0;
  for (const Cfg& c : {Cfg{1, 100, 1.0, 0.0}, Cfg{1, 100, 0.3, 2.5}, Cfg{0, 20, 0.5, 0.0}}) {
    const LgoModel m = LgoModel::standard(1, c.n_a, c.n_q, c.sigma * c.sigma, c.tau);
    auto f = [&](const VecC& th, VecR& out) {
      const WeightEval e = fim_inverse_weight(m, th);
      const MatC A = a_integrand(m, th, WeightKind::fim_inverse, AMethod::divergence);
      out[0] = d_matrix(m, th)[0];
      out[1] = e.W(0, 0).real();
      out[2] = std::norm(e.v[0]);
      out[3] = A(0, 0).real();
      out[4] = A(0, 0).imag();
    };
    const Expectation q = expect(ridge_adapted_rule(m, 64), 5, f, threads());
    const Expectation mc = expect(monte_carlo_rule(1, 1000000, kQuadratureSeed + 7), 5, f, threads());
    const char* names[] = {"E[D]", "E[W]", "E[vv]", "ReA", "ImA"};
    std::string line;
    for (int k = 0; k < 5; ++k) {
      const bool ok = std::abs(q.mean[k] - mc.mean[k]) <= 3 * mc.se[k];
      bad += !ok;
      ++checked;
      if (!ok) line += std::string(" ") + names[k];
    }
    o.detail += fmt("sigma=%.2f", c.sigma) + fmt(" tau=%.1f", c.tau) + (line.empty() ? " ok" : line) + "; ";
  }
  o.pass = bad == 0;
  o.detail += std::to_string(bad) + "/" + std::to_string(checked) + " beyond 3 SE";
  return o;
}

int first_crossing(const std::vector<double>& d) {
  for (std::size_t i = 1; i < d.size(); ++i)
    if ((d[i] > 0) != (d[i - 1] > 0)) return static_cast<int>(i);
  return -1;
}

Outcome partition_crossing() {
  Outcome o;
  SweepConfig c = figure_preset("fig6");
  c.outputs = {Quantity::wbcrb_fiminv, Quantity::mmse, Quantity::approx};
  c.mc.threads = threads();
  const auto recs = run_logged(c, "fig6");
  const std::size_t n = c.sigma_grid.size();
  std::vector<double> dm(n), da(n);
  for (std::size_t i = 0; i < n; ++i) {
    dm[i] = recs[i].mse_mmse - recs[n + i].mse_mmse;
    da[i] = recs[i].mse_approx - recs[n + i].mse_approx;
  }
  const int cm = first_crossing(dm), ca = first_crossing(da);
  o.pass = cm >= 0 && ca >= 0 && std::abs(cm - ca) <= 2;
  auto where = [&](int i) { return i < 0 ? std::string("none") : fmt("%.2f dB", recs[i].snr_db); };
  o.detail = "mmse crossing " + where(cm) + ", approx crossing " + where(ca);
  return o;
}

}  // namespace

int main() {
  report("analog-only exactness", analog_exactness);
  report("pure 1-bit saturation", pure_one_bit);

  SweepConfig f3c = figure_preset("fig3a");
  f3c.mc.threads = threads();
  std::vector<SweepRecord> f3;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    f3 = run_logged(f3c, "fig3a");
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fig3a sweep failed: %s\n", e.what());
  }
  std::fprintf(stderr, "fig3a sweep took %.1fs\n",
               std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  auto need = [&](Outcome (*fn)(const std::vector<SweepRecord>&)) {
    return [&f3, fn]() {
      if (f3.empty()) return Outcome{false, "fig3a sweep unavailable"};
      return fn(f3);
    };
  };
  report("bound ordering (fig3a)", need(bound_ordering));
  report("non-monotonicity (fig3a)", need(non_monotonicity));
  report("approximation fidelity (fig3a)", need(approx_fidelity));
  report("score calibration", score_calibration);
  report("saturation probability closed form vs Monte Carlo", saturation_probability);
  report("pseudo-FIM vanishing", pseudo_fim);
  report("quadrature vs Monte Carlo", quadrature_vs_mc);
  report("partition crossing (fig6)", partition_crossing);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
