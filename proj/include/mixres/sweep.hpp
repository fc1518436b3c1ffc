#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixres/bounds.hpp"
#include "mixres/estimators.hpp"
#include "mixres/lgo.hpp"
#include "mixres/mse_approx.hpp"
#include "mixres/quadrature.hpp"

namespace mixres {

class io_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SweepKind { snr, tau, partition };
enum class Quantity { bcrb, wbcrb_fiminv, wbcrb_opt, ecrb, mmse, lmmse, approx, pr_sat };

inline const char* to_string(SweepKind k) {
  switch (k) {
    case SweepKind::snr: return "snr";
    case SweepKind::tau: return "tau";
    case SweepKind::partition: return "partition";
  }
  return "?";
}

inline SweepKind parse_sweep_kind(const std::string& s) {
  if (s == "snr") return SweepKind::snr;
  if (s == "tau") return SweepKind::tau;
  if (s == "partition") return SweepKind::partition;
  throw config_error("unknown sweep kind '" + s + "'");
}

inline const std::map<std::string, Quantity>& quantity_names() {
  static const std::map<std::string, Quantity> names = {
      {"bcrb", Quantity::bcrb},   {"wbcrb_fiminv", Quantity::wbcrb_fiminv}, {"wbcrb_opt", Quantity::wbcrb_opt},
      {"ecrb", Quantity::ecrb},   {"mmse", Quantity::mmse},                 {"lmmse", Quantity::lmmse},
      {"approx", Quantity::approx}, {"pr_sat", Quantity::pr_sat}};
  return names;
}

inline std::set<Quantity> all_quantities() {
  std::set<Quantity> q;
  for (const auto& [name, v] : quantity_names()) q.insert(v);
  return q;
}

struct Partition {
  int n_a = 1;
  int n_q = 100;
  bool operator==(const Partition&) const = default;
};

inline double snr_db_from_sigma(double sigma) { return -20.0 * std::log10(sigma); }
inline double sigma_from_snr_db(double snr_db) { return std::pow(10.0, -snr_db / 20.0); }

// `steps` SNR values evenly spaced in dB from snr_min to snr_max, as sigmas.
inline std::vector<double> sigma_grid_db(double snr_min, double snr_max, int steps) {
  if (steps < 1) throw config_error("grid needs at least one point");
  std::vector<double> g;
  for (int i = 0; i < steps; ++i) {
    const double snr = steps == 1 ? snr_min : snr_min + (snr_max - snr_min) * i / (steps - 1);
    g.push_back(sigma_from_snr_db(snr));
  }
  return g;
}

struct SweepConfig {
  SweepKind kind = SweepKind::snr;
  std::vector<double> sigma_grid = sigma_grid_db(-10.0, 20.0, 16);  // snr and partition sweeps
  std::vector<double> tau_grid;                                     // tau sweep
  double sigma = 0.5;                                               // fixed sigma of a tau sweep
  std::vector<Partition> partitions;                                // partition sweep
  int M = 1;
  int n_a = 1;
  int n_q = 100;
  double tau = 0.0;
  double rho_a = 1.0;
  double rho_q = 1.0;
  McConfig mc;
  std::size_t scm_samples = 20000;
  int quad_order = 64;
  double delta = 0.2;
  std::size_t L = 1000;
  std::set<Quantity> outputs = all_quantities();

  void validate() const {
    mc.validate();
    if (outputs.empty()) throw config_error("no output quantities enabled");
    auto strictly_monotone = [](const std::vector<double>& g) {
      if (g.empty()) return false;
      bool inc = true, dec = true;
      for (std::size_t i = 1; i < g.size(); ++i) {
        inc = inc && g[i] > g[i - 1];
        dec = dec && g[i] < g[i - 1];
      }
      return inc || dec;
    };
    for (double s : sigma_grid)
      if (!(s > 0.0) || !std::isfinite(s)) throw config_error("sigma values must be positive and finite");
    if (kind == SweepKind::tau) {
      if (!strictly_monotone(tau_grid)) throw config_error("tau grid must be non-empty and strictly monotone");
      if (!(sigma > 0.0)) throw config_error("sigma must be positive");
    } else if (!strictly_monotone(sigma_grid)) {
      throw config_error("sigma grid must be non-empty and strictly monotone");
    }
    if (kind == SweepKind::partition && partitions.empty()) throw config_error("partition sweep needs partitions");
    if (M < 1) throw config_error("M must be >= 1");
    if (outputs.count(Quantity::wbcrb_opt) && M != 1) throw config_error("wbcrb_opt requires M = 1");
    if (quad_order < 16) throw config_error("quad-order must be >= 16");
    if (!(delta > 0.0) || L < 3) throw config_error("optimal-bound grid needs delta > 0 and L >= 3");
    if (scm_samples < 2) throw config_error("scm sample count must be >= 2");
    const auto check_partition = [](int na, int nq) {
      if (na < 0 || nq < 0 || na + nq < 1) throw config_error("need n_a, n_q >= 0 and n_a + n_q >= 1");
    };
    if (kind == SweepKind::partition) {
      for (const auto& p : partitions) check_partition(p.n_a, p.n_q);
    } else {
      check_partition(n_a, n_q);
    }
  }
};

inline SweepConfig figure_preset(const std::string& name) {
  SweepConfig c;
  c.mc.K = 1000;
  c.mc.S = 1000;
  c.sigma_grid = sigma_grid_db(-10.0, 20.0, 10);
  if (name == "fig3a") {
    c.n_a = 1, c.n_q = 100, c.tau = 0.0;
  } else if (name == "fig3b") {
    c.n_a = 1, c.n_q = 100, c.tau = 2.5;
  } else if (name == "fig4") {
    c.kind = SweepKind::tau;
    c.n_a = 1, c.n_q = 100, c.sigma = 0.5;
    c.tau_grid.clear();
    for (int i = 0; i <= 12; ++i) c.tau_grid.push_back(0.25 * i);
  } else if (name == "fig5") {
    c.kind = SweepKind::partition;
    c.partitions = {{0, 20}, {0, 40}};
    c.sigma_grid = sigma_grid_db(-10.0, snr_db_from_sigma(0.05), 10);
    c.outputs.erase(Quantity::wbcrb_opt);
  } else if (name == "fig6") {
    c.kind = SweepKind::partition;
    c.partitions = {{1, 150}, {2, 100}};
  } else {
    throw config_error("unknown preset '" + name + "'");
  }
  return c;
}

struct SweepRecord {
  std::string sweep_kind;
  double sweep_value = 0.0;
  double snr_db = 0.0;
  double sigma = 0.0;
  double tau = 0.0;
  int n_a = 0;
  int n_q = 0;
  double bcrb = NAN;
  double wbcrb_fiminv = NAN;
  double wbcrb_opt = NAN;
  double ecrb = NAN;
  double mse_mmse = NAN;
  double mse_mmse_se = NAN;
  double mse_lmmse = NAN;
  double mse_lmmse_se = NAN;
  double mse_approx = NAN;
  double pr_sat = NAN;
  double pr_sat_se = NAN;
  long long flagged_trials = 0;
  long long trials = 0;
  long long samples = 0;
  std::uint64_t seed = 0;
  std::string error;
};

struct SweepPoint {
  double sweep_value;
  double sigma;
  double tau;
  Partition part;
};

inline std::vector<SweepPoint> sweep_points(const SweepConfig& c) {
  std::vector<SweepPoint> pts;
  switch (c.kind) {
    case SweepKind::snr:
      for (double s : c.sigma_grid) pts.push_back({snr_db_from_sigma(s), s, c.tau, {c.n_a, c.n_q}});
      break;
    case SweepKind::tau:
      for (double t : c.tau_grid) pts.push_back({t, c.sigma, t, {c.n_a, c.n_q}});
      break;
    case SweepKind::partition:
      for (const auto& p : c.partitions)
        for (double s : c.sigma_grid) pts.push_back({snr_db_from_sigma(s), s, c.tau, p});
      break;
  }
  return pts;
}

inline std::uint64_t point_seed(std::uint64_t seed, std::size_t index) {
  return mix64(seed ^ mix64(static_cast<std::uint64_t>(index) + 0x51ed270b27f1c3a5ULL));
}

inline double trace_real(const MatC& A) { return A.trace().real(); }

// One grid point. Each quantity is computed independently; failures are
// collected into the error field and leave the affected columns as nan.
inline SweepRecord run_point(const SweepConfig& c, const SweepPoint& p, std::size_t index) {
  SweepRecord r;
  r.sweep_kind = to_string(c.kind);
  r.sweep_value = p.sweep_value;
  r.sigma = p.sigma;
  r.snr_db = snr_db_from_sigma(p.sigma);
  r.tau = p.tau;
  r.n_a = p.part.n_a;
  r.n_q = p.part.n_q;
  r.seed = c.mc.seed;
  const bool stochastic = c.outputs.count(Quantity::mmse) || c.outputs.count(Quantity::lmmse);
  r.trials = stochastic ? static_cast<long long>(c.mc.K) : 0;
  r.samples = c.outputs.count(Quantity::mmse) ? static_cast<long long>(c.mc.S) : 0;

  auto fail = [&](const char* what, const std::exception& e) {
    if (!r.error.empty()) r.error += "; ";
    r.error += std::string(what) + ": " + e.what();
  };

  std::optional<LgoModel> model;
  try {
    LgoConfig lc;
    lc.M = c.M;
    lc.n_a = p.part.n_a;
    lc.n_q = p.part.n_q;
    lc.sigma_a2 = lc.sigma_q2 = p.sigma * p.sigma;
    lc.rho_a = c.rho_a;
    lc.rho_q = c.rho_q;
    lc.tau = p.tau;
    model = LgoModel::standard(lc);
  } catch (const std::exception& e) {
    fail("model", e);
    return r;
  }
  const LgoModel& m = *model;
  const unsigned threads = c.mc.threads;
  McConfig mc = c.mc;
  mc.seed = point_seed(c.mc.seed, index);

  std::optional<QuadratureRule> rule;
  auto get_rule = [&]() -> const QuadratureRule& {
    if (!rule) rule = default_rule(m, c.quad_order);
    return *rule;
  };
  const auto& out = c.outputs;

  if (out.count(Quantity::bcrb)) {
    try {
      r.bcrb = trace_real(bcrb(m, get_rule(), threads));
    } catch (const std::exception& e) {
      fail("bcrb", e);
    }
  }
  std::optional<MatC> wb;
  if (out.count(Quantity::wbcrb_fiminv) || out.count(Quantity::approx)) {
    try {
      wb = wbcrb_fim_inverse(m, get_rule(), threads);
      if (out.count(Quantity::wbcrb_fiminv)) r.wbcrb_fiminv = trace_real(*wb);
    } catch (const std::exception& e) {
      fail("wbcrb_fiminv", e);
    }
  }
  if (out.count(Quantity::wbcrb_opt)) {
    try {
      r.wbcrb_opt = wbcrb_optimal_scalar(m, c.delta, c.L);
    } catch (const std::exception& e) {
      fail("wbcrb_opt", e);
    }
  }
  if (out.count(Quantity::ecrb)) {
    try {
      r.ecrb = trace_real(ecrb(m, get_rule(), threads));
    } catch (const std::exception& e) {
      fail("ecrb", e);
    }
  }
  if (out.count(Quantity::approx) || out.count(Quantity::pr_sat)) {
    try {
      if (m.n_q() > 0) {
        const SaturationEstimate s = saturation_prob_closed(m, get_rule(), threads);
        if (out.count(Quantity::pr_sat)) {
          r.pr_sat = s.prob;
          r.pr_sat_se = s.std_err;
        }
      }
      if (out.count(Quantity::approx)) {
        if (!wb) throw numeric_error("WBCRB unavailable");
        r.mse_approx = trace_real(mse_approx(m, get_rule(), *wb, threads));
      }
    } catch (const std::exception& e) {
      fail("approx", e);
    }
  }
  if (out.count(Quantity::mmse)) {
    try {
      const MseResult res = empirical_mse(m, mmse_estimator(mc), mc);
      r.mse_mmse = trace_real(res.mse);
      r.mse_mmse_se = res.std_err;
      r.flagged_trials = static_cast<long long>(res.flagged);
    } catch (const std::exception& e) {
      fail("mmse", e);
    }
  }
  if (out.count(Quantity::lmmse)) {
    try {
      RngStream fit(mc.seed, std::numeric_limits<std::uint64_t>::max());
      const CovarianceSet cov = scm_covariances(m, c.scm_samples, fit);
      const MseResult res = empirical_mse(m, lmmse_estimator(cov), mc);
      r.mse_lmmse = trace_real(res.mse);
      r.mse_lmmse_se = res.std_err;
    } catch (const std::exception& e) {
      fail("lmmse", e);
    }
  }
  return r;
}

template <class Progress>
std::vector<SweepRecord> run_sweep(const SweepConfig& c, Progress&& progress) {
  c.validate();
  const auto pts = sweep_points(c);
  std::vector<SweepRecord> recs;
  recs.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    recs.push_back(run_point(c, pts[i], i));
    progress(i + 1, pts.size(), recs.back());
  }
  return recs;
}

inline std::vector<SweepRecord> run_sweep(const SweepConfig& c) {
  return run_sweep(c, [](std::size_t, std::size_t, const SweepRecord&) {});
}

// CSV -----------------------------------------------------------------------

inline const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols = {
      "sweep_kind", "sweep_value", "snr_db",       "sigma",    "tau",       "n_a",            "n_q",
      "bcrb",       "wbcrb_fiminv", "wbcrb_opt",   "ecrb",     "mse_mmse",  "mse_mmse_se",    "mse_lmmse",
      "mse_lmmse_se", "mse_approx", "pr_sat",      "pr_sat_se", "flagged_trials", "trials",     "samples",
      "seed",       "error"};
  return cols;
}

namespace detail {
inline std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char ch : s) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + "\"";
}

inline double parse_double(const std::string& s) {
  if (s == "nan") return NAN;
  if (s == "inf") return INFINITY;
  if (s == "-inf") return -INFINITY;
  double v = 0.0;
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("bad number '" + s + "'");
  return v;
}

// Splits RFC-4180 text into rows of fields.
inline std::vector<std::vector<std::string>> csv_split(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char ch = text[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += ch;
      }
      continue;
    }
    if (ch == '"') {
      quoted = true;
      any = true;
    } else if (ch == ',') {
      row.push_back(field);
      field.clear();
      any = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(field);
      rows.push_back(row);
      row.clear();
      field.clear();
      any = false;
    } else {
      field += ch;
      any = true;
    }
  }
  if (any || !field.empty() || !row.empty()) {
    row.push_back(field);
    rows.push_back(row);
  }
  return rows;
}
}  // namespace detail

inline std::string format_csv(const std::vector<SweepRecord>& recs) {
  using detail::fmt_double;
  std::ostringstream os;
  const auto& cols = csv_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << "\r\n";
  for (const auto& r : recs) {
    os << detail::csv_quote(r.sweep_kind) << ',' << fmt_double(r.sweep_value) << ',' << fmt_double(r.snr_db) << ','
       << fmt_double(r.sigma) << ',' << fmt_double(r.tau) << ',' << r.n_a << ',' << r.n_q << ','
       << fmt_double(r.bcrb) << ',' << fmt_double(r.wbcrb_fiminv) << ',' << fmt_double(r.wbcrb_opt) << ','
       << fmt_double(r.ecrb) << ',' << fmt_double(r.mse_mmse) << ',' << fmt_double(r.mse_mmse_se) << ','
       << fmt_double(r.mse_lmmse) << ',' << fmt_double(r.mse_lmmse_se) << ',' << fmt_double(r.mse_approx) << ','
       << fmt_double(r.pr_sat) << ',' << fmt_double(r.pr_sat_se) << ',' << r.flagged_trials << ',' << r.trials
       << ',' << r.samples << ',' << r.seed << ',' << detail::csv_quote(r.error) << "\r\n";
  }
  return os.str();
}

inline std::vector<SweepRecord> parse_csv(const std::string& text) {
  const auto rows = detail::csv_split(text);
  if (rows.empty() || rows[0] != csv_columns()) throw config_error("CSV header does not match the sweep schema");
  std::vector<SweepRecord> recs;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != csv_columns().size()) throw config_error("CSV row " + std::to_string(i) + " has wrong field count");
    using detail::parse_double;
    SweepRecord r;
    r.sweep_kind = f[0];
    r.sweep_value = parse_double(f[1]);
    r.snr_db = parse_double(f[2]);
    r.sigma = parse_double(f[3]);
    r.tau = parse_double(f[4]);
    r.n_a = std::stoi(f[5]);
    r.n_q = std::stoi(f[6]);
    r.bcrb = parse_double(f[7]);
    r.wbcrb_fiminv = parse_double(f[8]);
    r.wbcrb_opt = parse_double(f[9]);
    r.ecrb = parse_double(f[10]);
    r.mse_mmse = parse_double(f[11]);
    r.mse_mmse_se = parse_double(f[12]);
    r.mse_lmmse = parse_double(f[13]);
    r.mse_lmmse_se = parse_double(f[14]);
    r.mse_approx = parse_double(f[15]);
    r.pr_sat = parse_double(f[16]);
    r.pr_sat_se = parse_double(f[17]);
    r.flagged_trials = std::stoll(f[18]);
    r.trials = std::stoll(f[19]);
    r.samples = std::stoll(f[20]);
    r.seed = std::stoull(f[21]);
    r.error = f[22];
    recs.push_back(r);
  }
  return recs;
}

inline void write_csv(const std::vector<SweepRecord>& recs, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw io_error("cannot open '" + path + "' for writing");
  os << format_csv(recs);
  os.flush();
  if (!os) throw io_error("write to '" + path + "' failed");
}

// Config file: `key = value` lines, '#' starts a comment. Keys are the long
// CLI flag names without the leading dashes.
inline std::map<std::string, std::string> parse_config_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw config_error("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw config_error("config line " + std::to_string(lineno) + ": empty key");
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace detail {
inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',' || ch == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}
}  // namespace detail

inline std::set<Quantity> parse_quantities(const std::string& s) {
  std::set<Quantity> q;
  for (const auto& name : detail::split_list(s)) {
    const auto it = quantity_names().find(name);
    if (it == quantity_names().end()) throw config_error("unknown quantity '" + name + "'");
    q.insert(it->second);
  }
  return q;
}

// Partitions written as "na:nq,na:nq".
inline std::vector<Partition> parse_partitions(const std::string& s) {
  std::vector<Partition> out;
  for (const auto& item : detail::split_list(s)) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw config_error("partition '" + item + "' must be n_a:n_q");
    try {
      out.push_back({std::stoi(item.substr(0, colon)), std::stoi(item.substr(colon + 1))});
    } catch (const std::logic_error&) {
      throw config_error("partition '" + item + "' must be n_a:n_q");
    }
  }
  return out;
}

inline std::vector<double> parse_double_list(const std::string& s) {
  std::vector<double> out;
  for (const auto& item : detail::split_list(s)) {
    try {
      out.push_back(detail::parse_double(item));
    } catch (const std::logic_error&) {
      throw config_error("bad number '" + item + "'");
    }
  }
  return out;
}

}  // namespace mixres
