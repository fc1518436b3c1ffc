// Runs a bound / estimator sweep and writes one CSV row per grid point.
//
// Exit codes: 0 ok, 2 configuration error, 3 some rows carry errors, 4 I/O error.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mixres/sweep.hpp"

namespace {

using mixres::config_error;

struct GridSpec {
  std::optional<double> sigma_min, sigma_max;
  std::optional<int> steps;
};

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw config_error("--" + key + ": expected a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long long d = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::logic_error&) {
    throw config_error("--" + key + ": expected an integer, got '" + v + "'");
  }
}

std::size_t to_count(const std::string& key, const std::string& v) {
  const long long n = to_int(key, v);
  if (n < 0) throw config_error("--" + key + " must be non-negative");
  return static_cast<std::size_t>(n);
}

void apply(mixres::SweepConfig& c, GridSpec& g, const std::string& key, const std::string& v) {
  if (key == "sweep") c.kind = mixres::parse_sweep_kind(v);
  else if (key == "na") c.n_a = static_cast<int>(to_int(key, v));
  else if (key == "nq") c.n_q = static_cast<int>(to_int(key, v));
  else if (key == "M") c.M = static_cast<int>(to_int(key, v));
  else if (key == "tau") c.tau = to_double(key, v);
  else if (key == "sigma") c.sigma = to_double(key, v);
  else if (key == "sigma-min") g.sigma_min = to_double(key, v);
  else if (key == "sigma-max") g.sigma_max = to_double(key, v);
  else if (key == "sigma-steps") g.steps = static_cast<int>(to_int(key, v));
  else if (key == "tau-grid") c.tau_grid = mixres::parse_double_list(v);
  else if (key == "partitions") c.partitions = mixres::parse_partitions(v);
  else if (key == "trials") c.mc.K = to_count(key, v);
  else if (key == "samples") c.mc.S = to_count(key, v);
  else if (key == "scm-samples") c.scm_samples = to_count(key, v);
  else if (key == "quad-order") c.quad_order = static_cast<int>(to_int(key, v));
  else if (key == "delta") c.delta = to_double(key, v);
  else if (key == "L") c.L = to_count(key, v);
  else if (key == "seed") c.mc.seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "threads") c.mc.threads = static_cast<unsigned>(to_count(key, v));
  else if (key == "quantities") c.outputs = mixres::parse_quantities(v);
  else throw config_error("unknown setting '" + key + "'");
}

// Log-spaced sigma values from sigma_max down to sigma_min (increasing SNR).
void finish_grid(mixres::SweepConfig& c, const GridSpec& g) {
  if (!g.sigma_min && !g.sigma_max && !g.steps) return;
  const double smax = g.sigma_max.value_or(*std::max_element(c.sigma_grid.begin(), c.sigma_grid.end()));
  const double smin = g.sigma_min.value_or(*std::min_element(c.sigma_grid.begin(), c.sigma_grid.end()));
  const int steps = g.steps.value_or(static_cast<int>(c.sigma_grid.size()));
  if (!(smin > 0.0) || !(smax > 0.0)) throw config_error("sigma bounds must be positive");
  if (steps > 1 && !(smax > smin)) throw config_error("--sigma-max must exceed --sigma-min");
  c.sigma_grid = mixres::sigma_grid_db(mixres::snr_db_from_sigma(smax), mixres::snr_db_from_sigma(smin), steps);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian bounds and estimator MSE sweeps for mixed analog / 1-bit measurements"};
  std::string preset, config_path, out_path;
  app.add_option("--preset", preset, "fig3a, fig3b, fig4, fig5 or fig6");
  app.add_option("--config", config_path, "key = value settings file (flags override it)");
  app.add_option("--out", out_path, "output CSV path (default: stdout)");

  const std::vector<std::pair<std::string, std::string>> keyed = {
      {"sweep", "snr, tau or partition"},
      {"na", "analog block count"},
      {"nq", "quantized block count"},
      {"M", "parameter dimension"},
      {"tau", "quantizer threshold (real)"},
      {"sigma", "noise standard deviation for a tau sweep"},
      {"sigma-min", "smallest sigma of the SNR grid"},
      {"sigma-max", "largest sigma of the SNR grid"},
      {"sigma-steps", "number of SNR grid points (evenly spaced in dB)"},
      {"tau-grid", "comma-separated thresholds for a tau sweep"},
      {"partitions", "comma-separated n_a:n_q pairs for a partition sweep"},
      {"trials", "Monte Carlo trials K"},
      {"samples", "prior samples S per MMSE estimate"},
      {"scm-samples", "draws used to fit the LMMSE covariances"},
      {"quad-order", "quadrature order"},
      {"delta", "optimal-bound grid spacing"},
      {"L", "optimal-bound grid size"},
      {"seed", "base seed"},
      {"threads", "worker threads (0 = hardware concurrency)"},
      {"quantities", "comma-separated subset of bcrb,wbcrb_fiminv,wbcrb_opt,ecrb,mmse,lmmse,approx,pr_sat"},
  };
  std::vector<std::string> values(keyed.size());
  std::vector<CLI::Option*> opts;
  for (std::size_t i = 0; i < keyed.size(); ++i)
    opts.push_back(app.add_option("--" + keyed[i].first, values[i], keyed[i].second));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  mixres::SweepConfig cfg;
  try {
    if (!preset.empty()) cfg = mixres::figure_preset(preset);
    GridSpec grid;
    if (!config_path.empty()) {
      std::ifstream is(config_path);
      if (!is) {
        std::cerr << "error: cannot read config '" << config_path << "'\n";
        return 4;
      }
      std::stringstream ss;
      ss << is.rdbuf();
      const auto kv = mixres::parse_config_text(ss.str());
      if (auto it = kv.find("preset"); it != kv.end() && preset.empty()) cfg = mixres::figure_preset(it->second);
      for (const auto& [k, v] : kv)
        if (k != "preset") apply(cfg, grid, k, v);
    }
    for (std::size_t i = 0; i < keyed.size(); ++i)
      if (opts[i]->count() > 0) apply(cfg, grid, keyed[i].first, values[i]);
    finish_grid(cfg, grid);
    if (cfg.mc.threads == 0) cfg.mc.threads = std::max(1u, std::thread::hardware_concurrency());
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }

  const auto recs = mixres::run_sweep(cfg, [](std::size_t done, std::size_t total, const mixres::SweepRecord& r) {
    std::cerr << "[" << done << "/" << total << "] " << r.sweep_kind << "=" << r.sweep_value
              << (r.error.empty() ? "" : "  error: " + r.error) << "\n";
  });

  try {
    if (out_path.empty()) std::cout << mixres::format_csv(recs);
    else mixres::write_csv(recs, out_path);
  } catch (const std::exception& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return 4;
  }
  for (const auto& r : recs)
    if (!r.error.empty()) return 3;
  return 0;
}
