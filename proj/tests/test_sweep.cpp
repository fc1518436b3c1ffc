#include <gtest/gtest.h>

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include "mixres/sweep.hpp"

using namespace mixres;

namespace {

bool same_bits(double a, double b) { return std::bit_cast<std::uint64_t>(a) == std::bit_cast<std::uint64_t>(b); }

bool same_record(const SweepRecord& a, const SweepRecord& b) {
  return a.sweep_kind == b.sweep_kind && same_bits(a.sweep_value, b.sweep_value) && same_bits(a.snr_db, b.snr_db) &&
         same_bits(a.sigma, b.sigma) && same_bits(a.tau, b.tau) && a.n_a == b.n_a && a.n_q == b.n_q &&
         same_bits(a.bcrb, b.bcrb) && same_bits(a.wbcrb_fiminv, b.wbcrb_fiminv) &&
         same_bits(a.wbcrb_opt, b.wbcrb_opt) && same_bits(a.ecrb, b.ecrb) && same_bits(a.mse_mmse, b.mse_mmse) &&
         same_bits(a.mse_mmse_se, b.mse_mmse_se) && same_bits(a.mse_lmmse, b.mse_lmmse) &&
         same_bits(a.mse_lmmse_se, b.mse_lmmse_se) && same_bits(a.mse_approx, b.mse_approx) &&
         same_bits(a.pr_sat, b.pr_sat) && same_bits(a.pr_sat_se, b.pr_sat_se) &&
         a.flagged_trials == b.flagged_trials && a.trials == b.trials && a.samples == b.samples && a.seed == b.seed &&
         a.error == b.error;
}

SweepRecord random_record(std::mt19937_64& g) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_int_distribution<int> pick(0, 9);
  auto num = [&]() {
    switch (pick(g)) {
      case 0: return static_cast<double>(NAN);
      case 1: return 0.0;
      case 2: return std::ldexp(u(g), -1070);  // subnormal
      case 3: return std::ldexp(u(g), 900);
      default: return u(g) * std::pow(10.0, 6 * u(g));
    }
  };
  const char* kinds[] = {"snr", "tau", "partition"};
  const char* errors[] = {"", "mmse: boom", "a,b", "quote \"x\"", "line\nbreak", "crlf\r\nend"};
  SweepRecord r;
  r.sweep_kind = kinds[pick(g) % 3];
  r.sweep_value = num();
  r.snr_db = num();
  r.sigma = num();
  r.tau = num();
  r.n_a = pick(g);
  r.n_q = pick(g) * 37;
  r.bcrb = num();
  r.wbcrb_fiminv = num();
  r.wbcrb_opt = num();
  r.ecrb = num();
  r.mse_mmse = num();
  r.mse_mmse_se = num();
  r.mse_lmmse = num();
  r.mse_lmmse_se = num();
  r.mse_approx = num();
  r.pr_sat = num();
  r.pr_sat_se = num();
  r.flagged_trials = pick(g);
  r.trials = 1000 * pick(g);
  r.samples = 17 * pick(g);
  r.seed = g();
  r.error = errors[pick(g) % 6];
  return r;
}

SweepConfig small_config() {
  SweepConfig c;
  c.sigma_grid = {1.0, 0.3};
  c.n_q = 20;
  c.mc.K = 40;
  c.mc.S = 200;
  c.scm_samples = 2000;
  c.L = 400;
  return c;
}

std::string read_file(const std::string& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MIXRES_SWEEP_EXE + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("mixres_test_" + name)).string();
}

}  // namespace

TEST(Csv, HeaderOnly) {
  const std::string s = format_csv({});
  EXPECT_EQ(s,
            "sweep_kind,sweep_value,snr_db,sigma,tau,n_a,n_q,bcrb,wbcrb_fiminv,wbcrb_opt,ecrb,mse_mmse,mse_mmse_se,"
            "mse_lmmse,mse_lmmse_se,mse_approx,pr_sat,pr_sat_se,flagged_trials,trials,samples,seed,error\r\n");
  EXPECT_TRUE(parse_csv(s).empty());
  const std::string p = temp_path("empty.csv");
  write_csv({}, p);
  EXPECT_EQ(read_file(p), s);
  std::filesystem::remove(p);
}

TEST(Csv, RoundTripRandomRecords) {
  std::mt19937_64 g(2024);
  std::vector<SweepRecord> recs;
  for (int i = 0; i < 100; ++i) recs.push_back(random_record(g));
  const auto back = parse_csv(format_csv(recs));
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) EXPECT_TRUE(same_record(recs[i], back[i])) << i;
  EXPECT_EQ(format_csv(back), format_csv(recs));
}

TEST(Csv, RejectsForeignHeader) {
  EXPECT_THROW(parse_csv("a,b\r\n1,2\r\n"), config_error);
  EXPECT_THROW(write_csv({}, "/nonexistent-dir/x.csv"), io_error);
}

TEST(Config, ParsesKeyValueText) {
  const auto kv = parse_config_text("# comment\n preset = fig3a \nnq=40 # trailing\n\nquantities = bcrb, ecrb\n");
  EXPECT_EQ(kv.at("preset"), "fig3a");
  EXPECT_EQ(kv.at("nq"), "40");
  EXPECT_EQ(parse_quantities(kv.at("quantities")), (std::set<Quantity>{Quantity::bcrb, Quantity::ecrb}));
  EXPECT_THROW(parse_config_text("novalue\n"), config_error);
  EXPECT_THROW(parse_quantities("bcrb,nope"), config_error);
  EXPECT_EQ(parse_partitions("1:150, 2:100"), (std::vector<Partition>{{1, 150}, {2, 100}}));
  EXPECT_THROW(parse_partitions("1-150"), config_error);
  EXPECT_EQ(parse_double_list("0,0.25,1e-1"), (std::vector<double>{0.0, 0.25, 0.1}));
}

TEST(Config, Validation) {
  SweepConfig c;
  EXPECT_NO_THROW(c.validate());
  c.outputs.clear();
  EXPECT_THROW(c.validate(), config_error);
  c = SweepConfig{};
  c.sigma_grid = {1.0, 0.5, 0.7};
  EXPECT_THROW(c.validate(), config_error);
  c = SweepConfig{};
  c.M = 2;
  EXPECT_THROW(c.validate(), config_error);
  c.outputs.erase(Quantity::wbcrb_opt);
  EXPECT_NO_THROW(c.validate());
  c = SweepConfig{};
  c.quad_order = 8;
  EXPECT_THROW(c.validate(), config_error);
  EXPECT_THROW(figure_preset("fig7"), config_error);
}

TEST(Config, Presets) {
  const SweepConfig a = figure_preset("fig3a");
  EXPECT_EQ(a.n_a, 1);
  EXPECT_EQ(a.n_q, 100);
  EXPECT_EQ(a.tau, 0.0);
  EXPECT_EQ(a.sigma_grid.size(), 10u);
  EXPECT_EQ(a.mc.K, 1000u);
  EXPECT_EQ(a.mc.S, 1000u);
  EXPECT_EQ(figure_preset("fig3b").tau, 2.5);
  const SweepConfig f4 = figure_preset("fig4");
  EXPECT_EQ(f4.kind, SweepKind::tau);
  EXPECT_EQ(f4.sigma, 0.5);
  const SweepConfig f6 = figure_preset("fig6");
  EXPECT_EQ(f6.partitions, (std::vector<Partition>{{1, 150}, {2, 100}}));
  EXPECT_EQ(sweep_points(f6).size(), 20u);
  const SweepConfig f5 = figure_preset("fig5");
  EXPECT_NEAR(f5.sigma_grid.back(), 0.05, 1e-12);
  for (const auto& n : {"fig3a", "fig3b", "fig4", "fig5", "fig6"}) EXPECT_NO_THROW(figure_preset(n).validate());
}

TEST(Sweep, SnrConvention) {
  EXPECT_NEAR(snr_db_from_sigma(0.1), 20.0, 1e-12);
  EXPECT_NEAR(sigma_from_snr_db(-10.0), std::sqrt(10.0), 1e-12);
  const auto g = sigma_grid_db(-10.0, 20.0, 16);
  EXPECT_EQ(g.size(), 16u);
  EXPECT_NEAR(snr_db_from_sigma(g.front()), -10.0, 1e-12);
  EXPECT_NEAR(snr_db_from_sigma(g[1]), -8.0, 1e-12);
}

TEST(Sweep, OneRecordPerPointAndDeterministic) {
  SweepConfig c = small_config();
  const auto a = run_sweep(c);
  const auto b = run_sweep(c);
  c.mc.threads = 8;
  const auto t = run_sweep(c);
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(format_csv(a), format_csv(b));
  EXPECT_EQ(format_csv(a), format_csv(t));
  for (const auto& r : a) {
    EXPECT_TRUE(r.error.empty()) << r.error;
    EXPECT_TRUE(std::isfinite(r.bcrb) && std::isfinite(r.wbcrb_fiminv) && std::isfinite(r.wbcrb_opt));
    EXPECT_TRUE(std::isfinite(r.mse_mmse) && std::isfinite(r.mse_lmmse) && std::isfinite(r.mse_approx));
    EXPECT_EQ(r.trials, 40);
    EXPECT_EQ(r.samples, 200);
  }
}

TEST(Sweep, DisabledQuantitiesAreNan) {
  SweepConfig c = small_config();
  c.outputs = {Quantity::bcrb};
  const auto r = run_sweep(c);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_TRUE(std::isfinite(r[0].bcrb));
  EXPECT_TRUE(std::isnan(r[0].mse_mmse));
  EXPECT_TRUE(std::isnan(r[0].pr_sat));
  EXPECT_EQ(r[0].trials, 0);
}

TEST(Sweep, FailuresStayInRow) {
  // n_q = 0 makes pr_sat inapplicable but still yields a row; the wbcrb_opt grid is too narrow here.
  SweepConfig c = small_config();
  c.n_q = 0;
  c.L = 5;
  c.outputs = {Quantity::bcrb, Quantity::wbcrb_opt};
  const auto r = run_sweep(c);
  ASSERT_EQ(r.size(), 2u);
  EXPECT_TRUE(std::isfinite(r[0].bcrb));
  EXPECT_TRUE(std::isnan(r[0].wbcrb_opt));
  EXPECT_NE(r[0].error.find("wbcrb_opt"), std::string::npos);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli("--quantities \"\""), 2);
  EXPECT_EQ(run_cli("--preset nope"), 2);
  EXPECT_EQ(run_cli("--trials abc"), 2);
  EXPECT_EQ(run_cli("--config /nonexistent/cfg.txt"), 4);
  EXPECT_EQ(run_cli("--quantities bcrb --sigma-steps 2 --out /nonexistent-dir/out.csv"), 4);
  EXPECT_EQ(run_cli("--quantities bcrb,wbcrb_opt --L 5 --sigma-steps 2"), 3);
}

TEST(Cli, WritesParseableCsvAndHonorsConfig) {
  const std::string cfg = temp_path("cfg.txt"), out1 = temp_path("a.csv"), out2 = temp_path("b.csv");
  {
    std::ofstream os(cfg);
    os << "# small run\nnq = 10\nquantities = bcrb, pr_sat\nsigma-min = 0.1\nsigma-max = 1\nsigma-steps = 3\n";
  }
  ASSERT_EQ(run_cli("--config " + cfg + " --out " + out1), 0);
  ASSERT_EQ(run_cli("--config " + cfg + " --out " + out2 + " --threads 4"), 0);
  const std::string a = read_file(out1);
  EXPECT_EQ(a, read_file(out2));
  const auto recs = parse_csv(a);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].n_q, 10);
  EXPECT_NEAR(recs[0].snr_db, 0.0, 1e-12);
  EXPECT_NEAR(recs[2].snr_db, 20.0, 1e-12);
  EXPECT_TRUE(std::isnan(recs[0].ecrb));
  EXPECT_GT(recs[2].pr_sat, recs[0].pr_sat);
  // Flags override the config file.
  ASSERT_EQ(run_cli("--config " + cfg + " --nq 5 --out " + out1), 0);
  EXPECT_EQ(parse_csv(read_file(out1))[0].n_q, 5);
  for (const auto& p : {cfg, out1, out2}) std::filesystem::remove(p);
}
