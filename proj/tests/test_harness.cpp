#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "ris/harness.hpp"
#include "ris/metrics.hpp"

using namespace ris;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("ris_sim_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const fs::path& p) {
  std::ifstream is(p);
  std::vector<std::string> out;
  for (std::string line; std::getline(is, line);) out.push_back(line);
  return out;
}

std::size_t columns(const std::string& line) { return std::count(line.begin(), line.end(), ',') + 1; }

ExperimentSpec small_spec(const fs::path& out) {
  ExperimentSpec spec;
  spec.base = {.M = 2, .N = 2, .K = 2, .pt_db = 10.0, .seed = 5};
  spec.realizations = 2;
  spec.out_dir = out;
  spec.hyper.episodes = 1;
  spec.hyper.steps_per_episode = 30;
  spec.hyper.hidden_width = 48;
  spec.hyper.minibatch = 4;
  return spec;
}

/// Reference splitmix64 output step.
std::uint64_t splitmix_finalize(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

TEST_CASE("average_reward") {
  const std::vector<double> c(5, 2.5);
  CHECK(average_reward(c) == c);
  CHECK(average_reward(std::vector<double>{0.0, 2.0}) == std::vector<double>{0.0, 1.0});
  CHECK_THROWS_AS(average_reward(std::vector<double>{}), std::invalid_argument);

  Rng rng(1);
  std::uniform_real_distribution<double> u(-5.0, 5.0);
  std::vector<double> xs(1000);
  for (double& x : xs) x = u(rng);
  const auto avg = average_reward(xs);
  REQUIRE(avg.size() == xs.size());
  std::vector<double> cumsum(xs.size());
  std::partial_sum(xs.begin(), xs.end(), cumsum.begin());
  for (std::size_t i = 0; i < xs.size(); ++i) CHECK(std::abs(avg[i] - cumsum[i] / double(i + 1)) < 1e-12);
}

TEST_CASE("sum_rate_cdf") {
  const std::vector<double> one{3.0};
  const auto step = sum_rate_cdf(one, std::vector<double>{2.999, 3.0, 3.5});
  CHECK(step[0].cdf == 0.0);
  CHECK(step[1].cdf == 1.0);
  CHECK(step[2].cdf == 1.0);

  const std::vector<double> v{1.0, 2.0, 3.0};
  CHECK(sum_rate_cdf(v, std::vector<double>{2.0})[0].cdf == doctest::Approx(2.0 / 3.0));
  CHECK_THROWS_AS(sum_rate_cdf(std::vector<double>{}), std::invalid_argument);

  Rng rng(2);
  std::normal_distribution<double> g(5.0, 1.0);
  std::vector<double> draws(500);
  for (double& d : draws) d = g(rng);
  const auto [lo, hi] = std::minmax_element(draws.begin(), draws.end());
  const auto bounds = sum_rate_cdf(draws, std::vector<double>{*lo - 1e-9, *hi});
  CHECK(bounds[0].cdf == 0.0);
  CHECK(bounds[1].cdf == 1.0);
  const auto full = sum_rate_cdf(draws);
  CHECK(full.size() == 500);
  for (std::size_t i = 1; i < full.size(); ++i) {
    CHECK(full[i].value > full[i - 1].value);
    CHECK(full[i].cdf >= full[i - 1].cdf);
  }
  CHECK(full.back().cdf == 1.0);
  CHECK(full.front().cdf == doctest::Approx(1.0 / 500));
}

TEST_CASE("seed derivation") {
  CHECK(mix64(0x9E3779B97F4A7C15ULL) == 0xE220A8397B1DCDAFULL);
  for (std::uint64_t x : {0ULL, 1ULL, 42ULL, ~0ULL}) CHECK(mix64(x) == splitmix_finalize(x));

  std::set<std::uint64_t> seen;
  for (std::uint32_t p = 0; p < 64; ++p)
    for (std::uint32_t r = 0; r < 256; ++r) seen.insert(derive_seed(7, p, r));
  CHECK(seen.size() == 64 * 256);
  CHECK(derive_seed(7, 1, 2) == derive_seed(7, 1, 2));
  CHECK(derive_seed(7, 1, 2) != derive_seed(8, 1, 2));
  CHECK(derive_seed(7, 1, 2) != derive_seed(7, 2, 1));
}

TEST_CASE("format_double round trips") {
  Rng rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 200; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 30) - 15);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(10.0) == "10");
}

TEST_CASE("summary CSV round trip and schema") {
  const fs::path dir = scratch_dir("csv");
  fs::create_directories(dir);
  const std::vector<SummaryRow> rows{
      {"wmmse_alt", 10.0, 2, 4, 2, 18446744073709551615ULL, 7.123456789012345, 12, 0.0},
      {"drl", -3.5, 1, 1, 1, 0, 0.1 + 0.2, 100000, 12.25}};
  const fs::path path = dir / "summary.csv";
  write_summary_csv(path, rows);
  const auto text = lines_of(path);
  REQUIRE(text.size() == 3);
  CHECK(text[0] == kSummaryHeader);
  for (const auto& l : text) CHECK(columns(l) == 9);

  const auto back = read_summary_csv(path);
  REQUIRE(back.size() == 2);
  for (std::size_t i = 0; i < 2; ++i) {
    CHECK(back[i].algorithm == rows[i].algorithm);
    CHECK(back[i].pt_db == rows[i].pt_db);
    CHECK(back[i].M == rows[i].M);
    CHECK(back[i].N == rows[i].N);
    CHECK(back[i].K == rows[i].K);
    CHECK(back[i].seed == rows[i].seed);
    CHECK(back[i].sum_rate == rows[i].sum_rate);
    CHECK(back[i].iterations == rows[i].iterations);
    CHECK(back[i].wall_ms == rows[i].wall_ms);
  }

  std::ofstream(dir / "bad.csv") << "algo,x\n";
  CHECK_THROWS(read_summary_csv(dir / "bad.csv"));
  std::ofstream(dir / "short.csv") << kSummaryHeader << "\nwmmse_alt,1,2\n";
  CHECK_THROWS(read_summary_csv(dir / "short.csv"));
  fs::remove_all(dir);
}

TEST_CASE("rewards and cdf CSV schema") {
  const fs::path dir = scratch_dir("rewards");
  fs::create_directories(dir);
  RunSummary run;
  run.instant_rewards = {1.0, 3.0, 2.0};
  run.average_rewards = average_reward(run.instant_rewards);
  run.best_rewards = {1.0, 3.0, 3.0};
  write_rewards_csv(dir / "r.csv", run);
  const auto r = lines_of(dir / "r.csv");
  REQUIRE(r.size() == 4);
  CHECK(r[0] == kRewardsHeader);
  CHECK(r[1] == "0,1,1,1");
  CHECK(r[2] == "1,3,2,3");
  CHECK(r[3] == "2,2,2,3");

  write_cdf_csv(dir / "c.csv", {2.0, 1.0, 2.0, 4.0});
  const auto c = lines_of(dir / "c.csv");
  REQUIRE(c.size() == 4);
  CHECK(c[0] == kCdfHeader);
  CHECK(c[1] == "1,0.25");
  CHECK(c[2] == "2,0.75");
  CHECK(c[3] == "4,1");
  fs::remove_all(dir);
}

TEST_CASE("config parsing") {
  SUBCASE("full document") {
    std::istringstream in(R"(# experiment
M = 4
N=8
K = 2   # users
pt_db = 7.5
seed = 12345678901234
mu_c = 0.01
policy_critic = train
hidden_width = 96
sweep_pt_db = 0, 5,10
sweep_N = 4,8
algorithms = drl, wmmse_alt,zf_alt , random, oracle
realizations = 3
out_dir = results/a
record_timing = true
early_stop_window = 50
)");
    const ExperimentSpec spec = parse_config(in);
    CHECK(spec.base.M == 4);
    CHECK(spec.base.N == 8);
    CHECK(spec.base.K == 2);
    CHECK(spec.base.pt_db == 7.5);
    CHECK(spec.base.seed == 12345678901234ULL);
    CHECK(spec.hyper.mu_c == 0.01);
    CHECK(spec.hyper.mu_a == 0.001);
    CHECK(spec.hyper.policy_critic == PolicyCritic::Train);
    CHECK(spec.hyper.hidden_width == 96);
    CHECK(spec.hyper.early_stop_window == 50);
    CHECK(spec.hyper.episodes == 20);
    CHECK(spec.pt_db == std::vector<double>{0.0, 5.0, 10.0});
    CHECK(spec.n_elements == std::vector<int>{4, 8});
    CHECK(spec.algorithms == std::vector<Algorithm>{Algorithm::Drl, Algorithm::WmmseAlt, Algorithm::ZfAlt,
                                                    Algorithm::Random, Algorithm::Oracle});
    CHECK(spec.realizations == 3);
    CHECK(spec.out_dir == fs::path("results/a"));
    CHECK(spec.record_timing);
  }
  SUBCASE("full scale") {
    std::istringstream in("full_scale = true\n");
    const ExperimentSpec spec = parse_config(in);
    CHECK(spec.hyper.episodes == 5000);
    CHECK(spec.hyper.steps_per_episode == 20000);
  }
  SUBCASE("errors name the line") {
    auto error_of = [](const std::string& text) -> std::string {
      std::istringstream in(text);
      try {
        parse_config(in, "exp.cfg");
      } catch (const ConfigError& e) {
        return e.what();
      }
      return "";
    };
    CHECK(error_of("M = 2\nbogus = 1\n").find("exp.cfg:2") != std::string::npos);
    CHECK(error_of("M = 2\nbogus = 1\n").find("bogus") != std::string::npos);
    CHECK(error_of("M two\n").find("exp.cfg:1") != std::string::npos);
    CHECK(error_of("M = two\n").find("two") != std::string::npos);
    CHECK(error_of("M = 2.5\n") != "");
    CHECK(error_of("N =\n") != "");
    CHECK(error_of("algorithms = drl, dqn\n").find("dqn") != std::string::npos);
    CHECK(error_of("record_timing = maybe\n") != "");
    CHECK(error_of("policy_critic = both\n") != "");
    CHECK(error_of("sweep_N = 4,,8\n") != "");
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_config("/nonexistent/ris.cfg"), ConfigError);
  }
  SUBCASE("algorithm names") {
    for (Algorithm a : {Algorithm::Drl, Algorithm::WmmseAlt, Algorithm::ZfAlt, Algorithm::Random,
                        Algorithm::Oracle})
      CHECK(parse_algorithm(to_string(a)) == a);
    CHECK_THROWS_AS(parse_algorithm("DRL"), ConfigError);
  }
}

TEST_CASE("experiment validation and sweep points") {
  ExperimentSpec spec;
  spec.base = {.M = 2, .N = 3, .K = 2, .pt_db = 10.0};
  spec.fill_defaults();
  CHECK(spec.pt_db == std::vector<double>{10.0});
  CHECK(spec.n_elements == std::vector<int>{3});
  CHECK(spec.mu == std::vector<double>{0.001});
  CHECK(spec.lambda == std::vector<double>{0.00001});
  CHECK_NOTHROW(spec.validate());

  spec.pt_db = {0.0, 5.0};
  spec.n_elements = {2, 4, 8};
  spec.mu = {0.001, 0.01};
  const auto pts = sweep_points(spec);
  REQUIRE(pts.size() == 12);
  CHECK(pts[0].index == 0);
  CHECK(pts[1].mu == 0.01);
  CHECK(pts[2].N == 4);
  CHECK(pts[6].pt_db == 5.0);
  CHECK(pts[11].index == 11);
  CHECK(pts[11].N == 8);

  ExperimentSpec bad = spec;
  bad.realizations = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.algorithms.clear();
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.base.K = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = spec;
  bad.algorithms = {Algorithm::Oracle};
  bad.oracle_levels = 16;  // N = 8 -> 32 bits
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.n_elements = {2, 5};
  CHECK_NOTHROW(bad.validate());
}

TEST_CASE("run_experiment") {
  SUBCASE("minimal experiment gives exactly one row") {
    const fs::path dir = scratch_dir("minimal");
    ExperimentSpec spec = small_spec(dir);
    spec.realizations = 1;
    const ExperimentResult res = run_experiment(spec);
    REQUIRE(res.rows.size() == 1);
    CHECK(res.rows[0].algorithm == "wmmse_alt");
    CHECK(res.rows[0].seed == derive_seed(5, 0, 0));
    CHECK(res.rows[0].wall_ms == 0.0);
    CHECK(read_summary_csv(dir / "summary.csv").size() == 1);
    CHECK(fs::exists(dir / "cdf_0_wmmse_alt.csv"));
    CHECK(fs::exists(dir / "means.csv"));
    // The job's channels come from its sub-seed.
    Rng rng(res.rows[0].seed);
    const ChannelSet ch = generate_channels(spec.base, rng);
    CHECK(res.rows[0].sum_rate == bench::alternating_optimize(ch, spec.base).sum_rate);
    fs::remove_all(dir);
  }
  SUBCASE("every algorithm, file layout and schema") {
    const fs::path dir = scratch_dir("layout");
    ExperimentSpec spec = small_spec(dir);
    spec.algorithms = {Algorithm::Drl, Algorithm::WmmseAlt, Algorithm::ZfAlt, Algorithm::Random,
                       Algorithm::Oracle};
    spec.pt_db = {0.0, 10.0};
    spec.random_draws = 5;
    spec.oracle_levels = 8;
    const ExperimentResult res = run_experiment(spec);
    CHECK(res.rows.size() == 2 * 2 * 5);
    CHECK(res.means.size() == 2 * 5);
    for (int p = 0; p < 2; ++p)
      for (int r = 0; r < 2; ++r) {
        const fs::path rewards = dir / ("rewards_" + std::to_string(p) + "_" + std::to_string(r) + ".csv");
        REQUIRE(fs::exists(rewards));
        const auto lines = lines_of(rewards);
        CHECK(lines.size() == 31);
        CHECK(lines[0] == kRewardsHeader);
        for (const auto& l : lines) CHECK(columns(l) == 4);
      }
    for (const auto& f : {"cdf_0_drl.csv", "cdf_1_oracle.csv", "cdf_1_random.csv"}) {
      const auto lines = lines_of(dir / f);
      REQUIRE(lines.size() >= 2);
      CHECK(lines[0] == kCdfHeader);
      CHECK(lines.back().substr(lines.back().find(',') + 1) == "1");
    }
    const auto means = lines_of(dir / "means.csv");
    CHECK(means.size() == 11);
    CHECK(means[0] == kMeansHeader);
    for (const auto& l : means) CHECK(columns(l) == 10);
    for (const auto& row : res.rows) CHECK(std::isfinite(row.sum_rate));
    CHECK(res.rows[0].algorithm == "drl");
    CHECK(res.rows[0].iterations == 30);
    fs::remove_all(dir);
  }
  SUBCASE("deterministic bytes, independent of thread count") {
    const fs::path a = scratch_dir("det_a"), b = scratch_dir("det_b");
    ExperimentSpec spec = small_spec(a);
    spec.algorithms = {Algorithm::Drl, Algorithm::WmmseAlt, Algorithm::Random};
    spec.random_draws = 3;
    spec.realizations = 3;
    ::setenv("RIS_SIM_THREADS", "1", 1);
    const ExperimentResult ra = run_experiment(spec);
    spec.out_dir = b;
    ::setenv("RIS_SIM_THREADS", "3", 1);
    const ExperimentResult rb = run_experiment(spec);
    ::unsetenv("RIS_SIM_THREADS");
    REQUIRE(ra.files.size() == rb.files.size());
    for (std::size_t i = 0; i < ra.files.size(); ++i) {
      CHECK(ra.files[i].filename() == rb.files[i].filename());
      CHECK(slurp(ra.files[i]) == slurp(rb.files[i]));
    }
    fs::remove_all(a);
    fs::remove_all(b);
  }
  SUBCASE("unusable output directory fails before any compute") {
    const fs::path dir = scratch_dir("blocked");
    fs::create_directories(dir);
    std::ofstream(dir / "file") << "x";
    ExperimentSpec spec = small_spec(dir / "file" / "sub");
    spec.algorithms = {Algorithm::Drl};
    spec.hyper.steps_per_episode = 1000000;
    CHECK_THROWS(run_experiment(spec));
    fs::remove_all(dir);
  }
  SUBCASE("invalid experiment is rejected") {
    const fs::path dir = scratch_dir("invalid");
    ExperimentSpec spec = small_spec(dir);
    spec.realizations = 0;
    CHECK_THROWS_AS(run_experiment(spec), ConfigError);
    CHECK_FALSE(fs::exists(dir / "summary.csv"));
    fs::remove_all(dir);
  }
  SUBCASE("transmit-power sweep raises the mean sum rate") {
    const fs::path dir = scratch_dir("ptsweep");
    ExperimentSpec spec;
    spec.base = {.M = 4, .N = 4, .K = 4, .pt_db = 0.0, .seed = 11};
    spec.pt_db = {0.0, 10.0, 20.0};
    spec.realizations = 20;
    spec.out_dir = dir;
    const ExperimentResult res = run_experiment(spec);
    REQUIRE(res.means.size() == 3);
    CHECK(res.means[1].mean_sum_rate > res.means[0].mean_sum_rate);
    CHECK(res.means[2].mean_sum_rate > res.means[1].mean_sum_rate);
    fs::remove_all(dir);
  }
}

TEST_CASE("worker_threads") {
  ::setenv("RIS_SIM_THREADS", "3", 1);
  CHECK(worker_threads() == 3);
  ::setenv("RIS_SIM_THREADS", "zero", 1);
  CHECK(worker_threads() >= 1);
  ::unsetenv("RIS_SIM_THREADS");
  CHECK(worker_threads() >= 1);
}
