#pragma once

// Experiment orchestration: config files, sweeps, seeding and CSV output.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "ris/agent.hpp"
#include "ris/bench.hpp"
#include "ris/env.hpp"

namespace ris {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Algorithm { Drl, WmmseAlt, ZfAlt, Random, Oracle };

std::string to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);

struct ExperimentSpec {
  SystemConfig base;
  Hyperparams hyper = Hyperparams::desk_scale();
  std::vector<double> pt_db;        // empty: {base.pt_db}
  std::vector<int> n_elements;      // empty: {base.N}
  std::vector<double> mu;           // sets mu_c and mu_a; empty: {hyper.mu_c}
  std::vector<double> lambda;       // sets lambda_c and lambda_a; empty: {hyper.lambda_c}
  int realizations = 20;
  std::vector<Algorithm> algorithms{Algorithm::WmmseAlt};
  std::filesystem::path out_dir = "out";

  int oracle_levels = 16;
  int random_draws = 100;
  int ao_iters = 50;
  double ao_tol = 1e-6;
  bool record_timing = false;  // wall_ms is written as 0 unless set

  /// Fills empty sweep axes from the base values.
  void fill_defaults();
  void validate() const;
};

struct SweepPoint {
  int index = 0;
  double pt_db = 0.0;
  int N = 0;
  double mu = 0.0;
  double lambda = 0.0;
};

/// Cartesian product of the sweep axes: pt_db outermost, then N, mu, lambda.
std::vector<SweepPoint> sweep_points(const ExperimentSpec& spec);

/// Bijective 64-bit mixer (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);
/// Sub-seed for (point, realization); injective for indices below 2^32.
std::uint64_t derive_seed(std::uint64_t master, std::uint32_t point, std::uint32_t realization);

struct SummaryRow {
  std::string algorithm;
  double pt_db = 0.0;
  int M = 0, N = 0, K = 0;
  std::uint64_t seed = 0;
  double sum_rate = 0.0;
  long long iterations = 0;
  double wall_ms = 0.0;
};

inline constexpr const char* kSummaryHeader = "algorithm,pt_db,M,N,K,seed,sum_rate,iterations,wall_ms";
inline constexpr const char* kRewardsHeader = "step,instant_reward,average_reward,best_reward";
inline constexpr const char* kCdfHeader = "value,cdf";
inline constexpr const char* kMeansHeader =
    "point,algorithm,pt_db,M,N,K,mu,lambda,realizations,mean_sum_rate";

/// Shortest round-trip decimal form of a double.
std::string format_double(double v);

void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);
std::vector<SummaryRow> read_summary_csv(const std::filesystem::path& path);
void write_rewards_csv(const std::filesystem::path& path, const RunSummary& run);
void write_cdf_csv(const std::filesystem::path& path, const std::vector<double>& values);

struct PointMean {
  SweepPoint point;
  Algorithm algorithm;
  double mean_sum_rate;
};

struct ExperimentResult {
  std::vector<SummaryRow> rows;    // point-major, then realization, then algorithm order
  std::vector<PointMean> means;
  std::vector<std::filesystem::path> files;
};

/// Runs every (point, realization) job, writes all outputs into spec.out_dir.
/// Throws std::filesystem::filesystem_error / ConfigError before any compute
/// when the output directory is unusable or the spec is invalid.
ExperimentResult run_experiment(ExperimentSpec spec);

/// Worker count from RIS_SIM_THREADS, else hardware concurrency (>= 1).
int worker_threads();

/// Parses the key = value config grammar (see README). Unknown keys throw ConfigError.
ExperimentSpec parse_config(std::istream& in, const std::string& source = "<config>");
ExperimentSpec load_config(const std::filesystem::path& path);

/// Full training schedule: 5000 episodes of 20000 steps.
void apply_full_scale(Hyperparams& hp);

/// Runs the built-in invariant and gradient self-checks, one line per suite.
/// Returns true when every suite passes.
bool run_self_checks(std::ostream& out);

}  // namespace ris
