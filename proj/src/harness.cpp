#include "ris/harness.hpp"

#include <atomic>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "ris/metrics.hpp"

namespace ris {

namespace fs = std::filesystem;

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Drl: return "drl";
    case Algorithm::WmmseAlt: return "wmmse_alt";
    case Algorithm::ZfAlt: return "zf_alt";
    case Algorithm::Random: return "random";
    case Algorithm::Oracle: return "oracle";
  }
  return "unknown";
}

Algorithm parse_algorithm(const std::string& name) {
  for (Algorithm a : {Algorithm::Drl, Algorithm::WmmseAlt, Algorithm::ZfAlt, Algorithm::Random,
                      Algorithm::Oracle})
    if (to_string(a) == name) return a;
  throw ConfigError("unknown algorithm '" + name + "'");
}

void ExperimentSpec::fill_defaults() {
  if (pt_db.empty()) pt_db = {base.pt_db};
  if (n_elements.empty()) n_elements = {base.N};
  if (mu.empty()) mu = {hyper.mu_c};
  if (lambda.empty()) lambda = {hyper.lambda_c};
}

void ExperimentSpec::validate() const {
  try {
    base.validate();
    hyper.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (pt_db.empty() || n_elements.empty() || mu.empty() || lambda.empty())
    throw ConfigError("sweep lists must be non-empty");
  if (realizations < 1) throw ConfigError("realizations must be >= 1");
  if (algorithms.empty()) throw ConfigError("at least one algorithm must be selected");
  for (int n : n_elements)
    if (n < 1) throw ConfigError("sweep_N entries must be >= 1");
  for (double m : mu)
    if (!(m > 0.0)) throw ConfigError("sweep_mu entries must be positive");
  for (double l : lambda)
    if (!(l >= 0.0 && l < 1.0)) throw ConfigError("sweep_lambda entries must lie in [0, 1)");
  if (random_draws < 1) throw ConfigError("random_draws must be >= 1");
  if (ao_iters < 1) throw ConfigError("ao_iters must be >= 1");
  for (Algorithm a : algorithms)
    if (a == Algorithm::Oracle)
      for (int n : n_elements)
        if (!bench::oracle_tractable(n, oracle_levels))
          throw ConfigError("oracle selected but N * log2(oracle_levels) exceeds 20 for N = " +
                            std::to_string(n));
}

std::vector<SweepPoint> sweep_points(const ExperimentSpec& spec) {
  std::vector<SweepPoint> points;
  for (double pt : spec.pt_db)
    for (int n : spec.n_elements)
      for (double mu : spec.mu)
        for (double lambda : spec.lambda)
          points.push_back({static_cast<int>(points.size()), pt, n, mu, lambda});
  return points;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint32_t point, std::uint32_t realization) {
  const std::uint64_t index = (static_cast<std::uint64_t>(point) << 32) | realization;
  return mix64(mix64(master) ^ index);
}

// ---------------------------------------------------------------------------
// CSV

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::ofstream open_output(const fs::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open output file " + path.string());
  return os;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(s);
  while (std::getline(is, field, sep)) out.push_back(field);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
  const std::string t = trim(text);
  T value{};
  const auto res = std::from_chars(t.data(), t.data() + t.size(), value);
  if (res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw ConfigError("invalid value '" + t + "' for " + what);
  return value;
}

}  // namespace

void write_summary_csv(const fs::path& path, const std::vector<SummaryRow>& rows) {
  std::ofstream os = open_output(path);
  os << kSummaryHeader << '\n';
  for (const auto& r : rows)
    os << r.algorithm << ',' << format_double(r.pt_db) << ',' << r.M << ',' << r.N << ',' << r.K
       << ',' << r.seed << ',' << format_double(r.sum_rate) << ',' << r.iterations << ','
       << format_double(r.wall_ms) << '\n';
}

std::vector<SummaryRow> read_summary_csv(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kSummaryHeader)
    throw std::runtime_error(path.string() + ": unexpected summary header");
  std::vector<SummaryRow> rows;
  while (std::getline(is, line)) {
    const auto f = split(line, ',');
    if (f.size() != 9) throw std::runtime_error(path.string() + ": bad column count");
    SummaryRow r;
    r.algorithm = f[0];
    r.pt_db = parse_number<double>(f[1], "pt_db");
    r.M = parse_number<int>(f[2], "M");
    r.N = parse_number<int>(f[3], "N");
    r.K = parse_number<int>(f[4], "K");
    r.seed = parse_number<std::uint64_t>(f[5], "seed");
    r.sum_rate = parse_number<double>(f[6], "sum_rate");
    r.iterations = parse_number<long long>(f[7], "iterations");
    r.wall_ms = parse_number<double>(f[8], "wall_ms");
    rows.push_back(std::move(r));
  }
  return rows;
}

void write_rewards_csv(const fs::path& path, const RunSummary& run) {
  std::ofstream os = open_output(path);
  os << kRewardsHeader << '\n';
  for (std::size_t i = 0; i < run.instant_rewards.size(); ++i)
    os << i << ',' << format_double(run.instant_rewards[i]) << ','
       << format_double(run.average_rewards[i]) << ',' << format_double(run.best_rewards[i])
       << '\n';
}

void write_cdf_csv(const fs::path& path, const std::vector<double>& values) {
  std::ofstream os = open_output(path);
  os << kCdfHeader << '\n';
  for (const CdfPoint& p : sum_rate_cdf(values))
    os << format_double(p.value) << ',' << format_double(p.cdf) << '\n';
}

// ---------------------------------------------------------------------------
// Runner

int worker_threads() {
  if (const char* env = std::getenv("RIS_SIM_THREADS")) {
    int n = 0;
    const std::string s(env);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), n);
    if (res.ec == std::errc() && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

struct JobOutput {
  std::vector<SummaryRow> rows;
  std::vector<std::pair<fs::path, RunSummary>> reward_logs;
};

void ensure_writable(const fs::path& dir) {
  fs::create_directories(dir);
  const fs::path probe = dir / ".write_probe";
  {
    std::ofstream os(probe);
    if (!os) throw std::runtime_error("output directory " + dir.string() + " is not writable");
  }
  fs::remove(probe);
}

JobOutput run_job(const ExperimentSpec& spec, const SweepPoint& point, int realization) {
  SystemConfig cfg = spec.base;
  cfg.pt_db = point.pt_db;
  cfg.N = point.N;
  cfg.seed = derive_seed(spec.base.seed, static_cast<std::uint32_t>(point.index),
                         static_cast<std::uint32_t>(realization));
  Rng channel_rng(cfg.seed);
  const ChannelSet channels = generate_channels(cfg, channel_rng);

  JobOutput out;
  for (Algorithm algo : spec.algorithms) {
    const auto start = std::chrono::steady_clock::now();
    double rate = 0.0;
    long long iterations = 0;
    switch (algo) {
      case Algorithm::WmmseAlt:
      case Algorithm::ZfAlt: {
        const auto bf = algo == Algorithm::WmmseAlt ? bench::Beamformer::Wmmse : bench::Beamformer::Zf;
        const auto r = bench::alternating_optimize(channels, cfg, spec.ao_iters, spec.ao_tol, bf);
        rate = r.sum_rate;
        iterations = r.iterations;
        break;
      }
      case Algorithm::Random: {
        Rng rng(mix64(cfg.seed ^ 0x52414e44ULL));
        const auto r = bench::random_phase_baseline(channels, cfg, spec.random_draws, rng);
        rate = r.sum_rate;
        iterations = r.iterations;
        break;
      }
      case Algorithm::Oracle: {
        const auto r = bench::brute_force_oracle(channels, cfg, spec.oracle_levels);
        rate = r.sum_rate;
        iterations = r.iterations;
        break;
      }
      case Algorithm::Drl: {
        Hyperparams hp = spec.hyper;
        hp.mu_c = hp.mu_a = point.mu;
        hp.lambda_c = hp.lambda_a = point.lambda;
        Rng rng(mix64(cfg.seed ^ 0x44524cULL));
        RunSummary run = optimize_for_channels(channels, cfg, hp, rng);
        rate = run.best_sum_rate;
        iterations = static_cast<long long>(run.instant_rewards.size());
        out.reward_logs.emplace_back(
            "rewards_" + std::to_string(point.index) + "_" + std::to_string(realization) + ".csv",
            std::move(run));
        break;
      }
    }
    const double wall =
        spec.record_timing
            ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()
            : 0.0;
    out.rows.push_back({to_string(algo), cfg.pt_db, cfg.M, cfg.N, cfg.K, cfg.seed, rate,
                        iterations, wall});
  }
  return out;
}

}  // namespace

ExperimentResult run_experiment(ExperimentSpec spec) {
  spec.fill_defaults();
  spec.validate();
  ensure_writable(spec.out_dir);

  const std::vector<SweepPoint> points = sweep_points(spec);
  const std::size_t per_point = static_cast<std::size_t>(spec.realizations);
  const std::size_t total = points.size() * per_point;
  std::vector<JobOutput> outputs(total);

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t job = next++; job < total; job = next++) {
      try {
        outputs[job] = run_job(spec, points[job / per_point], static_cast<int>(job % per_point));
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = total;
      }
    }
  };
  const int threads = std::min<int>(worker_threads(), static_cast<int>(total));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  ExperimentResult result;
  for (auto& job : outputs) {
    for (auto& row : job.rows) result.rows.push_back(row);
    for (auto& [name, run] : job.reward_logs) {
      const fs::path path = spec.out_dir / name;
      write_rewards_csv(path, run);
      result.files.push_back(path);
    }
  }

  const std::size_t algos = spec.algorithms.size();
  for (const SweepPoint& point : points) {
    for (std::size_t a = 0; a < algos; ++a) {
      std::vector<double> rates;
      for (std::size_t r = 0; r < per_point; ++r)
        rates.push_back(outputs[point.index * per_point + r].rows[a].sum_rate);
      result.means.push_back({point, spec.algorithms[a], mean(rates)});
      const fs::path cdf_path = spec.out_dir / ("cdf_" + std::to_string(point.index) + "_" +
                                                to_string(spec.algorithms[a]) + ".csv");
      write_cdf_csv(cdf_path, rates);
      result.files.push_back(cdf_path);
    }
  }

  const fs::path summary_path = spec.out_dir / "summary.csv";
  write_summary_csv(summary_path, result.rows);
  result.files.push_back(summary_path);

  const fs::path means_path = spec.out_dir / "means.csv";
  {
    std::ofstream os = open_output(means_path);
    os << kMeansHeader << '\n';
    for (const PointMean& m : result.means)
      os << m.point.index << ',' << to_string(m.algorithm) << ',' << format_double(m.point.pt_db)
         << ',' << spec.base.M << ',' << m.point.N << ',' << spec.base.K << ','
         << format_double(m.point.mu) << ',' << format_double(m.point.lambda) << ','
         << spec.realizations << ',' << format_double(m.mean_sum_rate) << '\n';
  }
  result.files.push_back(means_path);
  return result;
}

// ---------------------------------------------------------------------------
// Config

void apply_full_scale(Hyperparams& hp) {
  hp.episodes = 5000;
  hp.steps_per_episode = 20000;
}

namespace {

bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("invalid boolean '" + v + "' for " + key);
}

template <typename T>
std::vector<T> parse_list(const std::string& v, const std::string& key) {
  std::vector<T> out;
  for (const std::string& item : split(v, ',')) out.push_back(parse_number<T>(item, key));
  if (out.empty()) throw ConfigError(key + " must list at least one value");
  return out;
}

}  // namespace

ExperimentSpec parse_config(std::istream& in, const std::string& source) {
  ExperimentSpec spec;
  bool full_scale = false;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(lineno);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (value.empty()) throw ConfigError(where + ": empty value for " + key);

    try {
      SystemConfig& b = spec.base;
      Hyperparams& h = spec.hyper;
      if (key == "M") b.M = parse_number<int>(value, key);
      else if (key == "N") b.N = parse_number<int>(value, key);
      else if (key == "K") b.K = parse_number<int>(value, key);
      else if (key == "pt_db") b.pt_db = parse_number<double>(value, key);
      else if (key == "noise_power") b.noise_power = parse_number<double>(value, key);
      else if (key == "seed") b.seed = parse_number<std::uint64_t>(value, key);
      else if (key == "gamma") h.gamma = parse_number<double>(value, key);
      else if (key == "mu_c") h.mu_c = parse_number<double>(value, key);
      else if (key == "mu_a") h.mu_a = parse_number<double>(value, key);
      else if (key == "tau_c") h.tau_c = parse_number<double>(value, key);
      else if (key == "tau_a") h.tau_a = parse_number<double>(value, key);
      else if (key == "lambda_c") h.lambda_c = parse_number<double>(value, key);
      else if (key == "lambda_a") h.lambda_a = parse_number<double>(value, key);
      else if (key == "buffer_capacity") h.buffer_capacity = parse_number<std::size_t>(value, key);
      else if (key == "episodes") h.episodes = parse_number<int>(value, key);
      else if (key == "steps_per_episode") h.steps_per_episode = parse_number<int>(value, key);
      else if (key == "minibatch") h.minibatch = parse_number<int>(value, key);
      else if (key == "sync_every") h.sync_every = parse_number<int>(value, key);
      else if (key == "exploration_std") h.exploration_std = parse_number<double>(value, key);
      else if (key == "exploration_decay") h.exploration_decay = parse_number<double>(value, key);
      else if (key == "warmup_steps") h.warmup_steps = parse_number<int>(value, key);
      else if (key == "hidden_width") h.hidden_width = parse_number<int>(value, key);
      else if (key == "early_stop_window") h.early_stop_window = parse_number<int>(value, key);
      else if (key == "early_stop_tol") h.early_stop_tol = parse_number<double>(value, key);
      else if (key == "policy_critic") {
        if (value == "target") h.policy_critic = PolicyCritic::Target;
        else if (value == "train") h.policy_critic = PolicyCritic::Train;
        else throw ConfigError("policy_critic must be 'target' or 'train'");
      }
      else if (key == "full_scale") full_scale = parse_bool(value, key);
      else if (key == "sweep_pt_db") spec.pt_db = parse_list<double>(value, key);
      else if (key == "sweep_N") spec.n_elements = parse_list<int>(value, key);
      else if (key == "sweep_mu") spec.mu = parse_list<double>(value, key);
      else if (key == "sweep_lambda") spec.lambda = parse_list<double>(value, key);
      else if (key == "realizations") spec.realizations = parse_number<int>(value, key);
      else if (key == "algorithms") {
        spec.algorithms.clear();
        for (const std::string& name : split(value, ',')) spec.algorithms.push_back(parse_algorithm(trim(name)));
      }
      else if (key == "out_dir") spec.out_dir = value;
      else if (key == "oracle_levels") spec.oracle_levels = parse_number<int>(value, key);
      else if (key == "random_draws") spec.random_draws = parse_number<int>(value, key);
      else if (key == "ao_iters") spec.ao_iters = parse_number<int>(value, key);
      else if (key == "ao_tol") spec.ao_tol = parse_number<double>(value, key);
      else if (key == "record_timing") spec.record_timing = parse_bool(value, key);
      else throw ConfigError("unknown key '" + key + "'");
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
  if (full_scale) apply_full_scale(spec.hyper);
  return spec;
}

ExperimentSpec load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  return parse_config(in, path.string());
}

}  // namespace ris
