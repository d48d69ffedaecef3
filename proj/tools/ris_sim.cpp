// ris_sim: command-line front end for the RIS-assisted MISO simulator.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ris/agent.hpp"
#include "ris/bench.hpp"
#include "ris/harness.hpp"

namespace fs = std::filesystem;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool full_scale = false;
};

ris::ExperimentSpec resolve_spec(const GlobalOptions& opts) {
  ris::ExperimentSpec spec = opts.config.empty() ? ris::ExperimentSpec{} : ris::load_config(opts.config);
  if (opts.seed) spec.base.seed = *opts.seed;
  if (!opts.out.empty()) spec.out_dir = opts.out;
  if (opts.full_scale) ris::apply_full_scale(spec.hyper);
  spec.fill_defaults();
  spec.validate();
  fs::create_directories(spec.out_dir);
  return spec;
}

void write_bytes(const fs::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open output file " + path.string());
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_action(const fs::path& path, const ris::JointAction& a) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open output file " + path.string());
  os << "kind,row,col,re,im\n";
  for (Eigen::Index j = 0; j < a.G.cols(); ++j)
    for (Eigen::Index i = 0; i < a.G.rows(); ++i)
      os << "G," << i << ',' << j << ',' << ris::format_double(a.G(i, j).real()) << ','
         << ris::format_double(a.G(i, j).imag()) << '\n';
  for (Eigen::Index n = 0; n < a.phases.size(); ++n)
    os << "phi," << n << ",0," << ris::format_double(a.phases(n).real()) << ','
       << ris::format_double(a.phases(n).imag()) << '\n';
}

ris::SummaryRow row_for(const std::string& algo, const ris::SystemConfig& cfg, double rate,
                        long long iterations, double wall_ms) {
  return {algo, cfg.pt_db, cfg.M, cfg.N, cfg.K, cfg.seed, rate, iterations, wall_ms};
}

int cmd_train(const GlobalOptions& opts, bool fixed_channels) {
  const ris::ExperimentSpec spec = resolve_spec(opts);
  ris::Rng rng(spec.base.seed);
  ris::RunSummary run;
  if (fixed_channels) {
    const ris::ChannelSet ch = ris::generate_channels(spec.base, rng);
    run = ris::optimize_for_channels(ch, spec.base, spec.hyper, rng);
  } else {
    run = ris::train(spec.base, spec.hyper, rng);
  }
  ris::write_rewards_csv(spec.out_dir / "rewards_0_0.csv", run);
  const double wall = spec.record_timing ? run.wall_ms : 0.0;
  ris::write_summary_csv(spec.out_dir / "summary.csv",
                         {row_for("drl", spec.base, run.best_sum_rate,
                                  static_cast<long long>(run.instant_rewards.size()), wall)});
  write_bytes(spec.out_dir / "actor.ckpt", run.actor_checkpoint);
  write_bytes(spec.out_dir / "critic.ckpt", run.critic_checkpoint);
  write_action(spec.out_dir / "best_action.csv", run.best_action);
  std::cout << "best sum rate " << ris::format_double(run.best_sum_rate) << " (episode "
            << run.best_episode << "), final average reward "
            << ris::format_double(run.average_rewards.back()) << "\n";
  return 0;
}

int cmd_bench(const GlobalOptions& opts) {
  const ris::ExperimentSpec spec = resolve_spec(opts);
  ris::Rng rng(spec.base.seed);
  const ris::ChannelSet ch = ris::generate_channels(spec.base, rng);
  std::vector<ris::SummaryRow> rows;
  const auto wmmse = ris::bench::alternating_optimize(ch, spec.base, spec.ao_iters, spec.ao_tol);
  rows.push_back(row_for("wmmse_alt", spec.base, wmmse.sum_rate, wmmse.iterations, 0.0));
  const auto zf = ris::bench::alternating_optimize(ch, spec.base, spec.ao_iters, spec.ao_tol,
                                                   ris::bench::Beamformer::Zf);
  rows.push_back(row_for("zf_alt", spec.base, zf.sum_rate, zf.iterations, 0.0));
  const auto random = ris::bench::random_phase_baseline(ch, spec.base, spec.random_draws, rng);
  rows.push_back(row_for("random", spec.base, random.sum_rate, random.iterations, 0.0));
  ris::write_summary_csv(spec.out_dir / "summary.csv", rows);
  for (const auto& r : rows) std::cout << r.algorithm << " " << ris::format_double(r.sum_rate) << "\n";
  return 0;
}

int cmd_oracle(const GlobalOptions& opts, int levels) {
  ris::ExperimentSpec spec = resolve_spec(opts);
  if (levels > 0) spec.oracle_levels = levels;
  ris::Rng rng(spec.base.seed);
  const ris::ChannelSet ch = ris::generate_channels(spec.base, rng);
  const auto oracle = ris::bench::brute_force_oracle(ch, spec.base, spec.oracle_levels);
  const auto alt = ris::bench::alternating_optimize(ch, spec.base, spec.ao_iters, spec.ao_tol);
  ris::write_summary_csv(spec.out_dir / "summary.csv",
                         {row_for("oracle", spec.base, oracle.sum_rate, oracle.iterations, 0.0),
                          row_for("wmmse_alt", spec.base, alt.sum_rate, alt.iterations, 0.0)});
  std::cout << "oracle " << ris::format_double(oracle.sum_rate) << " over " << oracle.iterations
            << " grid points; wmmse_alt " << ris::format_double(alt.sum_rate) << "\n";
  return 0;
}

int cmd_sweep(const GlobalOptions& opts) {
  const ris::ExperimentSpec spec = resolve_spec(opts);
  const ris::ExperimentResult result = ris::run_experiment(spec);
  for (const auto& m : result.means)
    std::cout << "point " << m.point.index << " " << ris::to_string(m.algorithm) << " pt_db="
              << ris::format_double(m.point.pt_db) << " N=" << m.point.N
              << " mean_sum_rate=" << ris::format_double(m.mean_sum_rate) << "\n";
  std::cout << "wrote " << result.files.size() << " files to " << spec.out_dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint BS beamforming and RIS phase-shift design simulator"};
  app.require_subcommand(1);
  GlobalOptions opts;
  app.add_option("--config", opts.config, "Key-value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", opts.seed, "Master RNG seed (overrides the config)");
  app.add_option("--out", opts.out, "Output directory (overrides the config)");
  app.add_flag("--full-scale", opts.full_scale, "Train for 5000 episodes of 20000 steps");

  bool fixed_channels = false;
  auto* train = app.add_subcommand("train", "Single DRL run");
  train->add_flag("--fixed-channels", fixed_channels, "Keep one channel draw for every episode");
  auto* bench = app.add_subcommand("bench", "Baselines on one channel instance");
  int levels = 0;
  auto* oracle = app.add_subcommand("oracle", "Brute-force phase-grid oracle on a tiny instance");
  oracle->add_option("--levels", levels, "Phase levels L per element");
  auto* sweep = app.add_subcommand("sweep", "Full experiment sweep");
  auto* check = app.add_subcommand("check", "Invariant and gradient self-tests");
  for (auto* sub : {train, bench, oracle, sweep, check}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*train) return cmd_train(opts, fixed_channels);
    if (*bench) return cmd_bench(opts);
    if (*oracle) return cmd_oracle(opts, levels);
    if (*sweep) return cmd_sweep(opts);
    if (*check) return ris::run_self_checks(std::cout) ? 0 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
