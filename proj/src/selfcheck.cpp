// Quick invariant suites behind `ris_sim check`. Each suite recomputes its
// reference values by a route independent of the code under test.

#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <string>

#include "ris/agent.hpp"
#include "ris/bench.hpp"
#include "ris/harness.hpp"
#include "ris/metrics.hpp"

namespace ris {

namespace {

struct Suite {
  std::string name;
  std::function<bool(std::string&)> run;
};

double loop_sum_rate(const CMatrix& G, const CVector& phases, const ChannelSet& ch, double noise) {
  const auto M = ch.M(), N = ch.N(), K = ch.K();
  double total = 0.0;
  for (int k = 0; k < K; ++k) {
    double signal = 0.0, interference = 0.0;
    for (int j = 0; j < K; ++j) {
      cplx acc = 0.0;
      for (int m = 0; m < M; ++m)
        for (int n = 0; n < N; ++n) acc += ch.H2(k, n) * phases(n) * ch.H1(n, m) * G(m, j);
      (j == k ? signal : interference) += std::norm(acc);
    }
    total += std::log2(1.0 + signal / (interference + noise));
  }
  return total;
}

bool check_gradients(std::string& detail) {
  SystemConfig cfg{.M = 2, .N = 2, .K = 2, .pt_db = 10.0};
  Hyperparams hp = Hyperparams::desk_scale();
  hp.hidden_width = 64;
  Rng rng(11);
  DdpgAgent agent(cfg, hp, rng);
  nn::DenseNet& critic = agent.critic();

  const int batch = 4;
  const RMatrix states = RMatrix::Random(cfg.state_dim(), batch);
  const RMatrix actions = RMatrix::Random(cfg.action_dim(), batch);
  const RMatrix weights = RMatrix::Random(1, batch);
  auto loss = [&](const RMatrix& a) {
    return critic.forward(states, &a, nn::Mode::Train).output.cwiseProduct(weights).sum();
  };
  const nn::ForwardPass pass = critic.forward(states, &actions, nn::Mode::Train);
  const nn::Gradients g = critic.backward(pass, weights);

  double worst = 0.0;
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < actions.size(); ++i) {
    RMatrix plus = actions, minus = actions;
    plus(i) += h;
    minus(i) -= h;
    const double numeric = (loss(plus) - loss(minus)) / (2 * h);
    const double analytic = g.aux(i);
    worst = std::max(worst, std::abs(numeric - analytic) /
                                std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
  }
  RVector params = critic.parameters();
  for (Eigen::Index i = 0; i < params.size(); i += 97) {
    const double saved = params(i);
    params(i) = saved + h;
    critic.set_parameters(params);
    const double up = loss(actions);
    params(i) = saved - h;
    critic.set_parameters(params);
    const double down = loss(actions);
    params(i) = saved;
    const double numeric = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(numeric - g.params(i)) /
                                std::max({std::abs(numeric), std::abs(g.params(i)), 1e-6}));
  }
  critic.set_parameters(params);
  detail = "max rel err " + format_double(worst);
  return worst < 1e-4;
}

bool check_feasibility(std::string& detail) {
  SystemConfig cfg{.M = 3, .N = 4, .K = 2, .pt_db = 7.0};
  Rng rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double pt = cfg.pt_linear();
  for (int trial = 0; trial < 1000; ++trial) {
    ActionVector v{RVector(cfg.action_dim())};
    for (Eigen::Index i = 0; i < v.values.size(); ++i) v.values(i) = gauss(rng);
    const JointAction a = decode_action(v, cfg);
    if (std::abs(a.G.squaredNorm() - pt) > 1e-9 * pt) return false;
    for (Eigen::Index n = 0; n < a.phases.size(); ++n)
      if (std::abs(std::abs(a.phases(n)) - 1.0) > 1e-12) return false;
  }
  detail = "1000 decoded actions feasible";
  return true;
}

bool check_sum_rate(std::string& detail) {
  SystemConfig cfg{.M = 3, .N = 3, .K = 2, .pt_db = 10.0};
  Rng rng(9);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const ChannelSet ch = generate_channels(cfg, rng);
    ActionVector v{RVector::Random(cfg.action_dim())};
    const JointAction a = decode_action(v, cfg);
    const double fast = sum_rate(a.G, a.phases, ch, cfg.noise_power);
    worst = std::max(worst, std::abs(fast - loop_sum_rate(a.G, a.phases, ch, cfg.noise_power)));
    const CVector rotated = a.phases * std::polar(1.0, 0.7);
    worst = std::max(worst, std::abs(fast - sum_rate(a.G, rotated, ch, cfg.noise_power)));
  }
  detail = "max abs deviation " + format_double(worst);
  return worst < 1e-10;
}

bool check_single_user_wmmse(std::string& detail) {
  Rng rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CMatrix h(1, 4);
  for (Eigen::Index m = 0; m < 4; ++m) h(0, m) = cplx(gauss(rng), gauss(rng));
  const double pt = 5.0;
  const double rate = bench::wmmse(h, pt, 1.0).sum_rate;
  const double mrt = std::log2(1.0 + pt * h.squaredNorm());
  detail = "rate gap " + format_double(std::abs(rate - mrt));
  return std::abs(rate - mrt) < 1e-8;
}

bool check_average_reward(std::string& detail) {
  Rng rng(21);
  std::uniform_real_distribution<double> uni(0.0, 10.0);
  std::vector<double> xs(1000);
  for (double& x : xs) x = uni(rng);
  const auto avg = average_reward(xs);
  double cumulative = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    cumulative += xs[i];
    worst = std::max(worst, std::abs(avg[i] - cumulative / static_cast<double>(i + 1)));
  }
  detail = "max deviation " + format_double(worst);
  return worst < 1e-12;
}

bool check_alternating_monotone(std::string& detail) {
  SystemConfig cfg{.M = 2, .N = 3, .K = 2, .pt_db = 10.0};
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const ChannelSet ch = generate_channels(cfg, rng);
    const auto res = bench::alternating_optimize(ch, cfg, 20, 1e-9);
    for (std::size_t i = 1; i < res.trace.size(); ++i)
      if (res.trace[i] < res.trace[i - 1] - 1e-9) return false;
  }
  detail = "5 instances non-decreasing";
  return true;
}

}  // namespace

bool run_self_checks(std::ostream& out) {
  const Suite suites[] = {
      {"gradient", check_gradients},
      {"feasibility", check_feasibility},
      {"sum_rate", check_sum_rate},
      {"wmmse_single_user", check_single_user_wmmse},
      {"average_reward", check_average_reward},
      {"alternating_monotone", check_alternating_monotone},
  };
  bool all = true;
  for (const Suite& s : suites) {
    std::string detail;
    bool ok = false;
    try {
      ok = s.run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    out << (ok ? "PASS " : "FAIL ") << s.name << (detail.empty() ? "" : " (" + detail + ")") << '\n';
    all = all && ok;
  }
  return all;
}

}  // namespace ris
