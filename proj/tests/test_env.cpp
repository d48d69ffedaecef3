#include <cmath>
#include <numbers>

#include "doctest.h"
#include "oracles.hpp"
#include "ris/env.hpp"

using namespace ris;

namespace {

SystemConfig small_cfg(int M, int N, int K, double pt_db = 10.0) {
  SystemConfig cfg;
  cfg.M = M;
  cfg.N = N;
  cfg.K = K;
  cfg.pt_db = pt_db;
  return cfg;
}

ChannelSet unit_channels() {
  ChannelSet ch;
  ch.H1 = CMatrix::Constant(1, 1, cplx(1.0, 0.0));
  ch.H2 = CMatrix::Constant(1, 1, cplx(1.0, 0.0));
  return ch;
}

JointAction random_feasible(const SystemConfig& cfg, Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  ActionVector v{RVector(cfg.action_dim())};
  for (Eigen::Index i = 0; i < v.values.size(); ++i) v.values(i) = gauss(rng);
  return decode_action(v, cfg);
}

}  // namespace

TEST_CASE("SystemConfig validation and dimensions") {
  SystemConfig cfg = small_cfg(8, 8, 8);
  CHECK(cfg.action_dim() == 144);
  CHECK(cfg.state_dim() == 544);
  CHECK_NOTHROW(cfg.validate());
  CHECK(small_cfg(4, 4, 4, 0.0).pt_linear() == doctest::Approx(1.0));
  CHECK(small_cfg(4, 4, 4, 10.0).pt_linear() == doctest::Approx(10.0));

  CHECK_THROWS_AS(small_cfg(2, 2, 3).validate(), std::invalid_argument);
  CHECK_THROWS_AS(small_cfg(2, 0, 1).validate(), std::invalid_argument);
  CHECK_THROWS_AS(small_cfg(2, 2, 0).validate(), std::invalid_argument);
  SystemConfig noisy = small_cfg(2, 2, 2);
  noisy.noise_power = 0.0;
  CHECK_THROWS_AS(noisy.validate(), std::invalid_argument);
}

TEST_CASE("generate_channels is deterministic and unit-variance CN(0,1)") {
  const SystemConfig cfg = small_cfg(2, 2, 2);
  Rng a(42), b(42);
  const ChannelSet c1 = generate_channels(cfg, a);
  const ChannelSet c2 = generate_channels(cfg, b);
  CHECK(c1.H1 == c2.H1);
  CHECK(c1.H2 == c2.H2);
  CHECK(c1.H1.rows() == 2);
  CHECK(c1.H2.rows() == 2);

  // 100 x 1000 BS->RIS matrix gives 1e5 samples.
  const SystemConfig big = small_cfg(1000, 100, 1);
  Rng rng(7);
  const ChannelSet ch = generate_channels(big, rng);
  const double n = static_cast<double>(ch.H1.size());
  const double mean_power = ch.H1.cwiseAbs2().sum() / n;
  CHECK(std::abs(mean_power - 1.0) < 0.02);
  CHECK(std::abs(ch.H1.real().sum() / n) < 0.01);
  CHECK(std::abs(ch.H1.imag().sum() / n) < 0.01);
  CHECK(std::abs(ch.H1.real().array().square().sum() / n - 0.5) < 0.01);
}

TEST_CASE("effective_channel") {
  const ChannelSet unit = unit_channels();
  const CVector one = CVector::Constant(1, cplx(1.0, 0.0));
  CHECK(std::abs(effective_channel(one, unit.H1, unit.H2.row(0).transpose())(0) - cplx(1.0, 0.0)) <
        1e-15);

  Rng rng(3);
  const SystemConfig cfg = small_cfg(3, 4, 2);
  const ChannelSet ch = generate_channels(cfg, rng);

  SUBCASE("identity phases reduce to h^T H1") {
    const CVector ident = CVector::Constant(4, cplx(1.0, 0.0));
    const Eigen::RowVectorXcd h = effective_channel(ident, ch.H1, ch.H2.row(1).transpose());
    const Eigen::RowVectorXcd expect = ch.H2.row(1) * ch.H1;
    CHECK((h - expect).norm() < 1e-12);
  }
  SUBCASE("plain transpose, no conjugation, matches triple sum") {
    const JointAction a = random_feasible(cfg, rng);
    for (int k = 0; k < cfg.K; ++k) {
      const Eigen::RowVectorXcd h = effective_channel(a.phases, ch.H1, ch.H2.row(k).transpose());
      const CMatrix stacked = effective_channels(a.phases, ch);
      for (int m = 0; m < cfg.M; ++m) {
        const cplx expect = oracle::effective_entry(a.phases, ch.H1, ch.H2, k, m);
        CHECK(std::abs(h(m) - expect) < 1e-12);
        CHECK(std::abs(stacked(k, m) - expect) < 1e-12);
      }
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(effective_channel(CVector::Ones(3), ch.H1, ch.H2.row(0).transpose()), ShapeError);
    CHECK_THROWS_AS(effective_channels(CVector::Ones(5), ch), ShapeError);
  }
}

TEST_CASE("sinr and sum_rate") {
  const SystemConfig unit_cfg = [] {
    SystemConfig c = small_cfg(1, 1, 1);
    c.pt_db = 0.0;
    return c;
  }();
  const ChannelSet unit = unit_channels();
  const CMatrix g_one = CMatrix::Constant(1, 1, cplx(1.0, 0.0));
  const CVector phi_one = CVector::Constant(1, cplx(1.0, 0.0));
  CHECK(sinr(g_one, phi_one, unit, 0, 1.0) == doctest::Approx(1.0));
  CHECK(sum_rate(g_one, phi_one, unit, 1.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(sum_rate(CMatrix::Zero(1, 1), phi_one, unit, 1.0) == 0.0);

  Rng rng(11);
  SUBCASE("single user has no interference") {
    const SystemConfig cfg = small_cfg(3, 2, 1);
    const ChannelSet ch = generate_channels(cfg, rng);
    const JointAction a = random_feasible(cfg, rng);
    const double expect = std::norm(oracle::cross_gain(a.G, a.phases, ch, 0, 0)) / 0.5;
    CHECK(sinr(a.G, a.phases, ch, 0, 0.5) == doctest::Approx(expect).epsilon(1e-12));
  }
  SUBCASE("zero beamformer column gives zero SINR") {
    const SystemConfig cfg = small_cfg(2, 2, 2);
    const ChannelSet ch = generate_channels(cfg, rng);
    JointAction a = random_feasible(cfg, rng);
    a.G.col(1).setZero();
    CHECK(sinr(a.G, a.phases, ch, 1, 1.0) == 0.0);
    CHECK(sinr(a.G, a.phases, ch, 0, 1.0) > 0.0);
  }
  SUBCASE("matches loop oracle on M=N=K=2") {
    const SystemConfig cfg = small_cfg(2, 2, 2);
    for (int trial = 0; trial < 20; ++trial) {
      const ChannelSet ch = generate_channels(cfg, rng);
      const JointAction a = random_feasible(cfg, rng);
      for (int k = 0; k < 2; ++k)
        CHECK(std::abs(sinr(a.G, a.phases, ch, k, 1.0) - oracle::sinr(a.G, a.phases, ch, k, 1.0)) <
              1e-10);
      CHECK(std::abs(sum_rate(a.G, a.phases, ch, 1.0) - oracle::sum_rate(a.G, a.phases, ch, 1.0)) <
            1e-10);
    }
  }
  SUBCASE("common phase rotation leaves the sum rate unchanged") {
    const SystemConfig cfg = small_cfg(4, 5, 3);
    const ChannelSet ch = generate_channels(cfg, rng);
    const JointAction a = random_feasible(cfg, rng);
    const CVector rotated = a.phases * std::polar(1.0, 0.7);
    CHECK(std::abs(sum_rate(a.G, a.phases, ch, 1.0) - sum_rate(a.G, rotated, ch, 1.0)) < 1e-10);
  }
  SUBCASE("interference accounting") {
    const SystemConfig cfg = small_cfg(3, 3, 3);
    const ChannelSet ch = generate_channels(cfg, rng);
    const JointAction a = random_feasible(cfg, rng);
    const CMatrix cross = effective_channels(a.phases, ch) * a.G;
    double total = 0.0, via_sinr = 0.0;
    for (int k = 0; k < 3; ++k) {
      for (int j = 0; j < 3; ++j) total += std::norm(oracle::cross_gain(a.G, a.phases, ch, k, j));
      const double signal = std::norm(cross(k, k));
      // signal / rho - noise recovers the interference power.
      const double interference = signal / sinr(a.G, a.phases, ch, k, 1.0) - 1.0;
      via_sinr += signal + interference;
    }
    CHECK(via_sinr == doctest::Approx(total).epsilon(1e-10));
  }
  SUBCASE("bad indices and shapes") {
    const SystemConfig cfg = small_cfg(2, 2, 2);
    const ChannelSet ch = generate_channels(cfg, rng);
    const JointAction a = random_feasible(cfg, rng);
    CHECK_THROWS_AS(sinr(a.G, a.phases, ch, 2, 1.0), std::out_of_range);
    CHECK_THROWS_AS(sum_rate(CMatrix::Zero(3, 2), a.phases, ch, 1.0), ShapeError);
  }
}

TEST_CASE("project_power") {
  const CMatrix g = CMatrix::Constant(2, 2, cplx(1.0, 0.0));  // trace power 4
  const CMatrix p = project_power(g, 1.0);
  CHECK((p - 0.5 * g).norm() < 1e-15);

  Rng rng(5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  CMatrix r(3, 2);
  for (Eigen::Index i = 0; i < r.size(); ++i) r(i) = cplx(gauss(rng), gauss(rng));
  const CMatrix q = project_power(r, 10.0);
  CHECK(std::abs(oracle::power(q) - 10.0) < 1e-9);
  CHECK((project_power(q, 10.0) - q).norm() < 1e-12);
  // Scaling before projecting is a no-op.
  CHECK((project_power(3.5 * r, 10.0) - q).norm() < 1e-12);

  const CMatrix zero_fallback = project_power(CMatrix::Zero(3, 2), 2.0);
  CHECK((zero_fallback - init_action(small_cfg(3, 1, 2, 10.0 * std::log10(2.0))).G).norm() < 1e-12);
}

TEST_CASE("project_phases") {
  CVector raw(3);
  raw << cplx(3.0, 4.0), cplx(1.0, 0.0), cplx(0.0, 0.0);
  const CVector p = project_phases(raw);
  CHECK(std::abs(p(0) - cplx(0.6, 0.8)) < 1e-15);
  CHECK(p(1) == cplx(1.0, 0.0));
  CHECK(p(2) == cplx(1.0, 0.0));
}

TEST_CASE("encode/decode action") {
  SystemConfig cfg = small_cfg(8, 8, 8);
  Rng rng(13);
  const JointAction a = random_feasible(cfg, rng);
  const ActionVector v = encode_action(a);
  CHECK(v.values.size() == 144);

  SUBCASE("layout") {
    CHECK(v.values(0) == a.G(0, 0).real());
    CHECK(v.values(1) == a.G(1, 0).real());
    CHECK(v.values(8) == a.G(0, 1).real());
    CHECK(v.values(64) == a.G(0, 0).imag());
    CHECK(v.values(128) == a.phases(0).real());
    CHECK(v.values(136) == a.phases(0).imag());
  }
  SUBCASE("round trip on a feasible point") {
    const JointAction back = decode_action(v, cfg);
    CHECK((back.G - a.G).norm() < 1e-12);
    CHECK((back.phases - a.phases).norm() < 1e-12);
    CHECK((encode_action(back).values - v.values).norm() < 1e-12);
  }
  SUBCASE("decode of random vectors is feasible") {
    std::normal_distribution<double> gauss(0.0, 3.0);
    for (int trial = 0; trial < 200; ++trial) {
      ActionVector r{RVector(cfg.action_dim())};
      for (Eigen::Index i = 0; i < r.values.size(); ++i) r.values(i) = gauss(rng);
      const JointAction d = decode_action(r, cfg);
      CHECK(std::abs(oracle::power(d.G) - cfg.pt_linear()) < 1e-9 * cfg.pt_linear());
      CHECK((d.phases.cwiseAbs().array() - 1.0).abs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("wrong length") {
    CHECK_THROWS_AS(decode_action(ActionVector{RVector::Zero(10)}, cfg), ShapeError);
  }
}

TEST_CASE("init_action") {
  const JointAction a = init_action(small_cfg(2, 3, 2, 0.0));
  CHECK(std::abs(a.G(0, 0) - cplx(std::sqrt(0.5), 0.0)) < 1e-15);
  CHECK(std::abs(a.G(1, 1) - cplx(std::sqrt(0.5), 0.0)) < 1e-15);
  CHECK(a.G(0, 1) == cplx(0.0, 0.0));
  for (Eigen::Index n = 0; n < 3; ++n) CHECK(a.phases(n) == cplx(1.0, 0.0));

  const SystemConfig cfg = small_cfg(5, 2, 3, 7.0);
  CHECK(std::abs(oracle::power(init_action(cfg).G) - cfg.pt_linear()) < 1e-12);
}

TEST_CASE("build_state") {
  SUBCASE("dimension at M=N=K=8") {
    const SystemConfig cfg = small_cfg(8, 8, 8);
    Rng rng(1);
    const ChannelSet ch = generate_channels(cfg, rng);
    CHECK(build_state(init_action(cfg), ch, cfg).values.size() == 544);
  }
  SUBCASE("zero beamformer keeps channel entries and zero powers") {
    const SystemConfig cfg = small_cfg(3, 2, 2);
    Rng rng(2);
    const ChannelSet ch = generate_channels(cfg, rng);
    JointAction a = init_action(cfg);
    a.G.setZero();
    const StateVector s = build_state(a, ch, cfg);
    const int K = cfg.K;
    CHECK(s.values.head(2 * K + 2 * K * K).cwiseAbs().maxCoeff() == 0.0);
    const Eigen::Index base = 2 * K + 2 * K * K + cfg.action_dim();
    const Eigen::Index nm = cfg.N * cfg.M;
    CHECK(s.values(base) == ch.H1(0, 0).real());
    CHECK(s.values(base + nm) == ch.H1(0, 0).imag());
    CHECK(s.values(base + 2 * nm) == ch.H2(0, 0).real());
    CHECK(s.values(base + 2 * nm + cfg.K * cfg.N) == ch.H2(0, 0).imag());
    CHECK(s.values(s.values.size() - 1) == ch.H2(cfg.K - 1, cfg.N - 1).imag());
  }
  SUBCASE("power entries match direct recomputation") {
    const SystemConfig cfg = small_cfg(3, 4, 2);
    Rng rng(9);
    const ChannelSet ch = generate_channels(cfg, rng);
    const JointAction a = random_feasible(cfg, rng);
    const StateVector s = build_state(a, ch, cfg);
    Eigen::Index pos = 0;
    for (int k = 0; k < cfg.K; ++k) {
      cplx gram = 0.0;
      for (int m = 0; m < cfg.M; ++m) gram += std::conj(a.G(m, k)) * a.G(m, k);
      CHECK(s.values(pos++) == doctest::Approx(gram.real() * gram.real()).epsilon(1e-12));
      CHECK(s.values(pos++) == doctest::Approx(gram.imag() * gram.imag()).epsilon(1e-12));
    }
    for (int k = 0; k < cfg.K; ++k)
      for (int j = 0; j < cfg.K; ++j) {
        const cplx c = oracle::cross_gain(a.G, a.phases, ch, k, j);
        CHECK(s.values(pos++) == doctest::Approx(c.real() * c.real()).epsilon(1e-10));
        CHECK(s.values(pos++) == doctest::Approx(c.imag() * c.imag()).epsilon(1e-10));
      }
    CHECK((s.values.segment(pos, cfg.action_dim()) - encode_action(a).values).norm() == 0.0);
  }
}

TEST_CASE("env_step") {
  SystemConfig cfg = small_cfg(1, 1, 1, 0.0);
  const ChannelSet unit = unit_channels();
  const StepResult step = env_step(init_action(cfg), unit, cfg);
  CHECK(step.reward == doctest::Approx(1.0).epsilon(1e-15));

  cfg = small_cfg(3, 3, 2);
  Rng rng(4);
  const ChannelSet ch = generate_channels(cfg, rng);
  const JointAction a = random_feasible(cfg, rng);
  const StepResult s1 = env_step(a, ch, cfg);
  const StepResult s2 = env_step(a, ch, cfg);
  CHECK(s1.reward == s2.reward);
  CHECK(s1.next_state.values == s2.next_state.values);
  CHECK(s1.reward == sum_rate(a.G, a.phases, ch, cfg.noise_power));
  CHECK(s1.next_state.values == build_state(a, ch, cfg).values);
}

TEST_CASE("determinism: same seed gives bitwise-equal states") {
  const SystemConfig cfg = small_cfg(4, 3, 2);
  Rng a(99), b(99);
  const ChannelSet c1 = generate_channels(cfg, a);
  const ChannelSet c2 = generate_channels(cfg, b);
  const RVector s1 = build_state(init_action(cfg), c1, cfg).values;
  const RVector s2 = build_state(init_action(cfg), c2, cfg).values;
  CHECK(std::memcmp(s1.data(), s2.data(), sizeof(double) * s1.size()) == 0);
}
