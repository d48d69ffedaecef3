#include "ris/env.hpp"

#include <cmath>

namespace ris {

double SystemConfig::pt_linear() const { return std::pow(10.0, pt_db / 10.0); }

int SystemConfig::state_dim() const {
  return 2 * K + 2 * K * K + 2 * N + 2 * M * K + 2 * N * M + 2 * K * N;
}

int SystemConfig::action_dim() const { return 2 * M * K + 2 * N; }

void SystemConfig::validate() const {
  if (K < 1) throw std::invalid_argument("K must be at least 1");
  if (M < K) throw std::invalid_argument("M must be at least K");
  if (N < 1) throw std::invalid_argument("N must be at least 1");
  if (!(noise_power > 0.0) || !std::isfinite(noise_power))
    throw std::invalid_argument("noise_power must be positive");
  if (!std::isfinite(pt_db)) throw std::invalid_argument("pt_db must be finite");
}

void ChannelSet::check(const SystemConfig& cfg) const {
  if (H1.rows() != cfg.N || H1.cols() != cfg.M)
    throw ShapeError("H1 must be N x M");
  if (H2.rows() != cfg.K || H2.cols() != cfg.N)
    throw ShapeError("H2 must be K x N");
  if (!H1.allFinite() || !H2.allFinite())
    throw std::invalid_argument("channel entries must be finite");
}

ChannelSet generate_channels(const SystemConfig& cfg, Rng& rng) {
  // Real and imaginary parts each carry half the unit variance.
  std::normal_distribution<double> gauss(0.0, std::sqrt(0.5));
  auto draw = [&](int rows, int cols) {
    CMatrix m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double re = gauss(rng);
        const double im = gauss(rng);
        m(i, j) = cplx(re, im);
      }
    return m;
  };
  ChannelSet ch;
  ch.H1 = draw(cfg.N, cfg.M);
  ch.H2 = draw(cfg.K, cfg.N);
  return ch;
}

Eigen::RowVectorXcd effective_channel(const CVector& phases, const CMatrix& H1,
                                      const CVector& h_k2) {
  if (phases.size() != H1.rows() || h_k2.size() != H1.rows())
    throw ShapeError("effective_channel: phases, h_k2 and H1 rows must agree");
  const CVector weighted = h_k2.cwiseProduct(phases);
  return weighted.transpose() * H1;
}

CMatrix effective_channels(const CVector& phases, const ChannelSet& ch) {
  if (phases.size() != ch.N())
    throw ShapeError("effective_channels: phase count must equal N");
  return ch.H2 * phases.asDiagonal() * ch.H1;
}

namespace {

void check_beamformer(const CMatrix& heff, const CMatrix& G) {
  if (G.rows() != heff.cols() || G.cols() != heff.rows())
    throw ShapeError("beamformer must be M x K");
}

}  // namespace

double sinr(const CMatrix& G, const CVector& phases, const ChannelSet& ch, int k,
            double noise_power) {
  const CMatrix heff = effective_channels(phases, ch);
  check_beamformer(heff, G);
  if (k < 0 || k >= ch.K()) throw std::out_of_range("sinr: user index out of range");
  const Eigen::RowVectorXcd cross = heff.row(k) * G;
  const double signal = std::norm(cross(k));
  const double interference = cross.cwiseAbs2().sum() - signal;
  return signal / (std::max(interference, 0.0) + noise_power);
}

double sum_rate_effective(const CMatrix& heff, const CMatrix& G, double noise_power) {
  check_beamformer(heff, G);
  const RMatrix power = (heff * G).cwiseAbs2();
  double total = 0.0;
  for (Eigen::Index k = 0; k < power.rows(); ++k) {
    const double signal = power(k, k);
    const double interference = power.row(k).sum() - signal;
    total += std::log2(1.0 + signal / (std::max(interference, 0.0) + noise_power));
  }
  return total;
}

double sum_rate(const CMatrix& G, const CVector& phases, const ChannelSet& ch,
                double noise_power) {
  return sum_rate_effective(effective_channels(phases, ch), G, noise_power);
}

namespace {

CMatrix identity_beamformer(Eigen::Index M, Eigen::Index K, double pt) {
  CMatrix G = CMatrix::Identity(M, K);
  return G * std::sqrt(pt / static_cast<double>(K));
}

}  // namespace

CMatrix project_power(const CMatrix& G_raw, double pt) {
  const double power = G_raw.squaredNorm();
  if (!(power > 0.0) || !std::isfinite(power))
    return identity_beamformer(G_raw.rows(), G_raw.cols(), pt);
  return G_raw * std::sqrt(pt / power);
}

CVector project_phases(const CVector& raw) {
  CVector out(raw.size());
  for (Eigen::Index n = 0; n < raw.size(); ++n) {
    const double mag = std::abs(raw(n));
    out(n) = (mag > 0.0 && std::isfinite(mag)) ? raw(n) / mag : cplx(1.0, 0.0);
  }
  return out;
}

ActionVector encode_action(const JointAction& a) {
  const Eigen::Index mk = a.G.size();
  const Eigen::Index n = a.phases.size();
  ActionVector v;
  v.values.resize(2 * mk + 2 * n);
  const Eigen::Map<const CVector> g_flat(a.G.data(), mk);
  v.values.segment(0, mk) = g_flat.real();
  v.values.segment(mk, mk) = g_flat.imag();
  v.values.segment(2 * mk, n) = a.phases.real();
  v.values.segment(2 * mk + n, n) = a.phases.imag();
  return v;
}

JointAction decode_action(const ActionVector& v, const SystemConfig& cfg) {
  if (v.values.size() != cfg.action_dim())
    throw ShapeError("decode_action: expected length " + std::to_string(cfg.action_dim()) +
                     ", got " + std::to_string(v.values.size()));
  const Eigen::Index mk = static_cast<Eigen::Index>(cfg.M) * cfg.K;
  const Eigen::Index n = cfg.N;
  CMatrix G(cfg.M, cfg.K);
  Eigen::Map<CVector> g_flat(G.data(), mk);
  for (Eigen::Index i = 0; i < mk; ++i) g_flat(i) = cplx(v.values(i), v.values(mk + i));
  CVector raw(n);
  for (Eigen::Index i = 0; i < n; ++i)
    raw(i) = cplx(v.values(2 * mk + i), v.values(2 * mk + n + i));
  return {project_power(G, cfg.pt_linear()), project_phases(raw)};
}

JointAction init_action(const SystemConfig& cfg) {
  return {identity_beamformer(cfg.M, cfg.K, cfg.pt_linear()),
          CVector::Constant(cfg.N, cplx(1.0, 0.0))};
}

StateVector build_state(const JointAction& prev_action, const ChannelSet& ch,
                        const SystemConfig& cfg) {
  ch.check(cfg);
  const int K = cfg.K;
  const ActionVector act = encode_action(prev_action);
  if (act.values.size() != cfg.action_dim()) throw ShapeError("build_state: action shape");

  StateVector s;
  s.values.resize(cfg.state_dim());
  Eigen::Index pos = 0;

  for (int k = 0; k < K; ++k) {
    const cplx gram = prev_action.G.col(k).dot(prev_action.G.col(k));  // g_k^H g_k
    s.values(pos++) = gram.real() * gram.real();
    s.values(pos++) = gram.imag() * gram.imag();
  }

  const CMatrix cross = effective_channels(prev_action.phases, ch) * prev_action.G;
  for (int k = 0; k < K; ++k)
    for (int n = 0; n < K; ++n) {
      const cplx c = cross(k, n);
      s.values(pos++) = c.real() * c.real();
      s.values(pos++) = c.imag() * c.imag();
    }

  s.values.segment(pos, act.values.size()) = act.values;
  pos += act.values.size();

  auto append = [&](const CMatrix& m) {
    const Eigen::Map<const CVector> flat(m.data(), m.size());
    s.values.segment(pos, m.size()) = flat.real();
    pos += m.size();
    s.values.segment(pos, m.size()) = flat.imag();
    pos += m.size();
  };
  append(ch.H1);
  append(ch.H2);
  return s;
}

StepResult env_step(const JointAction& action, const ChannelSet& ch,
                    const SystemConfig& cfg) {
  return {sum_rate(action.G, action.phases, ch, cfg.noise_power),
          build_state(action, ch, cfg)};
}

}  // namespace ris
