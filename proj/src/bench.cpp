#include "ris/bench.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace ris::bench {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Sum rate from the cross-gain matrix C(k, n) = h~_k g_n.
double rate_from_cross(const CMatrix& cross, double noise_power) {
  double total = 0.0;
  for (Eigen::Index k = 0; k < cross.rows(); ++k) {
    const double signal = std::norm(cross(k, k));
    const double all = cross.row(k).cwiseAbs2().sum();
    total += std::log2(1.0 + signal / (std::max(all - signal, 0.0) + noise_power));
  }
  return total;
}

/// G = (A + mu I)^{-1} B with the smallest mu >= 0 meeting trace(G G^H) <= pt.
CMatrix constrained_solve(const CMatrix& A, const CMatrix& B, double pt) {
  const Eigen::SelfAdjointEigenSolver<CMatrix> eig(A);
  const RVector lambda = eig.eigenvalues().cwiseMax(0.0);
  const CMatrix C = eig.eigenvectors().adjoint() * B;
  const RVector weight = C.rowwise().squaredNorm();
  const double scale = std::max(lambda.maxCoeff(), 1e-300);

  // Directions with (numerically) zero eigenvalue carry no energy of B at mu = 0.
  auto power = [&](double mu) {
    double p = 0.0;
    for (Eigen::Index m = 0; m < lambda.size(); ++m) {
      const double denom = lambda(m) + mu;
      if (mu == 0.0 && lambda(m) <= 1e-12 * scale) {
        if (weight(m) > 1e-20 * weight.sum()) return std::numeric_limits<double>::infinity();
        continue;
      }
      p += weight(m) / (denom * denom);
    }
    return p;
  };

  double mu = 0.0;
  if (power(0.0) > pt) {
    double lo = 0.0;
    double hi = std::sqrt(weight.sum() / pt);
    while (power(hi) > pt) hi *= 2.0;
    for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
      const double mid = 0.5 * (lo + hi);
      (power(mid) > pt ? lo : hi) = mid;
    }
    mu = hi;
  }

  RVector inv(lambda.size());
  for (Eigen::Index m = 0; m < lambda.size(); ++m) {
    const double denom = lambda(m) + mu;
    inv(m) = (mu == 0.0 && lambda(m) <= 1e-12 * scale) ? 0.0 : 1.0 / denom;
  }
  return eig.eigenvectors() * inv.asDiagonal() * C;
}

CMatrix fit_budget(const CMatrix& G, double pt) {
  const double p = G.squaredNorm();
  return p > pt ? CMatrix(G * std::sqrt(pt / p)) : G;
}

}  // namespace

CMatrix mrt_beamforming(const CMatrix& heff, double pt) {
  const Eigen::Index K = heff.rows();
  CMatrix G = heff.adjoint();
  for (Eigen::Index k = 0; k < K; ++k) {
    const double n = G.col(k).norm();
    if (n > 0.0) G.col(k) *= std::sqrt(pt / static_cast<double>(K)) / n;
  }
  return G;
}

CMatrix zf_beamforming(const CMatrix& heff, double pt) {
  const Eigen::Index K = heff.rows();
  if (K > heff.cols()) throw ZfInfeasible("ZF needs at least as many antennas as users");
  const Eigen::JacobiSVD<CMatrix> svd(heff);
  const RVector sv = svd.singularValues();
  if (sv.size() == 0 || !(sv(0) > 0.0) || sv(sv.size() - 1) < 1e-10 * sv(0))
    throw ZfInfeasible("effective channel is rank deficient");
  CMatrix G = heff.adjoint() * (heff * heff.adjoint()).inverse();
  for (Eigen::Index k = 0; k < K; ++k)
    G.col(k) *= std::sqrt(pt / static_cast<double>(K)) / G.col(k).norm();
  return G;
}

WmmseResult wmmse(const CMatrix& heff, double pt, double noise_power, int max_iters, double tol,
                  const CMatrix* init) {
  const Eigen::Index K = heff.rows();
  const Eigen::Index M = heff.cols();
  WmmseResult result;
  if (heff.squaredNorm() == 0.0) {
    result.G = CMatrix::Zero(M, K);
    result.trace.push_back(0.0);
    return result;
  }

  CMatrix G;
  if (init != nullptr) {
    if (init->rows() != M || init->cols() != K) throw ShapeError("wmmse: init must be M x K");
    G = fit_budget(*init, pt);
  } else {
    G = mrt_beamforming(heff, pt);
    try {
      const CMatrix zf = zf_beamforming(heff, pt);
      if (sum_rate_effective(heff, zf, noise_power) > sum_rate_effective(heff, G, noise_power))
        G = zf;
    } catch (const ZfInfeasible&) {
    }
  }

  double rate = sum_rate_effective(heff, G, noise_power);
  result.G = G;
  result.sum_rate = rate;
  result.trace.push_back(rate);

  for (int it = 0; it < max_iters; ++it) {
    const CMatrix cross = heff * G;
    CMatrix A = CMatrix::Zero(M, M);
    CMatrix B(M, K);
    for (Eigen::Index k = 0; k < K; ++k) {
      const double total = cross.row(k).cwiseAbs2().sum() + noise_power;
      const cplx u = cross(k, k) / total;  // MMSE receiver
      const double mse = std::max(1.0 - std::norm(cross(k, k)) / total, 1e-300);
      const double w = 1.0 / mse;
      A += (w * std::norm(u)) * heff.row(k).adjoint() * heff.row(k);
      B.col(k) = heff.row(k).adjoint() * (u * w);
    }
    A = 0.5 * (A + A.adjoint());
    G = constrained_solve(A, B, pt);

    const double next = sum_rate_effective(heff, G, noise_power);
    result.trace.push_back(next);
    result.iterations = it + 1;
    if (next > result.sum_rate) {
      result.sum_rate = next;
      result.G = G;
    }
    const bool converged = std::abs(next - rate) < tol;
    rate = next;
    if (converged) break;
  }
  return result;
}

CVector phase_ascent(const CMatrix& G, const CVector& phases, const ChannelSet& ch,
                     const SystemConfig& cfg, int sweeps) {
  ch.check(cfg);
  if (phases.size() != cfg.N) throw ShapeError("phase_ascent: phase count must equal N");
  CVector current = project_phases(phases);
  const double noise = cfg.noise_power;

  // Element n contributes phi_n * a_n (b_n G) to the cross-gain matrix.
  std::vector<CMatrix> contribution(static_cast<std::size_t>(cfg.N));
  for (int n = 0; n < cfg.N; ++n)
    contribution[n] = ch.H2.col(n) * (ch.H1.row(n) * G);

  for (int sweep = 0; sweep < sweeps; ++sweep) {
    CMatrix cross = CMatrix::Zero(cfg.K, cfg.K);
    for (int n = 0; n < cfg.N; ++n) cross += current(n) * contribution[n];
    bool improved = false;

    for (int n = 0; n < cfg.N; ++n) {
      const CMatrix rest = cross - current(n) * contribution[n];
      auto objective = [&](double theta) {
        return rate_from_cross(rest + std::polar(1.0, theta) * contribution[n], noise);
      };
      const double incumbent = rate_from_cross(cross, noise);

      double best_theta = 0.0;
      double best_value = -1.0;
      const double step = kTwoPi / kPhaseGridPoints;
      for (int i = 0; i < kPhaseGridPoints; ++i) {
        const double v = objective(step * i);
        if (v > best_value) {
          best_value = v;
          best_theta = step * i;
        }
      }

      // Golden-section refinement inside the neighbouring grid cells.
      const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
      double a = best_theta - step, b = best_theta + step;
      double c = b - ratio * (b - a), d = a + ratio * (b - a);
      double fc = objective(c), fd = objective(d);
      for (int i = 0; i < 60; ++i) {
        if (fc > fd) {
          b = d;
          d = c;
          fd = fc;
          c = b - ratio * (b - a);
          fc = objective(c);
        } else {
          a = c;
          c = d;
          fc = fd;
          d = a + ratio * (b - a);
          fd = objective(d);
        }
      }
      for (auto [theta, value] : {std::pair{c, fc}, std::pair{d, fd}})
        if (value > best_value) {
          best_value = value;
          best_theta = theta;
        }

      if (best_value > incumbent + 1e-12 * std::max(1.0, std::abs(incumbent))) {
        current(n) = std::polar(1.0, best_theta);
        cross = rest + current(n) * contribution[n];
        improved = true;
      }
    }
    if (!improved) break;
  }
  return current;
}

BenchResult alternating_optimize(const ChannelSet& ch, const SystemConfig& cfg, int outer_iters,
                                 double tol, Beamformer beamformer) {
  ch.check(cfg);
  const double pt = cfg.pt_linear();
  BenchResult result;
  result.action = init_action(cfg);
  double rate = sum_rate(result.action.G, result.action.phases, ch, cfg.noise_power);

  for (int it = 0; it < outer_iters; ++it) {
    const CMatrix heff = effective_channels(result.action.phases, ch);
    CMatrix G = result.action.G;
    double g_rate = rate;
    auto offer = [&](const CMatrix& candidate) {
      const double r = sum_rate_effective(heff, candidate, cfg.noise_power);
      if (r > g_rate) {
        g_rate = r;
        G = candidate;
      }
    };
    if (beamformer == Beamformer::Wmmse) {
      offer(wmmse(heff, pt, cfg.noise_power, kWmmseMaxIters, kWmmseTol, &result.action.G).G);
      offer(wmmse(heff, pt, cfg.noise_power).G);
    } else {
      try {
        offer(zf_beamforming(heff, pt));
      } catch (const ZfInfeasible&) {
      }
    }
    result.action.G = G;
    result.action.phases = phase_ascent(G, result.action.phases, ch, cfg, 1);
    const double next = sum_rate(result.action.G, result.action.phases, ch, cfg.noise_power);
    result.trace.push_back(next);
    result.iterations = it + 1;
    const bool converged = next - rate < tol;
    rate = next;
    if (converged) break;
  }
  result.sum_rate = rate;
  return result;
}

bool oracle_tractable(int N, int levels) {
  return N >= 1 && levels >= 1 && static_cast<double>(N) * std::log2(levels) <= 20.0 + 1e-12;
}

BenchResult brute_force_oracle(const ChannelSet& ch, const SystemConfig& cfg, int levels) {
  ch.check(cfg);
  if (!oracle_tractable(cfg.N, levels))
    throw BudgetError("brute_force_oracle: N * log2(L) exceeds 20");
  const double pt = cfg.pt_linear();

  CVector grid(levels);
  for (int l = 0; l < levels; ++l) grid(l) = std::polar(1.0, kTwoPi * l / levels);

  std::vector<int> index(static_cast<std::size_t>(cfg.N), 0);
  CVector phases(cfg.N);
  BenchResult result;
  result.sum_rate = -1.0;
  bool done = false;
  while (!done) {
    for (int n = 0; n < cfg.N; ++n) phases(n) = grid(index[n]);
    const WmmseResult w = wmmse(effective_channels(phases, ch), pt, cfg.noise_power);
    ++result.iterations;
    if (w.sum_rate > result.sum_rate) {
      result.sum_rate = w.sum_rate;
      result.action = {w.G, phases};
    }
    result.trace.push_back(result.sum_rate);

    // Odometer increment, last element fastest, so visits are in lexicographic order.
    done = true;
    for (int n = cfg.N - 1; n >= 0; --n) {
      if (++index[n] < levels) {
        done = false;
        break;
      }
      index[n] = 0;
    }
  }
  return result;
}

BenchResult random_phase_baseline(const ChannelSet& ch, const SystemConfig& cfg, int draws,
                                  Rng& rng) {
  ch.check(cfg);
  if (draws < 1) throw std::invalid_argument("random_phase_baseline: draws must be >= 1");
  std::uniform_real_distribution<double> angle(0.0, kTwoPi);
  BenchResult result;
  result.sum_rate = -1.0;
  CVector phases(cfg.N);
  for (int d = 0; d < draws; ++d) {
    for (int n = 0; n < cfg.N; ++n) phases(n) = std::polar(1.0, angle(rng));
    const WmmseResult w = wmmse(effective_channels(phases, ch), cfg.pt_linear(), cfg.noise_power);
    ++result.iterations;
    if (w.sum_rate > result.sum_rate) {
      result.sum_rate = w.sum_rate;
      result.action = {w.G, phases};
    }
    result.trace.push_back(result.sum_rate);
  }
  return result;
}

}  // namespace ris::bench
