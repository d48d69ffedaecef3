#pragma once

// Classical baselines for the joint beamforming / phase-shift problem and a
// brute-force phase-grid oracle for tiny instances.

#include <stdexcept>
#include <vector>

#include "ris/env.hpp"

namespace ris::bench {

/// The exhaustive search would exceed its enumeration budget.
class BudgetError : public std::length_error {
 public:
  using std::length_error::length_error;
};

/// The stacked effective channel is rank deficient, so ZF cannot null interference.
class ZfInfeasible : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct BenchResult {
  JointAction action;
  double sum_rate = 0.0;
  int iterations = 0;
  std::vector<double> trace;  // objective after each iteration
};

struct WmmseResult {
  CMatrix G;
  double sum_rate = 0.0;
  int iterations = 0;
  std::vector<double> trace;  // sum rate of the initial point, then after every iteration
};

inline constexpr int kWmmseMaxIters = 200;
inline constexpr double kWmmseTol = 1e-6;

/// Sum-rate WMMSE on fixed effective channels heff (K x M). Starts from init
/// when given (scaled down if it exceeds the budget), otherwise from the
/// better of MRT and ZF. Returns the best iterate; trace(G G^H) <= pt.
WmmseResult wmmse(const CMatrix& heff, double pt, double noise_power,
                  int max_iters = kWmmseMaxIters, double tol = kWmmseTol,
                  const CMatrix* init = nullptr);

inline CMatrix wmmse_beamforming(const CMatrix& heff, double pt, double noise_power,
                                 int max_iters = kWmmseMaxIters, double tol = kWmmseTol) {
  return wmmse(heff, pt, noise_power, max_iters, tol).G;
}

/// Maximum-ratio transmission with equal per-user power.
CMatrix mrt_beamforming(const CMatrix& heff, double pt);

/// Pseudo-inverse directions, unit-normalized per user, equal power P_t / K.
/// Throws ZfInfeasible when heff does not have full row rank.
CMatrix zf_beamforming(const CMatrix& heff, double pt);

inline constexpr int kPhaseGridPoints = 64;

/// Incumbent-inclusive coordinate ascent over the RIS phases with G fixed.
/// Each coordinate is searched on a 64-point grid, refined by golden section.
/// Stops after `sweeps` passes or when a full pass yields no improvement.
CVector phase_ascent(const CMatrix& G, const CVector& phases, const ChannelSet& ch,
                     const SystemConfig& cfg, int sweeps = 1);

enum class Beamformer { Wmmse, Zf };

/// Alternates the beamformer (phases fixed) and phase_ascent (G fixed),
/// starting from init_action. The trace is non-decreasing.
BenchResult alternating_optimize(const ChannelSet& ch, const SystemConfig& cfg,
                                 int outer_iters = 50, double tol = 1e-6,
                                 Beamformer beamformer = Beamformer::Wmmse);

/// Largest phase-grid size admitted by brute_force_oracle: N * log2(L) <= 20.
bool oracle_tractable(int N, int levels);

/// Enumerates all L^N grid phase vectors (phi = exp(j 2 pi l / L)), each with
/// converged WMMSE. Ties keep the lexicographically smallest grid index.
BenchResult brute_force_oracle(const ChannelSet& ch, const SystemConfig& cfg, int levels);

/// Best of `draws` uniformly random phase vectors, each with WMMSE.
BenchResult random_phase_baseline(const ChannelSet& ch, const SystemConfig& cfg, int draws,
                                  Rng& rng);

}  // namespace ris::bench
