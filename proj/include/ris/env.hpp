#pragma once

// System model of an RIS-assisted multiuser MISO downlink.
//
// A BS with M antennas serves K single-antenna users through an RIS with N
// passive elements. User k observes the composite channel
//
//     h~_k = h_{k,2}^T * diag(phases) * H1          (1 x M)
//
// and the BS precodes with G (M x K, column k = beamformer of user k).

#include <complex>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

namespace ris {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Raised when array dimensions do not agree with the system configuration.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct SystemConfig {
  int M = 4;                 // BS antennas
  int N = 4;                 // RIS elements
  int K = 4;                 // users
  double pt_db = 10.0;       // transmit power budget, dB relative to noise
  double noise_power = 1.0;  // sigma_n^2, linear
  std::uint64_t seed = 1;

  /// Linear transmit power, 10^(pt_db/10).
  double pt_linear() const;
  int state_dim() const;   // 2K + 2K^2 + 2N + 2MK + 2NM + 2KN
  int action_dim() const;  // 2MK + 2N

  /// Throws std::invalid_argument when M >= K >= 1, N >= 1, noise > 0 fails.
  void validate() const;
};

struct ChannelSet {
  CMatrix H1;  // N x M, BS -> RIS
  CMatrix H2;  // K x N, row k holds h_{k,2}^T (RIS -> user k)

  int M() const { return static_cast<int>(H1.cols()); }
  int N() const { return static_cast<int>(H1.rows()); }
  int K() const { return static_cast<int>(H2.rows()); }

  void check(const SystemConfig& cfg) const;
};

struct JointAction {
  CMatrix G;       // M x K beamformer
  CVector phases;  // N, diagonal of Phi
};

/// Real observation of length SystemConfig::state_dim().
struct StateVector {
  RVector values;
};

/// Flat real action: [Re(G) col-major | Im(G) col-major | Re(phases) | Im(phases)].
struct ActionVector {
  RVector values;
};

/// i.i.d. CN(0,1) entries for H1 and every h_{k,2}.
ChannelSet generate_channels(const SystemConfig& cfg, Rng& rng);

/// Row vector h~_k (length M) for a single user channel h_k2 (length N).
Eigen::RowVectorXcd effective_channel(const CVector& phases, const CMatrix& H1,
                                      const CVector& h_k2);

/// Stacked effective channels, K x M; row k is h~_k.
CMatrix effective_channels(const CVector& phases, const ChannelSet& ch);

/// SINR of user k (zero-based).
double sinr(const CMatrix& G, const CVector& phases, const ChannelSet& ch, int k,
            double noise_power);

/// Sum rate sum_k log2(1 + rho_k) in bit/s/Hz.
double sum_rate(const CMatrix& G, const CVector& phases, const ChannelSet& ch,
                double noise_power);

/// Sum rate directly from stacked effective channels (K x M).
double sum_rate_effective(const CMatrix& heff, const CMatrix& G, double noise_power);

/// Scales G so that trace(G G^H) == pt. An all-zero G is replaced by the
/// power-normalized identity beamformer.
CMatrix project_power(const CMatrix& G_raw, double pt);

/// Elementwise raw/|raw|; a zero entry maps to 1.
CVector project_phases(const CVector& raw);

ActionVector encode_action(const JointAction& a);

/// Unpacks and projects onto the feasible set. Throws ShapeError on a
/// length mismatch.
JointAction decode_action(const ActionVector& v, const SystemConfig& cfg);

/// Identity initialization: G = first K columns of I_M scaled to P_t, phases = 1.
JointAction init_action(const SystemConfig& cfg);

/// Observation layout, in order:
///   [0, 2K)            |Re(g_k^H g_k)|^2, |Im(g_k^H g_k)|^2 per user
///   [.., +2K^2)        |Re(h~_k g_n)|^2, |Im(h~_k g_n)|^2, k outer, n inner
///   [.., +2MK+2N)      encode_action(prev_action)
///   [.., +2NM)         Re/Im of H1, column-major, Re block then Im block
///   [.., +2KN)         Re/Im of H2 (K x N), column-major, Re block then Im block
StateVector build_state(const JointAction& prev_action, const ChannelSet& ch,
                        const SystemConfig& cfg);

struct StepResult {
  double reward;
  StateVector next_state;
};

StepResult env_step(const JointAction& action, const ChannelSet& ch,
                    const SystemConfig& cfg);

}  // namespace ris
