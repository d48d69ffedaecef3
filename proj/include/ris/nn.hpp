#pragma once

// Dense feed-forward networks with hand-written backpropagation.
//
// Samples are stored column-wise: an input batch is (input_dim x batch).
// Hidden layers apply affine -> batch-norm -> tanh; the output layer is
// affine followed by tanh (Head::Tanh) or nothing (Head::Linear). An optional
// auxiliary input is concatenated below the previous activation at a chosen
// layer, which is how the critic receives the action.

#include <cstdint>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace ris::nn {

using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;
using Rng = std::mt19937_64;

class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

enum class Mode { Train, Eval };
enum class Head { Tanh, Linear };

struct Architecture {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  Head head = Head::Linear;
  int aux_layer = -1;  // layer whose input receives the auxiliary block, -1 for none
  int aux_dim = 0;

  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int layer_input_dim(int layer) const;
  int layer_output_dim(int layer) const;
  void validate() const;
};

struct DenseLayer {
  RMatrix weight;  // out x in
  RVector bias;
  bool batch_norm = false;
  bool activation = false;
  RVector gamma, beta;                  // batch-norm scale/shift
  RVector running_mean, running_var;    // batch-norm inference statistics
};

struct LayerCache {
  RMatrix input;     // concatenated layer input
  RMatrix xhat;      // normalized pre-activation (batch-norm layers)
  RVector inv_std;   // 1/sqrt(var + eps) used for xhat
  RVector batch_mean;
  RVector batch_var;
  RMatrix output;    // post-activation
};

struct ForwardPass {
  RMatrix output;
  std::uint64_t stamp = 0;
  Mode mode = Mode::Eval;
  std::vector<LayerCache> layers;
};

struct Gradients {
  RVector params;  // same order as DenseNet::parameters(); empty unless requested
  RMatrix input;   // empty unless requested
  RMatrix aux;
};

/// Which gradients backward() materializes. The actor update only needs the
/// critic's action gradient, and nobody needs the input gradient in training.
struct GradientRequest {
  bool params = true;
  bool input = true;
};

class DenseNet {
 public:
  static constexpr double kBatchNormEps = 1e-7;

  /// Random init: weights and biases uniform on +-1/sqrt(fan_in), gamma=1, beta=0.
  DenseNet(const Architecture& arch, Rng& rng);
  /// Adopts explicit layers; shapes must match the architecture.
  DenseNet(const Architecture& arch, std::vector<DenseLayer> layers);

  DenseNet(const DenseNet& other);
  DenseNet& operator=(const DenseNet& other);
  DenseNet(DenseNet&&) noexcept = default;
  DenseNet& operator=(DenseNet&&) noexcept = default;

  const Architecture& architecture() const { return arch_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }
  int input_dim() const { return arch_.input_dim; }
  int output_dim() const { return arch_.output_dim; }

  ForwardPass forward(const RMatrix& input, const RMatrix* aux, Mode mode) const;
  ForwardPass forward(const RMatrix& input, Mode mode) const { return forward(input, nullptr, mode); }

  /// Gradients of sum(output_grad .* output) with respect to parameters and inputs.
  Gradients backward(const ForwardPass& pass, const RMatrix& output_grad,
                     GradientRequest request = {}) const;

  Eigen::Index parameter_count() const;
  RVector parameters() const;
  void set_parameters(const RVector& flat);

  /// Running batch-norm statistics, flattened (mean then var per layer).
  RVector buffers() const;
  void set_buffers(const RVector& flat);

  /// Folds the batch statistics of a train-mode pass into the running stats.
  void update_running_stats(const ForwardPass& pass, double momentum = 0.99);

  std::uint64_t stamp() const { return stamp_; }

 private:
  friend void soft_update(DenseNet& target, const DenseNet& source, double tau);

  void touch();

  Architecture arch_;
  std::vector<DenseLayer> layers_;
  std::uint64_t stamp_;
};

/// theta_target <- tau * theta_source + (1 - tau) * theta_target, running stats included.
void soft_update(DenseNet& target, const DenseNet& source, double tau);

struct AdamState {
  RVector m;
  RVector v;
  std::uint64_t step = 0;
  double base_lr = 1e-3;
  double decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_size(Eigen::Index n, double base_lr, double decay);
};

/// base_lr * (1 - decay)^t.
double lr_current(const AdamState& opt, std::uint64_t t);

/// One bias-corrected Adam update at the learning rate lr_current(opt, opt.step).
void adam_step(RVector& params, const RVector& grads, AdamState& opt);

struct WhitenState {
  RVector mean;
  RVector var;
  std::uint64_t count = 0;
  double epsilon = 1e-8;
  double momentum = 0.99;

  explicit WhitenState(Eigen::Index dim = 0);
};

/// Per-feature standardization with running moments. With update=true the
/// sample is folded in first; early samples use the exact running mean and
/// variance until 1/count drops below 1 - momentum.
RVector whiten_apply(WhitenState& ws, const RVector& x, bool update);
/// Standardizes every column with the current moments; no update.
RMatrix whiten_batch(const WhitenState& ws, const RMatrix& xs);

/// Binary checkpoint, see README for the layout.
void save_checkpoint(const DenseNet& net, std::ostream& os);
DenseNet load_checkpoint(std::istream& is);

}  // namespace ris::nn
