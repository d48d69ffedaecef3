#include "ris/nn.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

namespace ris::nn {

namespace {

std::uint64_t next_stamp() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

}  // namespace

int Architecture::layer_input_dim(int layer) const {
  int dim = layer == 0 ? input_dim : hidden[layer - 1];
  if (layer == aux_layer) dim += aux_dim;
  return dim;
}

int Architecture::layer_output_dim(int layer) const {
  return layer < static_cast<int>(hidden.size()) ? hidden[layer] : output_dim;
}

void Architecture::validate() const {
  if (input_dim <= 0 || output_dim <= 0)
    throw std::invalid_argument("network input/output dims must be positive");
  if (aux_layer >= num_layers() || aux_layer < -1)
    throw std::invalid_argument("aux_layer out of range");
  if ((aux_layer >= 0) != (aux_dim > 0))
    throw std::invalid_argument("aux_layer and aux_dim must be set together");
  const int widest = std::max(input_dim, output_dim);
  for (int w : hidden)
    if (w <= widest)
      throw std::invalid_argument("hidden width " + std::to_string(w) +
                                  " must exceed input and output dims (" +
                                  std::to_string(widest) + ")");
}

DenseNet::DenseNet(const Architecture& arch, Rng& rng) : arch_(arch), stamp_(next_stamp()) {
  arch_.validate();
  const int hidden_count = static_cast<int>(arch_.hidden.size());
  for (int l = 0; l < arch_.num_layers(); ++l) {
    const int in = arch_.layer_input_dim(l);
    const int out = arch_.layer_output_dim(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    DenseLayer layer;
    layer.weight.resize(out, in);
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) layer.weight(i, j) = uni(rng);
    layer.bias.resize(out);
    for (Eigen::Index i = 0; i < out; ++i) layer.bias(i) = uni(rng);
    const bool is_hidden = l < hidden_count;
    layer.batch_norm = is_hidden;
    layer.activation = is_hidden || arch_.head == Head::Tanh;
    if (layer.batch_norm) {
      layer.gamma = RVector::Ones(out);
      layer.beta = RVector::Zero(out);
      layer.running_mean = RVector::Zero(out);
      layer.running_var = RVector::Ones(out);
    }
    layers_.push_back(std::move(layer));
  }
}

DenseNet::DenseNet(const Architecture& arch, std::vector<DenseLayer> layers)
    : arch_(arch), layers_(std::move(layers)), stamp_(next_stamp()) {
  arch_.validate();
  if (static_cast<int>(layers_.size()) != arch_.num_layers())
    throw std::invalid_argument("layer count does not match architecture");
  for (int l = 0; l < arch_.num_layers(); ++l) {
    const auto& layer = layers_[l];
    const Eigen::Index out = arch_.layer_output_dim(l);
    if (layer.weight.rows() != out || layer.weight.cols() != arch_.layer_input_dim(l) ||
        layer.bias.size() != out)
      throw std::invalid_argument("layer " + std::to_string(l) + " shape mismatch");
    if (layer.batch_norm &&
        (layer.gamma.size() != out || layer.beta.size() != out ||
         layer.running_mean.size() != out || layer.running_var.size() != out))
      throw std::invalid_argument("layer " + std::to_string(l) + " batch-norm shape mismatch");
  }
}

DenseNet::DenseNet(const DenseNet& other)
    : arch_(other.arch_), layers_(other.layers_), stamp_(next_stamp()) {}

DenseNet& DenseNet::operator=(const DenseNet& other) {
  if (this != &other) {
    arch_ = other.arch_;
    layers_ = other.layers_;
    touch();
  }
  return *this;
}

void DenseNet::touch() { stamp_ = next_stamp(); }

ForwardPass DenseNet::forward(const RMatrix& input, const RMatrix* aux, Mode mode) const {
  if (input.rows() != arch_.input_dim)
    throw std::invalid_argument("forward: input has " + std::to_string(input.rows()) +
                                " rows, expected " + std::to_string(arch_.input_dim));
  if ((aux != nullptr) != (arch_.aux_layer >= 0))
    throw std::invalid_argument("forward: aux input must be given iff the net has one");
  if (aux && (aux->rows() != arch_.aux_dim || aux->cols() != input.cols()))
    throw std::invalid_argument("forward: aux input shape mismatch");

  const Eigen::Index batch = input.cols();
  ForwardPass pass;
  pass.stamp = stamp_;
  pass.mode = mode;
  pass.layers.resize(layers_.size());

  RMatrix current = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    LayerCache& cache = pass.layers[l];
    if (static_cast<int>(l) == arch_.aux_layer) {
      cache.input.resize(current.rows() + aux->rows(), batch);
      cache.input << current, *aux;
    } else {
      cache.input = std::move(current);
    }
    RMatrix z = layer.weight * cache.input;
    z.colwise() += layer.bias;

    if (layer.batch_norm) {
      if (mode == Mode::Train) {
        cache.batch_mean = z.rowwise().mean();
        z.colwise() -= cache.batch_mean;
        cache.batch_var = z.array().square().rowwise().mean();
      } else {
        z.colwise() -= layer.running_mean;
        cache.batch_var = layer.running_var;
      }
      cache.inv_std = (cache.batch_var.array() + kBatchNormEps).rsqrt();
      cache.xhat = cache.inv_std.asDiagonal() * z;
      z = layer.gamma.asDiagonal() * cache.xhat;
      z.colwise() += layer.beta;
    }
    if (layer.activation) z = z.array().tanh();
    cache.output = z;
    current = std::move(z);
  }
  pass.output = std::move(current);
  return pass;
}

Gradients DenseNet::backward(const ForwardPass& pass, const RMatrix& output_grad,
                             GradientRequest request) const {
  if (pass.stamp != stamp_ || pass.layers.size() != layers_.size())
    throw ContractError("backward: forward pass does not belong to this network state");
  if (output_grad.rows() != pass.output.rows() || output_grad.cols() != pass.output.cols())
    throw std::invalid_argument("backward: output gradient shape mismatch");

  const Eigen::Index batch = pass.output.cols();
  Gradients grads;
  if (request.params) grads.params.resize(parameter_count());

  std::vector<Eigen::Index> offsets(layers_.size());
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    offsets[l] = offset;
    const auto& layer = layers_[l];
    offset += layer.weight.size() + layer.bias.size();
    if (layer.batch_norm) offset += layer.gamma.size() + layer.beta.size();
  }

  RMatrix delta = output_grad;
  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const DenseLayer& layer = layers_[l];
    const LayerCache& cache = pass.layers[l];
    if (layer.activation) delta = delta.array() * (1.0 - cache.output.array().square());

    const Eigen::Index out = layer.bias.size();
    double* base = request.params ? grads.params.data() + offsets[l] : nullptr;

    if (layer.batch_norm) {
      if (base) {
        double* bn = base + layer.weight.size() + out;
        Eigen::Map<RVector>(bn, out) = delta.cwiseProduct(cache.xhat).rowwise().sum();
        Eigen::Map<RVector>(bn + out, out) = delta.rowwise().sum();
      }
      RMatrix d_xhat = layer.gamma.asDiagonal() * delta;
      if (pass.mode == Mode::Train) {
        const RVector sum_dx = d_xhat.rowwise().sum();
        const RVector sum_dx_xhat = d_xhat.cwiseProduct(cache.xhat).rowwise().sum();
        const double b = static_cast<double>(batch);
        RMatrix centered = b * d_xhat;
        centered.colwise() -= sum_dx;
        centered -= sum_dx_xhat.asDiagonal() * cache.xhat;
        delta = (cache.inv_std / b).asDiagonal() * centered;
      } else {
        delta = cache.inv_std.asDiagonal() * d_xhat;
      }
    }

    if (base) {
      Eigen::Map<RMatrix>(base, layer.weight.rows(), layer.weight.cols()).noalias() =
          delta * cache.input.transpose();
      Eigen::Map<RVector>(base + layer.weight.size(), out) = delta.rowwise().sum();
    }
    const bool need_input = l > 0 || request.input || l == arch_.aux_layer;
    if (!need_input) break;
    RMatrix d_input = layer.weight.transpose() * delta;

    if (l == arch_.aux_layer) {
      const Eigen::Index main_rows = d_input.rows() - arch_.aux_dim;
      grads.aux = d_input.bottomRows(arch_.aux_dim);
      delta = d_input.topRows(main_rows);
    } else {
      delta = std::move(d_input);
    }
    if (l == 0 && request.input) grads.input = std::move(delta);
  }
  return grads;
}

Eigen::Index DenseNet::parameter_count() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_) {
    n += layer.weight.size() + layer.bias.size();
    if (layer.batch_norm) n += layer.gamma.size() + layer.beta.size();
  }
  return n;
}

RVector DenseNet::parameters() const {
  RVector flat(parameter_count());
  Eigen::Index pos = 0;
  auto put = [&](const auto& block) {
    flat.segment(pos, block.size()) = Eigen::Map<const RVector>(block.data(), block.size());
    pos += block.size();
  };
  for (const auto& layer : layers_) {
    put(layer.weight);
    put(layer.bias);
    if (layer.batch_norm) {
      put(layer.gamma);
      put(layer.beta);
    }
  }
  return flat;
}

void DenseNet::set_parameters(const RVector& flat) {
  if (flat.size() != parameter_count())
    throw std::invalid_argument("set_parameters: size mismatch");
  Eigen::Index pos = 0;
  auto take = [&](auto& block) {
    Eigen::Map<RVector>(block.data(), block.size()) = flat.segment(pos, block.size());
    pos += block.size();
  };
  for (auto& layer : layers_) {
    take(layer.weight);
    take(layer.bias);
    if (layer.batch_norm) {
      take(layer.gamma);
      take(layer.beta);
    }
  }
  touch();
}

RVector DenseNet::buffers() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers_)
    if (layer.batch_norm) n += 2 * layer.running_mean.size();
  RVector flat(n);
  Eigen::Index pos = 0;
  for (const auto& layer : layers_) {
    if (!layer.batch_norm) continue;
    const Eigen::Index out = layer.running_mean.size();
    flat.segment(pos, out) = layer.running_mean;
    flat.segment(pos + out, out) = layer.running_var;
    pos += 2 * out;
  }
  return flat;
}

void DenseNet::set_buffers(const RVector& flat) {
  if (flat.size() != buffers().size()) throw std::invalid_argument("set_buffers: size mismatch");
  Eigen::Index pos = 0;
  for (auto& layer : layers_) {
    if (!layer.batch_norm) continue;
    const Eigen::Index out = layer.running_mean.size();
    layer.running_mean = flat.segment(pos, out);
    layer.running_var = flat.segment(pos + out, out);
    pos += 2 * out;
  }
  touch();
}

void DenseNet::update_running_stats(const ForwardPass& pass, double momentum) {
  if (pass.stamp != stamp_ || pass.layers.size() != layers_.size())
    throw ContractError("update_running_stats: forward pass does not belong to this network");
  if (pass.mode != Mode::Train) return;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    auto& layer = layers_[l];
    if (!layer.batch_norm) continue;
    layer.running_mean = momentum * layer.running_mean + (1.0 - momentum) * pass.layers[l].batch_mean;
    layer.running_var = momentum * layer.running_var + (1.0 - momentum) * pass.layers[l].batch_var;
  }
  touch();
}

void soft_update(DenseNet& target, const DenseNet& source, double tau) {
  const bool same_shape =
      target.layers_.size() == source.layers_.size() &&
      std::equal(target.layers_.begin(), target.layers_.end(), source.layers_.begin(),
                 [](const DenseLayer& a, const DenseLayer& b) {
                   return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
                          a.batch_norm == b.batch_norm;
                 });
  if (!same_shape) throw std::invalid_argument("soft_update: networks differ in shape");
  if (tau == 0.0) return;
  const double keep = 1.0 - tau;
  for (std::size_t l = 0; l < target.layers_.size(); ++l) {
    DenseLayer& t = target.layers_[l];
    const DenseLayer& s = source.layers_[l];
    t.weight = tau * s.weight + keep * t.weight;
    t.bias = tau * s.bias + keep * t.bias;
    if (!t.batch_norm) continue;
    t.gamma = tau * s.gamma + keep * t.gamma;
    t.beta = tau * s.beta + keep * t.beta;
    t.running_mean = tau * s.running_mean + keep * t.running_mean;
    t.running_var = tau * s.running_var + keep * t.running_var;
  }
  target.touch();
}

AdamState AdamState::for_size(Eigen::Index n, double base_lr, double decay) {
  AdamState s;
  s.m = RVector::Zero(n);
  s.v = RVector::Zero(n);
  s.base_lr = base_lr;
  s.decay = decay;
  return s;
}

double lr_current(const AdamState& opt, std::uint64_t t) {
  return opt.base_lr * std::pow(1.0 - opt.decay, static_cast<double>(t));
}

void adam_step(RVector& params, const RVector& grads, AdamState& opt) {
  if (params.size() != grads.size() || opt.m.size() != params.size() ||
      opt.v.size() != params.size())
    throw std::invalid_argument("adam_step: shape mismatch");
  const double lr = lr_current(opt, opt.step);
  ++opt.step;
  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(opt.beta1, t);
  const double c2 = 1.0 - std::pow(opt.beta2, t);
  const double b1 = opt.beta1, b2 = opt.beta2;
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double g = grads(i);
    const double m = b1 * opt.m(i) + (1.0 - b1) * g;
    const double v = b2 * opt.v(i) + (1.0 - b2) * g * g;
    opt.m(i) = m;
    opt.v(i) = v;
    params(i) -= lr * (m / c1) / (std::sqrt(v / c2) + opt.epsilon);
  }
}

WhitenState::WhitenState(Eigen::Index dim) : mean(RVector::Zero(dim)), var(RVector::Zero(dim)) {}

RVector whiten_apply(WhitenState& ws, const RVector& x, bool update) {
  if (x.size() != ws.mean.size()) throw std::invalid_argument("whiten_apply: length mismatch");
  if (update) {
    ++ws.count;
    const double alpha = std::max(1.0 - ws.momentum, 1.0 / static_cast<double>(ws.count));
    const RVector diff = x - ws.mean;
    const RVector incr = alpha * diff;
    ws.mean += incr;
    ws.var = (1.0 - alpha) * (ws.var + diff.cwiseProduct(incr));
  }
  return (x - ws.mean).array() / (ws.var.array().max(0.0) + ws.epsilon).sqrt();
}

RMatrix whiten_batch(const WhitenState& ws, const RMatrix& xs) {
  if (xs.rows() != ws.mean.size()) throw std::invalid_argument("whiten_batch: length mismatch");
  const RVector scale = (ws.var.array().max(0.0) + ws.epsilon).rsqrt();
  RMatrix out = xs;
  out.colwise() -= ws.mean;
  return scale.asDiagonal() * out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format is little-endian");

constexpr char kMagic[8] = {'R', 'I', 'S', 'N', 'N', '0', '0', '1'};

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: unexpected end of stream");
  return value;
}

void write_block(std::ostream& os, const double* data, Eigen::Index n) {
  os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
}

void read_block(std::istream& is, double* data, Eigen::Index n) {
  is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("checkpoint: truncated tensor data");
}

}  // namespace

void save_checkpoint(const DenseNet& net, std::ostream& os) {
  const Architecture& arch = net.architecture();
  os.write(kMagic, sizeof(kMagic));
  write_pod<std::int32_t>(os, arch.input_dim);
  write_pod<std::int32_t>(os, arch.output_dim);
  write_pod<std::int32_t>(os, arch.head == Head::Tanh ? 0 : 1);
  write_pod<std::int32_t>(os, arch.aux_layer);
  write_pod<std::int32_t>(os, arch.aux_dim);
  write_pod<std::int32_t>(os, static_cast<std::int32_t>(arch.hidden.size()));
  for (int w : arch.hidden) write_pod<std::int32_t>(os, w);
  for (const auto& layer : net.layers()) {
    write_pod<std::uint8_t>(os, layer.batch_norm ? 1 : 0);
    write_pod<std::uint8_t>(os, layer.activation ? 1 : 0);
    write_block(os, layer.weight.data(), layer.weight.size());
    write_block(os, layer.bias.data(), layer.bias.size());
    if (layer.batch_norm) {
      write_block(os, layer.gamma.data(), layer.gamma.size());
      write_block(os, layer.beta.data(), layer.beta.size());
      write_block(os, layer.running_mean.data(), layer.running_mean.size());
      write_block(os, layer.running_var.data(), layer.running_var.size());
    }
  }
  if (!os) throw std::runtime_error("checkpoint: write failed");
}

DenseNet load_checkpoint(std::istream& is) {
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic");
  Architecture arch;
  arch.input_dim = read_pod<std::int32_t>(is);
  arch.output_dim = read_pod<std::int32_t>(is);
  const auto head = read_pod<std::int32_t>(is);
  if (head != 0 && head != 1) throw std::runtime_error("checkpoint: bad head tag");
  arch.head = head == 0 ? Head::Tanh : Head::Linear;
  arch.aux_layer = read_pod<std::int32_t>(is);
  arch.aux_dim = read_pod<std::int32_t>(is);
  const auto hidden_count = read_pod<std::int32_t>(is);
  if (hidden_count < 0 || hidden_count > 64) throw std::runtime_error("checkpoint: bad layer count");
  for (int i = 0; i < hidden_count; ++i) arch.hidden.push_back(read_pod<std::int32_t>(is));
  arch.validate();

  std::vector<DenseLayer> layers;
  for (int l = 0; l < arch.num_layers(); ++l) {
    const int in = arch.layer_input_dim(l);
    const int out = arch.layer_output_dim(l);
    DenseLayer layer;
    layer.batch_norm = read_pod<std::uint8_t>(is) != 0;
    layer.activation = read_pod<std::uint8_t>(is) != 0;
    layer.weight.resize(out, in);
    layer.bias.resize(out);
    read_block(is, layer.weight.data(), layer.weight.size());
    read_block(is, layer.bias.data(), layer.bias.size());
    if (layer.batch_norm) {
      for (RVector* v : {&layer.gamma, &layer.beta, &layer.running_mean, &layer.running_var}) {
        v->resize(out);
        read_block(is, v->data(), out);
      }
    }
    layers.push_back(std::move(layer));
  }
  return DenseNet(arch, std::move(layers));
}

}  // namespace ris::nn
