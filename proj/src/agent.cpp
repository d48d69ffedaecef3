#include "ris/agent.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "ris/metrics.hpp"

namespace ris {

Hyperparams Hyperparams::desk_scale() {
  Hyperparams hp;
  hp.episodes = 20;
  hp.steps_per_episode = 5000;
  return hp;
}

void Hyperparams::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in [0, 1]");
  if (!(tau_c > 0.0 && tau_c <= 1.0) || !(tau_a > 0.0 && tau_a <= 1.0))
    throw std::invalid_argument("tau must lie in (0, 1]");
  if (!(mu_c > 0.0) || !(mu_a > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (!(lambda_c >= 0.0 && lambda_c < 1.0) || !(lambda_a >= 0.0 && lambda_a < 1.0))
    throw std::invalid_argument("decay rates must lie in [0, 1)");
  if (buffer_capacity == 0 || episodes <= 0 || steps_per_episode <= 0 || minibatch <= 0 ||
      sync_every <= 0)
    throw std::invalid_argument("buffer, episode, step, minibatch and sync counts must be positive");
  if (static_cast<std::size_t>(minibatch) > buffer_capacity)
    throw std::invalid_argument("minibatch must not exceed buffer capacity");
  if (!(exploration_std >= 0.0)) throw std::invalid_argument("exploration_std must be >= 0");
  if (!(exploration_decay > 0.0 && exploration_decay <= 1.0))
    throw std::invalid_argument("exploration_decay must lie in (0, 1]");
  if (warmup_steps < -1) throw std::invalid_argument("warmup_steps must be >= 0 (or -1 for auto)");
  if (hidden_width < 0) throw std::invalid_argument("hidden_width must be >= 0");
  if (early_stop_window < 0) throw std::invalid_argument("early_stop_window must be >= 0");
}

int auto_hidden_width(const SystemConfig& cfg) {
  const int need = 4 * std::max(cfg.state_dim(), cfg.action_dim());
  int width = 1;
  while (width < need) width *= 2;
  return width;
}

// ---------------------------------------------------------------------------

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer capacity must be positive");
}

void ReplayBuffer::push(Experience e) {
  if (items_.size() < capacity_) {
    items_.push_back(std::move(e));
    return;
  }
  items_[cursor_] = std::move(e);
  cursor_ = (cursor_ + 1) % capacity_;
}

std::vector<const Experience*> ReplayBuffer::sample(std::size_t count, Rng& rng) const {
  if (items_.empty()) throw std::logic_error("cannot sample from an empty replay buffer");
  std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
  std::vector<const Experience*> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(&items_[pick(rng)]);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

nn::Architecture actor_architecture(const SystemConfig& cfg, int width) {
  nn::Architecture arch;
  arch.input_dim = cfg.state_dim();
  arch.hidden = {width, width};
  arch.output_dim = cfg.action_dim();
  arch.head = nn::Head::Tanh;
  return arch;
}

nn::Architecture critic_architecture(const SystemConfig& cfg, int width) {
  nn::Architecture arch;
  arch.input_dim = cfg.state_dim();
  arch.hidden = {width, width};
  arch.output_dim = 1;
  arch.head = nn::Head::Linear;
  arch.aux_layer = 1;  // action enters at the second hidden layer
  arch.aux_dim = cfg.action_dim();
  return arch;
}

int width_for(const SystemConfig& cfg, const Hyperparams& hp) {
  return hp.hidden_width > 0 ? hp.hidden_width : auto_hidden_width(cfg);
}

const SystemConfig& validated(const SystemConfig& cfg, const Hyperparams& hp) {
  cfg.validate();
  hp.validate();
  return cfg;
}

}  // namespace

DdpgAgent::DdpgAgent(const SystemConfig& cfg, const Hyperparams& hp, Rng& rng)
    : cfg_(validated(cfg, hp)),
      hp_(hp),
      actor_train_(actor_architecture(cfg, width_for(cfg, hp)), rng),
      actor_target_(actor_train_),
      critic_train_(critic_architecture(cfg, width_for(cfg, hp)), rng),
      critic_target_(critic_train_),
      actor_opt_(nn::AdamState::for_size(actor_train_.parameter_count(), hp.mu_a, hp.lambda_a)),
      critic_opt_(nn::AdamState::for_size(critic_train_.parameter_count(), hp.mu_c, hp.lambda_c)),
      whiten_(cfg.state_dim()),
      buffer_(hp.buffer_capacity),
      exploration_std_(hp.exploration_std),
      best_action_(init_action(cfg)) {}

ActionSelection DdpgAgent::select_action(const StateVector& state, Rng& rng, bool explore) {
  const RVector input = nn::whiten_apply(whiten_, state.values, true);
  ActionVector raw{actor_train_.forward(input, nn::Mode::Eval).output.col(0)};
  if (explore && exploration_std_ > 0.0) {
    std::normal_distribution<double> noise(0.0, exploration_std_);
    for (Eigen::Index i = 0; i < raw.values.size(); ++i) raw.values(i) += noise(rng);
  }
  JointAction projected = decode_action(raw, cfg_);
  return {std::move(raw), std::move(projected)};
}

double DdpgAgent::critic_target_value(double r, const StateVector& s_next) const {
  const RMatrix input = nn::whiten_batch(whiten_, s_next.values);
  const RMatrix next_action = actor_target_.forward(input, nn::Mode::Eval).output;
  const double q = critic_target_.forward(input, &next_action, nn::Mode::Eval).output(0, 0);
  return r + hp_.gamma * q;
}

RMatrix DdpgAgent::whitened_states(const std::vector<const Experience*>& batch, bool next) const {
  RMatrix states(cfg_.state_dim(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t j = 0; j < batch.size(); ++j)
    states.col(static_cast<Eigen::Index>(j)) = next ? batch[j]->s_next : batch[j]->s;
  return nn::whiten_batch(whiten_, states);
}

double DdpgAgent::update_critic(const std::vector<const Experience*>& batch) {
  if (batch.size() < static_cast<std::size_t>(hp_.minibatch))
    throw std::logic_error("update_critic: minibatch smaller than W");
  const auto width = static_cast<Eigen::Index>(batch.size());

  const RMatrix states = whitened_states(batch, false);
  const RMatrix next_states = whitened_states(batch, true);
  RMatrix actions(cfg_.action_dim(), width);
  Eigen::RowVectorXd rewards(width);
  for (Eigen::Index j = 0; j < width; ++j) {
    actions.col(j) = batch[j]->a;
    rewards(j) = batch[j]->r;
  }

  const RMatrix next_actions = actor_target_.forward(next_states, nn::Mode::Train).output;
  const RMatrix next_q = critic_target_.forward(next_states, &next_actions, nn::Mode::Train).output;
  const Eigen::RowVectorXd targets = rewards + hp_.gamma * next_q.row(0);

  const nn::ForwardPass pass = critic_train_.forward(states, &actions, nn::Mode::Train);
  const Eigen::RowVectorXd td = pass.output.row(0) - targets;
  const double loss = td.squaredNorm() / static_cast<double>(width);

  const RMatrix d_out = (2.0 / static_cast<double>(width)) * td;
  const nn::Gradients grads = critic_train_.backward(pass, d_out, {.params = true, .input = false});
  critic_train_.update_running_stats(pass);
  RVector params = critic_train_.parameters();
  nn::adam_step(params, grads.params, critic_opt_);
  critic_train_.set_parameters(params);
  return loss;
}

double DdpgAgent::update_actor(const std::vector<const Experience*>& batch) {
  if (batch.size() < static_cast<std::size_t>(hp_.minibatch))
    throw std::logic_error("update_actor: minibatch smaller than W");
  const auto width = static_cast<double>(batch.size());
  const RMatrix states = whitened_states(batch, false);

  const nn::ForwardPass actor_pass = actor_train_.forward(states, nn::Mode::Train);
  const nn::DenseNet& critic =
      hp_.policy_critic == PolicyCritic::Target ? critic_target_ : critic_train_;
  const nn::ForwardPass critic_pass = critic.forward(states, &actor_pass.output, nn::Mode::Train);
  const double objective = critic_pass.output.mean();

  const RMatrix d_q = RMatrix::Constant(1, critic_pass.output.cols(), 1.0 / width);
  const nn::Gradients critic_grads = critic.backward(critic_pass, d_q, {.params = false, .input = false});
  // Descend on -objective.
  const nn::Gradients actor_grads =
      actor_train_.backward(actor_pass, -critic_grads.aux, {.params = true, .input = false});
  actor_train_.update_running_stats(actor_pass);
  RVector params = actor_train_.parameters();
  nn::adam_step(params, actor_grads.params, actor_opt_);
  actor_train_.set_parameters(params);
  return objective;
}

void DdpgAgent::soft_update() {
  nn::soft_update(critic_target_, critic_train_, hp_.tau_c);
  nn::soft_update(actor_target_, actor_train_, hp_.tau_a);
}

EpisodeLog DdpgAgent::run_episode(const ChannelSet& channels, Rng& rng) {
  channels.check(cfg_);
  EpisodeLog log;
  log.rewards.reserve(static_cast<std::size_t>(hp_.steps_per_episode));
  const auto warmup = static_cast<std::size_t>(std::max(hp_.effective_warmup(), hp_.minibatch));

  StateVector state = build_state(init_action(cfg_), channels, cfg_);
  std::optional<double> episode_best;
  int last_improvement = 0;

  for (int t = 0; t < hp_.steps_per_episode; ++t) {
    ActionSelection sel = select_action(state, rng, true);
    StepResult step = env_step(sel.projected, channels, cfg_);
    buffer_.push({state.values, sel.raw.values, step.reward, step.next_state.values});

    if (buffer_.size() >= warmup) {
      const auto batch = buffer_.sample(static_cast<std::size_t>(hp_.minibatch), rng);
      update_critic(batch);
      update_actor(batch);
      ++updates_;
      if (updates_ % static_cast<std::uint64_t>(hp_.sync_every) == 0) soft_update();
    }

    log.rewards.push_back(step.reward);
    if (!episode_best || step.reward > *episode_best + hp_.early_stop_tol) last_improvement = t;
    if (!episode_best || step.reward > *episode_best) episode_best = step.reward;
    if (!best_reward_ || step.reward > *best_reward_) {
      best_reward_ = step.reward;
      best_action_ = sel.projected;
    }
    state = std::move(step.next_state);

    if (hp_.early_stop_window > 0 && t - last_improvement >= hp_.early_stop_window) {
      log.stopped_early = true;
      break;
    }
  }
  log.best_reward = episode_best.value_or(0.0);
  exploration_std_ *= hp_.exploration_decay;
  return log;
}

// ---------------------------------------------------------------------------

namespace {

template <typename ChannelFor>
RunSummary run_loop(DdpgAgent& agent, Rng& rng, ChannelFor&& channel_for) {
  const auto start = std::chrono::steady_clock::now();
  RunSummary summary;
  summary.config = agent.config();
  summary.hyper = agent.hyperparams();
  summary.seed = agent.config().seed;

  std::optional<double> best;
  for (int ep = 0; ep < agent.hyperparams().episodes; ++ep) {
    const ChannelSet channels = channel_for(ep);
    EpisodeLog log = agent.run_episode(channels, rng);
    summary.episode_lengths.push_back(static_cast<int>(log.rewards.size()));
    const std::optional<double> before = best;
    for (double r : log.rewards) {
      summary.instant_rewards.push_back(r);
      if (!best || r > *best) best = r;
      summary.best_rewards.push_back(*best);
    }
    if (best && (!before || *best > *before)) summary.best_episode = ep;
  }
  summary.average_rewards = average_reward(summary.instant_rewards);
  summary.best_sum_rate = agent.best_reward().value_or(0.0);
  summary.best_action = agent.best_action();

  std::ostringstream actor_bytes, critic_bytes;
  nn::save_checkpoint(agent.actor(), actor_bytes);
  nn::save_checkpoint(agent.critic(), critic_bytes);
  summary.actor_checkpoint = actor_bytes.str();
  summary.critic_checkpoint = critic_bytes.str();
  summary.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
  return summary;
}

}  // namespace

RunSummary train(DdpgAgent& agent, Rng& rng) {
  return run_loop(agent, rng, [&](int) { return generate_channels(agent.config(), rng); });
}

RunSummary train(const SystemConfig& cfg, const Hyperparams& hp, Rng& rng) {
  DdpgAgent agent(cfg, hp, rng);
  return train(agent, rng);
}

RunSummary optimize_for_channels(DdpgAgent& agent, const ChannelSet& channels, Rng& rng) {
  channels.check(agent.config());
  return run_loop(agent, rng, [&](int) { return channels; });
}

RunSummary optimize_for_channels(const ChannelSet& channels, const SystemConfig& cfg,
                                 const Hyperparams& hp, Rng& rng) {
  DdpgAgent agent(cfg, hp, rng);
  return optimize_for_channels(agent, channels, rng);
}

}  // namespace ris
