#pragma once

// DDPG optimizer for the joint beamformer / phase-shift design.
//
// The agent interacts with a fixed-CSI environment: every action is projected
// onto the feasible set before it reaches env_step, and the sum rate is the
// reward. Four networks are kept: training/target actor and critic.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ris/env.hpp"
#include "ris/nn.hpp"

namespace ris {

/// Which critic supplies grad_a q when updating the actor.
enum class PolicyCritic { Target, Train };

struct Hyperparams {
  double gamma = 0.99;
  double mu_c = 0.001;
  double mu_a = 0.001;
  double tau_c = 0.001;
  double tau_a = 0.001;
  double lambda_c = 0.00001;
  double lambda_a = 0.00001;
  std::size_t buffer_capacity = 100000;
  int episodes = 5000;
  int steps_per_episode = 20000;
  int minibatch = 16;
  int sync_every = 1;

  double exploration_std = 0.1;
  double exploration_decay = 0.95;  // multiplicative, per episode
  int warmup_steps = -1;            // -1 selects 2 * minibatch
  int hidden_width = 0;             // 0 selects the automatic width
  PolicyCritic policy_critic = PolicyCritic::Target;
  int early_stop_window = 0;        // 0 disables convergence stopping
  double early_stop_tol = 1e-4;

  /// Default hyperparameters with 20 episodes of 5000 steps.
  static Hyperparams desk_scale();

  int effective_warmup() const { return warmup_steps < 0 ? 2 * minibatch : warmup_steps; }
  void validate() const;
};

/// Smallest power of two >= 4 * max(state_dim, action_dim).
int auto_hidden_width(const SystemConfig& cfg);

struct Experience {
  RVector s;
  RVector a;  // raw actor output (pre-projection, exploration noise included)
  double r = 0.0;
  RVector s_next;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);

  void push(Experience e);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  const Experience& at(std::size_t i) const { return items_.at(i); }
  /// Index of the oldest stored experience.
  std::size_t oldest() const { return items_.size() < capacity_ ? 0 : cursor_; }

  /// Uniform sampling with replacement.
  std::vector<const Experience*> sample(std::size_t count, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t cursor_ = 0;
  std::vector<Experience> items_;
};

struct ActionSelection {
  ActionVector raw;
  JointAction projected;
};

struct EpisodeLog {
  std::vector<double> rewards;
  double best_reward = 0.0;
  bool stopped_early = false;
};

class DdpgAgent {
 public:
  DdpgAgent(const SystemConfig& cfg, const Hyperparams& hp, Rng& rng);

  const SystemConfig& config() const { return cfg_; }
  const Hyperparams& hyperparams() const { return hp_; }

  /// Whitens the state (folding it into the running moments), runs the
  /// training actor and adds N(0, sigma^2) noise per component when explore is set.
  ActionSelection select_action(const StateVector& state, Rng& rng, bool explore);

  /// y = r + gamma * q_target(s', actor_target(s')), single sample, eval mode.
  double critic_target_value(double r, const StateVector& s_next) const;

  /// One Adam step on the training critic; returns the mean squared TD error.
  double update_critic(const std::vector<const Experience*>& batch);
  /// One Adam step ascending the batch-mean Q; returns that mean before the step.
  double update_actor(const std::vector<const Experience*>& batch);
  void soft_update();

  EpisodeLog run_episode(const ChannelSet& channels, Rng& rng);

  ReplayBuffer& buffer() { return buffer_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  nn::DenseNet& actor() { return actor_train_; }
  nn::DenseNet& actor_target() { return actor_target_; }
  nn::DenseNet& critic() { return critic_train_; }
  nn::DenseNet& critic_target() { return critic_target_; }
  const nn::DenseNet& actor() const { return actor_train_; }
  const nn::DenseNet& critic() const { return critic_train_; }
  nn::WhitenState& whitening() { return whiten_; }
  const nn::AdamState& actor_optimizer() const { return actor_opt_; }
  const nn::AdamState& critic_optimizer() const { return critic_opt_; }

  double exploration_std() const { return exploration_std_; }
  void set_exploration_std(double s) { exploration_std_ = s; }

  std::optional<double> best_reward() const { return best_reward_; }
  const JointAction& best_action() const { return best_action_; }
  std::uint64_t updates() const { return updates_; }

 private:
  RMatrix whitened_states(const std::vector<const Experience*>& batch, bool next) const;

  SystemConfig cfg_;
  Hyperparams hp_;
  nn::DenseNet actor_train_;
  nn::DenseNet actor_target_;
  nn::DenseNet critic_train_;
  nn::DenseNet critic_target_;
  nn::AdamState actor_opt_;
  nn::AdamState critic_opt_;
  nn::WhitenState whiten_;
  ReplayBuffer buffer_;
  double exploration_std_;
  std::optional<double> best_reward_;
  JointAction best_action_;
  std::uint64_t updates_ = 0;
};

struct RunSummary {
  std::vector<double> instant_rewards;
  std::vector<double> average_rewards;
  std::vector<double> best_rewards;  // best-so-far after each step
  double best_sum_rate = 0.0;
  JointAction best_action;
  int best_episode = 0;
  std::vector<int> episode_lengths;
  double wall_ms = 0.0;
  std::uint64_t seed = 0;
  SystemConfig config;
  Hyperparams hyper;
  std::string actor_checkpoint;   // save_checkpoint bytes of the final training actor
  std::string critic_checkpoint;  // save_checkpoint bytes of the final training critic
};

/// Runs hp.episodes episodes, redrawing the channels from rng at the start of each.
RunSummary train(const SystemConfig& cfg, const Hyperparams& hp, Rng& rng);
RunSummary train(DdpgAgent& agent, Rng& rng);

/// Same loop with the CSI held fixed across all episodes (per-CSI optimizer).
RunSummary optimize_for_channels(const ChannelSet& channels, const SystemConfig& cfg,
                                 const Hyperparams& hp, Rng& rng);
RunSummary optimize_for_channels(DdpgAgent& agent, const ChannelSet& channels, Rng& rng);

}  // namespace ris
