#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "smile/action_tree.hpp"
#include "smile/dataset.hpp"
#include "smile/factorization.hpp"
#include "smile/matrix.hpp"
#include "smile/state_tracker.hpp"
#include "smile/trial_env.hpp"

namespace smile {

/// Activation applied to the per-node logits before the softmax.
/// softplus is the training default: it is smooth and unbounded above, so a
/// node can commit arbitrarily hard to one child once the return signal
/// supports it. tanh saturates at a logit gap of 2, which caps any
/// two-child choice probability at e^2/(e^2+1) ~ 0.88 no matter how long
/// training runs; it is kept selectable for comparison runs.
enum class PolicyActivation { softplus, tanh, relu, identity };

PolicyActivation parse_activation(const std::string& name);
std::string activation_name(PolicyActivation a);

/// One per internal tree node: logits = act(W^T s + b), one column per
/// child.
struct NodePolicy {
  Matrix w;               // state_dim x child_count
  std::vector<double> b;  // child_count

  bool operator==(const NodePolicy&) const = default;
};

struct PolicyStore {
  std::vector<NodePolicy> nodes;
  PolicyActivation activation = PolicyActivation::softplus;
  size_t state_dim = 0;

  /// Unmasked probability vector over one node's children.
  std::vector<double> forward(uint32_t policy_id,
                              std::span<const double> state) const;

  /// Adapter for the tree sampler.
  PolicyEvalFn eval_fn() const;

  bool operator==(const PolicyStore&) const = default;
};

PolicyStore init_policies(const ClusterTree& tree, size_t state_dim,
                          PolicyActivation activation, uint64_t seed);

/// Softmax(act(W^T s + b)) for a single node.
std::vector<double> policy_forward(const NodePolicy& p,
                                   PolicyActivation activation,
                                   std::span<const double> state);

void save_policies(const PolicyStore& ps, const std::string& path);
PolicyStore load_policies(const std::string& path);

enum class FilterMode {
  mean_rating,  // mean predicted rating over the promoted set
  all_items,    // every promoted item individually
};

FilterMode parse_filter_mode(const std::string& name);

/// Pass iff the user's predicted preference for the promoted items is
/// strictly above `threshold` (aggregated per `mode`).
bool filter_user(const EmbeddingMatrix& mf, UserId user,
                 const PromotedSet& promoted, double threshold,
                 FilterMode mode = FilterMode::mean_rating);

struct SelectResult {
  UserId adopter = 0;
  PathSample path;
  size_t filter_rejections = 0;
};

struct retries_exhausted : std::runtime_error {
  retries_exhausted() : std::runtime_error("filter retries exhausted") {}
};

/// Samples a path; users failing the filter are made unavailable for the
/// rest of the episode and the draw repeats (bounded by max_retries). The
/// accepted user is also consumed from the available set, so no adopter can
/// repeat within an episode.
SelectResult select_adopter(ClusterTree& tree, const PolicyStore& policies,
                            const EmbeddingMatrix& mf,
                            const PromotedSet& promoted,
                            std::span<const double> state, Rng& rng,
                            size_t max_retries, double threshold,
                            FilterMode mode = FilterMode::mean_rating,
                            bool greedy = false);

/// Discounted returns by reverse accumulation: Q_t = r_t + gamma * Q_{t+1}.
std::vector<double> compute_returns(std::span<const double> rewards,
                                    double gamma);

struct TraceStep {
  std::vector<double> state;
  PathSample path;
  UserId adopter = 0;
  double reward = 0.0;
};

struct EpisodeTrace {
  std::vector<TraceStep> steps;
  bool truncated = false;
};

struct TrainConfig {
  size_t episode_len = 0;  // 0 -> ceil(0.05 * num_users)
  double gamma = 0.9;
  double eta = 0.001;
  size_t episodes = 500;
  double filter_threshold = 3.5;
  FilterMode filter_mode = FilterMode::mean_rating;
  size_t max_retries = 50;
  // Subtract a mean-return baseline before the update. The training loop
  // feeds a per-step-index running mean (returns fall steeply with the step
  // index, so an indexed reference is what exposes choice quality); a bare
  // reinforce_update call falls back to the episode mean.
  bool mean_baseline = false;
  bool greedy = false;         // argmax descent (inference runs)
  size_t reward_buckets = 10;
  double reward_max = 0.0;  // 0 -> num_users (a fully saturated catalog)
  uint64_t seed = 1;
};

/// One REINFORCE step over a full episode: for every step t and every node
/// on its path, theta += eta * grad log pi_masked(choice | s_t) * (Q_t - b_t).
/// b_t comes from `baselines` (one entry per step) when supplied and the
/// mean_baseline flag is set; otherwise b_t = 0. Only traversed nodes are
/// touched. Throws on non-finite gradients.
void reinforce_update(PolicyStore& policies, const EpisodeTrace& trace,
                      const TrainConfig& cfg,
                      std::span<const double> baselines = {});

/// Analytic gradient of log pi_masked(choice) for one node, laid out as
/// [d log/d W (column-major by child), d log/d b]. Exposed for the
/// finite-difference checks.
void masked_logprob_gradient(const NodePolicy& p, PolicyActivation activation,
                             std::span<const double> state,
                             std::span<const uint8_t> avail_mask,
                             uint32_t choice, std::span<double> grad_w,
                             std::span<double> grad_b);
double masked_logprob(const NodePolicy& p, PolicyActivation activation,
                      std::span<const double> state,
                      std::span<const uint8_t> avail_mask, uint32_t choice);

struct EpisodeSummary {
  size_t episode = 0;
  size_t steps = 0;
  double avg_reward = 0.0;
  double max_reward = 0.0;
  size_t filter_rejections = 0;
  bool truncated = false;
};

struct StepRecord {
  size_t episode = 0;
  size_t step = 0;  // 1-based
  UserId adopter = 0;
  double reward = 0.0;
  double ret = 0.0;
  double log_prob = 0.0;
  size_t appended = 0;
  size_t skipped = 0;
};

using StepLogger = std::function<void(const StepRecord&)>;

struct TrainResult {
  std::vector<EpisodeSummary> episodes;
  double best_avg_reward = 0.0;
  double max_reward = 0.0;
};

/// The full training loop: per episode, reset the environment and the
/// availability mask, roll the recurrent state forward over
/// (adopter embedding, encoded reward) inputs, then apply the policy
/// update from the collected trace. When update_policies is false the loop
/// only samples (evaluation runs).
TrainResult train(TrialEnvironment& env, ClusterTree& tree,
                  PolicyStore& policies, const SruParams& sru,
                  const EmbeddingMatrix& mf, const PromotedSet& promoted,
                  const TrainConfig& cfg, const StepLogger& logger = nullptr,
                  bool update_policies = true);

}  // namespace smile
