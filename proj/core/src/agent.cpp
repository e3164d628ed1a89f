#include "smile/agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "io_util.hpp"

namespace smile {

namespace {

double activation_value(PolicyActivation a, double z) {
  switch (a) {
    case PolicyActivation::softplus:
      return z > 30.0 ? z : std::log1p(std::exp(z));
    case PolicyActivation::tanh: return std::tanh(z);
    case PolicyActivation::relu: return z > 0.0 ? z : 0.0;
    case PolicyActivation::identity: return z;
  }
  return z;
}

double activation_grad(PolicyActivation a, double z) {
  switch (a) {
    case PolicyActivation::softplus: return 1.0 / (1.0 + std::exp(-z));
    case PolicyActivation::tanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case PolicyActivation::relu: return z > 0.0 ? 1.0 : 0.0;
    case PolicyActivation::identity: return 1.0;
  }
  return 1.0;
}

// Pre-activations z = W^T s + b.
std::vector<double> node_preact(const NodePolicy& p,
                                std::span<const double> state) {
  size_t children = p.b.size();
  std::vector<double> z(p.b);
  for (size_t k = 0; k < state.size(); ++k) {
    const double* wrow = p.w.row(k);
    double sk = state[k];
    for (size_t j = 0; j < children; ++j) z[j] += wrow[j] * sk;
  }
  return z;
}

void softmax_inplace(std::vector<double>& v) {
  double m = *std::max_element(v.begin(), v.end());
  double total = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    total += x;
  }
  for (double& x : v) x /= total;
}

// Masked softmax over logits; closed entries get probability 0.
std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   std::span<const uint8_t> mask) {
  double m = -std::numeric_limits<double>::infinity();
  for (size_t j = 0; j < logits.size(); ++j)
    if (mask[j] && logits[j] > m) m = logits[j];
  std::vector<double> p(logits.size(), 0.0);
  double total = 0.0;
  for (size_t j = 0; j < logits.size(); ++j) {
    if (!mask[j]) continue;
    p[j] = std::exp(logits[j] - m);
    total += p[j];
  }
  for (double& x : p) x /= total;
  return p;
}

}  // namespace

PolicyActivation parse_activation(const std::string& name) {
  if (name == "softplus") return PolicyActivation::softplus;
  if (name == "tanh") return PolicyActivation::tanh;
  if (name == "relu") return PolicyActivation::relu;
  if (name == "identity") return PolicyActivation::identity;
  throw std::invalid_argument("unknown activation: " + name);
}

std::string activation_name(PolicyActivation a) {
  switch (a) {
    case PolicyActivation::softplus: return "softplus";
    case PolicyActivation::tanh: return "tanh";
    case PolicyActivation::relu: return "relu";
    case PolicyActivation::identity: return "identity";
  }
  return "?";
}

FilterMode parse_filter_mode(const std::string& name) {
  if (name == "mean") return FilterMode::mean_rating;
  if (name == "all") return FilterMode::all_items;
  throw std::invalid_argument("unknown filter mode: " + name);
}

std::vector<double> policy_forward(const NodePolicy& p,
                                   PolicyActivation activation,
                                   std::span<const double> state) {
  auto z = node_preact(p, state);
  for (double& x : z) x = activation_value(activation, x);
  softmax_inplace(z);
  return z;
}

std::vector<double> PolicyStore::forward(uint32_t policy_id,
                                         std::span<const double> state) const {
  return policy_forward(nodes[policy_id], activation, state);
}

PolicyEvalFn PolicyStore::eval_fn() const {
  return [this](uint32_t policy_id, uint32_t child_count,
                std::span<const double> state) {
    auto p = forward(policy_id, state);
    if (p.size() != child_count)
      throw std::logic_error("policy/child count mismatch");
    return p;
  };
}

PolicyStore init_policies(const ClusterTree& tree, size_t state_dim,
                          PolicyActivation activation, uint64_t seed) {
  PolicyStore ps;
  ps.activation = activation;
  ps.state_dim = state_dim;
  ps.nodes.resize(tree.num_internal());
  for (const auto& node : tree.nodes()) {
    if (node.leaf_user >= 0) continue;
    auto& p = ps.nodes[size_t(node.policy)];
    p.w = Matrix(state_dim, node.children.size());
    p.b.assign(node.children.size(), 0.0);
    Rng rng(derive_seed(seed, 0x90110, uint64_t(node.policy)));
    p.w.fill_uniform(rng, -0.05, 0.05);
    for (auto& b : p.b) b = rng.uniform(-0.05, 0.05);
  }
  return ps;
}

bool filter_user(const EmbeddingMatrix& mf, UserId user,
                 const PromotedSet& promoted, double threshold,
                 FilterMode mode) {
  if (promoted.item_ids.empty()) return true;
  if (mode == FilterMode::all_items) {
    for (ItemId i : promoted.item_ids)
      if (!(predict_rating(mf, user, i) > threshold)) return false;
    return true;
  }
  double sum = 0.0;
  for (ItemId i : promoted.item_ids) sum += predict_rating(mf, user, i);
  return sum / double(promoted.item_ids.size()) > threshold;
}

SelectResult select_adopter(ClusterTree& tree, const PolicyStore& policies,
                            const EmbeddingMatrix& mf,
                            const PromotedSet& promoted,
                            std::span<const double> state, Rng& rng,
                            size_t max_retries, double threshold,
                            FilterMode mode, bool greedy) {
  auto eval = policies.eval_fn();
  SelectResult result;
  for (size_t attempt = 0; attempt <= max_retries; ++attempt) {
    PathSample path = greedy ? greedy_path(tree, eval, state)
                             : sample_path(tree, eval, state, rng);
    UserId user = path.leaf_user;
    if (filter_user(mf, user, promoted, threshold, mode)) {
      tree.set_available(user, false);  // no repeats within the episode
      result.adopter = user;
      result.path = std::move(path);
      return result;
    }
    tree.set_available(user, false);  // rejected users stay consumed
    ++result.filter_rejections;
  }
  throw retries_exhausted();
}

std::vector<double> compute_returns(std::span<const double> rewards,
                                    double gamma) {
  std::vector<double> q(rewards.size(), 0.0);
  double acc = 0.0;
  for (size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    q[i] = acc;
  }
  return q;
}

double masked_logprob(const NodePolicy& p, PolicyActivation activation,
                      std::span<const double> state,
                      std::span<const uint8_t> avail_mask, uint32_t choice) {
  auto z = node_preact(p, state);
  std::vector<double> logits(z.size());
  for (size_t j = 0; j < z.size(); ++j)
    logits[j] = activation_value(activation, z[j]);
  auto probs = masked_softmax(logits, avail_mask);
  return std::log(probs[choice]);
}

void masked_logprob_gradient(const NodePolicy& p, PolicyActivation activation,
                             std::span<const double> state,
                             std::span<const uint8_t> avail_mask,
                             uint32_t choice, std::span<double> grad_w,
                             std::span<double> grad_b) {
  size_t children = p.b.size();
  size_t dim = state.size();
  auto z = node_preact(p, state);
  std::vector<double> logits(children);
  for (size_t j = 0; j < children; ++j)
    logits[j] = activation_value(activation, z[j]);
  auto probs = masked_softmax(logits, avail_mask);

  // d log p(choice) / d logit_j = (1[j==choice] - p_j) on open children,
  // then chain through the activation.
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  std::fill(grad_b.begin(), grad_b.end(), 0.0);
  for (size_t j = 0; j < children; ++j) {
    if (!avail_mask[j]) continue;
    double dlogit = (j == choice ? 1.0 : 0.0) - probs[j];
    double dz = dlogit * activation_grad(activation, z[j]);
    grad_b[j] = dz;
    for (size_t k = 0; k < dim; ++k) grad_w[k * children + j] = dz * state[k];
  }
}

void reinforce_update(PolicyStore& policies, const EpisodeTrace& trace,
                      const TrainConfig& cfg,
                      std::span<const double> baselines) {
  if (trace.steps.empty()) return;

  std::vector<double> rewards(trace.steps.size());
  for (size_t t = 0; t < trace.steps.size(); ++t)
    rewards[t] = trace.steps[t].reward;
  auto returns = compute_returns(rewards, cfg.gamma);

  // Stepwise mean baseline: returns shrink sharply with the step index, so
  // a per-index reference is what exposes the choice-quality signal.
  double episode_mean = 0.0;
  if (cfg.mean_baseline && baselines.empty()) {
    for (double q : returns) episode_mean += q;
    episode_mean /= double(returns.size());
  }
  auto baseline_at = [&](size_t t) {
    if (!cfg.mean_baseline) return 0.0;
    if (t < baselines.size()) return baselines[t];
    return episode_mean;
  };

  std::vector<double> gw, gb;
  for (size_t t = 0; t < trace.steps.size(); ++t) {
    const auto& step = trace.steps[t];
    double scale = cfg.eta * (returns[t] - baseline_at(t));
    for (const auto& ps : step.path.steps) {
      auto& node = policies.nodes[ps.policy];
      size_t children = node.b.size();
      gw.assign(node.w.data.size(), 0.0);
      gb.assign(children, 0.0);
      masked_logprob_gradient(node, policies.activation, step.state,
                              ps.avail_mask, ps.choice, gw, gb);
      for (size_t i = 0; i < gw.size(); ++i) node.w.data[i] += scale * gw[i];
      for (size_t j = 0; j < children; ++j) node.b[j] += scale * gb[j];
      if (!all_finite(node.w) || !all_finite(node.b))
        throw std::runtime_error(
            "reinforce_update produced non-finite parameters at step " +
            std::to_string(t));
    }
  }
}

TrainResult train(TrialEnvironment& env, ClusterTree& tree,
                  PolicyStore& policies, const SruParams& sru,
                  const EmbeddingMatrix& mf, const PromotedSet& promoted,
                  const TrainConfig& cfg, const StepLogger& logger,
                  bool update_policies) {
  size_t num_users = tree.num_users();
  size_t n = cfg.episode_len;
  if (n == 0) n = size_t(std::ceil(0.05 * double(num_users)));
  n = std::max<size_t>(n, 1);

  RewardEncoding enc{cfg.reward_buckets, 0.0,
                     cfg.reward_max > 0.0 ? cfg.reward_max
                                          : double(num_users)};
  SruState s0 = init_state(mf.V, promoted.item_ids, sru.dim);

  TrainResult result;
  std::vector<double> step_baselines;
  bool seen_baseline = false;
  for (size_t ep = 0; ep < cfg.episodes; ++ep) {
    env.reset_episode(derive_seed(cfg.seed, 0xe915, ep));
    tree.reset_availability();
    Rng rng(derive_seed(cfg.seed, 0x5a3b, ep));

    SruState s = s0;
    EpisodeTrace trace;
    EpisodeSummary summary;
    summary.episode = ep;

    std::vector<TrialEnvironment::StepInfo> infos;
    for (size_t t = 0; t < n; ++t) {
      SelectResult sel;
      try {
        sel = select_adopter(tree, policies, mf, promoted, s.h_out, rng,
                             cfg.max_retries, cfg.filter_threshold,
                             cfg.filter_mode, cfg.greedy);
      } catch (const retries_exhausted&) {
        trace.truncated = true;
        break;
      } catch (const action_space_exhausted&) {
        trace.truncated = true;
        break;
      }
      summary.filter_rejections += sel.filter_rejections;

      double reward = env.step(sel.adopter);
      infos.push_back(env.last_step_info());

      TraceStep ts;
      ts.state = s.h_out;
      ts.path = std::move(sel.path);
      ts.adopter = sel.adopter;
      ts.reward = reward;
      trace.steps.push_back(std::move(ts));

      if (t + 1 < n) {
        auto x = make_input(mf.U.row_span(sel.adopter),
                            encode_reward(enc, reward));
        s = sru_step(sru, s, x);
      }
    }

    if (update_policies && !trace.steps.empty()) {
      reinforce_update(policies, trace, cfg, step_baselines);
      std::vector<double> rewards(trace.steps.size());
      for (size_t t = 0; t < trace.steps.size(); ++t)
        rewards[t] = trace.steps[t].reward;
      auto returns = compute_returns(rewards, cfg.gamma);
      if (step_baselines.size() < returns.size())
        step_baselines.resize(returns.size(), 0.0);
      for (size_t t = 0; t < returns.size(); ++t)
        step_baselines[t] = seen_baseline
                                ? 0.9 * step_baselines[t] + 0.1 * returns[t]
                                : returns[t];
      seen_baseline = true;
    }

    summary.steps = trace.steps.size();
    summary.truncated = trace.truncated;
    double total = 0.0;
    for (const auto& st : trace.steps) {
      total += st.reward;
      summary.max_reward = std::max(summary.max_reward, st.reward);
    }
    summary.avg_reward =
        trace.steps.empty() ? 0.0 : total / double(trace.steps.size());

    if (logger && !trace.steps.empty()) {
      std::vector<double> rewards(trace.steps.size());
      for (size_t t = 0; t < trace.steps.size(); ++t)
        rewards[t] = trace.steps[t].reward;
      auto returns = compute_returns(rewards, cfg.gamma);
      for (size_t t = 0; t < trace.steps.size(); ++t) {
        StepRecord rec;
        rec.episode = ep;
        rec.step = t + 1;
        rec.adopter = trace.steps[t].adopter;
        rec.reward = trace.steps[t].reward;
        rec.ret = returns[t];
        rec.log_prob = trace.steps[t].path.log_prob;
        rec.appended = infos[t].appended;
        rec.skipped = infos[t].skipped;
        logger(rec);
      }
    }

    result.best_avg_reward = std::max(result.best_avg_reward,
                                      summary.avg_reward);
    result.max_reward = std::max(result.max_reward, summary.max_reward);
    result.episodes.push_back(summary);
  }
  return result;
}

void save_policies(const PolicyStore& ps, const std::string& path) {
  auto f = io::open_out(path);
  io::write_magic(f, "SMILEPL1");
  io::write_pod<uint64_t>(f, ps.nodes.size());
  io::write_pod<uint64_t>(f, ps.state_dim);
  io::write_pod<uint32_t>(f, uint32_t(ps.activation));
  for (const auto& n : ps.nodes) {
    io::write_pod<uint64_t>(f, n.w.rows);
    io::write_pod<uint64_t>(f, n.w.cols);
    io::write_vec(f, n.w.data);
    io::write_vec(f, n.b);
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

PolicyStore load_policies(const std::string& path) {
  auto f = io::open_in(path);
  io::check_magic(f, "SMILEPL1", "policy checkpoint");
  PolicyStore ps;
  auto count = io::read_pod<uint64_t>(f);
  ps.state_dim = io::read_pod<uint64_t>(f);
  ps.activation = PolicyActivation(io::read_pod<uint32_t>(f));
  ps.nodes.resize(count);
  for (auto& n : ps.nodes) {
    n.w.rows = io::read_pod<uint64_t>(f);
    n.w.cols = io::read_pod<uint64_t>(f);
    n.w.data = io::read_vec<double>(f);
    n.b = io::read_vec<double>(f);
  }
  return ps;
}

}  // namespace smile
