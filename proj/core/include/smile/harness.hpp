#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "smile/agent.hpp"
#include "smile/dataset.hpp"
#include "smile/environment.hpp"
#include "smile/factorization.hpp"

namespace smile {

enum class BaselineKind { random, activity, inactivity, high_rating,
                          low_rating };

BaselineKind parse_baseline_kind(const std::string& name);
std::string baseline_kind_name(BaselineKind kind);
std::vector<BaselineKind> all_baseline_kinds();

/// Static adopter ranking from table statistics alone, gated by the same
/// user filter the agent uses (rejected users are replaced by the next
/// candidate in rank order). Returns fewer than n with truncated=true when
/// not enough users survive.
struct BaselineSelection {
  std::vector<UserId> users;
  bool truncated = false;
};
BaselineSelection rank_baseline_users(const RatingsTable& table,
                                      BaselineKind kind, size_t n,
                                      uint64_t seed,
                                      const EmbeddingMatrix* mf = nullptr,
                                      const PromotedSet* promoted = nullptr,
                                      double filter_threshold = 3.5,
                                      FilterMode mode = FilterMode::mean_rating);

struct MetricsReport {
  double avg_reward = 0.0;
  double max_reward = 0.0;
  double precision_at_k = 0.0;
  double recall_at_k = 0.0;
  size_t k = 0;
  size_t episodes = 0;
  size_t steps = 0;
};

/// Runs a static policy through the environment: per episode, reset and feed
/// the baseline's adopters one per step. avg_reward is the mean per-step
/// reward across all episodes, max_reward the largest single-step reward.
MetricsReport run_baseline(EnvState& env, const RatingsTable& table,
                           const EmbeddingMatrix& mf, BaselineKind kind,
                           size_t episodes, size_t episode_len, uint64_t seed,
                           double filter_threshold,
                           FilterMode mode = FilterMode::mean_rating);

/// Ranking accuracy on held-out data. For each user with at least one
/// relevant test item (rating >= relevance_threshold), ranks the full
/// catalog minus the user's `exclude` items and averages
///   precision@k = |top-k and relevant| / k
///   recall@k    = |top-k and relevant| / min(|relevant|, k).
/// Throws when no user qualifies.
std::pair<double, double> eval_ranking(const BprModel& model,
                                       const RatingsTable& exclude,
                                       const RatingsTable& test, size_t k,
                                       double relevance_threshold);

struct Rq1Row {
  size_t adopters = 0;
  double increased_exposure = 0.0;
};

/// Exposure gained by `count` random unfiltered adopters applied from the
/// pristine state, one row per requested count.
std::vector<Rq1Row> rq1_sweep(EnvState& env, const EmbeddingMatrix& mf,
                              const std::vector<size_t>& counts,
                              uint64_t seed);

/// Mean wall time of one masked path sample over `trials` draws on a tree
/// of the given depth (fresh random states, availability untouched).
double time_sample_path_ns(const Matrix& user_embeddings, size_t depth,
                           size_t trials, uint64_t seed);

struct Rq3Row {
  size_t depth = 0;
  double mean_sample_ns = 0.0;
  double avg_reward = 0.0;
};

/// Per depth: tree construction, sampling-time measurement and (when an
/// environment is supplied) a short training run reporting the best
/// per-episode average reward.
std::vector<Rq3Row> rq3_depth_sweep(const EmbeddingMatrix& mf,
                                    const std::vector<size_t>& depths,
                                    size_t trials, uint64_t seed,
                                    EnvState* env = nullptr,
                                    const SruParams* sru = nullptr,
                                    const TrainConfig* train_cfg = nullptr);

/// Reference results reported for the original SMILE evaluation, printed
/// next to fresh runs for comparison. Never asserted: they depend on
/// unpublished seeds and hyperparameters.
struct ReferenceResult {
  const char* dataset;
  const char* policy;
  double avg_reward;
  double max_reward;
};
struct ReferenceRanking {
  const char* dataset;
  double precision_before, recall_before;
  double precision_after, recall_after;
};
const std::vector<ReferenceResult>& reference_selection_results();
const std::vector<ReferenceRanking>& reference_ranking_results();

}  // namespace smile
