#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "smile/dataset.hpp"
#include "smile/factorization.hpp"
#include "smile/trial_env.hpp"

namespace smile {

/// Per-user candidate item lists: the promoted set plus a seeded uniform
/// sample of a fraction of the remaining catalog, regenerated once per
/// episode.
struct CandidateSets {
  std::vector<std::vector<ItemId>> per_user;
  uint64_t seed = 0;
};

struct EnvConfig {
  size_t k = 10;                     // recommendation list length
  double candidate_fraction = 0.10;  // of non-promoted items
  size_t finetune_steps = 200;       // ranker refresh per trial
  double finetune_lr = 0.01;
  double finetune_reg = 0.01;
};

/// The K highest-scoring candidates, ties broken by ascending item id.
std::vector<ItemId> top_k_items(const BprModel& ranker, UserId user,
                                std::span<const ItemId> candidates, size_t k);

/// Total promoted exposure: sum over users of |top-K intersect promoted| /
/// |promoted|.
double exposure_reward(const BprModel& ranker, const CandidateSets& candidates,
                       const PromotedSet& promoted, size_t k);

/// The simulated recommender the agent interacts with. Owns the live
/// interaction log and the live ranker; keeps a pristine checkpoint of both
/// so that episodes always start from identical conditions.
class EnvState final : public TrialEnvironment {
 public:
  /// `table` is the low-exposure world the simulation runs on; `ranker` must
  /// have been trained on it. `mf` is the frozen rating model used both for
  /// appended trial ratings and (outside this class) for the user filter.
  EnvState(RatingsTable table, BprModel ranker, PromotedSet promoted,
           const EmbeddingMatrix& mf, EnvConfig cfg);

  void build_candidates(uint64_t seed);
  const CandidateSets& candidates() const { return candidates_; }

  std::vector<ItemId> recommend_topk(UserId user) const;
  double compute_reward() const;

  struct TrialResult {
    size_t appended = 0;
    size_t skipped = 0;
  };
  /// Appends (adopter, p, predicted rating) for every promoted item p not
  /// already rated by the adopter, then refreshes the ranker on exactly
  /// those rows.
  TrialResult apply_trial(UserId adopter, const EmbeddingMatrix& mf);

  /// Restores the pristine table and ranker and regenerates candidates.
  void reset_episode(uint64_t seed) override;

  double step(UserId adopter) override;
  StepInfo last_step_info() const override {
    return {last_trial_.appended, last_trial_.skipped};
  }

  double pristine_reward() const { return pristine_reward_; }
  const RatingsTable& table() const { return table_; }
  const BprModel& ranker() const { return ranker_; }
  const PromotedSet& promoted() const { return promoted_; }
  const EnvConfig& config() const { return cfg_; }

 private:
  RatingsTable table_;
  BprModel ranker_;
  BprModel pristine_ranker_;
  PromotedSet promoted_;
  const EmbeddingMatrix* mf_;
  EnvConfig cfg_;
  CandidateSets candidates_;
  TrialResult last_trial_;
  uint64_t episode_seed_ = 0;
  size_t step_counter_ = 0;
  double pristine_reward_ = 0.0;
};

/// Extra promoted-item appearances relative to the pristine environment:
/// |promoted| * (reward_now - reward_pristine).
double increased_exposure(const EnvState& env);

}  // namespace smile
