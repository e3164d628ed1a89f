#include "smile/environment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "smile/rng.hpp"

namespace smile {

std::vector<ItemId> top_k_items(const BprModel& ranker, UserId user,
                                std::span<const ItemId> candidates, size_t k) {
  if (k > candidates.size())
    throw std::invalid_argument("top-k larger than candidate set");

  std::vector<std::pair<double, ItemId>> scored(candidates.size());
  for (size_t i = 0; i < candidates.size(); ++i)
    scored[i] = {ranker.score(user, candidates[i]), candidates[i]};
  auto better = [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  };
  std::partial_sort(scored.begin(), scored.begin() + std::ptrdiff_t(k),
                    scored.end(), better);
  std::vector<ItemId> out(k);
  for (size_t i = 0; i < k; ++i) out[i] = scored[i].second;
  return out;
}

double exposure_reward(const BprModel& ranker, const CandidateSets& candidates,
                       const PromotedSet& promoted, size_t k) {
  std::vector<uint8_t> is_promoted(ranker.Q.rows, 0);
  for (ItemId p : promoted.item_ids) is_promoted[p] = 1;

  double total = 0.0;
  double denom = double(promoted.item_ids.size());
  for (UserId u = 0; u < candidates.per_user.size(); ++u) {
    auto top = top_k_items(ranker, u, candidates.per_user[u], k);
    size_t hits = 0;
    for (ItemId i : top) hits += is_promoted[i];
    total += double(hits) / denom;
  }
  return total;
}

EnvState::EnvState(RatingsTable table, BprModel ranker, PromotedSet promoted,
                   const EmbeddingMatrix& mf, EnvConfig cfg)
    : table_(std::move(table)),
      ranker_(std::move(ranker)),
      pristine_ranker_(ranker_),
      promoted_(std::move(promoted)),
      mf_(&mf),
      cfg_(cfg) {
  if (promoted_.item_ids.empty())
    throw std::invalid_argument("environment needs a nonempty promoted set");
  table_.snapshot();
  reset_episode(0);
}

void EnvState::build_candidates(uint64_t seed) {
  size_t num_items = table_.num_items();
  std::vector<ItemId> pool;
  pool.reserve(num_items - promoted_.item_ids.size());
  for (ItemId i = 0; i < num_items; ++i)
    if (!promoted_.contains(i)) pool.push_back(i);

  size_t draw = size_t(
      std::llround(cfg_.candidate_fraction * double(pool.size())));
  draw = std::min(draw, pool.size());

  candidates_.seed = seed;
  candidates_.per_user.assign(table_.num_users(), {});
  for (UserId u = 0; u < table_.num_users(); ++u) {
    auto& cu = candidates_.per_user[u];
    cu.reserve(promoted_.item_ids.size() + draw);
    cu.insert(cu.end(), promoted_.item_ids.begin(), promoted_.item_ids.end());
    Rng rng(derive_seed(seed, 0xca4d, u));
    auto picks = rng.sample_without_replacement(pool.size(), draw);
    for (auto p : picks) cu.push_back(pool[p]);
  }
}

std::vector<ItemId> EnvState::recommend_topk(UserId user) const {
  return top_k_items(ranker_, user, candidates_.per_user[user], cfg_.k);
}

double EnvState::compute_reward() const {
  return exposure_reward(ranker_, candidates_, promoted_, cfg_.k);
}

EnvState::TrialResult EnvState::apply_trial(UserId adopter,
                                            const EmbeddingMatrix& mf) {
  TrialResult res;
  size_t first_new = table_.size();
  for (ItemId p : promoted_.item_ids) {
    if (table_.has(adopter, p)) {
      ++res.skipped;
      continue;
    }
    table_.append({adopter, p, predict_rating(mf, adopter, p), 0});
    ++res.appended;
  }
  if (res.appended > 0 && cfg_.finetune_steps > 0) {
    fine_tune_bpr(ranker_, table_, first_new, cfg_.finetune_steps,
                  cfg_.finetune_lr, cfg_.finetune_reg,
                  derive_seed(episode_seed_, 0xf1b3, step_counter_));
  }
  ++step_counter_;
  last_trial_ = res;
  return res;
}

void EnvState::reset_episode(uint64_t seed) {
  table_.rollback();
  ranker_ = pristine_ranker_;
  episode_seed_ = seed;
  step_counter_ = 0;
  last_trial_ = {};
  build_candidates(seed);
  // Tracks the current candidate draw so increased_exposure reads 0 before
  // the first trial of the episode.
  pristine_reward_ = compute_reward();
}

double EnvState::step(UserId adopter) {
  apply_trial(adopter, *mf_);
  return compute_reward();
}

double increased_exposure(const EnvState& env) {
  return double(env.promoted().item_ids.size()) *
         (env.compute_reward() - env.pristine_reward());
}

}  // namespace smile
