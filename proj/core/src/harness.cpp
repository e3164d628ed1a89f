#include "smile/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "smile/action_tree.hpp"
#include "smile/rng.hpp"

namespace smile {

BaselineKind parse_baseline_kind(const std::string& name) {
  if (name == "random") return BaselineKind::random;
  if (name == "activity") return BaselineKind::activity;
  if (name == "inactivity") return BaselineKind::inactivity;
  if (name == "high_rating") return BaselineKind::high_rating;
  if (name == "low_rating") return BaselineKind::low_rating;
  throw std::invalid_argument("unknown baseline: " + name);
}

std::string baseline_kind_name(BaselineKind kind) {
  switch (kind) {
    case BaselineKind::random: return "random";
    case BaselineKind::activity: return "activity";
    case BaselineKind::inactivity: return "inactivity";
    case BaselineKind::high_rating: return "high_rating";
    case BaselineKind::low_rating: return "low_rating";
  }
  return "?";
}

std::vector<BaselineKind> all_baseline_kinds() {
  return {BaselineKind::random, BaselineKind::activity,
          BaselineKind::inactivity, BaselineKind::high_rating,
          BaselineKind::low_rating};
}

BaselineSelection rank_baseline_users(const RatingsTable& table,
                                      BaselineKind kind, size_t n,
                                      uint64_t seed,
                                      const EmbeddingMatrix* mf,
                                      const PromotedSet* promoted,
                                      double filter_threshold,
                                      FilterMode mode) {
  if (n > table.num_users())
    throw std::invalid_argument("baseline n exceeds the user count");

  size_t users = table.num_users();
  std::vector<UserId> order(users);
  for (size_t u = 0; u < users; ++u) order[u] = UserId(u);

  switch (kind) {
    case BaselineKind::random: {
      Rng rng(derive_seed(seed, 0xba5e));
      rng.shuffle(order);
      break;
    }
    case BaselineKind::activity:
    case BaselineKind::inactivity: {
      bool desc = kind == BaselineKind::activity;
      std::sort(order.begin(), order.end(), [&](UserId a, UserId b) {
        size_t ca = table.rows_of_user(a).size();
        size_t cb = table.rows_of_user(b).size();
        if (ca != cb) return desc ? ca > cb : ca < cb;
        return a < b;
      });
      break;
    }
    case BaselineKind::high_rating:
    case BaselineKind::low_rating: {
      std::vector<double> mean(users, 0.0);
      for (size_t u = 0; u < users; ++u) {
        const auto& ids = table.rows_of_user(UserId(u));
        double s = 0.0;
        for (auto id : ids) s += table.rows()[id].rating;
        mean[u] = ids.empty() ? 0.0 : s / double(ids.size());
      }
      bool desc = kind == BaselineKind::high_rating;
      std::sort(order.begin(), order.end(), [&](UserId a, UserId b) {
        if (mean[a] != mean[b])
          return desc ? mean[a] > mean[b] : mean[a] < mean[b];
        return a < b;
      });
      break;
    }
  }

  BaselineSelection out;
  for (UserId u : order) {
    if (out.users.size() == n) break;
    if (mf && promoted &&
        !filter_user(*mf, u, *promoted, filter_threshold, mode))
      continue;
    out.users.push_back(u);
  }
  out.truncated = out.users.size() < n;
  return out;
}

MetricsReport run_baseline(EnvState& env, const RatingsTable& table,
                           const EmbeddingMatrix& mf, BaselineKind kind,
                           size_t episodes, size_t episode_len, uint64_t seed,
                           double filter_threshold, FilterMode mode) {
  MetricsReport report;
  report.episodes = episodes;
  double total = 0.0;
  size_t steps = 0;
  for (size_t ep = 0; ep < episodes; ++ep) {
    env.reset_episode(derive_seed(seed, 0xe915, ep));
    auto sel = rank_baseline_users(table, kind, episode_len,
                                   derive_seed(seed, 0xb11d, ep), &mf,
                                   &env.promoted(), filter_threshold, mode);
    for (UserId u : sel.users) {
      double r = env.step(u);
      total += r;
      report.max_reward = std::max(report.max_reward, r);
      ++steps;
    }
  }
  report.steps = steps;
  report.avg_reward = steps == 0 ? env.pristine_reward()
                                 : total / double(steps);
  if (steps == 0) report.max_reward = env.pristine_reward();
  report.k = env.config().k;
  return report;
}

std::pair<double, double> eval_ranking(const BprModel& model,
                                       const RatingsTable& exclude,
                                       const RatingsTable& test, size_t k,
                                       double relevance_threshold) {
  if (test.size() == 0) throw std::invalid_argument("empty test table");

  size_t num_items = test.num_items();
  double psum = 0.0, rsum = 0.0;
  size_t eligible = 0;

  std::vector<uint8_t> relevant(num_items, 0);
  std::vector<uint8_t> excluded(num_items, 0);
  std::vector<std::pair<double, ItemId>> scored;
  scored.reserve(num_items);

  for (UserId u = 0; u < test.num_users(); ++u) {
    const auto& test_rows = test.rows_of_user(u);
    if (test_rows.empty()) continue;

    std::fill(relevant.begin(), relevant.end(), 0);
    std::fill(excluded.begin(), excluded.end(), 0);
    size_t num_relevant = 0;
    for (auto id : test_rows) {
      const auto& r = test.rows()[id];
      if (r.rating >= relevance_threshold && !relevant[r.item]) {
        relevant[r.item] = 1;
        ++num_relevant;
      }
    }
    if (num_relevant == 0) continue;
    for (auto id : exclude.rows_of_user(u))
      excluded[exclude.rows()[id].item] = 1;

    scored.clear();
    for (ItemId i = 0; i < num_items; ++i)
      if (!excluded[i]) scored.push_back({model.score(u, i), i});
    size_t kk = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + std::ptrdiff_t(kk),
                      scored.end(), [](const auto& a, const auto& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    size_t hits = 0;
    for (size_t i = 0; i < kk; ++i) hits += relevant[scored[i].second];

    psum += double(hits) / double(k);
    rsum += double(hits) / double(std::min(num_relevant, k));
    ++eligible;
  }
  if (eligible == 0)
    throw std::runtime_error("eval_ranking: no user has relevant test items");
  return {psum / double(eligible), rsum / double(eligible)};
}

std::vector<Rq1Row> rq1_sweep(EnvState& env, const EmbeddingMatrix& mf,
                              const std::vector<size_t>& counts,
                              uint64_t seed) {
  for (size_t i = 1; i < counts.size(); ++i)
    if (counts[i] <= counts[i - 1])
      throw std::invalid_argument("rq1 counts must be ascending");

  std::vector<Rq1Row> rows;
  for (size_t idx = 0; idx < counts.size(); ++idx) {
    size_t count = counts[idx];
    env.reset_episode(derive_seed(seed, 0x4911, idx));
    Rng rng(derive_seed(seed, 0x4912, idx));
    auto adopters =
        rng.sample_without_replacement(env.table().num_users(), count);
    for (auto u : adopters) env.apply_trial(UserId(u), mf);
    rows.push_back({count, increased_exposure(env)});
  }
  env.reset_episode(derive_seed(seed, 0x4913));
  return rows;
}

double time_sample_path_ns(const Matrix& user_embeddings, size_t depth,
                           size_t trials, uint64_t seed) {
  auto tree = ClusterTree::build(user_embeddings, depth, seed);
  size_t state_dim = user_embeddings.cols;
  auto policies = init_policies(tree, state_dim,
                                PolicyActivation::softplus, seed);
  auto eval = policies.eval_fn();

  // Pool of pre-drawn states so the timed loop is sampling only.
  Rng rng(derive_seed(seed, 0x71e0));
  constexpr size_t kStates = 64;
  std::vector<std::vector<double>> states(kStates,
                                          std::vector<double>(state_dim));
  for (auto& s : states)
    for (auto& x : s) x = rng.uniform(-1.0, 1.0);

  double sink = 0.0;
  size_t warmup = std::max<size_t>(trials / 10, 16);
  for (size_t i = 0; i < warmup; ++i)
    sink += sample_path(tree, eval, states[i % kStates], rng).log_prob;

  auto start = std::chrono::steady_clock::now();
  for (size_t i = 0; i < trials; ++i)
    sink += sample_path(tree, eval, states[i % kStates], rng).log_prob;
  auto stop = std::chrono::steady_clock::now();
  if (!std::isfinite(sink))
    throw std::runtime_error("sample timing produced non-finite log prob");

  auto ns = std::chrono::duration_cast<std::chrono::nanoseconds>(stop - start);
  return double(ns.count()) / double(trials);
}

std::vector<Rq3Row> rq3_depth_sweep(const EmbeddingMatrix& mf,
                                    const std::vector<size_t>& depths,
                                    size_t trials, uint64_t seed,
                                    EnvState* env, const SruParams* sru,
                                    const TrainConfig* train_cfg) {
  std::vector<Rq3Row> rows;
  for (size_t d : depths) {
    Rq3Row row;
    row.depth = d;
    row.mean_sample_ns = time_sample_path_ns(mf.U, d, trials, seed);
    if (env && sru && train_cfg) {
      auto tree = ClusterTree::build(mf.U, d, seed);
      auto policies = init_policies(tree, sru->dim,
                                    PolicyActivation::softplus,
                                    derive_seed(seed, 0x93, d));
      auto result = train(*env, tree, policies, *sru, mf, env->promoted(),
                          *train_cfg);
      row.avg_reward = result.best_avg_reward;
    }
    rows.push_back(row);
  }
  return rows;
}

const std::vector<ReferenceResult>& reference_selection_results() {
  static const std::vector<ReferenceResult> table = {
      {"ml-100k", "random", 4.72, 36},    {"ml-100k", "activity", 0.14, 7},
      {"ml-100k", "inactivity", 11.57, 54},
      {"ml-100k", "high_rating", 8.54, 55},
      {"ml-100k", "low_rating", 3.93, 24}, {"ml-100k", "smile", 138.3, 213},
      {"ml-1m", "random", 10.72, 40},     {"ml-1m", "activity", 9.78, 69},
      {"ml-1m", "inactivity", 15.46, 43}, {"ml-1m", "high_rating", 13.40, 54},
      {"ml-1m", "low_rating", 6.80, 27},  {"ml-1m", "smile", 55.7, 89},
      {"ciao", "random", 32.88, 47},      {"ciao", "activity", 22.42, 35},
      {"ciao", "inactivity", 37.5, 51},   {"ciao", "high_rating", 34.75, 45},
      {"ciao", "low_rating", 33.8, 40},   {"ciao", "smile", 62, 69},
  };
  return table;
}

const std::vector<ReferenceRanking>& reference_ranking_results() {
  static const std::vector<ReferenceRanking> table = {
      {"ml-100k", 0.2194, 0.0505, 0.2364, 0.0538},
      {"ml-1m", 0.1032, 0.0347, 0.1066, 0.0378},
      {"ciao", 0.0326, 0.0167, 0.0395, 0.0198},
  };
  return table;
}

}  // namespace smile
