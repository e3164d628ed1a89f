#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "smile/config.hpp"
#include "smile/harness.hpp"
#include "smile/pipeline.hpp"
#include "smile/rng.hpp"
#include "support/fixtures.hpp"

using namespace smile;

namespace {

RatingsTable shuffled_rows(const RatingsTable& t, uint64_t seed) {
  auto rows = t.rows();
  Rng rng(seed);
  rng.shuffle(rows);
  return RatingsTable::from_interactions(t.num_users(), t.num_items(),
                                         std::move(rows));
}

}  // namespace

TEST_CASE("config parses sections, comments and types") {
  auto cfg = Config::from_string(R"(
# top comment
[alpha]
x = 3
name = hello world
flag = true
ratio = 0.25
list = 1, 2,3
)");
  CHECK(cfg.get_int("alpha.x") == 3);
  CHECK(cfg.get_string("alpha.name") == "hello world");
  CHECK(cfg.get_bool("alpha.flag"));
  CHECK(cfg.get_double("alpha.ratio") == doctest::Approx(0.25));
  CHECK(cfg.get_int_list("alpha.list") == std::vector<int64_t>{1, 2, 3});
  CHECK_THROWS_AS(cfg.get_string("alpha.missing"), std::runtime_error);
  CHECK_THROWS_AS(cfg.get_int("alpha.name"), std::runtime_error);
}

TEST_CASE("config overrides and merge precedence") {
  auto cfg = Config::defaults();
  CHECK(cfg.get_uint("env.k") == 10);
  CHECK(cfg.get_double("agent.gamma") == doctest::Approx(0.9));
  CHECK(cfg.get_double("agent.eta") == doctest::Approx(0.001));
  CHECK(cfg.get_uint("agent.episodes") == 500);
  CHECK(cfg.get_double("agent.filter_threshold") == doctest::Approx(3.5));
  CHECK(cfg.get_uint("mf.dim") == 32);
  CHECK(cfg.get_uint("bpr.dim") == 32);
  CHECK(cfg.get_double("promotion.top_fraction") == doctest::Approx(0.01));
  CHECK(cfg.get_double("promotion.retained_fraction") ==
        doctest::Approx(0.05));
  CHECK(cfg.get_uint("env.finetune_steps") == 200);
  CHECK(cfg.get_uint("state.reward_buckets") == 10);
  CHECK(cfg.get_uint("tree.depth") == 2);
  CHECK(cfg.get_double("agent.adopter_fraction") == doctest::Approx(0.05));

  cfg.apply_overrides({"env.k=25", "agent.gamma = 0.5"});
  CHECK(cfg.get_uint("env.k") == 25);
  CHECK(cfg.get_double("agent.gamma") == doctest::Approx(0.5));

  auto extra = Config::from_string("[env]\nk = 7\n");
  cfg.merge_from(extra);
  CHECK(cfg.get_uint("env.k") == 7);
}

TEST_CASE("config dump round-trips and is byte-stable") {
  auto cfg = Config::defaults();
  auto text = cfg.dump();
  auto reparsed = Config::from_string(text);
  CHECK(reparsed.entries() == cfg.entries());
  CHECK(reparsed.dump() == text);
}

TEST_CASE("baseline rankings follow the stated statistics") {
  auto table = smile::testing::small_table(3, 12,
                                           {{0, 0, 5.0},
                                            {0, 1, 5.0},
                                            {0, 2, 4.0},
                                            {0, 3, 5.0},
                                            {0, 4, 5.0},
                                            {1, 5, 2.0},
                                            {1, 6, 2.0},
                                            {2, 7, 1.0}});
  // activity: u0 (5 rows) then u1 (2) then u2 (1)
  auto act = rank_baseline_users(table, BaselineKind::activity, 2, 1);
  CHECK(act.users == std::vector<UserId>{0, 1});
  auto inact = rank_baseline_users(table, BaselineKind::inactivity, 2, 1);
  CHECK(inact.users == std::vector<UserId>{2, 1});
  auto high = rank_baseline_users(table, BaselineKind::high_rating, 1, 1);
  CHECK(high.users == std::vector<UserId>{0});
  auto low = rank_baseline_users(table, BaselineKind::low_rating, 1, 1);
  CHECK(low.users == std::vector<UserId>{2});
}

TEST_CASE("rankings are stable under row permutation") {
  const auto& t = smile::testing::midsize();
  auto permuted = shuffled_rows(t, 555);
  for (auto kind : {BaselineKind::activity, BaselineKind::inactivity,
                    BaselineKind::high_rating, BaselineKind::low_rating,
                    BaselineKind::random}) {
    auto a = rank_baseline_users(t, kind, 20, 9);
    auto b = rank_baseline_users(permuted, kind, 20, 9);
    CHECK(a.users == b.users);
  }
}

TEST_CASE("tie-break by ascending user id") {
  auto table = smile::testing::small_table(
      4, 4, {{0, 0, 3.0}, {1, 1, 3.0}, {2, 2, 3.0}, {3, 3, 3.0}});
  auto act = rank_baseline_users(table, BaselineKind::activity, 4, 1);
  CHECK(act.users == std::vector<UserId>{0, 1, 2, 3});
  auto high = rank_baseline_users(table, BaselineKind::high_rating, 4, 1);
  CHECK(high.users == std::vector<UserId>{0, 1, 2, 3});
}

TEST_CASE("the filter gate replaces rejected users with the next ranked") {
  auto table = smile::testing::small_table(
      3, 2, {{0, 0, 5.0}, {0, 1, 5.0}, {1, 0, 5.0}, {2, 0, 1.0}});
  EmbeddingMatrix mf;
  mf.dim = 1;
  mf.U = Matrix(3, 1);
  mf.V = Matrix(2, 1);
  mf.U.at(0, 0) = 5.0;   // predicts 5
  mf.U.at(1, 0) = 1.0;   // predicts 1 -> rejected
  mf.U.at(2, 0) = 4.0;   // predicts 4
  mf.V.at(0, 0) = 1.0;
  mf.V.at(1, 0) = 1.0;
  PromotedSet ps;
  ps.item_ids = {0, 1};

  // activity ranks 0 (2 rows), then 1, then 2; the gate drops user 1
  auto sel = rank_baseline_users(table, BaselineKind::activity, 2, 1, &mf,
                                 &ps, 3.5);
  CHECK(sel.users == std::vector<UserId>{0, 2});
  CHECK_FALSE(sel.truncated);

  // asking for more than the survivors yields a short list with a warning
  auto all = rank_baseline_users(table, BaselineKind::activity, 3, 1, &mf,
                                 &ps, 3.5);
  CHECK(all.users == std::vector<UserId>{0, 2});
  CHECK(all.truncated);
}

TEST_CASE("random baseline differs across seeds but respects the gate") {
  const auto& t = smile::testing::midsize();
  auto a = rank_baseline_users(t, BaselineKind::random, 30, 1);
  auto b = rank_baseline_users(t, BaselineKind::random, 30, 2);
  CHECK(a.users != b.users);
  auto a2 = rank_baseline_users(t, BaselineKind::random, 30, 1);
  CHECK(a.users == a2.users);
}

TEST_CASE("eval_ranking on a hand-built case") {
  // 1 user; relevant test items {0, 1}; train holds item 3 (excluded).
  // scores rank item 0 then 2 then 1 then 3.
  auto train = smile::testing::small_table(1, 4, {{0, 3, 5.0}});
  auto test = smile::testing::small_table(1, 4, {{0, 0, 5.0}, {0, 1, 4.0}});
  BprModel m;
  m.dim = 1;
  m.P = Matrix(1, 1);
  m.Q = Matrix(4, 1);
  m.P.at(0, 0) = 1.0;
  m.Q.at(0, 0) = 0.9;
  m.Q.at(1, 0) = 0.3;
  m.Q.at(2, 0) = 0.5;
  m.Q.at(3, 0) = 10.0;  // would top the list, but it is excluded

  auto [p2, r2] = eval_ranking(m, train, test, 2, 4.0);
  // top-2 of {0,1,2} = {0,2}: one hit of two relevant
  CHECK(p2 == doctest::Approx(0.5));
  CHECK(r2 == doctest::Approx(0.5));

  // top-3 covers both relevant items: recall 1, precision 2/3
  auto [p3, r3] = eval_ranking(m, train, test, 3, 4.0);
  CHECK(p3 == doctest::Approx(2.0 / 3.0));
  CHECK(r3 == doctest::Approx(1.0));

  // relevance threshold can disqualify every user
  CHECK_THROWS_AS(eval_ranking(m, train, test, 2, 5.5), std::runtime_error);
}

TEST_CASE("recall denominator caps at k") {
  // 5 relevant items, k=2, both slots hit: recall = 2/min(5,2) = 1
  auto train = smile::testing::small_table(1, 8, {{0, 7, 5.0}});
  std::vector<std::tuple<UserId, ItemId, double>> rel;
  for (ItemId i = 0; i < 5; ++i) rel.push_back({0, i, 5.0});
  auto test = smile::testing::small_table(1, 8, rel);
  BprModel m;
  m.dim = 1;
  m.P = Matrix(1, 1);
  m.Q = Matrix(8, 1);
  m.P.at(0, 0) = 1.0;
  for (ItemId i = 0; i < 8; ++i) m.Q.at(i, 0) = i < 5 ? 1.0 - 0.1 * i : -1.0;
  auto [p, r] = eval_ranking(m, train, test, 2, 4.0);
  CHECK(p == doctest::Approx(1.0));
  CHECK(r == doctest::Approx(1.0));
}

TEST_CASE("metric bounds hold on randomized inputs") {
  Rng rng(402);
  for (int trial = 0; trial < 30; ++trial) {
    size_t users = 2 + rng.index(10);
    size_t items = 10 + rng.index(30);
    std::vector<std::tuple<UserId, ItemId, double>> train_rows, test_rows;
    for (UserId u = 0; u < users; ++u) {
      std::set<ItemId> seen;
      size_t n = 2 + rng.index(6);
      while (seen.size() < n) seen.insert(ItemId(rng.index(items)));
      size_t j = 0;
      for (ItemId i : seen) {
        double rating = 1.0 + double(rng.index(5));
        if (j++ % 2 == 0)
          train_rows.push_back({u, i, rating});
        else
          test_rows.push_back({u, i, rating});
      }
    }
    if (test_rows.empty()) continue;
    auto train = smile::testing::small_table(users, items, train_rows);
    auto test = smile::testing::small_table(users, items, test_rows);
    BprModel m;
    m.dim = 3;
    m.P = Matrix(users, 3);
    m.Q = Matrix(items, 3);
    Rng mrng(trial);
    m.P.fill_uniform(mrng, -1.0, 1.0);
    m.Q.fill_uniform(mrng, -1.0, 1.0);
    try {
      auto [p, r] = eval_ranking(m, train, test, 5, 4.0);
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
      CHECK(r >= 0.0);
      CHECK(r <= 1.0);
    } catch (const std::runtime_error&) {
      // no eligible user in this draw
    }
  }
}

TEST_CASE("zero-adopter baseline reports the pristine reward") {
  auto base = smile::testing::midsize();
  auto [ps, low] = build_promoted_set(base, 0.02, 0.10, 3);
  auto mf = train_mf(low, MfConfig{.dim = 6, .epochs = 5, .lr = 0.01,
                                   .reg = 0.02}, 3);
  auto bpr = train_bpr(low, BprConfig{.dim = 6, .epochs = 3, .lr = 0.02,
                                      .reg = 0.01}, 3);
  EnvState env(low, bpr, ps, mf, {});
  auto report = run_baseline(env, low, mf, BaselineKind::random, 2, 0, 9, 0.0);
  CHECK(report.avg_reward == doctest::Approx(env.pristine_reward()));
  CHECK(report.max_reward == doctest::Approx(env.pristine_reward()));
  CHECK(report.steps == 0);

  // two seeds, nonzero adopters: valid but different traces
  auto r1 = run_baseline(env, low, mf, BaselineKind::random, 1, 5, 1, 0.0);
  auto r2 = run_baseline(env, low, mf, BaselineKind::random, 1, 5, 2, 0.0);
  CHECK(r1.steps == 5);
  CHECK(r2.steps == 5);
  CHECK(r1.avg_reward > 0.0);
}

TEST_CASE("rq1 sweep starts at exactly zero and stays finite") {
  auto base = smile::testing::midsize();
  auto [ps, low] = build_promoted_set(base, 0.02, 0.10, 4);
  auto mf = train_mf(low, MfConfig{.dim = 6, .epochs = 5, .lr = 0.01,
                                   .reg = 0.02}, 4);
  auto bpr = train_bpr(low, BprConfig{.dim = 6, .epochs = 3, .lr = 0.02,
                                      .reg = 0.01}, 4);
  EnvConfig ec;
  ec.finetune_steps = 40;
  EnvState env(low, bpr, ps, mf, ec);

  auto rows = rq1_sweep(env, mf, {0, 10, 30}, 5);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].adopters == 0);
  CHECK(rows[0].increased_exposure == 0.0);
  for (const auto& r : rows) CHECK(std::isfinite(r.increased_exposure));

  CHECK_THROWS_AS(rq1_sweep(env, mf, {10, 10}, 5), std::invalid_argument);
}

TEST_CASE("sampling time drops from flat to depth-two at scale") {
  Rng rng(6);
  Matrix emb(1500, 16);
  emb.fill_uniform(rng, -1.0, 1.0);
  double flat = time_sample_path_ns(emb, 1, 800, 3);
  double tree = time_sample_path_ns(emb, 2, 800, 3);
  CHECK(tree < flat);
}

TEST_CASE("episode length defaults to five percent of the users") {
  auto cfg = Config::defaults();
  CHECK(resolve_episode_len(cfg, 943) == 48);  // ceil(0.05 * 943)
  CHECK(resolve_episode_len(cfg, 6040) == 302);
  CHECK(resolve_episode_len(cfg, 4) == 1);
  cfg.set("agent.episode_len", "7");
  CHECK(resolve_episode_len(cfg, 943) == 7);
}

TEST_CASE("reference tables carry the published comparison points") {
  const auto& sel = reference_selection_results();
  bool found = false;
  for (const auto& r : sel)
    if (std::string(r.dataset) == "ml-100k" && std::string(r.policy) == "random")
      found = r.avg_reward == 4.72 && r.max_reward == 36;
  CHECK(found);
  const auto& rank = reference_ranking_results();
  bool found2 = false;
  for (const auto& r : rank)
    if (std::string(r.dataset) == "ml-100k")
      found2 = r.precision_before == 0.2194 && r.recall_before == 0.0505;
  CHECK(found2);
}
