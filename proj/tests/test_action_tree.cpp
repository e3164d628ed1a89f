#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "smile/action_tree.hpp"
#include "smile/rng.hpp"

using namespace smile;

namespace {

// Uniform policy over children, for structure-only tests.
PolicyEvalFn uniform_policy() {
  return [](uint32_t, uint32_t children, std::span<const double>) {
    return std::vector<double>(children, 1.0 / double(children));
  };
}

// Deterministic but non-uniform pseudo-random policy keyed on the node id.
PolicyEvalFn random_policy(uint64_t seed) {
  return [seed](uint32_t policy_id, uint32_t children,
                std::span<const double>) {
    Rng rng(derive_seed(seed, 0x9e11, policy_id));
    std::vector<double> p(children);
    double total = 0.0;
    for (auto& x : p) {
      x = 0.05 + rng.next_double();
      total += x;
    }
    for (auto& x : p) x /= total;
    return p;
  };
}

struct AuditStats {
  size_t leaves = 0;
  size_t internal = 0;
  size_t max_children = 0;
};

// Full structural audit; every ClusterTree invariant asserted in one pass.
AuditStats audit_tree(const ClusterTree& t) {
  const auto& nodes = t.nodes();
  AuditStats stats;
  std::set<int32_t> seen_users;

  std::function<std::pair<size_t, size_t>(uint32_t)> walk =
      [&](uint32_t id) -> std::pair<size_t, size_t> {  // (height, leaves)
    const auto& n = nodes[id];
    if (n.children.empty()) {
      REQUIRE(n.leaf_user >= 0);
      CHECK(seen_users.insert(n.leaf_user).second);  // bijection, one leaf per user
      CHECK(t.leaf_of_user(UserId(n.leaf_user)) == id);
      ++stats.leaves;
      return {0, 1};
    }
    REQUIRE(n.leaf_user < 0);
    REQUIRE(n.policy >= 0);
    ++stats.internal;
    stats.max_children = std::max(stats.max_children, n.children.size());
    CHECK(n.children.size() >= 1);
    CHECK(n.children.size() <= t.arity());

    size_t height = 0;
    size_t leaves = 0;
    size_t min_leaves = size_t(-1), max_leaves = 0;
    size_t min_h = size_t(-1), max_h = 0;
    uint32_t avail_sum = 0;
    for (uint32_t ch : n.children) {
      CHECK(nodes[ch].parent == int32_t(id));
      auto [h, l] = walk(ch);
      height = std::max(height, h + 1);
      leaves += l;
      min_leaves = std::min(min_leaves, l);
      max_leaves = std::max(max_leaves, l);
      min_h = std::min(min_h, h);
      max_h = std::max(max_h, h);
      avail_sum += nodes[ch].avail;
    }
    // sibling subtree sizes differ by at most one, heights likewise
    CHECK(max_leaves - min_leaves <= 1);
    CHECK(max_h - min_h <= 1);
    CHECK(n.avail == avail_sum);
    return {height, leaves};
  };

  auto [height, leaves] = walk(t.root());
  CHECK(leaves == t.num_users());
  CHECK(stats.leaves == t.num_users());
  CHECK(height <= t.depth());
  CHECK(height == t.height());
  if (t.arity() >= 2)
    CHECK(stats.internal <= count_nonleaf(t.arity(), t.depth()));
  return stats;
}

Matrix random_embeddings(size_t users, size_t dim, uint64_t seed) {
  Matrix m(users, dim);
  Rng rng(seed);
  m.fill_uniform(rng, -1.0, 1.0);
  return m;
}

}  // namespace

TEST_CASE("arity formula on the published user counts") {
  CHECK(compute_arity(943, 2) == 31);   // 31^2 = 961 >= 943 > 900
  CHECK(compute_arity(6040, 2) == 78);  // 78^2 = 6084 >= 6040
  CHECK(compute_arity(943, 1) == 943);  // depth 1 is the flat policy
  CHECK(compute_arity(4, 2) == 2);
  CHECK(compute_arity(1, 3) == 1);
  CHECK(compute_arity(1000000, 3) == 100);
  CHECK(compute_arity(1000001, 3) == 101);
}

TEST_CASE("internal node count closed form") {
  CHECK(count_nonleaf(31, 2) == 32);  // (961-1)/30
  CHECK(count_nonleaf(2, 3) == 7);
  CHECK(count_nonleaf(78, 1) == 1);
  CHECK(count_nonleaf(1, 4) == 4);    // degenerate chain
}

TEST_CASE("four users at depth two build the textbook shape") {
  auto emb = random_embeddings(4, 3, 11);
  auto t = ClusterTree::build(emb, 2, 11);
  CHECK(t.arity() == 2);
  CHECK(t.num_internal() == 3);  // root plus two mid nodes
  const auto& root = t.nodes()[t.root()];
  REQUIRE(root.children.size() == 2);
  for (uint32_t ch : root.children)
    CHECK(t.nodes()[ch].children.size() == 2);
  audit_tree(t);
}

TEST_CASE("single user builds a single leaf") {
  auto emb = random_embeddings(1, 3, 4);
  auto t = ClusterTree::build(emb, 2, 4);
  CHECK(t.num_users() == 1);
  CHECK(t.num_internal() == 0);
  CHECK(t.nodes().size() == 1);
  CHECK(t.height() == 0);
}

TEST_CASE("duplicate user vectors split stably by id") {
  Matrix emb(6, 2);  // all-equal rows: zero covariance
  for (auto& x : emb.data) x = 0.5;
  auto t = ClusterTree::build(emb, 2, 9);
  audit_tree(t);
  // contiguous id blocks: with zero variance the sort key is the id
  auto& root = t.nodes()[t.root()];
  std::vector<int32_t> first_block_users;
  std::function<void(uint32_t)> collect = [&](uint32_t id) {
    if (t.nodes()[id].leaf_user >= 0) {
      first_block_users.push_back(t.nodes()[id].leaf_user);
      return;
    }
    for (auto ch : t.nodes()[id].children) collect(ch);
  };
  collect(root.children[0]);
  CHECK(first_block_users == std::vector<int32_t>{0, 1});
}

TEST_CASE("ml-100k-scale structural audit") {
  auto emb = random_embeddings(943, 32, 77);
  auto t = ClusterTree::build(emb, 2, 77);
  CHECK(t.arity() == 31);
  auto stats = audit_tree(t);
  CHECK(stats.leaves == 943);
  CHECK(stats.max_children <= 31);
  CHECK(stats.internal <= 32);
  CHECK(t.height() <= 2);
}

TEST_CASE("tree build is deterministic") {
  auto emb = random_embeddings(100, 8, 5);
  auto a = ClusterTree::build(emb, 2, 123);
  auto b = ClusterTree::build(emb, 2, 123);
  CHECK(a == b);
}

TEST_CASE("masked leaf probabilities always sum to one") {
  Rng rng(2024);
  for (int trial = 0; trial < 25; ++trial) {
    size_t users = 2 + rng.index(60);
    size_t depth = 1 + rng.index(3);
    auto emb = random_embeddings(users, 4, rng.next_u64());
    auto t = ClusterTree::build(emb, depth, rng.next_u64());
    auto policy = random_policy(rng.next_u64());
    std::vector<double> state;  // policies here ignore the state

    // random availability mask with at least one open leaf
    size_t closed = rng.index(users);
    for (size_t i = 0; i < closed; ++i)
      t.set_available(UserId(rng.index(users)), false);
    if (t.available_count() == 0) t.set_available(0, true);

    auto probs = enumerate_leaf_probabilities(t, policy, state);
    double total = 0.0;
    for (UserId u = 0; u < users; ++u) {
      if (!t.is_available(u)) CHECK(probs[u] == 0.0);
      total += probs[u];
    }
    CHECK(std::fabs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("single available leaf is drawn with log prob zero") {
  auto emb = random_embeddings(12, 4, 3);
  auto t = ClusterTree::build(emb, 2, 3);
  for (UserId u = 0; u < 12; ++u)
    if (u != 7) t.set_available(u, false);
  Rng rng(1);
  auto s = sample_path(t, random_policy(8), {}, rng);
  CHECK(s.leaf_user == 7);
  CHECK(s.log_prob == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sampling matches the enumerated distribution") {
  auto emb = random_embeddings(6, 3, 6);
  auto t = ClusterTree::build(emb, 2, 6);
  auto policy = random_policy(99);
  auto expected = enumerate_leaf_probabilities(t, policy, {});

  Rng rng(321);
  std::vector<size_t> counts(6, 0);
  const int draws = 40000;
  for (int i = 0; i < draws; ++i)
    ++counts[sample_path(t, policy, {}, rng).leaf_user];
  for (UserId u = 0; u < 6; ++u)
    CHECK(double(counts[u]) / draws ==
          doctest::Approx(expected[u]).epsilon(0.08));
}

TEST_CASE("uniform four-user tree gives quarter probabilities") {
  auto emb = random_embeddings(4, 3, 14);
  auto t = ClusterTree::build(emb, 2, 14);
  auto probs = enumerate_leaf_probabilities(t, uniform_policy(), {});
  for (double p : probs) CHECK(p == doctest::Approx(0.25).epsilon(1e-12));

  Rng rng(5);
  auto s = sample_path(t, uniform_policy(), {}, rng);
  CHECK(s.log_prob == doctest::Approx(std::log(0.25)).epsilon(1e-12));
  CHECK(s.steps.size() == 2);  // one decision per level
}

TEST_CASE("sample_path log prob equals the masked product") {
  auto emb = random_embeddings(30, 4, 8);
  auto t = ClusterTree::build(emb, 3, 8);
  auto policy = random_policy(17);
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    auto s = sample_path(t, policy, {}, rng);
    // recompute from the stored path and masks
    double lp = 0.0;
    for (const auto& step : s.steps) {
      auto probs = policy(step.policy,
                          uint32_t(t.nodes()[step.node].children.size()), {});
      double total = 0.0;
      for (size_t j = 0; j < probs.size(); ++j)
        if (step.avail_mask[j]) total += probs[j];
      lp += std::log(probs[step.choice] / total);
    }
    CHECK(s.log_prob == doctest::Approx(lp).epsilon(1e-12));
    t.set_available(s.leaf_user, false);
    if (t.available_count() == 0) break;
  }
}

TEST_CASE("availability mutations keep counters exact") {
  auto emb = random_embeddings(50, 4, 10);
  auto t = ClusterTree::build(emb, 2, 10);
  auto pristine = t;
  Rng rng(7);
  std::vector<bool> open(50, true);
  for (int op = 0; op < 500; ++op) {
    UserId u = UserId(rng.index(50));
    bool make_open = rng.next_double() < 0.5;
    t.set_available(u, make_open);
    open[u] = make_open;
    size_t expect = 0;
    for (bool b : open) expect += b;
    CHECK(t.available_count() == expect);
  }
  for (UserId u = 0; u < 50; ++u) t.set_available(u, true);
  CHECK(t == pristine);

  // idempotence
  t.set_available(3, false);
  auto once = t;
  t.set_available(3, false);
  CHECK(t == once);
  t.set_available(3, true);
  t.set_available(3, true);
  CHECK(t == pristine);
}

TEST_CASE("exhausted availability raises and recovers") {
  auto emb = random_embeddings(5, 3, 12);
  auto t = ClusterTree::build(emb, 2, 12);
  for (UserId u = 0; u < 5; ++u) t.set_available(u, false);
  CHECK(t.available_count() == 0);
  Rng rng(3);
  CHECK_THROWS_AS(sample_path(t, uniform_policy(), {}, rng),
                  action_space_exhausted);
  t.reset_availability();
  CHECK(t.available_count() == 5);
  CHECK_NOTHROW(sample_path(t, uniform_policy(), {}, rng));
}

TEST_CASE("masked enumeration sums to one after consuming users") {
  auto emb = random_embeddings(40, 6, 13);
  auto t = ClusterTree::build(emb, 2, 13);
  auto policy = random_policy(31);
  Rng rng(9);
  for (int k = 0; k < 35; ++k)
    t.set_available(UserId(rng.index(40)), false);
  if (t.available_count() == 0) t.set_available(11, true);

  auto probs = enumerate_leaf_probabilities(t, policy, {});
  double total = 0.0;
  for (double p : probs) total += p;
  CHECK(std::fabs(total - 1.0) < 1e-9);
}

TEST_CASE("sample touches exactly height-many policies") {
  auto emb = random_embeddings(200, 8, 21);
  for (size_t depth : {1u, 2u, 3u}) {
    auto t = ClusterTree::build(emb, depth, 21);
    size_t evals = 0;
    PolicyEvalFn counting = [&](uint32_t, uint32_t children,
                                std::span<const double>) {
      ++evals;
      return std::vector<double>(children, 1.0 / double(children));
    };
    Rng rng(4);
    sample_path(t, counting, {}, rng);
    CHECK(evals <= depth);
    CHECK(evals == t.height());
  }
}

TEST_CASE("tree serialization round-trips") {
  auto emb = random_embeddings(37, 5, 15);
  auto t = ClusterTree::build(emb, 2, 15);
  t.set_available(4, false);
  t.save("/tmp/smile_test_tree.bin");
  auto u = ClusterTree::load("/tmp/smile_test_tree.bin");
  CHECK(t == u);
  CHECK(u.arity() == t.arity());
  CHECK(u.seed() == t.seed());
}

TEST_CASE("greedy descent takes the argmax open child") {
  auto emb = random_embeddings(9, 4, 19);
  auto t = ClusterTree::build(emb, 2, 19);
  auto policy = random_policy(55);

  auto g = greedy_path(t, policy, {});
  // manual argmax walk
  uint32_t cur = t.root();
  double lp = 0.0;
  while (t.nodes()[cur].leaf_user < 0) {
    const auto& node = t.nodes()[cur];
    auto probs = policy(uint32_t(node.policy),
                        uint32_t(node.children.size()), {});
    size_t best = 0;
    for (size_t j = 1; j < probs.size(); ++j)
      if (probs[j] > probs[best]) best = j;
    double total = 0.0;
    for (double p : probs) total += p;
    lp += std::log(probs[best] / total);
    cur = node.children[best];
  }
  CHECK(g.leaf_user == UserId(t.nodes()[cur].leaf_user));
  CHECK(g.log_prob == doctest::Approx(lp).epsilon(1e-12));

  // repeated greedy draws with masking enumerate users in value order and
  // never repeat
  t.reset_availability();
  std::set<UserId> seen;
  for (int i = 0; i < 9; ++i) {
    auto s = greedy_path(t, policy, {});
    CHECK(seen.insert(s.leaf_user).second);
    t.set_available(s.leaf_user, false);
  }
  CHECK(seen.size() == 9);
  CHECK_THROWS_AS(greedy_path(t, policy, {}), action_space_exhausted);
}
