#include "smile/action_tree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "io_util.hpp"

namespace smile {

namespace {

// Checked c^d with early exit once the bound is reached.
bool pow_at_least(size_t c, size_t d, size_t bound) {
  size_t acc = 1;
  for (size_t i = 0; i < d; ++i) {
    if (c != 0 && acc > bound / c + 1) return true;
    acc *= c;
    if (acc >= bound) return true;
  }
  return acc >= bound;
}

}  // namespace

size_t compute_arity(size_t num_users, size_t depth) {
  if (depth < 1 || num_users < 1)
    throw std::invalid_argument("compute_arity: need depth >= 1, users >= 1");
  if (depth == 1) return num_users;
  size_t lo = 1, hi = num_users;
  while (lo < hi) {
    size_t mid = lo + (hi - lo) / 2;
    if (pow_at_least(mid, depth, num_users))
      hi = mid;
    else
      lo = mid + 1;
  }
  return lo;
}

size_t count_nonleaf(size_t arity, size_t depth) {
  if (arity == 1) return depth;
  size_t acc = 0, layer = 1;
  for (size_t i = 0; i < depth; ++i) {
    acc += layer;
    layer *= arity;
  }
  return acc;  // (c^d - 1) / (c - 1)
}

namespace {

// First principal component of the centered user vectors, via fixed-count
// power iteration. Sign convention: first component with |v| > 1e-12 is
// positive. Returns false when the covariance is (numerically) zero.
bool principal_direction(const Matrix& emb, std::span<const UserId> users,
                         uint64_t seed, std::vector<double>& dir) {
  size_t d = emb.cols;
  size_t m = users.size();
  std::vector<double> mean(d, 0.0);
  for (UserId u : users)
    for (size_t k = 0; k < d; ++k) mean[k] += emb.at(u, k);
  for (size_t k = 0; k < d; ++k) mean[k] /= double(m);

  dir.assign(d, 0.0);
  Rng rng(seed);
  for (auto& x : dir) x = rng.uniform(-1.0, 1.0);

  std::vector<double> next(d);
  for (int iter = 0; iter < 100; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (UserId u : users) {
      double proj = 0.0;
      const double* row = emb.row(u);
      for (size_t k = 0; k < d; ++k) proj += (row[k] - mean[k]) * dir[k];
      for (size_t k = 0; k < d; ++k) next[k] += proj * (row[k] - mean[k]);
    }
    double norm = std::sqrt(dot(next.data(), next.data(), d));
    if (norm < 1e-30) return false;
    for (size_t k = 0; k < d; ++k) dir[k] = next[k] / norm;
  }
  for (size_t k = 0; k < d; ++k) {
    if (std::fabs(dir[k]) > 1e-12) {
      if (dir[k] < 0.0)
        for (size_t j = 0; j < d; ++j) dir[j] = -dir[j];
      break;
    }
  }
  // Center once so callers can project raw rows directly.
  for (size_t k = 0; k < d; ++k) dir.push_back(mean[k]);
  return true;
}

struct Builder {
  const Matrix& emb;
  size_t arity;
  uint64_t seed;
  std::vector<TreeNode> nodes;
  std::vector<uint32_t> leaf_of_user;
  uint64_t split_counter = 0;

  uint32_t build_group(std::vector<UserId> users, int32_t parent) {
    uint32_t id = uint32_t(nodes.size());
    nodes.emplace_back();
    nodes[id].parent = parent;

    if (users.size() == 1) {
      nodes[id].leaf_user = int32_t(users[0]);
      nodes[id].avail = 1;
      leaf_of_user[users[0]] = id;
      return id;
    }

    // Order users along the first principal component; identical vectors
    // (zero covariance) fall back to user-id order.
    std::vector<double> dir;
    bool ok = principal_direction(emb, users,
                                  derive_seed(seed, 0x9ca, split_counter++),
                                  dir);
    size_t d = emb.cols;
    std::vector<std::pair<double, UserId>> proj(users.size());
    for (size_t i = 0; i < users.size(); ++i) {
      double p = 0.0;
      if (ok) {
        const double* row = emb.row(users[i]);
        for (size_t k = 0; k < d; ++k) p += (row[k] - dir[d + k]) * dir[k];
      }
      proj[i] = {p, users[i]};
    }
    std::sort(proj.begin(), proj.end());

    // arity contiguous blocks of size ceil(m/c) or floor(m/c); empty blocks
    // dropped when m < c.
    size_t m = users.size();
    size_t c = arity;
    size_t q = m / c, r = m % c;
    size_t pos = 0;
    for (size_t b = 0; b < c && pos < m; ++b) {
      size_t len = q + (b < r ? 1 : 0);
      if (len == 0) continue;
      std::vector<UserId> block(len);
      for (size_t i = 0; i < len; ++i) block[i] = proj[pos + i].second;
      pos += len;
      uint32_t child = build_group(std::move(block), int32_t(id));
      nodes[id].children.push_back(child);
      nodes[id].avail += nodes[child].avail;
    }
    return id;
  }
};

}  // namespace

ClusterTree ClusterTree::build(const Matrix& user_embeddings, size_t depth,
                               uint64_t seed) {
  size_t n = user_embeddings.rows;
  if (n < 1) throw std::invalid_argument("tree needs at least one user");
  size_t c = compute_arity(n, depth);

  Builder b{user_embeddings, std::max<size_t>(c, 1), seed, {}, {}, 0};
  b.leaf_of_user.assign(n, 0);
  std::vector<UserId> all(n);
  for (size_t i = 0; i < n; ++i) all[i] = UserId(i);
  uint32_t root = b.build_group(std::move(all), -1);

  ClusterTree t;
  t.nodes_ = std::move(b.nodes);
  t.leaf_of_user_ = std::move(b.leaf_of_user);
  t.root_ = root;
  t.depth_ = depth;
  t.arity_ = c;
  t.seed_ = seed;

  // Policy slots in construction (preorder) order.
  uint32_t next_policy = 0;
  for (auto& node : t.nodes_)
    if (node.leaf_user < 0) node.policy = int32_t(next_policy++);
  t.num_internal_ = next_policy;
  return t;
}

void ClusterTree::set_available(UserId u, bool available) {
  if (u >= leaf_of_user_.size()) throw std::out_of_range("bad user id");
  uint32_t leaf = leaf_of_user_[u];
  uint32_t want = available ? 1u : 0u;
  if (nodes_[leaf].avail == want) return;
  int32_t delta = available ? 1 : -1;
  nodes_[leaf].avail = want;
  for (int32_t p = nodes_[leaf].parent; p >= 0; p = nodes_[p].parent)
    nodes_[p].avail = uint32_t(int64_t(nodes_[p].avail) + delta);
}

void ClusterTree::reset_availability() {
  // Leaves to 1, then recompute internal counters bottom-up. Construction
  // is preorder, so child ids are strictly greater and a reverse sweep works.
  for (auto& n : nodes_)
    if (n.leaf_user >= 0) n.avail = 1;
  for (size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].leaf_user >= 0) continue;
    uint32_t sum = 0;
    for (uint32_t ch : nodes_[i].children) sum += nodes_[ch].avail;
    nodes_[i].avail = sum;
  }
}

size_t ClusterTree::height() const {
  // Preorder construction: children follow parents, one reverse pass.
  std::vector<size_t> h(nodes_.size(), 0);
  size_t best = 0;
  for (size_t i = nodes_.size(); i-- > 0;) {
    if (nodes_[i].leaf_user >= 0) continue;
    size_t deepest = 0;
    for (uint32_t ch : nodes_[i].children)
      deepest = std::max(deepest, h[ch] + 1);
    h[i] = deepest;
    if (i == root_) best = deepest;
  }
  return best;
}

PathSample sample_path(const ClusterTree& tree, const PolicyEvalFn& policy,
                       std::span<const double> state, Rng& rng) {
  const auto& nodes = tree.nodes();
  if (nodes[tree.root()].avail == 0) throw action_space_exhausted();

  PathSample out;
  uint32_t cur = tree.root();
  while (nodes[cur].leaf_user < 0) {
    const auto& node = nodes[cur];
    auto probs = policy(uint32_t(node.policy), uint32_t(node.children.size()),
                        state);

    PathStep step;
    step.node = cur;
    step.policy = uint32_t(node.policy);
    step.avail_mask.resize(node.children.size());
    double total = 0.0;
    for (size_t j = 0; j < node.children.size(); ++j) {
      bool open = nodes[node.children[j]].avail > 0;
      step.avail_mask[j] = open ? 1 : 0;
      if (open) total += probs[j];
    }
    if (!(total > 0.0)) throw std::runtime_error("masked policy lost all mass");

    double draw = rng.next_double() * total;
    size_t pick = 0;
    double acc = 0.0;
    bool found = false;
    for (size_t j = 0; j < node.children.size(); ++j) {
      if (!step.avail_mask[j]) continue;
      acc += probs[j];
      pick = j;  // last open child wins if rounding pushes draw past acc
      if (draw < acc) {
        found = true;
        break;
      }
    }
    (void)found;
    step.choice = uint32_t(pick);
    out.log_prob += std::log(probs[pick] / total);
    out.steps.push_back(std::move(step));
    cur = node.children[pick];
  }
  out.leaf_user = UserId(nodes[cur].leaf_user);
  return out;
}

PathSample greedy_path(const ClusterTree& tree, const PolicyEvalFn& policy,
                       std::span<const double> state) {
  const auto& nodes = tree.nodes();
  if (nodes[tree.root()].avail == 0) throw action_space_exhausted();

  PathSample out;
  uint32_t cur = tree.root();
  while (nodes[cur].leaf_user < 0) {
    const auto& node = nodes[cur];
    auto probs = policy(uint32_t(node.policy), uint32_t(node.children.size()),
                        state);
    PathStep step;
    step.node = cur;
    step.policy = uint32_t(node.policy);
    step.avail_mask.resize(node.children.size());
    double total = 0.0;
    double best = -1.0;
    size_t pick = 0;
    for (size_t j = 0; j < node.children.size(); ++j) {
      bool open = nodes[node.children[j]].avail > 0;
      step.avail_mask[j] = open ? 1 : 0;
      if (!open) continue;
      total += probs[j];
      if (probs[j] > best) {
        best = probs[j];
        pick = j;
      }
    }
    step.choice = uint32_t(pick);
    out.log_prob += std::log(probs[pick] / total);
    out.steps.push_back(std::move(step));
    cur = node.children[pick];
  }
  out.leaf_user = UserId(nodes[cur].leaf_user);
  return out;
}

std::vector<double> enumerate_leaf_probabilities(
    const ClusterTree& tree, const PolicyEvalFn& policy,
    std::span<const double> state) {
  const auto& nodes = tree.nodes();
  std::vector<double> result(tree.num_users(), 0.0);
  if (nodes[tree.root()].avail == 0) return result;

  // DFS carrying the product of masked probabilities.
  std::vector<std::pair<uint32_t, double>> stack{{tree.root(), 1.0}};
  while (!stack.empty()) {
    auto [cur, p] = stack.back();
    stack.pop_back();
    const auto& node = nodes[cur];
    if (node.leaf_user >= 0) {
      result[size_t(node.leaf_user)] = p;
      continue;
    }
    auto probs = policy(uint32_t(node.policy), uint32_t(node.children.size()),
                        state);
    double total = 0.0;
    for (size_t j = 0; j < node.children.size(); ++j)
      if (nodes[node.children[j]].avail > 0) total += probs[j];
    if (!(total > 0.0)) continue;
    for (size_t j = 0; j < node.children.size(); ++j) {
      if (nodes[node.children[j]].avail == 0) continue;
      stack.push_back({node.children[j], p * probs[j] / total});
    }
  }
  return result;
}

void ClusterTree::save(const std::string& path) const {
  auto f = io::open_out(path);
  io::write_magic(f, "SMILETR1");
  io::write_pod<uint64_t>(f, leaf_of_user_.size());
  io::write_pod<uint64_t>(f, depth_);
  io::write_pod<uint64_t>(f, arity_);
  io::write_pod<uint64_t>(f, seed_);
  io::write_pod<uint64_t>(f, num_internal_);
  io::write_pod<uint32_t>(f, root_);
  io::write_pod<uint64_t>(f, nodes_.size());
  for (const auto& n : nodes_) {
    io::write_pod<int32_t>(f, n.parent);
    io::write_pod<int32_t>(f, n.leaf_user);
    io::write_pod<int32_t>(f, n.policy);
    io::write_pod<uint32_t>(f, n.avail);
    io::write_vec(f, n.children);
  }
  io::write_vec(f, leaf_of_user_);
  if (!f) throw std::runtime_error("write failed: " + path);
}

ClusterTree ClusterTree::load(const std::string& path) {
  auto f = io::open_in(path);
  io::check_magic(f, "SMILETR1", "cluster tree");
  ClusterTree t;
  auto users = io::read_pod<uint64_t>(f);
  t.depth_ = io::read_pod<uint64_t>(f);
  t.arity_ = io::read_pod<uint64_t>(f);
  t.seed_ = io::read_pod<uint64_t>(f);
  t.num_internal_ = io::read_pod<uint64_t>(f);
  t.root_ = io::read_pod<uint32_t>(f);
  auto count = io::read_pod<uint64_t>(f);
  t.nodes_.resize(count);
  for (auto& n : t.nodes_) {
    n.parent = io::read_pod<int32_t>(f);
    n.leaf_user = io::read_pod<int32_t>(f);
    n.policy = io::read_pod<int32_t>(f);
    n.avail = io::read_pod<uint32_t>(f);
    n.children = io::read_vec<uint32_t>(f);
  }
  t.leaf_of_user_ = io::read_vec<uint32_t>(f);
  if (t.leaf_of_user_.size() != users)
    throw std::runtime_error("corrupt cluster tree file");
  return t;
}

}  // namespace smile
