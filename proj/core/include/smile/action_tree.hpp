#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <span>
#include <string>
#include <vector>

#include "smile/dataset.hpp"
#include "smile/matrix.hpp"
#include "smile/rng.hpp"

namespace smile {

/// Smallest integer c with c^depth >= num_users (integer-safe; no floating
/// point root extraction).
size_t compute_arity(size_t num_users, size_t depth);

/// Closed-form count of internal nodes of a perfect c-ary tree of the given
/// depth: (c^d - 1) / (c - 1). Built trees may hold fewer. c == 1 degenerates
/// to a chain of length depth.
size_t count_nonleaf(size_t arity, size_t depth);

struct TreeNode {
  std::vector<uint32_t> children;  // node ids; empty for leaves
  int32_t parent = -1;
  int32_t leaf_user = -1;  // user id for leaves, -1 for internal nodes
  int32_t policy = -1;     // policy slot for internal nodes, -1 for leaves
  uint32_t avail = 0;      // available leaves in this subtree

  bool operator==(const TreeNode&) const = default;
};

/// Evaluates the policy attached to a node: (policy_id, child_count, state)
/// -> probability vector over children (unmasked; masking happens in the
/// sampler).
using PolicyEvalFn = std::function<std::vector<double>(
    uint32_t policy_id, uint32_t child_count, std::span<const double> state)>;

/// One decision along a sampled root-to-leaf path, with the availability
/// mask that was in force when the choice was made (needed to reproduce the
/// masked distribution exactly during the policy update).
struct PathStep {
  uint32_t node = 0;
  uint32_t policy = 0;
  uint32_t choice = 0;              // index into children
  std::vector<uint8_t> avail_mask;  // one flag per child
};

struct PathSample {
  std::vector<PathStep> steps;
  UserId leaf_user = 0;
  double log_prob = 0.0;  // log of the product of masked per-node choices
};

struct action_space_exhausted : std::runtime_error {
  action_space_exhausted() : std::runtime_error("action space exhausted") {}
};

/// Balanced c-ary tree over users: leaves are users (a bijection), internal
/// nodes carry a policy slot and a count of available leaves below. Built by
/// recursive principal-component splits so that sibling subtree sizes differ
/// by at most one.
class ClusterTree {
 public:
  /// user_embeddings: one row per user (the pretrained profile matrix).
  /// Power iteration on the centered covariance picks the split direction
  /// (fixed 100 iterations, first nonzero component forced positive), users
  /// are sorted by projection (ties by user id) and cut into `arity`
  /// near-equal contiguous blocks.
  static ClusterTree build(const Matrix& user_embeddings, size_t depth,
                           uint64_t seed);

  size_t num_users() const { return leaf_of_user_.size(); }
  size_t depth() const { return depth_; }
  size_t arity() const { return arity_; }
  uint64_t seed() const { return seed_; }
  size_t num_internal() const { return num_internal_; }

  const std::vector<TreeNode>& nodes() const { return nodes_; }
  uint32_t root() const { return root_; }
  uint32_t leaf_of_user(UserId u) const { return leaf_of_user_[u]; }

  bool is_available(UserId u) const {
    return nodes_[leaf_of_user_[u]].avail != 0;
  }
  size_t available_count() const { return nodes_[root_].avail; }

  /// Flips one leaf and fixes the counters on the path to the root;
  /// idempotent.
  void set_available(UserId u, bool available);
  void reset_availability();

  /// Height of the tree (edges on the longest root-leaf path).
  size_t height() const;

  void save(const std::string& path) const;
  static ClusterTree load(const std::string& path);

  bool operator==(const ClusterTree&) const = default;

 private:
  std::vector<TreeNode> nodes_;
  std::vector<uint32_t> leaf_of_user_;
  uint32_t root_ = 0;
  size_t depth_ = 0;
  size_t arity_ = 0;
  size_t num_internal_ = 0;
  uint64_t seed_ = 0;
};

/// Top-down sampling: at every internal node the policy distribution over
/// children is masked by subtree availability, renormalized, and sampled.
/// The returned log_prob is the log of the masked product. Throws
/// action_space_exhausted when no leaf is available.
PathSample sample_path(const ClusterTree& tree, const PolicyEvalFn& policy,
                       std::span<const double> state, Rng& rng);

/// Deterministic descent: the highest-probability open child at every node
/// (ties to the lower index). Same return contract as sample_path; used at
/// inference time once the policies have converged.
PathSample greedy_path(const ClusterTree& tree, const PolicyEvalFn& policy,
                       std::span<const double> state);

/// Exact per-user selection probabilities under the current availability
/// mask (unavailable users get 0). Sums to 1 whenever any leaf is available.
std::vector<double> enumerate_leaf_probabilities(const ClusterTree& tree,
                                                 const PolicyEvalFn& policy,
                                                 std::span<const double> state);

}  // namespace smile
