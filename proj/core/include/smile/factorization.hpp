#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smile/dataset.hpp"
#include "smile/matrix.hpp"

namespace smile {

/// Latent-factor model for rating prediction. U rows are the user profiles
/// consumed by the agent and the action tree; both matrices stay frozen once
/// pretraining finishes.
struct EmbeddingMatrix {
  Matrix U;  // num_users x dim
  Matrix V;  // num_items x dim
  size_t dim = 0;
};

struct MfConfig {
  size_t dim = 32;
  size_t epochs = 50;
  double lr = 0.005;
  double reg = 0.02;
};

/// SGD on squared error over observed entries with L2 regularization.
/// Deterministic under seed (single-threaded). rmse_per_epoch, when given,
/// receives the training RMSE after each epoch. Throws on divergence.
EmbeddingMatrix train_mf(const RatingsTable& table, const MfConfig& cfg,
                         uint64_t seed,
                         std::vector<double>* rmse_per_epoch = nullptr);

/// dot(U[user], V[item]) clamped to the rating scale [1, 5].
double predict_rating(const EmbeddingMatrix& emb, UserId user, ItemId item);

/// Pairwise ranking model (BPR). score(u,i) = dot(P[u], Q[i]).
struct BprModel {
  Matrix P;  // num_users x dim
  Matrix Q;  // num_items x dim
  size_t dim = 0;
  size_t trained_on_rows = 0;

  double score(UserId u, ItemId i) const {
    return dot(P.row(u), Q.row(i), dim);
  }

  bool operator==(const BprModel&) const = default;
};

struct BprConfig {
  size_t dim = 32;
  size_t epochs = 30;
  double lr = 0.01;
  double reg = 0.01;
};

/// Standard pairwise BPR ascent on sampled (u, i+, i-) triples; i- uniform
/// over items the user has not interacted with. auc_per_epoch, when given,
/// receives a sampled-pair training AUC after each epoch.
BprModel train_bpr(const RatingsTable& table, const BprConfig& cfg,
                   uint64_t seed, std::vector<double>* auc_per_epoch = nullptr);

/// Warm-start refresh after rows [first_new_row, table.size()) were appended.
/// Draws positives from the new rows mixed 1:1 with uniform historical
/// positives, for `steps` gradient steps. steps == 0 leaves the model
/// bit-identical.
void fine_tune_bpr(BprModel& model, const RatingsTable& table,
                   size_t first_new_row, size_t steps, double lr, double reg,
                   uint64_t seed);

// Single-sample gradients, shared by the trainers and the finite-difference
// checks. Loss conventions:
//   MF entry:   L = 1/2 (y - u.v)^2 + reg/2 (|u|^2 + |v|^2)
//   BPR triple: L = -ln sigmoid(p.(q_pos - q_neg))
//                   + reg/2 (|p|^2 + |q_pos|^2 + |q_neg|^2)
void mf_entry_gradient(std::span<const double> u, std::span<const double> v,
                       double y, double reg, std::span<double> grad_u,
                       std::span<double> grad_v);
void bpr_triple_gradient(std::span<const double> p,
                         std::span<const double> q_pos,
                         std::span<const double> q_neg, double reg,
                         std::span<double> grad_p, std::span<double> grad_qp,
                         std::span<double> grad_qn);

void save_embeddings(const EmbeddingMatrix& emb, const std::string& path);
EmbeddingMatrix load_embeddings(const std::string& path);
void save_bpr(const BprModel& model, const std::string& path);
BprModel load_bpr(const std::string& path);

}  // namespace smile
