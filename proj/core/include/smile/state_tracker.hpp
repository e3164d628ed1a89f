#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "smile/dataset.hpp"
#include "smile/matrix.hpp"

namespace smile {

/// Linear bucketing of a reward value onto h one-hot positions.
struct RewardEncoding {
  size_t buckets = 10;  // h
  double r_min = 0.0;
  double r_max = 1.0;
};

/// 1-indexed bucket: h - floor(h * (r_max - r) / (r_max - r_min)), clamped
/// to [1, h]. Out-of-range rewards clamp to the boundary buckets.
size_t reward_bucket(const RewardEncoding& enc, double r);

/// One-hot vector of length enc.buckets with the reward_bucket position set.
std::vector<double> encode_reward(const RewardEncoding& enc, double r);

/// Gated recurrent cell parameters. The state dimension equals the input
/// dimension (the output gate mixes the cell activation with the raw input
/// elementwise, which forces the two sizes to agree). Weights are drawn once
/// and stay frozen: only the tree policies learn.
struct SruParams {
  Matrix w;    // dim x dim, input projection
  Matrix w_f;  // forget gate
  Matrix w_g;  // reset gate
  std::vector<double> b_f;
  std::vector<double> b_g;
  size_t dim = 0;  // d_in == d_state
};

SruParams init_sru(size_t dim, uint64_t seed);

/// Recurrent state: c is the internal cell, h_out the emitted state vector
/// fed to the policy networks.
struct SruState {
  std::vector<double> c;
  std::vector<double> h_out;
};

/// One cell update:
///   x~ = W x
///   f  = sigmoid(W_f x + b_f)
///   g  = sigmoid(W_g x + b_g)
///   c' = f . c + (1 - f) . x~
///   h' = g . tanh(c') + (1 - g) . x
/// Throws if the output is non-finite.
SruState sru_step(const SruParams& params, const SruState& state,
                  std::span<const double> x);

/// Concatenation (user embedding, reward one-hot), user part first.
std::vector<double> make_input(std::span<const double> user_emb,
                               std::span<const double> reward_onehot);

/// Initial state: mean of the promoted items' embedding rows, zero-padded
/// from the embedding dimension up to dim_state; internal cell starts at
/// zero.
SruState init_state(const Matrix& item_embeddings,
                    std::span<const ItemId> promoted_items, size_t dim_state);

void save_sru(const SruParams& p, const std::string& path);
SruParams load_sru(const std::string& path);

}  // namespace smile
