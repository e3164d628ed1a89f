#include "smile/state_tracker.hpp"

#include <cmath>
#include <stdexcept>

#include "io_util.hpp"
#include "smile/rng.hpp"

namespace smile {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void mat_vec(const Matrix& m, std::span<const double> x,
             std::span<double> out) {
  for (size_t i = 0; i < m.rows; ++i) out[i] = dot(m.row(i), x.data(), m.cols);
}

}  // namespace

size_t reward_bucket(const RewardEncoding& enc, double r) {
  if (enc.buckets < 1 || !(enc.r_max > enc.r_min))
    throw std::invalid_argument("bad reward encoding");
  double clamped = std::min(std::max(r, enc.r_min), enc.r_max);
  double h = double(enc.buckets);
  double raw =
      h - std::floor(h * (enc.r_max - clamped) / (enc.r_max - enc.r_min));
  auto idx = int64_t(raw);
  if (idx < 1) idx = 1;
  if (idx > int64_t(enc.buckets)) idx = int64_t(enc.buckets);
  return size_t(idx);
}

std::vector<double> encode_reward(const RewardEncoding& enc, double r) {
  std::vector<double> v(enc.buckets, 0.0);
  v[reward_bucket(enc, r) - 1] = 1.0;
  return v;
}

SruParams init_sru(size_t dim, uint64_t seed) {
  SruParams p;
  p.dim = dim;
  p.w = Matrix(dim, dim);
  p.w_f = Matrix(dim, dim);
  p.w_g = Matrix(dim, dim);
  p.b_f.assign(dim, 0.0);
  p.b_g.assign(dim, 0.0);
  Rng rng(derive_seed(seed, 0x5121));
  p.w.fill_uniform(rng, -0.05, 0.05);
  p.w_f.fill_uniform(rng, -0.05, 0.05);
  p.w_g.fill_uniform(rng, -0.05, 0.05);
  for (auto& b : p.b_f) b = rng.uniform(-0.05, 0.05);
  for (auto& b : p.b_g) b = rng.uniform(-0.05, 0.05);
  return p;
}

SruState sru_step(const SruParams& params, const SruState& state,
                  std::span<const double> x) {
  size_t n = params.dim;
  if (x.size() != n || state.c.size() != n)
    throw std::invalid_argument("sru dimension mismatch");

  std::vector<double> xt(n), f(n), g(n);
  mat_vec(params.w, x, xt);
  mat_vec(params.w_f, x, f);
  mat_vec(params.w_g, x, g);

  SruState out;
  out.c.resize(n);
  out.h_out.resize(n);
  for (size_t i = 0; i < n; ++i) {
    double fi = sigmoid(f[i] + params.b_f[i]);
    double gi = sigmoid(g[i] + params.b_g[i]);
    double ci = fi * state.c[i] + (1.0 - fi) * xt[i];
    out.c[i] = ci;
    out.h_out[i] = gi * std::tanh(ci) + (1.0 - gi) * x[i];
  }
  if (!all_finite(out.c) || !all_finite(out.h_out))
    throw std::runtime_error("sru_step produced non-finite state");
  return out;
}

std::vector<double> make_input(std::span<const double> user_emb,
                               std::span<const double> reward_onehot) {
  std::vector<double> x;
  x.reserve(user_emb.size() + reward_onehot.size());
  x.insert(x.end(), user_emb.begin(), user_emb.end());
  x.insert(x.end(), reward_onehot.begin(), reward_onehot.end());
  return x;
}

SruState init_state(const Matrix& item_embeddings,
                    std::span<const ItemId> promoted_items, size_t dim_state) {
  if (promoted_items.empty())
    throw std::invalid_argument("init_state needs a nonempty promoted set");
  size_t d = item_embeddings.cols;
  if (dim_state < d)
    throw std::invalid_argument("state dimension smaller than embedding");

  SruState s;
  s.c.assign(dim_state, 0.0);
  s.h_out.assign(dim_state, 0.0);
  for (ItemId i : promoted_items)
    for (size_t k = 0; k < d; ++k) s.h_out[k] += item_embeddings.at(i, k);
  for (size_t k = 0; k < d; ++k) s.h_out[k] /= double(promoted_items.size());
  return s;
}

void save_sru(const SruParams& p, const std::string& path) {
  auto f = io::open_out(path);
  io::write_magic(f, "SMILESR1");
  io::write_pod<uint64_t>(f, p.dim);
  io::write_vec(f, p.w.data);
  io::write_vec(f, p.w_f.data);
  io::write_vec(f, p.w_g.data);
  io::write_vec(f, p.b_f);
  io::write_vec(f, p.b_g);
  if (!f) throw std::runtime_error("write failed: " + path);
}

SruParams load_sru(const std::string& path) {
  auto f = io::open_in(path);
  io::check_magic(f, "SMILESR1", "sru checkpoint");
  SruParams p;
  p.dim = io::read_pod<uint64_t>(f);
  p.w = Matrix(p.dim, p.dim);
  p.w_f = Matrix(p.dim, p.dim);
  p.w_g = Matrix(p.dim, p.dim);
  p.w.data = io::read_vec<double>(f);
  p.w_f.data = io::read_vec<double>(f);
  p.w_g.data = io::read_vec<double>(f);
  p.b_f = io::read_vec<double>(f);
  p.b_g = io::read_vec<double>(f);
  return p;
}

}  // namespace smile
