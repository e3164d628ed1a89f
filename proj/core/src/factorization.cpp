#include "smile/factorization.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "io_util.hpp"
#include "smile/rng.hpp"

namespace smile {

namespace {

constexpr double kInitLo = -0.05;
constexpr double kInitHi = 0.05;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void check_finite(const Matrix& m, const char* what) {
  if (!all_finite(m))
    throw std::runtime_error(std::string(what) +
                             " diverged: non-finite entries");
}

double train_rmse(const RatingsTable& table, const Matrix& U, const Matrix& V,
                  size_t dim) {
  double se = 0.0;
  for (const auto& r : table.rows()) {
    double e = r.rating - dot(U.row(r.user), V.row(r.item), dim);
    se += e * e;
  }
  return std::sqrt(se / double(table.size()));
}

/// Uniform negative item for user u, skipping the user's positives.
/// Returns num_items when no negative could be found in a bounded number of
/// draws (degenerate user who rated everything).
ItemId sample_negative(const RatingsTable& table, UserId u, Rng& rng) {
  for (int tries = 0; tries < 200; ++tries) {
    ItemId j = ItemId(rng.index(table.num_items()));
    if (!table.has(u, j)) return j;
  }
  return table.num_items();
}

void bpr_sgd_step(BprModel& m, UserId u, ItemId pos, ItemId neg, double lr,
                  double reg) {
  double* p = m.P.row(u);
  double* qp = m.Q.row(pos);
  double* qn = m.Q.row(neg);
  double x = 0.0;
  for (size_t k = 0; k < m.dim; ++k) x += p[k] * (qp[k] - qn[k]);
  double g = sigmoid(-x);  // d/dx of ln sigmoid(x)
  for (size_t k = 0; k < m.dim; ++k) {
    double pk = p[k];
    p[k] += lr * (g * (qp[k] - qn[k]) - reg * pk);
    qp[k] += lr * (g * pk - reg * qp[k]);
    qn[k] += lr * (-g * pk - reg * qn[k]);
  }
}

double sampled_auc(const BprModel& m, const RatingsTable& table, Rng& rng,
                   size_t pairs) {
  size_t hits = 0, total = 0;
  for (size_t s = 0; s < pairs; ++s) {
    const auto& row = table.rows()[rng.index(table.size())];
    ItemId neg = sample_negative(table, row.user, rng);
    if (neg >= table.num_items()) continue;
    ++total;
    if (m.score(row.user, row.item) > m.score(row.user, neg)) ++hits;
  }
  return total == 0 ? 0.5 : double(hits) / double(total);
}

}  // namespace

void mf_entry_gradient(std::span<const double> u, std::span<const double> v,
                       double y, double reg, std::span<double> grad_u,
                       std::span<double> grad_v) {
  double e = y - dot(u, v);
  for (size_t k = 0; k < u.size(); ++k) {
    grad_u[k] = -e * v[k] + reg * u[k];
    grad_v[k] = -e * u[k] + reg * v[k];
  }
}

void bpr_triple_gradient(std::span<const double> p,
                         std::span<const double> q_pos,
                         std::span<const double> q_neg, double reg,
                         std::span<double> grad_p, std::span<double> grad_qp,
                         std::span<double> grad_qn) {
  double x = 0.0;
  for (size_t k = 0; k < p.size(); ++k) x += p[k] * (q_pos[k] - q_neg[k]);
  double g = sigmoid(-x);
  for (size_t k = 0; k < p.size(); ++k) {
    grad_p[k] = -g * (q_pos[k] - q_neg[k]) + reg * p[k];
    grad_qp[k] = -g * p[k] + reg * q_pos[k];
    grad_qn[k] = g * p[k] + reg * q_neg[k];
  }
}

EmbeddingMatrix train_mf(const RatingsTable& table, const MfConfig& cfg,
                         uint64_t seed, std::vector<double>* rmse_per_epoch) {
  if (cfg.dim < 1) throw std::invalid_argument("mf dim must be >= 1");
  if (table.size() == 0) throw std::invalid_argument("mf needs a nonempty table");

  EmbeddingMatrix emb;
  emb.dim = cfg.dim;
  emb.U = Matrix(table.num_users(), cfg.dim);
  emb.V = Matrix(table.num_items(), cfg.dim);
  Rng init(derive_seed(seed, 0x3f01));
  emb.U.fill_uniform(init, kInitLo, kInitHi);
  emb.V.fill_uniform(init, kInitLo, kInitHi);

  std::vector<uint32_t> order(table.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = uint32_t(i);

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(seed, 0x3f02, epoch));
    rng.shuffle(order);
    for (uint32_t id : order) {
      const auto& r = table.rows()[id];
      double* u = emb.U.row(r.user);
      double* v = emb.V.row(r.item);
      double e = r.rating - dot(u, v, cfg.dim);
      for (size_t k = 0; k < cfg.dim; ++k) {
        double uk = u[k];
        u[k] += cfg.lr * (e * v[k] - cfg.reg * uk);
        v[k] += cfg.lr * (e * uk - cfg.reg * v[k]);
      }
    }
    check_finite(emb.U, "mf U");
    check_finite(emb.V, "mf V");
    if (rmse_per_epoch)
      rmse_per_epoch->push_back(train_rmse(table, emb.U, emb.V, cfg.dim));
  }
  return emb;
}

double predict_rating(const EmbeddingMatrix& emb, UserId user, ItemId item) {
  double y = dot(emb.U.row(user), emb.V.row(item), emb.dim);
  return std::clamp(y, 1.0, 5.0);
}

BprModel train_bpr(const RatingsTable& table, const BprConfig& cfg,
                   uint64_t seed, std::vector<double>* auc_per_epoch) {
  if (table.size() == 0)
    throw std::invalid_argument("bpr needs a nonempty table");

  BprModel m;
  m.dim = cfg.dim;
  m.P = Matrix(table.num_users(), cfg.dim);
  m.Q = Matrix(table.num_items(), cfg.dim);
  Rng init(derive_seed(seed, 0xb9901));
  m.P.fill_uniform(init, kInitLo, kInitHi);
  m.Q.fill_uniform(init, kInitLo, kInitHi);
  m.trained_on_rows = table.size();

  for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(seed, 0xb9902, epoch));
    for (size_t s = 0; s < table.size(); ++s) {
      // Positives drawn user-first so heavy raters cannot dominate the
      // profile norms; every user's taste direction gets equal attention.
      UserId u = UserId(rng.index(table.num_users()));
      const auto& ids = table.rows_of_user(u);
      if (ids.empty()) continue;
      const auto& row = table.rows()[ids[rng.index(ids.size())]];
      ItemId neg = sample_negative(table, row.user, rng);
      if (neg >= table.num_items()) continue;
      bpr_sgd_step(m, row.user, row.item, neg, cfg.lr, cfg.reg);
    }
    check_finite(m.P, "bpr P");
    check_finite(m.Q, "bpr Q");
    if (auc_per_epoch) {
      Rng auc_rng(derive_seed(seed, 0xb9903, epoch));
      size_t pairs = std::min<size_t>(20000, table.size());
      auc_per_epoch->push_back(sampled_auc(m, table, auc_rng, pairs));
    }
  }
  return m;
}

void fine_tune_bpr(BprModel& model, const RatingsTable& table,
                   size_t first_new_row, size_t steps, double lr, double reg,
                   uint64_t seed) {
  size_t new_count = table.size() - first_new_row;
  if (new_count == 0)
    throw std::invalid_argument("fine_tune_bpr: empty new-row range");

  Rng rng(derive_seed(seed, 0xf17e));
  for (size_t s = 0; s < steps; ++s) {
    // Alternate new and historical positives so the refresh does not
    // overwrite what the ranker already knows.
    size_t row_id;
    if (s % 2 == 0 || first_new_row == 0)
      row_id = first_new_row + rng.index(new_count);
    else
      row_id = rng.index(first_new_row);
    const auto& row = table.rows()[row_id];
    // Popularity-weighted negatives (drawn from the observed row
    // distribution): the refresh spends its pushes on the strong items the
    // new positives actually compete against, not on cold ones.
    ItemId neg = table.num_items();
    for (int tries = 0; tries < 200; ++tries) {
      ItemId j = table.rows()[rng.index(table.size())].item;
      if (!table.has(row.user, j)) {
        neg = j;
        break;
      }
    }
    if (neg >= table.num_items()) continue;
    bpr_sgd_step(model, row.user, row.item, neg, lr, reg);
  }
  check_finite(model.P, "bpr P");
  check_finite(model.Q, "bpr Q");
}

namespace {

void write_matrix(std::ostream& os, const Matrix& m) {
  io::write_pod<uint64_t>(os, m.rows);
  io::write_pod<uint64_t>(os, m.cols);
  io::write_vec(os, m.data);
}

Matrix read_matrix(std::istream& is) {
  Matrix m;
  m.rows = io::read_pod<uint64_t>(is);
  m.cols = io::read_pod<uint64_t>(is);
  m.data = io::read_vec<double>(is);
  if (m.data.size() != m.rows * m.cols)
    throw std::runtime_error("matrix size mismatch in checkpoint");
  return m;
}

}  // namespace

void save_embeddings(const EmbeddingMatrix& emb, const std::string& path) {
  auto f = io::open_out(path);
  io::write_magic(f, "SMILEMF1");
  io::write_pod<uint64_t>(f, emb.dim);
  write_matrix(f, emb.U);
  write_matrix(f, emb.V);
  if (!f) throw std::runtime_error("write failed: " + path);
}

EmbeddingMatrix load_embeddings(const std::string& path) {
  auto f = io::open_in(path);
  io::check_magic(f, "SMILEMF1", "embedding checkpoint");
  EmbeddingMatrix emb;
  emb.dim = io::read_pod<uint64_t>(f);
  emb.U = read_matrix(f);
  emb.V = read_matrix(f);
  return emb;
}

void save_bpr(const BprModel& model, const std::string& path) {
  auto f = io::open_out(path);
  io::write_magic(f, "SMILEBP1");
  io::write_pod<uint64_t>(f, model.dim);
  io::write_pod<uint64_t>(f, model.trained_on_rows);
  write_matrix(f, model.P);
  write_matrix(f, model.Q);
  if (!f) throw std::runtime_error("write failed: " + path);
}

BprModel load_bpr(const std::string& path) {
  auto f = io::open_in(path);
  io::check_magic(f, "SMILEBP1", "bpr checkpoint");
  BprModel m;
  m.dim = io::read_pod<uint64_t>(f);
  m.trained_on_rows = io::read_pod<uint64_t>(f);
  m.P = read_matrix(f);
  m.Q = read_matrix(f);
  return m;
}

}  // namespace smile
