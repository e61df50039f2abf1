#include "trajrec/cfbase.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

namespace trajrec {

int InteractionMatrix::row_of(UserId user) const {
  auto it = std::lower_bound(users.begin(), users.end(), user);
  return it != users.end() && *it == user ? static_cast<int>(it - users.begin()) : -1;
}

double InteractionMatrix::density() const {
  if (values.rows() == 0 || values.cols() == 0) return 0.0;
  return values.sum() / (static_cast<double>(values.rows()) * static_cast<double>(values.cols()));
}

InteractionMatrix build_interaction_matrix(const std::vector<ListeningSequence>& sequences,
                                           const std::vector<ShowId>& show_index,
                                           const std::set<UserId>& held_out_users) {
  std::unordered_map<ShowId, int> column;
  for (std::size_t i = 0; i < show_index.size(); ++i) column[show_index[i]] = static_cast<int>(i);

  std::map<UserId, std::set<int>> rows;
  for (const ListeningSequence& seq : sequences) {
    auto& row = rows[seq.user];
    std::size_t used = seq.shows.size();
    if (held_out_users.count(seq.user) && used > 0) --used;
    for (std::size_t i = 0; i < seq.shows.size(); ++i) {
      auto it = column.find(seq.shows[i]);
      if (it == column.end())
        throw DataError("build_interaction_matrix: show " + std::to_string(seq.shows[i]) +
                        " is not in the show index");
      if (i < used) row.insert(it->second);
    }
  }
  // A show held out from one sequence stays out even if another sequence of
  // the same user contains it earlier.
  for (const ListeningSequence& seq : sequences)
    if (held_out_users.count(seq.user) && !seq.shows.empty())
      rows[seq.user].erase(column.at(seq.shows.back()));

  InteractionMatrix m;
  m.shows = show_index;
  std::vector<Eigen::Triplet<double>> triplets;
  for (const auto& [user, cols] : rows) {
    const auto r = static_cast<int>(m.users.size());
    m.users.push_back(user);
    for (int c : cols) triplets.emplace_back(r, c, 1.0);
  }
  m.values.resize(static_cast<Eigen::Index>(m.users.size()), static_cast<Eigen::Index>(show_index.size()));
  m.values.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

double nmf_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W, const Eigen::MatrixXd& H) {
  return (X - W * H).squaredNorm();
}

namespace {

// One coordinate-descent sweep over the columns of `factor` (n x r) for the
// subproblem min ||X - factor * other||^2 with gram = other other^T and
// cross = X other^T.
void coordinate_sweep(Eigen::MatrixXd& factor, const Eigen::MatrixXd& gram,
                      const Eigen::MatrixXd& cross) {
  const Eigen::Index n = factor.rows();
  const Eigen::Index r = factor.cols();
  for (Eigen::Index t = 0; t < r; ++t) {
    const double hess = gram(t, t);
    if (hess <= 0.0) continue;
    for (Eigen::Index i = 0; i < n; ++i) {
      double grad = -cross(i, t);
      for (Eigen::Index q = 0; q < r; ++q) grad += gram(q, t) * factor(i, q);
      factor(i, t) = std::max(factor(i, t) - grad / hess, 0.0);
    }
  }
}

}  // namespace

Factorization nmf_factorize(const Eigen::SparseMatrix<double>& X, const NmfConfig& config,
                            std::uint64_t seed) {
  if (X.rows() == 0 || X.cols() == 0) throw DataError("nmf_factorize: empty matrix");
  if (config.rank < 1) throw ConfigError("nmf_factorize: rank must be >= 1");
  if (config.rank > std::min(X.rows(), X.cols()))
    throw ConfigError("nmf_factorize: rank exceeds min(rows, cols)");
  if (config.max_iters < 0 || config.tol < 0.0)
    throw ConfigError("nmf_factorize: invalid stopping parameters");

  const Eigen::MatrixXd dense = Eigen::MatrixXd(X);
  const double mean = dense.mean();
  const double scale = std::sqrt(mean / config.rank);

  Rng rng(derive_seed(seed, "nmf"));
  Factorization f;
  f.W.resize(X.rows(), config.rank);
  f.H.resize(config.rank, X.cols());
  for (Eigen::Index c = 0; c < f.W.cols(); ++c)
    for (Eigen::Index r = 0; r < f.W.rows(); ++r) f.W(r, c) = scale * rng.uniform();
  for (Eigen::Index c = 0; c < f.H.cols(); ++c)
    for (Eigen::Index r = 0; r < f.H.rows(); ++r) f.H(r, c) = scale * rng.uniform();

  const Eigen::SparseMatrix<double> Xt = X.transpose();
  double previous = nmf_objective(dense, f.W, f.H);
  if (previous == 0.0) {
    // Already exact (all-zero X gives a zero start); nothing to optimize.
    f.objective.push_back(0.0);
    return f;
  }
  for (int it = 0; it < config.max_iters; ++it) {
    {
      const Eigen::MatrixXd gram = f.H * f.H.transpose();
      const Eigen::MatrixXd cross = X * f.H.transpose();
      coordinate_sweep(f.W, gram, cross);
    }
    {
      Eigen::MatrixXd Ht = f.H.transpose();
      const Eigen::MatrixXd gram = f.W.transpose() * f.W;
      const Eigen::MatrixXd cross = Xt * f.W;
      coordinate_sweep(Ht, gram, cross);
      f.H = Ht.transpose();
    }
    const double current = nmf_objective(dense, f.W, f.H);
    if (!std::isfinite(current)) throw NumericError("nmf_factorize: non-finite objective");
    f.objective.push_back(current);
    f.iterations = it + 1;
    const double decrease = (previous - current) / previous;
    previous = current;
    if (current == 0.0 || decrease < config.tol) break;
  }
  return f;
}

Eigen::VectorXd cf_scores(const Eigen::Ref<const Eigen::VectorXd>& user_row, const Eigen::MatrixXd& H) {
  if (user_row.size() != H.rows()) throw DimensionError("cf_scores: rank mismatch");
  Eigen::VectorXd scores(H.cols());
  for (Eigen::Index j = 0; j < H.cols(); ++j) scores(j) = cosine_similarity(user_row, H.col(j));
  return scores;
}

std::vector<ShowId> cf_rank(const Eigen::Ref<const Eigen::VectorXd>& user_row,
                            const Eigen::MatrixXd& H, const std::vector<ShowId>& show_index,
                            const std::set<ShowId>& exclude) {
  if (static_cast<Eigen::Index>(show_index.size()) != H.cols())
    throw DimensionError("cf_rank: show index does not match H");
  const Eigen::VectorXd scores = cf_scores(user_row, H);
  std::vector<int> cols;
  for (int j = 0; j < static_cast<int>(show_index.size()); ++j)
    if (!exclude.count(show_index[j])) cols.push_back(j);
  std::sort(cols.begin(), cols.end(), [&](int a, int b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return show_index[a] < show_index[b];
  });
  std::vector<ShowId> ranked;
  ranked.reserve(cols.size());
  for (int j : cols) ranked.push_back(show_index[j]);
  return ranked;
}

EmbeddingTable factor_w_table(const Factorization& f, const std::vector<UserId>& users) {
  return EmbeddingTable("nmf-W", users, f.W.transpose());
}

EmbeddingTable factor_h_table(const Factorization& f, const std::vector<ShowId>& shows) {
  return EmbeddingTable("nmf-H", shows, f.H);
}

}  // namespace trajrec
