#pragma once

#include "trajrec/curate.hpp"
#include "trajrec/table.hpp"

#include <Eigen/SparseCore>

#include <set>
#include <vector>

namespace trajrec {

// Binary user x show matrix. Rows follow ascending user id.
struct InteractionMatrix {
  std::vector<UserId> users;
  std::vector<ShowId> shows;  // column order
  Eigen::SparseMatrix<double> values;

  int row_of(UserId user) const;
  double density() const;
};

// Entry (u, s) is 1 iff s occurs in one of u's sequences. For users in
// `held_out_users` the last show of each of their sequences is treated as a
// held-out target and left out.
InteractionMatrix build_interaction_matrix(const std::vector<ListeningSequence>& sequences,
                                           const std::vector<ShowId>& show_index,
                                           const std::set<UserId>& held_out_users = {});

struct NmfConfig {
  int rank = 40;
  int max_iters = 200;
  double tol = 1e-4;
};

struct Factorization {
  Eigen::MatrixXd W;  // users x rank
  Eigen::MatrixXd H;  // rank x shows
  std::vector<double> objective;  // ||X - WH||_F^2 after each outer iteration
  int iterations = 0;

  int rank() const { return static_cast<int>(W.cols()); }
};

// Alternating nonnegative coordinate descent on ||X - WH||_F^2. Each sweep
// minimizes the objective exactly in one coordinate at a time, projected onto
// the nonnegative orthant.
Factorization nmf_factorize(const Eigen::SparseMatrix<double>& X, const NmfConfig& config,
                            std::uint64_t seed);

double nmf_objective(const Eigen::MatrixXd& X, const Eigen::MatrixXd& W, const Eigen::MatrixXd& H);

// Cosine similarity of `user_row` with every column of H.
Eigen::VectorXd cf_scores(const Eigen::Ref<const Eigen::VectorXd>& user_row, const Eigen::MatrixXd& H);

// Shows (ids from `show_index`, aligned with H's columns) minus `exclude`,
// by descending cosine, ties by ascending id.
std::vector<ShowId> cf_rank(const Eigen::Ref<const Eigen::VectorXd>& user_row,
                            const Eigen::MatrixXd& H, const std::vector<ShowId>& show_index,
                            const std::set<ShowId>& exclude);

// Persist W and H in the embedding-table format ("nmf-W" rows keyed by user,
// "nmf-H" columns keyed by show).
EmbeddingTable factor_w_table(const Factorization& f, const std::vector<UserId>& users);
EmbeddingTable factor_h_table(const Factorization& f, const std::vector<ShowId>& shows);

}  // namespace trajrec
