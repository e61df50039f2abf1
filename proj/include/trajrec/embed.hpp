#pragma once

#include "trajrec/curate.hpp"
#include "trajrec/synthcat.hpp"
#include "trajrec/table.hpp"

#include <cmath>
#include <vector>

namespace trajrec {

// Trilinear DistMult score sum_i h_i r_i t_i.
template <typename DerivedH, typename DerivedR, typename DerivedT>
typename DerivedH::Scalar distmult_score(const Eigen::MatrixBase<DerivedH>& h,
                                         const Eigen::MatrixBase<DerivedR>& r,
                                         const Eigen::MatrixBase<DerivedT>& t) {
  if (h.size() != r.size() || h.size() != t.size())
    throw DimensionError("distmult_score: vector lengths differ");
  // h * t first so that swapping head and tail is exact in floating point.
  return (r.array() * (h.array() * t.array())).sum();
}

// log(1 + exp(-x)), stable for large |x|.
template <typename Scalar>
Scalar softplus_neg(Scalar x) {
  return x > Scalar(0) ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x));
}

template <typename Scalar>
Scalar sigmoid(Scalar x) {
  if (x >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-x));
  const Scalar e = std::exp(x);
  return e / (Scalar(1) + e);
}

// Sparse gradient: (column, gradient vector) pairs; a column may repeat.
template <typename Scalar>
struct ColumnGradients {
  std::vector<std::pair<int, VectorX<Scalar>>> entries;

  void add(int column, VectorX<Scalar> g) { entries.emplace_back(column, std::move(g)); }
  void clear() { entries.clear(); }

  void scatter_into(MatrixX<Scalar>& dense) const {
    for (const auto& [col, g] : entries) dense.col(col) += g;
  }
  void apply(MatrixX<Scalar>& params, Scalar lr) const {
    for (const auto& [col, g] : entries) params.col(col) -= lr * g;
  }
};

// ---------------------------------------------------------------------------
// DistMult
// ---------------------------------------------------------------------------

struct DistMultSample {
  KGTriple positive;
  std::vector<KGTriple> negatives;
};

// Logistic negative-sampling loss of one sample:
//   -log sigma(score(pos)) - sum_neg log sigma(-score(neg)).
// Gradients w.r.t. node columns and relation columns are appended when
// the outputs are non-null.
template <typename Scalar>
Scalar distmult_sample_loss(const MatrixX<Scalar>& nodes, const MatrixX<Scalar>& relations,
                            const DistMultSample& sample, ColumnGradients<Scalar>* node_grad,
                            ColumnGradients<Scalar>* relation_grad) {
  Scalar loss(0);
  auto term = [&](const KGTriple& triple, Scalar label) {
    const auto h = nodes.col(triple.head);
    const auto r = relations.col(triple.relation);
    const auto t = nodes.col(triple.tail);
    const Scalar score = distmult_score(h, r, t);
    loss += softplus_neg(label * score);
    // d/ds of softplus(-y s) = -y sigma(-y s)
    const Scalar coeff = -label * sigmoid(-label * score);
    if (node_grad) {
      node_grad->add(triple.head, coeff * r.cwiseProduct(t));
      node_grad->add(triple.tail, coeff * r.cwiseProduct(h));
    }
    if (relation_grad) relation_grad->add(triple.relation, coeff * h.cwiseProduct(t));
  };
  term(sample.positive, Scalar(1));
  for (const KGTriple& neg : sample.negatives) term(neg, Scalar(-1));
  return loss;
}

struct DistMultConfig {
  int dim = 64;
  int epochs = 100;
  double lr = 0.05;
  int negatives_per_positive = 5;
};

struct DistMultResult {
  EmbeddingTable nodes;  // every KG node
  RelationTable relations;
  std::vector<double> loss_curve;  // mean sample loss per epoch
};

DistMultResult train_distmult(const std::vector<KGTriple>& triples, int num_nodes,
                              int num_relations, const DistMultConfig& config,
                              std::uint64_t seed);

// Show vectors of a catalog's DistMult embedding (ids = show ids).
EmbeddingTable show_table(const DistMultResult& result, const std::vector<ShowId>& shows);

// ---------------------------------------------------------------------------
// CBOW
// ---------------------------------------------------------------------------

struct CbowSample {
  std::vector<int> context;  // vocabulary columns
  int center = 0;
  std::vector<int> negatives;
};

// Negative-sampling CBOW loss with the averaged context vector h:
//   -log sigma(out_c . h) - sum_neg log sigma(-out_n . h).
template <typename Scalar>
Scalar cbow_sample_loss(const MatrixX<Scalar>& input, const MatrixX<Scalar>& output,
                        const CbowSample& sample, ColumnGradients<Scalar>* input_grad,
                        ColumnGradients<Scalar>* output_grad) {
  if (sample.context.empty()) throw DataError("cbow_sample_loss: empty context");
  const auto n = static_cast<Scalar>(sample.context.size());
  VectorX<Scalar> h = VectorX<Scalar>::Zero(input.rows());
  for (int c : sample.context) h += input.col(c);
  h /= n;

  Scalar loss(0);
  VectorX<Scalar> dh = VectorX<Scalar>::Zero(input.rows());
  auto term = [&](int word, Scalar label) {
    const Scalar score = output.col(word).dot(h);
    loss += softplus_neg(label * score);
    const Scalar coeff = -label * sigmoid(-label * score);
    dh += coeff * output.col(word);
    if (output_grad) output_grad->add(word, coeff * h);
  };
  term(sample.center, Scalar(1));
  for (int neg : sample.negatives) term(neg, Scalar(-1));
  if (input_grad)
    for (int c : sample.context) input_grad->add(c, dh / n);
  return loss;
}

struct CbowConfig {
  int dim = 64;
  int window = 2;
  int negatives = 5;
  int epochs = 10;
  double lr = 0.05;
};

struct CbowResult {
  EmbeddingTable shows;  // input vectors, ids = vocabulary
  Eigen::MatrixXd output_vectors;
  std::vector<double> loss_curve;
};

// `vocabulary` lists every show that needs a vector; when empty it is taken
// from the shows appearing in `sequences`.
CbowResult train_cbow(const std::vector<ListeningSequence>& sequences,
                      std::vector<ShowId> vocabulary, const CbowConfig& config,
                      std::uint64_t seed);

}  // namespace trajrec
