#include "trajrec/embed.hpp"

#include "gradcheck.hpp"

#include <doctest.h>

#include <cmath>

using namespace trajrec;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = rng.uniform(-scale, scale);
  return m;
}

double mean_cosine(const EmbeddingTable& t, const std::vector<NodeId>& a, const std::vector<NodeId>& b,
                   bool skip_same) {
  double sum = 0;
  int n = 0;
  for (NodeId x : a)
    for (NodeId y : b) {
      if (skip_same && x >= y) continue;
      sum += cosine_similarity(t.vector(x), t.vector(y));
      ++n;
    }
  return sum / n;
}

// Two clusters of ten shows that never share an entity.
std::vector<KGTriple> two_cluster_kg() {
  std::vector<KGTriple> triples;
  for (int s = 0; s < 20; ++s) {
    const int base = s < 10 ? 20 : 25;
    for (int j = 0; j < 3; ++j) triples.push_back({s, kMentions, base + (s + j) % 5});
  }
  for (int e = 20; e < 30; ++e) {
    const int base = e < 25 ? 20 : 25;
    triples.push_back({e, kRelated, base + (e - base + 1) % 5});
  }
  return triples;
}

}  // namespace

TEST_CASE("distmult score") {
  CHECK(distmult_score(Eigen::Vector2d(1, 2), Eigen::Vector2d(1, 0), Eigen::Vector2d(3, 4)) == 3.0);
  CHECK(distmult_score(Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 1), Eigen::Vector2d(2, 5)) == 7.0);
  Rng rng(2);
  for (int i = 0; i < 100; ++i) {
    const Eigen::VectorXd h = random_matrix(rng, 6, 1), r = random_matrix(rng, 6, 1), t = random_matrix(rng, 6, 1);
    CHECK(distmult_score(h, r, t) == distmult_score(t, r, h));
  }
  CHECK_THROWS_AS(distmult_score(Eigen::VectorXd(Eigen::Vector2d(1, 2)), Eigen::VectorXd(Eigen::Vector3d(1, 0, 0)), Eigen::Vector2d(3, 4)),
                  DimensionError);
}

TEST_CASE("distmult gradient matches finite differences") {
  Rng rng(17);
  for (int restart = 0; restart < 20; ++restart) {
    const int dim = 4, nodes = 6, rels = 2;
    Eigen::MatrixXd N = random_matrix(rng, dim, nodes);
    Eigen::MatrixXd R = random_matrix(rng, dim, rels);
    DistMultSample sample{{0, 1, 2}, {{3, 1, 2}, {0, 1, 4}, {5, 0, 2}}};
    ColumnGradients<double> gn, gr;
    distmult_sample_loss(N, R, sample, &gn, &gr);
    Eigen::MatrixXd dN = Eigen::MatrixXd::Zero(dim, nodes), dR = Eigen::MatrixXd::Zero(dim, rels);
    gn.scatter_into(dN);
    gr.scatter_into(dR);
    auto loss = [&] { return distmult_sample_loss<double>(N, R, sample, nullptr, nullptr); };
    CHECK(max_relative_error(loss, Eigen::Map<Eigen::VectorXd>(N.data(), N.size()),
                             Eigen::Map<Eigen::VectorXd>(dN.data(), dN.size())) < 1e-4);
    CHECK(max_relative_error(loss, Eigen::Map<Eigen::VectorXd>(R.data(), R.size()),
                             Eigen::Map<Eigen::VectorXd>(dR.data(), dR.size())) < 1e-4);
  }
}

TEST_CASE("distmult training") {
  const auto triples = two_cluster_kg();
  DistMultConfig c;
  c.dim = 16;
  c.epochs = 200;
  const DistMultResult r = train_distmult(triples, 30, 2, c, 5);
  CHECK(r.nodes.all_finite());
  CHECK(r.loss_curve.back() < r.loss_curve.front());
  std::vector<NodeId> a, b;
  for (int s = 0; s < 10; ++s) a.push_back(s);
  for (int s = 10; s < 20; ++s) b.push_back(s);
  const double within = 0.5 * (mean_cosine(r.nodes, a, a, true) + mean_cosine(r.nodes, b, b, true));
  const double across = mean_cosine(r.nodes, a, b, false);
  CHECK(within > across + 0.2);

  const DistMultResult again = train_distmult(triples, 30, 2, c, 5);
  CHECK(again.nodes.vectors == r.nodes.vectors);

  c.epochs = 0;
  const DistMultResult init = train_distmult(triples, 30, 2, c, 5);
  CHECK(init.loss_curve.empty());
  CHECK(init.nodes.vectors.cwiseAbs().maxCoeff() <= 0.5 / c.dim);
  CHECK(init.nodes.vectors == train_distmult(triples, 30, 2, c, 5).nodes.vectors);

  const EmbeddingTable shows = show_table(r, {3, 12});
  CHECK(shows.ids == std::vector<NodeId>{3, 12});
  CHECK(shows.vectors.col(1) == r.nodes.vector(12));

  CHECK_THROWS_AS(train_distmult({{0, 0, 31}}, 30, 2, c, 1), DataError);
  CHECK_THROWS_AS(train_distmult({{0, 2, 1}}, 30, 2, c, 1), DataError);
}

TEST_CASE("cbow gradient matches finite differences") {
  Rng rng(23);
  for (int restart = 0; restart < 20; ++restart) {
    const int dim = 4, vocab = 7;
    Eigen::MatrixXd in = random_matrix(rng, dim, vocab);
    Eigen::MatrixXd out = random_matrix(rng, dim, vocab);
    CbowSample sample{{1, 2, 4, 2}, 3, {0, 5, 6}};
    ColumnGradients<double> gi, go;
    cbow_sample_loss(in, out, sample, &gi, &go);
    Eigen::MatrixXd dI = Eigen::MatrixXd::Zero(dim, vocab), dO = Eigen::MatrixXd::Zero(dim, vocab);
    gi.scatter_into(dI);
    go.scatter_into(dO);
    auto loss = [&] { return cbow_sample_loss<double>(in, out, sample, nullptr, nullptr); };
    CHECK(max_relative_error(loss, Eigen::Map<Eigen::VectorXd>(in.data(), in.size()),
                             Eigen::Map<Eigen::VectorXd>(dI.data(), dI.size())) < 1e-4);
    CHECK(max_relative_error(loss, Eigen::Map<Eigen::VectorXd>(out.data(), out.size()),
                             Eigen::Map<Eigen::VectorXd>(dO.data(), dO.size())) < 1e-4);
  }
}

NodeId nearest_neighbor(const EmbeddingTable& t, NodeId a) {
  NodeId best = -1;
  double best_sim = -2;
  for (NodeId other : t.ids) {
    if (other == a) continue;
    const double s = cosine_similarity(t.vector(a), t.vector(other));
    if (s > best_sim) {
      best_sim = s;
      best = other;
    }
  }
  return best;
}

TEST_CASE("cbow training") {
  // Two alternating shows: each is the other's nearest neighbor.
  std::vector<ListeningSequence> pair;
  for (int u = 0; u < 10; ++u) {
    ListeningSequence s{u, {}, {}, {}};
    for (int i = 0; i < 20; ++i) s.shows.push_back(i % 2 ? 2 : 1);
    pair.push_back(s);
  }
  CbowConfig c;
  c.dim = 8;
  c.epochs = 20;
  const CbowResult two = train_cbow(pair, {}, c, 3);
  CHECK(nearest_neighbor(two.shows, 1) == 2);
  CHECK(nearest_neighbor(two.shows, 2) == 1);

  // Shows heard in the same contexts (X A Y and X A' Y) become nearest
  // neighbors; a second block with its own contexts stays apart.
  std::vector<ListeningSequence> corpus;
  for (int u = 0; u < 100; ++u) {
    corpus.push_back({u, {1, u % 2 ? 2 : 3, 4}, {}, {}});
    corpus.push_back({1000 + u, {5, u % 2 ? 6 : 7, 8}, {}, {}});
  }
  const CbowResult r = train_cbow(corpus, {}, c, 3);
  CHECK(r.loss_curve.back() < r.loss_curve.front());
  CHECK(r.shows.all_finite());
  for (auto [a, b] : std::vector<std::pair<int, int>>{{2, 3}, {3, 2}, {6, 7}, {7, 6}}) {
    CHECK(nearest_neighbor(r.shows, a) == b);
    CHECK(cosine_similarity(r.shows.vector(a), r.shows.vector(b)) > 0.9);
  }
  CHECK(train_cbow(corpus, {}, c, 3).shows.vectors == r.shows.vectors);

  c.epochs = 0;
  const CbowResult init = train_cbow(corpus, {10, 11, 99}, c, 3);
  CHECK(init.shows.ids == std::vector<NodeId>{10, 11, 99});
  CHECK(init.shows.vectors.cwiseAbs().maxCoeff() <= 0.5 / c.dim);
  CHECK(init.shows.vectors == train_cbow(corpus, {10, 11, 99}, c, 3).shows.vectors);

  CHECK_THROWS_AS(train_cbow({{1, {5, 5, 5}, {}, {}}}, {}, c, 1), DataError);
}
