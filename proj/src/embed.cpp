#include "trajrec/embed.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_map>

namespace trajrec {

namespace {

Eigen::MatrixXd uniform_init(int rows, int cols, double half_width, Rng& rng) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-half_width, half_width);
  return m;
}

std::vector<NodeId> iota_ids(int n) {
  std::vector<NodeId> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  return ids;
}

}  // namespace

DistMultResult train_distmult(const std::vector<KGTriple>& triples, int num_nodes,
                              int num_relations, const DistMultConfig& config,
                              std::uint64_t seed) {
  if (triples.empty()) throw DataError("train_distmult: no triples");
  if (config.dim < 2) throw ConfigError("train_distmult: dim must be >= 2");
  if (config.epochs < 0 || config.negatives_per_positive < 0)
    throw ConfigError("train_distmult: epochs and negatives must be non-negative");
  if (num_nodes < 2) throw DataError("train_distmult: need at least two nodes");
  for (const KGTriple& t : triples)
    if (t.head < 0 || t.head >= num_nodes || t.tail < 0 || t.tail >= num_nodes ||
        t.relation < 0 || t.relation >= num_relations)
      throw DataError("train_distmult: triple references unknown node or relation");

  Rng rng(derive_seed(seed, "distmult"));
  const double half = 0.5 / config.dim;
  Eigen::MatrixXd nodes = uniform_init(config.dim, num_nodes, half, rng);
  // Relations start at the all-ones diagonal: the trilinear form has a saddle
  // at zero, so small relation vectors would stall training.
  Eigen::MatrixXd relations = Eigen::MatrixXd::Ones(config.dim, num_relations);

  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  DistMultSample sample;
  ColumnGradients<double> node_grad;
  ColumnGradients<double> relation_grad;
  std::vector<double> curve;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t idx : order) {
      sample.positive = triples[idx];
      sample.negatives.clear();
      for (int n = 0; n < config.negatives_per_positive; ++n) {
        KGTriple neg = sample.positive;
        NodeId& slot = rng.bernoulli(0.5) ? neg.head : neg.tail;
        const NodeId original = slot;
        auto replacement = static_cast<NodeId>(rng.index(num_nodes - 1));
        if (replacement >= original) ++replacement;
        slot = replacement;
        sample.negatives.push_back(neg);
      }
      node_grad.clear();
      relation_grad.clear();
      total += distmult_sample_loss(nodes, relations, sample, &node_grad, &relation_grad);
      node_grad.apply(nodes, config.lr);
      relation_grad.apply(relations, config.lr);
    }
    if (!nodes.allFinite() || !relations.allFinite() || !std::isfinite(total))
      throw NumericError("train_distmult: non-finite parameters at epoch " + std::to_string(epoch));
    curve.push_back(total / static_cast<double>(triples.size()));
  }

  DistMultResult result{EmbeddingTable("distmult-nodes", iota_ids(num_nodes), std::move(nodes)),
                        EmbeddingTable("distmult-relations", iota_ids(num_relations),
                                       std::move(relations)),
                        std::move(curve)};
  return result;
}

EmbeddingTable show_table(const DistMultResult& result, const std::vector<ShowId>& shows) {
  EmbeddingTable table = result.nodes.subset(shows);
  table.kind = "kg";
  return table;
}

CbowResult train_cbow(const std::vector<ListeningSequence>& sequences,
                      std::vector<ShowId> vocabulary, const CbowConfig& config,
                      std::uint64_t seed) {
  if (sequences.empty()) throw DataError("train_cbow: no sequences");
  if (config.window < 1) throw ConfigError("train_cbow: window must be >= 1");
  if (config.dim < 1 || config.epochs < 0 || config.negatives < 0)
    throw ConfigError("train_cbow: invalid hyperparameters");

  if (vocabulary.empty()) {
    for (const ListeningSequence& seq : sequences)
      vocabulary.insert(vocabulary.end(), seq.shows.begin(), seq.shows.end());
    std::sort(vocabulary.begin(), vocabulary.end());
    vocabulary.erase(std::unique(vocabulary.begin(), vocabulary.end()), vocabulary.end());
  }
  if (vocabulary.size() < 2) throw DataError("train_cbow: vocabulary has fewer than 2 shows");

  std::unordered_map<ShowId, int> column;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) column[vocabulary[i]] = static_cast<int>(i);
  std::vector<std::vector<int>> corpus;
  std::vector<double> counts(vocabulary.size(), 0.0);
  for (const ListeningSequence& seq : sequences) {
    std::vector<int> tokens;
    for (ShowId s : seq.shows)
      if (auto it = column.find(s); it != column.end()) {
        tokens.push_back(it->second);
        counts[it->second] += 1.0;
      }
    if (tokens.size() >= 2) corpus.push_back(std::move(tokens));
  }

  // Unigram^0.75 noise distribution.
  std::vector<double> cumulative(counts.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    acc += std::pow(counts[i], 0.75);
    cumulative[i] = acc;
  }
  auto draw_noise = [&](Rng& rng) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return static_cast<int>(std::min<std::ptrdiff_t>(it - cumulative.begin(),
                                                     static_cast<std::ptrdiff_t>(counts.size()) - 1));
  };

  Rng rng(derive_seed(seed, "cbow"));
  const int vocab = static_cast<int>(vocabulary.size());
  Eigen::MatrixXd input = uniform_init(config.dim, vocab, 0.5 / config.dim, rng);
  Eigen::MatrixXd output = Eigen::MatrixXd::Zero(config.dim, vocab);

  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  CbowSample sample;
  ColumnGradients<double> in_grad;
  ColumnGradients<double> out_grad;
  std::vector<double> curve;

  for (int epoch = 0; epoch < config.epochs && acc > 0.0; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    std::size_t samples = 0;
    for (std::size_t idx : order) {
      const std::vector<int>& tokens = corpus[idx];
      const auto length = static_cast<int>(tokens.size());
      for (int pos = 0; pos < length; ++pos) {
        sample.context.clear();
        for (int j = std::max(0, pos - config.window); j <= std::min(length - 1, pos + config.window); ++j)
          if (j != pos) sample.context.push_back(tokens[j]);
        sample.center = tokens[pos];
        sample.negatives.clear();
        for (int n = 0; n < config.negatives; ++n) {
          int neg = draw_noise(rng);
          for (int retry = 0; neg == sample.center && retry < 8; ++retry) neg = draw_noise(rng);
          if (neg != sample.center) sample.negatives.push_back(neg);
        }
        in_grad.clear();
        out_grad.clear();
        total += cbow_sample_loss(input, output, sample, &in_grad, &out_grad);
        in_grad.apply(input, config.lr);
        out_grad.apply(output, config.lr);
        ++samples;
      }
    }
    if (!input.allFinite() || !output.allFinite())
      throw NumericError("train_cbow: non-finite parameters at epoch " + std::to_string(epoch));
    curve.push_back(samples ? total / static_cast<double>(samples) : 0.0);
  }

  CbowResult result{EmbeddingTable("cbow", std::move(vocabulary), std::move(input)),
                    std::move(output), std::move(curve)};
  return result;
}

}  // namespace trajrec
