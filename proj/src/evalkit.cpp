#include "trajrec/evalkit.hpp"

#include "trajrec/cfbase.hpp"
#include "trajrec/embed.hpp"
#include "trajrec/seqmodel.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <ctime>
#include <fstream>
#include <istream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace trajrec {

namespace {

using BigInt = boost::multiprecision::cpp_int;

// Nearest double (ties to even) to num / den, both positive.
double rational_to_double(const BigInt& num, const BigInt& den) {
  if (num == 0) return 0.0;
  long shift = 52 - (static_cast<long>(boost::multiprecision::msb(num)) -
                     static_cast<long>(boost::multiprecision::msb(den)));
  const BigInt lo = BigInt(1) << 52;
  const BigInt hi = BigInt(1) << 53;
  while (true) {
    BigInt n = shift >= 0 ? BigInt(num << shift) : num;
    BigInt d = shift >= 0 ? den : BigInt(den << -shift);
    BigInt m = n / d;
    BigInt r = n % d;
    if (m >= hi) {
      --shift;
      continue;
    }
    if (m < lo) {
      ++shift;
      continue;
    }
    const BigInt twice = 2 * r;
    if (twice > d || (twice == d && (m & 1) != 0)) ++m;
    return std::ldexp(static_cast<double>(m.convert_to<std::uint64_t>()), static_cast<int>(-shift));
  }
}

void check_ranks(const std::vector<int>& ranks, const char* who) {
  if (ranks.empty()) throw DataError(std::string(who) + ": empty rank list");
  for (int r : ranks)
    if (r < 1) throw DataError(std::string(who) + ": ranks must be >= 1");
}

std::string utc_now() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

// Exact rational mean, rounded once: the result does not depend on the order
// of `ranks`.
double mrr(const std::vector<int>& ranks) {
  check_ranks(ranks, "mrr");
  std::map<int, long> histogram;
  for (int r : ranks) ++histogram[r];
  // den stays lcm of the ranks seen so far, so every step is big-by-small.
  BigInt num = 0;
  BigInt den = 1;
  for (const auto& [rank, count] : histogram) {
    const long grow = rank / std::gcd(static_cast<long>(den % rank), static_cast<long>(rank));
    num *= grow;
    den *= grow;
    num += BigInt(den / rank) * count;
  }
  return rational_to_double(num, den * static_cast<long>(ranks.size()));
}

double success_at_k(const std::vector<int>& ranks, int k) {
  check_ranks(ranks, "success_at_k");
  if (k < 1) throw ConfigError("success_at_k: k must be >= 1");
  const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

int rank_of_target(const std::vector<ShowId>& ranked, ShowId target) {
  auto it = std::find(ranked.begin(), ranked.end(), target);
  if (it == ranked.end())
    throw MissingTargetError("rank_of_target: show " + std::to_string(target) + " not ranked");
  return static_cast<int>(it - ranked.begin()) + 1;
}

int rank_by_scores(const Eigen::Ref<const Eigen::VectorXd>& scores, const std::vector<ShowId>& ids,
                   const std::set<ShowId>& exclude, ShowId target) {
  if (scores.size() != static_cast<Eigen::Index>(ids.size()))
    throw DimensionError("rank_by_scores: score count does not match ids");
  if (exclude.count(target))
    throw MissingTargetError("rank_by_scores: target " + std::to_string(target) + " is excluded");
  auto pos = std::find(ids.begin(), ids.end(), target);
  if (pos == ids.end())
    throw MissingTargetError("rank_by_scores: target " + std::to_string(target) + " not a candidate");
  const double mine = scores(pos - ids.begin());
  if (!std::isfinite(mine) || !scores.allFinite()) throw NumericError("rank_by_scores: non-finite score");
  int rank = 1;
  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (ids[j] == target || exclude.count(ids[j])) continue;
    const double s = scores(static_cast<Eigen::Index>(j));
    if (s > mine || (s == mine && ids[j] < target)) ++rank;
  }
  return rank;
}

std::vector<ListeningSequence> shuffle_sequences(const std::vector<ListeningSequence>& sequences,
                                                 std::uint64_t seed) {
  std::vector<ListeningSequence> out = sequences;
  for (ListeningSequence& seq : out) {
    const std::uint64_t user_seed = derive_seed(seed, "shuffle", static_cast<std::uint64_t>(seq.user));
    Rng rng(derive_seed(user_seed, "topic", seq.topic ? static_cast<std::uint64_t>(*seq.topic) + 1 : 0));
    rng.shuffle(seq.shows);
  }
  return out;
}

double same_topic_adjacency(const std::vector<ListeningSequence>& sequences, const Catalog& catalog) {
  std::size_t pairs = 0;
  std::size_t same = 0;
  for (const ListeningSequence& seq : sequences)
    for (std::size_t i = 1; i < seq.shows.size(); ++i) {
      ++pairs;
      if (catalog.shares_topic(seq.shows[i - 1], seq.shows[i])) ++same;
    }
  return pairs ? static_cast<double>(same) / static_cast<double>(pairs) : 0.0;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["config_fingerprint"] = r.config_fingerprint;
  j["model"] = r.model;
  j["embedding"] = r.embedding;
  j["constraint"] = r.constraint;
  j["precision"] = r.precision;
  j["input_length"] = r.input_length;
  j["k"] = r.k;
  j["n"] = r.n;
  j["mrr"] = r.mrr;
  j["success_at_k"] = r.success_at_k;
  j["evaluable_fraction"] = r.evaluable_fraction;
  j["test_windows"] = r.test_windows;
  j["dropped_targets"] = r.dropped_targets;
  j["train_windows"] = r.train_windows;
  j["candidates"] = r.candidates;
  j["train_users"] = r.train_user_count;
  j["test_users"] = r.test_user_count;
  j["train_loss"] = r.train_loss;
  j["ranks"] = r.ranks;
  j["config"] = r.config;
  j["timestamp"] = r.timestamp;
  return j;
}

EvalReport report_from_json(const nlohmann::json& j) {
  EvalReport r;
  try {
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.model = j.at("model").get<std::string>();
    r.embedding = j.at("embedding").get<std::string>();
    r.constraint = j.at("constraint").get<std::string>();
    r.precision = j.at("precision").get<std::string>();
    r.input_length = j.at("input_length").get<int>();
    r.k = j.at("k").get<int>();
    r.n = j.at("n").get<int>();
    r.mrr = j.at("mrr").get<double>();
    r.success_at_k = j.at("success_at_k").get<double>();
    r.evaluable_fraction = j.at("evaluable_fraction").get<double>();
    r.test_windows = j.at("test_windows").get<std::size_t>();
    r.dropped_targets = j.at("dropped_targets").get<std::size_t>();
    r.train_windows = j.at("train_windows").get<std::size_t>();
    r.candidates = j.at("candidates").get<int>();
    r.train_user_count = j.at("train_users").get<int>();
    r.test_user_count = j.at("test_users").get<int>();
    r.train_loss = j.at("train_loss").get<std::vector<double>>();
    r.ranks = j.at("ranks").get<std::vector<int>>();
    r.config = j.at("config").get<std::map<std::string, std::string>>();
    r.timestamp = j.value("timestamp", std::string());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: ") + e.what());
  }
  return r;
}

void write_report(std::ostream& out, const EvalReport& report) {
  out << to_json(report).dump(2) << '\n';
}

EvalReport read_report(std::istream& in) {
  try {
    return report_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("report: malformed JSON: ") + e.what());
  }
}

void write_rank_histogram(std::ostream& out, const std::vector<int>& ranks) {
  std::map<int, long> histogram;
  for (int r : ranks) ++histogram[r];
  out << "rank,count\n";
  for (const auto& [rank, count] : histogram) out << rank << ',' << count << '\n';
}

bool verify_report(const EvalReport& report, std::string* message) {
  std::ostringstream why;
  bool ok = true;
  if (report.n != static_cast<int>(report.ranks.size())) {
    ok = false;
    why << "n=" << report.n << " but " << report.ranks.size() << " ranks stored; ";
  }
  if (!report.ranks.empty()) {
    const double m = mrr(report.ranks);
    const double s = success_at_k(report.ranks, report.k);
    if (m != report.mrr) {
      ok = false;
      why << "mrr stored " << format_double(report.mrr) << " recomputed " << format_double(m) << "; ";
    }
    if (s != report.success_at_k) {
      ok = false;
      why << "success_at_k stored " << format_double(report.success_at_k) << " recomputed "
          << format_double(s) << "; ";
    }
  } else if (report.n != 0) {
    ok = false;
  }
  if (message) *message = ok ? "ok" : why.str();
  return ok;
}

// ---------------------------------------------------------------------------
// Pipeline stages
// ---------------------------------------------------------------------------

Catalog make_catalog(const ExperimentConfig& config) {
  return generate_catalog(config.catalog, config.seed);
}

std::vector<UserProfile> make_users(const ExperimentConfig& config) {
  return generate_users(config.users, config.catalog.num_topics, config.seed);
}

std::vector<StreamEvent> make_streams(const ExperimentConfig& config, const Catalog& catalog,
                                      const std::vector<UserProfile>& users) {
  return generate_streams(catalog, users, config.streams, config.seed);
}

CuratedData curate_data(const ExperimentConfig& config, Catalog catalog,
                        std::vector<UserProfile> users, std::vector<StreamEvent> events) {
  CuratedData data;
  data.catalog = std::move(catalog);
  data.users = std::move(users);

  events = filter_min_listen(events, config.threshold_seconds);
  if (config.weeks) events = window_by_time(events, *config.weeks, config.streams.horizon_end);
  std::optional<std::string> bracket;
  if (config.age_bracket != "all") {
    bracket = config.age_bracket;
    std::set<UserId> members;
    for (const UserProfile& u : data.users)
      if (bin_by_age(u.age) == config.age_bracket) members.insert(u.id);
    events = restrict_to_users(events, members);
  }
  if (events.empty()) throw DataError("no stream events survive the curation filters");
  data.top_shows = top_show_cut(events, config.coverage);
  events = restrict_to_shows(events, data.top_shows);
  data.user_sequences = first_listen_sequence(events);
  for (ListeningSequence& seq : data.user_sequences) seq.bracket = bracket;
  data.events = std::move(events);

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < data.user_sequences.size(); ++i)
    if (data.user_sequences[i].shows.size() >= 2) eligible.push_back(i);
  if (eligible.size() < 2) throw DataError("fewer than two users with at least two shows");
  Rng rng(derive_seed(config.seed, "split"));
  rng.shuffle(eligible);

  std::size_t n_test = static_cast<std::size_t>(config.test_users);
  std::size_t n_train = static_cast<std::size_t>(config.train_users);
  if (n_test + n_train > eligible.size()) {
    // Scale both sides down proportionally.
    const double share = static_cast<double>(n_test) / static_cast<double>(n_test + n_train);
    n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(share * eligible.size())));
    n_train = eligible.size() - n_test;
  }
  std::vector<ListeningSequence> train;
  std::vector<ListeningSequence> test;
  for (std::size_t i = 0; i < n_test + n_train; ++i) {
    const ListeningSequence& seq = data.user_sequences[eligible[i]];
    (i < n_test ? test : train).push_back(seq);
  }
  auto by_user = [](const ListeningSequence& a, const ListeningSequence& b) { return a.user < b.user; };
  std::sort(train.begin(), train.end(), by_user);
  std::sort(test.begin(), test.end(), by_user);
  for (const auto& s : train) data.train_users.push_back(s.user);
  for (const auto& s : test) data.test_users.push_back(s.user);

  if (config.constraint == "topic") {
    train = topic_split(train, data.catalog);
    test = topic_split(test, data.catalog);
  }
  if (config.shuffle) {
    train = shuffle_sequences(train, derive_seed(config.seed, "shuffle-ablation"));
    test = shuffle_sequences(test, derive_seed(config.seed, "shuffle-ablation"));
  }
  data.train_sequences = std::move(train);
  data.test_sequences = std::move(test);
  return data;
}

CuratedData prepare_data(const ExperimentConfig& config) {
  Catalog catalog = make_catalog(config);
  std::vector<UserProfile> users = make_users(config);
  std::vector<StreamEvent> events = make_streams(config, catalog, users);
  return curate_data(config, std::move(catalog), std::move(users), std::move(events));
}

EmbeddingTable build_embeddings(const ExperimentConfig& config, const CuratedData& data) {
  const std::vector<ShowId> shows(data.top_shows.begin(), data.top_shows.end());
  EmbeddingTable table;
  if (config.embedding_kind == "kg") {
    DistMultResult kg = train_distmult(data.catalog.triples, data.catalog.num_nodes(), kNumRelations,
                                       config.kg, derive_seed(config.seed, "kg"));
    table = show_table(kg, shows);
  } else {
    table = train_cbow(data.train_sequences, shows, config.cbow, derive_seed(config.seed, "cbow")).shows;
  }
  table.fingerprint = config.fingerprint();
  return table;
}

namespace {

struct TestCase {
  EncodedWindow window;
  UserId user = 0;
  std::optional<TopicId> topic;
  ShowId target = 0;
  std::set<ShowId> exclude;  // everything heard before the target
};

// `stream` separates the seeds of per-topic models; 0 for the pooled model.
template <typename Scalar, typename Net>
std::vector<int> rank_neural(Net& net, const ExperimentConfig& config, const Vocabulary& vocab,
                             const MatrixX<Scalar>& embeddings,
                             const std::vector<EncodedWindow>& train_windows,
                             const std::vector<TestCase>& cases, std::vector<double>& loss,
                             std::uint64_t stream) {
  net.initialize(derive_seed(config.seed, "model-init", stream));
  loss = train_seq(net, train_windows, embeddings, config.train, derive_seed(config.seed, "model-train", stream));
  std::vector<EncodedWindow> windows;
  for (const TestCase& c : cases) windows.push_back(c.window);
  const MatrixX<Scalar> probs = predict(net, windows, embeddings);
  std::vector<int> ranks;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const Eigen::VectorXd scores = probs.col(static_cast<Eigen::Index>(i)).template cast<double>();
    ranks.push_back(rank_by_scores(scores, vocab.shows(), cases[i].exclude, cases[i].target));
  }
  return ranks;
}

template <typename Scalar>
std::vector<int> train_and_rank(const ExperimentConfig& config, const Vocabulary& vocab,
                                const MatrixX<Scalar>& embeddings,
                                const std::vector<EncodedWindow>& train_windows,
                                const std::vector<TestCase>& cases, std::vector<double>& loss,
                                std::uint64_t stream) {
  const int dim = static_cast<int>(embeddings.rows());
  const bool paper = config.preset == "paper-scale";
  if (config.model_kind == "rnn") {
    LstmNet<Scalar> net(paper ? SeqModelConfig::paper_scale(dim, vocab.size())
                              : SeqModelConfig::desk(dim, vocab.size()));
    return rank_neural<Scalar>(net, config, vocab, embeddings, train_windows, cases, loss, stream);
  }
  MlpNet<Scalar> net(paper ? MlpConfig::paper_scale(config.k, dim, vocab.size())
                           : MlpConfig::desk(config.k, dim, vocab.size()));
  return rank_neural<Scalar>(net, config, vocab, embeddings, train_windows, cases, loss, stream);
}

// Pooled: one model over all windows. Per topic: one model per topic tag,
// each ranking only its own topic's test cases; the reported loss curve is
// the window-weighted mean of the per-topic curves.
template <typename Scalar>
std::vector<int> run_neural(const ExperimentConfig& config, const Vocabulary& vocab,
                            const EmbeddingTable& table, const std::vector<EncodedWindow>& train_windows,
                            const std::vector<std::optional<TopicId>>& train_topics,
                            const std::vector<TestCase>& cases, std::vector<double>& loss) {
  const MatrixX<Scalar> embeddings = embedding_matrix<Scalar>(table, vocab);
  if (!config.per_topic) return train_and_rank<Scalar>(config, vocab, embeddings, train_windows, cases, loss, 0);

  std::map<TopicId, std::vector<EncodedWindow>> windows_by_topic;
  for (std::size_t i = 0; i < train_windows.size(); ++i)
    if (train_topics[i]) windows_by_topic[*train_topics[i]].push_back(train_windows[i]);
  std::map<TopicId, std::vector<std::size_t>> cases_by_topic;
  for (std::size_t i = 0; i < cases.size(); ++i) cases_by_topic[cases[i].topic.value()].push_back(i);

  std::vector<int> ranks(cases.size(), 0);
  loss.assign(static_cast<std::size_t>(config.train.epochs), 0.0);
  for (const auto& [topic, indices] : cases_by_topic) {
    const auto& windows = windows_by_topic.at(topic);
    std::vector<TestCase> subset;
    for (std::size_t i : indices) subset.push_back(cases[i]);
    std::vector<double> curve;
    const auto sub_ranks = train_and_rank<Scalar>(config, vocab, embeddings, windows, subset, curve,
                                                  static_cast<std::uint64_t>(topic) + 1);
    for (std::size_t j = 0; j < indices.size(); ++j) ranks[indices[j]] = sub_ranks[j];
    for (std::size_t e = 0; e < curve.size(); ++e)
      loss[e] += curve[e] * static_cast<double>(windows.size()) / static_cast<double>(train_windows.size());
  }
  return ranks;
}

template <typename F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e);
  }
}

}  // namespace

EvalReport run_experiment(const ExperimentConfig& config) {
  stage("config", [&] {
    config.validate();
    return 0;
  });
  Catalog catalog = stage("generate", [&] { return make_catalog(config); });
  std::vector<UserProfile> users = stage("generate", [&] { return make_users(config); });
  std::vector<StreamEvent> events = stage("generate", [&] { return make_streams(config, catalog, users); });
  const CuratedData data = stage("curate", [&] {
    return curate_data(config, std::move(catalog), std::move(users), std::move(events));
  });

  const Vocabulary vocab(data.top_shows);
  EvalReport report;
  report.config = config.to_map();
  report.config_fingerprint = config.fingerprint();
  report.model = config.model_kind;
  report.embedding = config.model_kind == "cf" ? "none" : config.embedding_kind;
  report.constraint = config.constraint;
  report.precision = config.model_kind == "cf" ? "float64" : config.precision;
  report.input_length = config.k;
  report.candidates = vocab.size();
  report.train_user_count = static_cast<int>(data.train_users.size());
  report.test_user_count = static_cast<int>(data.test_users.size());

  std::vector<EncodedWindow> train_windows;
  std::vector<std::optional<TopicId>> train_topics;
  std::vector<TestCase> cases;
  stage("curate", [&] {
    std::set<TopicId> trained_topics;
    for (const TrainingWindow& w : make_training_windows(data.train_sequences, config.k, WindowMode::kTraining)) {
      auto encoded = encode_windows({w}, vocab);
      if (encoded.empty()) continue;
      train_windows.push_back(encoded.front());
      train_topics.push_back(w.provenance.topic);
      if (w.provenance.topic) trained_topics.insert(*w.provenance.topic);
    }
    report.train_windows = train_windows.size();
    for (const ListeningSequence& seq : data.test_sequences) {
      ListeningSequence single = seq;
      auto windows = make_training_windows({single}, config.k, WindowMode::kEvaluation);
      if (windows.empty()) continue;
      ++report.test_windows;
      std::size_t dropped = 0;
      auto encoded = encode_windows(windows, vocab, &dropped);
      // Under per-topic training a topic without training windows has no model.
      if (encoded.empty() || (config.per_topic && !trained_topics.count(seq.topic.value()))) {
        ++report.dropped_targets;
        continue;
      }
      TestCase c;
      c.window = encoded.front();
      c.user = seq.user;
      c.topic = seq.topic;
      c.target = seq.shows.back();
      c.exclude.insert(seq.shows.begin(), seq.shows.end() - 1);
      cases.push_back(std::move(c));
    }
    if (report.test_windows == 0) throw DataError("no evaluable test windows");
    return 0;
  });
  report.evaluable_fraction =
      static_cast<double>(cases.size()) / static_cast<double>(report.test_windows);

  if (config.model_kind == "cf") {
    report.ranks = stage("train", [&] {
      std::vector<ListeningSequence> all = data.train_sequences;
      all.insert(all.end(), data.test_sequences.begin(), data.test_sequences.end());
      const std::set<UserId> held_out(data.test_users.begin(), data.test_users.end());
      const InteractionMatrix X = build_interaction_matrix(all, vocab.shows(), held_out);
      const Factorization f = nmf_factorize(X.values, config.nmf, derive_seed(config.seed, "cf"));
      report.train_loss = f.objective;
      std::vector<int> ranks;
      for (const TestCase& c : cases) {
        const int row = X.row_of(c.user);
        const Eigen::VectorXd scores = cf_scores(f.W.row(row).transpose(), f.H);
        ranks.push_back(rank_by_scores(scores, vocab.shows(), c.exclude, c.target));
      }
      return ranks;
    });
  } else {
    const EmbeddingTable table = stage("embed", [&] { return build_embeddings(config, data); });
    report.ranks = stage("train", [&] {
      if (train_windows.empty()) throw DataError("no training windows");
      return config.precision == "float64"
                 ? run_neural<double>(config, vocab, table, train_windows, train_topics, cases, report.train_loss)
                 : run_neural<float>(config, vocab, table, train_windows, train_topics, cases, report.train_loss);
    });
  }

  stage("evaluate", [&] {
    report.n = static_cast<int>(report.ranks.size());
    report.mrr = mrr(report.ranks);
    report.success_at_k = success_at_k(report.ranks, report.k);
    return 0;
  });
  report.timestamp = utc_now();
  return report;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

std::string SweepSpec::key_for_axis(const std::string& axis) {
  static const std::map<std::string, std::string> keys{{"weeks", "curate.weeks"},
                                                       {"age_bracket", "curate.age_bracket"},
                                                       {"input_length", "curate.k"},
                                                       {"embedding_kind", "embed.kind"},
                                                       {"constraint", "curate.constraint"}};
  auto it = keys.find(axis);
  if (it == keys.end()) throw ConfigError("unknown sweep axis '" + axis + "'");
  return it->second;
}

void SweepSpec::validate() const {
  key_for_axis(axis);
  if (values.empty()) throw ConfigError("sweep has no axis values");
}

std::vector<SweepCell> run_sweep(const SweepSpec& spec, int parallel) {
  spec.validate();
  const std::string key = SweepSpec::key_for_axis(spec.axis);
  std::vector<SweepCell> cells(spec.values.size());
  auto run_cell = [&](std::size_t i) {
    SweepCell& cell = cells[i];
    cell.axis_value = spec.values[i];
    try {
      ExperimentConfig c = spec.base;
      c.set(key, spec.values[i]);
      cell.report = run_experiment(c);
    } catch (const Error& e) {
      cell.error = e.what();
      cell.code = e.code();
    } catch (const std::exception& e) {
      cell.error = e.what();
      cell.code = ExitCode::kFailure;
    }
  };
  if (parallel <= 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
    return cells;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (int w = 0; w < parallel; ++w)
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) run_cell(i);
    });
  for (auto& t : workers) t.join();
  return cells;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << "axis_value,n,mrr,success_at_20,evaluable_fraction,status\n";
  for (const SweepCell& cell : cells) {
    out << cell.axis_value << ',';
    if (cell.ok()) {
      const EvalReport& r = *cell.report;
      out << r.n << ',' << format_double(r.mrr) << ',' << format_double(success_at_k(r.ranks, 20))
          << ',' << format_double(r.evaluable_fraction) << ",ok\n";
    } else {
      out << ",,,,failed\n";
    }
  }
}

SweepSpec load_sweep_spec(const std::string& path) {
  std::map<std::string, std::string> extra;
  SweepSpec spec;
  spec.base = load_config(path, &extra);
  for (const auto& [key, value] : extra) {
    if (key == "sweep.axis") {
      spec.axis = value;
    } else if (key == "sweep.values") {
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ',')) {
        auto b = item.find_first_not_of(" \t");
        auto e = item.find_last_not_of(" \t");
        if (b != std::string::npos) spec.values.push_back(item.substr(b, e - b + 1));
      }
    } else {
      throw ConfigError(path + ": unknown key '" + key + "'");
    }
  }
  if (spec.axis.empty()) throw ConfigError(path + ": missing sweep.axis");
  spec.validate();
  return spec;
}

}  // namespace trajrec
