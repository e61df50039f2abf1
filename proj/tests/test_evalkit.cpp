#include "trajrec/evalkit.hpp"

#include <doctest.h>

#include "exact_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

using namespace trajrec;

namespace {

Rational brute_mrr(const std::vector<int>& ranks) {
  Rational sum = 0;
  for (int r : ranks) sum += Rational(1, r);
  return sum / static_cast<long>(ranks.size());
}

}  // namespace

TEST_CASE("mrr and success_at_k on fixed lists") {
  CHECK(nearest(mrr({1, 2, 4}), Rational(7, 12)));
  CHECK(mrr({1, 2, 4}) == 7.0 / 12.0);
  CHECK(mrr({1, 1, 1}) == 1.0);
  CHECK(success_at_k({1, 21, 20}, 20) == 2.0 / 3.0);
  CHECK(success_at_k({3, 7, 9}, 9) == 1.0);
  CHECK_THROWS_AS(mrr({}), DataError);
  CHECK_THROWS_AS(success_at_k({}), DataError);
  CHECK_THROWS_AS(mrr({0, 1}), DataError);
  CHECK_THROWS_AS(success_at_k({1}, 0), ConfigError);
}

TEST_CASE("mrr matches an exact oracle on random lists, any order") {
  Rng rng(20240611);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> ranks(1 + rng.index(300));
    for (int& r : ranks) r = static_cast<int>(rng.integer(1, 400));
    const double m = mrr(ranks);
    CHECK(nearest(m, brute_mrr(ranks)));
    std::vector<int> permuted = ranks;
    rng.shuffle(permuted);
    CHECK(mrr(permuted) == m);
    const int k = static_cast<int>(rng.integer(1, 50));
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; });
    CHECK(success_at_k(ranks, k) == static_cast<double>(hits) / static_cast<double>(ranks.size()));
    CHECK(success_at_k(permuted, k) == success_at_k(ranks, k));
    CHECK(m >= 1.0 / *std::max_element(ranks.begin(), ranks.end()));
    CHECK(m <= 1.0);
    CHECK(success_at_k(ranks, k) <= success_at_k(ranks, k + 1));
  }
}

TEST_CASE("rank_of_target") {
  std::vector<ShowId> ranked(100);
  for (int i = 0; i < 100; ++i) ranked[i] = 1000 - i;
  CHECK(rank_of_target(ranked, 1000) == 1);
  CHECK(rank_of_target(ranked, 901) == 100);
  CHECK_THROWS_AS(rank_of_target(ranked, 5), MissingTargetError);
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    rng.shuffle(ranked);
    const ShowId target = ranked[rng.index(ranked.size())];
    int pos = 0;
    while (ranked[pos] != target) ++pos;
    CHECK(rank_of_target(ranked, target) == pos + 1);
  }
}

TEST_CASE("rank_by_scores agrees with an explicit sort") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng.index(40));
    std::vector<ShowId> ids(n);
    for (int i = 0; i < n; ++i) ids[i] = 3 * i + 1;
    rng.shuffle(ids);
    Eigen::VectorXd scores(n);
    for (int i = 0; i < n; ++i) scores(i) = static_cast<double>(rng.integer(0, 5));  // many ties
    std::set<ShowId> exclude;
    for (int i = 0; i < n; ++i)
      if (rng.bernoulli(0.2)) exclude.insert(ids[i]);
    std::vector<int> keep;
    for (int i = 0; i < n; ++i)
      if (!exclude.count(ids[i])) keep.push_back(i);
    if (keep.empty()) continue;
    std::sort(keep.begin(), keep.end(), [&](int a, int b) {
      return scores(a) != scores(b) ? scores(a) > scores(b) : ids[a] < ids[b];
    });
    std::vector<ShowId> ranked;
    for (int i : keep) ranked.push_back(ids[i]);
    const ShowId target = ranked[rng.index(ranked.size())];
    CHECK(rank_by_scores(scores, ids, exclude, target) == rank_of_target(ranked, target));
  }
  Eigen::VectorXd s(2);
  s << 1.0, 2.0;
  CHECK_THROWS_AS(rank_by_scores(s, {1, 2}, {2}, 2), MissingTargetError);
  CHECK_THROWS_AS(rank_by_scores(s, {1, 2}, {}, 9), MissingTargetError);
  CHECK_THROWS_AS(rank_by_scores(s, {1, 2, 3}, {}, 1), DimensionError);
}

TEST_CASE("shuffle_sequences") {
  std::vector<ListeningSequence> seqs{{1, {5}, {}, {}}, {2, {1, 2, 3, 4, 5, 6, 7, 8}, 3, {}},
                                      {3, {9, 8, 7, 6, 5, 4, 3}, {}, {}}};
  const auto a = shuffle_sequences(seqs, 42);
  const auto b = shuffle_sequences(seqs, 42);
  CHECK(a == b);
  CHECK(a[0].shows == std::vector<ShowId>{5});
  bool changed = false;
  for (std::size_t i = 0; i < seqs.size(); ++i) {
    auto x = a[i].shows;
    auto y = seqs[i].shows;
    changed = changed || x != y;
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    CHECK(x == y);
    CHECK(a[i].user == seqs[i].user);
  }
  CHECK(changed);
  // A user's permutation does not depend on who else is in the list.
  CHECK(shuffle_sequences({seqs[2]}, 42)[0] == a[2]);
}

TEST_CASE("shuffling planted data moves adjacency toward the random-permutation rate") {
  ExperimentConfig c;
  c.users.num_users = 600;
  const CuratedData data = prepare_data(c);
  const double before = same_topic_adjacency(data.user_sequences, data.catalog);
  const double after = same_topic_adjacency(shuffle_sequences(data.user_sequences, 9), data.catalog);
  // Random-permutation baseline: expected adjacency of a uniformly shuffled
  // sequence equals the share of same-topic pairs among all ordered pairs.
  double same = 0.0, pairs = 0.0;
  for (const auto& s : data.user_sequences)
    for (std::size_t i = 0; i < s.shows.size(); ++i)
      for (std::size_t j = 0; j < s.shows.size(); ++j)
        if (i != j) {
          pairs += 1.0;
          same += data.catalog.shares_topic(s.shows[i], s.shows[j]) ? 1.0 : 0.0;
        }
  const double baseline = same / pairs;
  CHECK(before > 0.8);
  CHECK(after < before - 0.1);
  CHECK(std::abs(after - baseline) < 0.05);
}

TEST_CASE("report JSON round trip and verification") {
  EvalReport r;
  r.config_fingerprint = "abc";
  r.config = {{"seed", "1"}};
  r.model = "rnn";
  r.embedding = "kg";
  r.constraint = "none";
  r.precision = "float32";
  r.input_length = 2;
  r.ranks = {1, 3, 25, 2};
  r.n = 4;
  r.mrr = mrr(r.ranks);
  r.success_at_k = success_at_k(r.ranks, 20);
  r.train_loss = {2.5, 1.25};
  r.timestamp = "2020-01-01T00:00:00Z";
  std::stringstream ss;
  write_report(ss, r);
  const EvalReport back = read_report(ss);
  CHECK(back.ranks == r.ranks);
  CHECK(back.mrr == r.mrr);
  CHECK(back.train_loss == r.train_loss);
  CHECK(verify_report(back));
  EvalReport bad = back;
  bad.mrr = std::nextafter(bad.mrr, 1.0);
  std::string why;
  CHECK_FALSE(verify_report(bad, &why));
  CHECK(why.find("mrr") != std::string::npos);
  std::stringstream junk("{\"model\": 3}");
  CHECK_THROWS_AS(read_report(junk), DataError);
}

TEST_CASE("curation split is disjoint and seeded") {
  ExperimentConfig c;
  c.users.num_users = 400;
  c.train_users = 200;
  c.test_users = 50;
  const CuratedData a = prepare_data(c);
  const CuratedData b = prepare_data(c);
  CHECK(a.train_users == b.train_users);
  CHECK(a.test_users == b.test_users);
  CHECK(a.train_users.size() == 200);
  CHECK(a.test_users.size() == 50);
  std::vector<UserId> both;
  std::set_intersection(a.train_users.begin(), a.train_users.end(), a.test_users.begin(),
                        a.test_users.end(), std::back_inserter(both));
  CHECK(both.empty());
  c.seed = 2;
  CHECK(prepare_data(c).test_users != a.test_users);
}

TEST_CASE("split scales down proportionally when users are scarce") {
  ExperimentConfig c;
  c.users.num_users = 90;
  c.train_users = 800;
  c.test_users = 100;
  const CuratedData d = prepare_data(c);
  const std::size_t total = d.train_users.size() + d.test_users.size();
  CHECK(total <= 90);
  CHECK(std::abs(static_cast<double>(d.test_users.size()) / total - 1.0 / 9.0) < 0.02);
}

TEST_CASE("run_experiment is deterministic and self-consistent") {
  ExperimentConfig c;
  c.catalog.num_shows = 120;
  c.catalog.num_topics = 6;
  c.catalog.num_entities = 80;
  c.users.num_users = 300;
  c.train_users = 200;
  c.test_users = 60;
  c.kg.epochs = 5;
  c.train.epochs = 2;
  for (std::string model : {"rnn", "mlp", "cf"}) {
    c.model_kind = model;
    EvalReport a = run_experiment(c);
    EvalReport b = run_experiment(c);
    CHECK(a.model == model);
    a.timestamp.clear();
    b.timestamp.clear();
    CHECK(to_json(a).dump() == to_json(b).dump());
    CHECK(verify_report(a));
    CHECK(a.n == static_cast<int>(a.ranks.size()));
    CHECK(a.n > 0);
    CHECK(a.evaluable_fraction > 0.5);
    CHECK(a.evaluable_fraction <= 1.0);
    for (int r : a.ranks) CHECK((r >= 1 && r <= a.candidates));
  }
}

TEST_CASE("per-topic training trains one model per topic tag") {
  ExperimentConfig c;
  c.catalog.num_shows = 120;
  c.catalog.num_topics = 4;
  c.catalog.num_entities = 80;
  c.users.num_users = 300;
  c.train_users = 200;
  c.test_users = 60;
  c.kg.epochs = 5;
  c.train.epochs = 2;
  c.model_kind = "mlp";
  c.constraint = "topic";
  const EvalReport pooled = run_experiment(c);
  c.per_topic = true;
  const EvalReport split = run_experiment(c);
  CHECK(verify_report(split));
  CHECK(split.ranks == run_experiment(c).ranks);
  CHECK(split.test_windows == pooled.test_windows);
  CHECK(static_cast<std::size_t>(split.n) + split.dropped_targets == split.test_windows);
  CHECK(split.ranks != pooled.ranks);
  CHECK(split.train_loss.size() == 2);
  c.constraint = "none";
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("stage failures name the stage") {
  ExperimentConfig c;
  c.users.num_users = 1;
  try {
    run_experiment(c);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "curate");
    CHECK(e.code() == ExitCode::kData);
  }
  c = ExperimentConfig{};
  c.k = 0;
  CHECK_THROWS_AS(run_experiment(c), StageError);
}

TEST_CASE("sweep records failed cells and continues") {
  SweepSpec spec;
  spec.axis = "weeks";
  spec.values = {"1", "0", "6"};
  spec.base.catalog.num_shows = 100;
  spec.base.catalog.num_topics = 5;
  spec.base.catalog.num_entities = 60;
  spec.base.users.num_users = 250;
  spec.base.train_users = 150;
  spec.base.test_users = 50;
  spec.base.model_kind = "cf";
  const auto cells = run_sweep(spec, 2);
  REQUIRE(cells.size() == 3);
  CHECK(cells[0].ok());
  CHECK_FALSE(cells[1].ok());
  CHECK(cells[1].code == ExitCode::kConfig);
  CHECK(cells[2].ok());
  std::stringstream csv;
  write_sweep_csv(csv, cells);
  std::string line;
  int rows = -1;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 3);
  CHECK(csv.str().find("\n0,,,,,failed\n") != std::string::npos);

  // A single-value sweep equals one run_experiment.
  spec.values = {"6"};
  ExperimentConfig one = spec.base;
  one.weeks = 6;
  EvalReport direct = run_experiment(one);
  EvalReport swept = *run_sweep(spec)[0].report;
  CHECK(direct.ranks == swept.ranks);
  CHECK(direct.config_fingerprint == swept.config_fingerprint);

  // Parallel and serial sweeps agree cell by cell.
  spec.values = {"1", "2"};
  const auto serial = run_sweep(spec, 1);
  const auto parallel = run_sweep(spec, 2);
  for (std::size_t i = 0; i < 2; ++i) CHECK(serial[i].report->ranks == parallel[i].report->ranks);

  spec.axis = "colour";
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("rank histogram") {
  std::stringstream out;
  write_rank_histogram(out, {3, 1, 3, 20});
  CHECK(out.str() == "rank,count\n1,1\n3,2\n20,1\n");
}
