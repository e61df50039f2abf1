#pragma once

#include "trajrec/config.hpp"
#include "trajrec/curate.hpp"

#include <nlohmann/json.hpp>

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace trajrec {

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

// Mean of 1/rank_i.
double mrr(const std::vector<int>& ranks);
// Fraction of ranks <= k.
double success_at_k(const std::vector<int>& ranks, int k = 20);

class MissingTargetError : public DataError {
 public:
  explicit MissingTargetError(const std::string& what) : DataError(what) {}
};

// 1-based position of `target` in `ranked`.
int rank_of_target(const std::vector<ShowId>& ranked, ShowId target);

// Rank `target` would get in the list produced by sorting `ids` (minus
// `exclude`) by descending score with ascending-id tie-break, without
// materializing the sort.
int rank_by_scores(const Eigen::Ref<const Eigen::VectorXd>& scores, const std::vector<ShowId>& ids,
                   const std::set<ShowId>& exclude, ShowId target);

// Independent Fisher-Yates permutation of each sequence's shows, seeded from
// (seed, user id, topic).
std::vector<ListeningSequence> shuffle_sequences(const std::vector<ListeningSequence>& sequences,
                                                 std::uint64_t seed);

// Fraction of adjacent pairs sharing a topic, over all sequences.
double same_topic_adjacency(const std::vector<ListeningSequence>& sequences, const Catalog& catalog);

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct EvalReport {
  std::string config_fingerprint;
  std::map<std::string, std::string> config;
  std::string model;
  std::string embedding;
  std::string constraint;
  std::string precision;
  int input_length = 0;
  int k = 20;
  int n = 0;
  double mrr = 0.0;
  double success_at_k = 0.0;
  std::vector<int> ranks;
  double evaluable_fraction = 0.0;
  std::size_t test_windows = 0;
  std::size_t dropped_targets = 0;
  std::size_t train_windows = 0;
  int candidates = 0;
  int train_user_count = 0;
  int test_user_count = 0;
  std::vector<double> train_loss;
  std::string timestamp;  // the only field that differs between identical runs
};

nlohmann::ordered_json to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::json& j);
void write_report(std::ostream& out, const EvalReport& report);
EvalReport read_report(std::istream& in);

// "rank,count" CSV of the rank distribution, ascending rank.
void write_rank_histogram(std::ostream& out, const std::vector<int>& ranks);

// Recomputes mrr and success_at_k from the stored ranks; true on exact equality.
bool verify_report(const EvalReport& report, std::string* message = nullptr);

// Intermediate products of the data stages, exposed for tests and the CLI.
struct CuratedData {
  Catalog catalog;
  std::vector<UserProfile> users;
  std::vector<StreamEvent> events;
  std::set<ShowId> top_shows;
  std::vector<ListeningSequence> user_sequences;  // one per user, after dedup
  std::vector<UserId> train_users;
  std::vector<UserId> test_users;
  std::vector<ListeningSequence> train_sequences;  // after shuffle / topic split
  std::vector<ListeningSequence> test_sequences;
};

// A stage failure; what() is prefixed with the stage name.
class StageError : public Error {
 public:
  StageError(std::string stage, const Error& cause)
      : Error(cause.code(), stage + ": " + cause.what()), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

std::vector<UserProfile> make_users(const ExperimentConfig& config);
Catalog make_catalog(const ExperimentConfig& config);
std::vector<StreamEvent> make_streams(const ExperimentConfig& config, const Catalog& catalog,
                                      const std::vector<UserProfile>& users);

// Curation pipeline: min-listen -> time window -> age bracket -> top-show cut
// -> first-listen dedup -> train/test split -> topic split -> shuffle.
CuratedData curate_data(const ExperimentConfig& config, Catalog catalog,
                        std::vector<UserProfile> users, std::vector<StreamEvent> events);
CuratedData prepare_data(const ExperimentConfig& config);

// Embedding table over the candidate shows for the configured kind.
EmbeddingTable build_embeddings(const ExperimentConfig& config, const CuratedData& data);

EvalReport run_experiment(const ExperimentConfig& config);

struct SweepSpec {
  std::string axis;  // weeks | age_bracket | input_length | embedding_kind | constraint
  std::vector<std::string> values;
  ExperimentConfig base;

  // Config key controlled by `axis`.
  static std::string key_for_axis(const std::string& axis);
  void validate() const;
};

struct SweepCell {
  std::string axis_value;
  std::optional<EvalReport> report;
  std::string error;
  ExitCode code = ExitCode::kOk;
  bool ok() const { return report.has_value(); }
};

// One run_experiment per axis value; a failing cell is recorded and the sweep
// continues. `parallel` > 1 runs cells on that many threads.
std::vector<SweepCell> run_sweep(const SweepSpec& spec, int parallel = 1);

// CSV with one row per axis value:
// axis_value,n,mrr,success_at_20,evaluable_fraction,status
void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells);

// Sweep specs are config files with two extra keys: sweep.axis and
// sweep.values (comma separated).
SweepSpec load_sweep_spec(const std::string& path);

}  // namespace trajrec
