// trajrec: data generation, curation, training and evaluation from one config.
#include "trajrec/cfbase.hpp"
#include "trajrec/config.hpp"
#include "trajrec/curate.hpp"
#include "trajrec/embed.hpp"
#include "trajrec/evalkit.hpp"
#include "trajrec/seqmodel.hpp"
#include "trajrec/synthcat.hpp"
#include "trajrec/table.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace trajrec;

namespace {

struct Globals {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  int parallel = 1;
};

ExperimentConfig load(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  ExperimentConfig c = load_config(g.config);
  if (g.seed_override) c.seed = *g.seed_override;
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

// Creates the output directory when its parent exists.
fs::path output_dir(const std::string& dir) {
  fs::path p(dir);
  if (fs::is_directory(p)) return p;
  fs::path parent = p.has_parent_path() ? p.parent_path() : fs::path(".");
  if (!fs::is_directory(parent))
    throw ConfigError("output directory '" + dir + "' cannot be created: parent does not exist");
  std::error_code ec;
  fs::create_directory(p, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path.string() + "'");
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read '" + path.string() + "'");
  return in;
}

std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(ss.str())));
  return buf;
}

void save_report(const fs::path& path, const EvalReport& r) {
  auto out = open_out(path);
  write_report(out, r);
}

const fs::path kCatalog = "catalog.json";
const fs::path kStreams = "streams.jsonl";
const fs::path kTrain = "train_sequences.jsonl";
const fs::path kTest = "test_sequences.jsonl";
const fs::path kCandidates = "candidates.json";
const fs::path kEmbeddings = "embeddings.tsv";

int cmd_gen(const Globals& g) {
  const ExperimentConfig c = load(g);
  const fs::path dir = output_dir(c.output_dir);
  const Catalog catalog = make_catalog(c);
  const auto users = make_users(c);
  const auto events = make_streams(c, catalog, users);
  {
    auto out = open_out(dir / kCatalog);
    write_catalog(out, catalog, c.fingerprint());
  }
  {
    auto out = open_out(dir / kStreams);
    write_streams(out, events, c.fingerprint());
  }
  for (const fs::path& f : {kCatalog, kStreams})
    std::cout << file_digest(dir / f) << "  " << (dir / f).string() << '\n';
  return 0;
}

int cmd_curate(const Globals& g) {
  const ExperimentConfig c = load(g);
  const fs::path dir = output_dir(c.output_dir);
  auto cin = open_in(dir / kCatalog);
  Catalog catalog = read_catalog(cin);
  auto sin = open_in(dir / kStreams);
  auto events = read_streams(sin);
  const CuratedData data = curate_data(c, std::move(catalog), make_users(c), std::move(events));
  {
    auto out = open_out(dir / kTrain);
    write_sequences(out, data.train_sequences, c.fingerprint());
  }
  {
    auto out = open_out(dir / kTest);
    write_sequences(out, data.test_sequences, c.fingerprint());
  }
  nlohmann::ordered_json cand;
  cand["fingerprint"] = c.fingerprint();
  cand["shows"] = data.top_shows;
  cand["train_users"] = data.train_users;
  cand["test_users"] = data.test_users;
  open_out(dir / kCandidates) << cand.dump() << '\n';
  std::cout << "candidates=" << data.top_shows.size() << " train_sequences=" << data.train_sequences.size()
            << " test_sequences=" << data.test_sequences.size() << '\n';
  return 0;
}

std::vector<ShowId> read_candidates(const fs::path& dir) {
  auto in = open_in(dir / kCandidates);
  try {
    return nlohmann::json::parse(in).at("shows").get<std::vector<ShowId>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("candidates: ") + e.what());
  }
}

std::vector<ListeningSequence> read_seq_file(const fs::path& path) {
  auto in = open_in(path);
  return read_sequences(in);
}

int cmd_embed(const Globals& g) {
  const ExperimentConfig c = load(g);
  const fs::path dir = output_dir(c.output_dir);
  const std::vector<ShowId> shows = read_candidates(dir);
  EmbeddingTable table;
  if (c.embedding_kind == "kg") {
    auto in = open_in(dir / kCatalog);
    const Catalog catalog = read_catalog(in);
    table = show_table(train_distmult(catalog.triples, catalog.num_nodes(), kNumRelations, c.kg,
                                      derive_seed(c.seed, "kg")),
                       shows);
  } else {
    table = train_cbow(read_seq_file(dir / kTrain), shows, c.cbow, derive_seed(c.seed, "cbow")).shows;
  }
  table.fingerprint = c.fingerprint();
  save_table((dir / kEmbeddings).string(), table);
  std::cout << "kind=" << table.kind << " dim=" << table.dim() << " count=" << table.count() << '\n';
  return 0;
}

// `stream` 0 is the pooled model; topic t uses stream t + 1, as in run.
template <typename Scalar>
void train_and_save(const ExperimentConfig& c, const fs::path& dir, const Vocabulary& vocab,
                    const std::vector<EncodedWindow>& windows, std::uint64_t stream, const fs::path& file) {
  const MatrixX<Scalar> E = embedding_matrix<Scalar>(load_table((dir / kEmbeddings).string()), vocab);
  const int dim = static_cast<int>(E.rows());
  const bool paper = c.preset == "paper-scale";
  auto finish = [&](auto& net) {
    net.initialize(derive_seed(c.seed, "model-init", stream));
    const auto loss = train_seq(net, windows, E, c.train, derive_seed(c.seed, "model-train", stream));
    auto out = open_out(dir / file);
    write_params(out, net, c.fingerprint());
    std::cout << file.string() << ": windows=" << windows.size()
              << " final_loss=" << (loss.empty() ? 0.0 : loss.back()) << '\n';
  };
  if (c.model_kind == "rnn") {
    LstmNet<Scalar> net(paper ? SeqModelConfig::paper_scale(dim, vocab.size())
                              : SeqModelConfig::desk(dim, vocab.size()));
    finish(net);
  } else {
    MlpNet<Scalar> net(paper ? MlpConfig::paper_scale(c.k, dim, vocab.size())
                             : MlpConfig::desk(c.k, dim, vocab.size()));
    finish(net);
  }
}

int cmd_train(const Globals& g) {
  const ExperimentConfig c = load(g);
  const fs::path dir = output_dir(c.output_dir);
  const Vocabulary vocab(read_candidates(dir));
  const auto train = read_seq_file(dir / kTrain);
  if (c.model_kind == "cf") {
    auto all = train;
    const auto test = read_seq_file(dir / kTest);
    all.insert(all.end(), test.begin(), test.end());
    std::set<UserId> held_out;
    for (const auto& s : test) held_out.insert(s.user);
    const InteractionMatrix X = build_interaction_matrix(all, vocab.shows(), held_out);
    const Factorization f = nmf_factorize(X.values, c.nmf, derive_seed(c.seed, "cf"));
    EmbeddingTable w = factor_w_table(f, X.users);
    EmbeddingTable h = factor_h_table(f, vocab.shows());
    w.fingerprint = h.fingerprint = c.fingerprint();
    save_table((dir / "nmf_W.tsv").string(), w);
    save_table((dir / "nmf_H.tsv").string(), h);
    std::cout << "rank=" << f.rank() << " iterations=" << f.iterations
              << " objective=" << (f.objective.empty() ? 0.0 : f.objective.back()) << '\n';
    return 0;
  }
  const auto all = make_training_windows(train, c.k, WindowMode::kTraining);
  std::map<std::uint64_t, std::vector<TrainingWindow>> groups;
  for (const TrainingWindow& w : all)
    groups[c.per_topic && w.provenance.topic ? static_cast<std::uint64_t>(*w.provenance.topic) + 1 : 0].push_back(w);
  if (all.empty()) throw DataError("no training windows");
  for (const auto& [stream, group] : groups) {
    const auto windows = encode_windows(group, vocab);
    if (windows.empty()) continue;
    const fs::path file =
        stream == 0 ? fs::path("model.params") : fs::path("model_topic" + std::to_string(stream - 1) + ".params");
    if (c.precision == "float64") train_and_save<double>(c, dir, vocab, windows, stream, file);
    else train_and_save<float>(c, dir, vocab, windows, stream, file);
  }
  return 0;
}

std::string summary(const EvalReport& r) {
  std::ostringstream s;
  s << "mrr=" << format_double(r.mrr) << " sa20=" << format_double(success_at_k(r.ranks, 20))
    << " n=" << r.n;
  return s.str();
}

int cmd_run(const Globals& g) {
  const ExperimentConfig c = load(g);
  const fs::path dir = output_dir(c.output_dir);
  const EvalReport r = run_experiment(c);
  save_report(dir / "report.json", r);
  auto hist = open_out(dir / "rank_histogram.csv");
  write_rank_histogram(hist, r.ranks);
  std::cout << summary(r) << '\n';
  return 0;
}

int cmd_sweep(const Globals& g) {
  if (g.config.empty()) throw ConfigError("--config is required");
  SweepSpec spec = load_sweep_spec(g.config);
  if (g.seed_override) spec.base.seed = *g.seed_override;
  if (!g.out.empty()) spec.base.output_dir = g.out;
  const fs::path dir = output_dir(spec.base.output_dir);
  const auto cells = run_sweep(spec, g.parallel);
  int code = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (cells[i].ok()) {
      save_report(dir / ("cell_" + std::to_string(i) + ".json"), *cells[i].report);
    } else {
      std::cerr << "cell " << spec.axis << "=" << cells[i].axis_value << " failed: " << cells[i].error << '\n';
      if (code == 0) code = static_cast<int>(cells[i].code);
    }
  }
  auto out = open_out(dir / "sweep.csv");
  write_sweep_csv(out, cells);
  write_sweep_csv(std::cout, cells);
  return code;
}

int cmd_ablate_shuffle(const Globals& g) {
  ExperimentConfig c = load(g);
  const fs::path dir = output_dir(c.output_dir);
  c.shuffle = false;
  const EvalReport ordered = run_experiment(c);
  c.shuffle = true;
  const EvalReport shuffled = run_experiment(c);
  save_report(dir / "report_ordered.json", ordered);
  save_report(dir / "report_shuffled.json", shuffled);
  const double a = success_at_k(ordered.ranks, 20);
  const double b = success_at_k(shuffled.ranks, 20);
  nlohmann::ordered_json out;
  out["ordered"] = to_json(ordered);
  out["shuffled"] = to_json(shuffled);
  out["delta_sa20_relative"] = a > 0.0 ? (b - a) / a : 0.0;
  out["real_data_reference"] = "ordered vs shuffled on real listening data: Sa20 0.4515 -> 0.3774 (about -17%)";
  std::cout << out.dump(2) << '\n';
  std::cout << "ordered: " << summary(ordered) << "\nshuffled: " << summary(shuffled)
            << "\ndelta_sa20_relative=" << format_double(out["delta_sa20_relative"].get<double>()) << '\n';
  return 0;
}

int cmd_verify(const Globals& g, const std::vector<std::string>& reports) {
  if (reports.empty()) throw ConfigError("verify: no report files given");
  std::optional<std::string> expected;
  if (!g.config.empty()) expected = load(g).fingerprint();
  int code = 0;
  for (const std::string& path : reports) {
    auto in = open_in(path);
    const EvalReport r = read_report(in);
    std::string why;
    bool ok = verify_report(r, &why);
    if (expected && r.config_fingerprint != *expected) {
      ok = false;
      why = "fingerprint " + r.config_fingerprint + " does not match config " + *expected;
    }
    std::cout << path << ": " << (ok ? "ok" : "MISMATCH " + why) << '\n';
    if (!ok) code = static_cast<int>(ExitCode::kData);
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory-based podcast recommendation experiments"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed = 0;
  app.add_option("--config", g.config, "Experiment config (key = value lines)");
  app.add_option("--out", g.out, "Output directory (overrides output.dir)");
  auto* seed_opt = app.add_option("--seed-override", seed, "Replace the config seed");
  app.add_option("--parallel", g.parallel, "Worker threads for sweep")->check(CLI::PositiveNumber);
  app.fallthrough();

  std::vector<std::string> reports;
  auto* gen = app.add_subcommand("gen", "Generate catalog and listening log");
  auto* curate = app.add_subcommand("curate", "Filter, dedup, split and window the log");
  auto* embed = app.add_subcommand("embed", "Train show embeddings");
  auto* train = app.add_subcommand("train", "Train the configured model");
  auto* run = app.add_subcommand("run", "Full experiment; writes report.json");
  auto* sweep = app.add_subcommand("sweep", "Run one experiment per axis value");
  auto* ablate = app.add_subcommand("ablate-shuffle", "Ordered vs shuffled training");
  auto* verify = app.add_subcommand("verify", "Recompute metrics from stored ranks");
  verify->add_option("reports", reports, "Report JSON files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(ExitCode::kConfig);
  }
  if (seed_opt->count()) g.seed_override = seed;

  try {
    if (*gen) return cmd_gen(g);
    if (*curate) return cmd_curate(g);
    if (*embed) return cmd_embed(g);
    if (*train) return cmd_train(g);
    if (*run) return cmd_run(g);
    if (*sweep) return cmd_sweep(g);
    if (*ablate) return cmd_ablate_shuffle(g);
    if (*verify) return cmd_verify(g, reports);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(ExitCode::kFailure);
  }
  return 0;
}
