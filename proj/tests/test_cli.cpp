#include "trajrec/evalkit.hpp"

#include <doctest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace trajrec;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result sh(const std::string& args) {
  const std::string cmd = std::string(TRAJREC_CLI) + " " + args + " 2>/dev/null";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Workspace {
  fs::path root;
  Workspace() {
    root = fs::temp_directory_path() / ("trajrec_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() { fs::remove_all(root); }

  // Small enough to run the whole pipeline in a few seconds.
  std::string config(const std::string& name, const std::string& extra = {}) const {
    const fs::path p = root / name;
    std::ofstream out(p);
    out << "seed = 3\n"
           "catalog.num_shows = 80\ncatalog.num_topics = 5\ncatalog.num_entities = 60\n"
           "users.num_users = 300\nusers.age_skew = \n"
           "split.train_users = 200\nsplit.test_users = 60\n"
           "kg.dim = 8\nkg.epochs = 3\ncbow.dim = 8\ncbow.epochs = 3\n"
           "model.epochs = 2\ncf.rank = 5\n"
        << extra;
    return p.string();
  }
  std::string dir(const std::string& name) const { return (root / name).string(); }
};

// Report contents that must not depend on when or where the run happened.
nlohmann::json stable_part(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  j.erase("timestamp");
  j["config"].erase("output.dir");
  return j;
}

}  // namespace

TEST_CASE("usage errors exit with the config code") {
  CHECK(sh("").code == 2);
  CHECK(sh("frobnicate").code == 2);
  CHECK(sh("run --parallel 0").code == 2);
  CHECK(sh("run").code == 2);
  CHECK(sh("--help").code == 0);
}

TEST_CASE("gen is deterministic and reports digests") {
  Workspace ws;
  const std::string cfg = ws.config("a.cfg");
  const Result a = sh("gen --config " + cfg + " --out " + ws.dir("a"));
  const Result b = sh("gen --config " + cfg + " --out " + ws.dir("b"));
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(a.out.find("catalog.json") != std::string::npos);
  CHECK(a.out.find("streams.jsonl") != std::string::npos);
  CHECK(slurp(ws.root / "a" / "streams.jsonl") == slurp(ws.root / "b" / "streams.jsonl"));
  CHECK(slurp(ws.root / "a" / "catalog.json") == slurp(ws.root / "b" / "catalog.json"));
  // Same digest column, different paths.
  CHECK(a.out.substr(0, 16) == b.out.substr(0, 16));
  const Result c = sh("gen --config " + cfg + " --seed-override 4 --out " + ws.dir("c"));
  REQUIRE(c.code == 0);
  CHECK(slurp(ws.root / "c" / "streams.jsonl") != slurp(ws.root / "a" / "streams.jsonl"));
}

TEST_CASE("config and output errors") {
  Workspace ws;
  const std::string cfg = ws.config("a.cfg");
  CHECK(sh("gen --config " + cfg + " --out " + ws.dir("missing/child")).code == 2);
  const std::string bad = ws.config("bad.cfg", "curate.k = two\n");
  CHECK(sh("gen --config " + bad + " --out " + ws.dir("x")).code == 2);
  const std::string cmd = std::string(TRAJREC_CLI) + " gen --config " + bad + " --out " + ws.dir("x") + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  char buf[512] = {};
  const std::size_t n = std::fread(buf, 1, sizeof buf - 1, pipe);
  pclose(pipe);
  CHECK(std::string(buf, n).find("bad.cfg:") != std::string::npos);
  CHECK(sh("gen --config " + ws.dir("nope.cfg") + " --out " + ws.dir("x")).code == 2);
  // Too few users to curate anything is a data error.
  const std::string tiny = ws.config("tiny.cfg", "users.num_users = 1\n");
  CHECK(sh("run --config " + tiny + " --out " + ws.dir("t")).code == 3);
}

TEST_CASE("staged pipeline") {
  Workspace ws;
  const std::string cfg = ws.config("a.cfg", "model.kind = mlp\n");
  const std::string out = " --config " + cfg + " --out " + ws.dir("s");
  REQUIRE(sh("gen" + out).code == 0);
  const Result cur = sh("curate" + out);
  REQUIRE(cur.code == 0);
  CHECK(cur.out.find("candidates=") != std::string::npos);
  CHECK(fs::exists(ws.root / "s" / "train_sequences.jsonl"));
  CHECK(fs::exists(ws.root / "s" / "candidates.json"));
  const Result emb = sh("embed" + out);
  REQUIRE(emb.code == 0);
  CHECK(emb.out.find("kind=kg dim=8") != std::string::npos);
  REQUIRE(sh("train" + out).code == 0);
  CHECK(fs::exists(ws.root / "s" / "model.params"));

  const std::string cf = ws.config("cf.cfg", "model.kind = cf\n");
  const std::string cf_out = " --config " + cf + " --out " + ws.dir("cf");
  REQUIRE(sh("gen" + cf_out).code == 0);
  REQUIRE(sh("curate" + cf_out).code == 0);
  REQUIRE(sh("train" + cf_out).code == 0);
  CHECK(fs::exists(ws.root / "cf" / "nmf_W.tsv"));
  CHECK(fs::exists(ws.root / "cf" / "nmf_H.tsv"));
}

TEST_CASE("run, rerun and verify") {
  Workspace ws;
  const std::string cfg = ws.config("cf.cfg", "model.kind = cf\n");
  const Result a = sh("run --config " + cfg + " --out " + ws.dir("a"));
  REQUIRE(a.code == 0);
  CHECK(a.out.rfind("mrr=", 0) == 0);
  const Result b = sh("run --config " + cfg + " --out " + ws.dir("b"));
  REQUIRE(b.code == 0);
  CHECK(a.out == b.out);
  const std::string ra = slurp(ws.root / "a" / "report.json");
  CHECK(stable_part(ra) == stable_part(slurp(ws.root / "b" / "report.json")));
  CHECK(ra.find("\"model\": \"cf\"") != std::string::npos);
  CHECK(fs::exists(ws.root / "a" / "rank_histogram.csv"));

  const std::string report = (ws.root / "a" / "report.json").string();
  const Result v = sh("verify " + report + " --config " + cfg);
  CHECK(v.code == 0);
  CHECK(v.out.find(": ok") != std::string::npos);
  const std::string other = ws.config("other.cfg", "model.kind = cf\nseed = 99\n");
  CHECK(sh("verify " + report + " --config " + other).code == 3);

  // A tampered metric fails verification.
  std::ifstream in(report);
  EvalReport r = read_report(in);
  r.mrr += 0.01;
  const fs::path tampered = ws.root / "tampered.json";
  {
    std::ofstream out(tampered);
    write_report(out, r);
  }
  const Result t = sh("verify " + tampered.string());
  CHECK(t.code == 3);
  CHECK(t.out.find("MISMATCH") != std::string::npos);
  CHECK(sh("verify " + ws.dir("absent.json")).code == 3);
}

TEST_CASE("sweep writes one row per value and marks failed cells") {
  Workspace ws;
  const std::string cfg =
      ws.config("sweep.cfg", "model.kind = cf\nsweep.axis = weeks\nsweep.values = 1,2,0,all\n");
  const Result r = sh("sweep --parallel 2 --config " + cfg + " --out " + ws.dir("sw"));
  CHECK(r.code == 2);
  const std::string csv = slurp(ws.root / "sw" / "sweep.csv");
  CHECK(csv == r.out);
  std::istringstream lines(csv);
  std::string line;
  std::vector<std::string> rows;
  while (std::getline(lines, line)) rows.push_back(line);
  REQUIRE(rows.size() == 5);
  CHECK(rows[0] == "axis_value,n,mrr,success_at_20,evaluable_fraction,status");
  CHECK(rows[3] == "0,,,,,failed");
  CHECK(rows[1].rfind("1,", 0) == 0);
  CHECK(rows[4].rfind("all,", 0) == 0);
  CHECK_FALSE(fs::exists(ws.root / "sw" / "cell_2.json"));
  // Each successful row agrees with its stored report.
  for (int i : {0, 1, 3}) {
    std::ifstream in(ws.root / "sw" / ("cell_" + std::to_string(i) + ".json"));
    const EvalReport cell = read_report(in);
    CHECK(rows[i + 1].find("," + std::to_string(cell.n) + "," + format_double(cell.mrr) + ",") !=
          std::string::npos);
  }

  const std::string ok = ws.config("ok.cfg", "model.kind = cf\nsweep.axis = input_length\nsweep.values = 1,2\n");
  const Result good = sh("sweep --config " + ok + " --out " + ws.dir("ok"));
  CHECK(good.code == 0);
  const std::string unknown = ws.config("unknown.cfg", "sweep.axis = colour\nsweep.values = 1\n");
  CHECK(sh("sweep --config " + unknown + " --out " + ws.dir("u")).code == 2);
}

TEST_CASE("ablate-shuffle reports both runs") {
  Workspace ws;
  const std::string cfg = ws.config("a.cfg", "model.kind = mlp\n");
  const Result r = sh("ablate-shuffle --config " + cfg + " --out " + ws.dir("ab"));
  REQUIRE(r.code == 0);
  CHECK(r.out.find("delta_sa20_relative") != std::string::npos);
  CHECK(r.out.find("ordered: mrr=") != std::string::npos);
  CHECK(r.out.find("shuffled: mrr=") != std::string::npos);
  CHECK(fs::exists(ws.root / "ab" / "report_ordered.json"));
  CHECK(fs::exists(ws.root / "ab" / "report_shuffled.json"));
}
