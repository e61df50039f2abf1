#pragma once

#include "trajrec/cfbase.hpp"
#include "trajrec/embed.hpp"
#include "trajrec/seqmodel.hpp"
#include "trajrec/synthcat.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>

namespace trajrec {

// Every parameter of one experiment. Serialized as flat `section.key = value`
// text; the key list is documented in README.md.
struct ExperimentConfig {
  std::uint64_t seed = 1;

  CatalogConfig catalog;
  UserConfig users;
  StreamConfig streams;

  std::int64_t threshold_seconds = 30;
  double coverage = 0.90;
  std::optional<int> weeks;          // nullopt: whole log
  std::string age_bracket = "all";   // or one of age_brackets()
  std::string constraint = "none";   // none | topic
  int k = 2;
  bool shuffle = false;

  std::string embedding_kind = "kg";  // kg | cbow
  DistMultConfig kg;
  CbowConfig cbow;

  std::string model_kind = "rnn";   // rnn | mlp | cf
  std::string preset = "desk";      // desk | paper-scale
  std::string precision = "float32";  // float32 | float64
  bool per_topic = false;             // one model per topic (needs constraint = topic)
  SeqTrainConfig train;
  NmfConfig nmf;

  int train_users = 4000;
  int test_users = 500;

  std::string output_dir = "out";

  // Canonical key -> value map of every field.
  std::map<std::string, std::string> to_map() const;
  // Hex digest of to_map() without output.dir.
  std::string fingerprint() const;

  // Sets one key; throws ConfigError on an unknown key or malformed value.
  void set(const std::string& key, const std::string& value);
  void validate() const;
};

// Parses `key = value` lines ('#' starts a comment). Keys not recognized by
// ExperimentConfig are returned in `extra` when it is non-null, otherwise
// they are errors. Diagnostics carry the line number.
ExperimentConfig parse_config(std::istream& in, const std::string& source = "<config>",
                              std::map<std::string, std::string>* extra = nullptr);
ExperimentConfig load_config(const std::string& path,
                             std::map<std::string, std::string>* extra = nullptr);
void write_config(std::ostream& out, const ExperimentConfig& config);

}  // namespace trajrec
