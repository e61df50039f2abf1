#include "trajrec/config.hpp"

#include "trajrec/curate.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <sstream>

namespace trajrec {

namespace {

struct Field {
  std::function<std::string()> get;
  std::function<void(const std::string&)> set;
};

template <typename Int>
Int parse_int(const std::string& text) {
  Int value{};
  auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size())
    throw ConfigError("expected an integer, got '" + text + "'");
  return value;
}

double parse_real(const std::string& text) {
  try {
    return parse_double(text);
  } catch (const DataError&) {
    throw ConfigError("expected a number, got '" + text + "'");
  }
}

template <typename Int>
Field int_field(Int& ref) {
  return {[&ref] { return std::to_string(ref); }, [&ref](const std::string& v) { ref = parse_int<Int>(v); }};
}

Field real_field(double& ref) {
  return {[&ref] { return format_double(ref); }, [&ref](const std::string& v) { ref = parse_real(v); }};
}

Field bool_field(bool& ref) {
  return {[&ref] { return std::string(ref ? "true" : "false"); },
          [&ref](const std::string& v) {
            if (v == "true" || v == "1") ref = true;
            else if (v == "false" || v == "0") ref = false;
            else throw ConfigError("expected true or false, got '" + v + "'");
          }};
}

Field choice_field(std::string& ref, std::vector<std::string> choices) {
  return {[&ref] { return ref; },
          [&ref, choices](const std::string& v) {
            if (std::find(choices.begin(), choices.end(), v) == choices.end()) {
              std::string list;
              for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
              throw ConfigError("expected one of {" + list + "}, got '" + v + "'");
            }
            ref = v;
          }};
}

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::map<std::string, Field> fields_of(ExperimentConfig& c) {
  std::map<std::string, Field> f;
  f["seed"] = int_field(c.seed);

  f["catalog.num_shows"] = int_field(c.catalog.num_shows);
  f["catalog.num_topics"] = int_field(c.catalog.num_topics);
  f["catalog.num_entities"] = int_field(c.catalog.num_entities);
  f["catalog.entities_per_show"] = int_field(c.catalog.entities_per_show);
  f["catalog.related_per_entity"] = int_field(c.catalog.related_per_entity);
  f["catalog.multi_topic_prob"] = real_field(c.catalog.multi_topic_prob);
  f["catalog.in_topic_entity_prob"] = real_field(c.catalog.in_topic_entity_prob);
  f["catalog.entity_spread"] = real_field(c.catalog.entity_spread);
  f["catalog.zipf_exponent"] = real_field(c.catalog.zipf_exponent);

  f["users.num_users"] = int_field(c.users.num_users);
  f["users.age_center"] = real_field(c.users.age_center);
  f["users.age_half_width"] = real_field(c.users.age_half_width);
  f["users.primary_weight"] = real_field(c.users.primary_weight);
  f["users.secondary_topics"] = int_field(c.users.secondary_topics);
  f["users.secondary_weight"] = real_field(c.users.secondary_weight);
  f["users.age_skew"] = {[&c] {
                           std::string s;
                           for (auto [t, off] : c.users.age_skew)
                             s += (s.empty() ? "" : ",") + std::to_string(t) + ":" + std::to_string(off);
                           return s;
                         },
                         [&c](const std::string& v) {
                           std::map<TopicId, int> skew;
                           std::stringstream ss(v);
                           std::string item;
                           while (std::getline(ss, item, ',')) {
                             item = trim(item);
                             if (item.empty()) continue;
                             auto colon = item.find(':');
                             if (colon == std::string::npos)
                               throw ConfigError("expected topic:offset pairs, got '" + item + "'");
                             skew[parse_int<int>(trim(item.substr(0, colon)))] =
                                 parse_int<int>(trim(item.substr(colon + 1)));
                           }
                           c.users.age_skew = std::move(skew);
                         }};

  f["streams.horizon_weeks"] = int_field(c.streams.horizon_weeks);
  f["streams.horizon_end"] = int_field(c.streams.horizon_end);
  f["streams.locality"] = real_field(c.streams.locality);
  f["streams.noise"] = real_field(c.streams.noise);
  f["streams.min_listens"] = int_field(c.streams.min_listens);
  f["streams.max_listens"] = int_field(c.streams.max_listens);
  f["streams.step_scale"] = real_field(c.streams.step_scale);
  f["streams.popularity_exponent"] = real_field(c.streams.popularity_exponent);

  f["curate.threshold_seconds"] = int_field(c.threshold_seconds);
  f["curate.coverage"] = real_field(c.coverage);
  f["curate.weeks"] = {[&c] { return c.weeks ? std::to_string(*c.weeks) : std::string("all"); },
                       [&c](const std::string& v) {
                         if (v == "all") c.weeks.reset();
                         else c.weeks = parse_int<int>(v);
                       }};
  std::vector<std::string> brackets{"all"};
  for (const auto& b : age_brackets()) brackets.push_back(b);
  f["curate.age_bracket"] = choice_field(c.age_bracket, brackets);
  f["curate.constraint"] = choice_field(c.constraint, {"none", "topic"});
  f["curate.k"] = int_field(c.k);
  f["curate.shuffle"] = bool_field(c.shuffle);

  f["embed.kind"] = choice_field(c.embedding_kind, {"kg", "cbow"});
  f["kg.dim"] = int_field(c.kg.dim);
  f["kg.epochs"] = int_field(c.kg.epochs);
  f["kg.lr"] = real_field(c.kg.lr);
  f["kg.negatives"] = int_field(c.kg.negatives_per_positive);
  f["cbow.dim"] = int_field(c.cbow.dim);
  f["cbow.window"] = int_field(c.cbow.window);
  f["cbow.negatives"] = int_field(c.cbow.negatives);
  f["cbow.epochs"] = int_field(c.cbow.epochs);
  f["cbow.lr"] = real_field(c.cbow.lr);

  f["model.kind"] = choice_field(c.model_kind, {"rnn", "mlp", "cf"});
  f["model.preset"] = choice_field(c.preset, {"desk", "paper-scale"});
  f["model.precision"] = choice_field(c.precision, {"float32", "float64"});
  f["model.per_topic"] = bool_field(c.per_topic);
  f["model.epochs"] = int_field(c.train.epochs);
  f["model.batch_size"] = int_field(c.train.batch_size);
  f["model.lr"] = real_field(c.train.adam.lr);
  f["model.beta1"] = real_field(c.train.adam.beta1);
  f["model.beta2"] = real_field(c.train.adam.beta2);
  f["model.epsilon"] = real_field(c.train.adam.epsilon);

  f["cf.rank"] = int_field(c.nmf.rank);
  f["cf.max_iters"] = int_field(c.nmf.max_iters);
  f["cf.tol"] = real_field(c.nmf.tol);

  f["split.train_users"] = int_field(c.train_users);
  f["split.test_users"] = int_field(c.test_users);

  f["output.dir"] = {[&c] { return c.output_dir; }, [&c](const std::string& v) { c.output_dir = v; }};
  return f;
}

}  // namespace

std::map<std::string, std::string> ExperimentConfig::to_map() const {
  auto& self = const_cast<ExperimentConfig&>(*this);
  std::map<std::string, std::string> out;
  for (const auto& [key, field] : fields_of(self)) out[key] = field.get();
  return out;
}

std::string ExperimentConfig::fingerprint() const {
  std::string canonical;
  for (const auto& [key, value] : to_map())
    if (key != "output.dir") canonical += key + "=" + value + "\n";
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(canonical)));
  return buf;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  auto fields = fields_of(*this);
  auto it = fields.find(key);
  if (it == fields.end()) throw ConfigError("unknown key '" + key + "'");
  try {
    it->second.set(value);
  } catch (const ConfigError& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

void ExperimentConfig::validate() const {
  if (k < 1) throw ConfigError("curate.k must be >= 1");
  if (!(coverage > 0.0) || coverage > 1.0) throw ConfigError("curate.coverage must lie in (0, 1]");
  if (weeks && *weeks < 1) throw ConfigError("curate.weeks must be >= 1 or 'all'");
  if (threshold_seconds < 0) throw ConfigError("curate.threshold_seconds must be >= 0");
  if (train_users < 1 || test_users < 1) throw ConfigError("split sizes must be positive");
  if (train.epochs < 0 || train.batch_size < 1) throw ConfigError("model.epochs/batch_size invalid");
  if (kg.dim < 2 || cbow.dim < 1) throw ConfigError("embedding dims must be positive (kg.dim >= 2)");
  if (nmf.rank < 1) throw ConfigError("cf.rank must be >= 1");
  if (per_topic && (constraint != "topic" || model_kind == "cf"))
    throw ConfigError("model.per_topic needs curate.constraint = topic and a neural model");
}

ExperimentConfig parse_config(std::istream& in, const std::string& source,
                              std::map<std::string, std::string>* extra) {
  ExperimentConfig config;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    try {
      config.set(key, value);
    } catch (const ConfigError& e) {
      const bool unknown = std::string(e.what()).rfind("unknown key", 0) == 0;
      if (unknown && extra) (*extra)[key] = value;
      else throw ConfigError(where + e.what());
    }
  }
  try {
    config.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
  return config;
}

ExperimentConfig load_config(const std::string& path, std::map<std::string, std::string>* extra) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_config(in, path, extra);
}

void write_config(std::ostream& out, const ExperimentConfig& config) {
  for (const auto& [key, value] : config.to_map()) out << key << " = " << value << '\n';
}

}  // namespace trajrec
