#include "trajrec/curate.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <istream>
#include <iterator>
#include <map>
#include <ostream>
#include <unordered_set>

namespace trajrec {

std::vector<StreamEvent> filter_min_listen(const std::vector<StreamEvent>& events,
                                           std::int64_t threshold_seconds) {
  std::vector<StreamEvent> kept;
  kept.reserve(events.size());
  for (const StreamEvent& e : events)
    if (e.seconds_played >= threshold_seconds) kept.push_back(e);
  return kept;
}

std::set<ShowId> top_show_cut(const std::vector<StreamEvent>& events, double coverage) {
  if (events.empty()) throw DataError("top_show_cut: empty stream log");
  if (!(coverage > 0.0) || coverage > 1.0)
    throw ConfigError("top_show_cut: coverage must lie in (0, 1]");

  std::map<ShowId, std::int64_t> counts;
  for (const StreamEvent& e : events) ++counts[e.show];
  std::vector<std::pair<ShowId, std::int64_t>> ordered(counts.begin(), counts.end());
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });

  const auto total = static_cast<std::int64_t>(events.size());
  std::set<ShowId> kept;
  std::int64_t cumulative = 0;
  for (const auto& [show, count] : ordered) {
    kept.insert(show);
    cumulative += count;
    if (static_cast<double>(cumulative) / static_cast<double>(total) >= coverage) break;
  }
  return kept;
}

std::vector<StreamEvent> restrict_to_shows(const std::vector<StreamEvent>& events,
                                           const std::set<ShowId>& shows) {
  std::vector<StreamEvent> kept;
  for (const StreamEvent& e : events)
    if (shows.count(e.show)) kept.push_back(e);
  return kept;
}

std::vector<StreamEvent> restrict_to_users(const std::vector<StreamEvent>& events,
                                           const std::set<UserId>& users) {
  std::vector<StreamEvent> kept;
  for (const StreamEvent& e : events)
    if (users.count(e.user)) kept.push_back(e);
  return kept;
}

std::vector<ListeningSequence> first_listen_sequence(const std::vector<StreamEvent>& events) {
  std::map<UserId, std::vector<const StreamEvent*>> by_user;
  for (const StreamEvent& e : events) by_user[e.user].push_back(&e);

  std::vector<ListeningSequence> sequences;
  sequences.reserve(by_user.size());
  for (auto& [user, list] : by_user) {
    std::stable_sort(list.begin(), list.end(), [](const StreamEvent* a, const StreamEvent* b) {
      return a->timestamp < b->timestamp;
    });
    ListeningSequence seq;
    seq.user = user;
    std::unordered_set<ShowId> seen;
    for (const StreamEvent* e : list)
      if (seen.insert(e->show).second) seq.shows.push_back(e->show);
    sequences.push_back(std::move(seq));
  }
  return sequences;
}

std::vector<StreamEvent> window_by_time(const std::vector<StreamEvent>& events, int weeks,
                                        Timestamp horizon_end) {
  if (weeks < 1) throw ConfigError("window_by_time: weeks must be >= 1");
  const Timestamp lower = horizon_end - static_cast<Timestamp>(weeks) * kSecondsPerWeek;
  std::vector<StreamEvent> kept;
  for (const StreamEvent& e : events)
    if (e.timestamp >= lower && e.timestamp <= horizon_end) kept.push_back(e);
  return kept;
}

const std::vector<std::string>& age_brackets() {
  static const std::vector<std::string> brackets{"under 20", "20-29", "30-39",
                                                 "40-49",    "50-59", "60+"};
  return brackets;
}

std::string bin_by_age(int age) {
  if (age < 0) throw DataError("bin_by_age: negative age");
  if (age < 20) return "under 20";
  if (age >= 60) return "60+";
  return age_brackets()[static_cast<std::size_t>(age / 10 - 1)];
}

std::vector<ListeningSequence> topic_split(const ListeningSequence& sequence,
                                           const Catalog& catalog) {
  std::map<TopicId, ListeningSequence> parts;
  for (ShowId s : sequence.shows) {
    if (s < 0 || s >= catalog.num_shows())
      throw DataError("topic_split: unknown show " + std::to_string(s));
    for (TopicId t : catalog.shows[s].topics) {
      auto [it, inserted] = parts.try_emplace(t);
      if (inserted) {
        it->second.user = sequence.user;
        it->second.topic = t;
        it->second.bracket = sequence.bracket;
      }
      it->second.shows.push_back(s);
    }
  }
  std::vector<ListeningSequence> out;
  for (auto& [topic, seq] : parts)
    if (seq.shows.size() >= 2) out.push_back(std::move(seq));
  return out;
}

std::vector<ListeningSequence> topic_split(const std::vector<ListeningSequence>& sequences,
                                           const Catalog& catalog) {
  std::vector<ListeningSequence> out;
  for (const ListeningSequence& seq : sequences) {
    auto parts = topic_split(seq, catalog);
    std::move(parts.begin(), parts.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<TrainingWindow> make_training_windows(const std::vector<ListeningSequence>& sequences,
                                                  int k, WindowMode mode) {
  if (k < 1) throw ConfigError("make_training_windows: k must be >= 1");
  std::vector<TrainingWindow> windows;
  for (const ListeningSequence& seq : sequences) {
    const auto length = static_cast<int>(seq.shows.size());
    if (length < k + 1) continue;
    const int first_target = mode == WindowMode::kEvaluation ? length - 1 : k;
    for (int target = first_target; target < length; ++target) {
      TrainingWindow w;
      w.inputs.assign(seq.shows.begin() + (target - k), seq.shows.begin() + target);
      w.target = seq.shows[target];
      w.provenance = {seq.user, seq.topic, seq.bracket};
      windows.push_back(std::move(w));
    }
  }
  return windows;
}

void write_sequences(std::ostream& out, const std::vector<ListeningSequence>& sequences,
                     const std::string& fingerprint) {
  if (!fingerprint.empty()) out << nlohmann::json{{"fingerprint", fingerprint}}.dump() << '\n';
  for (const ListeningSequence& seq : sequences) {
    nlohmann::ordered_json line;
    line["user"] = seq.user;
    line["topic"] = seq.topic ? nlohmann::ordered_json(*seq.topic) : nlohmann::ordered_json(nullptr);
    line["bracket"] = seq.bracket ? nlohmann::ordered_json(*seq.bracket) : nlohmann::ordered_json(nullptr);
    line["shows"] = seq.shows;
    out << line.dump() << '\n';
  }
}

std::vector<ListeningSequence> read_sequences(std::istream& in) {
  std::vector<ListeningSequence> sequences;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      if (j.contains("fingerprint") && !j.contains("user")) continue;
      ListeningSequence seq;
      seq.user = j.at("user").get<UserId>();
      if (!j.at("topic").is_null()) seq.topic = j.at("topic").get<TopicId>();
      if (!j.at("bracket").is_null()) seq.bracket = j.at("bracket").get<std::string>();
      seq.shows = j.at("shows").get<std::vector<ShowId>>();
      sequences.push_back(std::move(seq));
    } catch (const nlohmann::json::exception& e) {
      throw DataError("sequences: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return sequences;
}

}  // namespace trajrec
