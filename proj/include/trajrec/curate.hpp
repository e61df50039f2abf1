#pragma once

#include "trajrec/synthcat.hpp"

#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace trajrec {

struct ListeningSequence {
  UserId user = 0;
  std::vector<ShowId> shows;  // unique, consumption order
  std::optional<TopicId> topic;
  std::optional<std::string> bracket;

  friend bool operator==(const ListeningSequence&, const ListeningSequence&) = default;
};

struct WindowProvenance {
  UserId user = 0;
  std::optional<TopicId> topic;
  std::optional<std::string> bracket;

  friend bool operator==(const WindowProvenance&, const WindowProvenance&) = default;
};

struct TrainingWindow {
  std::vector<ShowId> inputs;  // exactly k shows
  ShowId target = 0;
  WindowProvenance provenance;

  friend bool operator==(const TrainingWindow&, const TrainingWindow&) = default;
};

enum class WindowMode { kTraining, kEvaluation };

std::vector<StreamEvent> filter_min_listen(const std::vector<StreamEvent>& events,
                                           std::int64_t threshold_seconds = 30);

// Smallest set of most-streamed shows whose share of all streams reaches `coverage`.
std::set<ShowId> top_show_cut(const std::vector<StreamEvent>& events, double coverage = 0.90);

std::vector<StreamEvent> restrict_to_shows(const std::vector<StreamEvent>& events,
                                           const std::set<ShowId>& shows);

std::vector<StreamEvent> restrict_to_users(const std::vector<StreamEvent>& events,
                                           const std::set<UserId>& users);

// One sequence per user (ascending user id), shows in order of first stream.
std::vector<ListeningSequence> first_listen_sequence(const std::vector<StreamEvent>& events);

// Keeps events with timestamp in [horizon_end - weeks * 1 week, horizon_end].
std::vector<StreamEvent> window_by_time(const std::vector<StreamEvent>& events, int weeks,
                                        Timestamp horizon_end);

// "under 20", "20-29", ..., "50-59", "60+".
std::string bin_by_age(int age);
const std::vector<std::string>& age_brackets();

std::vector<ListeningSequence> topic_split(const ListeningSequence& sequence,
                                           const Catalog& catalog);
std::vector<ListeningSequence> topic_split(const std::vector<ListeningSequence>& sequences,
                                           const Catalog& catalog);

std::vector<TrainingWindow> make_training_windows(const std::vector<ListeningSequence>& sequences,
                                                  int k, WindowMode mode);

void write_sequences(std::ostream& out, const std::vector<ListeningSequence>& sequences,
                     const std::string& fingerprint = {});
std::vector<ListeningSequence> read_sequences(std::istream& in);

}  // namespace trajrec
