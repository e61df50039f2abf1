#pragma once

#include "trajrec/common.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace trajrec {

struct Show {
  ShowId id = 0;
  std::string title;
  std::vector<TopicId> topics;  // non-empty, ascending
  std::vector<EntityId> entities;  // ascending
  double popularity = 1.0;

  bool has_topic(TopicId t) const;
};

struct Topic {
  TopicId id = 0;
  std::string name;
  // Members in trajectory order: listeners tend to move forward along it.
  std::vector<ShowId> shows;
};

struct Entity {
  EntityId id = 0;
  std::string name;
  TopicId topic = 0;
};

enum Relation : RelationId { kMentions = 0, kRelated = 1, kNumRelations = 2 };

// Knowledge-graph node ids: shows occupy [0, num_shows), entities follow.
struct KGTriple {
  NodeId head = 0;
  RelationId relation = 0;
  NodeId tail = 0;

  friend bool operator==(const KGTriple&, const KGTriple&) = default;
};

struct Catalog {
  std::vector<Show> shows;
  std::vector<Topic> topics;
  std::vector<Entity> entities;
  std::vector<KGTriple> triples;

  int num_shows() const { return static_cast<int>(shows.size()); }
  int num_topics() const { return static_cast<int>(topics.size()); }
  int num_entities() const { return static_cast<int>(entities.size()); }
  int num_nodes() const { return num_shows() + num_entities(); }
  NodeId entity_node(EntityId e) const { return num_shows() + e; }
  bool shares_topic(ShowId a, ShowId b) const;
};

struct CatalogConfig {
  int num_shows = 500;
  int num_topics = 20;
  int num_entities = 300;
  int entities_per_show = 4;
  int related_per_entity = 2;
  double multi_topic_prob = 0.6;
  double in_topic_entity_prob = 0.85;
  // Ring distance scale (in member positions) for show-entity affinity.
  double entity_spread = 2.0;
  double zipf_exponent = 1.0;
};

struct UserProfile {
  UserId id = 0;
  int age = 0;
  std::vector<double> topic_affinity;  // sums to 1

  TopicId dominant_topic() const;
};

struct UserConfig {
  int num_users = 5000;
  double age_center = 40.0;
  double age_half_width = 15.0;
  double primary_weight = 0.55;
  int secondary_topics = 2;
  double secondary_weight = 0.15;
  // Topic -> age offset (years) applied to users whose dominant topic it is.
  std::map<TopicId, int> age_skew{{0, -12}, {1, 15}};
};

struct StreamEvent {
  UserId user = 0;
  ShowId show = 0;
  Timestamp timestamp = 0;
  std::int64_t seconds_played = 0;

  friend bool operator==(const StreamEvent&, const StreamEvent&) = default;
};

struct StreamConfig {
  int horizon_weeks = 6;
  Timestamp horizon_end = 1591574400;  // 2020-06-08T00:00:00Z
  double locality = 0.9;
  double noise = 0.1;
  int min_listens = 4;
  int max_listens = 14;
  // Successor weight decays as exp(-(d - 1) / step_scale) in forward ring distance d.
  double step_scale = 1.0;
  double popularity_exponent = 0.5;
};

Catalog generate_catalog(const CatalogConfig& config, std::uint64_t seed);

std::vector<UserProfile> generate_users(const UserConfig& config, int num_topics,
                                        std::uint64_t seed);

// Events are grouped by user (ascending id), each user's in time order.
std::vector<StreamEvent> generate_streams(const Catalog& catalog,
                                          const std::vector<UserProfile>& users,
                                          const StreamConfig& config, std::uint64_t seed);

// JSON document / JSON Lines serialization.
// A non-empty fingerprint is embedded in the file (a header line for JSONL).
void write_catalog(std::ostream& out, const Catalog& catalog, const std::string& fingerprint = {});
Catalog read_catalog(std::istream& in);
void write_streams(std::ostream& out, const std::vector<StreamEvent>& events,
                   const std::string& fingerprint = {});
std::vector<StreamEvent> read_streams(std::istream& in);

}  // namespace trajrec
