#include "trajrec/synthcat.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <set>
#include <tuple>

namespace trajrec {

using nlohmann::json;

bool Show::has_topic(TopicId t) const {
  return std::find(topics.begin(), topics.end(), t) != topics.end();
}

bool Catalog::shares_topic(ShowId a, ShowId b) const {
  for (TopicId t : shows[a].topics)
    if (shows[b].has_topic(t)) return true;
  return false;
}

TopicId UserProfile::dominant_topic() const {
  return static_cast<TopicId>(std::max_element(topic_affinity.begin(), topic_affinity.end()) -
                              topic_affinity.begin());
}

namespace {

double ring_distance(double a, double b, double ring) {
  double d = std::fabs(a - b);
  return std::min(d, ring - d);
}

}  // namespace

Catalog generate_catalog(const CatalogConfig& config, std::uint64_t seed) {
  if (config.num_shows < 1 || config.num_topics < 1)
    throw ConfigError("catalog: num_shows and num_topics must be positive");
  if (config.num_shows < config.num_topics)
    throw ConfigError("catalog: num_shows must be at least num_topics");
  if (config.num_entities < 1) throw ConfigError("catalog: num_entities must be positive");
  if (config.entities_per_show < 0 || config.related_per_entity < 0)
    throw ConfigError("catalog: link counts must be non-negative");
  if (!(config.entity_spread > 0.0)) throw ConfigError("catalog: entity_spread must be positive");

  Rng rng(derive_seed(seed, "catalog"));
  const int num_shows = config.num_shows;
  const int num_topics = config.num_topics;
  const int num_entities = config.num_entities;

  Catalog catalog;
  catalog.shows.resize(num_shows);
  catalog.topics.resize(num_topics);
  catalog.entities.resize(num_entities);

  // Every topic gets at least one show; the rest are assigned uniformly.
  std::vector<TopicId> primary(num_shows);
  for (int s = 0; s < num_shows; ++s)
    primary[s] = s < num_topics ? s : static_cast<TopicId>(rng.index(num_topics));
  rng.shuffle(primary);

  for (int s = 0; s < num_shows; ++s) {
    Show& show = catalog.shows[s];
    show.id = s;
    char title[32];
    std::snprintf(title, sizeof title, "show-%04d", s);
    show.title = title;
    show.topics.push_back(primary[s]);
    if (num_topics > 1 && rng.bernoulli(config.multi_topic_prob)) {
      auto other = static_cast<TopicId>(rng.index(num_topics - 1));
      if (other >= primary[s]) ++other;
      show.topics.push_back(other);
    }
    std::sort(show.topics.begin(), show.topics.end());
  }

  // Zipf popularity over a random rank order.
  std::vector<int> rank(num_shows);
  for (int s = 0; s < num_shows; ++s) rank[s] = s;
  rng.shuffle(rank);
  for (int s = 0; s < num_shows; ++s)
    catalog.shows[s].popularity = 1.0 / std::pow(rank[s] + 1.0, config.zipf_exponent);

  for (int t = 0; t < num_topics; ++t) {
    Topic& topic = catalog.topics[t];
    topic.id = t;
    char name[32];
    std::snprintf(name, sizeof name, "topic-%02d", t);
    topic.name = name;
    for (int s = 0; s < num_shows; ++s)
      if (catalog.shows[s].has_topic(t)) topic.shows.push_back(s);
    rng.shuffle(topic.shows);
  }

  // Position of each show along each of its topic rings, aligned with Show::topics.
  std::vector<std::vector<double>> show_pos(num_shows);
  for (int s = 0; s < num_shows; ++s) show_pos[s].assign(catalog.shows[s].topics.size(), 0.0);
  for (const Topic& topic : catalog.topics) {
    for (std::size_t i = 0; i < topic.shows.size(); ++i) {
      const Show& show = catalog.shows[topic.shows[i]];
      auto slot = std::find(show.topics.begin(), show.topics.end(), topic.id) - show.topics.begin();
      show_pos[show.id][slot] = static_cast<double>(i);
    }
  }

  std::vector<std::vector<EntityId>> topic_entities(num_topics);
  std::vector<double> entity_pos(num_entities);
  for (int e = 0; e < num_entities; ++e) {
    Entity& entity = catalog.entities[e];
    entity.id = e;
    char name[32];
    std::snprintf(name, sizeof name, "entity-%04d", e);
    entity.name = name;
    entity.topic = static_cast<TopicId>(rng.index(num_topics));
    entity_pos[e] = rng.uniform() * static_cast<double>(catalog.topics[entity.topic].shows.size());
    topic_entities[entity.topic].push_back(e);
  }

  // Picks an entity of `topic` near ring position `pos`, or a uniform one.
  auto pick_entity = [&](TopicId topic, double pos, EntityId exclude) -> EntityId {
    const auto& pool = topic_entities[topic];
    if (rng.bernoulli(config.in_topic_entity_prob) && !pool.empty()) {
      const double ring = static_cast<double>(catalog.topics[topic].shows.size());
      std::vector<double> weights(pool.size());
      for (std::size_t i = 0; i < pool.size(); ++i)
        weights[i] = pool[i] == exclude
                         ? 0.0
                         : std::exp(-ring_distance(pos, entity_pos[pool[i]], ring) /
                                    config.entity_spread);
      auto i = sample_weighted(rng, weights);
      if (i >= 0) return pool[i];
    }
    if (num_entities == 1) return exclude == 0 ? -1 : 0;
    auto e = static_cast<EntityId>(rng.index(num_entities - (exclude >= 0 ? 1 : 0)));
    if (exclude >= 0 && e >= exclude) ++e;
    return e;
  };

  std::set<std::tuple<NodeId, RelationId, NodeId>> seen;
  auto add_triple = [&](NodeId h, RelationId r, NodeId t) {
    if (h == t) return;
    if (seen.emplace(h, r, t).second) catalog.triples.push_back({h, r, t});
  };

  const int per_show = std::min(config.entities_per_show, num_entities);
  for (int s = 0; s < num_shows; ++s) {
    Show& show = catalog.shows[s];
    std::set<EntityId> linked;
    for (int attempt = 0; static_cast<int>(linked.size()) < per_show && attempt < 8 * per_show;
         ++attempt) {
      auto slot = rng.index(show.topics.size());
      EntityId e = pick_entity(show.topics[slot], show_pos[s][slot], -1);
      if (e >= 0) linked.insert(e);
    }
    show.entities.assign(linked.begin(), linked.end());
    for (EntityId e : show.entities) add_triple(s, kMentions, catalog.entity_node(e));
  }

  for (int e = 0; e < num_entities && num_entities > 1; ++e) {
    for (int j = 0; j < config.related_per_entity; ++j) {
      EntityId other = pick_entity(catalog.entities[e].topic, entity_pos[e], e);
      if (other >= 0) add_triple(catalog.entity_node(e), kRelated, catalog.entity_node(other));
    }
  }
  return catalog;
}

std::vector<UserProfile> generate_users(const UserConfig& config, int num_topics,
                                        std::uint64_t seed) {
  if (config.num_users < 1) throw ConfigError("users: num_users must be positive");
  if (num_topics < 1) throw ConfigError("users: catalog has no topics");

  std::vector<UserProfile> users(config.num_users);
  for (int u = 0; u < config.num_users; ++u) {
    Rng rng(derive_seed(seed, "users", static_cast<std::uint64_t>(u)));
    UserProfile& user = users[u];
    user.id = u;

    const double background =
        std::max(0.0, 1.0 - config.primary_weight -
                          config.secondary_weight * std::min(config.secondary_topics, num_topics - 1));
    user.topic_affinity.assign(num_topics, background / num_topics);
    auto primary = static_cast<TopicId>(rng.index(num_topics));
    user.topic_affinity[primary] += config.primary_weight;

    std::vector<TopicId> others;
    for (int t = 0; t < num_topics; ++t)
      if (t != primary) others.push_back(t);
    rng.shuffle(others);
    for (int j = 0; j < config.secondary_topics && j < static_cast<int>(others.size()); ++j)
      user.topic_affinity[others[j]] += config.secondary_weight;

    double total = 0.0;
    for (double a : user.topic_affinity) total += a;
    for (double& a : user.topic_affinity) a /= total;

    // Triangular age around the center; dominant-topic skew shifts the whole distribution.
    double age = config.age_center + config.age_half_width * (rng.uniform() + rng.uniform() - 1.0);
    if (auto it = config.age_skew.find(primary); it != config.age_skew.end()) age += it->second;
    user.age = std::max(13, static_cast<int>(std::lround(age)));
  }
  return users;
}

namespace {

class StreamWalker {
 public:
  StreamWalker(const Catalog& catalog, const StreamConfig& config)
      : catalog_(catalog), config_(config) {
    popularity_weight_.resize(catalog.shows.size());
    for (const Show& show : catalog.shows)
      popularity_weight_[show.id] = std::pow(show.popularity, config.popularity_exponent);
    position_.resize(catalog.shows.size());
    for (const Show& show : catalog.shows) position_[show.id].assign(show.topics.size(), 0);
    for (const Topic& topic : catalog.topics) {
      for (std::size_t i = 0; i < topic.shows.size(); ++i) {
        const Show& show = catalog.shows[topic.shows[i]];
        auto slot = std::find(show.topics.begin(), show.topics.end(), topic.id) - show.topics.begin();
        position_[show.id][slot] = static_cast<int>(i);
      }
    }
  }

  // Shows visited by the walk for one user, in order.
  std::vector<ShowId> walk(const UserProfile& user, Rng& rng) const {
    const int length = static_cast<int>(rng.integer(config_.min_listens, config_.max_listens));
    std::vector<char> visited(catalog_.shows.size(), 0);
    std::vector<ShowId> path;
    ShowId current = -1;
    for (int step = 0; step < length; ++step) {
      ShowId next = -1;
      if (current < 0) {
        next = start(user, visited, rng);
      } else if (rng.bernoulli(config_.locality)) {
        next = local_step(current, visited, rng);
        if (next < 0) next = jump(user, current, visited, rng);
      } else {
        next = jump(user, current, visited, rng);
        if (next < 0) next = local_step(current, visited, rng);
      }
      if (next < 0) next = any_unvisited(visited, rng);
      if (next < 0) break;
      visited[next] = 1;
      path.push_back(next);
      current = next;
    }
    return path;
  }

  ShowId popular_show(Rng& rng) const {
    return static_cast<ShowId>(sample_weighted(rng, popularity_weight_));
  }

 private:
  ShowId start(const UserProfile& user, const std::vector<char>& visited, Rng& rng) const {
    std::vector<double> topic_w(catalog_.topics.size(), 0.0);
    for (const Topic& topic : catalog_.topics)
      if (!topic.shows.empty()) topic_w[topic.id] = user.topic_affinity[topic.id];
    auto t = sample_weighted(rng, topic_w);
    if (t < 0) return -1;
    return pick_in_topic(static_cast<TopicId>(t), -1, visited, rng);
  }

  // Forward step along one of the current show's topic rings.
  ShowId local_step(ShowId current, const std::vector<char>& visited, Rng& rng) const {
    const Show& show = catalog_.shows[current];
    std::vector<std::size_t> slots(show.topics.size());
    for (std::size_t i = 0; i < slots.size(); ++i) slots[i] = i;
    rng.shuffle(slots);
    for (std::size_t slot : slots) {
      const Topic& topic = catalog_.topics[show.topics[slot]];
      const int ring = static_cast<int>(topic.shows.size());
      const int here = position_[current][slot];
      std::vector<double> w(ring, 0.0);
      for (int i = 0; i < ring; ++i) {
        ShowId s = topic.shows[i];
        if (s == current || visited[s]) continue;
        int d = ((i - here) % ring + ring) % ring;
        w[i] = std::exp(-(d - 1) / config_.step_scale) * popularity_weight_[s];
      }
      auto i = sample_weighted(rng, w);
      if (i >= 0) return topic.shows[i];
    }
    return -1;
  }

  // Move to a show sharing no topic with the current one.
  ShowId jump(const UserProfile& user, ShowId current, const std::vector<char>& visited,
              Rng& rng) const {
    std::vector<double> topic_w(catalog_.topics.size(), 0.0);
    for (const Topic& topic : catalog_.topics) {
      if (catalog_.shows[current].has_topic(topic.id)) continue;
      for (ShowId s : topic.shows) {
        if (!visited[s] && !catalog_.shares_topic(s, current)) {
          topic_w[topic.id] = user.topic_affinity[topic.id];
          break;
        }
      }
    }
    auto t = sample_weighted(rng, topic_w);
    if (t < 0) return -1;
    return pick_in_topic(static_cast<TopicId>(t), current, visited, rng);
  }

  ShowId pick_in_topic(TopicId t, ShowId avoid_topics_of, const std::vector<char>& visited,
                       Rng& rng) const {
    const Topic& topic = catalog_.topics[t];
    std::vector<double> w(topic.shows.size(), 0.0);
    for (std::size_t i = 0; i < topic.shows.size(); ++i) {
      ShowId s = topic.shows[i];
      if (visited[s]) continue;
      if (avoid_topics_of >= 0 && catalog_.shares_topic(s, avoid_topics_of)) continue;
      w[i] = popularity_weight_[s];
    }
    auto i = sample_weighted(rng, w);
    return i < 0 ? -1 : topic.shows[i];
  }

  ShowId any_unvisited(const std::vector<char>& visited, Rng& rng) const {
    std::vector<double> w(popularity_weight_);
    for (std::size_t s = 0; s < w.size(); ++s)
      if (visited[s]) w[s] = 0.0;
    return static_cast<ShowId>(sample_weighted(rng, w));
  }

  const Catalog& catalog_;
  const StreamConfig& config_;
  std::vector<double> popularity_weight_;
  std::vector<std::vector<int>> position_;
};

}  // namespace

std::vector<StreamEvent> generate_streams(const Catalog& catalog,
                                          const std::vector<UserProfile>& users,
                                          const StreamConfig& config, std::uint64_t seed) {
  if (catalog.shows.empty()) throw ConfigError("streams: empty catalog");
  if (users.empty()) throw ConfigError("streams: no users");
  if (config.horizon_weeks < 1) throw ConfigError("streams: horizon_weeks must be >= 1");
  if (config.locality < 0.0 || config.locality > 1.0)
    throw ConfigError("streams: locality must lie in [0, 1]");
  if (config.noise < 0.0 || config.noise >= 1.0)
    throw ConfigError("streams: noise must lie in [0, 1)");
  if (config.min_listens < 1 || config.max_listens < config.min_listens)
    throw ConfigError("streams: invalid listen count range");
  if (!(config.step_scale > 0.0)) throw ConfigError("streams: step_scale must be positive");

  StreamWalker walker(catalog, config);
  const Timestamp span = config.horizon_weeks * kSecondsPerWeek;
  const Timestamp begin = config.horizon_end - span;

  std::vector<StreamEvent> events;
  for (const UserProfile& user : users) {
    if (static_cast<int>(user.topic_affinity.size()) != catalog.num_topics())
      throw ConfigError("streams: user topic affinity does not match catalog topics");
    Rng rng(derive_seed(seed, "streams", static_cast<std::uint64_t>(user.id)));
    const std::vector<ShowId> path = walker.walk(user, rng);

    std::vector<std::pair<ShowId, std::int64_t>> plays;
    for (std::size_t i = 0; i < path.size(); ++i) {
      while (rng.bernoulli(config.noise)) {
        if (i > 0 && rng.bernoulli(0.5)) {
          ShowId repeat = path[rng.index(i)];
          plays.emplace_back(repeat, rng.integer(30, 3600));
        } else {
          plays.emplace_back(walker.popular_show(rng), rng.integer(1, 29));
        }
      }
      plays.emplace_back(path[i], rng.integer(30, 3600));
    }

    const double slot = static_cast<double>(span) / static_cast<double>(plays.size());
    Timestamp previous = begin - 1;
    for (std::size_t j = 0; j < plays.size(); ++j) {
      auto offset = static_cast<Timestamp>(slot * (static_cast<double>(j) + 0.5 +
                                                  rng.uniform(-0.45, 0.45)));
      Timestamp ts = std::min(config.horizon_end, std::max(begin + offset, previous + 1));
      previous = ts;
      events.push_back({user.id, plays[j].first, ts, plays[j].second});
    }
  }
  return events;
}

void write_catalog(std::ostream& out, const Catalog& catalog, const std::string& fingerprint) {
  json doc;
  if (!fingerprint.empty()) doc["fingerprint"] = fingerprint;
  doc["shows"] = json::array();
  for (const Show& s : catalog.shows)
    doc["shows"].push_back({{"id", s.id},
                            {"title", s.title},
                            {"topics", s.topics},
                            {"entities", s.entities},
                            {"popularity", s.popularity}});
  doc["topics"] = json::array();
  for (const Topic& t : catalog.topics)
    doc["topics"].push_back({{"id", t.id}, {"name", t.name}, {"shows", t.shows}});
  doc["entities"] = json::array();
  for (const Entity& e : catalog.entities)
    doc["entities"].push_back({{"id", e.id}, {"name", e.name}, {"topic", e.topic}});
  doc["relations"] = {"mentions", "related"};
  doc["triples"] = json::array();
  for (const KGTriple& t : catalog.triples)
    doc["triples"].push_back({t.head, t.relation, t.tail});
  out << doc.dump() << '\n';
}

Catalog read_catalog(std::istream& in) {
  Catalog catalog;
  try {
    json doc = json::parse(in);
    for (const auto& s : doc.at("shows")) {
      Show show;
      show.id = s.at("id").get<ShowId>();
      show.title = s.at("title").get<std::string>();
      show.topics = s.at("topics").get<std::vector<TopicId>>();
      show.entities = s.at("entities").get<std::vector<EntityId>>();
      show.popularity = s.at("popularity").get<double>();
      if (show.id != catalog.num_shows()) throw DataError("catalog: show ids must be dense");
      if (show.topics.empty() || !(show.popularity > 0.0))
        throw DataError("catalog: show " + std::to_string(show.id) + " violates invariants");
      catalog.shows.push_back(std::move(show));
    }
    for (const auto& t : doc.at("topics"))
      catalog.topics.push_back({t.at("id").get<TopicId>(), t.at("name").get<std::string>(),
                                t.at("shows").get<std::vector<ShowId>>()});
    for (const auto& e : doc.at("entities"))
      catalog.entities.push_back({e.at("id").get<EntityId>(), e.at("name").get<std::string>(),
                                  e.at("topic").get<TopicId>()});
    for (const auto& t : doc.at("triples"))
      catalog.triples.push_back({t.at(0).get<NodeId>(), t.at(1).get<RelationId>(),
                                 t.at(2).get<NodeId>()});
  } catch (const json::exception& e) {
    throw DataError(std::string("catalog: malformed JSON: ") + e.what());
  }
  for (const KGTriple& t : catalog.triples)
    if (t.head < 0 || t.tail < 0 || t.head >= catalog.num_nodes() ||
        t.tail >= catalog.num_nodes() || t.relation < 0 || t.relation >= kNumRelations)
      throw DataError("catalog: triple references unknown node or relation");
  return catalog;
}

void write_streams(std::ostream& out, const std::vector<StreamEvent>& events,
                   const std::string& fingerprint) {
  if (!fingerprint.empty()) out << json{{"fingerprint", fingerprint}}.dump() << '\n';
  for (const StreamEvent& e : events) {
    nlohmann::ordered_json line;
    line["user"] = e.user;
    line["show"] = e.show;
    line["ts"] = e.timestamp;
    line["secs"] = e.seconds_played;
    out << line.dump() << '\n';
  }
}

std::vector<StreamEvent> read_streams(std::istream& in) {
  std::vector<StreamEvent> events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      if (j.contains("fingerprint") && !j.contains("user")) continue;
      events.push_back({j.at("user").get<UserId>(), j.at("show").get<ShowId>(),
                        j.at("ts").get<Timestamp>(), j.at("secs").get<std::int64_t>()});
    } catch (const json::exception& e) {
      throw DataError("streams: line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return events;
}

}  // namespace trajrec
