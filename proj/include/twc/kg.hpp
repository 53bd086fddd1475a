#pragma once

// Concept graph, entity linking and the dynamic commonsense subgraph.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "twc/error.hpp"
#include "twc/gamegen.hpp"
#include "twc/text.hpp"
#include "twc/world.hpp"

namespace twc::kg {

struct Edge {
  std::string head;
  std::string relation;
  std::string tail;
  auto operator<=>(const Edge&) const = default;
};

class ConceptGraph {
 public:
  ConceptGraph() = default;

  // Adds (h, r, t) after normalizing both endpoints; duplicates and empty
  // endpoints are ignored. Returns true if the edge is new.
  bool add_edge(std::string_view head, std::string_view relation, std::string_view tail) {
    Edge e{text::normalize(head), std::string(relation), text::normalize(tail)};
    if (e.head.empty() || e.tail.empty() || e.relation.empty()) return false;
    if (!edge_set_.insert(e).second) return false;
    const int hi = intern(e.head);
    const int ti = intern(e.tail);
    const int idx = static_cast<int>(edges_.size());
    edges_.push_back(std::move(e));
    adjacency_[hi].push_back(idx);
    if (ti != hi) adjacency_[ti].push_back(idx);
    return true;
  }

  void add_node(std::string_view name) { intern(text::normalize(name)); }

  bool has_node(const std::string& n) const { return index_.contains(n); }
  bool has_edge(const Edge& e) const { return edge_set_.contains(e); }
  const std::vector<std::string>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  std::size_t node_count() const { return nodes_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  // Edges incident to `n` in either direction, in insertion order.
  std::vector<const Edge*> incident(const std::string& n) const {
    std::vector<const Edge*> out;
    auto it = index_.find(n);
    if (it == index_.end()) return out;
    for (int e : adjacency_[it->second]) out.push_back(&edges_[e]);
    return out;
  }

  std::vector<std::string> neighbors(const std::string& n) const {
    std::vector<std::string> out;
    for (const Edge* e : incident(n)) {
      const std::string& other = e->head == n ? e->tail : e->head;
      if (std::find(out.begin(), out.end(), other) == out.end()) out.push_back(other);
    }
    return out;
  }

  bool connected(const std::string& a, const std::string& b) const {
    for (const Edge* e : incident(a))
      if ((e->head == a && e->tail == b) || (e->head == b && e->tail == a)) return true;
    return false;
  }

  // Undirected BFS distances from `src`, limited to `max_depth`.
  std::unordered_map<std::string, int> distances(const std::string& src, int max_depth) const {
    std::unordered_map<std::string, int> dist;
    if (!has_node(src)) return dist;
    std::deque<std::string> q{src};
    dist[src] = 0;
    while (!q.empty()) {
      std::string u = std::move(q.front());
      q.pop_front();
      const int d = dist[u];
      if (d == max_depth) continue;
      for (const auto& v : neighbors(u)) {
        if (dist.contains(v)) continue;
        dist[v] = d + 1;
        q.push_back(v);
      }
    }
    return dist;
  }

  // Length of a shortest undirected path, if within max_depth.
  std::optional<int> hop_distance(const std::string& a, const std::string& b, int max_depth) const {
    auto d = distances(a, max_depth);
    auto it = d.find(b);
    if (it == d.end()) return std::nullopt;
    return it->second;
  }

 private:
  int intern(const std::string& n) {
    auto [it, inserted] = index_.emplace(n, static_cast<int>(nodes_.size()));
    if (inserted) {
      nodes_.push_back(n);
      adjacency_.emplace_back();
    }
    return it->second;
  }

  std::vector<std::string> nodes_;
  std::unordered_map<std::string, int> index_;
  std::vector<Edge> edges_;
  std::set<Edge> edge_set_;
  std::vector<std::vector<int>> adjacency_;
};

// head TAB relation TAB tail, '#' comments and blank lines skipped.
inline ConceptGraph parse_tsv(std::istream& in, const std::string& origin = "<tsv>") {
  ConceptGraph g;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto cols = text::split_char(line, '\t');
    if (cols.size() != 3) throw InvalidDataset(origin + ":" + std::to_string(lineno) + ": expected 3 tab-separated columns");
    g.add_edge(cols[0], cols[1], cols[2]);
  }
  return g;
}

namespace detail {

// "/c/en/ice_cream/n" -> "ice_cream"; empty if not an English concept.
inline std::string conceptnet_concept(const std::string& uri) {
  auto parts = text::split_char(uri, '/');
  // leading '/' yields an empty first part
  if (parts.size() < 4 || parts[1] != "c" || parts[2] != "en") return {};
  return parts[3];
}

inline std::string conceptnet_relation(const std::string& uri) {
  std::string r = uri.rfind("/r/", 0) == 0 ? uri.substr(3) : uri;
  if (auto slash = r.find('/'); slash != std::string::npos) r = r.substr(0, slash);
  if (!r.empty()) r[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(r[0])));
  return r;
}

}  // namespace detail

// ConceptNet assertion dump: uri, relation, start, end, json (tab separated).
// Only assertions between two English concepts are kept; weights ignored.
inline ConceptGraph parse_conceptnet_csv(std::istream& in) {
  ConceptGraph g;
  std::string line;
  while (std::getline(in, line)) {
    auto cols = text::split_char(line, '\t');
    if (cols.size() < 4) continue;
    const std::string h = detail::conceptnet_concept(cols[2]);
    const std::string t = detail::conceptnet_concept(cols[3]);
    if (h.empty() || t.empty()) continue;
    g.add_edge(h, detail::conceptnet_relation(cols[1]), t);
  }
  return g;
}

inline ConceptGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open knowledge graph '" + path + "'");
  if (path.ends_with(".csv")) return parse_conceptnet_csv(in);
  return parse_tsv(in, path);
}

// ---------------------------------------------------------------------------
// entity linking

// Template words of the observation renderer plus common function words.
// Entity names never contain any of these.
inline const std::unordered_set<std::string>& stopwords() {
  static const std::unordered_set<std::string> words = {
      "a", "an", "the", "some", "and", "or", "of", "to", "in", "into", "inside", "on", "onto", "from", "off",
      "at", "by", "with", "for", "up", "is", "are", "be", "it", "its", "you", "your", "see", "nothing",
      "open", "closed", "exit", "exits", "leads", "floor", "carrying", "north", "south", "east", "west",
      "welcome", "tidy", "house", "put", "every", "object", "where", "belongs", "take", "pick", "go", "look",
      "around", "check", "what", "score", "has", "gone", "one", "point", "all", "insert", "inventory", "there",
      "this", "that", "here"};
  return words;
}

inline bool is_stopword(const std::string& tok) {
  if (tok.empty()) return true;
  if (tok.size() == 1 && text::is_punct(tok[0])) return true;
  return stopwords().contains(tok);
}

inline constexpr int kMaxNgram = 3;

// Concepts found in a token sequence. Chunks are maximal runs of
// non-stopword tokens; inside each chunk every n-gram (n <= 3) that is a
// graph node is kept unless it lies strictly inside a longer match.
// Output is in order of first appearance, without duplicates.
inline std::vector<std::string> link_tokens(const std::vector<std::string>& tokens, const ConceptGraph& g) {
  std::vector<std::string> out;
  auto emit = [&](const std::string& c) {
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  };
  std::size_t i = 0;
  while (i < tokens.size()) {
    if (is_stopword(text::lower(tokens[i]))) {
      ++i;
      continue;
    }
    std::size_t j = i;
    std::vector<std::string> chunk;
    while (j < tokens.size() && !is_stopword(text::lower(tokens[j]))) chunk.push_back(text::lower(tokens[j++]));
    struct Span {
      std::size_t b, e;
      std::string name;
    };
    std::vector<Span> matches;
    for (std::size_t b = 0; b < chunk.size(); ++b) {
      for (std::size_t n = 1; n <= static_cast<std::size_t>(kMaxNgram) && b + n <= chunk.size(); ++n) {
        std::vector<std::string> words(chunk.begin() + static_cast<long>(b), chunk.begin() + static_cast<long>(b + n));
        std::string c = text::join(words, "_");
        if (g.has_node(c)) matches.push_back({b, b + n, std::move(c)});
      }
    }
    for (const auto& m : matches) {
      bool covered = false;
      for (const auto& o : matches)
        covered = covered || (o.b <= m.b && m.e <= o.e && (o.e - o.b) > (m.e - m.b));
      if (!covered) emit(m.name);
    }
    i = j;
  }
  return out;
}

inline std::vector<std::string> link_name(const std::string& name, const ConceptGraph& g) {
  return link_tokens(text::tokenize(name), g);
}

// The concept naming an entity: its last linked concept, which is the head
// noun for "attribute attribute noun" names.
inline std::optional<std::string> head_concept(const std::string& name, const ConceptGraph& g) {
  auto c = link_name(name, g);
  if (c.empty()) return std::nullopt;
  return c.back();
}

enum Tag : std::uint8_t { kObject = 1, kContainer = 2 };

class EntitySet {
 public:
  // Returns true if anything changed.
  bool add(const std::string& name, std::uint8_t tags) {
    auto [it, inserted] = tags_.emplace(name, tags);
    if (inserted) {
      order_.push_back(name);
      return true;
    }
    const std::uint8_t before = it->second;
    it->second |= tags;
    return it->second != before;
  }

  bool merge(const EntitySet& other) {
    bool changed = false;
    for (const auto& c : other.order_) changed = add(c, other.tags(c)) || changed;
    return changed;
  }

  bool contains(const std::string& c) const { return tags_.contains(c); }
  std::uint8_t tags(const std::string& c) const {
    auto it = tags_.find(c);
    return it == tags_.end() ? 0 : it->second;
  }
  bool is_object(const std::string& c) const { return tags(c) & kObject; }
  bool is_container(const std::string& c) const { return tags(c) & kContainer; }
  const std::vector<std::string>& concepts() const { return order_; }
  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }

  // Every concept of *this is in `o` with at least the same tags.
  bool subset_of(const EntitySet& o) const {
    for (const auto& [c, t] : tags_)
      if ((o.tags(c) & t) != t) return false;
    return true;
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::uint8_t> tags_;
};

// Concepts of one observation. Concepts named by carried objects are tagged
// object; all other concepts are tagged container-or-supporter.
inline EntitySet link_entities(const std::vector<std::string>& tokens, const std::vector<std::string>& inventory_names,
                               const ConceptGraph& g) {
  EntitySet out;
  std::set<std::string> carried;
  for (const auto& n : inventory_names)
    for (auto& c : link_name(n, g)) carried.insert(c);
  for (const auto& c : link_tokens(tokens, g)) out.add(c, carried.contains(c) ? kObject : kContainer);
  for (const auto& c : carried) out.add(c, kObject);
  return out;
}

inline std::vector<std::string> inventory_names(const world::WorldState& s) {
  std::vector<std::string> out;
  for (const auto& id : s.inventory()) out.push_back(s.entity(id).display_name());
  return out;
}

// Complete entity list of a game before play. An object's concept may be
// seen on a fixture before it is carried, so objects carry both tags.
inline EntitySet full_entities(const world::WorldState& s, const ConceptGraph& g) {
  EntitySet out;
  for (const auto& [rid, room] : s.rooms) {
    for (const auto& c : link_name(room.name, g)) out.add(c, kContainer);
  }
  for (const auto& [id, e] : s.entities) {
    const std::uint8_t tags = e.kind == world::EntityKind::Object ? (kObject | kContainer) : kContainer;
    for (const auto& c : link_name(e.display_name(), g)) out.add(c, tags);
  }
  return out;
}

// ---------------------------------------------------------------------------
// subgraphs

enum class Strategy { None, Direct, Contextual, Neighborhood, Manual };
enum class Mode { Evolve, Full };

inline std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::None: return "none";
    case Strategy::Direct: return "dc";
    case Strategy::Contextual: return "cdc";
    case Strategy::Neighborhood: return "ng";
    case Strategy::Manual: return "manual";
  }
  return "none";
}

inline Strategy strategy_from(const std::string& s) {
  if (s == "none") return Strategy::None;
  if (s == "dc") return Strategy::Direct;
  if (s == "cdc") return Strategy::Contextual;
  if (s == "ng") return Strategy::Neighborhood;
  if (s == "manual") return Strategy::Manual;
  throw InvalidConfig("unknown graph strategy '" + s + "' (none|dc|cdc|ng|manual)");
}

inline std::string to_string(Mode m) { return m == Mode::Evolve ? "evolve" : "full"; }

inline Mode mode_from(const std::string& s) {
  if (s == "evolve") return Mode::Evolve;
  if (s == "full") return Mode::Full;
  throw InvalidConfig("unknown graph mode '" + s + "' (evolve|full)");
}

struct Subgraph {
  std::vector<std::string> nodes;
  std::vector<Edge> edges;
  Strategy strategy = Strategy::None;
  Mode mode = Mode::Evolve;

  bool has_node(const std::string& n) const { return node_set_.contains(n); }
  bool has_edge(const Edge& e) const { return edge_set_.contains(e); }

  bool add_node(const std::string& n) {
    if (!node_set_.insert(n).second) return false;
    nodes.push_back(n);
    return true;
  }

  bool add_edge(const Edge& e) {
    if (!edge_set_.insert(e).second) return false;
    add_node(e.head);
    add_node(e.tail);
    edges.push_back(e);
    return true;
  }

  bool merge(const Subgraph& o) {
    bool changed = false;
    for (const auto& n : o.nodes) changed = add_node(n) || changed;
    for (const auto& e : o.edges) changed = add_edge(e) || changed;
    return changed;
  }

  int index_of(const std::string& n) const {
    auto it = std::find(nodes.begin(), nodes.end(), n);
    return it == nodes.end() ? -1 : static_cast<int>(it - nodes.begin());
  }

  bool nodes_subset_of(const Subgraph& o) const {
    return std::all_of(nodes.begin(), nodes.end(), [&](const auto& n) { return o.has_node(n); });
  }
  bool edges_subset_of(const Subgraph& o) const {
    return std::all_of(edges.begin(), edges.end(), [&](const auto& e) { return o.has_edge(e); });
  }
  bool subset_of(const Subgraph& o) const { return nodes_subset_of(o) && edges_subset_of(o); }

  bool operator==(const Subgraph& o) const { return nodes == o.nodes && edges == o.edges; }

 private:
  std::unordered_set<std::string> node_set_;
  std::set<Edge> edge_set_;
};

inline Subgraph extract_direct(const EntitySet& E, const ConceptGraph& g) {
  Subgraph out;
  out.strategy = Strategy::Direct;
  for (const auto& c : E.concepts())
    if (g.has_node(c)) out.add_node(c);
  for (const auto& c : E.concepts())
    for (const Edge* e : g.incident(c))
      if (E.contains(e->head) && E.contains(e->tail)) out.add_edge(*e);
  return out;
}

// Direct links between an object concept and a container-or-supporter
// concept, in either direction.
inline Subgraph extract_contextual(const EntitySet& E, const ConceptGraph& g) {
  Subgraph out;
  out.strategy = Strategy::Contextual;
  for (const auto& c : E.concepts())
    if (g.has_node(c)) out.add_node(c);
  for (const auto& c : E.concepts()) {
    for (const Edge* e : g.incident(c)) {
      if (e->head == e->tail) continue;
      const bool forward = E.is_object(e->head) && E.is_container(e->tail);
      const bool backward = E.is_container(e->head) && E.is_object(e->tail);
      if (forward || backward) out.add_edge(*e);
    }
  }
  return out;
}

inline Subgraph extract_neighborhood(const EntitySet& E, const ConceptGraph& g) {
  Subgraph out;
  out.strategy = Strategy::Neighborhood;
  for (const auto& c : E.concepts())
    if (g.has_node(c)) out.add_node(c);
  for (const auto& c : E.concepts())
    for (const Edge* e : g.incident(c)) out.add_edge(*e);
  return out;
}

struct ManualResult {
  Subgraph graph;
  std::vector<std::pair<std::string, std::string>> no_path;
};

// Union of all shortest paths between each (object, location) concept pair
// of length at most 2 * max_hops.
inline ManualResult manual_subgraph(const std::vector<std::pair<std::string, std::string>>& pairs,
                                    const ConceptGraph& g, int max_hops = 2) {
  ManualResult out;
  out.graph.strategy = Strategy::Manual;
  const int limit = 2 * max_hops;
  for (const auto& [o, l] : pairs) {
    const auto d_o = g.distances(o, limit);
    const auto it = d_o.find(l);
    if (it == d_o.end()) {
      out.no_path.emplace_back(o, l);
      continue;
    }
    const int d = it->second;
    const auto d_l = g.distances(l, limit);
    auto dist = [](const std::unordered_map<std::string, int>& m, const std::string& n) {
      auto f = m.find(n);
      return f == m.end() ? -1 : f->second;
    };
    // walk outward from o along edges that stay on some shortest path
    std::vector<std::string> frontier{o};
    std::set<std::string> seen{o};
    out.graph.add_node(o);
    while (!frontier.empty()) {
      std::vector<std::string> next;
      for (const auto& u : frontier) {
        const int du = dist(d_o, u);
        for (const Edge* e : g.incident(u)) {
          const std::string& v = e->head == u ? e->tail : e->head;
          const int dv = dist(d_o, v);
          const int lv = dist(d_l, v);
          if (dv != du + 1 || lv < 0 || dv + lv != d) continue;
          out.graph.add_edge(*e);
          if (seen.insert(v).second) next.push_back(v);
        }
      }
      frontier = std::move(next);
    }
  }
  return out;
}

// (object concept, location concept) pairs of a game's goals.
inline std::vector<std::pair<std::string, std::string>> goal_concepts(const world::WorldState& s,
                                                                      const std::vector<world::GoalTriple>& goals,
                                                                      const ConceptGraph& g) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& gt : goals) {
    auto o = head_concept(s.entity(gt.object_id).display_name(), g);
    auto l = head_concept(s.entity(gt.location_id).display_name(), g);
    if (o && l) out.emplace_back(*o, *l);
  }
  return out;
}

inline Subgraph extract(Strategy strategy, const EntitySet& E, const ConceptGraph& g) {
  switch (strategy) {
    case Strategy::Direct: return extract_direct(E, g);
    case Strategy::Contextual: return extract_contextual(E, g);
    case Strategy::Neighborhood: return extract_neighborhood(E, g);
    case Strategy::None:
    case Strategy::Manual: break;
  }
  Subgraph empty;
  empty.strategy = strategy;
  return empty;
}

// Evolve: previous subgraph united with the extraction over the enlarged
// entity set. Full: the previous subgraph unchanged (it was built at t = 0).
inline Subgraph update_subgraph(const Subgraph& previous, const EntitySet& E_t, const ConceptGraph& g,
                                Strategy strategy, Mode mode) {
  if (mode == Mode::Full || strategy == Strategy::None || strategy == Strategy::Manual) return previous;
  Subgraph next = previous;
  next.merge(extract(strategy, E_t, g));
  next.strategy = strategy;
  next.mode = mode;
  return next;
}

// Per-episode state: the entity set E_t and the subgraph G_t.
class DynamicSubgraph {
 public:
  DynamicSubgraph(const ConceptGraph* g, Strategy strategy, Mode mode) : graph_(g), strategy_(strategy), mode_(mode) {}

  void reset(const world::WorldState& initial, const std::vector<world::GoalTriple>& goals) {
    entities_ = EntitySet{};
    current_ = Subgraph{};
    current_.strategy = strategy_;
    current_.mode = mode_;
    if (!graph_) return;
    if (strategy_ == Strategy::Manual) {
      current_.merge(manual_subgraph(goal_concepts(initial, goals, *graph_), *graph_).graph);
    } else if (mode_ == Mode::Full && strategy_ != Strategy::None) {
      current_.merge(extract(strategy_, full_entities(initial, *graph_), *graph_));
    }
  }

  const Subgraph& observe(const std::vector<std::string>& tokens, const world::WorldState& s) {
    if (!graph_ || strategy_ == Strategy::None) return current_;
    const bool changed = entities_.merge(link_entities(tokens, inventory_names(s), *graph_));
    if (changed && mode_ == Mode::Evolve && strategy_ != Strategy::Manual)
      current_ = update_subgraph(current_, entities_, *graph_, strategy_, mode_);
    return current_;
  }

  const Subgraph& current() const { return current_; }
  const EntitySet& entities() const { return entities_; }
  Strategy strategy() const { return strategy_; }
  Mode mode() const { return mode_; }

 private:
  const ConceptGraph* graph_;
  Strategy strategy_;
  Mode mode_;
  EntitySet entities_;
  Subgraph current_;
};

// ---------------------------------------------------------------------------
// dataset coverage diagnostics

struct OverlapStats {
  double direct_pct = 0.0;
  double unique_match_pct = 0.0;
  double hop2_pct = 0.0;
  double hop3_pct = 0.0;
};

inline nlohmann::json to_json(const OverlapStats& s) {
  return {{"direct_pct", s.direct_pct}, {"unique_match_pct", s.unique_match_pct}, {"hop2_pct", s.hop2_pct},
          {"hop3_pct", s.hop3_pct}};
}

namespace detail {
inline double pct(std::size_t k, std::size_t n) {
  if (n == 0) return 0.0;
  // two decimals, stable under JSON round trips
  return std::round(10000.0 * static_cast<double>(k) / static_cast<double>(n)) / 100.0;
}
}  // namespace detail

// Goal pairs are the unique (object, location) names of the dataset goals;
// unique entities are the object and fixture names.
inline OverlapStats overlap_stats(const gamegen::Dataset& d, const ConceptGraph& g) {
  std::set<std::pair<std::string, std::string>> pairs;
  std::set<std::string> entities;
  for (const auto& o : d.objects) {
    entities.insert(text::normalize(o.name));
    for (const auto& goal : o.goals) pairs.emplace(text::normalize(o.name), text::normalize(goal.location));
  }
  for (const auto& f : d.fixtures) entities.insert(text::normalize(f.name));
  std::size_t direct = 0, hop2 = 0, hop3 = 0, matched = 0;
  for (const auto& [o, l] : pairs) {
    if (g.connected(o, l)) ++direct;
    auto dist = g.hop_distance(o, l, 3);
    if (dist && *dist <= 2) ++hop2;
    if (dist) ++hop3;
  }
  for (const auto& e : entities) matched += g.has_node(e) ? 1 : 0;
  OverlapStats s;
  s.direct_pct = detail::pct(direct, pairs.size());
  s.unique_match_pct = detail::pct(matched, entities.size());
  s.hop2_pct = detail::pct(hop2, pairs.size());
  s.hop3_pct = detail::pct(hop3, pairs.size());
  return s;
}

// Graph holding exactly one atLocation edge per dataset goal pair.
inline ConceptGraph goals_only_graph(const gamegen::Dataset& d) {
  ConceptGraph g;
  for (const auto& o : d.objects)
    for (const auto& goal : o.goals) g.add_edge(o.name, "atLocation", goal.location);
  return g;
}

}  // namespace twc::kg
