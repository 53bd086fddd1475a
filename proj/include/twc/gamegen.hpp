#pragma once

// Object/room/location dataset, train/out split, procedural game sampling
// per difficulty tier, GameSpec (de)serialization and optimal step counts.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "twc/error.hpp"
#include "twc/rng.hpp"
#include "twc/text.hpp"
#include "twc/world.hpp"

namespace twc::gamegen {

using nlohmann::json;

struct GoalDef {
  std::string room;      // room display name
  std::string location;  // fixture display name
  std::vector<std::string> when;    // attributes required for this goal
  std::vector<std::string> unless;  // attributes excluding this goal

  bool applies(const std::vector<std::string>& attrs) const {
    auto has = [&](const std::string& a) { return std::find(attrs.begin(), attrs.end(), a) != attrs.end(); };
    for (const auto& w : when)
      if (!has(w)) return false;
    for (const auto& u : unless)
      if (has(u)) return false;
    return true;
  }
};

struct DatasetEntry {
  std::string name;
  std::vector<std::vector<std::string>> attributes;  // groups; at most one choice per group
  std::vector<GoalDef> goals;

  // Every attribute combination: for each group either nothing or one value.
  std::vector<std::vector<std::string>> attribute_variants() const {
    std::vector<std::vector<std::string>> out{{}};
    for (const auto& group : attributes) {
      std::vector<std::vector<std::string>> next;
      for (const auto& v : out) {
        next.push_back(v);
        if (v.size() >= 2) continue;
        for (const auto& a : group) {
          auto w = v;
          w.push_back(a);
          next.push_back(std::move(w));
        }
      }
      out = std::move(next);
    }
    return out;
  }

  std::vector<const GoalDef*> goals_for(const std::vector<std::string>& attrs) const {
    std::vector<const GoalDef*> out;
    for (const auto& g : goals)
      if (g.applies(attrs)) out.push_back(&g);
    return out;
  }
};

struct FixtureDef {
  std::string name;
  world::EntityKind kind = world::EntityKind::Supporter;
  bool openable = false;
  std::string room;
};

struct Dataset {
  std::vector<std::string> rooms;
  std::vector<FixtureDef> fixtures;
  std::vector<DatasetEntry> objects;

  const FixtureDef* fixture(const std::string& name) const {
    for (const auto& f : fixtures)
      if (f.name == name) return &f;
    return nullptr;
  }

  std::vector<const FixtureDef*> fixtures_in(const std::string& room) const {
    std::vector<const FixtureDef*> out;
    for (const auto& f : fixtures)
      if (f.room == room) out.push_back(&f);
    return out;
  }
};

inline Dataset dataset_from_json(const json& j) {
  Dataset d;
  try {
    for (const auto& r : j.at("rooms")) d.rooms.push_back(r.get<std::string>());
    for (const auto& f : j.at("fixtures")) {
      FixtureDef fd;
      fd.name = f.at("name").get<std::string>();
      auto kind = world::entity_kind_from(f.at("type").get<std::string>());
      if (!kind || (*kind != world::EntityKind::Supporter && *kind != world::EntityKind::Container))
        throw InvalidDataset("fixture '" + fd.name + "' must be a supporter or container");
      fd.kind = *kind;
      fd.openable = f.value("openable", false);
      fd.room = f.at("room").get<std::string>();
      d.fixtures.push_back(std::move(fd));
    }
    for (const auto& o : j.at("objects")) {
      DatasetEntry e;
      e.name = o.at("name").get<std::string>();
      for (const auto& g : o.value("attributes", json::array())) e.attributes.push_back(g.get<std::vector<std::string>>());
      for (const auto& g : o.at("goals")) {
        GoalDef gd;
        gd.room = g.at("room").get<std::string>();
        gd.location = g.at("location").get<std::string>();
        gd.when = g.value("when", std::vector<std::string>{});
        gd.unless = g.value("unless", std::vector<std::string>{});
        e.goals.push_back(std::move(gd));
      }
      d.objects.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw InvalidDataset(std::string("malformed dataset: ") + ex.what());
  }
  std::set<std::string> rooms(d.rooms.begin(), d.rooms.end());
  for (const auto& f : d.fixtures)
    if (!rooms.contains(f.room)) throw InvalidDataset("fixture '" + f.name + "' references unknown room '" + f.room + "'");
  for (const auto& e : d.objects) {
    if (e.attributes.size() > 2) throw InvalidDataset("object '" + e.name + "' has more than 2 attribute groups");
    for (const auto& g : e.goals) {
      if (!rooms.contains(g.room)) throw InvalidDataset("object '" + e.name + "' references unknown room '" + g.room + "'");
      const FixtureDef* f = d.fixture(g.location);
      if (!f) throw InvalidDataset("object '" + e.name + "' references unknown fixture '" + g.location + "'");
      if (f->room != g.room)
        throw InvalidDataset("object '" + e.name + "': fixture '" + g.location + "' is not in room '" + g.room + "'");
    }
  }
  return d;
}

inline json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& ex) {
    throw IoError("invalid JSON in " + path.string() + ": " + ex.what());
  }
}

inline Dataset load_dataset(const std::filesystem::path& path) { return dataset_from_json(read_json_file(path)); }

// ---------------------------------------------------------------------------
// split

struct Pools {
  std::vector<DatasetEntry> train;  // train and "in" test games
  std::vector<DatasetEntry> out;    // "out" test games
};

// Seeded shuffle of the unique object names; the first ceil(2n/3) go to the
// train pool. Duplicate names collapse into one entry (first wins).
inline Pools split_dataset(const std::vector<DatasetEntry>& entries, std::uint64_t seed) {
  std::map<std::string, const DatasetEntry*> unique;
  for (const auto& e : entries) unique.emplace(e.name, &e);
  if (unique.size() < 3) throw DatasetTooSmall("need at least 3 unique objects, got " + std::to_string(unique.size()));
  std::vector<std::string> names;
  for (const auto& [n, _] : unique) names.push_back(n);
  Rng rng(seed);
  rng.shuffle(names);
  const std::size_t n_train = (2 * names.size() + 2) / 3;
  Pools pools;
  for (std::size_t i = 0; i < names.size(); ++i)
    (i < n_train ? pools.train : pools.out).push_back(*unique.at(names[i]));
  return pools;
}

// ---------------------------------------------------------------------------
// difficulty tiers

enum class Tier { Easy, Medium, Hard };
enum class Split { Train, In, Out };

inline std::string to_string(Tier t) {
  switch (t) {
    case Tier::Easy: return "easy";
    case Tier::Medium: return "medium";
    case Tier::Hard: return "hard";
  }
  return "easy";
}
inline std::string to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::In: return "in";
    case Split::Out: return "out";
  }
  return "train";
}
inline Tier tier_from(const std::string& s) {
  if (s == "easy") return Tier::Easy;
  if (s == "medium") return Tier::Medium;
  if (s == "hard") return Tier::Hard;
  throw InvalidConfig("unknown tier '" + s + "'");
}
inline Split split_from(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "in") return Split::In;
  if (s == "out") return Split::Out;
  throw InvalidConfig("unknown split '" + s + "'");
}

struct DifficultyConfig {
  Tier tier = Tier::Easy;
  std::vector<int> total_objects;
  std::vector<int> objects_to_find;
  std::vector<int> rooms;
  int distractors_per_room = 2;

  static DifficultyConfig easy() { return {Tier::Easy, {1}, {1}, {1}}; }
  static DifficultyConfig medium() { return {Tier::Medium, {2, 3}, {1, 2, 3}, {1}}; }
  static DifficultyConfig hard() { return {Tier::Hard, {6, 7}, {5, 6, 7}, {1, 2}}; }
  static DifficultyConfig for_tier(Tier t) {
    switch (t) {
      case Tier::Easy: return easy();
      case Tier::Medium: return medium();
      case Tier::Hard: return hard();
    }
    return easy();
  }
};

// ---------------------------------------------------------------------------
// GameSpec

inline constexpr int kSchemaVersion = 1;

struct GameSpec {
  int schema_version = kSchemaVersion;
  std::string id;
  std::uint64_t seed = 0;
  Tier tier = Tier::Easy;
  Split split = Split::Train;
  world::WorldState initial;
  std::vector<world::GoalTriple> goals;
  std::vector<std::string> distractors;
  std::vector<std::string> vocabulary;

  int objects_to_find() const {
    int n = 0;
    for (const auto& g : goals)
      if (!initial.carrying(g.object_id)) ++n;
    return n;
  }
  int objects_carried() const { return static_cast<int>(goals.size()) - objects_to_find(); }
};

inline std::string placement_kind_name(world::Placement::Kind k) {
  switch (k) {
    case world::Placement::Kind::Fixture: return "fixture";
    case world::Placement::Kind::Floor: return "floor";
    case world::Placement::Kind::Inventory: return "inventory";
  }
  return "inventory";
}

inline json to_json(const GameSpec& g) {
  json j;
  j["schema_version"] = g.schema_version;
  j["id"] = g.id;
  j["seed"] = g.seed;
  j["difficulty"] = to_string(g.tier);
  j["split"] = to_string(g.split);
  j["start_room"] = g.initial.agent_room;
  json rooms = json::array();
  for (const auto& [rid, r] : g.initial.rooms) {
    json exits = json::object();
    for (const auto& [d, to] : r.exits) exits[d] = to;
    rooms.push_back({{"id", r.id}, {"name", r.name}, {"exits", exits}, {"fixtures", r.fixtures}});
  }
  j["rooms"] = rooms;
  json ents = json::array();
  for (const auto& [eid, e] : g.initial.entities) {
    ents.push_back({{"id", e.id},
                    {"name", e.base_name},
                    {"attributes", e.attributes},
                    {"kind", std::string(world::to_string(e.kind))},
                    {"openable", e.openable},
                    {"open", e.open}});
  }
  j["entities"] = ents;
  json place = json::object();
  for (const auto& [oid, p] : g.initial.placement) place[oid] = {{"kind", placement_kind_name(p.kind)}, {"ref", p.ref}};
  j["placement"] = place;
  json goals = json::array();
  for (const auto& gt : g.goals) goals.push_back({{"object", gt.object_id}, {"room", gt.room_id}, {"location", gt.location_id}});
  j["goals"] = goals;
  j["distractors"] = g.distractors;
  j["vocabulary"] = g.vocabulary;
  return j;
}

inline GameSpec game_from_json(const json& j) {
  GameSpec g;
  try {
    g.schema_version = j.at("schema_version").get<int>();
    if (g.schema_version != kSchemaVersion)
      throw InvalidGameSpec("unsupported schema_version " + std::to_string(g.schema_version));
    g.id = j.value("id", std::string{});
    g.seed = j.at("seed").get<std::uint64_t>();
    g.tier = tier_from(j.at("difficulty").get<std::string>());
    g.split = split_from(j.at("split").get<std::string>());
    auto& s = g.initial;
    s.agent_room = j.at("start_room").get<std::string>();
    for (const auto& r : j.at("rooms")) {
      world::Room room;
      room.id = r.at("id").get<std::string>();
      room.name = r.at("name").get<std::string>();
      for (const auto& [d, to] : r.at("exits").items()) room.exits[d] = to.get<std::string>();
      room.fixtures = r.at("fixtures").get<std::vector<std::string>>();
      s.rooms[room.id] = std::move(room);
    }
    for (const auto& e : j.at("entities")) {
      world::Entity ent;
      ent.id = e.at("id").get<std::string>();
      ent.base_name = e.at("name").get<std::string>();
      ent.attributes = e.at("attributes").get<std::vector<std::string>>();
      auto kind = world::entity_kind_from(e.at("kind").get<std::string>());
      if (!kind) throw InvalidGameSpec("bad entity kind for " + ent.id);
      ent.kind = *kind;
      ent.openable = e.at("openable").get<bool>();
      ent.open = e.at("open").get<bool>();
      s.entities[ent.id] = std::move(ent);
    }
    for (const auto& [oid, p] : j.at("placement").items()) {
      const std::string kind = p.at("kind").get<std::string>();
      world::Placement pl;
      if (kind == "fixture") pl.kind = world::Placement::Kind::Fixture;
      else if (kind == "floor") pl.kind = world::Placement::Kind::Floor;
      else if (kind == "inventory") pl.kind = world::Placement::Kind::Inventory;
      else throw InvalidGameSpec("bad placement kind for " + oid);
      pl.ref = p.at("ref").get<std::string>();
      s.placement[oid] = std::move(pl);
    }
    for (const auto& gt : j.at("goals"))
      g.goals.push_back({gt.at("object").get<std::string>(), gt.at("room").get<std::string>(),
                         gt.at("location").get<std::string>()});
    g.distractors = j.value("distractors", std::vector<std::string>{});
    g.vocabulary = j.value("vocabulary", std::vector<std::string>{});
  } catch (const json::exception& ex) {
    throw InvalidGameSpec(std::string("malformed game spec: ") + ex.what());
  }
  for (const auto& gt : g.goals) {
    if (!g.initial.rooms.contains(gt.room_id)) throw InvalidGameSpec("goal room '" + gt.room_id + "' missing");
    const auto& fx = g.initial.rooms.at(gt.room_id).fixtures;
    if (std::find(fx.begin(), fx.end(), gt.location_id) == fx.end())
      throw InvalidGameSpec("goal location '" + gt.location_id + "' is not a fixture of '" + gt.room_id + "'");
    if (!g.initial.placement.contains(gt.object_id)) throw InvalidGameSpec("goal object '" + gt.object_id + "' not placed");
  }
  return g;
}

inline std::string dump_game(const GameSpec& g) { return to_json(g).dump(2) + "\n"; }

inline void save_game(const GameSpec& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << dump_game(g);
}

inline GameSpec load_game(const std::filesystem::path& path) {
  GameSpec g = game_from_json(read_json_file(path));
  if (g.id.empty()) {
    std::string stem = path.filename().string();
    if (auto pos = stem.find(".twc.json"); pos != std::string::npos) stem = stem.substr(0, pos);
    g.id = stem;
  }
  return g;
}

// All *.twc.json files of a directory, ordered by file name.
inline std::vector<GameSpec> load_game_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (e.is_regular_file() && name.size() > 9 && name.ends_with(".twc.json")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<GameSpec> out;
  for (const auto& f : files) out.push_back(load_game(f));
  return out;
}

// ---------------------------------------------------------------------------
// routes and optimal steps

// Minimal room walk (start room first) that lets every goal object be
// picked up and then delivered, with unlimited carrying capacity. Exhaustive
// breadth-first search over (room, per-object progress) states, so the walk
// length is exactly minimal.
inline std::vector<std::string> plan_route(const world::WorldState& s, const std::vector<world::GoalTriple>& goals) {
  const std::size_t n = goals.size();
  std::vector<std::string> source(n);  // room where the object lies; empty if carried
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = s.placement.at(goals[i].object_id);
    if (p.kind == world::Placement::Kind::Floor) source[i] = p.ref;
    else if (p.kind == world::Placement::Kind::Fixture) source[i] = s.fixture_room(p.ref);
  }
  // progress: 0 lying somewhere, 1 carried, 2 delivered
  using Progress = std::vector<std::uint8_t>;
  auto settle = [&](const std::string& room, Progress p) {
    for (std::size_t i = 0; i < n; ++i)
      if (p[i] == 0 && source[i] == room) p[i] = 1;
    for (std::size_t i = 0; i < n; ++i)
      if (p[i] == 1 && goals[i].room_id == room) p[i] = 2;
    return p;
  };
  Progress start(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (source[i].empty()) start[i] = 1;
  start = settle(s.agent_room, start);

  using Key = std::pair<std::string, Progress>;
  std::map<Key, Key> parent;
  std::deque<Key> frontier;
  Key first{s.agent_room, start};
  parent.emplace(first, first);
  frontier.push_back(first);
  auto done = [](const Progress& p) { return std::all_of(p.begin(), p.end(), [](auto v) { return v == 2; }); };
  while (!frontier.empty()) {
    Key cur = frontier.front();
    frontier.pop_front();
    if (done(cur.second)) {
      std::vector<std::string> walk;
      Key k = cur;
      while (true) {
        walk.push_back(k.first);
        const Key& up = parent.at(k);
        if (up == k) break;
        k = up;
      }
      std::reverse(walk.begin(), walk.end());
      return walk;
    }
    for (const auto& [dir, to] : s.room(cur.first).exits) {
      Key nxt{to, settle(to, cur.second)};
      if (parent.contains(nxt)) continue;
      parent.emplace(nxt, cur);
      frontier.push_back(nxt);
    }
  }
  throw InvalidGameSpec("goals are not reachable from the start room");
}

inline int optimal_steps(const GameSpec& g) {
  const int moves = static_cast<int>(plan_route(g.initial, g.goals).size()) - 1;
  return 2 * g.objects_to_find() + g.objects_carried() + moves;
}

// ---------------------------------------------------------------------------
// sampling

struct ChosenObject {
  const DatasetEntry* entry = nullptr;
  std::vector<std::string> attributes;
  const GoalDef* goal = nullptr;
  std::string display() const {
    std::string out;
    for (const auto& a : attributes) out += a + " ";
    return out + entry->name;
  }
};

namespace detail {

inline bool entry_fits(const DatasetEntry& e, const std::set<std::string>& rooms) {
  for (const auto& v : e.attribute_variants())
    for (const GoalDef* g : e.goals_for(v))
      if (rooms.contains(g->room)) return true;
  return false;
}

inline std::vector<std::vector<std::string>> room_subsets(const std::vector<std::string>& rooms, std::size_t k) {
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> cur;
  auto rec = [&](auto&& self, std::size_t i) -> void {
    if (cur.size() == k) {
      out.push_back(cur);
      return;
    }
    if (i == rooms.size()) return;
    cur.push_back(rooms[i]);
    self(self, i + 1);
    cur.pop_back();
    self(self, i + 1);
  };
  rec(rec, 0);
  return out;
}

}  // namespace detail

inline constexpr int kMaxSampleAttempts = 500;

inline GameSpec sample_game(const Dataset& dataset, const std::vector<DatasetEntry>& pool, const DifficultyConfig& cfg,
                            Split split, std::uint64_t seed) {
  Rng rng(seed);
  for (int attempt = 0; attempt < kMaxSampleAttempts; ++attempt) {
    const int n_total = rng.pick(cfg.total_objects);
    std::vector<int> find_choices;
    for (int f : cfg.objects_to_find)
      if (f <= n_total) find_choices.push_back(f);
    if (find_choices.empty()) continue;
    const int n_find = rng.pick(find_choices);
    const auto n_rooms = static_cast<std::size_t>(rng.pick(cfg.rooms));
    if (n_rooms == 0 || n_rooms > dataset.rooms.size()) continue;

    // room sets with enough compatible objects
    std::vector<std::vector<std::string>> feasible;
    for (auto& subset : detail::room_subsets(dataset.rooms, n_rooms)) {
      std::set<std::string> rs(subset.begin(), subset.end());
      int eligible = 0;
      for (const auto& e : pool)
        if (detail::entry_fits(e, rs)) eligible += static_cast<int>(e.attribute_variants().size());
      if (eligible >= n_total) feasible.push_back(std::move(subset));
    }
    if (feasible.empty()) continue;
    std::vector<std::string> room_names = rng.pick(feasible);
    rng.shuffle(room_names);  // first room is the start room
    std::set<std::string> room_set(room_names.begin(), room_names.end());

    std::vector<const DatasetEntry*> eligible;
    for (const auto& e : pool)
      if (detail::entry_fits(e, room_set)) eligible.push_back(&e);

    // objects, attributes and goals
    std::vector<ChosenObject> objects;
    std::set<std::string> names;
    for (int tries = 0; static_cast<int>(objects.size()) < n_total && tries < 50 * n_total; ++tries) {
      const DatasetEntry* e = rng.pick(eligible);
      std::vector<std::vector<std::string>> variants;
      for (const auto& v : e->attribute_variants()) {
        bool ok = false;
        for (const GoalDef* g : e->goals_for(v)) ok = ok || room_set.contains(g->room);
        if (ok) variants.push_back(v);
      }
      ChosenObject c;
      c.entry = e;
      c.attributes = rng.pick(variants);
      std::vector<const GoalDef*> goals;
      for (const GoalDef* g : e->goals_for(c.attributes))
        if (room_set.contains(g->room)) goals.push_back(g);
      c.goal = rng.pick(goals);
      if (names.contains(c.display())) continue;
      names.insert(c.display());
      objects.push_back(std::move(c));
    }
    if (static_cast<int>(objects.size()) < n_total) continue;

    // fixtures: goal locations plus distractors; no object may have a valid
    // location in the game other than its goal
    std::set<std::string> goal_fixtures;
    std::set<std::string> valid_anywhere;
    for (const auto& o : objects) {
      goal_fixtures.insert(o.goal->location);
      for (const GoalDef* g : o.entry->goals_for(o.attributes)) valid_anywhere.insert(g->location);
    }
    bool consistent = true;
    for (const auto& o : objects)
      for (const GoalDef* g : o.entry->goals_for(o.attributes))
        if (g->location != o.goal->location && goal_fixtures.contains(g->location)) consistent = false;
    if (!consistent) continue;

    std::map<std::string, std::vector<std::string>> room_fixtures;  // room name -> fixture names
    std::vector<std::string> distractors;
    for (const auto& rn : room_names) {
      std::vector<std::string> candidates;
      for (const FixtureDef* f : dataset.fixtures_in(rn)) {
        if (goal_fixtures.contains(f->name)) room_fixtures[rn].push_back(f->name);
        else if (!valid_anywhere.contains(f->name)) candidates.push_back(f->name);
      }
      rng.shuffle(candidates);
      const std::size_t k = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(std::max(0, cfg.distractors_per_room)));
      for (std::size_t i = 0; i < k; ++i) {
        room_fixtures[rn].push_back(candidates[i]);
        distractors.push_back(text::normalize(candidates[i]));
      }
    }
    bool every_room_furnished = true;
    for (const auto& rn : room_names) every_room_furnished = every_room_furnished && !room_fixtures[rn].empty();
    if (!every_room_furnished) continue;

    // assemble the world
    GameSpec g;
    g.seed = seed;
    g.tier = cfg.tier;
    g.split = split;
    world::WorldState& s = g.initial;
    std::set<std::string> ids;
    bool clash = false;
    auto claim = [&](const std::string& id) {
      if (!ids.insert(id).second) clash = true;
      return id;
    };
    for (const auto& rn : room_names) {
      world::Room room;
      room.id = claim(text::normalize(rn));
      room.name = rn;
      for (const auto& fname : room_fixtures[rn]) {
        const FixtureDef* fd = dataset.fixture(fname);
        world::Entity f;
        f.id = claim(text::normalize(fname));
        f.base_name = fname;
        f.kind = fd->kind;
        f.openable = fd->openable;
        f.open = true;  // generated games start with every container open
        room.fixtures.push_back(f.id);
        s.entities[f.id] = std::move(f);
      }
      std::sort(room.fixtures.begin(), room.fixtures.end());
      s.rooms[room.id] = std::move(room);
    }
    for (std::size_t i = 0; i + 1 < room_names.size(); ++i) {
      const std::string a = text::normalize(room_names[i]);
      const std::string b = text::normalize(room_names[i + 1]);
      std::vector<std::string> free_dirs;
      for (auto d : world::kDirections) {
        std::string ds(d);
        if (!s.rooms[a].exits.contains(ds) && !s.rooms[b].exits.contains(world::opposite(ds))) free_dirs.push_back(ds);
      }
      if (free_dirs.empty()) {
        clash = true;
        break;
      }
      const std::string d = rng.pick(free_dirs);
      s.rooms[a].exits[d] = b;
      s.rooms[b].exits[world::opposite(d)] = a;
    }
    s.agent_room = text::normalize(room_names.front());

    std::vector<std::size_t> order(objects.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    for (std::size_t k = 0; k < order.size(); ++k) {
      const ChosenObject& c = objects[order[k]];
      world::Entity o;
      o.id = claim(text::normalize(c.display()));
      o.base_name = c.entry->name;
      o.attributes = c.attributes;
      o.kind = world::EntityKind::Object;
      const std::string goal_fixture = text::normalize(c.goal->location);
      if (static_cast<int>(k) < n_find) {
        // on a fixture that is not its goal, or on a room floor
        std::vector<world::Placement> spots;
        for (const auto& [rid, r] : s.rooms) {
          for (const auto& fid : r.fixtures)
            if (fid != goal_fixture) spots.push_back(world::Placement::on(fid));
          spots.push_back(world::Placement::floor(rid));
        }
        s.placement[o.id] = rng.pick(spots);
      } else {
        s.placement[o.id] = world::Placement::carried();
      }
      g.goals.push_back({o.id, text::normalize(c.goal->room), goal_fixture});
      s.entities[o.id] = std::move(o);
    }
    if (clash) continue;

    for (const auto& [eid, e] : s.entities) g.vocabulary.push_back(e.display_name());
    for (const auto& [rid, r] : s.rooms) g.vocabulary.push_back(r.name);
    std::sort(g.vocabulary.begin(), g.vocabulary.end());
    g.distractors = distractors;
    std::sort(g.distractors.begin(), g.distractors.end());
    return g;
  }
  throw ExhaustedVocabulary("no consistent " + to_string(cfg.tier) + " game after " +
                            std::to_string(kMaxSampleAttempts) + " attempts (pool of " + std::to_string(pool.size()) +
                            " objects)");
}

// Pool by split ("out" games draw from the held-out objects) and a stable id.
inline GameSpec generate_game(const Dataset& dataset, const Pools& pools, Tier tier, Split split, std::uint64_t seed) {
  GameSpec g = sample_game(dataset, split == Split::Out ? pools.out : pools.train, DifficultyConfig::for_tier(tier), split, seed);
  g.id = to_string(tier) + "-" + to_string(split) + "-" + std::to_string(seed);
  return g;
}

}  // namespace twc::gamegen
