#pragma once

// House world domain model: entities, rooms, placements and the legal
// transitions on them. WorldState is a plain value; apply() is pure.

#include <algorithm>
#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "twc/error.hpp"

namespace twc::world {

enum class EntityKind { Object, Supporter, Container, Door, Room };

inline std::string_view to_string(EntityKind k) {
  switch (k) {
    case EntityKind::Object: return "object";
    case EntityKind::Supporter: return "supporter";
    case EntityKind::Container: return "container";
    case EntityKind::Door: return "door";
    case EntityKind::Room: return "room";
  }
  return "object";
}

inline std::optional<EntityKind> entity_kind_from(std::string_view s) {
  if (s == "object") return EntityKind::Object;
  if (s == "supporter") return EntityKind::Supporter;
  if (s == "container") return EntityKind::Container;
  if (s == "door") return EntityKind::Door;
  if (s == "room") return EntityKind::Room;
  return std::nullopt;
}

inline constexpr std::array<std::string_view, 4> kDirections = {"north", "south", "east", "west"};

inline std::string opposite(std::string_view dir) {
  if (dir == "north") return "south";
  if (dir == "south") return "north";
  if (dir == "east") return "west";
  if (dir == "west") return "east";
  return {};
}

inline bool is_direction(std::string_view s) {
  return std::find(kDirections.begin(), kDirections.end(), s) != kDirections.end();
}

struct Entity {
  std::string id;
  std::string base_name;
  std::vector<std::string> attributes;
  EntityKind kind = EntityKind::Object;
  bool openable = false;
  bool open = true;

  std::string display_name() const {
    std::string out;
    for (const auto& a : attributes) {
      out += a;
      out += ' ';
    }
    out += base_name;
    return out;
  }

  bool is_fixture() const { return kind == EntityKind::Supporter || kind == EntityKind::Container; }

  friend bool operator==(const Entity&, const Entity&) = default;
};

struct Room {
  std::string id;
  std::string name;
  std::map<std::string, std::string> exits;  // direction -> room id
  std::vector<std::string> fixtures;         // supporter / container ids

  friend bool operator==(const Room&, const Room&) = default;
};

struct GoalTriple {
  std::string object_id;
  std::string room_id;
  std::string location_id;

  friend bool operator==(const GoalTriple&, const GoalTriple&) = default;
};

struct Placement {
  enum class Kind { Fixture, Floor, Inventory };
  Kind kind = Kind::Inventory;
  std::string ref;  // fixture id for Fixture, room id for Floor, empty for Inventory

  static Placement on(std::string fixture) { return {Kind::Fixture, std::move(fixture)}; }
  static Placement floor(std::string room) { return {Kind::Floor, std::move(room)}; }
  static Placement carried() { return {Kind::Inventory, {}}; }

  friend bool operator==(const Placement&, const Placement&) = default;
};

enum class Verb { Take, Put, Insert, Go, Open, Look, Inventory };

inline std::string_view to_string(Verb v) {
  switch (v) {
    case Verb::Take: return "take";
    case Verb::Put: return "put";
    case Verb::Insert: return "insert";
    case Verb::Go: return "go";
    case Verb::Open: return "open";
    case Verb::Look: return "look";
    case Verb::Inventory: return "inventory";
  }
  return "look";
}

// arg1: entity id or direction; arg2: fixture id (take-from, put, insert).
struct ParsedAction {
  Verb verb = Verb::Look;
  std::string arg1;
  std::string arg2;

  friend bool operator==(const ParsedAction&, const ParsedAction&) = default;
};

struct WorldState {
  std::map<std::string, Room> rooms;
  std::map<std::string, Entity> entities;
  std::map<std::string, Placement> placement;  // object id -> placement
  std::string agent_room;
  int step = 0;
  std::set<std::size_t> achieved;  // goal indices
  int score = 0;

  friend bool operator==(const WorldState&, const WorldState&) = default;

  const Entity& entity(const std::string& id) const {
    auto it = entities.find(id);
    if (it == entities.end()) throw InadmissibleAction("unknown entity '" + id + "'");
    return it->second;
  }

  const Entity* find_entity(const std::string& id) const {
    auto it = entities.find(id);
    return it == entities.end() ? nullptr : &it->second;
  }

  const Room& room(const std::string& id) const {
    auto it = rooms.find(id);
    if (it == rooms.end()) throw InadmissibleAction("unknown room '" + id + "'");
    return it->second;
  }

  // Room holding a fixture, or empty if the id is not a fixture of any room.
  std::string fixture_room(const std::string& fixture_id) const {
    for (const auto& [rid, r] : rooms)
      if (std::find(r.fixtures.begin(), r.fixtures.end(), fixture_id) != r.fixtures.end()) return rid;
    return {};
  }

  std::vector<std::string> inventory() const {
    std::vector<std::string> out;
    for (const auto& [oid, p] : placement)
      if (p.kind == Placement::Kind::Inventory) out.push_back(oid);
    return out;
  }

  std::vector<std::string> contents(const std::string& fixture_id) const {
    std::vector<std::string> out;
    for (const auto& [oid, p] : placement)
      if (p.kind == Placement::Kind::Fixture && p.ref == fixture_id) out.push_back(oid);
    return out;
  }

  std::vector<std::string> floor_objects(const std::string& room_id) const {
    std::vector<std::string> out;
    for (const auto& [oid, p] : placement)
      if (p.kind == Placement::Kind::Floor && p.ref == room_id) out.push_back(oid);
    return out;
  }

  // Objects the agent can reach in its current room: on/in open fixtures
  // of the room, or on the room floor.
  bool object_reachable(const std::string& oid) const {
    auto it = placement.find(oid);
    if (it == placement.end()) return false;
    const Placement& p = it->second;
    if (p.kind == Placement::Kind::Floor) return p.ref == agent_room;
    if (p.kind == Placement::Kind::Fixture) {
      const Entity* f = find_entity(p.ref);
      return f && f->open && fixture_room(p.ref) == agent_room;
    }
    return false;
  }

  bool carrying(const std::string& oid) const {
    auto it = placement.find(oid);
    return it != placement.end() && it->second.kind == Placement::Kind::Inventory;
  }
};

// Precondition check shared by apply() and the engine's action enumeration.
// Returns an empty string when legal, else the reason.
inline std::string illegal_reason(const WorldState& s, const ParsedAction& a) {
  const Room& here = s.room(s.agent_room);
  auto fixture_here = [&](const std::string& fid) {
    return std::find(here.fixtures.begin(), here.fixtures.end(), fid) != here.fixtures.end();
  };
  switch (a.verb) {
    case Verb::Look:
    case Verb::Inventory:
      return {};
    case Verb::Go:
      if (!here.exits.contains(a.arg1)) return "no exit " + a.arg1;
      return {};
    case Verb::Open: {
      const Entity* f = s.find_entity(a.arg1);
      if (!f || f->kind != EntityKind::Container || !fixture_here(a.arg1)) return "nothing to open";
      if (!f->openable || f->open) return "already open";
      return {};
    }
    case Verb::Take: {
      const Entity* o = s.find_entity(a.arg1);
      if (!o || o->kind != EntityKind::Object) return "not an object";
      if (!s.object_reachable(a.arg1)) return "object not reachable";
      const Placement& p = s.placement.at(a.arg1);
      if (p.kind == Placement::Kind::Fixture && p.ref != a.arg2) return "object is not on/in " + a.arg2;
      if (p.kind == Placement::Kind::Floor && !a.arg2.empty()) return "object is on the floor";
      return {};
    }
    case Verb::Put:
    case Verb::Insert: {
      if (!s.carrying(a.arg1)) return "not carrying " + a.arg1;
      const Entity* f = s.find_entity(a.arg2);
      if (!f || !fixture_here(a.arg2)) return "no such fixture here";
      if (a.verb == Verb::Put && f->kind != EntityKind::Supporter) return "not a supporter";
      if (a.verb == Verb::Insert && f->kind != EntityKind::Container) return "not a container";
      if (!f->open) return "container is closed";
      return {};
    }
  }
  return "unknown verb";
}

// Successor state and reward. Reward +1 for the first placement of a goal
// object at its goal location; achieved goals are never revoked.
inline std::pair<WorldState, double> apply(const WorldState& state, const ParsedAction& action,
                                           const std::vector<GoalTriple>& goals) {
  if (auto why = illegal_reason(state, action); !why.empty())
    throw InadmissibleAction(std::string(to_string(action.verb)) + " " + action.arg1 +
                             (action.arg2.empty() ? "" : " " + action.arg2) + ": " + why);
  WorldState next = state;
  next.step += 1;
  double reward = 0.0;
  switch (action.verb) {
    case Verb::Look:
    case Verb::Inventory:
      break;
    case Verb::Go:
      next.agent_room = state.room(state.agent_room).exits.at(action.arg1);
      break;
    case Verb::Open:
      next.entities.at(action.arg1).open = true;
      break;
    case Verb::Take:
      next.placement[action.arg1] = Placement::carried();
      break;
    case Verb::Put:
    case Verb::Insert:
      next.placement[action.arg1] = Placement::on(action.arg2);
      for (std::size_t g = 0; g < goals.size(); ++g) {
        if (goals[g].object_id == action.arg1 && goals[g].location_id == action.arg2 &&
            !next.achieved.contains(g)) {
          next.achieved.insert(g);
          reward += 1.0;
        }
      }
      next.score = static_cast<int>(next.achieved.size());
      break;
  }
  return {std::move(next), reward};
}

inline bool is_terminal(const WorldState& state, const std::vector<GoalTriple>& goals, int max_steps) {
  return state.achieved.size() == goals.size() || state.step >= max_steps;
}

inline bool goal_satisfied_now(const WorldState& s, const GoalTriple& g) {
  auto it = s.placement.find(g.object_id);
  return it != s.placement.end() && it->second.kind == Placement::Kind::Fixture &&
         it->second.ref == g.location_id;
}

}  // namespace twc::world
