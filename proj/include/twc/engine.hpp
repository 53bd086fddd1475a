#pragma once

// POMDP surface over the world model: text observations, admissible action
// enumeration, command parsing and stepping.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "twc/error.hpp"
#include "twc/text.hpp"
#include "twc/world.hpp"

namespace twc::engine {

using world::ParsedAction;
using world::Verb;
using world::WorldState;

inline constexpr int kDefaultMaxSteps = 50;

struct Observation {
  std::string text;
  std::vector<std::string> tokens;
  std::string room;
  std::string feedback;
};

struct AdmissibleAction {
  ParsedAction action;
  std::string surface;
};

namespace detail {

inline std::string article(const std::string& name) {
  if (name.empty()) return "a";
  const char c = name.front();
  return (c == 'a' || c == 'e' || c == 'i' || c == 'o' || c == 'u') ? "an" : "a";
}

inline std::string listing(const WorldState& s, const std::vector<std::string>& ids) {
  if (ids.empty()) return "nothing";
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += (i + 1 == ids.size()) ? " and " : ", ";
    const std::string name = s.entity(ids[i]).display_name();
    out += article(name) + " " + name;
  }
  return out;
}

inline std::string capitalized(std::string s) {
  if (!s.empty()) s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  return s;
}

}  // namespace detail

// Feedback sentence for the action that produced `after` from `before`.
inline std::string describe_action(const WorldState& before, const ParsedAction& a, double reward,
                                   const WorldState& after, std::size_t goal_count) {
  std::string out;
  auto name = [&](const std::string& id) { return before.entity(id).display_name(); };
  switch (a.verb) {
    case Verb::Take:
      out = a.arg2.empty() ? "You pick up the " + name(a.arg1) + " from the floor."
                           : "You take the " + name(a.arg1) + " from the " + name(a.arg2) + ".";
      break;
    case Verb::Put: out = "You put the " + name(a.arg1) + " on the " + name(a.arg2) + "."; break;
    case Verb::Insert: out = "You put the " + name(a.arg1) + " into the " + name(a.arg2) + "."; break;
    case Verb::Go: out = "You go " + a.arg1 + "."; break;
    case Verb::Open: out = "You open the " + name(a.arg1) + "."; break;
    case Verb::Look: out = "You look around."; break;
    case Verb::Inventory: out = "You check what you are carrying."; break;
  }
  if (reward > 0.0) out += " Your score has gone up by one point.";
  if (after.achieved.size() == goal_count && goal_count > 0) out += " The house is all tidy!";
  return out;
}

inline const std::string kWelcome = "Welcome! Tidy up the house: put every object where it belongs.";

// Template text of the agent's current room, carried objects and the
// feedback of the last action (or the welcome line at t = 0).
inline Observation render_observation(const WorldState& s, const std::optional<std::string>& feedback = std::nullopt) {
  const world::Room& room = s.room(s.agent_room);
  std::string text = feedback.value_or(kWelcome);
  text += "\n-= " + detail::capitalized(room.name) + " =-\n";
  text += "You are in the " + room.name + ".";
  for (const auto& fid : room.fixtures) {
    const world::Entity& f = s.entity(fid);
    const std::string fname = f.display_name();
    if (f.kind == world::EntityKind::Supporter) {
      text += " On the " + fname + " you see " + detail::listing(s, s.contents(fid)) + ".";
    } else if (!f.open) {
      text += " The " + fname + " is closed.";
    } else {
      if (f.openable) text += " The " + fname + " is open.";
      text += " Inside the " + fname + " you see " + detail::listing(s, s.contents(fid)) + ".";
    }
  }
  if (auto floor = s.floor_objects(room.id); !floor.empty())
    text += " On the floor you see " + detail::listing(s, floor) + ".";
  for (const auto& [dir, to] : room.exits) text += " An exit leads " + dir + " to the " + s.room(to).name + ".";
  text += "\nYou are carrying " + detail::listing(s, s.inventory()) + ".";

  Observation obs;
  obs.tokens = text::tokenize(text);
  obs.text = std::move(text);
  obs.room = room.id;
  obs.feedback = feedback.value_or(kWelcome);
  return obs;
}

inline std::string surface(const WorldState& s, const ParsedAction& a) {
  auto name = [&](const std::string& id) { return s.entity(id).display_name(); };
  switch (a.verb) {
    case Verb::Take: return a.arg2.empty() ? "take " + name(a.arg1) : "take " + name(a.arg1) + " from " + name(a.arg2);
    case Verb::Put: return "put " + name(a.arg1) + " on " + name(a.arg2);
    case Verb::Insert: return "insert " + name(a.arg1) + " into " + name(a.arg2);
    case Verb::Go: return "go " + a.arg1;
    case Verb::Open: return "open " + name(a.arg1);
    case Verb::Look: return "look";
    case Verb::Inventory: return "inventory";
  }
  return "look";
}

// Every legal action, ordered by surface string.
inline std::vector<AdmissibleAction> admissible_actions(const WorldState& s, const std::vector<world::GoalTriple>& = {}) {
  std::vector<ParsedAction> acts;
  const world::Room& room = s.room(s.agent_room);
  for (const auto& [oid, p] : s.placement) {
    if (!s.object_reachable(oid)) continue;
    acts.push_back({Verb::Take, oid, p.kind == world::Placement::Kind::Fixture ? p.ref : std::string{}});
  }
  for (const auto& oid : s.inventory()) {
    for (const auto& fid : room.fixtures) {
      const world::Entity& f = s.entity(fid);
      if (!f.open) continue;
      acts.push_back({f.kind == world::EntityKind::Supporter ? Verb::Put : Verb::Insert, oid, fid});
    }
  }
  for (const auto& [dir, to] : room.exits) acts.push_back({Verb::Go, dir, {}});
  for (const auto& fid : room.fixtures) {
    const world::Entity& f = s.entity(fid);
    if (f.kind == world::EntityKind::Container && f.openable && !f.open) acts.push_back({Verb::Open, fid, {}});
  }
  acts.push_back({Verb::Look, {}, {}});
  acts.push_back({Verb::Inventory, {}, {}});

  std::vector<AdmissibleAction> out;
  out.reserve(acts.size());
  for (auto& a : acts) out.push_back({a, surface(s, a)});
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.surface < y.surface; });
  return out;
}

// ---------------------------------------------------------------------------
// free-text command parsing

namespace detail {

inline const std::vector<std::string> kArticles = {"the", "a", "an", "some"};

inline std::vector<std::string> command_words(const std::string& command) {
  std::vector<std::string> out;
  for (auto& tok : text::tokenize(command))
    if (!(tok.size() == 1 && text::is_punct(tok[0]))) out.push_back(tok);
  return out;
}

inline std::string phrase(const std::vector<std::string>& words, std::size_t from, std::size_t to) {
  std::vector<std::string> kept;
  for (std::size_t i = from; i < to; ++i) {
    if (kept.empty() && std::find(kArticles.begin(), kArticles.end(), words[i]) != kArticles.end()) continue;
    kept.push_back(words[i]);
  }
  return text::join(kept, " ");
}

// Entities the player can refer to: reachable and carried objects, and
// the fixtures of the current room.
inline std::vector<std::string> referable(const WorldState& s) {
  std::vector<std::string> out;
  for (const auto& [oid, p] : s.placement)
    if (s.object_reachable(oid) || s.carrying(oid)) out.push_back(oid);
  for (const auto& fid : s.room(s.agent_room).fixtures) out.push_back(fid);
  return out;
}

// Exact display-name match wins; otherwise a unique display name ending in
// the phrase. Used for longest-match binding ("dirty plate" over "plate").
inline std::string resolve(const WorldState& s, const std::string& ph) {
  if (ph.empty()) throw UnresolvedEntity("missing object name");
  const auto candidates = referable(s);
  for (const auto& id : candidates)
    if (text::lower(s.entity(id).display_name()) == ph) return id;
  std::vector<std::string> partial;
  for (const auto& id : candidates) {
    const std::string name = text::lower(s.entity(id).display_name());
    if (name.size() > ph.size() && name.ends_with(ph) && name[name.size() - ph.size() - 1] == ' ') partial.push_back(id);
  }
  if (partial.size() == 1) return partial.front();
  if (partial.empty()) throw UnresolvedEntity("you can't see any '" + ph + "' here");
  std::string names;
  for (const auto& id : partial) names += (names.empty() ? "" : ", ") + s.entity(id).display_name();
  throw AmbiguousEntity("which '" + ph + "' do you mean: " + names + "?");
}

// Splits words[1..] at a preposition into two resolvable phrases.
inline std::optional<std::pair<std::string, std::string>> resolve_pair(const WorldState& s,
                                                                       const std::vector<std::string>& words,
                                                                       const std::vector<std::string>& preps,
                                                                       std::string* used_prep) {
  std::optional<Error> first_error;
  for (std::size_t i = 2; i + 1 < words.size(); ++i) {
    if (std::find(preps.begin(), preps.end(), words[i]) == preps.end()) continue;
    try {
      auto a = resolve(s, phrase(words, 1, i));
      auto b = resolve(s, phrase(words, i + 1, words.size()));
      if (used_prep) *used_prep = words[i];
      return std::make_pair(a, b);
    } catch (const Error& e) {
      if (!first_error) first_error = e;
    }
  }
  if (first_error) {
    if (first_error->kind() == "AmbiguousEntity") throw AmbiguousEntity(first_error->what());
    throw UnresolvedEntity(first_error->what());
  }
  return std::nullopt;
}

inline std::optional<std::string> direction_word(const std::string& w) {
  if (world::is_direction(w)) return w;
  if (w == "n") return "north";
  if (w == "s") return "south";
  if (w == "e") return "east";
  if (w == "w") return "west";
  return std::nullopt;
}

}  // namespace detail

// Case-insensitive parse of a player command against the current state.
// The result is not necessarily legal; step() rejects illegal actions.
inline ParsedAction parse(const std::string& command, const WorldState& s) {
  auto words = detail::command_words(command);
  if (words.empty()) throw UnknownVerb("empty command");
  std::string verb = words.front();
  if (verb == "pick" && words.size() > 1 && words[1] == "up") {
    words.erase(words.begin() + 1);
    verb = "take";
  }
  if (verb == "l" || verb == "look") return {Verb::Look, {}, {}};
  if (verb == "i" || verb == "inv" || verb == "inventory") return {Verb::Inventory, {}, {}};
  if (auto d = detail::direction_word(verb); d && words.size() == 1) return {Verb::Go, *d, {}};
  if (verb == "go" || verb == "walk") {
    if (words.size() < 2) throw UnresolvedEntity("go where?");
    auto d = detail::direction_word(words[1]);
    if (!d) throw UnresolvedEntity("unknown direction '" + words[1] + "'");
    return {Verb::Go, *d, {}};
  }
  if (verb == "open") return {Verb::Open, detail::resolve(s, detail::phrase(words, 1, words.size())), {}};
  if (verb == "take" || verb == "get") {
    if (auto pr = detail::resolve_pair(s, words, {"from", "off"}, nullptr)) return {Verb::Take, pr->first, pr->second};
    const std::string oid = detail::resolve(s, detail::phrase(words, 1, words.size()));
    const auto it = s.placement.find(oid);
    std::string from;
    if (it != s.placement.end() && it->second.kind == world::Placement::Kind::Fixture) from = it->second.ref;
    return {Verb::Take, oid, from};
  }
  if (verb == "put" || verb == "place" || verb == "insert") {
    std::string prep;
    auto pr = detail::resolve_pair(s, words, {"on", "onto", "in", "into", "inside"}, &prep);
    if (!pr) throw UnresolvedEntity("put what where?");
    const bool into = verb == "insert" || prep == "in" || prep == "into" || prep == "inside";
    return {into ? Verb::Insert : Verb::Put, pr->first, pr->second};
  }
  throw UnknownVerb("I don't know how to '" + verb + "'");
}

// ---------------------------------------------------------------------------
// stepping

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  WorldState state;
};

inline StepResult step(const WorldState& s, const ParsedAction& a, const std::vector<world::GoalTriple>& goals,
                       int max_steps = kDefaultMaxSteps) {
  if (world::is_terminal(s, goals, max_steps)) throw AlreadyTerminal("the episode is over");
  auto [next, reward] = world::apply(s, a, goals);
  StepResult r;
  r.observation = render_observation(next, describe_action(s, a, reward, next, goals.size()));
  r.reward = reward;
  r.done = world::is_terminal(next, goals, max_steps);
  r.state = std::move(next);
  return r;
}

// One JSON-lines transcript record.
inline nlohmann::json transcript_record(int t, const std::string& obs, const std::vector<std::string>& admissible,
                                        const std::string& action, double reward, int score, bool done) {
  return {{"t", t}, {"obs", obs}, {"admissible", admissible}, {"action", action},
          {"reward", reward}, {"score", score}, {"done", done}};
}

}  // namespace twc::engine
