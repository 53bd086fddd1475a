#pragma once

// Hand-built worlds shared by the unit and acceptance suites.

#include <string>
#include <vector>

#include "twc/gamegen.hpp"
#include "twc/world.hpp"

namespace twc::fx {

inline world::Entity fixture(const std::string& id, const std::string& name, world::EntityKind kind,
                             bool openable = false) {
  world::Entity e;
  e.id = id;
  e.base_name = name;
  e.kind = kind;
  e.openable = openable;
  e.open = true;
  return e;
}

inline world::Entity object(const std::string& id, const std::string& name, std::vector<std::string> attrs = {}) {
  world::Entity e;
  e.id = id;
  e.base_name = name;
  e.attributes = std::move(attrs);
  e.kind = world::EntityKind::Object;
  return e;
}

inline void add_room(world::WorldState& s, const std::string& id, const std::string& name,
                     std::vector<world::Entity> fixtures) {
  world::Room r;
  r.id = id;
  r.name = name;
  for (auto& f : fixtures) {
    r.fixtures.push_back(f.id);
    s.entities[f.id] = std::move(f);
  }
  s.rooms[id] = std::move(r);
}

inline void connect(world::WorldState& s, const std::string& a, const std::string& dir, const std::string& b) {
  s.rooms[a].exits[dir] = b;
  s.rooms[b].exits[world::opposite(dir)] = a;
}

inline void place(world::WorldState& s, world::Entity o, world::Placement p) {
  s.placement[o.id] = std::move(p);
  s.entities[o.id] = std::move(o);
}

// Kitchen with an apple on the table and a refrigerator; goal apple -> fridge.
inline gamegen::GameSpec kitchen_apple() {
  using world::EntityKind;
  gamegen::GameSpec g;
  g.id = "kitchen_apple";
  g.seed = 1;
  auto& s = g.initial;
  add_room(s, "kitchen", "kitchen",
           {fixture("table", "table", EntityKind::Supporter),
            fixture("refrigerator", "refrigerator", EntityKind::Container, true),
            fixture("counter", "counter", EntityKind::Supporter)});
  s.agent_room = "kitchen";
  place(s, object("apple", "apple"), world::Placement::on("table"));
  g.goals = {{"apple", "kitchen", "refrigerator"}};
  return g;
}

// Two rooms shaped like the hard walkthrough: start in the backyard, milk is
// carried, five kitchen objects belong in the kitchen, and a wet skirt lying
// in the kitchen belongs on the backyard clothesline. Optimal: 15 steps.
inline gamegen::GameSpec hard_walkthrough() {
  using world::EntityKind;
  using world::Placement;
  gamegen::GameSpec g;
  g.id = "hard_walkthrough";
  g.seed = 2;
  g.tier = gamegen::Tier::Hard;
  auto& s = g.initial;
  add_room(s, "backyard", "backyard",
           {fixture("clothesline", "clothesline", EntityKind::Supporter),
            fixture("patio_table", "patio table", EntityKind::Supporter)});
  add_room(s, "kitchen", "kitchen",
           {fixture("refrigerator", "refrigerator", EntityKind::Container, true),
            fixture("kitchen_cupboard", "kitchen cupboard", EntityKind::Container, true),
            fixture("cutlery_drawer", "cutlery drawer", EntityKind::Container, true),
            fixture("counter", "counter", EntityKind::Supporter),
            fixture("dining_table", "dining table", EntityKind::Supporter)});
  connect(s, "backyard", "west", "kitchen");
  s.agent_room = "backyard";
  place(s, object("milk", "milk"), Placement::carried());
  place(s, object("wet_azure_skirt", "skirt", {"wet", "azure"}), Placement::on("dining_table"));
  place(s, object("red_apple", "apple", {"red"}), Placement::on("dining_table"));
  place(s, object("clean_plate", "plate", {"clean"}), Placement::on("counter"));
  place(s, object("fork", "fork"), Placement::on("dining_table"));
  place(s, object("kettle", "kettle"), Placement::floor("kitchen"));
  place(s, object("butter", "butter"), Placement::on("counter"));
  g.goals = {{"milk", "kitchen", "refrigerator"},        {"wet_azure_skirt", "backyard", "clothesline"},
             {"red_apple", "kitchen", "refrigerator"},   {"clean_plate", "kitchen", "kitchen_cupboard"},
             {"fork", "kitchen", "cutlery_drawer"},      {"kettle", "kitchen", "counter"},
             {"butter", "kitchen", "refrigerator"}};
  return g;
}

// Medium shape: three corridor objects, one room, two caps sharing a goal.
inline gamegen::GameSpec medium_corridor() {
  using world::EntityKind;
  using world::Placement;
  gamegen::GameSpec g;
  g.id = "medium_corridor";
  g.seed = 3;
  g.tier = gamegen::Tier::Medium;
  auto& s = g.initial;
  add_room(s, "corridor", "corridor",
           {fixture("shoe_cabinet", "shoe cabinet", EntityKind::Container, true),
            fixture("hat_rack", "hat rack", EntityKind::Supporter),
            fixture("key_holder", "key holder", EntityKind::Supporter),
            fixture("umbrella_stand", "umbrella stand", EntityKind::Container),
            fixture("coat_hanger", "coat hanger", EntityKind::Supporter)});
  s.agent_room = "corridor";
  place(s, object("climbing_shoes", "shoes", {"climbing"}), Placement::on("key_holder"));
  place(s, object("brown_cap", "cap", {"brown"}), Placement::on("coat_hanger"));
  place(s, object("white_cap", "cap", {"white"}), Placement::floor("corridor"));
  g.goals = {{"climbing_shoes", "corridor", "shoe_cabinet"},
             {"brown_cap", "corridor", "hat_rack"},
             {"white_cap", "corridor", "hat_rack"}};
  return g;
}

inline std::string data_path(const std::string& file) { return std::string(TWC_DATA_DIR) + "/" + file; }

}  // namespace twc::fx
