#include <gtest/gtest.h>

#include "fixtures.hpp"
#include "twc/engine.hpp"
#include "twc/rng.hpp"
#include "twc/world.hpp"

using namespace twc;
using world::ParsedAction;
using world::Placement;
using world::Verb;

TEST(World, DisplayNameJoinsAttributes) {
  auto e = fx::object("dirty_plate", "plate", {"dirty"});
  EXPECT_EQ(e.display_name(), "dirty plate");
  EXPECT_EQ(fx::object("cap", "cap").display_name(), "cap");
}

TEST(World, InsertIntoGoalLocationEarnsOnePoint) {
  auto g = fx::kitchen_apple();
  auto s = g.initial;
  s.placement["apple"] = Placement::carried();
  auto [next, reward] = world::apply(s, {Verb::Insert, "apple", "refrigerator"}, g.goals);
  EXPECT_DOUBLE_EQ(reward, 1.0);
  EXPECT_EQ(next.score, 1);
  EXPECT_EQ(next.step, 1);
  EXPECT_TRUE(next.achieved.contains(0));
}

TEST(World, NonGoalPlacementEarnsNothing) {
  auto g = fx::kitchen_apple();
  auto s = g.initial;
  s.placement["apple"] = Placement::carried();
  auto [next, reward] = world::apply(s, {Verb::Put, "apple", "table"}, g.goals);
  EXPECT_DOUBLE_EQ(reward, 0.0);
  EXPECT_EQ(next.score, 0);
}

TEST(World, TakeThenPutBackRestoresPlacement) {
  auto g = fx::kitchen_apple();
  auto [s1, r1] = world::apply(g.initial, {Verb::Take, "apple", "table"}, g.goals);
  auto [s2, r2] = world::apply(s1, {Verb::Put, "apple", "table"}, g.goals);
  EXPECT_EQ(s2.placement, g.initial.placement);
  EXPECT_EQ(s2.step, g.initial.step + 2);
  auto expected = g.initial;
  expected.step += 2;
  EXPECT_EQ(s2, expected);
}

TEST(World, AchievedGoalsAreNeverRevoked) {
  auto g = fx::kitchen_apple();
  auto s = g.initial;
  s.placement["apple"] = Placement::carried();
  auto [s1, r1] = world::apply(s, {Verb::Insert, "apple", "refrigerator"}, g.goals);
  auto [s2, r2] = world::apply(s1, {Verb::Take, "apple", "refrigerator"}, g.goals);
  auto [s3, r3] = world::apply(s2, {Verb::Insert, "apple", "refrigerator"}, g.goals);
  EXPECT_EQ(s2.score, 1);
  EXPECT_DOUBLE_EQ(r3, 0.0);  // reward granted once
  EXPECT_EQ(s3.score, 1);
}

TEST(World, InadmissibleActionsThrow) {
  auto g = fx::kitchen_apple();
  EXPECT_THROW(world::apply(g.initial, {Verb::Put, "apple", "table"}, g.goals), InadmissibleAction);
  EXPECT_THROW(world::apply(g.initial, {Verb::Go, "north", ""}, g.goals), InadmissibleAction);
  EXPECT_THROW(world::apply(g.initial, {Verb::Take, "apple", "counter"}, g.goals), InadmissibleAction);
  auto s = g.initial;
  s.placement["apple"] = Placement::carried();
  EXPECT_THROW(world::apply(s, {Verb::Put, "apple", "refrigerator"}, g.goals), InadmissibleAction);
  EXPECT_THROW(world::apply(s, {Verb::Insert, "apple", "table"}, g.goals), InadmissibleAction);
}

TEST(World, ClosedContainerHidesContentsUntilOpened) {
  auto g = fx::kitchen_apple();
  auto s = g.initial;
  s.entities["refrigerator"].open = false;
  s.placement["apple"] = Placement::on("refrigerator");
  EXPECT_FALSE(s.object_reachable("apple"));
  EXPECT_THROW(world::apply(s, {Verb::Take, "apple", "refrigerator"}, g.goals), InadmissibleAction);
  auto [opened, r] = world::apply(s, {Verb::Open, "refrigerator", ""}, g.goals);
  EXPECT_TRUE(opened.object_reachable("apple"));
  EXPECT_THROW(world::apply(opened, {Verb::Open, "refrigerator", ""}, g.goals), InadmissibleAction);
}

TEST(World, TerminalConditions) {
  auto g = fx::hard_walkthrough();
  auto s = g.initial;
  EXPECT_FALSE(world::is_terminal(s, g.goals, 50));
  s.step = 50;
  EXPECT_TRUE(world::is_terminal(s, g.goals, 50));

  auto m = fx::medium_corridor();
  auto t = m.initial;
  t.step = 11;
  t.achieved = {0, 1, 2};
  t.score = 3;
  EXPECT_TRUE(world::is_terminal(t, m.goals, 50));
  t.achieved = {0};
  t.score = 1;
  t.step = 50;
  EXPECT_TRUE(world::is_terminal(t, m.goals, 50));

  auto e = fx::kitchen_apple();
  EXPECT_FALSE(world::is_terminal(e.initial, e.goals, 50));
}

// Random admissible walks: replay determinism, monotone score, reward sum
// equals |achieved| and never exceeds |goals|.
TEST(World, RandomWalkProperties) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    auto g = (seed % 2) ? fx::hard_walkthrough() : fx::medium_corridor();
    Rng rng(seed);
    std::vector<ParsedAction> actions;
    std::vector<double> rewards;
    auto s = g.initial;
    double total = 0.0;
    int last_score = 0;
    while (!world::is_terminal(s, g.goals, 50)) {
      auto adm = engine::admissible_actions(s, g.goals);
      const auto& a = adm[rng.below(adm.size())].action;
      auto [next, r] = world::apply(s, a, g.goals);
      actions.push_back(a);
      rewards.push_back(r);
      total += r;
      ASSERT_GE(next.score, last_score);
      ASSERT_EQ(next.score, static_cast<int>(next.achieved.size()));
      ASSERT_LE(next.score, static_cast<int>(g.goals.size()));
      ASSERT_EQ(next.placement.size(), g.initial.placement.size());
      last_score = next.score;
      s = std::move(next);
    }
    EXPECT_DOUBLE_EQ(total, static_cast<double>(s.achieved.size()));

    auto replay = g.initial;
    for (std::size_t i = 0; i < actions.size(); ++i) {
      auto [next, r] = world::apply(replay, actions[i], g.goals);
      ASSERT_DOUBLE_EQ(r, rewards[i]);
      replay = std::move(next);
    }
    EXPECT_EQ(replay, s);
  }
}
