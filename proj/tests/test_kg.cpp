#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "twc/engine.hpp"
#include "twc/kg.hpp"
#include "twc/rng.hpp"

using namespace twc;
using namespace twc::kg;

namespace {

ConceptGraph graph_of(const std::string& tsv) {
  std::istringstream in(tsv);
  return parse_tsv(in);
}

const ConceptGraph& mini() {
  static const ConceptGraph g = load_graph(fx::data_path("conceptnet_mini.tsv"));
  return g;
}

const gamegen::Dataset& dataset() {
  static const auto d = gamegen::load_dataset(fx::data_path("twc_dataset.json"));
  return d;
}

// Exhaustive oracle: every contiguous span of the whole token sequence whose
// tokens are all non-stopwords and whose joined form is a node, minus spans
// strictly inside a longer matching span.
std::set<std::string> oracle_link(const std::vector<std::string>& tokens, const ConceptGraph& g) {
  std::vector<std::string> low;
  for (const auto& t : tokens) low.push_back(text::lower(t));
  std::vector<std::tuple<std::size_t, std::size_t, std::string>> spans;
  for (std::size_t b = 0; b < low.size(); ++b) {
    for (std::size_t e = b + 1; e <= low.size(); ++e) {
      bool clean = true;
      std::string joined;
      for (std::size_t k = b; k < e; ++k) {
        clean = clean && !is_stopword(low[k]);
        joined += (k > b ? "_" : "") + low[k];
      }
      if (clean && g.has_node(joined)) spans.emplace_back(b, e, joined);
    }
  }
  std::set<std::string> out;
  for (const auto& [b, e, c] : spans) {
    bool inside = false;
    for (const auto& [b2, e2, c2] : spans) inside = inside || (b2 <= b && e <= e2 && e2 - b2 > e - b);
    if (!inside) out.insert(c);
  }
  return out;
}

EntitySet random_entities(Rng& rng, const ConceptGraph& g) {
  EntitySet E;
  const std::size_t n = 1 + rng.below(12);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = g.nodes()[rng.below(g.node_count())];
    E.add(c, static_cast<std::uint8_t>(1 + rng.below(3)));
  }
  return E;
}

}  // namespace

TEST(ConceptGraph, LoadsDeduplicatesAndIndexesBothDirections) {
  auto g = graph_of("# comment\napple\tatLocation\trefrigerator\n\nApple\tatLocation\tRefrigerator\nice cream\tatLocation\tfreezer\n");
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_TRUE(g.has_node("ice_cream"));
  EXPECT_EQ(g.neighbors("refrigerator"), std::vector<std::string>{"apple"});
  EXPECT_EQ(g.neighbors("apple"), std::vector<std::string>{"refrigerator"});
  EXPECT_TRUE(g.connected("refrigerator", "apple"));
  for (const auto& e : g.edges()) {
    EXPECT_TRUE(g.has_node(e.head));
    EXPECT_TRUE(g.has_node(e.tail));
  }
  EXPECT_THROW(graph_of("apple\trefrigerator\n"), InvalidDataset);
}

TEST(ConceptGraph, ConceptNetAssertionDump) {
  std::istringstream in(
      "/a/[/r/AtLocation/,/c/en/apple/n/,/c/en/refrigerator/]\t/r/AtLocation\t/c/en/apple/n\t/c/en/refrigerator\t{\"weight\": 2.0}\n"
      "/a/x\t/r/RelatedTo\t/c/fr/pomme\t/c/en/apple\t{}\n"
      "/a/y\t/r/RelatedTo\t/c/en/ice_cream\t/c/en/cold\t{}\n");
  auto g = parse_conceptnet_csv(in);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_TRUE(g.has_edge({"apple", "atLocation", "refrigerator"}));
  EXPECT_TRUE(g.has_edge({"ice_cream", "relatedTo", "cold"}));
  EXPECT_FALSE(g.has_node("pomme"));
}

TEST(ConceptGraph, BundledGraphLoads) {
  EXPECT_GT(mini().edge_count(), 200u);
  EXPECT_TRUE(mini().has_edge({"apple", "atLocation", "refrigerator"}));
  EXPECT_TRUE(mini().has_edge({"cap", "relatedTo", "head"}));
  EXPECT_TRUE(mini().has_edge({"hat", "atLocation", "hat_rack"}));
}

TEST(Normalize, Idempotent) {
  Rng rng(9);
  const std::string alphabet = "aB _\tZ-x";
  for (int i = 0; i < 500; ++i) {
    std::string s;
    for (std::size_t k = rng.below(12); k > 0; --k) s.push_back(alphabet[rng.below(alphabet.size())]);
    EXPECT_EQ(text::normalize(text::normalize(s)), text::normalize(s)) << s;
  }
  EXPECT_EQ(text::normalize("Hat  Rack"), "hat_rack");
}

TEST(Link, Examples) {
  auto g = graph_of("apple\trelatedTo\tfruit\ntable\trelatedTo\tfurniture\ndining table\trelatedTo\tfurniture\nplate\trelatedTo\tdish\n");
  auto a = link_tokens(text::tokenize("you see an apple on the table"), g);
  EXPECT_EQ(a, (std::vector<std::string>{"apple", "table"}));
  EXPECT_EQ(link_tokens(text::tokenize("dirty plate"), g), std::vector<std::string>{"plate"});
  EXPECT_EQ(link_tokens(text::tokenize("On the dining table you see a plate."), g),
            (std::vector<std::string>{"dining_table", "plate"}));
  EXPECT_TRUE(link_tokens({}, g).empty());
}

TEST(Link, MatchesExhaustiveOracleOnRenderedObservations) {
  auto pools = gamegen::split_dataset(dataset().objects, 2);
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto cfg = seed % 3 == 0 ? gamegen::DifficultyConfig::easy()
               : seed % 3 == 1 ? gamegen::DifficultyConfig::medium() : gamegen::DifficultyConfig::hard();
    auto game = gamegen::sample_game(dataset(), pools.train, cfg, gamegen::Split::Train, seed);
    auto s = game.initial;
    Rng rng(seed);
    for (int t = 0; t < 20 && !world::is_terminal(s, game.goals, 50); ++t) {
      auto obs = engine::render_observation(s);
      auto got = link_tokens(obs.tokens, mini());
      EXPECT_EQ(std::set<std::string>(got.begin(), got.end()), oracle_link(obs.tokens, mini())) << obs.text;
      auto adm = engine::admissible_actions(s);
      s = world::apply(s, adm[rng.below(adm.size())].action, game.goals).first;
    }
  }
}

TEST(Link, InsensitiveToCase) {
  auto tokens = text::split_words("On the Dining Table you see a RED Apple and a Dirty Plate");
  std::vector<std::string> lowered;
  for (const auto& t : tokens) lowered.push_back(text::lower(t));
  EXPECT_EQ(link_tokens(tokens, mini()), link_tokens(lowered, mini()));
  EXPECT_FALSE(link_tokens(tokens, mini()).empty());
}

TEST(Link, EntityNamesContainNoStopwords) {
  for (const auto& o : dataset().objects) {
    for (const auto& w : text::tokenize(o.name)) EXPECT_FALSE(is_stopword(w)) << o.name;
    for (const auto& group : o.attributes)
      for (const auto& a : group) EXPECT_FALSE(is_stopword(a)) << a;
  }
  for (const auto& f : dataset().fixtures)
    for (const auto& w : text::tokenize(f.name)) EXPECT_FALSE(is_stopword(w)) << f.name;
  for (const auto& r : dataset().rooms)
    for (const auto& w : text::tokenize(r)) EXPECT_FALSE(is_stopword(w)) << r;
}

TEST(Link, InventoryConceptsAreObjects) {
  auto E = link_entities(text::tokenize("On the table you see an apple. You are carrying a milk."), {"milk"}, mini());
  EXPECT_TRUE(E.is_object("milk"));
  EXPECT_FALSE(E.is_container("milk"));
  EXPECT_TRUE(E.is_container("apple"));
  EXPECT_TRUE(E.is_container("table"));
}

TEST(Extract, DirectExamples) {
  auto g = graph_of("apple\tatLocation\trefrigerator\ntable\trelatedTo\trefrigerator\n");
  EntitySet E;
  E.add("apple", kObject);
  E.add("refrigerator", kContainer);
  auto dc = extract_direct(E, g);
  EXPECT_EQ(dc.edges, (std::vector<Edge>{{"apple", "atLocation", "refrigerator"}}));
  EntitySet one;
  one.add("apple", kObject);
  auto single = extract_direct(one, g);
  EXPECT_EQ(single.nodes, std::vector<std::string>{"apple"});
  EXPECT_TRUE(single.edges.empty());
  EXPECT_TRUE(extract_direct(EntitySet{}, g).nodes.empty());
}

TEST(Extract, ContextualKeepsOnlyObjectContainerEdges) {
  auto g = graph_of("apple\tatLocation\trefrigerator\ntable\trelatedTo\trefrigerator\n");
  EntitySet E;
  E.add("apple", kObject);
  E.add("refrigerator", kContainer);
  E.add("table", kContainer);
  auto cdc = extract_contextual(E, g);
  EXPECT_EQ(cdc.edges, (std::vector<Edge>{{"apple", "atLocation", "refrigerator"}}));
  EXPECT_EQ(extract_direct(E, g).edges.size(), 2u);
  EntitySet objects;
  for (auto c : {"apple", "refrigerator", "table"}) objects.add(c, kObject);
  EXPECT_TRUE(extract_contextual(objects, g).edges.empty());
}

TEST(Extract, NeighborhoodAddsOneHop) {
  EntitySet E;
  E.add("cap", kObject);
  auto ng = extract_neighborhood(E, mini());
  EXPECT_TRUE(ng.has_node("head"));
  auto g = graph_of("apple\tatLocation\trefrigerator\n");
  EntitySet lonely;
  lonely.add("refrigerator", kContainer);
  g.add_node("sock");
  lonely.add("sock", kObject);
  EntitySet iso;
  iso.add("sock", kObject);
  EXPECT_EQ(extract_neighborhood(iso, g), extract_direct(iso, g));
}

// Brute-force filters over the full edge list.
TEST(Extract, InclusionsOnRandomEntitySets) {
  Rng rng(123);
  for (int trial = 0; trial < 500; ++trial) {
    auto E = random_entities(rng, mini());
    auto dc = extract_direct(E, mini());
    auto cdc = extract_contextual(E, mini());
    auto ng = extract_neighborhood(E, mini());
    std::set<Edge> want_dc, want_cdc, want_ng;
    for (const auto& e : mini().edges()) {
      if (E.contains(e.head) && E.contains(e.tail)) want_dc.insert(e);
      if (e.head != e.tail && ((E.is_object(e.head) && E.is_container(e.tail)) ||
                               (E.is_container(e.head) && E.is_object(e.tail))))
        want_cdc.insert(e);
      if (E.contains(e.head) || E.contains(e.tail)) want_ng.insert(e);
    }
    EXPECT_EQ(std::set<Edge>(dc.edges.begin(), dc.edges.end()), want_dc);
    EXPECT_EQ(std::set<Edge>(cdc.edges.begin(), cdc.edges.end()), want_cdc);
    EXPECT_EQ(std::set<Edge>(ng.edges.begin(), ng.edges.end()), want_ng);
    EXPECT_TRUE(cdc.edges_subset_of(dc));
    EXPECT_TRUE(dc.edges_subset_of(ng));
    EXPECT_TRUE(dc.nodes_subset_of(ng));
    EXPECT_GE(ng.nodes.size(), dc.nodes.size());
    for (const auto& e : ng.edges) EXPECT_TRUE(mini().has_edge(e));
  }
}

TEST(Manual, ShortestPathsWithinTwoHops) {
  auto chain = graph_of("cap\trelatedTo\thead\nhead\trelatedTo\that\nhat\tatLocation\that rack\ncap\trelatedTo\tbaseball\n");
  auto r = manual_subgraph({{"cap", "hat_rack"}}, chain);
  EXPECT_EQ(r.graph.nodes, (std::vector<std::string>{"cap", "head", "hat", "hat_rack"}));
  EXPECT_EQ(r.graph.edges.size(), 3u);
  EXPECT_TRUE(r.no_path.empty());

  auto direct = manual_subgraph({{"apple", "refrigerator"}}, mini());
  EXPECT_EQ(direct.graph.edges, (std::vector<Edge>{{"apple", "atLocation", "refrigerator"}}));

  auto none = manual_subgraph({{"cap", "sock"}}, chain);
  EXPECT_TRUE(none.graph.edges.empty());
  ASSERT_EQ(none.no_path.size(), 1u);

  // two shortest routes of length 2 are both kept
  auto diamond = graph_of("a\tr\tb\nb\tr\td\na\tr\tc\nc\tr\td\na\tr\te\n");
  auto both = manual_subgraph({{"a", "d"}}, diamond);
  EXPECT_EQ(both.graph.edges.size(), 4u);
  EXPECT_FALSE(both.graph.has_node("e"));
}

TEST(Dynamic, EvolveMonotoneAndBoundedByFull) {
  auto pools = gamegen::split_dataset(dataset().objects, 4);
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    auto cfg = seed % 2 ? gamegen::DifficultyConfig::hard() : gamegen::DifficultyConfig::medium();
    auto game = gamegen::sample_game(dataset(), pools.train, cfg, gamegen::Split::Train, seed);
    for (Strategy st : {Strategy::Direct, Strategy::Contextual, Strategy::Neighborhood}) {
      DynamicSubgraph evolve(&mini(), st, Mode::Evolve), full(&mini(), st, Mode::Full);
      evolve.reset(game.initial, game.goals);
      full.reset(game.initial, game.goals);
      const Subgraph full0 = full.current();
      auto s = game.initial;
      Rng rng(seed);
      Subgraph prev = evolve.current();
      std::optional<std::string> feedback;
      while (true) {
        auto obs = engine::render_observation(s, feedback);
        const auto& now = evolve.observe(obs.tokens, s);
        EXPECT_TRUE(prev.subset_of(now));
        EXPECT_EQ(full.observe(obs.tokens, s), full0);
        prev = now;
        if (world::is_terminal(s, game.goals, 50)) break;
        auto adm = engine::admissible_actions(s);
        auto r = engine::step(s, adm[rng.below(adm.size())].action, game.goals);
        feedback = r.observation.feedback;
        s = r.state;
      }
      EXPECT_TRUE(evolve.current().subset_of(full0)) << to_string(st) << " seed " << seed;
      EXPECT_TRUE(evolve.entities().subset_of(full_entities(game.initial, mini())));
    }
  }
}

TEST(Overlap, DegenerateGraphs) {
  auto goals_only = goals_only_graph(dataset());
  auto s = overlap_stats(dataset(), goals_only);
  EXPECT_DOUBLE_EQ(s.direct_pct, 100.0);
  EXPECT_DOUBLE_EQ(s.hop2_pct, 100.0);
  EXPECT_DOUBLE_EQ(s.hop3_pct, 100.0);
  auto e = overlap_stats(dataset(), ConceptGraph{});
  EXPECT_DOUBLE_EQ(e.direct_pct, 0.0);
  EXPECT_DOUBLE_EQ(e.unique_match_pct, 0.0);
  EXPECT_DOUBLE_EQ(e.hop2_pct, 0.0);
  EXPECT_DOUBLE_EQ(e.hop3_pct, 0.0);
}

TEST(Overlap, BundledDataMatchesGoldenReport) {
  auto got = to_json(overlap_stats(dataset(), mini()));
  std::ifstream in(std::string(TWC_GOLDEN_DIR) + "/overlap_stats.json");
  ASSERT_TRUE(in) << got.dump();
  EXPECT_EQ(got, nlohmann::json::parse(in)) << got.dump();
}
