// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any
// fails. `acceptance NAME...` runs a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../fixtures.hpp"
#include "../oracles.hpp"
#include "twc/agents.hpp"
#include "twc/embeddings.hpp"
#include "twc/engine.hpp"
#include "twc/gamegen.hpp"
#include "twc/kg.hpp"
#include "twc/train.hpp"

namespace fs = std::filesystem;
using namespace twc;

namespace {

// Tolerances and budgets.
constexpr int kGamesPerTier = 1000;
constexpr int kSubgraphEpisodes = 500;
constexpr double kGradTol = 1e-4;        // relative, central differences
constexpr double kSoftmaxSumTol = 1e-12;
constexpr double kOracleRelTol = 1e-13;  // loop oracles sum in a different order
constexpr double kMinFinalScore = 0.75;
constexpr double kMaxFinalSteps = 20.0;
constexpr int kLearningSeeds = 3;
constexpr double kBudgetOptimal = 60, kBudgetSubgraph = 60, kBudgetNumerics = 120, kBudgetLearning = 1800,
                 kBudgetRigged = 1800, kBudgetDeterminism = 600, kBudgetOverlap = 60;

struct Outcome {
  bool pass = false;
  std::string detail;
};

const gamegen::Dataset& bundled() {
  static const gamegen::Dataset d = gamegen::load_dataset(fx::data_path("twc_dataset.json"));
  return d;
}

const gamegen::Pools& pools() {
  static const gamegen::Pools p = gamegen::split_dataset(bundled().objects, 0);
  return p;
}

const kg::ConceptGraph& mini_kg() {
  static const kg::ConceptGraph g = kg::load_graph(fx::data_path("conceptnet_mini.tsv"));
  return g;
}

const Embeddings& words() {
  static const Embeddings e = Embeddings::load(fx::data_path("embeddings.txt"));
  return e;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

train::EpisodeLog oracle_episode(const gamegen::GameSpec& g) {
  agents::OracleAgent oracle;
  return train::run_episode(g, oracle, agents::ActMode::Greedy, 0);
}

// ---------------------------------------------------------------------------

Outcome optimal_steps() {
  std::ostringstream d;
  bool ok = true;
  for (auto tier : {gamegen::Tier::Easy, gamegen::Tier::Medium, gamegen::Tier::Hard}) {
    const auto games = train::game_set(bundled(), pools(), tier, gamegen::Split::Train, kGamesPerTier, 0);
    int matched = 0, twos = 0;
    for (const auto& g : games) {
      const int opt = gamegen::optimal_steps(g);
      auto log = oracle_episode(g);
      if (log.length() == opt && log.score() == static_cast<int>(g.goals.size())) ++matched;
      if (opt == 2) ++twos;
    }
    ok &= matched == kGamesPerTier;
    if (tier == gamegen::Tier::Easy) ok &= twos == kGamesPerTier;
    d << gamegen::to_string(tier) << " oracle " << matched << "/" << kGamesPerTier;
    if (tier == gamegen::Tier::Easy) d << " (optimal=2: " << twos << ")";
    d << "; ";
  }
  // medium: three objects to find in one room
  const auto medium = train::game_set(bundled(), pools(), gamegen::Tier::Medium, gamegen::Split::Train, kGamesPerTier, 0);
  int three = 0, six = 0;
  for (const auto& g : medium)
    if (g.objects_to_find() == 3 && g.objects_carried() == 0 && g.initial.rooms.size() == 1) {
      ++three;
      six += gamegen::optimal_steps(g) == 6 && oracle_episode(g).length() == 6;
    }
  ok &= three > 0 && six == three;
  d << "medium 3-find " << six << "/" << three << " = 6; ";
  const auto hard = fx::hard_walkthrough();
  const int h = gamegen::optimal_steps(hard), ho = oracle_episode(hard).length();
  ok &= h == 15 && ho == 15;
  d << "walkthrough optimal " << h << " oracle " << ho;
  return {ok, d.str()};
}

Outcome subgraph_algebra() {
  using kg::DynamicSubgraph;
  using kg::Mode;
  using kg::Strategy;
  const Strategy strategies[] = {Strategy::Direct, Strategy::Contextual, Strategy::Neighborhood};
  long checks = 0, violations = 0;
  std::string first;
  auto check = [&](bool cond, const std::string& what) {
    ++checks;
    if (!cond && violations++ == 0) first = what;
  };
  for (int ep = 0; ep < kSubgraphEpisodes; ++ep) {
    const auto tier = static_cast<gamegen::Tier>(ep % 3);
    const auto g = gamegen::generate_game(bundled(), pools(), tier, gamegen::Split::Train, train::derive_seed(7, ep));
    std::map<Strategy, DynamicSubgraph> evolve, full;
    std::map<Strategy, kg::Subgraph> prev;
    for (auto s : strategies) {
      evolve.emplace(s, DynamicSubgraph(&mini_kg(), s, Mode::Evolve));
      full.emplace(s, DynamicSubgraph(&mini_kg(), s, Mode::Full));
      evolve.at(s).reset(g.initial, g.goals);
      full.at(s).reset(g.initial, g.goals);
    }
    Rng rng(ep);
    world::WorldState st = g.initial;
    engine::Observation obs = engine::render_observation(st);
    for (;;) {
      std::map<Strategy, kg::Subgraph> cur;
      for (auto s : strategies) {
        cur[s] = evolve.at(s).observe(obs.tokens, st);
        full.at(s).observe(obs.tokens, st);
        if (prev.count(s)) check(prev[s].subset_of(cur[s]), "evolve not monotone");
      }
      const auto &dc = cur[Strategy::Direct], &cdc = cur[Strategy::Contextual], &ng = cur[Strategy::Neighborhood];
      check(cdc.edges_subset_of(dc), "CDC edges not in DC");
      check(dc.edges_subset_of(ng), "DC edges not in NG");
      check(dc.nodes_subset_of(ng), "DC nodes not in NG");
      prev = std::move(cur);
      if (world::is_terminal(st, g.goals, engine::kDefaultMaxSteps)) break;
      const auto acts = engine::admissible_actions(st, g.goals);
      auto r = engine::step(st, acts[rng.below(acts.size())].action, g.goals);
      st = std::move(r.state);
      obs = std::move(r.observation);
    }
    for (auto s : strategies) check(evolve.at(s).current().subset_of(full.at(s).current()), "evolve-final not in full");
  }
  std::ostringstream d;
  d << kSubgraphEpisodes << " episodes, " << checks << " inclusions, " << violations << " violations";
  if (violations) d << " (first: " << first << ")";
  return {violations == 0, d.str()};
}

Outcome numerics() {
  using oracle::Mat;
  using oracle::to_rows;
  using tensor::Tensor;
  std::ostringstream d;
  bool ok = true;

  double worst_grad = 0;
  std::string worst_op;
  for (auto& c : oracle::gradient_cases()) {
    const double e = tensor::max_gradient_error(c.f, c.params);
    if (e >= worst_grad) {
      worst_grad = e;
      worst_op = c.name;
    }
  }
  const auto e2e = oracle::end_to_end_gradient_error(mini_kg());
  ok &= worst_grad < kGradTol && e2e.error < kGradTol;
  d << "op grads " << oracle::gradient_cases().size() << " worst " << fmt("%.1e", worst_grad) << " (" << worst_op
    << "), agent loss " << fmt("%.1e", e2e.error) << "; ";

  Rng rng(2024);
  double worst_sum = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t r = 1 + rng.below(5), c = 1 + rng.below(40);
    const double scale = std::pow(10.0, rng.uniform(-2.0, 2.5));
    Tensor x = oracle::random_tensor({r, c}, rng, false, -scale, scale);
    Tensor y = tensor::softmax_rows(x);
    for (std::size_t i = 0; i < r; ++i) {
      double s = 0;
      for (std::size_t j = 0; j < c; ++j) s += y.at(i, j);
      worst_sum = std::max(worst_sum, std::abs(s - 1.0));
    }
  }
  ok &= worst_sum <= kSoftmaxSumTol;
  d << "softmax |sum-1| " << fmt("%.1e", worst_sum) << "; ";

  double worst_co = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6), N = 1 + rng.below(8), h = 2 + rng.below(6), out = 1 + rng.below(5);
    Tensor G = oracle::random_matrix(n, h, rng), O = oracle::random_matrix(N, h, rng);
    Tensor w0 = oracle::random_vector(3 * h, rng), W = oracle::random_matrix(4 * h, out, rng);
    Tensor Gf = agents::co_attend(G, O, w0, W);
    worst_co = std::max(worst_co, oracle::max_rel_diff(oracle::co_attend_loops(to_rows(G), to_rows(O), w0.data(), to_rows(W)), Gf));
  }
  ok &= worst_co <= kOracleRelTol;
  d << "co_attend " << fmt("%.1e", worst_co) << "; ";

  double worst_sel = 0;
  int argmax_mismatch = 0;
  for (int trial = 0; trial < 200; ++trial) {
    agents::AgentConfig cfg = oracle::tiny_config();
    cfg.hidden = 2 * (1 + rng.below(4));
    cfg.graph_dim = 1 + rng.below(4);
    cfg.mlp_hidden = 1 + rng.below(5);
    nn::ParameterStore ps(trial);
    auto p = agents::make_params(ps, cfg, 3, 3);
    for (auto& [_, t] : ps.all())
      for (auto& x : t.mutable_data()) x = rng.uniform(-1.0, 1.0);
    const std::size_t m = 1 + rng.below(8);
    Tensor s = oracle::random_vector(cfg.hidden, rng);
    Tensor gsum = oracle::random_matrix(m, cfg.graph_dim, rng), acts = oracle::random_matrix(m, cfg.hidden, rng);
    auto got = agents::policy_scores(s, gsum, acts, p);
    auto ref = oracle::policy_loops(s.data(), to_rows(gsum), to_rows(acts), p);
    const auto probs = tensor::softmax(got.logits).data();
    const auto ref_p = oracle::softmax_loop(ref.logits);
    for (std::size_t i = 0; i < m; ++i) {
      worst_sel = std::max(worst_sel, std::abs(got.logits[i] - ref.logits[i]) / std::max(1.0, std::abs(ref.logits[i])));
      worst_sel = std::max(worst_sel, std::abs(probs[i] - ref_p[i]));
    }
    worst_sel = std::max(worst_sel, std::abs(got.value.item() - ref.value) / std::max(1.0, std::abs(ref.value)));
    std::vector<engine::AdmissibleAction> names(m);
    for (std::size_t i = 0; i < m; ++i) names[i].surface = "a" + std::to_string(i);
    Rng unused(0);
    const auto pick = agents::choose(probs, names, agents::ActMode::Greedy, unused);
    argmax_mismatch += ref_p[pick] != *std::max_element(ref_p.begin(), ref_p.end());
  }
  ok &= worst_sel <= kOracleRelTol && argmax_mismatch == 0;
  d << "select_action " << fmt("%.1e", worst_sel) << ", greedy mismatches " << argmax_mismatch;
  return {ok, d.str()};
}

// Shared by the learning and rigged-KG criteria.
struct LearningRuns {
  std::vector<double> text_score, text_steps, cdc_score, cdc_steps;
  double text_seconds = 0, cdc_seconds = 0;
};

train::TrainConfig learning_config() {
  train::TrainConfig cfg;  // gamma 0.9, batch 1 episode, 100 episodes
  cfg.optimizer.kind = "adam";
  cfg.optimizer.lr = 1e-3;
  return cfg;
}

std::vector<gamegen::GameSpec> learning_games() {
  return train::game_set(bundled(), pools(), gamegen::Tier::Easy, gamegen::Split::Train, 5, 0);
}

// A graph holding exactly the goal edges of the given games.
kg::ConceptGraph rigged_graph(const std::vector<gamegen::GameSpec>& games) {
  kg::ConceptGraph g;
  for (const auto& game : games)
    for (const auto& [o, l] : kg::goal_concepts(game.initial, game.goals, mini_kg())) g.add_edge(o, "AtLocation", l);
  return g;
}

void train_runs(const std::string& kind, const train::Resources& res, std::vector<double>& score,
                std::vector<double>& steps) {
  const auto games = learning_games();
  const auto cfg = learning_config();
  for (int r = 0; r < kLearningSeeds; ++r) {
    const auto seed = train::derive_seed(0, 100 + static_cast<std::uint64_t>(r));
    auto agent = train::make_agent(kind, agents::AgentConfig{}, res, seed);
    auto run = train::train_agent(*agent, games, cfg, seed);
    score.push_back(run.final_score(cfg.final_window).mean);
    steps.push_back(run.final_steps(cfg.final_window).mean);
  }
}

std::string list(const std::vector<double>& xs) {
  std::string s = "[";
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? " " : "") + fmt("%.2f", xs[i]);
  return s + "]";
}

double mean(const std::vector<double>& xs) { return train::mean_std(xs).mean; }

LearningRuns& learning_runs() {
  static LearningRuns runs;
  return runs;
}

Outcome learning() {
  auto& L = learning_runs();
  const auto t0 = std::chrono::steady_clock::now();
  train_runs("text", {&words(), nullptr, nullptr}, L.text_score, L.text_steps);
  L.text_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double s = mean(L.text_score), t = mean(L.text_steps);
  std::ostringstream d;
  d << "text agent (hidden 300, adam lr 1e-3) final-10 score " << fmt("%.3f", s) << " " << list(L.text_score)
    << " >= " << kMinFinalScore << ", steps " << fmt("%.2f", t) << " " << list(L.text_steps) << " <= " << kMaxFinalSteps;
  return {s >= kMinFinalScore && t <= kMaxFinalSteps, d.str()};
}

Outcome rigged_kg() {
  auto& L = learning_runs();
  if (L.text_steps.empty()) train_runs("text", {&words(), nullptr, nullptr}, L.text_score, L.text_steps);
  const auto graph = rigged_graph(learning_games());
  train_runs("cdc", {&words(), &graph, nullptr}, L.cdc_score, L.cdc_steps);
  std::vector<double> diff;
  for (std::size_t i = 0; i < L.cdc_steps.size(); ++i) diff.push_back(L.text_steps[i] - L.cdc_steps[i]);
  const double margin = mean(diff);
  std::ostringstream d;
  d << graph.edges().size() << " goal edges; cdc steps " << list(L.cdc_steps) << " vs text " << list(L.text_steps)
    << ", paired mean margin " << fmt("%.2f", margin) << " >= 0";
  return {margin >= 0.0, d.str()};
}

// ---------------------------------------------------------------------------

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> out;
  if (!fs::exists(dir)) return out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    std::ifstream in(e.path(), std::ios::binary);
    out[fs::relative(e.path(), dir).string()] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return out;
}

int cli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(TWC_CLI) + " " + args + " > " + log.string() + " 2>&1";
  return std::system(cmd.c_str());
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "twc_acceptance_determinism";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string tiny = " --hidden 16 --gat-dim 8 --graph-dim 8 --mlp-hidden 8";
  std::ostringstream d;
  bool ok = true;
  auto same = [&](const std::string& what, const std::string& a, const std::string& b) {
    const auto ta = read_tree(root / a), tb = read_tree(root / b);
    const bool eq = !ta.empty() && ta == tb;
    ok &= eq;
    d << what << " " << (eq ? "identical" : "DIFFER") << " (" << ta.size() << " files); ";
  };
  int rc = 0;
  for (const char* k : {"1", "2"}) {
    const auto dir = root / ("gen" + std::string(k));
    rc |= cli("gen --tier medium --count 20 --seed 5 --quiet --out " + dir.string(), root / "gen.log");
  }
  same("gen", "gen1", "gen2");
  for (const char* k : {"1", "2"}) {
    const auto out = root / ("run" + std::string(k));
    rc |= cli("run --agent commonsense --graph cdc --runs 2 --seed 9 --jobs " + std::string(k) + " --games " +
                  (root / "gen1").string() + " --out " + (out / "metrics.json").string() + " --transcripts " +
                  (out / "episodes").string() + " --quiet" + tiny,
              root / "run.log");
  }
  same("run", "run1", "run2");
  for (const char* k : {"1", "2"}) {
    const auto out = root / ("train" + std::string(k));
    rc |= cli("train --agents text,cdc --episodes 5 --runs 2 --train-games 2 --test-games 3 --seed 4 --quiet --out " +
                  out.string() + tiny,
              root / "train.log");
  }
  same("train", "train1", "train2");
  for (const char* k : {"1", "2"}) {
    const auto out = root / ("eval" + std::string(k));
    rc |= cli("eval --report " + (root / "train1").string() + " --jobs " + k + " --quiet --out " +
                  (out / "eval.json").string(),
              root / "eval.log");
  }
  same("eval", "eval1", "eval2");
  ok &= rc == 0;
  d << "exit status " << rc;
  if (ok) fs::remove_all(root);
  return {ok, d.str()};
}

Outcome overlap() {
  const auto got = kg::to_json(kg::overlap_stats(bundled(), mini_kg()));
  std::ifstream in(std::string(TWC_GOLDEN_DIR) + "/overlap_stats.json");
  const bool golden = in && got == nlohmann::json::parse(in);
  const auto deg = kg::overlap_stats(bundled(), kg::goals_only_graph(bundled()));
  std::ostringstream d;
  d << "golden " << (golden ? "match" : "MISMATCH " + got.dump()) << "; goals-only direct " << deg.direct_pct
    << "% 2-hop " << deg.hop2_pct << "%";
  return {golden && deg.direct_pct == 100.0 && deg.hop2_pct == 100.0, d.str()};
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    std::string name;
    double budget;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> all = {
      {"optimal-steps", kBudgetOptimal, optimal_steps},
      {"subgraph-algebra", kBudgetSubgraph, subgraph_algebra},
      {"numerics", kBudgetNumerics, numerics},
      {"learning", kBudgetLearning, learning},
      {"rigged-kg", kBudgetRigged, rigged_kg},
      {"determinism", kBudgetDeterminism, determinism},
      {"overlap-stats", kBudgetOverlap, overlap},
  };
  std::set<std::string> only(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.name)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool pass = o.pass && secs <= c.budget;
    failed += !pass;
    std::printf("%s %-17s %s [%.1f s, budget %.0f s]\n", pass ? "PASS" : "FAIL", c.name.c_str(), o.detail.c_str(), secs,
                c.budget);
    std::fflush(stdout);
  }
  return failed ? 1 : 0;
}
