#pragma once

// Episodes, advantage actor-critic updates, greedy evaluation and the
// experiment matrix (agent variant x subgraph mode x tier).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "twc/agents.hpp"
#include "twc/embeddings.hpp"
#include "twc/engine.hpp"
#include "twc/error.hpp"
#include "twc/gamegen.hpp"
#include "twc/kg.hpp"
#include "twc/nn.hpp"
#include "twc/rng.hpp"
#include "twc/tensor.hpp"

namespace twc::train {

using agents::ActMode;
using agents::Agent;
using nlohmann::json;
using tensor::Tensor;

inline constexpr int kReportSchemaVersion = 1;

// Independent stream for (base, a, b); used for per-run, per-episode seeds.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  Rng r(base ^ (a * 0x9E3779B97F4A7C15ULL) ^ (b * 0xC2B2AE3D27D4EB4FULL));
  r.next();
  return r.next();
}

// ---------------------------------------------------------------------------
// config

struct TrainConfig {
  int episodes = 100;
  int runs = 3;
  double gamma = 0.9;
  int max_steps = engine::kDefaultMaxSteps;
  double value_coef = 0.5;
  double entropy_coef = 0.01;
  nn::OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  int final_window = 10;  // trailing episodes averaged as the final score
  int jobs = 1;

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidConfig("gamma must be in (0, 1]");
    if (episodes < 1) throw InvalidConfig("episodes must be >= 1");
    if (runs < 1) throw InvalidConfig("runs must be >= 1");
    if (max_steps < 1) throw InvalidConfig("max_steps must be >= 1");
    if (final_window < 1) throw InvalidConfig("final_window must be >= 1");
    if (jobs < 1) throw InvalidConfig("jobs must be >= 1");
    nn::Optimizer check(optimizer);
  }
};

inline json to_json(const TrainConfig& c) {
  return {{"episodes", c.episodes},
          {"runs", c.runs},
          {"gamma", c.gamma},
          {"max_steps", c.max_steps},
          {"value_coef", c.value_coef},
          {"entropy_coef", c.entropy_coef},
          {"optimizer", {{"kind", c.optimizer.kind}, {"lr", c.optimizer.lr}, {"clip_norm", c.optimizer.clip_norm}}},
          {"seed", c.seed},
          {"final_window", c.final_window}};
}

inline TrainConfig train_config_from(const json& j, TrainConfig c = {}) {
  c.episodes = j.value("episodes", c.episodes);
  c.runs = j.value("runs", c.runs);
  c.gamma = j.value("gamma", c.gamma);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.value_coef = j.value("value_coef", c.value_coef);
  c.entropy_coef = j.value("entropy_coef", c.entropy_coef);
  c.seed = j.value("seed", c.seed);
  c.final_window = j.value("final_window", c.final_window);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    c.optimizer.kind = o.value("kind", c.optimizer.kind);
    c.optimizer.lr = o.value("lr", c.optimizer.lr);
    c.optimizer.clip_norm = o.value("clip_norm", c.optimizer.clip_norm);
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// agent construction

struct Resources {
  const Embeddings* words = nullptr;
  const kg::ConceptGraph* graph = nullptr;
  const Embeddings* kg_words = nullptr;  // defaults to words
};

// Kinds: random, oracle, text, dc, cdc, ng, manual.
inline const std::vector<std::string>& agent_kinds() {
  static const std::vector<std::string> k{"random", "oracle", "text", "dc", "cdc", "ng", "manual"};
  return k;
}

inline std::unique_ptr<Agent> make_agent(const std::string& kind, agents::AgentConfig cfg, const Resources& res,
                                         std::uint64_t seed) {
  if (kind == "random") return std::make_unique<agents::RandomAgent>();
  if (kind == "oracle") return std::make_unique<agents::OracleAgent>();
  if (kind == "text") {
    cfg.strategy = kg::Strategy::None;
    return std::make_unique<agents::NeuralAgent>(cfg, res.words, nullptr, seed, res.kg_words);
  }
  if (kind == "dc" || kind == "cdc" || kind == "ng" || kind == "manual") {
    cfg.strategy = kg::strategy_from(kind);
    return std::make_unique<agents::NeuralAgent>(cfg, res.words, res.graph, seed, res.kg_words);
  }
  throw InvalidConfig("unknown agent '" + kind + "' (random|oracle|text|dc|cdc|ng|manual)");
}

// ---------------------------------------------------------------------------
// episodes

struct StepRecord {
  int t = 0;
  std::string observation;
  std::vector<std::string> admissible;
  std::string action;
  double reward = 0.0;
  int score = 0;
  bool done = false;
  double value = 0.0;
  double entropy = 0.0;
  std::vector<double> probs;
  std::optional<agents::AttentionSnapshot> attention;
  std::size_t graph_nodes = 0;
  std::size_t graph_edges = 0;
};

struct EpisodeLog {
  std::string game_id;
  int goals = 0;
  std::vector<StepRecord> steps;
  // tape handles for the update (neural agents in training only)
  std::vector<Tensor> log_probs, values, entropies;

  int score() const { return steps.empty() ? 0 : steps.back().score; }
  int length() const { return static_cast<int>(steps.size()); }
  double normalized_score() const { return goals == 0 ? 0.0 : static_cast<double>(score()) / goals; }
  std::vector<double> rewards() const {
    std::vector<double> r;
    for (const auto& s : steps) r.push_back(s.reward);
    return r;
  }
};

inline json to_json(const StepRecord& s) {
  json j = engine::transcript_record(s.t, s.observation, s.admissible, s.action, s.reward, s.score, s.done);
  j["value"] = s.value;
  j["entropy"] = s.entropy;
  j["probs"] = s.probs;
  j["graph"] = {{"nodes", s.graph_nodes}, {"edges", s.graph_edges}};
  if (s.attention) j["attention"] = agents::attention_record(s.t, *s.attention);
  return j;
}

// One line per step.
inline std::string to_jsonl(const EpisodeLog& log) {
  std::string out;
  for (const auto& s : log.steps) out += to_json(s).dump() + "\n";
  return out;
}

// Plays one episode. Sample mode keeps the tape for an update; greedy mode
// records none.
inline EpisodeLog run_episode(const gamegen::GameSpec& game, Agent& agent, ActMode mode, std::uint64_t seed,
                              int max_steps = engine::kDefaultMaxSteps) {
  std::optional<tensor::NoGrad> guard;
  if (mode == ActMode::Greedy || !agent.learns()) guard.emplace();
  EpisodeLog log;
  log.game_id = game.id;
  log.goals = static_cast<int>(game.goals.size());
  Rng rng(seed);
  agent.begin_episode(game);
  world::WorldState s = game.initial;
  engine::Observation obs = engine::render_observation(s);
  while (!world::is_terminal(s, game.goals, max_steps)) {
    auto acts = engine::admissible_actions(s, game.goals);
    agents::Decision d = agent.act(s, obs, acts, mode, rng);
    StepRecord rec;
    rec.t = s.step;
    rec.observation = obs.text;
    for (const auto& a : acts) rec.admissible.push_back(a.surface);
    rec.action = acts[d.index].surface;
    auto r = engine::step(s, acts[d.index].action, game.goals, max_steps);
    rec.reward = r.reward;
    rec.score = r.state.score;
    rec.done = r.done;
    rec.value = d.value;
    rec.entropy = d.entropy;
    rec.probs = d.probs;
    rec.attention = std::move(d.attention);
    rec.graph_nodes = d.graph_nodes;
    rec.graph_edges = d.graph_edges;
    log.steps.push_back(std::move(rec));
    if (!guard && d.log_prob.defined()) {
      log.log_probs.push_back(d.log_prob);
      log.values.push_back(d.value_t);
      log.entropies.push_back(d.entropy_t);
    }
    s = std::move(r.state);
    obs = std::move(r.observation);
  }
  return log;
}

// ---------------------------------------------------------------------------
// actor-critic

// R_t = r_t + gamma R_{t+1}.
inline std::vector<double> discounted_returns(const std::vector<double>& rewards, double gamma) {
  std::vector<double> R(rewards.size());
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) R[t] = acc = rewards[t] + gamma * acc;
  return R;
}

struct LossParts {
  Tensor loss;
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
};

// -sum A_t log p_t + c_v sum (R_t - v_t)^2 - c_e sum H_t, advantages detached.
inline LossParts a2c_loss(const EpisodeLog& log, const TrainConfig& cfg) {
  if (log.steps.empty()) throw EmptyEpisode("episode has no steps");
  if (log.log_probs.size() != log.steps.size()) throw EmptyEpisode("episode was not recorded for training");
  const auto R = discounted_returns(log.rewards(), cfg.gamma);
  Tensor pg = Tensor::scalar(0.0), vl = Tensor::scalar(0.0), ent = Tensor::scalar(0.0);
  for (std::size_t t = 0; t < R.size(); ++t) {
    const double adv = R[t] - log.values[t].item();
    pg = tensor::add(pg, tensor::scale(log.log_probs[t], -adv));
    vl = tensor::add(vl, tensor::square(tensor::add_scalar(log.values[t], -R[t])));
    ent = tensor::add(ent, log.entropies[t]);
  }
  LossParts out;
  out.loss = tensor::add(pg, tensor::add(tensor::scale(vl, cfg.value_coef), tensor::scale(ent, -cfg.entropy_coef)));
  out.policy = pg.item();
  out.value = cfg.value_coef * vl.item();
  out.entropy = -cfg.entropy_coef * ent.item();
  out.total = out.loss.item();
  return out;
}

// One gradient step on the episode.
inline LossParts a2c_update(const EpisodeLog& log, nn::ParameterStore& params, nn::Optimizer& opt, const TrainConfig& cfg) {
  LossParts parts = a2c_loss(log, cfg);
  params.zero_grad();
  tensor::backward(parts.loss);
  parts.grad_norm = opt.step(params);
  parts.loss = Tensor{};
  return parts;
}

// ---------------------------------------------------------------------------
// metrics

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd m;
  if (xs.empty()) return m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(v / static_cast<double>(xs.size()));
  return m;
}

inline json to_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}}; }

struct EpisodeResult {
  std::string game_id;
  int run = 0;
  double score = 0.0;  // normalized
  int steps = 0;
};

struct Metrics {
  std::vector<EpisodeResult> episodes;
  MeanStd score;
  MeanStd steps;
};

inline Metrics summarize(std::vector<EpisodeResult> eps) {
  Metrics m;
  std::vector<double> sc, st;
  for (const auto& e : eps) {
    sc.push_back(e.score);
    st.push_back(e.steps);
  }
  m.score = mean_std(sc);
  m.steps = mean_std(st);
  m.episodes = std::move(eps);
  return m;
}

inline json to_json(const Metrics& m) {
  json eps = json::array();
  for (const auto& e : m.episodes) eps.push_back({{"game", e.game_id}, {"run", e.run}, {"score", e.score}, {"steps", e.steps}});
  return {{"score", to_json(m.score)}, {"steps", to_json(m.steps)}, {"episodes", eps}};
}

// "0.93 ± 0.04", as in result tables.
inline std::string format_mean_std(const MeanStd& m, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f \xC2\xB1 %.*f", digits, m.mean, digits, m.std);
  return buf;
}

// Runs fn(i) for i in [0, n) on up to `jobs` threads; rethrows the first
// failure.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// Greedy episodes of every game for `runs` runs. make_policy returns an
// independent policy per task so tasks can run concurrently; seeds depend
// only on (seed, run, game index). on_log may be called concurrently.
inline Metrics evaluate(const std::function<std::unique_ptr<Agent>()>& make_policy,
                        const std::vector<gamegen::GameSpec>& games, int runs, std::uint64_t seed, int max_steps = 50,
                        int jobs = 1,
                        const std::function<void(std::size_t run, std::size_t game, const EpisodeLog&)>& on_log = {}) {
  const std::size_t n = games.size() * static_cast<std::size_t>(runs);
  std::vector<EpisodeResult> results(n);
  parallel_for(n, jobs, [&](std::size_t k) {
    const std::size_t run = k / games.size(), gi = k % games.size();
    auto agent = make_policy();
    auto log = run_episode(games[gi], *agent, ActMode::Greedy, derive_seed(seed, run, gi), max_steps);
    results[k] = {games[gi].id, static_cast<int>(run), log.normalized_score(), log.length()};
    if (on_log) on_log(run, gi, log);
  });
  return summarize(std::move(results));
}

// ---------------------------------------------------------------------------
// training

struct CurvePoint {
  double score = 0.0;  // normalized, greedy
  int steps = 0;
};

struct TrainRun {
  std::vector<CurvePoint> curve;  // one greedy evaluation per episode
  std::vector<LossParts> losses;
  double mean_nodes = 0.0;  // subgraph size over training steps
  double mean_edges = 0.0;

  MeanStd final_score(int window) const { return tail(window, [](const CurvePoint& c) { return c.score; }); }
  MeanStd final_steps(int window) const {
    return tail(window, [](const CurvePoint& c) { return static_cast<double>(c.steps); });
  }

 private:
  MeanStd tail(int window, double (*f)(const CurvePoint&)) const {
    std::vector<double> xs;
    const std::size_t from = curve.size() > static_cast<std::size_t>(window) ? curve.size() - window : 0;
    for (std::size_t i = from; i < curve.size(); ++i) xs.push_back(f(curve[i]));
    return mean_std(xs);
  }
};

// Episode e trains on games[e % |games|] with a sampled trajectory, then
// plays that game greedily for the curve. Agents without parameters are
// only evaluated.
inline TrainRun train_agent(Agent& agent, const std::vector<gamegen::GameSpec>& games, const TrainConfig& cfg,
                            std::uint64_t run_seed, const std::function<void(int, const TrainRun&)>& on_episode = {}) {
  if (games.empty()) throw InvalidConfig("no training games");
  cfg.validate();
  TrainRun out;
  nn::Optimizer opt(cfg.optimizer);
  double nodes = 0, edges = 0;
  std::size_t counted = 0;
  for (int e = 0; e < cfg.episodes; ++e) {
    const auto& game = games[static_cast<std::size_t>(e) % games.size()];
    if (agent.learns()) {
      auto log = run_episode(game, agent, ActMode::Sample, derive_seed(run_seed, 1, static_cast<std::uint64_t>(e)),
                             cfg.max_steps);
      for (const auto& s : log.steps) {
        nodes += static_cast<double>(s.graph_nodes);
        edges += static_cast<double>(s.graph_edges);
        ++counted;
      }
      out.losses.push_back(a2c_update(log, *agent.parameters(), opt, cfg));
    }
    auto eval = run_episode(game, agent, ActMode::Greedy, derive_seed(run_seed, 2, static_cast<std::uint64_t>(e)),
                            cfg.max_steps);
    if (!agent.learns())
      for (const auto& s : eval.steps) {
        nodes += static_cast<double>(s.graph_nodes);
        edges += static_cast<double>(s.graph_edges);
        ++counted;
      }
    out.curve.push_back({eval.normalized_score(), eval.length()});
    if (on_episode) on_episode(e, out);
  }
  if (counted) {
    out.mean_nodes = nodes / static_cast<double>(counted);
    out.mean_edges = edges / static_cast<double>(counted);
  }
  return out;
}

// Per-episode mean/std across runs.
inline void write_curves_csv(const std::filesystem::path& path, const std::vector<TrainRun>& runs) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write curves '" + path.string() + "'");
  out << "episode,mean_score,std_score,mean_steps,std_steps\n";
  std::size_t n = 0;
  for (const auto& r : runs) n = std::max(n, r.curve.size());
  for (std::size_t e = 0; e < n; ++e) {
    std::vector<double> sc, st;
    for (const auto& r : runs)
      if (e < r.curve.size()) {
        sc.push_back(r.curve[e].score);
        st.push_back(r.curve[e].steps);
      }
    const auto a = mean_std(sc), b = mean_std(st);
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f\n", e + 1, a.mean, a.std, b.mean, b.std);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// experiment matrix

struct MatrixConfig {
  std::vector<std::string> agents{"text", "cdc"};
  std::vector<kg::Mode> modes{kg::Mode::Evolve};
  std::vector<gamegen::Tier> tiers{gamegen::Tier::Easy};
  int train_games = 5;
  int test_games = 5;
  std::uint64_t split_seed = 0;
  TrainConfig train;
  agents::AgentConfig agent;
};

inline json to_json(const MatrixConfig& c) {
  json modes = json::array(), tiers = json::array();
  for (auto m : c.modes) modes.push_back(kg::to_string(m));
  for (auto t : c.tiers) tiers.push_back(gamegen::to_string(t));
  return {{"agents", c.agents},           {"modes", modes},
          {"tiers", tiers},               {"train_games", c.train_games},
          {"test_games", c.test_games},   {"split_seed", c.split_seed},
          {"train", to_json(c.train)},    {"agent", agents::to_json(c.agent)}};
}

inline std::vector<gamegen::GameSpec> game_set(const gamegen::Dataset& d, const gamegen::Pools& pools, gamegen::Tier tier,
                                               gamegen::Split split, int n, std::uint64_t seed) {
  std::vector<gamegen::GameSpec> out;
  for (int i = 0; i < n; ++i)
    out.push_back(gamegen::generate_game(d, pools, tier, split, derive_seed(seed, static_cast<std::uint64_t>(split), i)));
  return out;
}

inline MatrixConfig matrix_config_from(const json& j, MatrixConfig c = {}) {
  if (j.contains("agents")) c.agents = j.at("agents").get<std::vector<std::string>>();
  if (j.contains("modes")) {
    c.modes.clear();
    for (const auto& m : j.at("modes")) c.modes.push_back(kg::mode_from(m.get<std::string>()));
  }
  if (j.contains("tiers")) {
    c.tiers.clear();
    for (const auto& t : j.at("tiers")) c.tiers.push_back(gamegen::tier_from(t.get<std::string>()));
  }
  c.train_games = j.value("train_games", c.train_games);
  c.test_games = j.value("test_games", c.test_games);
  c.split_seed = j.value("split_seed", c.split_seed);
  if (j.contains("train")) c.train = train_config_from(j.at("train"), c.train);
  if (j.contains("agent")) c.agent = agents::agent_config_from(j.at("agent"));
  return c;
}

namespace detail {

inline std::uint64_t run_seed(const MatrixConfig& mc, int r) {
  return derive_seed(mc.train.seed, 100 + static_cast<std::uint64_t>(r));
}

struct HeldOut {
  std::vector<gamegen::GameSpec> in, out;
};

inline HeldOut held_out_sets(const MatrixConfig& mc, const gamegen::Dataset& d, const gamegen::Pools& pools,
                             gamegen::Tier tier) {
  return {game_set(d, pools, tier, gamegen::Split::In, mc.test_games, mc.train.seed),
          game_set(d, pools, tier, gamegen::Split::Out, mc.test_games, mc.train.seed)};
}

// Greedy evaluation of run r's parameters on both held-out sets; each task
// gets its own copy of the policy.
inline void evaluate_run(const std::string& kind, const agents::AgentConfig& acfg, const Resources& res,
                         const nn::ParameterStore* ps, const MatrixConfig& mc, int r, const HeldOut& sets,
                         std::vector<EpisodeResult>& in_eps, std::vector<EpisodeResult>& out_eps) {
  const std::uint64_t seed = run_seed(mc, r);
  auto policy = [&]() -> std::unique_ptr<Agent> {
    auto a = make_agent(kind, acfg, res, seed);
    if (ps) a->parameters()->assign(*ps);
    return a;
  };
  for (auto [set, sink] : {std::pair{&sets.in, &in_eps}, std::pair{&sets.out, &out_eps}}) {
    auto m = evaluate(policy, *set, 1, derive_seed(seed, 3), mc.train.max_steps, mc.train.jobs);
    for (auto e : m.episodes) {
      e.run = r;
      sink->push_back(e);
    }
  }
}

inline json eval_json(const Metrics& in_m, const Metrics& out_m) {
  return {{"eval", {{"in", to_json(in_m)}, {"out", to_json(out_m)}}},
          {"table",
           {{"in", {{"score", format_mean_std(in_m.score)}, {"steps", format_mean_std(in_m.steps)}}},
            {"out", {{"score", format_mean_std(out_m.score)}, {"steps", format_mean_std(out_m.steps)}}}}}};
}

inline bool uses_graph(const std::string& kind) { return kind != "text" && kind != "random" && kind != "oracle"; }

}  // namespace detail

// Cells agent x mode x tier. Agents without a subgraph ignore the mode and
// appear once per tier. Each cell writes <dir>/curves_<agent>_<mode>_<tier>.csv
// after every run and one checkpoint per run for learning agents.
inline json experiment_matrix(const MatrixConfig& mc, const gamegen::Dataset& dataset, const Resources& res,
                              const std::filesystem::path& out_dir,
                              const std::function<void(const std::string&)>& progress = {}) {
  mc.train.validate();
  std::filesystem::create_directories(out_dir);
  const auto pools = gamegen::split_dataset(dataset.objects, mc.split_seed);
  json cells = json::array();
  for (auto tier : mc.tiers) {
    const auto train_set = game_set(dataset, pools, tier, gamegen::Split::Train, mc.train_games, mc.train.seed);
    const auto sets = detail::held_out_sets(mc, dataset, pools, tier);
    for (const auto& kind : mc.agents) {
      const bool graph = detail::uses_graph(kind);
      for (std::size_t mi = 0; mi < (graph ? mc.modes.size() : 1); ++mi) {
        agents::AgentConfig acfg = mc.agent;
        acfg.mode = graph ? mc.modes[mi] : kg::Mode::Evolve;
        const std::string mode_name = graph ? kg::to_string(acfg.mode) : "none";
        const std::string cell = kind + "_" + mode_name + "_" + gamegen::to_string(tier);
        const auto csv = out_dir / ("curves_" + cell + ".csv");
        std::vector<TrainRun> runs;
        std::vector<EpisodeResult> in_eps, out_eps;
        json checkpoints = json::array();
        for (int r = 0; r < mc.train.runs; ++r) {
          if (progress) progress(cell + " run " + std::to_string(r + 1) + "/" + std::to_string(mc.train.runs));
          auto agent = make_agent(kind, acfg, res, detail::run_seed(mc, r));
          runs.push_back(train_agent(*agent, train_set, mc.train, detail::run_seed(mc, r)));
          write_curves_csv(csv, runs);
          if (const auto* ps = agent->parameters()) {
            const std::string name = "ckpt_" + cell + "_run" + std::to_string(r) + ".bin";
            nn::save_checkpoint(*ps, (out_dir / name).string());
            checkpoints.push_back(name);
          }
          detail::evaluate_run(kind, acfg, res, agent->parameters(), mc, r, sets, in_eps, out_eps);
        }
        std::vector<double> fs, ft, nodes, edges;
        for (const auto& r : runs) {
          fs.push_back(r.final_score(mc.train.final_window).mean);
          ft.push_back(r.final_steps(mc.train.final_window).mean);
          nodes.push_back(r.mean_nodes);
          edges.push_back(r.mean_edges);
        }
        json c{{"agent", kind},
               {"mode", mode_name},
               {"tier", gamegen::to_string(tier)},
               {"runs", mc.train.runs},
               {"episodes", mc.train.episodes},
               {"curves", csv.filename().string()},
               {"checkpoints", checkpoints},
               {"train_final", {{"score", to_json(mean_std(fs))}, {"steps", to_json(mean_std(ft))}}},
               {"subgraph", {{"mean_nodes", mean_std(nodes).mean}, {"mean_edges", mean_std(edges).mean}}}};
        c.update(detail::eval_json(summarize(in_eps), summarize(out_eps)));
        cells.push_back(std::move(c));
      }
    }
  }
  return {{"schema_version", kReportSchemaVersion}, {"seed", mc.train.seed}, {"config", to_json(mc)}, {"cells", cells}};
}

// Re-runs the held-out evaluation of a report written by experiment_matrix,
// loading checkpoints from report_dir.
inline json evaluate_report(const json& report, const gamegen::Dataset& dataset, const Resources& res,
                            const std::filesystem::path& report_dir, int jobs = 1) {
  MatrixConfig mc = matrix_config_from(report.at("config"));
  mc.train.jobs = jobs;
  const auto pools = gamegen::split_dataset(dataset.objects, mc.split_seed);
  json cells = json::array();
  for (const auto& cell : report.at("cells")) {
    const std::string kind = cell.at("agent"), mode = cell.at("mode");
    const auto tier = gamegen::tier_from(cell.at("tier").get<std::string>());
    agents::AgentConfig acfg = mc.agent;
    acfg.mode = mode == "none" ? kg::Mode::Evolve : kg::mode_from(mode);
    const auto sets = detail::held_out_sets(mc, dataset, pools, tier);
    const auto& ckpts = cell.at("checkpoints");
    std::vector<EpisodeResult> in_eps, out_eps;
    for (int r = 0; r < cell.at("runs").get<int>(); ++r) {
      std::optional<nn::ParameterStore> ps;
      if (!ckpts.empty()) {
        if (static_cast<std::size_t>(r) >= ckpts.size()) throw CheckpointError("report lists too few checkpoints");
        auto a = make_agent(kind, acfg, res, detail::run_seed(mc, r));
        nn::load_checkpoint(*a->parameters(), (report_dir / ckpts[r].get<std::string>()).string());
        ps = a->parameters()->snapshot();
      }
      detail::evaluate_run(kind, acfg, res, ps ? &*ps : nullptr, mc, r, sets, in_eps, out_eps);
    }
    json c{{"agent", kind}, {"mode", mode}, {"tier", cell.at("tier")}, {"runs", cell.at("runs")}};
    c.update(detail::eval_json(summarize(in_eps), summarize(out_eps)));
    cells.push_back(std::move(c));
  }
  return {{"schema_version", kReportSchemaVersion}, {"seed", mc.train.seed}, {"config", to_json(mc)}, {"cells", cells}};
}

}  // namespace twc::train
