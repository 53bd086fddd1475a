// twc: command-line entry point.
//
//   twc gen    generate game files
//   twc play   play a game in the terminal
//   twc run    evaluate an agent on a directory of games
//   twc train  run the experiment matrix
//   twc eval   re-evaluate the checkpoints of a train report
//   twc stats  dataset / knowledge-graph overlap
//   twc serve  HTTP server for human play sessions
//   twc attn   export attention weights from an episode log
//
// Exit status: 0 on success, 1 on a runtime error (one line on stderr,
// "error: <Kind>: <message>"), 2 on a usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "twc/agents.hpp"
#include "twc/embeddings.hpp"
#include "twc/engine.hpp"
#include "twc/error.hpp"
#include "twc/gamegen.hpp"
#include "twc/kg.hpp"
#include "twc/nn.hpp"
#include "twc/server.hpp"
#include "twc/text.hpp"
#include "twc/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace twc;

namespace {

const std::string kDataDir = TWC_DATA_DIR;

struct Common {
  std::uint64_t seed = 0;
  std::string config;
  int jobs = 1;
  bool quiet = false;
  bool as_json = false;
};

void log_line(const Common& c, const std::string& msg) {
  if (!c.quiet) std::cerr << msg << "\n";
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

json stamp(const Common& c, json config) {
  return {{"schema_version", train::kReportSchemaVersion}, {"seed", c.seed}, {"config", std::move(config)}};
}

// Prints a report: JSON with --json, otherwise the human summary.
void emit(const Common& c, const json& report, const std::string& human) {
  if (c.as_json)
    std::cout << report.dump(2) << "\n";
  else
    std::cout << human;
}

// --config F: a JSON object whose keys are long flag names. Values are
// inserted as flags unless the same flag was given on the command line.
std::vector<std::string> with_config_overlay(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) path = args[i].substr(9);
  }
  if (path.empty() || args.size() < 2) return args;
  const json cfg = gamegen::read_json_file(path);
  if (!cfg.is_object()) throw InvalidConfig("config file must hold a JSON object");
  auto given = [&](const std::string& flag) {
    for (const auto& a : args)
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    return false;
  };
  std::vector<std::string> extra;
  for (const auto& [key, value] : cfg.items()) {
    const std::string flag = "--" + key;
    if (key == "config" || given(flag)) continue;
    auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_boolean()) {
      if (value.get<bool>()) extra.push_back(flag);
    } else if (value.is_array()) {
      for (const auto& v : value) extra.push_back(flag + "=" + scalar(v));
    } else {
      extra.push_back(flag + "=" + scalar(value));
    }
  }
  // after the subcommand name so they bind to its options
  args.insert(args.begin() + 2, extra.begin(), extra.end());
  return args;
}

// ---------------------------------------------------------------------------
// shared agent options

struct AgentOpts {
  std::string embeddings = kDataDir + "/embeddings.txt";
  std::string kg_embeddings;
  std::string kg = kDataDir + "/conceptnet_mini.tsv";
  std::size_t hidden = 300, gat_dim = 50, graph_dim = 100, mlp_hidden = 150;
  int gat_heads = 1;

  void add(CLI::App* cmd) {
    cmd->add_option("--embeddings", embeddings, "word embedding file")->check(CLI::ExistingFile);
    cmd->add_option("--kg-embeddings", kg_embeddings, "node embedding file (defaults to --embeddings)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--kg", kg, "knowledge graph (.tsv or ConceptNet .csv)")->check(CLI::ExistingFile);
    cmd->add_option("--hidden", hidden, "encoder width");
    cmd->add_option("--gat-dim", gat_dim, "graph attention width per head");
    cmd->add_option("--gat-heads", gat_heads, "graph attention heads");
    cmd->add_option("--graph-dim", graph_dim, "co-attention output width");
    cmd->add_option("--mlp-hidden", mlp_hidden, "scorer hidden width");
  }

  agents::AgentConfig config() const {
    agents::AgentConfig c;
    c.hidden = hidden;
    c.gat_dim = gat_dim;
    c.gat_heads = gat_heads;
    c.graph_dim = graph_dim;
    c.mlp_hidden = mlp_hidden;
    c.validate();
    return c;
  }

  json to_json() const {
    return {{"embeddings", embeddings}, {"kg_embeddings", kg_embeddings}, {"kg", kg}};
  }
};

// Loaded lazily: only what the agent kinds need.
struct Loaded {
  std::optional<Embeddings> words, kg_words;
  std::optional<kg::ConceptGraph> graph;

  train::Resources load(const AgentOpts& o, bool neural, bool graph_needed) {
    train::Resources r;
    if (neural) {
      words = Embeddings::load(o.embeddings);
      r.words = &*words;
      if (!o.kg_embeddings.empty()) {
        kg_words = Embeddings::load(o.kg_embeddings);
        r.kg_words = &*kg_words;
      }
    }
    if (graph_needed) {
      graph = kg::load_graph(o.kg);
      r.graph = &*graph;
    }
    return r;
  }
};

bool is_neural(const std::string& kind) { return kind != "random" && kind != "oracle"; }
bool needs_graph(const std::string& kind) { return is_neural(kind) && kind != "text"; }

// run --agent accepts commonsense together with --graph.
std::string resolve_kind(const std::string& agent, const std::string& graph) {
  if (agent == "commonsense") {
    if (graph == "none") throw InvalidConfig("--agent commonsense needs --graph dc|cdc|ng|manual");
    kg::strategy_from(graph);
    return graph;
  }
  if (graph != "none" && graph != agent) throw InvalidConfig("--graph applies only to --agent commonsense");
  const auto& kinds = train::agent_kinds();
  if (std::find(kinds.begin(), kinds.end(), agent) == kinds.end())
    throw InvalidConfig("unknown agent '" + agent + "'");
  return agent;
}

std::string metrics_line(const std::string& label, const train::Metrics& m) {
  return label + ": score " + train::format_mean_std(m.score) + ", steps " + train::format_mean_std(m.steps) + " (" +
         std::to_string(m.episodes.size()) + " episodes)\n";
}

// ---------------------------------------------------------------------------
// subcommands

struct GenOpts {
  std::string tier = "easy", split = "train", dataset = kDataDir + "/twc_dataset.json", out;
  int count = 5;
  std::uint64_t split_seed = 0;
};

int cmd_gen(const Common& c, const GenOpts& o) {
  if (o.count < 1) throw InvalidConfig("--count must be >= 1");
  const auto dataset = gamegen::load_dataset(o.dataset);
  const auto pools = gamegen::split_dataset(dataset.objects, o.split_seed);
  const auto games = train::game_set(dataset, pools, gamegen::tier_from(o.tier), gamegen::split_from(o.split), o.count, c.seed);
  fs::create_directories(o.out);
  json listing = json::array();
  for (const auto& g : games) {
    const std::string file = g.id + ".twc.json";
    gamegen::save_game(g, fs::path(o.out) / file);
    listing.push_back({{"id", g.id}, {"file", file}, {"optimal_steps", gamegen::optimal_steps(g)}});
  }
  json manifest = stamp(c, {{"tier", o.tier}, {"split", o.split}, {"count", o.count}, {"split_seed", o.split_seed},
                            {"dataset", o.dataset}});
  manifest["games"] = listing;
  write_text(fs::path(o.out) / "manifest.json", manifest.dump(2) + "\n");
  emit(c, manifest, "wrote " + std::to_string(games.size()) + " games to " + o.out + "\n");
  return 0;
}

struct PlayOpts {
  std::string game, transcript;
  int max_steps = engine::kDefaultMaxSteps;
};

int cmd_play(const Common& c, const PlayOpts& o) {
  const auto g = gamegen::load_game(o.game);
  world::WorldState s = g.initial;
  engine::Observation obs = engine::render_observation(s);
  std::string jsonl;
  std::cout << obs.text << "\n";
  std::string line;
  while (!world::is_terminal(s, g.goals, o.max_steps)) {
    std::cout << "> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    line = text::trim(line);
    if (line.empty()) continue;
    if (line == "quit" || line == "exit") break;
    const auto acts = engine::admissible_actions(s, g.goals);
    if (line == "help" || line == "actions") {
      for (const auto& a : acts) std::cout << "  " << a.surface << "\n";
      continue;
    }
    try {
      const auto a = engine::parse(line, s);
      auto r = engine::step(s, a, g.goals, o.max_steps);
      std::vector<std::string> names;
      for (const auto& x : acts) names.push_back(x.surface);
      jsonl += engine::transcript_record(s.step, obs.text, names, engine::surface(s, a), r.reward, r.state.score, r.done)
                   .dump() +
               "\n";
      s = std::move(r.state);
      obs = std::move(r.observation);
      std::cout << obs.text << "\n";
    } catch (const Error& e) {
      std::cout << e.what() << "\n";
    }
  }
  std::cout << "score " << s.score << "/" << g.goals.size() << " in " << s.step << " steps (optimal "
            << gamegen::optimal_steps(g) << ")\n";
  if (!o.transcript.empty()) write_text(o.transcript, jsonl);
  (void)c;
  return 0;
}

struct RunOpts {
  std::string agent = "oracle", graph = "none", mode = "evolve", games, checkpoint, transcripts, out;
  int runs = 1, max_steps = engine::kDefaultMaxSteps;
  AgentOpts a;
};

int cmd_run(const Common& c, const RunOpts& o) {
  const std::string kind = resolve_kind(o.agent, o.graph);
  auto acfg = o.a.config();
  acfg.mode = kg::mode_from(o.mode);
  if (o.runs < 1) throw InvalidConfig("--runs must be >= 1");
  if (!o.checkpoint.empty() && !is_neural(kind)) throw InvalidConfig("--checkpoint needs a neural agent");
  const auto games = gamegen::load_game_dir(o.games);
  if (games.empty()) throw IoError("no *.twc.json games in " + o.games);
  Loaded loaded;
  const auto res = loaded.load(o.a, is_neural(kind), needs_graph(kind));
  std::optional<nn::ParameterStore> params;
  if (!o.checkpoint.empty()) {
    auto a = train::make_agent(kind, acfg, res, c.seed);
    nn::load_checkpoint(*a->parameters(), o.checkpoint);
    params = a->parameters()->snapshot();
  }
  auto policy = [&]() -> std::unique_ptr<agents::Agent> {
    auto a = train::make_agent(kind, acfg, res, c.seed);
    if (params) a->parameters()->assign(*params);
    return a;
  };
  std::function<void(std::size_t, std::size_t, const train::EpisodeLog&)> on_log;
  if (!o.transcripts.empty()) {
    fs::create_directories(o.transcripts);
    on_log = [&](std::size_t run, std::size_t gi, const train::EpisodeLog& log) {
      write_text(fs::path(o.transcripts) / (games[gi].id + "_run" + std::to_string(run) + ".jsonl"), train::to_jsonl(log));
    };
  }
  const auto m = train::evaluate(policy, games, o.runs, c.seed, o.max_steps, c.jobs, on_log);
  json cfg{{"agent", kind}, {"mode", o.mode}, {"games", o.games}, {"runs", o.runs}, {"max_steps", o.max_steps},
           {"checkpoint", o.checkpoint}, {"agent_config", agents::to_json(acfg)}};
  if (is_neural(kind)) cfg.update(o.a.to_json());
  json report = stamp(c, cfg);
  report["metrics"] = train::to_json(m);
  if (!o.out.empty()) write_text(o.out, report.dump(2) + "\n");
  emit(c, report, metrics_line(kind, m));
  return 0;
}

struct TrainOpts {
  std::vector<std::string> agents{"text", "cdc"}, modes{"evolve"}, tiers{"easy"};
  std::string dataset = kDataDir + "/twc_dataset.json", out;
  int episodes = 100, runs = 3, train_games = 5, test_games = 5, max_steps = engine::kDefaultMaxSteps,
      final_window = 10;
  std::uint64_t split_seed = 0;
  double gamma = 0.9, value_coef = 0.5, entropy_coef = 0.01, lr = 1e-3, clip = 5.0;
  std::string optimizer = "sgd";
  AgentOpts a;
};

std::string table(const json& report) {
  std::string out;
  for (const auto& cell : report["cells"]) {
    out += cell["agent"].get<std::string>() + "/" + cell["mode"].get<std::string>() + "/" +
           cell["tier"].get<std::string>() + "  in: score " + cell["table"]["in"]["score"].get<std::string>() +
           ", steps " + cell["table"]["in"]["steps"].get<std::string>() + "  out: score " +
           cell["table"]["out"]["score"].get<std::string>() + ", steps " +
           cell["table"]["out"]["steps"].get<std::string>() + "\n";
  }
  return out;
}

int cmd_train(const Common& c, const TrainOpts& o) {
  train::MatrixConfig mc;
  mc.agents = o.agents;
  for (const auto& k : mc.agents) resolve_kind(k, "none");
  mc.modes.clear();
  for (const auto& m : o.modes) mc.modes.push_back(kg::mode_from(m));
  mc.tiers.clear();
  for (const auto& t : o.tiers) mc.tiers.push_back(gamegen::tier_from(t));
  mc.train_games = o.train_games;
  mc.test_games = o.test_games;
  mc.split_seed = o.split_seed;
  auto& t = mc.train;
  t.episodes = o.episodes;
  t.runs = o.runs;
  t.gamma = o.gamma;
  t.max_steps = o.max_steps;
  t.value_coef = o.value_coef;
  t.entropy_coef = o.entropy_coef;
  t.optimizer.kind = o.optimizer;
  t.optimizer.lr = o.lr;
  t.optimizer.clip_norm = o.clip;
  t.seed = c.seed;
  t.final_window = o.final_window;
  t.jobs = c.jobs;
  t.validate();
  mc.agent = o.a.config();
  if (mc.train_games < 1 || mc.test_games < 1) throw InvalidConfig("--train-games and --test-games must be >= 1");

  bool neural = false, graph = false;
  for (const auto& k : mc.agents) {
    neural |= is_neural(k);
    graph |= needs_graph(k);
  }
  const auto dataset = gamegen::load_dataset(o.dataset);
  Loaded loaded;
  const auto res = loaded.load(o.a, neural, graph);
  json report = train::experiment_matrix(mc, dataset, res, o.out, [&](const std::string& m) { log_line(c, m); });
  json cfg = report["config"];
  cfg["dataset"] = o.dataset;
  cfg.update(o.a.to_json());
  report["config"] = cfg;
  write_text(fs::path(o.out) / "report.json", report.dump(2) + "\n");
  emit(c, report, table(report));
  return 0;
}

struct EvalOpts {
  std::string report, out;
  AgentOpts a;
};

int cmd_eval(const Common& c, const EvalOpts& o) {
  fs::path file = o.report;
  if (fs::is_directory(file)) file /= "report.json";
  const json trained = gamegen::read_json_file(file);
  const json& cfg = trained.at("config");
  AgentOpts paths = o.a;
  if (cfg.contains("embeddings")) paths.embeddings = cfg["embeddings"];
  if (cfg.contains("kg_embeddings")) paths.kg_embeddings = cfg["kg_embeddings"];
  if (cfg.contains("kg")) paths.kg = cfg["kg"];
  bool neural = false, graph = false;
  for (const auto& cell : trained.at("cells")) {
    neural |= is_neural(cell.at("agent"));
    graph |= needs_graph(cell.at("agent"));
  }
  const auto dataset = gamegen::load_dataset(cfg.value("dataset", kDataDir + "/twc_dataset.json"));
  Loaded loaded;
  const auto res = loaded.load(paths, neural, graph);
  json report = train::evaluate_report(trained, dataset, res, file.parent_path(), c.jobs);
  report["config"]["report"] = o.report;
  if (!o.out.empty()) write_text(o.out, report.dump(2) + "\n");
  emit(c, report, table(report));
  return 0;
}

struct StatsOpts {
  std::string kg = kDataDir + "/conceptnet_mini.tsv", dataset = kDataDir + "/twc_dataset.json", out;
};

int cmd_stats(const Common& c, const StatsOpts& o) {
  const auto stats = kg::overlap_stats(gamegen::load_dataset(o.dataset), kg::load_graph(o.kg));
  json report = stamp(c, {{"kg", o.kg}, {"dataset", o.dataset}});
  report["overlap"] = kg::to_json(stats);
  if (!o.out.empty()) write_text(o.out, report.dump(2) + "\n");
  char buf[256];
  std::snprintf(buf, sizeof buf, "direct %.2f%%  unique entities %.2f%%  2-hop %.2f%%  3-hop %.2f%%\n", stats.direct_pct,
                stats.unique_match_pct, stats.hop2_pct, stats.hop3_pct);
  emit(c, report, buf);
  return 0;
}

struct ServeOpts {
  std::string addr = "127.0.0.1:8080", data_dir = "twc-sessions", games, static_dir;
};

int cmd_serve(const Common& c, const ServeOpts& o) {
  const auto colon = o.addr.rfind(':');
  if (colon == std::string::npos) throw InvalidConfig("--addr must be HOST:PORT");
  const std::string host = o.addr.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(o.addr.substr(colon + 1));
  } catch (const std::exception&) {
    throw InvalidConfig("bad port in --addr '" + o.addr + "'");
  }
  auto games = gamegen::load_game_dir(o.games);
  if (games.empty()) throw IoError("no *.twc.json games in " + o.games);
  server::SessionStore store(std::move(games), o.data_dir);
  httplib::Server http;
  server::mount(http, store, o.static_dir);
  if (port == 0) {
    port = http.bind_to_any_port(host);
    if (port < 0) throw IoError("cannot bind " + host);
  } else if (!http.bind_to_port(host, port)) {
    throw IoError("cannot bind " + o.addr);
  }
  // the port line goes to stdout so scripts can pick up an ephemeral port
  std::cout << "listening on http://" << host << ":" << port << std::endl;
  log_line(c, std::to_string(store.size()) + " stored sessions under " + o.data_dir);
  if (!http.listen_after_bind()) throw IoError("server stopped unexpectedly");
  return 0;
}

struct AttnOpts {
  std::string log, out;
};

int cmd_attn(const Common& c, const AttnOpts& o) {
  std::ifstream in(o.log, std::ios::binary);
  if (!in) throw IoError("cannot read " + o.log);
  json steps = json::array();
  std::string line;
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    const json rec = json::parse(line);
    if (!rec.contains("attention")) continue;
    const auto& att = rec["attention"];
    steps.push_back({{"t", rec.at("t")},
                     {"action", rec.at("action")},
                     {"admissible", rec.at("admissible")},
                     {"nodes", att.at("nodes")},
                     {"weights_per_action", att.at("weights_per_action")}});
  }
  json report = stamp(c, {{"log", o.log}});
  report["steps"] = steps;
  if (!o.out.empty()) write_text(o.out, report.dump(2) + "\n");
  emit(c, report, "exported attention for " + std::to_string(steps.size()) + " steps\n");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"House-cleanup text games and commonsense agents"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "base seed");
  app.add_option("--config", common.config, "JSON file of flag values (flags take precedence)");
  app.add_option("--jobs", common.jobs, "parallel evaluation episodes")->check(CLI::PositiveNumber);
  app.add_flag("--quiet", common.quiet, "no progress on stderr");
  app.add_flag("--json", common.as_json, "print the JSON report");

  GenOpts gen;
  auto* g = app.add_subcommand("gen", "generate game files");
  g->add_option("--tier", gen.tier, "easy|medium|hard")->check(CLI::IsMember({"easy", "medium", "hard"}));
  g->add_option("--split", gen.split, "train|in|out")->check(CLI::IsMember({"train", "in", "out"}));
  g->add_option("--count", gen.count, "number of games");
  g->add_option("--split-seed", gen.split_seed, "seed of the train/out object split");
  g->add_option("--dataset", gen.dataset, "dataset JSON")->check(CLI::ExistingFile);
  g->add_option("--out", gen.out, "output directory")->required();

  PlayOpts play;
  auto* p = app.add_subcommand("play", "play a game in the terminal");
  p->add_option("game", play.game, "GAME.twc.json")->required()->check(CLI::ExistingFile);
  p->add_option("--transcript", play.transcript, "write the transcript as JSON lines");
  p->add_option("--max-steps", play.max_steps, "step limit");

  RunOpts run;
  auto* r = app.add_subcommand("run", "evaluate an agent on a game directory");
  r->add_option("--agent", run.agent, "random|oracle|text|commonsense|dc|cdc|ng|manual");
  r->add_option("--graph", run.graph, "none|dc|cdc|ng|manual (with --agent commonsense)");
  r->add_option("--mode", run.mode, "evolve|full")->check(CLI::IsMember({"evolve", "full"}));
  r->add_option("--games", run.games, "directory of *.twc.json")->required()->check(CLI::ExistingDirectory);
  r->add_option("--runs", run.runs, "episodes per game");
  r->add_option("--max-steps", run.max_steps, "step limit");
  r->add_option("--checkpoint", run.checkpoint, "trained parameters")->check(CLI::ExistingFile);
  r->add_option("--transcripts", run.transcripts, "directory for per-episode JSON lines");
  r->add_option("--out", run.out, "write the report here");
  run.a.add(r);

  TrainOpts tr;
  auto* t = app.add_subcommand("train", "train and evaluate the experiment matrix");
  t->add_option("--agents", tr.agents, "agent kinds")->delimiter(',');
  t->add_option("--modes", tr.modes, "subgraph modes")->delimiter(',');
  t->add_option("--tiers", tr.tiers, "difficulty tiers")->delimiter(',');
  t->add_option("--episodes", tr.episodes, "training episodes per run");
  t->add_option("--runs", tr.runs, "independent runs per cell");
  t->add_option("--train-games", tr.train_games, "training games per tier");
  t->add_option("--test-games", tr.test_games, "games per held-out set");
  t->add_option("--split-seed", tr.split_seed, "seed of the train/out object split");
  t->add_option("--gamma", tr.gamma, "discount");
  t->add_option("--max-steps", tr.max_steps, "step limit");
  t->add_option("--value-coef", tr.value_coef, "value loss weight");
  t->add_option("--entropy-coef", tr.entropy_coef, "entropy bonus weight");
  t->add_option("--optimizer", tr.optimizer, "sgd|adam")->check(CLI::IsMember({"sgd", "adam"}));
  t->add_option("--lr", tr.lr, "learning rate");
  t->add_option("--clip", tr.clip, "gradient L2 clip norm");
  t->add_option("--final-window", tr.final_window, "trailing episodes in the final score");
  t->add_option("--dataset", tr.dataset, "dataset JSON")->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "output directory")->required();
  tr.a.add(t);

  EvalOpts ev;
  auto* e = app.add_subcommand("eval", "re-evaluate the checkpoints of a train report");
  e->add_option("--report", ev.report, "train output directory or its report.json")->required()->check(CLI::ExistingPath);
  e->add_option("--out", ev.out, "write the report here");

  StatsOpts st;
  auto* s = app.add_subcommand("stats", "dataset and knowledge-graph overlap");
  s->add_option("--kg", st.kg, "knowledge graph")->check(CLI::ExistingFile);
  s->add_option("--dataset", st.dataset, "dataset JSON")->check(CLI::ExistingFile);
  s->add_option("--out", st.out, "write the report here");

  ServeOpts sv;
  auto* v = app.add_subcommand("serve", "HTTP server for human play sessions");
  v->add_option("--addr", sv.addr, "HOST:PORT (port 0 picks a free one)");
  v->add_option("--data-dir", sv.data_dir, "session storage");
  v->add_option("--games", sv.games, "directory of *.twc.json")->required()->check(CLI::ExistingDirectory);
  v->add_option("--static", sv.static_dir, "web bundle served at /");

  AttnOpts at;
  auto* a = app.add_subcommand("attn", "export attention weights from an episode log");
  a->add_option("--log", at.log, "EPISODE.jsonl")->required()->check(CLI::ExistingFile);
  a->add_option("--out", at.out, "plot data JSON");

  try {
    std::vector<std::string> args;
    try {
      args = with_config_overlay(argc, argv);
    } catch (const std::exception& ex) {
      std::cerr << "error: InvalidConfig: " << ex.what() << "\n";
      return 2;
    }
    std::vector<char*> cargs;
    for (auto& x : args) cargs.push_back(x.data());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& ex) {
    if (ex.get_exit_code() == 0) return app.exit(ex);
    std::cerr << "error: Usage: " << ex.what() << "\n";
    return 2;
  }

  try {
    if (*g) return cmd_gen(common, gen);
    if (*p) return cmd_play(common, play);
    if (*r) return cmd_run(common, run);
    if (*t) return cmd_train(common, tr);
    if (*e) return cmd_eval(common, ev);
    if (*s) return cmd_stats(common, st);
    if (*v) return cmd_serve(common, sv);
    if (*a) return cmd_attn(common, at);
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.kind() << ": " << ex.what() << "\n";
    return 1;
  } catch (const json::exception& ex) {
    std::cerr << "error: InvalidJson: " << ex.what() << "\n";
    return 1;
  } catch (const std::exception& ex) {
    std::cerr << "error: Internal: " << ex.what() << "\n";
    return 1;
  }
  return 2;
}
