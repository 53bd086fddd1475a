#pragma once

// Policies over admissible actions: random, oracle (privileged goal
// access), and the neural agent. The neural agent with an empty subgraph is
// the text-only agent; with a knowledge-graph strategy it attends over the
// commonsense subgraph through co-attention and per-action general
// attention.

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "twc/embeddings.hpp"
#include "twc/engine.hpp"
#include "twc/error.hpp"
#include "twc/gamegen.hpp"
#include "twc/kg.hpp"
#include "twc/nn.hpp"
#include "twc/rng.hpp"
#include "twc/tensor.hpp"
#include "twc/text.hpp"
#include "twc/world.hpp"

namespace twc::agents {

using nlohmann::json;
using tensor::Tensor;

enum class ActMode { Sample, Greedy };

inline const std::string kSentinelNode = "<sentinel>";

// Per-action attention over subgraph nodes (sentinel last).
struct AttentionSnapshot {
  std::vector<std::string> nodes;
  std::vector<std::string> actions;
  std::vector<std::vector<double>> weights;  // one row per action
};

inline json attention_record(int t, const AttentionSnapshot& a) {
  json w = json::object();
  for (std::size_t i = 0; i < a.actions.size(); ++i) w[a.actions[i]] = a.weights[i];
  return {{"t", t}, {"nodes", a.nodes}, {"weights_per_action", w}};
}

struct Decision {
  std::size_t index = 0;
  std::vector<double> probs;
  double value = 0.0;
  double entropy = 0.0;
  // on the tape for neural agents in training; undefined otherwise
  Tensor log_prob;
  Tensor log_probs;  // every action
  Tensor value_t;
  Tensor entropy_t;
  std::optional<AttentionSnapshot> attention;
  std::size_t graph_nodes = 0;
  std::size_t graph_edges = 0;
};

class Agent {
 public:
  virtual ~Agent() = default;
  virtual std::string name() const = 0;
  virtual void begin_episode(const gamegen::GameSpec& game) = 0;
  virtual Decision act(const world::WorldState& s, const engine::Observation& obs,
                       const std::vector<engine::AdmissibleAction>& actions, ActMode mode, Rng& rng) = 0;
  virtual nn::ParameterStore* parameters() { return nullptr; }
  virtual bool learns() const { return false; }
};

// ---------------------------------------------------------------------------
// action choice

// Greedy: highest probability, ties to the lexicographically smallest
// surface. Sample: categorical draw.
inline std::size_t choose(const std::vector<double>& probs, const std::vector<engine::AdmissibleAction>& actions,
                          ActMode mode, Rng& rng) {
  if (probs.empty()) throw NoAdmissibleActions("no admissible actions");
  if (mode == ActMode::Sample) return rng.categorical(probs);
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best] || (probs[i] == probs[best] && actions[i].surface < actions[best].surface)) best = i;
  return best;
}

// ---------------------------------------------------------------------------
// baselines

class RandomAgent final : public Agent {
 public:
  std::string name() const override { return "random"; }
  void begin_episode(const gamegen::GameSpec&) override {}
  Decision act(const world::WorldState&, const engine::Observation&, const std::vector<engine::AdmissibleAction>& actions,
               ActMode, Rng& rng) override {
    if (actions.empty()) throw NoAdmissibleActions("no admissible actions");
    Decision d;
    d.probs.assign(actions.size(), 1.0 / static_cast<double>(actions.size()));
    d.index = rng.below(actions.size());
    d.entropy = std::log(static_cast<double>(actions.size()));
    return d;
  }
};

// Reads the goals. Delivers what it can where it stands, picks up every goal
// object in the room, and otherwise walks the next room of a minimal route.
// Takes exactly optimal_steps actions.
class OracleAgent final : public Agent {
 public:
  std::string name() const override { return "oracle"; }
  void begin_episode(const gamegen::GameSpec& game) override { goals_ = game.goals; }

  Decision act(const world::WorldState& s, const engine::Observation&, const std::vector<engine::AdmissibleAction>& actions,
               ActMode, Rng&) override {
    if (actions.empty()) throw NoAdmissibleActions("no admissible actions");
    const std::size_t i = plan(s, actions);
    Decision d;
    d.probs.assign(actions.size(), 0.0);
    d.probs[i] = 1.0;
    d.index = i;
    return d;
  }

 private:
  std::size_t plan(const world::WorldState& s, const std::vector<engine::AdmissibleAction>& actions) const {
    auto find = [&](auto pred) -> std::optional<std::size_t> {
      for (std::size_t i = 0; i < actions.size(); ++i)
        if (pred(actions[i].action)) return i;
      return std::nullopt;
    };
    auto here = [&](const std::string& oid) {
      const auto& p = s.placement.at(oid);
      if (p.kind == world::Placement::Kind::Floor) return p.ref == s.agent_room;
      if (p.kind == world::Placement::Kind::Fixture) return s.fixture_room(p.ref) == s.agent_room;
      return false;
    };
    std::vector<world::GoalTriple> open;
    for (std::size_t g = 0; g < goals_.size(); ++g) {
      if (s.achieved.contains(g)) continue;
      open.push_back(goals_[g]);
    }
    for (const auto& g : open)
      if (s.carrying(g.object_id) && g.room_id == s.agent_room)
        if (auto i = find([&](const auto& a) {
              return (a.verb == world::Verb::Put || a.verb == world::Verb::Insert) && a.arg1 == g.object_id &&
                     a.arg2 == g.location_id;
            }))
          return *i;
    for (bool local : {true, false})
      for (const auto& g : open)
        if (here(g.object_id) && (g.room_id == s.agent_room) == local)
          if (auto i = find([&](const auto& a) { return a.verb == world::Verb::Take && a.arg1 == g.object_id; }))
            return *i;
    if (!open.empty()) {
      const auto route = gamegen::plan_route(s, open);
      if (route.size() > 1) {
        for (const auto& [dir, to] : s.room(s.agent_room).exits)
          if (to == route[1])
            if (auto i = find([&](const auto& a) { return a.verb == world::Verb::Go && a.arg1 == dir; })) return *i;
      }
    }
    throw InvalidGameSpec("oracle found no useful action in room '" + s.agent_room + "'");
  }

  std::vector<world::GoalTriple> goals_;
};

// ---------------------------------------------------------------------------
// neural agent

struct AgentConfig {
  std::size_t hidden = 300;      // s_t, o_t and token states (two directions of hidden/2)
  std::size_t gat_dim = 50;      // per head
  int gat_heads = 1;
  std::size_t graph_dim = 100;   // width of the co-attended node encodings
  std::size_t mlp_hidden = 150;  // W_2 output
  kg::Strategy strategy = kg::Strategy::None;
  kg::Mode mode = kg::Mode::Evolve;

  void validate() const {
    if (hidden < 2 || hidden % 2) throw InvalidConfig("hidden must be even and >= 2");
    if (gat_dim == 0 || gat_heads < 1 || graph_dim == 0 || mlp_hidden == 0)
      throw InvalidConfig("agent layer sizes must be positive");
  }
};

inline json to_json(const AgentConfig& c) {
  return {{"hidden", c.hidden},       {"gat_dim", c.gat_dim},   {"gat_heads", c.gat_heads},
          {"graph_dim", c.graph_dim}, {"mlp_hidden", c.mlp_hidden}, {"strategy", kg::to_string(c.strategy)},
          {"mode", kg::to_string(c.mode)}};
}

inline AgentConfig agent_config_from(const json& j) {
  AgentConfig c;
  c.hidden = j.value("hidden", c.hidden);
  c.gat_dim = j.value("gat_dim", c.gat_dim);
  c.gat_heads = j.value("gat_heads", c.gat_heads);
  c.graph_dim = j.value("graph_dim", c.graph_dim);
  c.mlp_hidden = j.value("mlp_hidden", c.mlp_hidden);
  if (j.contains("strategy")) c.strategy = kg::strategy_from(j.at("strategy").get<std::string>());
  if (j.contains("mode")) c.mode = kg::mode_from(j.at("mode").get<std::string>());
  c.validate();
  return c;
}

// Handles to every learned tensor. All live in one ParameterStore.
struct NeuralParams {
  nn::GruParams enc_fwd, enc_bwd;  // shared by observations and actions
  nn::GruParams ctx;
  Tensor sentinel;                 // node feature of the sentinel
  std::vector<nn::GatHead> gat;
  Tensor proj_W, proj_b;           // GAT output -> hidden
  Tensor w0;                       // trilinear weights, 3 * hidden
  Tensor W;                        // 4 * hidden x graph_dim
  Tensor Wg;                       // 2 * hidden x graph_dim
  Tensor W2, b2;                   // (2 * hidden + graph_dim) x mlp_hidden
  Tensor W1, b1;                   // mlp_hidden x 1, 1
  Tensor wv, bv;                   // mlp_hidden, 1
};

inline NeuralParams make_params(nn::ParameterStore& ps, const AgentConfig& c, std::size_t word_dim, std::size_t kg_dim) {
  c.validate();
  NeuralParams p;
  const std::size_t h = c.hidden, half = c.hidden / 2, gat_out = c.gat_dim * static_cast<std::size_t>(c.gat_heads);
  const std::size_t r = 2 * h + c.graph_dim;
  p.enc_fwd = nn::make_gru(ps, "enc.fwd", word_dim, half);
  p.enc_bwd = nn::make_gru(ps, "enc.bwd", word_dim, half);
  p.ctx = nn::make_gru(ps, "ctx", h, h);
  p.sentinel = ps.create("kg.sentinel", {kg_dim}, kg_dim);
  p.gat = nn::make_gat(ps, "kg.gat", kg_dim, c.gat_dim, c.gat_heads);
  p.proj_W = ps.create("kg.proj.W", {gat_out, h}, gat_out);
  p.proj_b = ps.create_zeros("kg.proj.b", {h});
  p.w0 = ps.create("coatt.w0", {3 * h}, 3 * h);
  p.W = ps.create("coatt.W", {4 * h, c.graph_dim}, 4 * h);
  p.Wg = ps.create("att.Wg", {2 * h, c.graph_dim}, 2 * h);
  p.W2 = ps.create("pol.W2", {r, c.mlp_hidden}, r);
  p.b2 = ps.create_zeros("pol.b2", {c.mlp_hidden});
  p.W1 = ps.create("pol.W1", {c.mlp_hidden, 1}, c.mlp_hidden);
  p.b1 = ps.create_zeros("pol.b1", {1});
  p.wv = ps.create("val.w", {c.mlp_hidden}, c.mlp_hidden);
  p.bv = ps.create_zeros("val.b", {1});
  return p;
}

// --- the math, as free functions so tests can check each piece ---

struct EncodedText {
  Tensor states;  // N x hidden
  Tensor final;   // hidden
};

// Bidirectional GRU over word vectors; empty input is a single pad token.
inline EncodedText encode_text(const std::vector<std::string>& tokens, const Embeddings& emb, const NeuralParams& p) {
  auto out = nn::bigru(emb.sequence(tokens), p.enc_fwd, p.enc_bwd);
  return {out.states, out.final};
}

inline Tensor update_context(const Tensor& s_prev, const Tensor& o, const NeuralParams& p) {
  return nn::gru_cell(s_prev, o, p.ctx);
}

// Node features of the subgraph nodes plus the sentinel (last row), passed
// through graph attention; the sentinel has only its self-loop.
inline Tensor encode_graph(const kg::Subgraph& g, const Embeddings& kg_emb, const NeuralParams& p) {
  std::vector<Tensor> rows;
  for (const auto& n : g.nodes) rows.push_back(Tensor::vector(kg_emb.concept_vector(n)));
  rows.push_back(p.sentinel);
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : g.edges) {
    const int a = g.index_of(e.head), b = g.index_of(e.tail);
    if (a < 0 || b < 0) throw ShapeMismatch("subgraph edge with unknown node");
    edges.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
  }
  return nn::gat_layer(tensor::stack_rows(rows), edges, p.gat);
}

inline Tensor project_nodes(const Tensor& Z, const NeuralParams& p) {
  return tensor::add_row(tensor::matmul(Z, p.proj_W), p.proj_b);
}

// G: nodes x d, O: tokens x d.
//   S[j][i] = w0 . [g_i; o_j; g_i * o_j]
//   Sg = softmax over tokens per node, So = softmax over nodes per token
//   A = Sg O, B = Sg So G
//   G_final = [G, A, G*A, G*B] W
inline Tensor co_attend(const Tensor& G, const Tensor& O, const Tensor& w0, const Tensor& W) {
  if (W.rows() != 4 * G.cols())
    throw ShapeMismatch("co_attend: W " + tensor::shape_str(W.shape()) + " for node width " + std::to_string(G.cols()));
  Tensor S = nn::trilinear_similarity(G, O, w0);        // tokens x nodes
  Tensor Sg = tensor::softmax_rows(tensor::transpose(S));  // nodes x tokens
  Tensor So = tensor::softmax_rows(S);                   // tokens x nodes
  Tensor A = tensor::matmul(Sg, O);
  Tensor B = tensor::matmul(tensor::matmul(Sg, So), G);
  return tensor::matmul(tensor::concat_cols({G, A, tensor::mul(G, A), tensor::mul(G, B)}), W);
}

struct GraphSummary {
  Tensor alpha;  // actions x nodes, rows sum to 1
  Tensor g;      // actions x graph_dim
};

// alpha_i = softmax([s; a_i] Wg Gf^T), g_i = alpha_i Gf.
inline GraphSummary graph_summary(const Tensor& Gf, const Tensor& s, const Tensor& acts, const Tensor& Wg) {
  const std::size_t m = acts.rows();
  Tensor Q = tensor::matmul(tensor::concat_cols({tensor::repeat_rows(s, m), acts}), Wg);
  Tensor alpha = tensor::softmax_rows(tensor::matmul(Q, tensor::transpose(Gf)));
  return {alpha, tensor::matmul(alpha, Gf)};
}

struct PolicyScores {
  Tensor logits;  // one per action
  Tensor value;   // scalar
};

// r_i = [s; g_i; a_i], logit_i = W1 relu(W2 r_i + b2) + b1,
// v = wv . relu(W2 mean_i(r_i) + b2) + bv.
inline PolicyScores policy_scores(const Tensor& s, const Tensor& gsum, const Tensor& acts, const NeuralParams& p) {
  const std::size_t m = acts.rows();
  Tensor R = tensor::concat_cols({tensor::repeat_rows(s, m), gsum, acts});
  Tensor H = tensor::relu(tensor::add_row(tensor::matmul(R, p.W2), p.b2));
  Tensor logits = tensor::flatten(tensor::add_row(tensor::matmul(H, p.W1), p.b1));
  Tensor hv = tensor::relu(tensor::add(tensor::flatten(tensor::matmul(tensor::as_row(tensor::mean_rows(R)), p.W2)), p.b2));
  Tensor v = tensor::add(tensor::dot(hv, p.wv), tensor::pick(p.bv, 0));
  return {logits, v};
}

class NeuralAgent final : public Agent {
 public:
  // graph may be null (text-only). kg_emb defaults to the word embeddings.
  NeuralAgent(AgentConfig cfg, const Embeddings* words, const kg::ConceptGraph* graph, std::uint64_t seed,
              const Embeddings* kg_emb = nullptr)
      : cfg_(cfg),
        words_(words),
        kg_emb_(kg_emb ? kg_emb : words),
        graph_(graph),
        ps_(seed),
        dyn_(graph, graph ? cfg.strategy : kg::Strategy::None, cfg.mode) {
    if (!words_ || words_->dim() == 0) throw InvalidConfig("neural agent needs word embeddings");
    if (cfg_.strategy != kg::Strategy::None && !graph_)
      throw InvalidConfig("strategy '" + kg::to_string(cfg_.strategy) + "' needs a knowledge graph");
    p_ = make_params(ps_, cfg_, words_->dim(), kg_emb_->dim());
    s_ = Tensor::zeros({cfg_.hidden});
  }

  std::string name() const override {
    if (cfg_.strategy == kg::Strategy::None) return "text";
    return "kg-" + kg::to_string(cfg_.strategy) + "-" + kg::to_string(cfg_.mode);
  }
  nn::ParameterStore* parameters() override { return &ps_; }
  bool learns() const override { return true; }
  const AgentConfig& config() const { return cfg_; }
  const NeuralParams& params() const { return p_; }

  void begin_episode(const gamegen::GameSpec& game) override {
    s_ = Tensor::zeros({cfg_.hidden});
    dyn_.reset(game.initial, game.goals);
    text_cache_.clear();
    action_cache_.clear();
    graph_cache_.reset();
    graph_key_ = {SIZE_MAX, SIZE_MAX};
  }

  Decision act(const world::WorldState& s, const engine::Observation& obs,
               const std::vector<engine::AdmissibleAction>& actions, ActMode mode, Rng& rng) override {
    if (actions.empty()) throw NoAdmissibleActions("no admissible actions");
    const kg::Subgraph& sub = dyn_.observe(obs.tokens, s);
    const EncodedText& o = encoded(obs.text, obs.tokens);
    s_ = update_context(s_, o.final, p_);

    const std::pair<std::size_t, std::size_t> key{sub.nodes.size(), sub.edges.size()};
    if (!graph_cache_ || key != graph_key_) {
      graph_cache_ = project_nodes(encode_graph(sub, *kg_emb_, p_), p_);
      graph_key_ = key;
    }
    Tensor Gf = co_attend(*graph_cache_, o.states, p_.w0, p_.W);

    std::vector<Tensor> rows;
    rows.reserve(actions.size());
    for (const auto& a : actions) rows.push_back(action_vector(a.surface));
    Tensor A = tensor::stack_rows(rows);
    GraphSummary gs = graph_summary(Gf, s_, A, p_.Wg);
    PolicyScores ps = policy_scores(s_, gs.g, A, p_);

    Tensor logp = tensor::log_softmax(ps.logits);
    Tensor probs = tensor::softmax(ps.logits);
    Decision d;
    d.probs = probs.data();
    d.index = choose(d.probs, actions, mode, rng);
    d.log_probs = logp;
    d.log_prob = tensor::pick(logp, d.index);
    d.value_t = ps.value;
    d.value = ps.value.item();
    d.entropy_t = tensor::scale(tensor::dot(probs, logp), -1.0);
    d.entropy = d.entropy_t.item();
    d.graph_nodes = sub.nodes.size();
    d.graph_edges = sub.edges.size();

    AttentionSnapshot snap;
    snap.nodes = sub.nodes;
    snap.nodes.push_back(kSentinelNode);
    const std::size_t n = snap.nodes.size();
    for (std::size_t i = 0; i < actions.size(); ++i) {
      snap.actions.push_back(actions[i].surface);
      snap.weights.emplace_back(gs.alpha.data().begin() + static_cast<long>(i * n),
                                gs.alpha.data().begin() + static_cast<long>((i + 1) * n));
    }
    d.attention = std::move(snap);
    return d;
  }

  const Tensor& state() const { return s_; }
  const kg::Subgraph& subgraph() const { return dyn_.current(); }

 private:
  const EncodedText& encoded(const std::string& key, const std::vector<std::string>& tokens) {
    auto it = text_cache_.find(key);
    if (it == text_cache_.end()) it = text_cache_.emplace(key, encode_text(tokens, *words_, p_)).first;
    return it->second;
  }

  Tensor action_vector(const std::string& surface) {
    auto it = action_cache_.find(surface);
    if (it == action_cache_.end()) it = action_cache_.emplace(surface, encode_text(text::tokenize(surface), *words_, p_).final).first;
    return it->second;
  }

  AgentConfig cfg_;
  const Embeddings* words_;
  const Embeddings* kg_emb_;
  const kg::ConceptGraph* graph_;
  nn::ParameterStore ps_;
  NeuralParams p_;
  kg::DynamicSubgraph dyn_;
  Tensor s_;
  // per-episode caches; cleared in begin_episode so no stale tape survives
  std::unordered_map<std::string, EncodedText> text_cache_;
  std::unordered_map<std::string, Tensor> action_cache_;
  std::optional<Tensor> graph_cache_;
  std::pair<std::size_t, std::size_t> graph_key_{SIZE_MAX, SIZE_MAX};
};

}  // namespace twc::agents
