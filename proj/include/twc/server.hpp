#pragma once

// Human play sessions over HTTP. Each session appends one JSON line per
// event to <data-dir>/sessions/<id>.jsonl; on start-up the files are
// replayed through the engine to rebuild state.

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "twc/engine.hpp"
#include "twc/error.hpp"
#include "twc/gamegen.hpp"
#include "twc/rng.hpp"
#include "twc/world.hpp"

namespace twc::server {

using nlohmann::json;

// Request failure with an HTTP status.
class HttpError : public std::runtime_error {
 public:
  HttpError(int status, std::string kind, const std::string& message, json extra = json::object())
      : std::runtime_error(message), status_(status), kind_(std::move(kind)), extra_(std::move(extra)) {}
  int status() const { return status_; }
  const std::string& kind() const { return kind_; }
  json body() const {
    json j = extra_;
    j["error"] = kind_;
    j["message"] = what();
    return j;
  }

 private:
  int status_;
  std::string kind_;
  json extra_;
};

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// RFC 4122 version-4 layout.
inline std::string make_uuid(Rng& rng) {
  std::uint64_t hi = rng.next(), lo = rng.next();
  hi = (hi & ~0xF000ULL) | 0x4000ULL;
  lo = (lo & ~(0xC000000000000000ULL)) | 0x8000000000000000ULL;
  char buf[40];
  std::snprintf(buf, sizeof buf, "%08x-%04x-%04x-%04x-%012llx", static_cast<unsigned>(hi >> 32),
                static_cast<unsigned>((hi >> 16) & 0xFFFF), static_cast<unsigned>(hi & 0xFFFF),
                static_cast<unsigned>(lo >> 48), static_cast<unsigned long long>(lo & 0xFFFFFFFFFFFFULL));
  return buf;
}

struct Session {
  std::string id;
  std::shared_ptr<const gamegen::GameSpec> game;
  std::string annotator;
  std::string created;
  std::string finished;  // empty while running
  world::WorldState state;
  engine::Observation observation;
  std::vector<engine::AdmissibleAction> admissible;
  std::vector<json> transcript;
  std::vector<std::size_t> choices;  // admissible indices, for replay
  std::mutex mu;

  bool done() const { return world::is_terminal(state, game->goals, engine::kDefaultMaxSteps); }
  double normalized_score() const {
    return game->goals.empty() ? 0.0 : static_cast<double>(state.score) / static_cast<double>(game->goals.size());
  }
};

// Applies admissible action k and records it.
inline void advance(Session& s, std::size_t k) {
  const auto& a = s.admissible[k];
  auto r = engine::step(s.state, a.action, s.game->goals);
  std::vector<std::string> names;
  for (const auto& x : s.admissible) names.push_back(x.surface);
  s.transcript.push_back(
      engine::transcript_record(s.state.step, s.observation.text, names, a.surface, r.reward, r.state.score, r.done));
  s.choices.push_back(k);
  s.state = std::move(r.state);
  s.observation = std::move(r.observation);
  s.admissible = engine::admissible_actions(s.state, s.game->goals);
}

// Session state after replaying `choices` from the initial state.
inline void replay(Session& s, const std::vector<std::size_t>& choices) {
  s.state = s.game->initial;
  s.observation = engine::render_observation(s.state);
  s.admissible = engine::admissible_actions(s.state, s.game->goals);
  s.transcript.clear();
  s.choices.clear();
  for (std::size_t k : choices) {
    if (s.done()) throw InvalidDataset("session " + s.id + " continues past the end of the game");
    if (k >= s.admissible.size()) throw InvalidDataset("session " + s.id + " has an out-of-range action");
    advance(s, k);
  }
}

class SessionStore {
 public:
  SessionStore(std::vector<gamegen::GameSpec> games, std::filesystem::path data_dir)
      : data_dir_(std::move(data_dir)), rng_(std::random_device{}() ^ (std::uint64_t{std::random_device{}()} << 32)) {
    for (auto& g : games) {
      const std::string id = g.id;
      order_.push_back(id);
      games_[id] = std::make_shared<const gamegen::GameSpec>(std::move(g));
    }
    if (!data_dir_.empty()) {
      std::filesystem::create_directories(sessions_dir());
      load();
    }
  }

  json games() const {
    json out = json::array();
    for (const auto& id : order_) {
      const auto& g = *games_.at(id);
      out.push_back({{"id", g.id},
                     {"difficulty", gamegen::to_string(g.tier)},
                     {"split", gamegen::to_string(g.split)},
                     {"optimal_steps", gamegen::optimal_steps(g)}});
    }
    return out;
  }

  json create(const json& body) {
    if (!body.is_object() || !body.contains("game_id") || !body["game_id"].is_string())
      throw HttpError(400, "BadRequest", "body must contain a string game_id");
    const std::string game_id = body["game_id"];
    auto it = games_.find(game_id);
    if (it == games_.end()) throw HttpError(404, "UnknownGame", "no game '" + game_id + "'");
    auto s = std::make_shared<Session>();
    s->game = it->second;
    s->annotator = body.contains("annotator") && body["annotator"].is_string() ? body["annotator"].get<std::string>()
                                                                              : "anonymous";
    s->created = utc_now();
    replay(*s, {});
    {
      std::unique_lock lock(mu_);
      do s->id = make_uuid(rng_);
      while (sessions_.count(s->id));
      sessions_[s->id] = s;
    }
    append(*s, {{"type", "session"}, {"id", s->id}, {"game_id", game_id}, {"annotator", s->annotator},
                {"created", s->created}});
    std::lock_guard lock(s->mu);
    json out = view(*s);
    out["session_id"] = s->id;
    out["optimal_steps"] = gamegen::optimal_steps(*s->game);
    return out;
  }

  json act(const std::string& id, const json& body) {
    auto s = find(id);
    if (!body.is_object() || !body.contains("action_index") || !body["action_index"].is_number_integer())
      throw HttpError(400, "BadRequest", "body must contain an integer action_index");
    std::lock_guard lock(s->mu);
    if (s->done()) throw HttpError(409, "AlreadyTerminal", "session is finished");
    if (body.contains("step") && body["step"] != s->state.step)
      throw HttpError(409, "StaleAction", "action refers to step " + body["step"].dump() + ", session is at step " +
                                              std::to_string(s->state.step),
                      {{"step", s->state.step}});
    const auto k = body["action_index"].get<long long>();
    if (k < 0 || static_cast<std::size_t>(k) >= s->admissible.size())
      throw HttpError(400, "InadmissibleAction", "action_index out of range",
                      {{"admissible_count", s->admissible.size()}});
    advance(*s, static_cast<std::size_t>(k));
    json ev{{"type", "action"}, {"action_index", k}, {"record", s->transcript.back()}};
    if (s->done()) {
      s->finished = utc_now();
      ev["finished"] = s->finished;
    }
    append(*s, ev);
    json out = view(*s);
    out["reward"] = s->transcript.back()["reward"];
    return out;
  }

  json get(const std::string& id) {
    auto s = find(id);
    std::lock_guard lock(s->mu);
    json out = view(*s);
    out["session_id"] = s->id;
    out["game_id"] = s->game->id;
    out["annotator"] = s->annotator;
    out["created"] = s->created;
    out["finished"] = s->finished.empty() ? json(nullptr) : json(s->finished);
    out["optimal_steps"] = gamegen::optimal_steps(*s->game);
    out["transcript"] = s->transcript;
    return out;
  }

  // Finished sessions, grouped by annotator then difficulty.
  json summary() {
    struct Acc {
      std::vector<double> steps, scores;
    };
    std::map<std::string, std::map<std::string, Acc>> acc;
    for (auto& s : snapshot()) {
      std::lock_guard lock(s->mu);
      if (!s->done()) continue;
      auto& a = acc[s->annotator][gamegen::to_string(s->game->tier)];
      a.steps.push_back(s->state.step);
      a.scores.push_back(s->normalized_score());
    }
    auto stats = [](const std::vector<double>& xs) {
      double m = 0, v = 0;
      for (double x : xs) m += x;
      m /= static_cast<double>(xs.size());
      for (double x : xs) v += (x - m) * (x - m);
      return json{{"mean", m}, {"std", std::sqrt(v / static_cast<double>(xs.size()))}};
    };
    json out = json::object();
    for (const auto& [who, tiers] : acc)
      for (const auto& [tier, a] : tiers)
        out[who][tier] = {{"sessions", a.steps.size()}, {"steps", stats(a.steps)}, {"score", stats(a.scores)}};
    return {{"annotators", out}};
  }

  std::size_t size() const {
    std::shared_lock lock(mu_);
    return sessions_.size();
  }

 private:
  std::filesystem::path sessions_dir() const { return data_dir_ / "sessions"; }

  std::shared_ptr<Session> find(const std::string& id) {
    std::shared_lock lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw HttpError(404, "UnknownSession", "no session '" + id + "'");
    return it->second;
  }

  std::vector<std::shared_ptr<Session>> snapshot() const {
    std::shared_lock lock(mu_);
    std::vector<std::shared_ptr<Session>> out;
    for (const auto& [_, s] : sessions_) out.push_back(s);
    return out;
  }

  static json view(const Session& s) {
    json names = json::array();
    for (const auto& a : s.admissible) names.push_back(a.surface);
    return {{"observation", s.observation.text}, {"admissible", names}, {"score", s.state.score},
            {"step", s.state.step},              {"done", s.done()},    {"max_score", s.game->goals.size()}};
  }

  void append(const Session& s, const json& line) {
    if (data_dir_.empty()) return;
    std::ofstream out(sessions_dir() / (s.id + ".jsonl"), std::ios::app | std::ios::binary);
    if (!out) throw IoError("cannot write session " + s.id);
    out << line.dump() << "\n";
  }

  void load() {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(sessions_dir()))
      if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      try {
        auto s = load_session(f);
        sessions_[s->id] = s;
      } catch (const std::exception& e) {
        std::cerr << "warning: skipping " << f.filename().string() << ": " << e.what() << "\n";
      }
    }
  }

  std::shared_ptr<Session> load_session(const std::filesystem::path& f) {
    std::ifstream in(f, std::ios::binary);
    std::string line;
    auto s = std::make_shared<Session>();
    std::vector<std::size_t> choices;
    std::vector<json> records;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      if (j.at("type") == "session") {
        s->id = j.at("id");
        s->annotator = j.value("annotator", "anonymous");
        s->created = j.value("created", "");
        auto it = games_.find(j.at("game_id").get<std::string>());
        if (it == games_.end()) throw InvalidDataset("unknown game " + j.at("game_id").dump());
        s->game = it->second;
      } else if (j.at("type") == "action") {
        choices.push_back(j.at("action_index").get<std::size_t>());
        records.push_back(j.at("record"));
        if (j.contains("finished")) s->finished = j["finished"];
      }
    }
    if (!s->game) throw InvalidDataset("missing session header");
    replay(*s, choices);
    // the stored records are the integrity check for the replay
    for (std::size_t i = 0; i < records.size(); ++i)
      if (records[i] != s->transcript[i]) throw InvalidDataset("transcript diverges from replay at step " + std::to_string(i));
    return s;
  }

  std::filesystem::path data_dir_;
  std::map<std::string, std::shared_ptr<const gamegen::GameSpec>> games_;
  std::vector<std::string> order_;
  mutable std::shared_mutex mu_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  Rng rng_;
};

// Registers /api routes (and the static bundle at "/" when static_dir
// exists) on an httplib server.
inline void mount(httplib::Server& http, SessionStore& store, const std::filesystem::path& static_dir = {}) {
  auto handle = [](httplib::Response& res, const std::function<json()>& fn) {
    try {
      res.set_content(fn().dump(), "application/json");
    } catch (const HttpError& e) {
      res.status = e.status();
      res.set_content(e.body().dump(), "application/json");
    } catch (const json::exception& e) {
      res.status = 400;
      res.set_content(json{{"error", "BadRequest"}, {"message", e.what()}}.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 500;
      res.set_content(json{{"error", "Internal"}, {"message", e.what()}}.dump(), "application/json");
    }
  };
  auto body_of = [](const httplib::Request& req) { return req.body.empty() ? json::object() : json::parse(req.body); };

  http.Get("/api/games", [&store, handle](const httplib::Request&, httplib::Response& res) {
    handle(res, [&] { return store.games(); });
  });
  http.Post("/api/sessions", [&store, handle, body_of](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return store.create(body_of(req)); });
    if (res.status < 300) res.status = 201;
  });
  http.Post(R"(/api/sessions/([^/]+)/action)",
            [&store, handle, body_of](const httplib::Request& req, httplib::Response& res) {
              handle(res, [&] { return store.act(req.matches[1], body_of(req)); });
            });
  http.Get(R"(/api/sessions/([^/]+))", [&store, handle](const httplib::Request& req, httplib::Response& res) {
    handle(res, [&] { return store.get(req.matches[1]); });
  });
  http.Get("/api/summary", [&store, handle](const httplib::Request&, httplib::Response& res) {
    handle(res, [&] { return store.summary(); });
  });
  if (!static_dir.empty() && std::filesystem::is_directory(static_dir)) http.set_mount_point("/", static_dir.string());
}

}  // namespace twc::server
