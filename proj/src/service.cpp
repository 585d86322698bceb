#include "tcar/service.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "tcar/error.hpp"

namespace tcar {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config and JSON views

ServiceConfig ServiceConfig::parse(const std::string& text) {
  ServiceConfig c;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(std::string("service config: ") + e.what());
  }
  if (!j.is_object()) throw FormatError("service config must be a JSON object");
  try {
    c.data_dir = j.value("data_dir", c.data_dir);
    c.models_dir = j.value("models_dir", c.models_dir);
    if (j.contains("worlds")) c.worlds = j.at("worlds").get<std::vector<std::string>>();
    c.history_path = j.value("history", c.history_path);
    c.transcript_dir = j.value("transcripts", c.transcript_dir);
    c.confidence_threshold = j.value("threshold", c.confidence_threshold);
    c.history_weight = j.value("history_weight", c.history_weight);
    c.planner_budget = j.value("planner_budget", c.planner_budget);
    c.port = j.value("port", c.port);
  } catch (const json::exception& e) {
    throw FormatError(std::string("service config: ") + e.what());
  }
  return c;
}

ServiceConfig ServiceConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open service config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  ServiceConfig c = parse(ss.str());
  // relative paths are relative to the config file
  const fs::path base = fs::path(path).parent_path();
  auto anchor = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  anchor(c.data_dir);
  anchor(c.models_dir);
  anchor(c.history_path);
  anchor(c.transcript_dir);
  for (auto& w : c.worlds) anchor(w);
  return c;
}

json to_json(const SimEvent& e) { return {{"seq", e.seq}, {"kind", to_string(e.kind)}, {"args", e.args}}; }

SimEvent sim_event_from_json(const json& j) {
  try {
    SimEvent e;
    e.seq = j.at("seq").get<std::uint64_t>();
    e.kind = parse_sim_event_kind(j.at("kind").get<std::string>());
    e.args = j.at("args").get<std::vector<std::string>>();
    return e;
  } catch (const json::exception& ex) {
    throw ProtocolError(std::string("malformed event: ") + ex.what());
  }
}

json to_json(const WorldModel& w) {
  json j;
  j["robot"] = {{"at", w.robot.location},
                {"holding", w.robot.holding ? json(*w.robot.holding) : json(nullptr)}};
  j["locations"] = json::array();
  for (const auto& l : w.locations) j["locations"].push_back(l.name);
  j["adjacency"] = json::array();
  for (const auto& [a, b] : w.adjacency) j["adjacency"].push_back({a, b});
  j["objects"] = json::array();
  for (const auto& o : w.objects) {
    j["objects"].push_back({{"name", o.name}, {"location", o.location.empty() ? json(nullptr) : json(o.location)}});
  }
  j["devices"] = json::array();
  for (const auto& d : w.devices) j["devices"].push_back({{"name", d.name}, {"location", d.location}, {"on", d.on}});
  j["people"] = json::array();
  for (const auto& p : w.people) j["people"].push_back({{"name", p.name}, {"location", p.location}});
  return j;
}

json to_json(const PendingQuestion& q) {
  return {{"kind", to_string(q.kind)},
          {"subject", q.subject},
          {"text", q.text},
          {"expected", to_string(q.expected)},
          {"choices", q.choices}};
}

// ---------------------------------------------------------------------------
// Service

struct Service::Session {
  std::string id;
  std::string world_id;
  std::uint64_t created = 0;  // creation order
  mutable std::mutex mutex;
  mutable std::condition_variable cv;
  DialogueSession dialogue;
  std::vector<SimEvent> events;
  std::uint64_t next_seq = 1;
  std::size_t persisted_turns = 0;
};

Service::Service(const ServiceConfig& config) : config_(config) {
  if (config_.data_dir.empty()) config_.data_dir = default_data_dir();
  if (config_.models_dir.empty()) throw ModelNotLoadedError("service config names no model directory");
  owned_resources_ = std::make_unique<Resources>(Resources::load(config_.data_dir));
  owned_models_ =
      std::make_unique<ModelBundle>(ModelBundle::load(config_.models_dir, owned_resources_->featurizer));
  resources_ = owned_resources_.get();
  models_ = owned_models_.get();

  std::vector<std::string> paths = config_.worlds;
  if (paths.empty()) {
    const fs::path dir = fs::path(config_.data_dir) / "worlds";
    if (fs::is_directory(dir)) {
      for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".world") paths.push_back(e.path().string());
      }
    }
    std::sort(paths.begin(), paths.end());
  }
  std::map<std::string, WorldModel> worlds;
  for (const auto& p : paths) worlds.emplace(fs::path(p).stem().string(), load_world(p));
  init(std::move(worlds));
}

Service::Service(const ServiceConfig& config, const Resources* resources, const ModelBundle* models,
                 std::map<std::string, WorldModel> worlds)
    : config_(config), resources_(resources), models_(models) {
  init(std::move(worlds));
}

Service::~Service() { shutdown(); }

void Service::init(std::map<std::string, WorldModel> worlds) {
  if (worlds.empty()) throw UnknownWorldError("no worlds loaded");
  for (auto& [id, w] : worlds) {
    worlds_.emplace(id, std::make_unique<KnowledgeBase>(std::move(w)));
    world_writers_.emplace(id, std::make_unique<std::mutex>());
  }
  if (!config_.history_path.empty()) {
    history_ = std::make_unique<InteractionHistory>(config_.history_path);
  } else {
    history_ = std::make_unique<InteractionHistory>();
  }
  if (!config_.transcript_dir.empty()) fs::create_directories(config_.transcript_dir);
  DialogueConfig dc;
  dc.confidence_threshold = config_.confidence_threshold;
  dc.history_weight = config_.history_weight;
  dc.planner.budget = config_.planner_budget;
  agent_ = std::make_unique<Agent>(*resources_, *models_, history_.get(), dc);
}

void Service::shutdown() {
  stopping_ = true;
  std::lock_guard lock(sessions_mutex_);
  for (auto& [id, s] : sessions_) s->cv.notify_all();
}

std::vector<std::string> Service::list_worlds() const {
  std::vector<std::string> out;
  for (const auto& [id, kb] : worlds_) out.push_back(id);
  return out;
}

WorldModel Service::world(const std::string& world_id) const {
  auto it = worlds_.find(world_id);
  if (it == worlds_.end()) throw UnknownWorldError("unknown world '" + world_id + "'");
  return it->second->snapshot();
}

Service::Session& Service::find(const std::string& id) const {
  std::lock_guard lock(sessions_mutex_);
  auto it = sessions_.find(id);
  if (it == sessions_.end()) throw UnknownSessionError("unknown session '" + id + "'");
  return *it->second;
}

json Service::snapshot_locked(const Session& s) const {
  const DialogueSession& d = s.dialogue;
  json j;
  j["id"] = s.id;
  j["world_id"] = s.world_id;
  j["created"] = s.created;
  j["state"] = to_string(d.state);
  j["state_name"] = describe(d.state);
  j["terminal"] = d.terminal();
  j["termination"] = to_string(d.termination);
  j["pending"] = d.pending ? to_json(*d.pending) : json(nullptr);
  j["transcript"] = json::array();
  for (const auto& [who, text] : d.transcript) j["transcript"].push_back({{"speaker", who}, {"text", text}});
  j["last_seq"] = s.next_seq - 1;
  j["world"] = to_json(worlds_.at(s.world_id)->snapshot());
  return j;
}

void Service::persist_turns(const Session& s, std::size_t from) const {
  if (config_.transcript_dir.empty()) return;
  const fs::path p = fs::path(config_.transcript_dir) / (s.id + ".jsonl");
  std::ofstream out(p, std::ios::app);
  if (!out) throw IoError("cannot append to transcript " + p.string());
  for (std::size_t i = from; i < s.dialogue.transcript.size(); ++i) {
    const auto& [who, text] = s.dialogue.transcript[i];
    out << json({{"session", s.id}, {"speaker", who}, {"text", text}}).dump() << "\n";
  }
  out.flush();
}

json Service::create_session(const std::string& world_id) {
  if (!worlds_.count(world_id)) throw UnknownWorldError("unknown world '" + world_id + "'");
  auto s = std::make_unique<Session>();
  Session* raw = s.get();
  {
    std::lock_guard lock(sessions_mutex_);
    raw->created = next_session_++;
    char id[32];
    std::snprintf(id, sizeof id, "s%04llu", static_cast<unsigned long long>(raw->created));
    raw->id = id;
    raw->world_id = world_id;
    sessions_.emplace(raw->id, std::move(s));
  }
  std::lock_guard lock(raw->mutex);
  std::string greeting;
  raw->dialogue = agent_->engine().start_session(&greeting, raw->created);
  raw->events.push_back({raw->next_seq++, SimEventKind::Speak, {greeting}});
  persist_turns(*raw, 0);
  raw->persisted_turns = raw->dialogue.transcript.size();
  raw->cv.notify_all();
  return snapshot_locked(*raw);
}

PostResult Service::post(const std::string& session_id, const std::string& text) {
  Session& s = find(session_id);
  std::lock_guard lock(s.mutex);
  if (s.dialogue.terminal()) throw SessionTerminatedError("session " + session_id + " has ended");
  KnowledgeBase& kb = *worlds_.at(s.world_id);
  std::lock_guard writer(*world_writers_.at(s.world_id));
  const WorldModel before = kb.snapshot();
  const StepResult r = agent_->engine().step(s.dialogue, text, before);

  PostResult out;
  out.response = r.response;
  out.events.push_back({s.next_seq++, SimEventKind::Speak, {r.response}});
  if (r.execution) {
    WorldModel w = before;
    std::vector<SimEvent> actions;
    for (const auto& plan : r.execution->plans) {
      Execution run = execute(plan.steps, w, s.next_seq);
      // one success event closes the whole instruction
      run.events.pop_back();
      s.next_seq += run.events.size();
      actions.insert(actions.end(), run.events.begin(), run.events.end());
      w = std::move(run.world);
    }
    for (const auto& plan : r.execution->plans) kb.apply(plan.steps);
    actions.push_back({s.next_seq++, SimEventKind::Success, {}});
    out.events.insert(out.events.end(), actions.begin(), actions.end());
  }
  s.events.insert(s.events.end(), out.events.begin(), out.events.end());
  persist_turns(s, s.persisted_turns);
  s.persisted_turns = s.dialogue.transcript.size();
  out.snapshot = snapshot_locked(s);
  s.cv.notify_all();
  return out;
}

std::vector<SimEvent> Service::events(const std::string& session_id, std::uint64_t from_seq) const {
  Session& s = find(session_id);
  std::lock_guard lock(s.mutex);
  std::vector<SimEvent> out;
  for (const auto& e : s.events) {
    if (e.seq >= from_seq) out.push_back(e);
  }
  return out;
}

std::vector<SimEvent> Service::wait_events(const std::string& session_id, std::uint64_t from_seq,
                                           int timeout_ms) const {
  Session& s = find(session_id);
  std::unique_lock lock(s.mutex);
  s.cv.wait_for(lock, std::chrono::milliseconds(timeout_ms),
                [&] { return stopping_ || s.next_seq > from_seq; });
  std::vector<SimEvent> out;
  for (const auto& e : s.events) {
    if (e.seq >= from_seq) out.push_back(e);
  }
  return out;
}

json Service::snapshot(const std::string& session_id) const {
  Session& s = find(session_id);
  std::lock_guard lock(s.mutex);
  return snapshot_locked(s);
}

namespace {

json error_json(const std::string& code, const std::string& message) {
  return {{"ok", false}, {"error", {{"code", code}, {"message", message}}}};
}

std::string string_field(const json& req, const char* key) {
  auto it = req.find(key);
  if (it == req.end() || !it->is_string()) throw ProtocolError(std::string("missing string field '") + key + "'");
  return it->get<std::string>();
}

std::uint64_t seq_field(const json& req) {
  auto it = req.find("from");
  if (it == req.end()) return 1;
  if (!it->is_number_integer() || it->get<std::int64_t>() < 0) {
    throw ProtocolError("'from' must be a non-negative integer");
  }
  return it->get<std::uint64_t>();
}

json events_json(const std::vector<SimEvent>& events) {
  json out = json::array();
  for (const auto& e : events) out.push_back(to_json(e));
  return out;
}

}  // namespace

json Service::handle(const json& req) {
  try {
    if (!req.is_object()) throw ProtocolError("request must be a JSON object");
    const std::string op = string_field(req, "op");
    if (op == "list-worlds") return {{"ok", true}, {"worlds", list_worlds()}};
    if (op == "create") return {{"ok", true}, {"session", create_session(string_field(req, "world"))}};
    if (op == "post") {
      const PostResult r = post(string_field(req, "session"), string_field(req, "text"));
      return {{"ok", true}, {"response", r.response}, {"events", events_json(r.events)}, {"snapshot", r.snapshot}};
    }
    if (op == "stream") {
      return {{"ok", true}, {"events", events_json(events(string_field(req, "session"), seq_field(req)))}};
    }
    if (op == "snapshot") return {{"ok", true}, {"snapshot", snapshot(string_field(req, "session"))}};
    throw ProtocolError("unknown op '" + op + "'");
  } catch (const Error& e) {
    return error_json(e.kind(), e.what());
  } catch (const json::exception& e) {
    return error_json("protocol", e.what());
  }
}

// ---------------------------------------------------------------------------
// Framing

namespace {

constexpr std::uint32_t kMaxFrame = 16u << 20;

bool read_exact(int fd, char* buf, std::size_t n, bool allow_eof) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, buf + got, n - got, 0);
    if (r == 0) {
      if (got == 0 && allow_eof) return false;
      throw ProtocolError("connection closed inside a frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("read failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

void write_frame(int fd, const std::string& payload) {
  if (payload.size() > kMaxFrame) throw ProtocolError("frame too large");
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::string buf(4, '\0');
  buf[0] = static_cast<char>((n >> 24) & 0xff);
  buf[1] = static_cast<char>((n >> 16) & 0xff);
  buf[2] = static_cast<char>((n >> 8) & 0xff);
  buf[3] = static_cast<char>(n & 0xff);
  buf += payload;
  std::size_t sent = 0;
  while (sent < buf.size()) {
    const ssize_t r = ::send(fd, buf.data() + sent, buf.size() - sent, MSG_NOSIGNAL);
    if (r < 0) {
      if (errno == EINTR) continue;
      throw ProtocolError(std::string("write failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(r);
  }
}

std::optional<std::string> read_frame(int fd) {
  unsigned char len[4];
  if (!read_exact(fd, reinterpret_cast<char*>(len), 4, true)) return std::nullopt;
  const std::uint32_t n = (std::uint32_t(len[0]) << 24) | (std::uint32_t(len[1]) << 16) |
                          (std::uint32_t(len[2]) << 8) | std::uint32_t(len[3]);
  if (n > kMaxFrame) throw ProtocolError("frame too large");
  std::string payload(n, '\0');
  if (n) read_exact(fd, payload.data(), n, false);
  return payload;
}

// ---------------------------------------------------------------------------
// Server

SocketServer::SocketServer(Service& service, int port, const std::string& host) : service_(service) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) throw IoError("bad listen address " + host);
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(listen_fd_, 16) < 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw IoError("cannot listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

SocketServer::~SocketServer() {
  stop();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(threads_mutex_);
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
  if (listen_fd_ >= 0) ::close(listen_fd_);
}

void SocketServer::stop() {
  if (stopped_.exchange(true)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  std::lock_guard lock(threads_mutex_);
  for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
}

void SocketServer::run() {
  while (!stopped_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      break;
    }
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(threads_mutex_);
    if (stopped_) {
      ::close(fd);
      break;
    }
    client_fds_.push_back(fd);
    threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void SocketServer::serve_connection(int fd) {
  try {
    while (!stopped_) {
      auto frame = read_frame(fd);
      if (!frame) break;
      json req;
      try {
        req = json::parse(*frame);
      } catch (const json::exception& e) {
        write_frame(fd, error_json("protocol", e.what()).dump());
        continue;
      }
      if (req.is_object() && req.value("op", "") == "subscribe") {
        std::string session;
        std::uint64_t from = 1;
        try {
          session = string_field(req, "session");
          from = seq_field(req);
          service_.events(session, from);
        } catch (const Error& e) {
          write_frame(fd, error_json(e.kind(), e.what()).dump());
          continue;
        }
        write_frame(fd, json({{"ok", true}, {"subscribed", session}, {"from", from}}).dump());
        while (!stopped_ && !service_.stopping()) {
          for (const auto& e : service_.wait_events(session, from, 200)) {
            write_frame(fd, json({{"event", to_json(e)}}).dump());
            from = e.seq + 1;
          }
        }
        break;
      }
      write_frame(fd, service_.handle(req).dump());
    }
  } catch (const Error&) {
    // peer went away mid-frame or the socket was shut down
  }
  std::lock_guard lock(threads_mutex_);
  client_fds_.erase(std::remove(client_fds_.begin(), client_fds_.end(), fd), client_fds_.end());
  ::close(fd);
}

// ---------------------------------------------------------------------------
// Client

Client::Client(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw IoError("cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
  ::freeaddrinfo(res);
  if (rc < 0) {
    const std::string why = std::strerror(errno);
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw IoError("cannot connect to " + host + ":" + std::to_string(port) + ": " + why);
  }
}

Client::~Client() { close(); }

void Client::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

json Client::request(const json& message) {
  write_frame(fd_, message.dump());
  auto reply = read_frame(fd_);
  if (!reply) throw ProtocolError("server closed the connection");
  try {
    return json::parse(*reply);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed reply: ") + e.what());
  }
}

std::optional<json> Client::next_message() {
  auto frame = read_frame(fd_);
  if (!frame) return std::nullopt;
  try {
    return json::parse(*frame);
  } catch (const json::exception& e) {
    throw ProtocolError(std::string("malformed message: ") + e.what());
  }
}

}  // namespace tcar
