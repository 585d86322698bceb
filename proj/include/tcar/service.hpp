#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <string>
#include <vector>

#include "json.hpp"
#include "tcar/app.hpp"
#include "tcar/sim.hpp"

namespace tcar {

// JSON config file; every key is optional:
//   data_dir, models_dir, worlds (array of world files), history,
//   transcripts (directory), threshold, history_weight, planner_budget, port
struct ServiceConfig {
  std::string data_dir;
  std::string models_dir;
  std::vector<std::string> worlds;  // default: every *.world in data_dir/worlds
  std::string history_path;         // empty: not persisted
  std::string transcript_dir;       // empty: not persisted
  double confidence_threshold = 0.6;
  double history_weight = 2.0;
  std::size_t planner_budget = 100000;
  int port = 7878;

  static ServiceConfig parse(const std::string& json_text);
  static ServiceConfig load(const std::string& path);
};

nlohmann::json to_json(const SimEvent& e);
SimEvent sim_event_from_json(const nlohmann::json& j);
nlohmann::json to_json(const WorldModel& w);
nlohmann::json to_json(const PendingQuestion& q);

struct PostResult {
  std::string response;
  std::vector<SimEvent> events;  // produced by this call
  nlohmann::json snapshot;
};

// Sessions over shared, immutable models. Each world is one KnowledgeBase
// shared by its sessions; calls on one session are serialized.
class Service {
 public:
  explicit Service(const ServiceConfig& config);
  // Ready-made parts, for tests; worlds keyed by id.
  Service(const ServiceConfig& config, const Resources* resources, const ModelBundle* models,
          std::map<std::string, WorldModel> worlds);
  ~Service();

  std::vector<std::string> list_worlds() const;
  // Throws UnknownWorldError.
  nlohmann::json create_session(const std::string& world_id);
  // Throws UnknownSessionError, SessionTerminatedError.
  PostResult post(const std::string& session_id, const std::string& text);
  // Events with seq >= from_seq, in order.
  std::vector<SimEvent> events(const std::string& session_id, std::uint64_t from_seq) const;
  // Blocks until an event with seq >= from_seq exists, the timeout passes
  // or shutdown() is called.
  std::vector<SimEvent> wait_events(const std::string& session_id, std::uint64_t from_seq, int timeout_ms) const;
  nlohmann::json snapshot(const std::string& session_id) const;
  WorldModel world(const std::string& world_id) const;

  void shutdown();
  bool stopping() const { return stopping_; }

  // One request object in, one response object out; errors become
  // {"ok": false, "error": {"code", "message"}}.
  nlohmann::json handle(const nlohmann::json& request);

 private:
  struct Session;
  Session& find(const std::string& id) const;
  nlohmann::json snapshot_locked(const Session& s) const;
  void persist_turns(const Session& s, std::size_t from) const;
  void init(std::map<std::string, WorldModel> worlds);

  ServiceConfig config_;
  std::unique_ptr<Resources> owned_resources_;
  std::unique_ptr<ModelBundle> owned_models_;
  const Resources* resources_ = nullptr;
  const ModelBundle* models_ = nullptr;
  std::unique_ptr<InteractionHistory> history_;
  std::unique_ptr<Agent> agent_;
  std::map<std::string, std::unique_ptr<KnowledgeBase>> worlds_;
  // Held from planning to apply, so two sessions never plan from the same
  // snapshot and then both write.
  std::map<std::string, std::unique_ptr<std::mutex>> world_writers_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::uint64_t next_session_ = 1;
  std::atomic<bool> stopping_{false};
};

// Framing: 4-byte big-endian payload length, then that many bytes of UTF-8
// JSON. Throws ProtocolError on short reads or oversized frames.
void write_frame(int fd, const std::string& payload);
std::optional<std::string> read_frame(int fd);  // nullopt on clean EOF

// Local TCP listener, one thread per connection. A "subscribe" request turns
// its connection into a one-way event feed.
class SocketServer {
 public:
  SocketServer(Service& service, int port, const std::string& host = "127.0.0.1");
  ~SocketServer();

  int port() const { return port_; }
  void run();   // accept loop; returns after stop()
  void stop();

 private:
  void serve_connection(int fd);

  Service& service_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopped_{false};
  std::mutex threads_mutex_;
  std::vector<std::thread> threads_;
  std::vector<int> client_fds_;
};

class Client {
 public:
  Client(const std::string& host, int port);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  nlohmann::json request(const nlohmann::json& message);
  // After a subscribe request: the next pushed message, or nullopt once
  // the server closes the feed.
  std::optional<nlohmann::json> next_message();
  void close();

 private:
  int fd_ = -1;
};

}  // namespace tcar
