#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "flowguard/automaton.hpp"
#include "flowguard/engine.hpp"

namespace flowguard::proxy {

enum class Keying { PerClientIp, PerProxyCredential, Single };
enum class TlsMode { Passthrough, Terminate };

std::string_view to_string(Keying k);
std::string_view to_string(TlsMode m);

struct ProxyConfig {
  std::string listen_address = "127.0.0.1";
  std::uint16_t listen_port = 8080;
  /// Builtin spec names or file paths, in composition order.
  std::vector<std::string> specs;
  Keying keying = Keying::PerClientIp;
  engine::EngineConfig engine;
  /// "-" for stdout, "" for stderr, otherwise a file appended to.
  std::string log = "-";
  TlsMode tls = TlsMode::Passthrough;
  std::string ca_cert;
  std::string ca_key;
  /// Extra trust anchors for upstream TLS in terminate mode.
  std::string upstream_ca;
  bool upstream_verify = true;
  std::size_t max_body_bytes = 64u << 20;

  /// Throws engine::ConfigError.
  void validate() const;
};

/// key = value lines, '#' comments, optional [rewrite] / [placeholder]
/// sections. Relative spec and CA paths resolve against `base_dir`.
ProxyConfig parse_config(const std::string& text, const std::string& base_dir = ".");
ProxyConfig load_config(const std::string& path);

/// Composes the configured specs; builtin names win over files.
std::shared_ptr<const automaton::Automaton> load_automaton(const ProxyConfig& config);

/// One monitor per client key. Access to a context goes through a FIFO
/// ticket so events from one client are handled strictly in arrival order.
class ContextRegistry {
 public:
  ContextRegistry(std::shared_ptr<const automaton::Automaton> automaton, engine::EngineConfig config,
                  std::function<std::shared_ptr<engine::RandomSource>()> make_rng = {});

  template <typename F>
  auto with(const std::string& key, F&& fn) {
    auto slot = slot_for(key);
    Ticket t(*slot);
    return fn(slot->ctx);
  }

  std::size_t size() const;
  std::vector<std::string> keys() const;

 private:
  struct Slot {
    Slot(std::shared_ptr<const automaton::Automaton> a, engine::EngineConfig c,
         std::shared_ptr<engine::RandomSource> r, std::string id)
        : ctx(std::move(a), std::move(c), std::move(r), std::move(id)) {}
    std::mutex mu;
    std::condition_variable cv;
    std::uint64_t next = 0;
    std::uint64_t serving = 0;
    engine::MonitorContext ctx;
  };

  class Ticket {
   public:
    explicit Ticket(Slot& s);
    ~Ticket();
    Ticket(const Ticket&) = delete;
    Ticket& operator=(const Ticket&) = delete;

   private:
    Slot& slot_;
  };

  std::shared_ptr<Slot> slot_for(const std::string& key);

  std::shared_ptr<const automaton::Automaton> automaton_;
  engine::EngineConfig config_;
  std::function<std::shared_ptr<engine::RandomSource>()> make_rng_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Slot>> slots_;
};

class Server {
 public:
  /// Throws engine::ConfigError for bad settings or CA material.
  explicit Server(ProxyConfig config, std::shared_ptr<const automaton::Automaton> automaton = nullptr);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting on a background thread. Returns the bound
  /// port. Throws std::runtime_error when the address cannot be bound.
  std::uint16_t start();
  void stop();
  /// Blocks until stop() is called from elsewhere.
  void wait();

  ContextRegistry& contexts();
  std::uint64_t blocked_requests() const;
  std::uint64_t forwarded_requests() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace flowguard::proxy
