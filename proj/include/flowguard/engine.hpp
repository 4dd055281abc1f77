#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowguard/automaton.hpp"
#include "flowguard/http.hpp"

namespace flowguard::engine {

class EntropyUnavailable : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Byte source for placeholders. Implementations need not be thread-safe;
/// each MonitorContext owns or exclusively borrows one.
class RandomSource {
 public:
  virtual ~RandomSource() = default;
  virtual void fill(std::span<unsigned char> out) = 0;
};

/// Cryptographically secure bytes (libsodium).
class SystemRandom : public RandomSource {
 public:
  SystemRandom();  // throws EntropyUnavailable
  void fill(std::span<unsigned char> out) override;
};

/// Deterministic bytes for replay and tests. Not for live use.
class SeededRandom : public RandomSource {
 public:
  explicit SeededRandom(std::uint64_t seed) : gen_(seed) {}
  void fill(std::span<unsigned char> out) override;

 private:
  std::mt19937_64 gen_;
};

struct RewriteScope {
  bool headers = true;
  bool url_params = true;
  bool form_body = false;

  bool operator==(const RewriteScope&) const = default;
};

struct EngineConfig {
  std::string placeholder_prefix = "WPSE-";
  std::size_t placeholder_entropy_bytes = 16;
  std::chrono::seconds run_timeout{300};
  RewriteScope rewrite_scope;

  /// Throws ConfigError when entropy < 16 bytes or the prefix is empty or
  /// not URL-safe.
  void validate() const;
};

/// Monotonic event time supplied by the caller.
using Timestamp = std::chrono::milliseconds;

std::string make_placeholder(const EngineConfig& config, RandomSource& rng);

struct VaultEntry {
  std::string placeholder;
  std::string secret;  // exact text the placeholder stands for
  std::string identifier;
  std::vector<http::Origin> origins;
};

/// Placeholders and the secrets they stand for, for one protocol run.
class SecretVault {
 public:
  /// Fresh placeholder for `secret`, distinct from every live one.
  const VaultEntry& add(std::string secret, std::string identifier, std::vector<http::Origin> origins,
                        const EngineConfig& config, RandomSource& rng);
  const VaultEntry* find(std::string_view placeholder) const;
  const std::vector<VaultEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<VaultEntry> entries_;
};

enum class Action { Allow, Block };
enum class BlockReason { FlowDeviation, IntegrityFailure };

std::string_view to_string(Action a);
std::string_view to_string(BlockReason r);

struct PlaceholderNote {
  std::string placeholder;
  std::string identifier;
  bool operator==(const PlaceholderNote&) const = default;
};

struct Verdict {
  Action action = Action::Allow;
  std::optional<BlockReason> reason;
  automaton::Classification::Kind classification = automaton::Classification::Kind::Unrelated;
  /// The event to deliver: rewritten on Allow, the original on Block.
  http::HttpEvent event;
  std::vector<std::string> diagnostics;
  std::vector<PlaceholderNote> placeholders_created;
  std::vector<PlaceholderNote> placeholders_substituted;
  std::vector<PlaceholderNote> placeholders_withheld;
  std::string state_before;
  std::string state_after;
  std::string spec;  // spec of the matched or offending transition
  bool run_completed = false;
  bool timed_out = false;  // a stale run was reset before this event

  bool allowed() const { return action == Action::Allow; }
  bool rewritten() const { return !placeholders_created.empty() || !placeholders_substituted.empty(); }
};

/// Monitor state for one client. Not thread-safe: callers serialize events
/// per context (a context may move between threads between events).
class MonitorContext {
 public:
  MonitorContext(std::shared_ptr<const automaton::Automaton> automaton, EngineConfig config,
                 std::shared_ptr<RandomSource> rng, std::string context_id = "default");

  Verdict on_request(const http::HttpRequest& req, Timestamp now);
  Verdict on_response(const http::HttpResponse& resp, Timestamp now);
  void reset();

  const automaton::Automaton& automaton() const { return *automaton_; }
  automaton::StateId current_state() const { return state_; }
  const automaton::BindingEnv& env() const { return env_; }
  const SecretVault& vault() const { return vault_; }
  const EngineConfig& config() const { return config_; }
  const std::string& id() const { return id_; }
  bool in_run() const { return state_ != automaton::kInit; }

 private:
  void expire_if_stale(Timestamp now, Verdict& v);
  Verdict start(const http::HttpEvent& original, Timestamp now);
  void apply(const automaton::Classification& c, Verdict& v, Timestamp now);
  void bind_step(const automaton::Transition& t, const automaton::Classification& c, const http::HttpEvent& event);
  void strip_response(http::HttpResponse& resp, const automaton::Transition* step, Verdict& v);

  std::shared_ptr<const automaton::Automaton> automaton_;
  EngineConfig config_;
  std::shared_ptr<RandomSource> rng_;
  std::string id_;
  automaton::StateId state_ = automaton::kInit;
  automaton::BindingEnv env_;
  SecretVault vault_;
  std::optional<Timestamp> last_step_;
};

/// One JSON object per line. Carries origins, states, classifications and
/// placeholder strings; never secrets, full URLs or message bodies.
class VerdictLog {
 public:
  explicit VerdictLog(std::ostream& out) : out_(&out) {}
  void write(const std::string& context_id, const http::HttpEvent& original, const Verdict& v,
             std::chrono::system_clock::time_point when = std::chrono::system_clock::now());

 private:
  std::mutex mu_;
  std::ostream* out_;
};

std::string verdict_log_line(const std::string& context_id, const http::HttpEvent& original, const Verdict& v,
                             std::chrono::system_clock::time_point when);

}  // namespace flowguard::engine
