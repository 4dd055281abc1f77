#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flowguard/engine.hpp"
#include "flowguard/spec.hpp"

namespace flowguard::library {

struct SpecSource {
  std::string name;  // Specification name attribute
  std::string file;  // e.g. "google-explicit-state.xml"
  std::string xml;
};

/// Bundled specs, sorted by name.
const std::vector<SpecSource>& builtin_spec_sources();
std::vector<std::string> builtin_spec_names();
bool has_builtin_spec(std::string_view name);
/// Throws std::out_of_range for an unknown name.
spec::ProtocolSpec builtin_spec(std::string_view name);
std::vector<spec::ProtocolSpec> builtin_specs();

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Actor { Browser, AttackerPage, RP, IdP, Tracker };
enum class Expect { Allow, AllowRewritten, AllowConfined, Block };
enum class Outcome { Benign, FlowDeviation, IntegrityFailure, Confinement };

std::string_view to_string(Actor a);
std::string_view to_string(Expect e);
std::string_view to_string(Outcome o);

struct ScenarioStep {
  Actor actor = Actor::Browser;
  spec::Direction direction = spec::Direction::Request;
  std::string method = "GET";
  std::string url;  // may contain {{location}} / {{placeholder:ID}}
  std::vector<std::pair<std::string, std::string>> headers;
  std::vector<std::pair<std::string, std::string>> params;
  std::optional<std::string> body;
  int status = 200;
  Expect expect = Expect::Allow;
  std::optional<engine::BlockReason> expect_reason;
  std::optional<double> time_offset_s;
  std::string note;
  int line = 0;
};

struct Scenario {
  std::string name;
  std::string description;
  std::string group;  // benign, attacks, compat, or empty for files on disk
  std::vector<std::string> specs;
  Outcome outcome = Outcome::Benign;
  std::optional<std::size_t> attack_step;  // 1-based
  std::optional<int> expect_runs_completed;
  std::optional<engine::RewriteScope> rewrite_scope;
  std::vector<ScenarioStep> steps;
  std::string source_dir;  // for resolving spec paths
};

/// Line-delimited JSON: an optional header object carrying "scenario",
/// then one object per step. Blank lines and lines starting with '#' are
/// skipped.
Scenario parse_scenario(std::string_view text, std::string default_name = {});
Scenario load_scenario_file(const std::string& path);
std::vector<Scenario> builtin_scenarios();
/// Throws std::out_of_range for an unknown name.
Scenario builtin_scenario(std::string_view name);

struct StepResult {
  std::size_t index = 0;  // 1-based
  ScenarioStep step;
  std::string summary;  // method/status and origin+path, never query strings
  engine::Verdict verdict;
  bool passed = false;
  std::string failure;
};

struct ScenarioReport {
  std::string name;
  std::string group;
  Outcome outcome = Outcome::Benign;
  std::vector<std::string> specs;
  std::vector<StepResult> steps;
  std::size_t injected_events = 0;
  int runs_completed = 0;
  int blocks = 0;
  std::string final_state;
  bool passed = false;
  std::string failure;  // first failing expectation, if any

  /// First step whose verdict blocked or confined a secret, 1-based.
  std::optional<std::size_t> first_defended_step() const;
  std::string to_text() const;
};

struct RunOptions {
  std::uint64_t seed = 0;
  engine::EngineConfig config;
  /// Unrelated events fed before step i (0-based); their verdicts are
  /// counted but not checked.
  std::function<std::vector<http::HttpEvent>(std::size_t)> interleave;
  /// Maps a scenario's spec entry to a spec. Defaults to the builtin
  /// catalog, then to a file relative to Scenario::source_dir.
  std::function<spec::ProtocolSpec(const Scenario&, const std::string&)> resolve_spec;
};

ScenarioReport run_scenario(const Scenario& sc, const RunOptions& options = {});
std::string render_reports(const std::vector<ScenarioReport>& reports);

}  // namespace flowguard::library
