#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "flowguard/http.hpp"
#include "flowguard/regex.hpp"
#include "flowguard/spec.hpp"

namespace flowguard::automaton {

using StateId = std::size_t;
inline constexpr StateId kInit = 0;

class CompileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct State {
  std::string name;
  std::optional<StateId> parent;  // tree parent; nullopt only for init
  std::size_t depth = 0;
  bool final = false;
  std::vector<std::size_t> outgoing;  // transition indices, in priority order
  std::vector<std::string> introduced;  // identifiers first bound entering here
  std::string spec;  // empty for init
};

/// A value constraint with its regex precompiled. `refs` holds the template
/// references of a Literal.
struct CompiledValue {
  spec::ValuePattern pattern;
  std::optional<regex::Pattern> regex;
  std::vector<std::string> refs;
  bool local = true;  // every reference is bound by the same message
};

struct CompiledField {
  std::string name;
  CompiledValue value;
  std::optional<std::string> id;
};

struct CompiledDefinition {
  spec::IdentifierDefinition def;
  regex::Pattern regexp;
};

struct CompiledIntegrity {
  spec::IntegrityPolicy policy;
  std::optional<regex::Pattern> regex;
};

struct Transition {
  StateId source = kInit;
  StateId target = kInit;
  spec::MessagePattern guard;
  std::string origin_spec;

  std::optional<CompiledValue> endpoint;
  std::vector<CompiledField> parameters;
  std::vector<CompiledField> headers;
  /// Definitions evaluated on this edge. Local ones depend only on values
  /// bound by this message and belong to the message shape; the rest also
  /// read earlier bindings.
  std::vector<CompiledDefinition> local_definitions;
  std::vector<CompiledDefinition> cross_definitions;

  std::vector<std::string> bindings_introduced;
  std::vector<spec::SecrecyPolicy> secrecy;
  std::vector<CompiledIntegrity> integrity;
};

class Automaton {
 public:
  const std::vector<State>& states() const { return states_; }
  const std::vector<Transition>& transitions() const { return transitions_; }
  const State& state(StateId id) const { return states_.at(id); }
  const Transition& transition(std::size_t i) const { return transitions_.at(i); }
  StateId init() const { return kInit; }
  std::vector<StateId> final_states() const;
  std::optional<StateId> find_state(const std::string& name) const;
  /// Names of the composed specs, in composition order.
  const std::vector<std::string>& spec_names() const { return spec_names_; }

  /// True if `a` lies on the tree path from init to `b` (inclusive).
  bool ancestor_or_self(StateId a, StateId b) const;
  /// State whose incoming edge binds `id` in the named spec, if any.
  std::optional<StateId> introduction_site(const std::string& spec, const std::string& id) const;

 private:
  friend Automaton compose(const std::vector<spec::ProtocolSpec>& specs);
  std::vector<State> states_;
  std::vector<Transition> transitions_;
  std::map<std::pair<std::string, std::string>, StateId> intro_;
  std::vector<std::string> spec_names_;
};

/// Throws CompileError on an empty flow, on error-level diagnostics, or on
/// duplicate spec names.
Automaton compile(const spec::ProtocolSpec& spec);
Automaton compose(const std::vector<spec::ProtocolSpec>& specs);

class BindingError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Identifier values for one run, each tagged with the state whose incoming
/// edge bound it.
class BindingEnv {
 public:
  struct Entry {
    std::string value;
    StateId bound_at = kInit;
  };

  /// Write-once: throws BindingError if `id` is already bound.
  void bind(const std::string& id, std::string value, StateId bound_at);
  /// Value of `id` if bound at an ancestor of (or at) `at`.
  std::optional<std::string> lookup(const Automaton& a, StateId at, const std::string& id) const;
  std::optional<std::string> raw(const std::string& id) const;
  const std::map<std::string, Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }
  void clear() { entries_.clear(); }

 private:
  std::map<std::string, Entry> entries_;
};

enum class ViolationReason { FlowDeviation, IntegrityFailure };

std::string_view to_string(ViolationReason r);

struct Classification {
  enum class Kind { Step, Unrelated, Violation };
  Kind kind = Kind::Unrelated;
  /// Step: the transition taken. Violation: the transition whose guard
  /// the event matched.
  std::optional<std::size_t> transition;
  std::vector<std::pair<std::string, std::string>> bindings;  // Step, in binding order
  std::optional<ViolationReason> reason;  // Violation
  std::vector<std::string> diagnostics;
};

std::string_view to_string(Classification::Kind k);

Classification classify(const Automaton& a, StateId state, const http::HttpEvent& event, const BindingEnv& env);

/// True if the event has the shape of the transition's guard, judged
/// without any earlier bindings.
bool matches_shape(const Transition& t, const http::HttpEvent& event);

/// Graphviz rendering: forward edges labelled with guards and policies,
/// dashed self-loops on non-final states.
std::string to_dot(const Automaton& a);

}  // namespace flowguard::automaton
