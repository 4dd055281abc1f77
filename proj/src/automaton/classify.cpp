#include "flowguard/automaton.hpp"

namespace flowguard::automaton {

std::string_view to_string(ViolationReason r) {
  return r == ViolationReason::FlowDeviation ? "flow-deviation" : "integrity-failure";
}

std::string_view to_string(Classification::Kind k) {
  switch (k) {
    case Classification::Kind::Step: return "step";
    case Classification::Kind::Unrelated: return "unrelated";
    case Classification::Kind::Violation: return "violation";
  }
  return "?";
}

namespace {

using spec::ValuePattern;
using Bindings = std::vector<std::pair<std::string, std::string>>;
using Lookup = std::function<std::optional<std::string>(const std::string&)>;

std::optional<std::string> find_binding(const Bindings& b, const std::string& id) {
  for (const auto& [k, v] : b) {
    if (k == id) return v;
  }
  return std::nullopt;
}

// Value bound for an id captured by a component: group 1 of its regex, or
// the whole component when there is no group.
std::string captured(const CompiledValue& cv, const std::string& value) {
  if (cv.regex && cv.regex->capture_groups() > 0) return cv.regex->extract(value).value_or("");
  return value;
}

bool literal_equals(const CompiledValue& cv, const std::string& value, const Lookup& lookup) {
  auto expected = spec::expand_template(cv.pattern.text, lookup);
  return expected && *expected == value;
}

// A field may occur several times; it matches if some occurrence matches.
// Pending fields (literals whose references are not yet available) only
// need to be present.
struct Component {
  const CompiledValue* value;
  const std::optional<std::string>* id;
  std::vector<std::string> candidates;
};

struct Matcher {
  const Transition& t;
  Bindings bindings;
  std::vector<Component> deferred_local;
  std::vector<Component> deferred_cross;

  // Checks what needs no references; defers literal templates.
  bool first_pass(Component c) {
    if (c.candidates.empty()) return false;
    const auto& cv = *c.value;
    switch (cv.pattern.kind) {
      case ValuePattern::Kind::Any:
        if (*c.id) bindings.emplace_back(**c.id, c.candidates.front());
        return true;
      case ValuePattern::Kind::Regex:
        for (const auto& v : c.candidates) {
          if (cv.regex->search(v)) {
            if (*c.id) bindings.emplace_back(**c.id, captured(cv, v));
            return true;
          }
        }
        return false;
      case ValuePattern::Kind::Literal:
        if (cv.refs.empty()) {
          for (const auto& v : c.candidates) {
            if (v == cv.pattern.text) {
              if (*c.id) bindings.emplace_back(**c.id, v);
              return true;
            }
          }
          return false;
        }
        (cv.local ? deferred_local : deferred_cross).push_back(std::move(c));
        return true;
    }
    return false;
  }

  bool resolve(const Component& c, const Lookup& lookup) {
    for (const auto& v : c.candidates) {
      if (literal_equals(*c.value, v, lookup)) {
        if (*c.id) bindings.emplace_back(**c.id, v);
        return true;
      }
    }
    return false;
  }

  bool run_definition(const CompiledDefinition& d, const Lookup& lookup) {
    auto source = spec::expand_template(d.def.source, lookup);
    if (!source) return false;
    auto value = d.regexp.extract(*source);
    if (!value) return false;
    bindings.emplace_back(d.def.id, std::move(*value));
    return true;
  }
};

bool local_phase(Matcher& m, const http::HttpEvent& event) {
  const Transition& t = m.t;
  const bool is_req = http::is_request(event);
  if (is_req != (t.guard.direction == spec::Direction::Request)) return false;
  const http::AbsoluteUrl& url = http::event_url(event);

  if (is_req && t.guard.method && std::get<http::HttpRequest>(event).method != *t.guard.method) return false;

  if (t.endpoint) {
    if (!m.first_pass({&*t.endpoint, &t.guard.endpoint_id, {url.endpoint()}})) return false;
  } else if (t.guard.endpoint_id) {
    m.bindings.emplace_back(*t.guard.endpoint_id, url.endpoint());
  }

  if (is_req) {
    const auto params = std::get<http::HttpRequest>(event).params();
    for (const auto& f : t.parameters) {
      Component c{&f.value, &f.id, {}};
      for (const auto& [k, v] : params) {
        if (k == f.name) c.candidates.push_back(v);
      }
      if (!m.first_pass(std::move(c))) return false;
    }
  } else {
    const auto& headers = std::get<http::HttpResponse>(event).headers;
    for (const auto& f : t.headers) {
      if (!m.first_pass({&f.value, &f.id, headers.get_all(f.name)})) return false;
    }
  }

  const Lookup local_lookup = [&](const std::string& id) { return find_binding(m.bindings, id); };
  for (const auto& d : t.local_definitions) {
    if (!m.run_definition(d, local_lookup)) return false;
  }
  for (const auto& c : m.deferred_local) {
    if (!m.resolve(c, local_lookup)) return false;
  }
  return true;
}

// Checks that read earlier bindings. On failure, explains why.
bool cross_phase(Matcher& m, const Automaton& a, StateId state, const BindingEnv& env, std::string& why) {
  const Lookup lookup = [&](const std::string& id) -> std::optional<std::string> {
    if (auto v = find_binding(m.bindings, id)) return v;
    return env.lookup(a, state, id);
  };
  for (const auto& c : m.deferred_cross) {
    if (!m.resolve(c, lookup)) {
      why = "component does not equal '" + c.value->pattern.text + "' under current bindings";
      return false;
    }
  }
  for (const auto& d : m.t.cross_definitions) {
    if (!m.run_definition(d, lookup)) {
      why = "definition '" + d.def.id + "' does not match its source";
      return false;
    }
  }
  for (const auto& ci : m.t.integrity) {
    auto target = lookup(ci.policy.target);
    if (!target) {
      why = "integrity target '" + ci.policy.target + "' is unbound";
      return false;
    }
    bool ok = false;
    if (ci.regex) {
      ok = ci.regex->search(*target);
    } else {
      auto expected = spec::expand_template(ci.policy.matches.text, lookup);
      ok = expected && *expected == *target;
    }
    if (!ok) {
      why = "integrity constraint ${" + ci.policy.target + "} = " + ci.policy.matches.text + " violated";
      return false;
    }
  }
  return true;
}

}  // namespace

bool matches_shape(const Transition& t, const http::HttpEvent& event) {
  Matcher m{t, {}, {}, {}};
  return local_phase(m, event);
}

Classification classify(const Automaton& a, StateId state, const http::HttpEvent& event, const BindingEnv& env) {
  Classification out;
  bool integrity_failed = false;
  for (std::size_t ti : a.state(state).outgoing) {
    const Transition& t = a.transition(ti);
    Matcher m{t, {}, {}, {}};
    if (!local_phase(m, event)) continue;
    std::string why;
    if (cross_phase(m, a, state, env, why)) {
      out.kind = Classification::Kind::Step;
      out.transition = ti;
      out.bindings = std::move(m.bindings);
      out.diagnostics = {};
      return out;
    }
    if (!integrity_failed) out.transition = ti;
    integrity_failed = true;
    out.diagnostics.push_back(a.state(t.target).name + ": " + why);
  }
  if (integrity_failed) {
    out.kind = Classification::Kind::Violation;
    out.reason = ViolationReason::IntegrityFailure;
    return out;
  }
  for (std::size_t ti = 0; ti < a.transitions().size(); ++ti) {
    const Transition& t = a.transition(ti);
    if (matches_shape(t, event)) {
      out.kind = Classification::Kind::Violation;
      out.transition = ti;
      out.reason = ViolationReason::FlowDeviation;
      out.diagnostics.push_back("matches " + a.state(t.target).name + ", which is not enabled in state " +
                                a.state(state).name);
      return out;
    }
  }
  out.kind = Classification::Kind::Unrelated;
  return out;
}

}  // namespace flowguard::automaton
