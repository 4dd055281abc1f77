#include <set>

#include "flowguard/automaton.hpp"
#include "spec/scope.hpp"

namespace flowguard::automaton {

std::vector<StateId> Automaton::final_states() const {
  std::vector<StateId> out;
  for (StateId s = 0; s < states_.size(); ++s) {
    if (states_[s].final) out.push_back(s);
  }
  return out;
}

std::optional<StateId> Automaton::find_state(const std::string& name) const {
  for (StateId s = 0; s < states_.size(); ++s) {
    if (states_[s].name == name) return s;
  }
  return std::nullopt;
}

bool Automaton::ancestor_or_self(StateId a, StateId b) const {
  std::optional<StateId> cur = b;
  while (cur) {
    if (*cur == a) return true;
    cur = states_.at(*cur).parent;
  }
  return false;
}

std::optional<StateId> Automaton::introduction_site(const std::string& spec, const std::string& id) const {
  auto it = intro_.find({spec, id});
  if (it == intro_.end()) return std::nullopt;
  return it->second;
}

namespace {

using spec::ValuePattern;

CompiledValue compile_value(const ValuePattern& v, const std::function<bool(const std::string&)>& is_local) {
  CompiledValue cv;
  cv.pattern = v;
  if (v.kind == ValuePattern::Kind::Regex) cv.regex = regex::Pattern::compile(v.text);
  if (v.kind == ValuePattern::Kind::Literal) {
    cv.refs = spec::template_refs(v.text);
    for (const auto& r : cv.refs) cv.local = cv.local && is_local(r);
  }
  return cv;
}

std::string join_diags(const std::string& spec_name, const std::vector<spec::Diagnostic>& diags) {
  std::string out = "spec '" + spec_name + "' does not compile:";
  for (const auto& d : diags) {
    if (d.is_error()) out += "\n  " + d.to_string();
  }
  return out;
}

}  // namespace

Automaton compose(const std::vector<spec::ProtocolSpec>& specs) {
  if (specs.empty()) throw CompileError("no specs to compose");
  Automaton a;
  State init;
  init.name = "init";
  a.states_.push_back(init);

  std::set<std::string> names;
  for (const auto& sp : specs) {
    if (!names.insert(sp.name).second) throw CompileError("duplicate spec name '" + sp.name + "'");
    const auto info = spec::detail::analyze_scope(sp);
    if (spec::has_errors(info.diags)) throw CompileError(join_diags(sp.name, info.diags));
    a.spec_names_.push_back(sp.name);

    // One state and one incoming transition per flow message.
    const StateId base = a.states_.size();
    const std::size_t tbase = a.transitions_.size();
    std::set<std::string> used_names;
    for (std::size_t i = 0; i < info.nodes.size(); ++i) {
      const auto& node = info.nodes[i];
      State st;
      st.name = sp.name + "/" + node.msg->desc;
      for (int k = 2; !used_names.insert(st.name).second; ++k) {
        st.name = sp.name + "/" + node.msg->desc + "#" + std::to_string(k);
      }
      st.parent = node.parent < 0 ? kInit : base + static_cast<StateId>(node.parent);
      st.depth = static_cast<std::size_t>(node.depth);
      st.final = node.leaf;
      st.spec = sp.name;
      a.states_.push_back(st);

      Transition t;
      t.source = *st.parent;
      t.target = base + i;
      t.guard = *node.msg;
      t.origin_spec = sp.name;
      a.transitions_.push_back(std::move(t));
      a.states_[*st.parent].outgoing.push_back(tbase + i);
    }

    auto site_of = [&](const std::string& id) -> int {
      auto it = info.intro.find(id);
      return it == info.intro.end() ? -1 : it->second;
    };

    // Which identifiers are computable from a single message alone.
    std::set<std::string> local_ids;
    for (std::size_t i = 0; i < info.nodes.size(); ++i) {
      const auto& m = *info.nodes[i].msg;
      if (m.endpoint_id) local_ids.insert(*m.endpoint_id);
      for (const auto& f : m.parameters) {
        if (f.id) local_ids.insert(*f.id);
      }
      for (const auto& f : m.headers) {
        if (f.id) local_ids.insert(*f.id);
      }
    }
    for (const auto* def : info.definition_order) {
      const int site = site_of(def->id);
      bool local = true;
      for (const auto& r : spec::template_refs(def->source)) {
        local = local && site_of(r) == site && local_ids.count(r);
      }
      auto& t = a.transitions_[tbase + static_cast<std::size_t>(site)];
      CompiledDefinition cd{*def, regex::Pattern::compile(def->regexp)};
      if (local) {
        local_ids.insert(def->id);
        t.local_definitions.push_back(std::move(cd));
      } else {
        t.cross_definitions.push_back(std::move(cd));
      }
    }

    for (std::size_t i = 0; i < info.nodes.size(); ++i) {
      auto& t = a.transitions_[tbase + i];
      const auto& m = t.guard;
      auto is_local = [&](const std::string& r) {
        return site_of(r) == static_cast<int>(i) && local_ids.count(r) > 0;
      };
      if (m.endpoint) t.endpoint = compile_value(*m.endpoint, is_local);
      for (const auto& f : m.parameters) t.parameters.push_back({f.name, compile_value(f.value, is_local), f.id});
      for (const auto& f : m.headers) t.headers.push_back({f.name, compile_value(f.value, is_local), f.id});
    }

    for (const auto& [id, site] : info.intro) {
      const StateId target = base + static_cast<StateId>(site);
      a.intro_[{sp.name, id}] = target;
    }
    // introduced/bindings lists in a stable order: message captures, then definitions
    for (std::size_t i = 0; i < info.nodes.size(); ++i) {
      auto& t = a.transitions_[tbase + i];
      const auto& m = t.guard;
      if (m.endpoint_id) t.bindings_introduced.push_back(*m.endpoint_id);
      for (const auto& f : m.parameters) {
        if (f.id) t.bindings_introduced.push_back(*f.id);
      }
      for (const auto& f : m.headers) {
        if (f.id) t.bindings_introduced.push_back(*f.id);
      }
      for (const auto& d : t.local_definitions) t.bindings_introduced.push_back(d.def.id);
      for (const auto& d : t.cross_definitions) t.bindings_introduced.push_back(d.def.id);
      a.states_[t.target].introduced = t.bindings_introduced;
    }

    for (const auto& s : sp.secrecy) {
      const int site = site_of(s.target);
      if (site < 0) throw CompileError("secrecy target '" + s.target + "' is never introduced in " + sp.name);
      a.transitions_[tbase + static_cast<std::size_t>(site)].secrecy.push_back(s);
    }
    for (const auto& ip : sp.integrity) {
      const int site = site_of(ip.target);
      if (site < 0) throw CompileError("integrity target '" + ip.target + "' is never introduced in " + sp.name);
      CompiledIntegrity ci{ip, std::nullopt};
      if (ip.matches.kind == ValuePattern::Kind::Regex) ci.regex = regex::Pattern::compile(ip.matches.text);
      a.transitions_[tbase + static_cast<std::size_t>(site)].integrity.push_back(std::move(ci));
    }
  }
  return a;
}

Automaton compile(const spec::ProtocolSpec& spec) { return compose({spec}); }

void BindingEnv::bind(const std::string& id, std::string value, StateId bound_at) {
  if (!entries_.emplace(id, Entry{std::move(value), bound_at}).second) {
    throw BindingError("identifier '" + id + "' is already bound in this run");
  }
}

std::optional<std::string> BindingEnv::lookup(const Automaton& a, StateId at, const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end() || !a.ancestor_or_self(it->second.bound_at, at)) return std::nullopt;
  return it->second.value;
}

std::optional<std::string> BindingEnv::raw(const std::string& id) const {
  auto it = entries_.find(id);
  if (it == entries_.end()) return std::nullopt;
  return it->second.value;
}

}  // namespace flowguard::automaton
