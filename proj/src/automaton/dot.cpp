#include <sstream>

#include "flowguard/automaton.hpp"

namespace flowguard::automaton {

namespace {

std::string quote(std::string_view s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    if (c == '\n') {
      out += "\\n";
      continue;
    }
    out.push_back(c);
  }
  return out + "\"";
}

std::string describe(const spec::ValuePattern& v) {
  switch (v.kind) {
    case spec::ValuePattern::Kind::Any: return "*";
    case spec::ValuePattern::Kind::Literal: return "= " + v.text;
    case spec::ValuePattern::Kind::Regex: return "~ /" + v.text + "/";
  }
  return "";
}

std::string guard_label(const Transition& t) {
  const auto& g = t.guard;
  std::string out = g.desc + ": " + std::string(spec::to_string(g.direction));
  if (g.method) out += " " + *g.method;
  out += "\n";
  if (g.endpoint) out += "endpoint " + describe(*g.endpoint);
  if (g.endpoint_id) out += " [" + *g.endpoint_id + "]";
  if (g.endpoint || g.endpoint_id) out += "\n";
  for (const auto* fields : {&g.parameters, &g.headers}) {
    for (const auto& f : *fields) {
      out += f.name + " " + describe(f.value);
      if (f.id) out += " [" + *f.id + "]";
      out += "\n";
    }
  }
  for (const auto& s : t.secrecy) {
    out += "secret " + s.target + " -> {";
    for (std::size_t i = 0; i < s.origins.size(); ++i) out += (i ? ", " : "") + s.origins[i];
    out += "}\n";
  }
  for (const auto& ci : t.integrity) out += "check " + ci.policy.target + " " + describe(ci.policy.matches) + "\n";
  return out;
}

}  // namespace

std::string to_dot(const Automaton& a) {
  std::ostringstream os;
  os << "digraph automaton {\n  rankdir=LR;\n  node [fontname=\"monospace\"];\n";
  for (const auto& s : a.states()) {
    os << "  " << quote(s.name) << " [shape=" << (s.final ? "doublecircle" : "circle") << "];\n";
  }
  for (const auto& t : a.transitions()) {
    os << "  " << quote(a.state(t.source).name) << " -> " << quote(a.state(t.target).name)
       << " [label=" << quote(guard_label(t)) << "];\n";
  }
  for (const auto& s : a.states()) {
    if (s.final) continue;
    os << "  " << quote(s.name) << " -> " << quote(s.name) << " [style=dashed, label=\"unrelated\"];\n";
  }
  os << "}\n";
  return os.str();
}

}  // namespace flowguard::automaton
