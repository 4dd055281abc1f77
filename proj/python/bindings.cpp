#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flowguard/library.hpp"

namespace py = pybind11;
using namespace flowguard;

namespace {

spec::ProtocolSpec spec_from(const std::string& name_or_xml) {
  if (name_or_xml.find('<') == std::string::npos) return library::builtin_spec(name_or_xml);
  return spec::parse_spec(name_or_xml);
}

std::shared_ptr<const automaton::Automaton> compose_from(const std::vector<std::string>& specs) {
  std::vector<spec::ProtocolSpec> parsed;
  for (const auto& s : specs) parsed.push_back(spec_from(s));
  return std::make_shared<const automaton::Automaton>(automaton::compose(parsed));
}

py::list notes(const std::vector<engine::PlaceholderNote>& v) {
  py::list out;
  for (const auto& n : v) out.append(py::make_tuple(n.placeholder, n.identifier));
  return out;
}

py::list header_list(const http::Headers& h) {
  py::list out;
  for (const auto& [k, v] : h) out.append(py::make_tuple(k, v));
  return out;
}

http::Headers headers_from(const std::vector<std::pair<std::string, std::string>>& h) {
  http::Headers out;
  for (const auto& [k, v] : h) out.add(k, v);
  return out;
}

py::dict verdict_dict(const engine::Verdict& v) {
  py::dict d;
  d["action"] = std::string(engine::to_string(v.action));
  d["reason"] = v.reason ? py::cast(std::string(engine::to_string(*v.reason))) : py::none();
  d["classification"] = std::string(automaton::to_string(v.classification));
  d["state_before"] = v.state_before;
  d["state_after"] = v.state_after;
  d["spec"] = v.spec;
  d["run_completed"] = v.run_completed;
  d["timed_out"] = v.timed_out;
  d["placeholders_created"] = notes(v.placeholders_created);
  d["placeholders_substituted"] = notes(v.placeholders_substituted);
  d["placeholders_withheld"] = notes(v.placeholders_withheld);
  d["diagnostics"] = v.diagnostics;
  if (const auto* r = std::get_if<http::HttpRequest>(&v.event)) {
    d["url"] = r->url.serialize();
    d["headers"] = header_list(r->headers);
    d["body"] = r->body ? py::cast(*r->body) : py::none();
  } else {
    const auto& resp = std::get<http::HttpResponse>(v.event);
    d["status"] = resp.status;
    d["headers"] = header_list(resp.headers);
    d["body"] = resp.body ? py::cast(*resp.body) : py::none();
  }
  return d;
}

class Monitor {
 public:
  Monitor(const std::vector<std::string>& specs, std::optional<std::uint64_t> seed, bool form_body,
          std::string prefix)
      : automaton_(compose_from(specs)) {
    engine::EngineConfig cfg;
    cfg.rewrite_scope.form_body = form_body;
    cfg.placeholder_prefix = std::move(prefix);
    std::shared_ptr<engine::RandomSource> rng;
    if (seed) rng = std::make_shared<engine::SeededRandom>(*seed);
    ctx_ = std::make_unique<engine::MonitorContext>(automaton_, cfg, rng, "python");
  }

  py::dict on_request(const std::string& method, const std::string& url,
                      const std::vector<std::pair<std::string, std::string>>& headers,
                      std::optional<std::string> body, double now_s) {
    http::HttpRequest r;
    r.method = method;
    r.url = http::parse_url(url);
    r.headers = headers_from(headers);
    r.body = std::move(body);
    return verdict_dict(ctx_->on_request(r, stamp(now_s)));
  }

  py::dict on_response(int status, const std::string& request_url,
                       const std::vector<std::pair<std::string, std::string>>& headers,
                       std::optional<std::string> body, double now_s) {
    http::HttpResponse r;
    r.status = status;
    r.request_url = http::parse_url(request_url);
    r.headers = headers_from(headers);
    r.body = std::move(body);
    return verdict_dict(ctx_->on_response(r, stamp(now_s)));
  }

  std::string state() const { return automaton_->state(ctx_->current_state()).name; }
  void reset() { ctx_->reset(); }
  std::vector<std::string> live_placeholders() const {
    std::vector<std::string> out;
    for (const auto& e : ctx_->vault().entries()) out.push_back(e.placeholder);
    return out;
  }

 private:
  static engine::Timestamp stamp(double s) { return engine::Timestamp{static_cast<std::int64_t>(s * 1000.0)}; }

  std::shared_ptr<const automaton::Automaton> automaton_;
  std::unique_ptr<engine::MonitorContext> ctx_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "flowguard native core";

  py::register_exception<spec::SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<automaton::CompileError>(m, "CompileError", PyExc_ValueError);
  py::register_exception<library::ScenarioError>(m, "ScenarioError", PyExc_ValueError);
  py::register_exception<http::MalformedUrl>(m, "MalformedUrl", PyExc_ValueError);
  py::register_exception<engine::ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("builtin_spec_names", &library::builtin_spec_names);
  m.def("builtin_spec_xml", [](const std::string& name) {
    for (const auto& s : library::builtin_spec_sources()) {
      if (s.name == name) return s.xml;
    }
    throw py::key_error(name);
  });
  m.def(
      "validate_spec",
      [](const std::string& xml) {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& d : spec::validate_spec(spec::parse_spec(xml))) {
          out.emplace_back(d.is_error() ? "error" : "warning", d.location, d.message);
        }
        return out;
      },
      py::arg("xml"), "Parses a spec and returns (severity, location, message) diagnostics.");
  m.def(
      "canonical_xml", [](const std::string& xml) { return spec::serialize_spec(spec::parse_spec(xml)); },
      py::arg("xml"));
  m.def(
      "to_dot", [](const std::vector<std::string>& specs) { return automaton::to_dot(*compose_from(specs)); },
      py::arg("specs"), "DOT for the composition of builtin names or XML documents.");
  m.def(
      "automaton_summary",
      [](const std::vector<std::string>& specs) {
        const auto a = compose_from(specs);
        py::dict d;
        std::vector<std::string> states;
        for (const auto& s : a->states()) states.push_back(s.name);
        std::vector<std::string> finals;
        for (auto id : a->final_states()) finals.push_back(a->state(id).name);
        d["states"] = states;
        d["final_states"] = finals;
        d["transitions"] = a->transitions().size();
        return d;
      },
      py::arg("specs"));

  py::class_<Monitor>(m, "Monitor")
      .def(py::init<const std::vector<std::string>&, std::optional<std::uint64_t>, bool, std::string>(),
           py::arg("specs"), py::arg("seed") = py::none(), py::arg("form_body") = false,
           py::arg("placeholder_prefix") = "WPSE-")
      .def("on_request", &Monitor::on_request, py::arg("method"), py::arg("url"),
           py::arg("headers") = std::vector<std::pair<std::string, std::string>>{}, py::arg("body") = py::none(),
           py::arg("now") = 0.0)
      .def("on_response", &Monitor::on_response, py::arg("status"), py::arg("request_url"),
           py::arg("headers") = std::vector<std::pair<std::string, std::string>>{}, py::arg("body") = py::none(),
           py::arg("now") = 0.0)
      .def_property_readonly("state", &Monitor::state)
      .def("live_placeholders", &Monitor::live_placeholders)
      .def("reset", &Monitor::reset);

  m.def(
      "replay_builtin",
      [](const std::vector<std::string>& names, std::uint64_t seed) {
        std::vector<library::ScenarioReport> reports;
        library::RunOptions opts;
        opts.seed = seed;
        for (const auto& sc : library::builtin_scenarios()) {
          if (!names.empty() && std::find(names.begin(), names.end(), sc.name) == names.end() &&
              std::find(names.begin(), names.end(), sc.group) == names.end()) {
            continue;
          }
          reports.push_back(library::run_scenario(sc, opts));
        }
        bool ok = !reports.empty();
        for (const auto& r : reports) ok = ok && r.passed;
        return py::make_tuple(ok, library::render_reports(reports));
      },
      py::arg("names") = std::vector<std::string>{}, py::arg("seed") = 0,
      "Runs bundled scenarios (all, or those matching names/groups); returns (all_passed, report).");
  m.def(
      "replay_file",
      [](const std::string& path, std::uint64_t seed) {
        library::RunOptions opts;
        opts.seed = seed;
        const auto r = library::run_scenario(library::load_scenario_file(path), opts);
        return py::make_tuple(r.passed, r.to_text());
      },
      py::arg("path"), py::arg("seed") = 0);
}
