#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "flowguard/library.hpp"
#include "json.hpp"
#include "library/embedded.hpp"

namespace flowguard::library {

using json = nlohmann::ordered_json;

std::string_view to_string(Actor a) {
  switch (a) {
    case Actor::Browser: return "browser";
    case Actor::AttackerPage: return "attacker-page";
    case Actor::RP: return "rp";
    case Actor::IdP: return "idp";
    case Actor::Tracker: return "tracker";
  }
  return "?";
}

std::string_view to_string(Expect e) {
  switch (e) {
    case Expect::Allow: return "allow";
    case Expect::AllowRewritten: return "allow_rewritten";
    case Expect::AllowConfined: return "allow_confined";
    case Expect::Block: return "block";
  }
  return "?";
}

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Benign: return "benign";
    case Outcome::FlowDeviation: return "flow-deviation";
    case Outcome::IntegrityFailure: return "integrity-failure";
    case Outcome::Confinement: return "confinement";
  }
  return "?";
}

namespace {

template <typename E, std::size_t N>
E parse_enum(const std::string& text, const std::pair<std::string_view, E> (&table)[N], const std::string& what,
             int line) {
  for (const auto& [name, value] : table) {
    if (name == text) return value;
  }
  throw ScenarioError("line " + std::to_string(line) + ": unknown " + what + " '" + text + "'");
}

constexpr std::pair<std::string_view, Actor> kActors[] = {{"browser", Actor::Browser},
                                                          {"attacker-page", Actor::AttackerPage},
                                                          {"rp", Actor::RP},
                                                          {"idp", Actor::IdP},
                                                          {"tracker", Actor::Tracker}};
constexpr std::pair<std::string_view, Expect> kExpects[] = {{"allow", Expect::Allow},
                                                            {"allow_rewritten", Expect::AllowRewritten},
                                                            {"allow_confined", Expect::AllowConfined},
                                                            {"block", Expect::Block}};
constexpr std::pair<std::string_view, engine::BlockReason> kReasons[] = {
    {"flow-deviation", engine::BlockReason::FlowDeviation},
    {"integrity-failure", engine::BlockReason::IntegrityFailure}};
constexpr std::pair<std::string_view, Outcome> kOutcomes[] = {{"benign", Outcome::Benign},
                                                              {"flow-deviation", Outcome::FlowDeviation},
                                                              {"integrity-failure", Outcome::IntegrityFailure},
                                                              {"confinement", Outcome::Confinement}};
constexpr std::pair<std::string_view, spec::Direction> kDirections[] = {{"request", spec::Direction::Request},
                                                                        {"response", spec::Direction::Response}};

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed, int line) {
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ScenarioError("line " + std::to_string(line) + ": unknown field '" + key + "'");
    }
  }
}

std::vector<std::pair<std::string, std::string>> pairs(const json& v, const std::string& what, int line) {
  std::vector<std::pair<std::string, std::string>> out;
  if (v.is_object()) {
    for (const auto& [k, val] : v.items()) {
      if (!val.is_string()) throw ScenarioError("line " + std::to_string(line) + ": " + what + " values must be strings");
      out.emplace_back(k, val.get<std::string>());
    }
  } else if (v.is_array()) {
    for (const auto& item : v) {
      if (!item.is_array() || item.size() != 2 || !item[0].is_string() || !item[1].is_string()) {
        throw ScenarioError("line " + std::to_string(line) + ": " + what + " entries must be [name, value]");
      }
      out.emplace_back(item[0].get<std::string>(), item[1].get<std::string>());
    }
  } else {
    throw ScenarioError("line " + std::to_string(line) + ": " + what + " must be an object or a list of pairs");
  }
  return out;
}

std::string str(const json& obj, const char* key, int line) {
  const auto& v = obj.at(key);
  if (!v.is_string()) throw ScenarioError("line " + std::to_string(line) + ": '" + key + "' must be a string");
  return v.get<std::string>();
}

void parse_header(const json& h, Scenario& sc, int line) {
  check_keys(h, {"scenario", "description", "specs", "outcome", "attack_step", "expect_runs_completed", "rewrite_scope"},
             line);
  sc.name = str(h, "scenario", line);
  if (h.contains("description")) sc.description = str(h, "description", line);
  if (h.contains("specs")) {
    for (const auto& s : h.at("specs")) {
      if (!s.is_string()) throw ScenarioError("line " + std::to_string(line) + ": specs must be strings");
      sc.specs.push_back(s.get<std::string>());
    }
  }
  if (h.contains("outcome")) sc.outcome = parse_enum(str(h, "outcome", line), kOutcomes, "outcome", line);
  if (h.contains("attack_step")) sc.attack_step = h.at("attack_step").get<std::size_t>();
  if (h.contains("expect_runs_completed")) sc.expect_runs_completed = h.at("expect_runs_completed").get<int>();
  if (h.contains("rewrite_scope")) {
    const auto& r = h.at("rewrite_scope");
    check_keys(r, {"headers", "url_params", "form_body"}, line);
    engine::RewriteScope scope;
    scope.headers = r.value("headers", scope.headers);
    scope.url_params = r.value("url_params", scope.url_params);
    scope.form_body = r.value("form_body", scope.form_body);
    sc.rewrite_scope = scope;
  }
}

ScenarioStep parse_step(const json& s, int line) {
  check_keys(s,
             {"actor", "direction", "method", "url", "headers", "params", "body", "status", "expect", "expect_reason",
              "time_offset_s", "note"},
             line);
  ScenarioStep step;
  step.line = line;
  if (s.contains("actor")) step.actor = parse_enum(str(s, "actor", line), kActors, "actor", line);
  if (s.contains("direction")) step.direction = parse_enum(str(s, "direction", line), kDirections, "direction", line);
  if (s.contains("method")) step.method = str(s, "method", line);
  if (s.contains("url")) step.url = str(s, "url", line);
  if (s.contains("headers")) step.headers = pairs(s.at("headers"), "headers", line);
  if (s.contains("params")) step.params = pairs(s.at("params"), "params", line);
  if (s.contains("body")) step.body = str(s, "body", line);
  if (s.contains("status")) step.status = s.at("status").get<int>();
  if (s.contains("expect")) step.expect = parse_enum(str(s, "expect", line), kExpects, "expectation", line);
  if (s.contains("expect_reason")) {
    step.expect_reason = parse_enum(str(s, "expect_reason", line), kReasons, "block reason", line);
  }
  if (s.contains("time_offset_s")) step.time_offset_s = s.at("time_offset_s").get<double>();
  if (s.contains("note")) step.note = str(s, "note", line);

  const std::string at = "line " + std::to_string(line) + ": ";
  if (step.direction == spec::Direction::Request && step.url.empty()) throw ScenarioError(at + "request needs a url");
  if (step.direction == spec::Direction::Response && (step.status < 100 || step.status > 599)) {
    throw ScenarioError(at + "status must be in [100, 599]");
  }
  if (step.direction == spec::Direction::Response && !step.params.empty()) {
    throw ScenarioError(at + "responses carry headers, not params");
  }
  if ((step.expect == Expect::Block) != step.expect_reason.has_value()) {
    throw ScenarioError(at + "expect_reason is required with, and only with, expect=block");
  }
  if (step.time_offset_s && *step.time_offset_s < 0) throw ScenarioError(at + "time_offset_s must be >= 0");
  return step;
}

bool defends(const ScenarioStep& s) { return s.expect == Expect::Block || s.expect == Expect::AllowConfined; }

void check_consistency(const Scenario& sc) {
  const std::string at = "scenario " + sc.name + ": ";
  if (sc.steps.empty()) throw ScenarioError(at + "no steps");
  if (sc.steps.front().direction == spec::Direction::Response && sc.steps.front().url.empty()) {
    throw ScenarioError(at + "a response step needs a url or an earlier request");
  }
  if (sc.outcome == Outcome::Benign) {
    for (const auto& s : sc.steps) {
      if (defends(s)) throw ScenarioError(at + "benign scenario expects a block or confinement");
    }
    return;
  }
  if (!sc.attack_step || *sc.attack_step < 1 || *sc.attack_step > sc.steps.size()) {
    throw ScenarioError(at + "attack scenarios need attack_step within the step range");
  }
  for (std::size_t i = 0; i + 1 < *sc.attack_step; ++i) {
    if (defends(sc.steps[i])) throw ScenarioError(at + "step " + std::to_string(i + 1) + " defends before attack_step");
  }
  const auto& s = sc.steps[*sc.attack_step - 1];
  const bool ok = (sc.outcome == Outcome::Confinement && s.expect == Expect::AllowConfined) ||
                  (sc.outcome == Outcome::FlowDeviation && s.expect == Expect::Block &&
                   s.expect_reason == engine::BlockReason::FlowDeviation) ||
                  (sc.outcome == Outcome::IntegrityFailure && s.expect == Expect::Block &&
                   s.expect_reason == engine::BlockReason::IntegrityFailure);
  if (!ok) throw ScenarioError(at + "attack_step expectation does not match the outcome class");
}

}  // namespace

Scenario parse_scenario(std::string_view text, std::string default_name) {
  Scenario sc;
  sc.name = std::move(default_name);
  std::istringstream in{std::string(text)};
  std::string raw;
  int line = 0;
  bool first = true;
  while (std::getline(in, raw)) {
    ++line;
    const auto b = raw.find_first_not_of(" \t\r");
    if (b == std::string::npos || raw[b] == '#') continue;
    json obj;
    try {
      obj = json::parse(raw);
    } catch (const json::exception& e) {
      throw ScenarioError("line " + std::to_string(line) + ": " + e.what());
    }
    if (!obj.is_object()) throw ScenarioError("line " + std::to_string(line) + ": expected a JSON object");
    try {
      if (obj.contains("scenario")) {
        if (!first) throw ScenarioError("line " + std::to_string(line) + ": header must be the first object");
        parse_header(obj, sc, line);
      } else {
        sc.steps.push_back(parse_step(obj, line));
      }
    } catch (const json::exception& e) {
      throw ScenarioError("line " + std::to_string(line) + ": " + e.what());
    }
    first = false;
  }
  if (sc.name.empty()) throw ScenarioError("scenario has no name");
  check_consistency(sc);
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ScenarioError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::filesystem::path p(path);
  try {
    Scenario sc = parse_scenario(buf.str(), p.stem().string());
    sc.source_dir = p.parent_path().string();
    return sc;
  } catch (const ScenarioError& e) {
    throw ScenarioError(path + ": " + e.what());
  }
}

std::vector<Scenario> builtin_scenarios() {
  std::vector<Scenario> out;
  for (const auto& f : detail::embedded_scenarios()) {
    const std::filesystem::path p(std::string(f.name));
    Scenario sc = parse_scenario(f.content, p.stem().string());
    sc.group = p.parent_path().string();
    out.push_back(std::move(sc));
  }
  return out;
}

Scenario builtin_scenario(std::string_view name) {
  for (auto& sc : builtin_scenarios()) {
    if (sc.name == name) return sc;
  }
  throw std::out_of_range("no builtin scenario named '" + std::string(name) + "'");
}

std::optional<std::size_t> ScenarioReport::first_defended_step() const {
  for (const auto& r : steps) {
    if (!r.verdict.allowed()) return r.index;
    if (r.step.expect == Expect::AllowConfined && r.passed) return r.index;
  }
  return std::nullopt;
}

namespace {

std::string verdict_text(const engine::Verdict& v) {
  std::string out(engine::to_string(v.action));
  if (v.reason) out += "(" + std::string(engine::to_string(*v.reason)) + ")";
  return out;
}

std::string expect_text(const ScenarioStep& s) {
  std::string out(to_string(s.expect));
  if (s.expect_reason) out += "(" + std::string(engine::to_string(*s.expect_reason)) + ")";
  return out;
}

}  // namespace

std::string ScenarioReport::to_text() const {
  std::ostringstream os;
  os << "scenario " << name;
  if (!group.empty()) os << " [" << group << "]";
  os << " outcome=" << to_string(outcome) << "\n";
  os << "  specs:";
  for (const auto& s : specs) os << " " << s;
  os << "\n";
  for (const auto& r : steps) {
    os << "  " << r.index << ". " << to_string(r.step.actor) << " " << r.summary << "\n"
       << "     expect " << expect_text(r.step) << ", got " << verdict_text(r.verdict) << " ["
       << automaton::to_string(r.verdict.classification) << "] " << r.verdict.state_before << " -> "
       << r.verdict.state_after << " created=" << r.verdict.placeholders_created.size()
       << " substituted=" << r.verdict.placeholders_substituted.size()
       << " withheld=" << r.verdict.placeholders_withheld.size() << (r.passed ? " ok" : " FAIL") << "\n";
    for (const auto& n : r.verdict.placeholders_created) os << "     " << n.identifier << " -> " << n.placeholder << "\n";
    if (!r.passed) os << "     " << r.failure << "\n";
  }
  if (injected_events) os << "  injected unrelated events: " << injected_events << "\n";
  os << "  result: " << (passed ? "PASS" : "FAIL") << " runs_completed=" << runs_completed << " blocks=" << blocks
     << " final_state=" << final_state << "\n";
  if (!passed && !failure.empty()) os << "  reason: " << failure << "\n";
  return os.str();
}

std::string render_reports(const std::vector<ScenarioReport>& reports) {
  std::ostringstream os;
  std::size_t passed = 0;
  for (const auto& r : reports) {
    os << r.to_text();
    passed += r.passed ? 1 : 0;
  }
  os << "summary: " << passed << "/" << reports.size() << " scenarios passed\n";
  return os.str();
}

namespace {

spec::ProtocolSpec default_resolve(const Scenario& sc, const std::string& name) {
  if (has_builtin_spec(name)) return builtin_spec(name);
  std::filesystem::path p(name);
  if (p.is_relative() && !sc.source_dir.empty()) p = std::filesystem::path(sc.source_dir) / p;
  if (!std::filesystem::exists(p)) throw ScenarioError("spec '" + name + "' is neither builtin nor a readable file");
  return spec::parse_spec_file(p.string());
}

struct Harness {
  std::string last_location;
  std::map<std::string, std::string> placeholder_by_id;
  // every placeholder handed out, with the secret it stood for
  std::vector<std::pair<std::string, std::string>> known;
  std::optional<http::AbsoluteUrl> last_request_url;

  std::string expand(const std::string& text, int line) const {
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
      const auto open = text.find("{{", i);
      if (open == std::string::npos) {
        out.append(text, i, std::string::npos);
        break;
      }
      out.append(text, i, open - i);
      const auto close = text.find("}}", open);
      if (close == std::string::npos) throw ScenarioError("line " + std::to_string(line) + ": unterminated {{");
      const std::string var = text.substr(open + 2, close - open - 2);
      if (var == "location") {
        if (last_location.empty()) throw ScenarioError("line " + std::to_string(line) + ": no Location delivered yet");
        out += last_location;
      } else if (var.rfind("placeholder:", 0) == 0) {
        auto it = placeholder_by_id.find(var.substr(12));
        if (it == placeholder_by_id.end()) {
          throw ScenarioError("line " + std::to_string(line) + ": no placeholder for " + var.substr(12));
        }
        out += it->second;
      } else {
        throw ScenarioError("line " + std::to_string(line) + ": unknown template {{" + var + "}}");
      }
      i = close + 2;
    }
    return out;
  }

  http::HttpEvent build(const ScenarioStep& s) {
    const std::string at = "line " + std::to_string(s.line) + ": ";
    try {
      if (s.direction == spec::Direction::Request) {
        http::HttpRequest req;
        req.method = s.method;
        req.url = http::parse_url(expand(s.url, s.line));
        for (const auto& [k, v] : s.headers) req.headers.add(k, expand(v, s.line));
        if (s.body) req.body = expand(*s.body, s.line);
        if (!s.params.empty()) {
          std::string encoded;
          for (const auto& [k, v] : s.params) {
            if (!encoded.empty()) encoded += '&';
            encoded += http::percent_encode(k) + "=" + http::percent_encode(expand(v, s.line));
          }
          if (s.method == "GET" || s.method == "HEAD" || s.body) {
            req.url.query = req.url.has_query && !req.url.query.empty() ? req.url.query + "&" + encoded : encoded;
            req.url.has_query = true;
          } else {
            req.body = encoded;
            if (!req.headers.contains("Content-Type")) {
              req.headers.add("Content-Type", "application/x-www-form-urlencoded");
            }
          }
        }
        if (req.body && !req.headers.contains("Content-Length")) {
          req.headers.add("Content-Length", std::to_string(req.body->size()));
        }
        last_request_url = req.url;
        return req;
      }
      http::HttpResponse resp;
      resp.status = s.status;
      if (!s.url.empty()) {
        resp.request_url = http::parse_url(expand(s.url, s.line));
      } else if (last_request_url) {
        resp.request_url = *last_request_url;
      } else {
        throw ScenarioError(at + "response without a url or earlier request");
      }
      for (const auto& [k, v] : s.headers) resp.headers.add(k, expand(v, s.line));
      if (s.body) resp.body = expand(*s.body, s.line);
      return resp;
    } catch (const http::MalformedUrl& e) {
      throw ScenarioError(at + e.what());
    }
  }

  std::string delivered_text(const http::HttpEvent& e) const {
    if (const auto* r = std::get_if<http::HttpRequest>(&e)) return http::serialize_request(*r);
    return http::serialize_response(std::get<http::HttpResponse>(e));
  }
};

std::string summarize(const http::HttpEvent& e) {
  if (const auto* r = std::get_if<http::HttpRequest>(&e)) return "request " + r->method + " " + r->url.endpoint();
  const auto& resp = std::get<http::HttpResponse>(e);
  return "response " + std::to_string(resp.status) + " from " + resp.request_url.endpoint();
}

// Checks a verdict against the step's expectation. Returns "" when met.
std::string check(const ScenarioStep& s, const engine::Verdict& v, const Harness& h,
                  const std::vector<std::pair<std::string, std::string>>& fresh) {
  if (s.expect == Expect::Block) {
    if (v.allowed()) return "expected a block, the event was allowed";
    if (v.reason != s.expect_reason) return "blocked for the wrong reason";
    return "";
  }
  if (!v.allowed()) {
    std::string why = "unexpected block";
    for (const auto& d : v.diagnostics) why += "; " + d;
    return why;
  }
  const std::string text = h.delivered_text(v.event);
  const bool is_req = http::is_request(v.event);
  if (s.expect == Expect::AllowRewritten) {
    if (is_req) {
      if (v.placeholders_substituted.empty()) return "no placeholder was substituted";
      if (!v.placeholders_withheld.empty()) return "a placeholder was withheld";
      for (const auto& [ph, secret] : h.known) {
        if (text.find(ph) != std::string::npos) return "placeholder " + ph + " still present";
      }
    } else {
      if (v.placeholders_created.empty()) return "no secret was replaced by a placeholder";
      for (const auto& [ph, secret] : fresh) {
        if (!secret.empty() && text.find(secret) != std::string::npos) return "secret still visible in response";
      }
    }
  }
  if (s.expect == Expect::AllowConfined) {
    if (!is_req) return "allow_confined applies to requests only";
    if (!v.placeholders_substituted.empty()) return "a placeholder was substituted toward this origin";
    bool carries = false;
    for (const auto& [ph, secret] : h.known) {
      if (text.find(ph) == std::string::npos) continue;
      carries = true;
      if (!secret.empty() && text.find(secret) != std::string::npos) return "secret plaintext reached the origin";
    }
    if (!carries) return "request carries no placeholder, nothing was confined";
  }
  return "";
}

}  // namespace

ScenarioReport run_scenario(const Scenario& sc, const RunOptions& options) {
  ScenarioReport report;
  report.name = sc.name;
  report.group = sc.group;
  report.outcome = sc.outcome;
  report.specs = sc.specs;

  std::vector<spec::ProtocolSpec> specs;
  for (const auto& name : sc.specs) {
    specs.push_back(options.resolve_spec ? options.resolve_spec(sc, name) : default_resolve(sc, name));
  }
  auto automaton = std::make_shared<const automaton::Automaton>(automaton::compose(specs));
  engine::EngineConfig config = options.config;
  if (sc.rewrite_scope) config.rewrite_scope = *sc.rewrite_scope;
  engine::MonitorContext ctx(automaton, config, std::make_shared<engine::SeededRandom>(options.seed), sc.name);

  Harness h;
  engine::Timestamp now{0};
  report.passed = true;
  for (std::size_t i = 0; i < sc.steps.size(); ++i) {
    const auto& s = sc.steps[i];
    if (options.interleave) {
      for (const auto& e : options.interleave(i)) {
        const auto v = http::is_request(e) ? ctx.on_request(std::get<http::HttpRequest>(e), now)
                                           : ctx.on_response(std::get<http::HttpResponse>(e), now);
        ++report.injected_events;
        if (!v.allowed()) ++report.blocks;
        if (v.run_completed) ++report.runs_completed;
      }
    }
    if (s.time_offset_s) now = engine::Timestamp{static_cast<std::int64_t>(*s.time_offset_s * 1000.0)};

    StepResult r;
    r.index = i + 1;
    r.step = s;
    const http::HttpEvent event = h.build(s);
    r.summary = summarize(event);
    r.verdict = http::is_request(event) ? ctx.on_request(std::get<http::HttpRequest>(event), now)
                                        : ctx.on_response(std::get<http::HttpResponse>(event), now);

    std::vector<std::pair<std::string, std::string>> fresh;
    for (const auto& note : r.verdict.placeholders_created) {
      const auto* entry = ctx.vault().find(note.placeholder);
      fresh.emplace_back(note.placeholder, entry ? entry->secret : std::string{});
    }
    // the first placeholder per identifier in a step stands for the raw form
    std::map<std::string, bool> first_seen;
    for (const auto& note : r.verdict.placeholders_created) {
      if (!first_seen[note.identifier]) {
        h.placeholder_by_id[note.identifier] = note.placeholder;
        first_seen[note.identifier] = true;
      }
    }
    h.known.insert(h.known.end(), fresh.begin(), fresh.end());
    if (r.verdict.allowed()) {
      if (const auto* resp = std::get_if<http::HttpResponse>(&r.verdict.event)) {
        if (auto loc = resp->headers.get("Location")) h.last_location = *loc;
      }
    }

    r.failure = check(s, r.verdict, h, fresh);
    r.passed = r.failure.empty();
    if (!r.verdict.allowed()) ++report.blocks;
    if (r.verdict.run_completed) ++report.runs_completed;
    if (!r.passed && report.passed) {
      report.passed = false;
      report.failure = "step " + std::to_string(r.index) + ": " + r.failure;
    }
    report.steps.push_back(std::move(r));
  }
  report.final_state = ctx.automaton().state(ctx.current_state()).name;

  if (report.passed && sc.expect_runs_completed && report.runs_completed != *sc.expect_runs_completed) {
    report.passed = false;
    report.failure = "expected " + std::to_string(*sc.expect_runs_completed) + " completed runs, saw " +
                     std::to_string(report.runs_completed);
  }
  if (report.passed && sc.outcome == Outcome::Benign && (report.blocks != 0 || report.final_state != "init")) {
    report.passed = false;
    report.failure = "benign scenario must end in init without blocks";
  }
  if (report.passed && sc.outcome != Outcome::Benign && report.first_defended_step() != sc.attack_step) {
    report.passed = false;
    report.failure = "defense engaged at a different step than attack_step";
  }
  return report;
}

}  // namespace flowguard::library
