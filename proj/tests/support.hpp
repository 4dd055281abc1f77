#pragma once

#include <algorithm>
#include <fstream>
#include <optional>
#include <random>
#include <iterator>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "flowguard/automaton.hpp"
#include "flowguard/engine.hpp"
#include "flowguard/http.hpp"
#include "flowguard/library.hpp"
#include "flowguard/spec.hpp"

namespace testing_support {

namespace fg = flowguard;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

inline std::string data_path(const std::string& name) { return std::string(FLOWGUARD_TEST_DATA) + "/" + name; }
inline std::string source_path(const std::string& rel) { return std::string(FLOWGUARD_SOURCE_DIR) + "/" + rel; }

inline fg::http::HttpRequest get(const std::string& url, fg::http::Headers headers = {}) {
  fg::http::HttpRequest r;
  r.method = "GET";
  r.url = fg::http::parse_url(url);
  r.headers = std::move(headers);
  return r;
}

inline fg::http::HttpRequest post_form(const std::string& url, const std::string& body) {
  fg::http::HttpRequest r;
  r.method = "POST";
  r.url = fg::http::parse_url(url);
  r.headers.add("Content-Type", "application/x-www-form-urlencoded");
  r.headers.add("Content-Length", std::to_string(body.size()));
  r.body = body;
  return r;
}

inline fg::http::HttpResponse response(const std::string& request_url, int status, fg::http::Headers headers = {}) {
  fg::http::HttpResponse r;
  r.status = status;
  r.request_url = fg::http::parse_url(request_url);
  r.headers = std::move(headers);
  return r;
}

inline std::shared_ptr<const fg::automaton::Automaton> compose_builtin(const std::vector<std::string>& names) {
  std::vector<fg::spec::ProtocolSpec> specs;
  for (const auto& n : names) specs.push_back(fg::library::builtin_spec(n));
  return std::make_shared<const fg::automaton::Automaton>(fg::automaton::compose(specs));
}

inline std::shared_ptr<const fg::automaton::Automaton> compose_xml(const std::vector<std::string>& docs) {
  std::vector<fg::spec::ProtocolSpec> specs;
  for (const auto& d : docs) specs.push_back(fg::spec::parse_spec(d));
  return std::make_shared<const fg::automaton::Automaton>(fg::automaton::compose(specs));
}

inline fg::engine::MonitorContext seeded_context(std::shared_ptr<const fg::automaton::Automaton> a,
                                                 std::uint64_t seed = 1, fg::engine::EngineConfig cfg = {}) {
  return fg::engine::MonitorContext(std::move(a), cfg, std::make_shared<fg::engine::SeededRandom>(seed));
}

inline const std::vector<std::string>& google_specs() {
  static const std::vector<std::string> names{"google-explicit-state", "google-explicit-nostate",
                                              "google-implicit-state", "google-implicit-nostate"};
  return names;
}

// Two small protocols over made-up hosts. toy-a is a three-message
// code flow with a secret and an endpoint equality check; toy-b branches
// after its first message.
inline const char* kToyA = R"(<Specification name="toy-a">
  <Protocol>
    <Request method="GET" desc="a1">
      <Endpoint><Regexp>^https://idp\.toy/auth$</Regexp></Endpoint>
      <Parameter name="redirect_uri" id="ru" />
    </Request>
    <Response desc="a2">
      <Endpoint><Regexp>^https://idp\.toy/auth$</Regexp></Endpoint>
      <Header name="Location" id="loc" />
    </Response>
    <Request method="GET" desc="a3">
      <Endpoint id="cb" />
      <Parameter name="code"><Regexp>^[a-z0-9]{8,}$</Regexp></Parameter>
    </Request>
  </Protocol>
  <Identifiers>
    <Definition id="uri1"><Source>${ru}</Source><Regexp>^([^?]*)</Regexp></Definition>
    <Definition id="code"><Source>${loc}</Source><Regexp>[?&amp;]code=([^&amp;]*)</Regexp></Definition>
  </Identifiers>
  <Policy>
    <Secrecy><Target>${code}</Target><Origin>${uri1}</Origin><Origin>https://idp.toy/</Origin></Secrecy>
    <Integrity><Target>${cb}</Target><Matches>${uri1}</Matches></Integrity>
  </Policy>
</Specification>)";

inline const char* kToyB = R"(<Specification name="toy-b">
  <Protocol>
    <Request method="POST" desc="b1">
      <Endpoint><Regexp>^https://sp\.toy/login$</Regexp></Endpoint>
      <Parameter name="user" id="u" />
    </Request>
    <Branch>
      <Path>
        <Response desc="b2a">
          <Endpoint><Regexp>^https://sp\.toy/login$</Regexp></Endpoint>
          <Header name="X-Ok" />
        </Response>
      </Path>
      <Path>
        <Response desc="b2b">
          <Endpoint><Regexp>^https://sp\.toy/login$</Regexp></Endpoint>
          <Header name="Location" />
        </Response>
      </Path>
    </Branch>
  </Protocol>
</Specification>)";

// Two protocols sharing their first message. Whichever is composed first
// claims the shared start; only ovl-q continues with /q/next.
inline const char* kOverlapP = R"(<Specification name="ovl-p">
  <Protocol>
    <Request method="GET" desc="start">
      <Endpoint><Regexp>^https://shared\.toy/start$</Regexp></Endpoint>
      <Parameter name="client" />
    </Request>
    <Request method="GET" desc="p_next">
      <Endpoint><Regexp>^https://p\.toy/next$</Regexp></Endpoint>
    </Request>
  </Protocol>
</Specification>)";

inline const char* kOverlapQ = R"(<Specification name="ovl-q">
  <Protocol>
    <Request method="GET" desc="start">
      <Endpoint><Regexp>^https://shared\.toy/start$</Regexp></Endpoint>
      <Parameter name="client" />
    </Request>
    <Request method="GET" desc="q_next">
      <Endpoint><Regexp>^https://q\.toy/next$</Regexp></Endpoint>
    </Request>
  </Protocol>
</Specification>)";

// The ten-symbol alphabet over toy-a + toy-b.
enum Sym { A1, A2, A3, A3Bad, B1, B2a, B2b, CdnReq, CdnResp, EvilReq, kSymbols };

inline fg::http::HttpEvent toy_event(int sym) {
  switch (sym) {
    case A1:
      return get("https://idp.toy/auth?redirect_uri=https%3A%2F%2Frp.toy%2Fcb");
    case A2:
      return response("https://idp.toy/auth", 302, {{"Location", "https://rp.toy/cb?code=abcdefgh12"}});
    case A3:
      return get("https://rp.toy/cb?code=abcdefgh12");
    case A3Bad:
      return get("https://evil.toy/cb?code=abcdefgh12");
    case B1:
      return post_form("https://sp.toy/login", "user=alice");
    case B2a:
      return response("https://sp.toy/login", 200, {{"X-Ok", "1"}});
    case B2b:
      return response("https://sp.toy/login", 303, {{"Location", "/home"}});
    case CdnReq:
      return get("https://cdn.toy/logo.png");
    case CdnResp:
      return response("https://cdn.toy/logo.png", 200, {{"Content-Type", "image/png"}});
    default:
      return get("https://evil.toy/steal?x=1");
  }
}

// Root-to-leaf paths of the toy-a + toy-b tree, as symbols.
inline const std::vector<std::vector<int>>& toy_paths() {
  static const std::vector<std::vector<int>> paths{{A1, A2, A3}, {B1, B2a}, {B1, B2b}};
  return paths;
}

inline bool is_root_path_prefix(const std::vector<int>& steps) {
  for (const auto& p : toy_paths()) {
    if (steps.size() <= p.size() && std::equal(steps.begin(), steps.end(), p.begin())) return true;
  }
  return false;
}

// Hand-written reference for the toy protocols, independent of the
// compiler. Positions: 0 idle, 1 after a1, 2 after a2, 3 after b1.
struct ToyOutcome {
  fg::automaton::Classification::Kind kind;
  int next;
  std::optional<fg::automaton::ViolationReason> reason;
  bool completes = false;
};

inline ToyOutcome toy_reference(int pos, int sym) {
  using K = fg::automaton::Classification::Kind;
  using R = fg::automaton::ViolationReason;
  if (sym == CdnReq || sym == CdnResp || sym == EvilReq) return {K::Unrelated, pos, std::nullopt};
  const ToyOutcome flow{K::Violation, 0, R::FlowDeviation};
  switch (pos) {
    case 0:
      if (sym == A1) return {K::Step, 1, std::nullopt};
      if (sym == B1) return {K::Step, 3, std::nullopt};
      return flow;
    case 1:
      return sym == A2 ? ToyOutcome{K::Step, 2, std::nullopt} : flow;
    case 2:
      if (sym == A3) return {K::Step, 0, std::nullopt, true};
      if (sym == A3Bad) return {K::Violation, 0, R::IntegrityFailure};
      return flow;
    default:
      if (sym == B2a || sym == B2b) return {K::Step, 0, std::nullopt, true};
      return flow;
  }
}

inline fg::engine::Verdict feed(fg::engine::MonitorContext& ctx, const fg::http::HttpEvent& e,
                                fg::engine::Timestamp now = fg::engine::Timestamp{0}) {
  if (const auto* r = std::get_if<fg::http::HttpRequest>(&e)) return ctx.on_request(*r, now);
  return ctx.on_response(std::get<fg::http::HttpResponse>(e), now);
}

}  // namespace testing_support

namespace testing_support {

// Randomized browser/attacker traffic against a monitor. The browser only
// ever reuses strings it received through the monitor; the attacker uses
// its own codes. Every Allow-verdict request is checked against every
// secret the vault has ever held.
struct FuzzStats {
  std::size_t traces = 0;
  std::size_t events = 0;
  std::size_t allowed_requests = 0;
  std::size_t blocks = 0;
  std::size_t secrets = 0;
  std::size_t substitutions = 0;
  std::size_t withheld = 0;
  std::vector<std::string> leaks;
};

inline FuzzStats fuzz_confinement(std::shared_ptr<const fg::automaton::Automaton> automaton, std::uint64_t seed,
                                  std::size_t traces) {
  struct Idp {
    const char* auth;
    const char* origin;
  };
  static const Idp idps[] = {{"https://accounts.google.com/o/oauth2/v2/auth", "https://accounts.google.com/"},
                             {"https://www.facebook.com/v3.2/dialog/oauth", "https://www.facebook.com/"}};
  static const char* redirects[] = {"https://rp.example/cb/google", "https://rp.example/cb",
                                    "https://shop.example/login/cb", "https://evil.example/cb"};
  static const char* sinks[] = {"https://evil.example/track", "https://tracker.example/px",
                                "https://rp.example/page", "https://accounts.google.com/o/oauth2/v2/auth",
                                "https://shop.example/api", "https://cdn.example/lib.js"};
  static const char charset[] = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-._~/+=";

  std::mt19937_64 gen(seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(gen() % n); };
  auto coin = [&](int percent) { return static_cast<int>(gen() % 100) < percent; };
  auto random_secret = [&] {
    std::string s;
    const std::size_t len = 40 + pick(24);
    for (std::size_t i = 0; i < len; ++i) s.push_back(charset[pick(sizeof(charset) - 1)]);
    return s;
  };

  auto nonce = [&] {
    std::string s = "st-";
    for (int i = 0; i < 16; ++i) s.push_back("0123456789abcdef"[pick(16)]);
    return s;
  };

  FuzzStats st;
  struct Secret {
    std::string value;
    std::vector<fg::http::Origin> origins;
  };
  for (std::size_t t = 0; t < traces; ++t) {
    fg::engine::EngineConfig cfg;
    cfg.rewrite_scope.form_body = coin(50);
    fg::engine::MonitorContext ctx(automaton, cfg, std::make_shared<fg::engine::SeededRandom>(gen()));
    std::vector<Secret> secrets;
    std::vector<std::string> seen;  // strings the browser got from the monitor
    std::string last_location;
    std::string last_redirect = redirects[0];
    const Idp* last_idp = &idps[0];
    bool implicit = false;
    fg::engine::Timestamp now{0};

    auto check = [&](const fg::engine::Verdict& v) {
      ++st.events;
      for (const auto& n : v.placeholders_created) {
        if (const auto* e = ctx.vault().find(n.placeholder)) secrets.push_back({e->secret, e->origins});
      }
      st.secrets += v.placeholders_created.size();
      if (!v.allowed()) {
        ++st.blocks;
        return;
      }
      if (const auto* resp = std::get_if<fg::http::HttpResponse>(&v.event)) {
        for (const auto& [name, value] : resp->headers) seen.push_back(value);
        if (auto loc = resp->headers.get("Location")) last_location = std::string(*loc);
        return;
      }
      const auto& req = std::get<fg::http::HttpRequest>(v.event);
      ++st.allowed_requests;
      st.substitutions += v.placeholders_substituted.size();
      st.withheld += v.placeholders_withheld.size();
      const auto dest = fg::http::origin_of(req.url);
      const std::string wire = fg::http::serialize_request(req);
      for (const auto& s : secrets) {
        if (wire.find(s.value) == std::string::npos) continue;
        if (std::find(s.origins.begin(), s.origins.end(), dest) == s.origins.end()) {
          st.leaks.push_back("trace " + std::to_string(t) + ": secret reached " + dest.to_string());
        }
      }
    };
    auto send = [&](const fg::http::HttpRequest& r) { check(ctx.on_request(r, now)); };
    auto recv = [&](const fg::http::HttpResponse& r) { check(ctx.on_response(r, now)); };
    auto seen_or = [&](const std::string& fallback) { return seen.empty() ? fallback : seen[pick(seen.size())]; };

    const std::size_t steps = 6 + pick(20);
    for (std::size_t i = 0; i < steps; ++i) {
      now += fg::engine::Timestamp{coin(3) ? 301000 : 50 + static_cast<std::int64_t>(pick(2000))};
      try {
      switch (pick(10)) {
        case 0: {  // login starts
          last_idp = &idps[pick(2)];
          last_redirect = redirects[pick(4)];
          implicit = coin(40);
          std::string url = std::string(last_idp->auth) + "?response_type=" + (implicit ? "token" : "code") +
                            "&client_id=c1&redirect_uri=" + fg::http::percent_encode(last_redirect);
          if (coin(50)) url += "&state=" + nonce();
          send(get(url));
          break;
        }
        case 1: {  // IdP answers with a fresh secret
          const std::string secret = random_secret();
          const std::string enc = coin(50) ? fg::http::percent_encode(secret) : secret;
          std::string loc = last_redirect + (implicit ? "#access_token=" : "?code=") + enc;
          if (coin(50)) loc += "&state=" + nonce();
          fg::http::Headers h{{"Location", loc}};
          if (coin(30)) h.add("X-Debug", "issued " + secret);
          if (coin(20)) h.add("Set-Cookie", "sid=" + enc + "; Secure");
          recv(response(last_idp->auth, 302, std::move(h)));
          break;
        }
        case 2: {  // follow a URL the browser was shown
          const std::string target = !last_location.empty() && coin(50) ? last_location : seen_or(last_redirect);
          try {
            auto u = fg::http::parse_url(target);
            if (u.has_fragment) {  // script hands the fragment to its own origin
              const std::string session =
                  fg::http::origin_of(u).to_string() + "session?" + u.fragment;
              send(get(session));
            } else {
              send(get(target));
            }
          } catch (const fg::http::MalformedUrl&) {
            send(get(last_redirect + "?code=" + target.substr(0, 60)));
          }
          break;
        }
        case 3: {  // leak a seen string to some origin
          const std::string value = seen_or("nothing");
          const std::string sink = sinks[pick(std::size(sinks))];
          switch (pick(3)) {
            case 0:
              send(get(sink, {{"Referer", value}}));
              break;
            case 1:
              send(get(sink + "?u=" + fg::http::percent_encode(value)));
              break;
            default:
              send(get(sink + "?u=" + value));
              break;
          }
          break;
        }
        case 4:  // seen string in a form body
          send(post_form(sinks[pick(std::size(sinks))], "v=" + fg::http::percent_encode(seen_or("x")) + "&raw=" +
                                                            seen_or("y")));
          break;
        case 5:  // attacker-page forges a callback with its own code
          send(get(std::string(redirects[pick(3)]) + "?code=" + random_secret()));
          break;
        case 6:
          send(get("https://cdn.example/app.js"));
          break;
        case 7:
          recv(response("https://cdn.example/app.js", 200, {{"Content-Type", "text/javascript"}}));
          break;
        case 8: {  // the attacker's own IdP response lands in the browser
          const std::string loc = std::string(redirects[pick(4)]) + "?code=" + random_secret();
          recv(response(last_idp->auth, 302, {{"Location", loc}}));
          break;
        }
        default:  // unrelated page that echoes a seen string back
          recv(response("https://rp.example/page", 200, {{"X-Echo", seen_or("none")}}));
          break;
      }
      } catch (const fg::http::MalformedUrl&) {
        // a seen string that is not usable as a URL; the browser gives up
      }
    }
    ++st.traces;
  }
  return st;
}

}  // namespace testing_support
