#include <algorithm>

#include "flowguard/engine.hpp"

namespace flowguard::engine {

using automaton::Classification;

std::string_view to_string(Action a) { return a == Action::Allow ? "allow" : "block"; }

std::string_view to_string(BlockReason r) {
  return r == BlockReason::FlowDeviation ? "flow-deviation" : "integrity-failure";
}

namespace {

struct Replacement {
  std::string_view from;
  std::string_view to;
  std::size_t index;  // caller's bookkeeping
};

// Replaces every occurrence of any `from` in one left-to-right scan, trying
// longer needles first, so replacement text is never rescanned.
std::string replace_all(std::string_view text, const std::vector<Replacement>& reps, std::vector<bool>& hit) {
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    bool replaced = false;
    for (const auto& r : reps) {
      if (!r.from.empty() && text.compare(i, r.from.size(), r.from) == 0) {
        out += r.to;
        i += r.from.size();
        hit[r.index] = true;
        replaced = true;
        break;
      }
    }
    if (!replaced) out.push_back(text[i++]);
  }
  return out;
}

bool contains_any(std::string_view text, const std::vector<Replacement>& reps) {
  for (const auto& r : reps) {
    if (!r.from.empty() && text.find(r.from) != std::string_view::npos) return true;
  }
  return false;
}

void sort_longest_first(std::vector<Replacement>& reps) {
  std::stable_sort(reps.begin(), reps.end(),
                   [](const Replacement& a, const Replacement& b) { return a.from.size() > b.from.size(); });
}

}  // namespace

MonitorContext::MonitorContext(std::shared_ptr<const automaton::Automaton> automaton, EngineConfig config,
                               std::shared_ptr<RandomSource> rng, std::string context_id)
    : automaton_(std::move(automaton)), config_(std::move(config)), rng_(std::move(rng)), id_(std::move(context_id)) {
  if (!automaton_) throw ConfigError("monitor needs an automaton");
  config_.validate();
  if (!rng_) rng_ = std::make_shared<SystemRandom>();
}

void MonitorContext::reset() {
  state_ = automaton::kInit;
  env_.clear();
  vault_.clear();
  last_step_.reset();
}

void MonitorContext::expire_if_stale(Timestamp now, Verdict& v) {
  if (in_run() && last_step_ && now - *last_step_ > config_.run_timeout) {
    reset();
    v.timed_out = true;
  }
}

void MonitorContext::bind_step(const automaton::Transition& t, const Classification& c, const http::HttpEvent&) {
  for (const auto& [id, value] : c.bindings) env_.bind(id, value, t.target);
}

void MonitorContext::apply(const Classification& c, Verdict& v, Timestamp now) {
  v.classification = c.kind;
  v.diagnostics = c.diagnostics;
  if (c.transition) v.spec = automaton_->transition(*c.transition).origin_spec;
  if (c.kind == Classification::Kind::Step) {
    state_ = automaton_->transition(*c.transition).target;
    last_step_ = now;
  }
}

Verdict MonitorContext::on_request(const http::HttpRequest& req, Timestamp now) {
  Verdict v;
  expire_if_stale(now, v);
  v.state_before = automaton_->state(state_).name;

  // Placeholders go back to their secrets only toward authorized origins.
  http::HttpRequest out = req;
  const http::Origin dest = http::origin_of(req.url);
  std::vector<Replacement> allowed;
  std::vector<Replacement> withheld;
  const auto& entries = vault_.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    const bool ok = std::find(e.origins.begin(), e.origins.end(), dest) != e.origins.end();
    (ok ? allowed : withheld).push_back({e.placeholder, e.secret, i});
  }
  sort_longest_first(allowed);
  std::vector<bool> hit(entries.size(), false);
  std::vector<bool> seen_withheld(entries.size(), false);
  auto rewrite = [&](std::string& text) {
    for (const auto& w : withheld) {
      if (text.find(w.from) != std::string::npos) seen_withheld[w.index] = true;
    }
    if (contains_any(text, allowed)) text = replace_all(text, allowed, hit);
  };
  if (!entries.empty()) {
    const auto& scope = config_.rewrite_scope;
    if (scope.headers) {
      for (auto& [name, value] : out.headers.entries()) rewrite(value);
    }
    if (scope.url_params && out.url.has_query) rewrite(out.url.query);
    if (scope.form_body && out.body && out.has_form_body()) {
      rewrite(*out.body);
      if (out.headers.contains("Content-Length")) out.headers.set("Content-Length", std::to_string(out.body->size()));
    }
  }

  const auto c = automaton::classify(*automaton_, state_, out, env_);
  if (c.kind == Classification::Kind::Violation) {
    v.action = Action::Block;
    v.reason = *c.reason == automaton::ViolationReason::FlowDeviation ? BlockReason::FlowDeviation
                                                                        : BlockReason::IntegrityFailure;
    v.event = req;
    apply(c, v, now);
    reset();
    v.state_after = automaton_->state(state_).name;
    return v;
  }

  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (hit[i]) v.placeholders_substituted.push_back({entries[i].placeholder, entries[i].identifier});
    if (seen_withheld[i]) v.placeholders_withheld.push_back({entries[i].placeholder, entries[i].identifier});
  }
  if (c.kind == Classification::Kind::Step) {
    const auto& t = automaton_->transition(*c.transition);
    bind_step(t, c, out);
  }
  apply(c, v, now);
  v.event = std::move(out);
  if (automaton_->state(state_).final) {
    v.run_completed = true;
    reset();
  }
  v.state_after = automaton_->state(state_).name;
  return v;
}

Verdict MonitorContext::on_response(const http::HttpResponse& resp, Timestamp now) {
  Verdict v;
  expire_if_stale(now, v);
  v.state_before = automaton_->state(state_).name;

  // Guards see the response as the server sent it.
  const auto c = automaton::classify(*automaton_, state_, resp, env_);
  if (c.kind == Classification::Kind::Violation) {
    v.action = Action::Block;
    v.reason = *c.reason == automaton::ViolationReason::FlowDeviation ? BlockReason::FlowDeviation
                                                                        : BlockReason::IntegrityFailure;
    v.event = resp;
    apply(c, v, now);
    reset();
    v.state_after = automaton_->state(state_).name;
    return v;
  }

  http::HttpResponse out = resp;
  const automaton::Transition* step = nullptr;
  if (c.kind == Classification::Kind::Step) {
    step = &automaton_->transition(*c.transition);
    bind_step(*step, c, resp);
  }
  apply(c, v, now);
  strip_response(out, step, v);
  v.event = std::move(out);
  if (automaton_->state(state_).final) {
    v.run_completed = true;
    reset();
  }
  v.state_after = automaton_->state(state_).name;
  return v;
}

void MonitorContext::strip_response(http::HttpResponse& resp, const automaton::Transition* step, Verdict& v) {
  const auto& scope = config_.rewrite_scope;
  auto occurs = [&](const std::string& needle) {
    if (scope.headers) {
      for (const auto& [name, value] : resp.headers) {
        if (value.find(needle) != std::string::npos) return true;
      }
    }
    return scope.form_body && resp.body && resp.body->find(needle) != std::string::npos;
  };

  if (step) {
    for (const auto& policy : step->secrecy) {
      auto secret = env_.raw(policy.target);
      if (!secret || secret->empty()) {
        v.diagnostics.push_back("secret '" + policy.target + "' is empty; nothing to protect");
        continue;
      }
      std::vector<http::Origin> origins;
      for (const auto& tmpl : policy.origins) {
        auto text = spec::expand_template(
            tmpl, [&](const std::string& id) { return env_.lookup(*automaton_, state_, id); });
        auto origin = text ? http::parse_origin(*text) : std::nullopt;
        if (origin) {
          origins.push_back(*origin);
        } else {
          v.diagnostics.push_back("secrecy origin '" + tmpl + "' does not resolve to an origin");
        }
      }
      // The secret may travel raw, percent-encoded or decoded; each form
      // seen gets its own placeholder so substitution restores it exactly.
      std::vector<std::string> forms{*secret};
      for (auto form : {http::percent_encode(*secret), http::percent_decode(*secret, true)}) {
        if (!form.empty() && std::find(forms.begin(), forms.end(), form) == forms.end() && occurs(form)) {
          forms.push_back(std::move(form));
        }
      }
      for (auto& form : forms) {
        const auto& e = vault_.add(std::move(form), policy.target, origins, config_, *rng_);
        v.placeholders_created.push_back({e.placeholder, e.identifier});
      }
    }
  }

  const auto& entries = vault_.entries();
  if (entries.empty()) return;
  std::vector<Replacement> reps;
  for (std::size_t i = 0; i < entries.size(); ++i) reps.push_back({entries[i].secret, entries[i].placeholder, i});
  sort_longest_first(reps);
  std::vector<bool> hit(entries.size(), false);
  if (scope.headers) {
    for (auto& [name, value] : resp.headers.entries()) {
      if (contains_any(value, reps)) value = replace_all(value, reps, hit);
    }
  }
  if (scope.form_body && resp.body && contains_any(*resp.body, reps)) {
    *resp.body = replace_all(*resp.body, reps, hit);
    if (resp.headers.contains("Content-Length")) resp.headers.set("Content-Length", std::to_string(resp.body->size()));
  }
}

}  // namespace flowguard::engine
