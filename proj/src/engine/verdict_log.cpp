#include <ctime>
#include <iomanip>
#include <sstream>

#include "json.hpp"

#include "flowguard/engine.hpp"

namespace flowguard::engine {

namespace {

std::string iso8601(std::chrono::system_clock::time_point when) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(when.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%S") << '.' << std::setw(3) << std::setfill('0') << (ms % 1000) << 'Z';
  return os.str();
}

nlohmann::json notes(const std::vector<PlaceholderNote>& v) {
  auto arr = nlohmann::json::array();
  for (const auto& n : v) arr.push_back({{"placeholder", n.placeholder}, {"identifier", n.identifier}});
  return arr;
}

}  // namespace

std::string verdict_log_line(const std::string& context_id, const http::HttpEvent& original, const Verdict& v,
                             std::chrono::system_clock::time_point when) {
  nlohmann::json j;
  j["ts"] = iso8601(when);
  j["context"] = context_id;
  if (const auto* req = std::get_if<http::HttpRequest>(&original)) {
    j["direction"] = "request";
    j["method"] = req->method;
  } else {
    j["direction"] = "response";
    j["status"] = std::get<http::HttpResponse>(original).status;
  }
  j["origin"] = http::origin_of(http::event_url(original)).to_string();
  j["state_before"] = v.state_before;
  j["state_after"] = v.state_after;
  j["classification"] = std::string(automaton::to_string(v.classification));
  j["action"] = std::string(to_string(v.action));
  j["block_reason"] = v.reason ? nlohmann::json(std::string(to_string(*v.reason))) : nlohmann::json(nullptr);
  j["spec"] = v.spec.empty() ? nlohmann::json(nullptr) : nlohmann::json(v.spec);
  j["placeholders_created"] = notes(v.placeholders_created);
  j["placeholders_substituted"] = notes(v.placeholders_substituted);
  j["placeholders_withheld"] = notes(v.placeholders_withheld);
  j["run_completed"] = v.run_completed;
  if (v.timed_out) j["timed_out"] = true;
  return j.dump();
}

void VerdictLog::write(const std::string& context_id, const http::HttpEvent& original, const Verdict& v,
                       std::chrono::system_clock::time_point when) {
  const std::string line = verdict_log_line(context_id, original, v, when);
  std::lock_guard lock(mu_);
  *out_ << line << '\n';
  out_->flush();
}

}  // namespace flowguard::engine
