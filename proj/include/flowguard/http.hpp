#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace flowguard::http {

class MalformedUrl : public std::runtime_error {
 public:
  explicit MalformedUrl(const std::string& what) : std::runtime_error(what) {}
};

class MalformedMessage : public std::runtime_error {
 public:
  explicit MalformedMessage(const std::string& what) : std::runtime_error(what) {}
};

/// Default port for a scheme, or 0 if the scheme has none we know of.
std::uint16_t default_port(std::string_view scheme);

/// An absolute URL split into components. Host and scheme are lowercased;
/// path, query and fragment are kept byte-exact.
struct AbsoluteUrl {
  std::string scheme;
  std::string userinfo;
  std::string host;
  std::uint16_t port = 0;
  std::string path;
  std::string query;
  std::string fragment;
  bool has_query = false;
  bool has_fragment = false;

  /// scheme://host[:port] with the port elided when it is the default.
  std::string authority_prefix() const;
  /// scheme://host[:port]path, the text endpoint patterns are matched against.
  std::string endpoint() const;
  /// path[?query], the origin-form request target.
  std::string target() const;
  std::string serialize() const;

  bool operator==(const AbsoluteUrl&) const = default;
};

AbsoluteUrl parse_url(std::string_view text);

struct Origin {
  std::string scheme;
  std::string host;
  std::uint16_t port = 0;

  /// "scheme://host[:port]/" with the default port elided.
  std::string to_string() const;

  auto operator<=>(const Origin&) const = default;
};

Origin origin_of(const AbsoluteUrl& url);
/// Parses an origin from any absolute URL text; nullopt when unparseable.
std::optional<Origin> parse_origin(std::string_view text);

bool iequals(std::string_view a, std::string_view b);

/// Ordered header multimap. Names compare case-insensitively, values are
/// byte strings.
class Headers {
 public:
  using Entry = std::pair<std::string, std::string>;

  Headers() = default;
  Headers(std::initializer_list<Entry> entries) : entries_(entries) {}

  void add(std::string name, std::string value);
  /// Replaces every header called `name` with a single entry.
  void set(std::string_view name, std::string value);
  void remove(std::string_view name);
  std::optional<std::string> get(std::string_view name) const;
  std::vector<std::string> get_all(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool operator==(const Headers&) const = default;

 private:
  std::vector<Entry> entries_;
};

using ParamList = std::vector<std::pair<std::string, std::string>>;

struct HttpRequest {
  std::string method = "GET";
  AbsoluteUrl url;
  Headers headers;
  std::optional<std::string> body;

  bool has_form_body() const;
  /// Query parameters followed by form-body parameters, percent-decoded.
  ParamList params() const;

  bool operator==(const HttpRequest&) const = default;
};

struct HttpResponse {
  int status = 200;
  AbsoluteUrl request_url;
  Headers headers;
  std::optional<std::string> body;

  bool operator==(const HttpResponse&) const = default;
};

using HttpEvent = std::variant<HttpRequest, HttpResponse>;

ParamList extract_params(const HttpRequest& req);
/// Splits an application/x-www-form-urlencoded string. Pairs without '='
/// yield an empty value; empty segments are skipped.
ParamList parse_form(std::string_view text);

std::string percent_decode(std::string_view text, bool plus_as_space = false);
/// Encodes everything outside the RFC 3986 unreserved set.
std::string percent_encode(std::string_view text);

/// Parses an HTTP/1.1 request. The target may be absolute-form or
/// origin-form (then Host is required). `default_scheme` applies to
/// origin-form targets.
HttpRequest parse_request(std::string_view raw, std::string_view default_scheme = "http");
/// Serializes in the same form `parse_request` accepted when `absolute_form`
/// matches how the request line was written.
std::string serialize_request(const HttpRequest& req, bool absolute_form = true);

HttpResponse parse_response(std::string_view raw, AbsoluteUrl request_url);
std::string serialize_response(const HttpResponse& resp);

const AbsoluteUrl& event_url(const HttpEvent& event);
bool is_request(const HttpEvent& event);

}  // namespace flowguard::http
