#include "flowguard/http.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

namespace flowguard::http {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

bool valid_scheme(std::string_view s) {
  if (s.empty() || !std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isalnum(c) || c == '+' || c == '-' || c == '.';
  });
}

bool valid_host_char(unsigned char c) {
  return std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~' || c == '%';
}

std::string port_suffix(std::string_view scheme, std::uint16_t port) {
  if (port == 0 || port == default_port(scheme)) return {};
  return ":" + std::to_string(port);
}

}  // namespace

std::uint16_t default_port(std::string_view scheme) {
  if (scheme == "http" || scheme == "ws") return 80;
  if (scheme == "https" || scheme == "wss") return 443;
  return 0;
}

AbsoluteUrl parse_url(std::string_view text) {
  for (unsigned char c : text) {
    if (c <= 0x20 || c == 0x7f) {
      throw MalformedUrl("URL contains whitespace or control characters: " + std::string(text));
    }
  }
  const auto colon = text.find("://");
  if (colon == std::string_view::npos) {
    throw MalformedUrl("not an absolute URL: " + std::string(text));
  }
  AbsoluteUrl url;
  url.scheme = lower(text.substr(0, colon));
  if (!valid_scheme(url.scheme)) throw MalformedUrl("invalid scheme in: " + std::string(text));

  std::string_view rest = text.substr(colon + 3);
  const auto auth_end = rest.find_first_of("/?#");
  std::string_view authority = rest.substr(0, auth_end);
  rest = auth_end == std::string_view::npos ? std::string_view{} : rest.substr(auth_end);

  if (const auto at = authority.rfind('@'); at != std::string_view::npos) {
    url.userinfo = std::string(authority.substr(0, at));
    authority = authority.substr(at + 1);
  }

  std::string_view host = authority;
  std::string_view port_text;
  if (!authority.empty() && authority.front() == '[') {
    const auto close = authority.find(']');
    if (close == std::string_view::npos) throw MalformedUrl("unterminated IPv6 host: " + std::string(text));
    host = authority.substr(0, close + 1);
    std::string_view after = authority.substr(close + 1);
    if (!after.empty()) {
      if (after.front() != ':') throw MalformedUrl("garbage after IPv6 host: " + std::string(text));
      port_text = after.substr(1);
    }
  } else if (const auto pc = authority.rfind(':'); pc != std::string_view::npos) {
    host = authority.substr(0, pc);
    port_text = authority.substr(pc + 1);
  }
  if (host.empty()) throw MalformedUrl("missing host: " + std::string(text));
  if (host.front() != '[' &&
      !std::all_of(host.begin(), host.end(), [](unsigned char c) { return valid_host_char(c); })) {
    throw MalformedUrl("invalid host: " + std::string(text));
  }
  url.host = lower(host);

  url.port = default_port(url.scheme);
  if (!port_text.empty()) {
    unsigned value = 0;
    auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), value);
    if (ec != std::errc{} || ptr != port_text.data() + port_text.size() || value == 0 || value > 65535) {
      throw MalformedUrl("invalid port: " + std::string(text));
    }
    url.port = static_cast<std::uint16_t>(value);
  }

  if (const auto hash = rest.find('#'); hash != std::string_view::npos) {
    url.fragment = std::string(rest.substr(hash + 1));
    url.has_fragment = true;
    rest = rest.substr(0, hash);
  }
  if (const auto q = rest.find('?'); q != std::string_view::npos) {
    url.query = std::string(rest.substr(q + 1));
    url.has_query = true;
    rest = rest.substr(0, q);
  }
  url.path = std::string(rest);
  return url;
}

std::string AbsoluteUrl::authority_prefix() const {
  std::string out = scheme + "://";
  if (!userinfo.empty()) out += userinfo + "@";
  out += host;
  out += port_suffix(scheme, port);
  return out;
}

std::string AbsoluteUrl::endpoint() const {
  std::string out = scheme + "://" + host + port_suffix(scheme, port);
  out += path.empty() ? "/" : path;
  return out;
}

std::string AbsoluteUrl::target() const {
  std::string out = path.empty() ? "/" : path;
  if (has_query) out += "?" + query;
  return out;
}

std::string AbsoluteUrl::serialize() const {
  std::string out = authority_prefix() + path;
  if (has_query) out += "?" + query;
  if (has_fragment) out += "#" + fragment;
  return out;
}

std::string Origin::to_string() const {
  return scheme + "://" + host + port_suffix(scheme, port) + "/";
}

Origin origin_of(const AbsoluteUrl& url) { return Origin{url.scheme, url.host, url.port}; }

std::optional<Origin> parse_origin(std::string_view text) {
  try {
    return origin_of(parse_url(text));
  } catch (const MalformedUrl&) {
    return std::nullopt;
  }
}

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(), [](unsigned char x, unsigned char y) {
           return std::tolower(x) == std::tolower(y);
         });
}

std::string percent_decode(std::string_view text, bool plus_as_space) {
  auto hex = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c == '%' && i + 2 < text.size()) {
      const int hi = hex(text[i + 1]);
      const int lo = hex(text[i + 2]);
      if (hi >= 0 && lo >= 0) {
        out.push_back(static_cast<char>(hi * 16 + lo));
        i += 2;
        continue;
      }
    }
    out.push_back(plus_as_space && c == '+' ? ' ' : c);
  }
  return out;
}

std::string percent_encode(std::string_view text) {
  static constexpr char digits[] = "0123456789ABCDEF";
  std::string out;
  out.reserve(text.size());
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '-' || c == '.' || c == '_' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(digits[c >> 4]);
      out.push_back(digits[c & 0xF]);
    }
  }
  return out;
}

ParamList parse_form(std::string_view text) {
  ParamList out;
  while (!text.empty()) {
    const auto amp = text.find('&');
    std::string_view pair = text.substr(0, amp);
    text = amp == std::string_view::npos ? std::string_view{} : text.substr(amp + 1);
    if (pair.empty()) continue;
    const auto eq = pair.find('=');
    if (eq == std::string_view::npos) {
      out.emplace_back(percent_decode(pair, true), std::string{});
    } else {
      out.emplace_back(percent_decode(pair.substr(0, eq), true),
                       percent_decode(pair.substr(eq + 1), true));
    }
  }
  return out;
}

}  // namespace flowguard::http
