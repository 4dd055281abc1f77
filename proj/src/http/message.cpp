#include "flowguard/http.hpp"

#include <algorithm>
#include <charconv>

namespace flowguard::http {

void Headers::add(std::string name, std::string value) {
  entries_.emplace_back(std::move(name), std::move(value));
}

void Headers::set(std::string_view name, std::string value) {
  auto it = std::find_if(entries_.begin(), entries_.end(),
                         [&](const Entry& e) { return iequals(e.first, name); });
  if (it == entries_.end()) {
    entries_.emplace_back(std::string(name), std::move(value));
    return;
  }
  it->second = std::move(value);
  entries_.erase(std::remove_if(std::next(it), entries_.end(),
                                [&](const Entry& e) { return iequals(e.first, name); }),
                 entries_.end());
}

void Headers::remove(std::string_view name) {
  std::erase_if(entries_, [&](const Entry& e) { return iequals(e.first, name); });
}

std::optional<std::string> Headers::get(std::string_view name) const {
  for (const auto& [k, v] : entries_) {
    if (iequals(k, name)) return v;
  }
  return std::nullopt;
}

std::vector<std::string> Headers::get_all(std::string_view name) const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) {
    if (iequals(k, name)) out.push_back(v);
  }
  return out;
}

bool Headers::contains(std::string_view name) const { return get(name).has_value(); }

bool HttpRequest::has_form_body() const {
  if (!body) return false;
  const auto ct = headers.get("Content-Type");
  if (!ct) return false;
  std::string_view type(*ct);
  type = type.substr(0, type.find(';'));
  while (!type.empty() && type.back() == ' ') type.remove_suffix(1);
  return iequals(type, "application/x-www-form-urlencoded");
}

ParamList HttpRequest::params() const { return extract_params(*this); }

ParamList extract_params(const HttpRequest& req) {
  ParamList out = parse_form(req.url.query);
  if (req.has_form_body()) {
    ParamList body = parse_form(*req.body);
    out.insert(out.end(), std::make_move_iterator(body.begin()), std::make_move_iterator(body.end()));
  }
  return out;
}

const AbsoluteUrl& event_url(const HttpEvent& event) {
  if (const auto* req = std::get_if<HttpRequest>(&event)) return req->url;
  return std::get<HttpResponse>(event).request_url;
}

bool is_request(const HttpEvent& event) { return std::holds_alternative<HttpRequest>(event); }

namespace {

struct Cursor {
  std::string_view rest;

  std::string_view line() {
    const auto end = rest.find("\r\n");
    if (end == std::string_view::npos) throw MalformedMessage("missing CRLF");
    std::string_view out = rest.substr(0, end);
    rest = rest.substr(end + 2);
    return out;
  }
};

Headers read_headers(Cursor& cur) {
  Headers headers;
  for (;;) {
    std::string_view line = cur.line();
    if (line.empty()) break;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw MalformedMessage("malformed header line: " + std::string(line));
    }
    std::string_view value = line.substr(colon + 1);
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.remove_prefix(1);
    while (!value.empty() && (value.back() == ' ' || value.back() == '\t')) value.remove_suffix(1);
    headers.add(std::string(line.substr(0, colon)), std::string(value));
  }
  return headers;
}

std::optional<std::string> read_body(Cursor& cur, const Headers& headers) {
  if (const auto te = headers.get("Transfer-Encoding"); te && !iequals(*te, "identity")) {
    throw MalformedMessage("transfer-encoded bodies are not supported here");
  }
  if (const auto cl = headers.get("Content-Length")) {
    std::size_t length = 0;
    auto [ptr, ec] = std::from_chars(cl->data(), cl->data() + cl->size(), length);
    if (ec != std::errc{} || ptr != cl->data() + cl->size()) {
      throw MalformedMessage("bad Content-Length: " + *cl);
    }
    if (cur.rest.size() < length) throw MalformedMessage("truncated body");
    std::string body(cur.rest.substr(0, length));
    cur.rest = cur.rest.substr(length);
    return body;
  }
  if (cur.rest.empty()) return std::nullopt;
  std::string body(cur.rest);
  cur.rest = {};
  return body;
}

void write_headers(std::string& out, const Headers& headers) {
  for (const auto& [k, v] : headers) {
    out += k;
    out += ": ";
    out += v;
    out += "\r\n";
  }
  out += "\r\n";
}

std::string_view reason_phrase(int status) {
  switch (status) {
    case 200: return "OK";
    case 201: return "Created";
    case 204: return "No Content";
    case 301: return "Moved Permanently";
    case 302: return "Found";
    case 303: return "See Other";
    case 304: return "Not Modified";
    case 307: return "Temporary Redirect";
    case 308: return "Permanent Redirect";
    case 400: return "Bad Request";
    case 401: return "Unauthorized";
    case 403: return "Forbidden";
    case 404: return "Not Found";
    case 500: return "Internal Server Error";
    case 502: return "Bad Gateway";
    default: return "Status";
  }
}

}  // namespace

HttpRequest parse_request(std::string_view raw, std::string_view default_scheme) {
  Cursor cur{raw};
  std::string_view request_line = cur.line();
  const auto sp1 = request_line.find(' ');
  const auto sp2 = request_line.rfind(' ');
  if (sp1 == std::string_view::npos || sp1 == sp2) {
    throw MalformedMessage("malformed request line: " + std::string(request_line));
  }
  const std::string_view version = request_line.substr(sp2 + 1);
  if (version.substr(0, 5) != "HTTP/") throw MalformedMessage("bad HTTP version");

  HttpRequest req;
  req.method = std::string(request_line.substr(0, sp1));
  const std::string_view target = request_line.substr(sp1 + 1, sp2 - sp1 - 1);
  req.headers = read_headers(cur);
  try {
    if (!target.empty() && target.front() == '/') {
      const auto host = req.headers.get("Host");
      if (!host) throw MalformedMessage("origin-form request without Host");
      req.url = parse_url(std::string(default_scheme) + "://" + *host + std::string(target));
    } else {
      req.url = parse_url(target);
    }
  } catch (const MalformedUrl& e) {
    throw MalformedMessage(e.what());
  }
  req.body = read_body(cur, req.headers);
  return req;
}

std::string serialize_request(const HttpRequest& req, bool absolute_form) {
  std::string out = req.method + " ";
  out += absolute_form ? req.url.serialize() : req.url.target();
  out += " HTTP/1.1\r\n";
  write_headers(out, req.headers);
  if (req.body) out += *req.body;
  return out;
}

HttpResponse parse_response(std::string_view raw, AbsoluteUrl request_url) {
  Cursor cur{raw};
  std::string_view status_line = cur.line();
  if (status_line.substr(0, 5) != "HTTP/") throw MalformedMessage("bad status line");
  const auto sp = status_line.find(' ');
  if (sp == std::string_view::npos || status_line.size() < sp + 4) {
    throw MalformedMessage("bad status line");
  }
  int status = 0;
  auto [ptr, ec] = std::from_chars(status_line.data() + sp + 1, status_line.data() + sp + 4, status);
  if (ec != std::errc{} || status < 100 || status > 599) throw MalformedMessage("bad status code");

  HttpResponse resp;
  resp.status = status;
  resp.request_url = std::move(request_url);
  resp.headers = read_headers(cur);
  resp.body = read_body(cur, resp.headers);
  return resp;
}

std::string serialize_response(const HttpResponse& resp) {
  std::string out = "HTTP/1.1 " + std::to_string(resp.status) + " ";
  out += reason_phrase(resp.status);
  out += "\r\n";
  write_headers(out, resp.headers);
  if (resp.body) out += *resp.body;
  return out;
}

}  // namespace flowguard::http
