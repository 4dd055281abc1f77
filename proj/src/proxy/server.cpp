#include <sys/socket.h>

#include <openssl/evp.h>

#include <boost/asio.hpp>
#include <boost/asio/ssl.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <fstream>
#include <iostream>
#include <set>
#include <thread>

#include "flowguard/proxy.hpp"
#include "proxy/tls.hpp"

namespace flowguard::proxy {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace bhttp = beast::http;
using tcp = asio::ip::tcp;

namespace {

constexpr std::string_view kHopByHop[] = {"connection", "proxy-connection", "keep-alive", "proxy-authorization",
                                          "proxy-authenticate", "te", "trailer", "transfer-encoding", "upgrade"};

std::string_view sv(beast::string_view s) { return {s.data(), s.size()}; }

bool is_hop_by_hop(std::string_view name, const std::vector<std::string>& listed) {
  for (auto h : kHopByHop) {
    if (http::iequals(h, name)) return true;
  }
  for (const auto& l : listed) {
    if (http::iequals(l, name)) return true;
  }
  return false;
}

std::vector<std::string> connection_tokens(const bhttp::fields& f) {
  std::vector<std::string> out;
  for (const auto& field : f) {
    if (!http::iequals(sv(field.name_string()), "connection")) continue;
    std::string v(field.value());
    std::size_t i = 0;
    while (i < v.size()) {
      auto comma = v.find(',', i);
      if (comma == std::string::npos) comma = v.size();
      auto tok = v.substr(i, comma - i);
      const auto b = tok.find_first_not_of(" \t");
      const auto e = tok.find_last_not_of(" \t");
      if (b != std::string::npos) out.push_back(tok.substr(b, e - b + 1));
      i = comma + 1;
    }
  }
  return out;
}

http::Headers end_to_end(const bhttp::fields& f) {
  const auto listed = connection_tokens(f);
  http::Headers h;
  for (const auto& field : f) {
    std::string name(field.name_string());
    if (!is_hop_by_hop(name, listed)) h.add(std::move(name), std::string(field.value()));
  }
  return h;
}

std::string html_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

// Sockets that must be woken up when the server stops.
class FdSet {
 public:
  bool add(int fd) {
    std::lock_guard lock(mu_);
    if (closed_) return false;
    fds_.insert(fd);
    return true;
  }
  void remove(int fd) {
    std::lock_guard lock(mu_);
    fds_.erase(fd);
  }
  void shutdown_all() {
    std::lock_guard lock(mu_);
    closed_ = true;
    for (int fd : fds_) ::shutdown(fd, SHUT_RDWR);
  }

 private:
  std::mutex mu_;
  std::set<int> fds_;
  bool closed_ = false;
};

class FdGuard {
 public:
  FdGuard(FdSet& set, int fd) : set_(set), fd_(fd), ok_(set.add(fd)) {}
  ~FdGuard() {
    if (ok_) set_.remove(fd_);
  }
  bool ok() const { return ok_; }

 private:
  FdSet& set_;
  int fd_;
  bool ok_;
};

std::optional<std::string> basic_user(std::string_view header) {
  constexpr std::string_view kBasic = "Basic ";
  if (header.size() <= kBasic.size() || !http::iequals(header.substr(0, kBasic.size()), kBasic)) return std::nullopt;
  std::string b64(header.substr(kBasic.size()));
  while (!b64.empty() && b64.back() == ' ') b64.pop_back();
  if (b64.empty() || b64.size() % 4 != 0) return std::nullopt;
  std::string raw(b64.size(), '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(raw.data()),
                                reinterpret_cast<const unsigned char*>(b64.data()), static_cast<int>(b64.size()));
  if (n < 0) return std::nullopt;
  raw.resize(static_cast<std::size_t>(n));
  // DecodeBlock keeps the zero bytes that stand in for '=' padding
  while (!raw.empty() && raw.back() == '\0') raw.pop_back();
  const auto colon = raw.find(':');
  if (colon == std::string::npos || colon == 0) return std::nullopt;
  return raw.substr(0, colon);
}

struct Upstream {
  http::HttpResponse response;
  bool head = false;
};

}  // namespace

struct Server::Impl {
  Impl(ProxyConfig c, std::shared_ptr<const automaton::Automaton> a)
      : config(std::move(c)), automaton(a ? std::move(a) : load_automaton(config)), registry(automaton, config.engine) {
    if (config.tls == TlsMode::Terminate) ca = std::make_unique<detail::CertAuthority>(config.ca_cert, config.ca_key);
    client_tls = detail::make_client_context(config);
    if (config.log == "-") {
      log_stream = &std::cout;
    } else if (config.log.empty()) {
      log_stream = &std::cerr;
    } else {
      log_file.open(config.log, std::ios::app);
      if (!log_file) throw engine::ConfigError("cannot open log " + config.log);
      log_stream = &log_file;
    }
    log = std::make_unique<engine::VerdictLog>(*log_stream);
  }

  ProxyConfig config;
  std::shared_ptr<const automaton::Automaton> automaton;
  ContextRegistry registry;
  std::unique_ptr<detail::CertAuthority> ca;
  std::shared_ptr<detail::ssl::context> client_tls;
  std::ofstream log_file;
  std::ostream* log_stream = nullptr;
  std::unique_ptr<engine::VerdictLog> log;
  const std::chrono::steady_clock::time_point epoch = std::chrono::steady_clock::now();

  asio::io_context ioc;
  tcp::acceptor acceptor{ioc};
  std::thread accept_thread;
  FdSet fds;
  std::atomic<bool> stopping{false};
  std::atomic<std::uint64_t> blocked{0};
  std::atomic<std::uint64_t> forwarded{0};

  std::mutex mu;
  std::condition_variable cv;
  std::size_t active = 0;
  bool stopped = false;
  bool started = false;

  engine::Timestamp now() const {
    return std::chrono::duration_cast<engine::Timestamp>(std::chrono::steady_clock::now() - epoch);
  }

  void accept_loop() {
    while (!stopping) {
      tcp::socket sock(ioc);
      beast::error_code ec;
      acceptor.accept(sock, ec);
      if (ec) {
        if (stopping) break;
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
        continue;
      }
      std::lock_guard lock(mu);
      ++active;
      std::thread([this, s = std::move(sock)]() mutable {
        try {
          run_connection(std::move(s));
        } catch (const std::exception& e) {
          std::cerr << "flowguard: connection error: " << e.what() << "\n";
        }
        std::lock_guard lock(mu);
        --active;
        cv.notify_all();
      }).detach();
    }
  }

  void run_connection(tcp::socket sock) {
    FdGuard guard(fds, sock.native_handle());
    if (!guard.ok()) return;
    beast::error_code ec;
    const auto remote = sock.remote_endpoint(ec);
    const std::string ip = ec ? "unknown" : remote.address().to_string();
    beast::flat_buffer buf;
    serve(sock, buf, ip);
    sock.shutdown(tcp::socket::shutdown_both, ec);
  }

  void serve(tcp::socket& sock, beast::flat_buffer& buf, const std::string& ip) {
    for (;;) {
      bhttp::request_parser<bhttp::string_body> parser;
      parser.body_limit(config.max_body_bytes);
      beast::error_code ec;
      bhttp::read(sock, buf, parser, ec);
      if (ec == bhttp::error::body_limit) {
        send_simple(sock, 11, 413, "request body too large", false);
        return;
      }
      if (ec) return;
      auto req = parser.release();
      if (req.method() == bhttp::verb::connect) {
        handle_connect(sock, buf, req, ip);
        return;
      }
      const auto key = context_key(req, ip);
      if (!key) {
        send_simple(sock, req.version(), 407, "proxy credentials required", req.keep_alive(),
                    {{"Proxy-Authenticate", "Basic realm=\"flowguard\""}});
        if (!req.keep_alive()) return;
        continue;
      }
      if (!handle(sock, req, *key, "http", std::nullopt) || !req.keep_alive()) return;
    }
  }

  template <typename Stream>
  void send_simple(Stream& stream, unsigned version, unsigned status, const std::string& text, bool keep,
                   const std::vector<std::pair<std::string, std::string>>& extra = {}) {
    bhttp::response<bhttp::string_body> res{static_cast<bhttp::status>(status), version};
    res.set(bhttp::field::content_type, "text/plain; charset=utf-8");
    for (const auto& [k, v] : extra) res.set(k, v);
    res.body() = text + "\n";
    res.keep_alive(keep);
    res.prepare_payload();
    beast::error_code ec;
    bhttp::write(stream, res, ec);
  }

  template <typename Stream>
  void send_block(Stream& stream, unsigned version, bool keep, const engine::Verdict& v) {
    const std::string reason(engine::to_string(*v.reason));
    bhttp::response<bhttp::string_body> res{bhttp::status::forbidden, version};
    res.set(bhttp::field::content_type, "text/html; charset=utf-8");
    res.set("X-Monitor-Block", reason);
    res.set(bhttp::field::cache_control, "no-store");
    res.body() = "<!doctype html>\n<html><head><title>Blocked by flowguard</title></head><body>\n"
                 "<h1>Blocked by flowguard</h1>\n<p>This message would have broken the expected protocol flow (" +
                 html_escape(reason) + ").</p>\n<p>State: " + html_escape(v.state_before) +
                 (v.spec.empty() ? "" : ", spec: " + html_escape(v.spec)) + "</p>\n</body></html>\n";
    res.keep_alive(keep);
    res.prepare_payload();
    beast::error_code ec;
    bhttp::write(stream, res, ec);
  }

  std::optional<std::string> context_key(const bhttp::request<bhttp::string_body>& req, const std::string& ip) const {
    switch (config.keying) {
      case Keying::Single: return std::string("single");
      case Keying::PerClientIp: return ip;
      case Keying::PerProxyCredential: {
        auto it = req.find(bhttp::field::proxy_authorization);
        if (it == req.end()) return std::nullopt;
        auto user = basic_user(sv(it->value()));
        if (!user) return std::nullopt;
        return "user:" + *user;
      }
    }
    return std::nullopt;
  }

  template <typename Stream>
  bool handle(Stream& stream, bhttp::request<bhttp::string_body>& req, const std::string& key,
              const std::string& scheme, const std::optional<std::string>& authority) {
    const unsigned version = req.version();
    const bool keep = req.keep_alive();

    http::HttpRequest r;
    try {
      const std::string target(req.target());
      if (authority) {
        r.url = http::parse_url(scheme + "://" + *authority + target);
      } else if (target.rfind("http://", 0) == 0 || target.rfind("https://", 0) == 0) {
        r.url = http::parse_url(target);
      } else {
        send_simple(stream, version, 400, "proxy requests need an absolute URL", false);
        return false;
      }
    } catch (const http::MalformedUrl& e) {
      send_simple(stream, version, 400, std::string("bad request target: ") + e.what(), false);
      return false;
    }
    r.method = std::string(req.method_string());
    r.headers = end_to_end(req);
    if (!req.body().empty() || req.has_content_length()) r.body = std::move(req.body());

    engine::Verdict v;
    try {
      v = registry.with(key, [&](engine::MonitorContext& ctx) { return ctx.on_request(r, now()); });
    } catch (const std::exception& e) {
      // fail closed: nothing is forwarded when the monitor cannot decide
      send_simple(stream, version, 500, std::string("monitor error: ") + e.what(), false);
      return false;
    }
    log->write(key, r, v);
    if (!v.allowed()) {
      ++blocked;
      send_block(stream, version, keep, v);
      return true;
    }

    const auto& out = std::get<http::HttpRequest>(v.event);
    ++forwarded;
    std::string failure;
    auto up = fetch(out, failure);
    if (!up) {
      send_simple(stream, version, 502, "upstream: " + failure, keep);
      return true;
    }

    engine::Verdict rv;
    try {
      rv = registry.with(key, [&](engine::MonitorContext& ctx) { return ctx.on_response(up->response, now()); });
    } catch (const std::exception& e) {
      send_simple(stream, version, 500, std::string("monitor error: ") + e.what(), false);
      return false;
    }
    log->write(key, up->response, rv);
    if (!rv.allowed()) {
      ++blocked;
      send_block(stream, version, keep, rv);
      return true;
    }

    const auto& resp = std::get<http::HttpResponse>(rv.event);
    bhttp::response<bhttp::string_body> res;
    res.version(version);
    res.result(static_cast<unsigned>(resp.status));
    for (const auto& [k, val] : resp.headers) {
      if (http::iequals(k, "content-length") && !up->head) continue;
      res.insert(k, val);
    }
    const bool bodiless = up->head || resp.status / 100 == 1 || resp.status == 204 || resp.status == 304;
    if (!bodiless) {
      res.body() = resp.body.value_or("");
      res.prepare_payload();
    }
    res.keep_alive(keep);
    beast::error_code ec;
    bhttp::write(stream, res, ec);
    return !ec;
  }

  std::optional<Upstream> fetch(const http::HttpRequest& out, std::string& failure) {
    const bool tls = out.url.scheme == "https";
    if (!tls && out.url.scheme != "http") {
      failure = "unsupported scheme " + out.url.scheme;
      return std::nullopt;
    }
    const std::uint16_t port = out.url.port ? out.url.port : http::default_port(out.url.scheme);
    beast::error_code ec;
    tcp::resolver resolver(ioc);
    auto results = resolver.resolve(out.url.host, std::to_string(port), ec);
    if (ec) {
      failure = "cannot resolve " + out.url.host + ": " + ec.message();
      return std::nullopt;
    }
    tcp::socket sock(ioc);
    asio::connect(sock, results, ec);
    if (ec) {
      failure = "cannot connect to " + out.url.host + ": " + ec.message();
      return std::nullopt;
    }
    FdGuard guard(fds, sock.native_handle());
    if (!guard.ok()) {
      failure = "shutting down";
      return std::nullopt;
    }

    bhttp::request<bhttp::string_body> breq;
    breq.method_string(out.method);
    breq.target(out.url.target());
    breq.version(11);
    for (const auto& [k, v] : out.headers) {
      if (http::iequals(k, "content-length")) continue;
      breq.insert(k, v);
    }
    if (breq.find(bhttp::field::host) == breq.end()) {
      std::string host = out.url.host;
      if (out.url.port && out.url.port != http::default_port(out.url.scheme)) host += ":" + std::to_string(out.url.port);
      breq.set(bhttp::field::host, host);
    }
    breq.set(bhttp::field::connection, "close");
    if (out.body) {
      breq.body() = *out.body;
      breq.prepare_payload();
    }

    Upstream up;
    up.head = out.method == "HEAD";
    bhttp::response_parser<bhttp::string_body> parser;
    parser.body_limit(config.max_body_bytes);
    if (up.head) parser.skip(true);
    beast::flat_buffer buf;
    if (tls) {
      asio::ssl::stream<tcp::socket&> s(sock, *client_tls);
      SSL_set_tlsext_host_name(s.native_handle(), out.url.host.c_str());
      if (config.upstream_verify) s.set_verify_callback(asio::ssl::host_name_verification(out.url.host));
      s.handshake(asio::ssl::stream_base::client, ec);
      if (!ec) bhttp::write(s, breq, ec);
      if (!ec) bhttp::read(s, buf, parser, ec);
      if (ec == asio::ssl::error::stream_truncated && parser.is_done()) ec = {};
    } else {
      bhttp::write(sock, breq, ec);
      if (!ec) bhttp::read(sock, buf, parser, ec);
    }
    if (ec) {
      failure = ec.message();
      return std::nullopt;
    }
    auto msg = parser.release();
    up.response.status = static_cast<int>(msg.result_int());
    up.response.request_url = out.url;
    up.response.headers = end_to_end(msg);
    if (!up.head && (!msg.body().empty() || msg.has_content_length())) up.response.body = std::move(msg.body());
    return up;
  }

  void handle_connect(tcp::socket& client, beast::flat_buffer& buf, const bhttp::request<bhttp::string_body>& req,
                      const std::string& ip) {
    const std::string target(req.target());
    const auto colon = target.rfind(':');
    const std::string host = colon == std::string::npos ? target : target.substr(0, colon);
    const std::string port = colon == std::string::npos ? "443" : target.substr(colon + 1);
    beast::error_code ec;

    if (config.tls == TlsMode::Terminate) {
      // the key comes from the CONNECT; requests inside the tunnel carry none
      const auto key = context_key(req, ip);
      if (!key) {
        send_simple(client, req.version(), 407, "proxy credentials required", false,
                    {{"Proxy-Authenticate", "Basic realm=\"flowguard\""}});
        return;
      }
      std::shared_ptr<detail::ssl::context> ctx;
      try {
        ctx = ca->server_context(host);
      } catch (const std::exception& e) {
        send_simple(client, req.version(), 502, e.what(), false);
        return;
      }
      asio::write(client, asio::buffer(std::string_view("HTTP/1.1 200 Connection Established\r\n\r\n")), ec);
      if (ec) return;
      asio::ssl::stream<tcp::socket&> tls(client, *ctx);
      tls.handshake(asio::ssl::stream_base::server, ec);
      if (ec) return;
      beast::flat_buffer inner;
      serve_tunnel(tls, inner, *key, std::optional<std::string>(target));
      tls.shutdown(ec);
      return;
    }

    tcp::resolver resolver(ioc);
    auto results = resolver.resolve(host, port, ec);
    tcp::socket upstream(ioc);
    if (!ec) asio::connect(upstream, results, ec);
    if (ec) {
      send_simple(client, req.version(), 502, "cannot reach " + target, false);
      return;
    }
    FdGuard guard(fds, upstream.native_handle());
    if (!guard.ok()) return;
    asio::write(client, asio::buffer(std::string_view("HTTP/1.1 200 Connection Established\r\n\r\n")), ec);
    if (ec) return;
    if (buf.size() > 0) {
      asio::write(upstream, buf.data(), ec);
      buf.consume(buf.size());
    }
    // opaque tunnel: the monitor never sees these bytes
    std::thread back([&] {
      pump(upstream, client);
      beast::error_code e;
      client.shutdown(tcp::socket::shutdown_send, e);
    });
    pump(client, upstream);
    upstream.shutdown(tcp::socket::shutdown_send, ec);
    back.join();
  }

  template <typename Stream>
  void serve_tunnel(Stream& stream, beast::flat_buffer& buf, const std::string& key,
                    const std::optional<std::string>& authority) {
    for (;;) {
      bhttp::request_parser<bhttp::string_body> parser;
      parser.body_limit(config.max_body_bytes);
      beast::error_code ec;
      bhttp::read(stream, buf, parser, ec);
      if (ec == bhttp::error::body_limit) {
        send_simple(stream, 11, 413, "request body too large", false);
        return;
      }
      if (ec) return;
      auto req = parser.release();
      if (!handle(stream, req, key, "https", authority) || !req.keep_alive()) return;
    }
  }

  static void pump(tcp::socket& from, tcp::socket& to) {
    std::array<char, 16384> chunk;
    beast::error_code ec;
    for (;;) {
      const auto n = from.read_some(asio::buffer(chunk), ec);
      if (ec || n == 0) return;
      asio::write(to, asio::buffer(chunk.data(), n), ec);
      if (ec) return;
    }
  }
};

Server::Server(ProxyConfig config, std::shared_ptr<const automaton::Automaton> automaton) {
  config.validate();
  impl_ = std::make_unique<Impl>(std::move(config), std::move(automaton));
}

Server::~Server() { stop(); }

std::uint16_t Server::start() {
  auto& m = *impl_;
  if (m.started) throw std::logic_error("server already started");
  beast::error_code ec;
  tcp::resolver resolver(m.ioc);
  auto results = resolver.resolve(m.config.listen_address, std::to_string(m.config.listen_port), ec);
  if (ec || results.empty()) throw std::runtime_error("cannot resolve listen address " + m.config.listen_address);
  const tcp::endpoint ep = *results.begin();
  m.acceptor.open(ep.protocol(), ec);
  if (!ec) m.acceptor.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) m.acceptor.bind(ep, ec);
  if (!ec) m.acceptor.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) {
    throw std::runtime_error("cannot listen on " + m.config.listen_address + ":" +
                             std::to_string(m.config.listen_port) + ": " + ec.message());
  }
  m.started = true;
  m.accept_thread = std::thread([&m] { m.accept_loop(); });
  return m.acceptor.local_endpoint().port();
}

void Server::stop() {
  auto& m = *impl_;
  if (!m.started) return;
  if (!m.stopping.exchange(true)) {
    ::shutdown(m.acceptor.native_handle(), SHUT_RDWR);
    if (m.accept_thread.joinable()) m.accept_thread.join();
    beast::error_code ec;
    m.acceptor.close(ec);
    m.fds.shutdown_all();
  }
  std::unique_lock lock(m.mu);
  m.cv.wait(lock, [&] { return m.active == 0; });
  m.stopped = true;
  m.cv.notify_all();
}

void Server::wait() {
  auto& m = *impl_;
  std::unique_lock lock(m.mu);
  m.cv.wait(lock, [&] { return m.stopped; });
}

ContextRegistry& Server::contexts() { return impl_->registry; }
std::uint64_t Server::blocked_requests() const { return impl_->blocked; }
std::uint64_t Server::forwarded_requests() const { return impl_->forwarded; }

}  // namespace flowguard::proxy
