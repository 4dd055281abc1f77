#include <boost/program_options.hpp>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "flowguard/library.hpp"
#include "flowguard/proxy.hpp"

namespace po = boost::program_options;
namespace fs = std::filesystem;

namespace flowguard::proxy {

using engine::ConfigError;

std::string_view to_string(Keying k) {
  switch (k) {
    case Keying::PerClientIp: return "per-client-ip";
    case Keying::PerProxyCredential: return "per-proxy-credential";
    case Keying::Single: return "single";
  }
  return "?";
}

std::string_view to_string(TlsMode m) { return m == TlsMode::Passthrough ? "passthrough" : "terminate"; }

void ProxyConfig::validate() const {
  if (listen_port == 0) throw ConfigError("listen port must be in [1, 65535]");
  if (listen_address.empty()) throw ConfigError("listen address is empty");
  if (specs.empty()) throw ConfigError("at least one spec is required");
  if (tls == TlsMode::Terminate && (ca_cert.empty() || ca_key.empty())) {
    throw ConfigError("tls = terminate needs ca_cert and ca_key");
  }
  if (max_body_bytes == 0) throw ConfigError("max_body_bytes must be positive");
  engine.validate();
}

namespace {

std::string resolve(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

void parse_listen(const std::string& text, ProxyConfig& c) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw ConfigError("listen must be address:port, got '" + text + "'");
  std::string host = text.substr(0, colon);
  if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
  long port = -1;
  try {
    std::size_t used = 0;
    port = std::stol(text.substr(colon + 1), &used);
    if (used != text.size() - colon - 1) port = -1;
  } catch (const std::exception&) {
  }
  if (port < 1 || port > 65535) throw ConfigError("listen port must be in [1, 65535], got '" + text + "'");
  c.listen_address = host;
  c.listen_port = static_cast<std::uint16_t>(port);
}

}  // namespace

ProxyConfig parse_config(const std::string& text, const std::string& base_dir) {
  po::options_description desc;
  desc.add_options()
      ("listen", po::value<std::string>())
      ("spec", po::value<std::vector<std::string>>()->composing())
      ("keying", po::value<std::string>())
      ("log", po::value<std::string>())
      ("tls", po::value<std::string>())
      ("ca_cert", po::value<std::string>())
      ("ca_key", po::value<std::string>())
      ("upstream_ca", po::value<std::string>())
      ("upstream_verify", po::value<bool>())
      ("max_body_bytes", po::value<std::size_t>())
      ("run_timeout_s", po::value<long>())
      ("placeholder.prefix", po::value<std::string>())
      ("placeholder.entropy_bytes", po::value<std::size_t>())
      ("rewrite.headers", po::value<bool>())
      ("rewrite.url_params", po::value<bool>())
      ("rewrite.form_body", po::value<bool>());

  po::variables_map vm;
  try {
    std::istringstream in(text);
    po::store(po::parse_config_file(in, desc, false), vm);
    po::notify(vm);
  } catch (const po::error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  ProxyConfig c;
  if (vm.count("listen")) parse_listen(vm["listen"].as<std::string>(), c);
  if (vm.count("spec")) {
    for (const auto& s : vm["spec"].as<std::vector<std::string>>()) {
      c.specs.push_back(library::has_builtin_spec(s) ? s : resolve(base_dir, s));
    }
  }
  if (vm.count("keying")) {
    const auto k = vm["keying"].as<std::string>();
    if (k == "per-client-ip") {
      c.keying = Keying::PerClientIp;
    } else if (k == "per-proxy-credential") {
      c.keying = Keying::PerProxyCredential;
    } else if (k == "single") {
      c.keying = Keying::Single;
    } else {
      throw ConfigError("unknown keying '" + k + "'");
    }
  }
  if (vm.count("log")) {
    const auto l = vm["log"].as<std::string>();
    c.log = (l == "-" || l == "stderr") ? (l == "-" ? "-" : "") : resolve(base_dir, l);
  }
  if (vm.count("tls")) {
    const auto t = vm["tls"].as<std::string>();
    if (t == "passthrough") {
      c.tls = TlsMode::Passthrough;
    } else if (t == "terminate") {
      c.tls = TlsMode::Terminate;
    } else {
      throw ConfigError("unknown tls mode '" + t + "'");
    }
  }
  if (vm.count("ca_cert")) c.ca_cert = resolve(base_dir, vm["ca_cert"].as<std::string>());
  if (vm.count("ca_key")) c.ca_key = resolve(base_dir, vm["ca_key"].as<std::string>());
  if (vm.count("upstream_ca")) c.upstream_ca = resolve(base_dir, vm["upstream_ca"].as<std::string>());
  if (vm.count("upstream_verify")) c.upstream_verify = vm["upstream_verify"].as<bool>();
  if (vm.count("max_body_bytes")) c.max_body_bytes = vm["max_body_bytes"].as<std::size_t>();
  if (vm.count("run_timeout_s")) {
    const long s = vm["run_timeout_s"].as<long>();
    if (s <= 0) throw ConfigError("run_timeout_s must be positive");
    c.engine.run_timeout = std::chrono::seconds(s);
  }
  if (vm.count("placeholder.prefix")) c.engine.placeholder_prefix = vm["placeholder.prefix"].as<std::string>();
  if (vm.count("placeholder.entropy_bytes")) {
    c.engine.placeholder_entropy_bytes = vm["placeholder.entropy_bytes"].as<std::size_t>();
  }
  if (vm.count("rewrite.headers")) c.engine.rewrite_scope.headers = vm["rewrite.headers"].as<bool>();
  if (vm.count("rewrite.url_params")) c.engine.rewrite_scope.url_params = vm["rewrite.url_params"].as<bool>();
  if (vm.count("rewrite.form_body")) c.engine.rewrite_scope.form_body = vm["rewrite.form_body"].as<bool>();
  c.validate();
  return c;
}

ProxyConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), fs::path(path).parent_path().string());
}

std::shared_ptr<const automaton::Automaton> load_automaton(const ProxyConfig& config) {
  std::vector<spec::ProtocolSpec> specs;
  for (const auto& s : config.specs) {
    if (library::has_builtin_spec(s)) {
      specs.push_back(library::builtin_spec(s));
    } else {
      try {
        specs.push_back(spec::parse_spec_file(s));
      } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
      }
    }
  }
  try {
    return std::make_shared<const automaton::Automaton>(automaton::compose(specs));
  } catch (const automaton::CompileError& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace flowguard::proxy
