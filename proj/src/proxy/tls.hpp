#pragma once

#include <boost/asio/ssl/context.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "flowguard/proxy.hpp"

namespace flowguard::proxy::detail {

namespace ssl = boost::asio::ssl;

/// Mints leaf certificates for intercepted hosts, signed by a local CA.
class CertAuthority {
 public:
  /// Throws engine::ConfigError when the PEM files are unreadable or the key
  /// does not belong to the certificate.
  CertAuthority(const std::string& cert_path, const std::string& key_path);
  ~CertAuthority();

  std::shared_ptr<ssl::context> server_context(const std::string& host);

 private:
  struct Keys;
  std::unique_ptr<Keys> keys_;
  std::mutex mu_;
  std::map<std::string, std::shared_ptr<ssl::context>> cache_;
};

std::shared_ptr<ssl::context> make_client_context(const ProxyConfig& config);

}  // namespace flowguard::proxy::detail
