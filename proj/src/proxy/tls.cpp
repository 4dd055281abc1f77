#include "proxy/tls.hpp"

#include <openssl/err.h>
#include <openssl/pem.h>
#include <openssl/rand.h>
#include <openssl/x509v3.h>

#include <boost/asio/ip/address.hpp>
#include <cstdio>

namespace flowguard::proxy::detail {

using engine::ConfigError;

namespace {

struct Free {
  void operator()(X509* p) const { X509_free(p); }
  void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
  void operator()(BIO* p) const { BIO_free(p); }
};

std::string ssl_error() {
  const unsigned long e = ERR_get_error();
  if (e == 0) return "unknown error";
  char buf[256];
  ERR_error_string_n(e, buf, sizeof buf);
  return buf;
}

std::unique_ptr<BIO, Free> open_file(const std::string& path) {
  std::unique_ptr<BIO, Free> bio(BIO_new_file(path.c_str(), "r"));
  if (!bio) throw ConfigError("cannot read " + path);
  return bio;
}

void add_ext(X509* cert, X509* issuer, int nid, const std::string& value) {
  X509V3_CTX ctx;
  X509V3_set_ctx_nodb(&ctx);
  X509V3_set_ctx(&ctx, issuer, cert, nullptr, nullptr, 0);
  X509_EXTENSION* ext = X509V3_EXT_conf_nid(nullptr, &ctx, nid, value.c_str());
  if (!ext) throw std::runtime_error("x509 extension: " + ssl_error());
  X509_add_ext(cert, ext, -1);
  X509_EXTENSION_free(ext);
}

}  // namespace

struct CertAuthority::Keys {
  std::unique_ptr<X509, Free> ca;
  std::unique_ptr<EVP_PKEY, Free> ca_key;
  std::unique_ptr<EVP_PKEY, Free> leaf_key;
};

CertAuthority::CertAuthority(const std::string& cert_path, const std::string& key_path) : keys_(new Keys) {
  keys_->ca.reset(PEM_read_bio_X509(open_file(cert_path).get(), nullptr, nullptr, nullptr));
  if (!keys_->ca) throw ConfigError("bad CA certificate " + cert_path + ": " + ssl_error());
  keys_->ca_key.reset(PEM_read_bio_PrivateKey(open_file(key_path).get(), nullptr, nullptr, nullptr));
  if (!keys_->ca_key) throw ConfigError("bad CA key " + key_path + ": " + ssl_error());
  if (X509_check_private_key(keys_->ca.get(), keys_->ca_key.get()) != 1) {
    throw ConfigError("CA key " + key_path + " does not match " + cert_path);
  }
  // one key for every minted leaf; only the certificates differ per host
  keys_->leaf_key.reset(EVP_EC_gen("P-256"));
  if (!keys_->leaf_key) throw ConfigError("cannot generate leaf key: " + ssl_error());
}

CertAuthority::~CertAuthority() = default;

std::shared_ptr<ssl::context> CertAuthority::server_context(const std::string& host) {
  std::lock_guard lock(mu_);
  if (auto it = cache_.find(host); it != cache_.end()) return it->second;

  std::unique_ptr<X509, Free> cert(X509_new());
  X509_set_version(cert.get(), 2);
  unsigned char serial[16];
  RAND_bytes(serial, sizeof serial);
  serial[0] &= 0x7f;
  BIGNUM* bn = BN_bin2bn(serial, sizeof serial, nullptr);
  BN_to_ASN1_INTEGER(bn, X509_get_serialNumber(cert.get()));
  BN_free(bn);
  X509_gmtime_adj(X509_getm_notBefore(cert.get()), -3600);
  X509_gmtime_adj(X509_getm_notAfter(cert.get()), 60L * 60 * 24 * 30);
  X509_set_pubkey(cert.get(), keys_->leaf_key.get());
  X509_NAME* name = X509_get_subject_name(cert.get());
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_UTF8, reinterpret_cast<const unsigned char*>(host.c_str()), -1, -1,
                             0);
  X509_set_issuer_name(cert.get(), X509_get_subject_name(keys_->ca.get()));

  boost::system::error_code ec;
  boost::asio::ip::make_address(host, ec);
  add_ext(cert.get(), keys_->ca.get(), NID_subject_alt_name, (ec ? "DNS:" : "IP:") + host);
  add_ext(cert.get(), keys_->ca.get(), NID_basic_constraints, "critical,CA:FALSE");
  add_ext(cert.get(), keys_->ca.get(), NID_ext_key_usage, "serverAuth");
  if (X509_sign(cert.get(), keys_->ca_key.get(), EVP_sha256()) == 0) {
    throw std::runtime_error("cannot sign leaf for " + host + ": " + ssl_error());
  }

  auto ctx = std::make_shared<ssl::context>(ssl::context::tls_server);
  ctx->set_options(ssl::context::no_sslv2 | ssl::context::no_sslv3 | ssl::context::no_tlsv1 |
                   ssl::context::no_tlsv1_1);
  SSL_CTX* native = ctx->native_handle();
  if (SSL_CTX_use_certificate(native, cert.get()) != 1 || SSL_CTX_use_PrivateKey(native, keys_->leaf_key.get()) != 1) {
    throw std::runtime_error("cannot install leaf for " + host + ": " + ssl_error());
  }
  X509_up_ref(keys_->ca.get());
  SSL_CTX_add0_chain_cert(native, keys_->ca.get());
  cache_.emplace(host, ctx);
  return ctx;
}

std::shared_ptr<ssl::context> make_client_context(const ProxyConfig& config) {
  auto ctx = std::make_shared<ssl::context>(ssl::context::tls_client);
  ctx->set_options(ssl::context::no_sslv2 | ssl::context::no_sslv3 | ssl::context::no_tlsv1 |
                   ssl::context::no_tlsv1_1);
  if (!config.upstream_verify) {
    ctx->set_verify_mode(ssl::verify_none);
    return ctx;
  }
  ctx->set_verify_mode(ssl::verify_peer);
  ctx->set_default_verify_paths();
  if (!config.upstream_ca.empty()) {
    boost::system::error_code ec;
    ctx->load_verify_file(config.upstream_ca, ec);
    if (ec) throw ConfigError("bad upstream_ca " + config.upstream_ca + ": " + ec.message());
  }
  return ctx;
}

}  // namespace flowguard::proxy::detail
