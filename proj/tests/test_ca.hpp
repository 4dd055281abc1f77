#pragma once

// Throwaway CA and leaf certificates for the TLS tests, written as PEM
// files into a scratch directory.

#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include <cstdio>
#include <memory>
#include <stdexcept>
#include <string>

namespace testing_support {

struct PemPair {
  std::string cert;
  std::string key;
};

namespace ca_detail {

using Key = std::unique_ptr<EVP_PKEY, decltype(&EVP_PKEY_free)>;
using Cert = std::unique_ptr<X509, decltype(&X509_free)>;

inline Key make_key() {
  EVP_PKEY* k = EVP_EC_gen("P-256");
  if (!k) throw std::runtime_error("EC keygen failed");
  return Key(k, EVP_PKEY_free);
}

inline void add_ext(X509* cert, X509* issuer, int nid, const char* value) {
  X509V3_CTX ctx;
  X509V3_set_ctx_nodb(&ctx);
  X509V3_set_ctx(&ctx, issuer, cert, nullptr, nullptr, 0);
  X509_EXTENSION* ext = X509V3_EXT_conf_nid(nullptr, &ctx, nid, value);
  if (!ext) throw std::runtime_error("bad extension");
  X509_add_ext(cert, ext, -1);
  X509_EXTENSION_free(ext);
}

inline Cert make_cert(EVP_PKEY* key, const std::string& cn, X509* issuer, long serial) {
  Cert c(X509_new(), X509_free);
  X509_set_version(c.get(), 2);
  ASN1_INTEGER_set(X509_get_serialNumber(c.get()), serial);
  X509_gmtime_adj(X509_getm_notBefore(c.get()), -3600);
  X509_gmtime_adj(X509_getm_notAfter(c.get()), 86400);
  X509_set_pubkey(c.get(), key);
  X509_NAME* name = X509_get_subject_name(c.get());
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_ASC, reinterpret_cast<const unsigned char*>(cn.c_str()), -1, -1, 0);
  X509_set_issuer_name(c.get(), issuer ? X509_get_subject_name(issuer) : name);
  return c;
}

inline void write_pem(const std::string& path, X509* cert, EVP_PKEY* key) {
  FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  if (cert) PEM_write_X509(f, cert);
  if (key) PEM_write_PrivateKey(f, key, nullptr, nullptr, 0, nullptr, nullptr);
  std::fclose(f);
}

}  // namespace ca_detail

// Writes ca.pem/ca.key and a leaf for `host` signed by it into `dir`.
inline std::pair<PemPair, PemPair> make_test_pki(const std::string& dir, const std::string& host) {
  using namespace ca_detail;
  auto ca_key = make_key();
  auto ca = make_cert(ca_key.get(), "flowguard test CA", nullptr, 1);
  add_ext(ca.get(), ca.get(), NID_basic_constraints, "critical,CA:TRUE");
  add_ext(ca.get(), ca.get(), NID_key_usage, "critical,keyCertSign,cRLSign");
  add_ext(ca.get(), ca.get(), NID_subject_key_identifier, "hash");
  X509_sign(ca.get(), ca_key.get(), EVP_sha256());

  auto leaf_key = make_key();
  auto leaf = make_cert(leaf_key.get(), host, ca.get(), 2);
  const bool ip = host.find_first_not_of("0123456789.") == std::string::npos;
  add_ext(leaf.get(), ca.get(), NID_subject_alt_name, ((ip ? "IP:" : "DNS:") + host).c_str());
  add_ext(leaf.get(), ca.get(), NID_basic_constraints, "CA:FALSE");
  add_ext(leaf.get(), ca.get(), NID_ext_key_usage, "serverAuth");
  X509_sign(leaf.get(), ca_key.get(), EVP_sha256());

  PemPair ca_files{dir + "/ca.pem", dir + "/ca.key"};
  PemPair leaf_files{dir + "/leaf.pem", dir + "/leaf.key"};
  write_pem(ca_files.cert, ca.get(), nullptr);
  write_pem(ca_files.key, nullptr, ca_key.get());
  write_pem(leaf_files.cert, leaf.get(), nullptr);
  write_pem(leaf_files.key, nullptr, leaf_key.get());
  return {ca_files, leaf_files};
}

}  // namespace testing_support
