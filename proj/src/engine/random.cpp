#include <sodium.h>

#include <cctype>

#include "flowguard/engine.hpp"

namespace flowguard::engine {

SystemRandom::SystemRandom() {
  if (sodium_init() < 0) throw EntropyUnavailable("libsodium failed to initialise");
}

void SystemRandom::fill(std::span<unsigned char> out) { randombytes_buf(out.data(), out.size()); }

void SeededRandom::fill(std::span<unsigned char> out) {
  for (std::size_t i = 0; i < out.size(); i += 8) {
    std::uint64_t word = gen_();
    for (std::size_t j = i; j < out.size() && j < i + 8; ++j) {
      out[j] = static_cast<unsigned char>(word & 0xff);
      word >>= 8;
    }
  }
}

void EngineConfig::validate() const {
  if (placeholder_entropy_bytes < 16) {
    throw ConfigError("placeholder entropy must be at least 16 bytes, got " +
                      std::to_string(placeholder_entropy_bytes));
  }
  if (placeholder_prefix.empty()) throw ConfigError("placeholder prefix must not be empty");
  for (unsigned char c : placeholder_prefix) {
    const bool ok = std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~';
    if (!ok) throw ConfigError("placeholder prefix must use URL-safe characters only");
  }
  if (run_timeout.count() <= 0) throw ConfigError("run timeout must be positive");
}

std::string make_placeholder(const EngineConfig& config, RandomSource& rng) {
  static constexpr char digits[] = "0123456789abcdef";
  std::vector<unsigned char> bytes(config.placeholder_entropy_bytes);
  rng.fill(bytes);
  std::string out = config.placeholder_prefix;
  out.reserve(out.size() + bytes.size() * 2);
  for (unsigned char b : bytes) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

}  // namespace flowguard::engine
