#include "flowguard/engine.hpp"

namespace flowguard::engine {

const VaultEntry& SecretVault::add(std::string secret, std::string identifier, std::vector<http::Origin> origins,
                                   const EngineConfig& config, RandomSource& rng) {
  std::string ph;
  do {
    ph = make_placeholder(config, rng);
  } while (find(ph) != nullptr || ph == secret);
  entries_.push_back({std::move(ph), std::move(secret), std::move(identifier), std::move(origins)});
  return entries_.back();
}

const VaultEntry* SecretVault::find(std::string_view placeholder) const {
  for (const auto& e : entries_) {
    if (e.placeholder == placeholder) return &e;
  }
  return nullptr;
}

}  // namespace flowguard::engine
