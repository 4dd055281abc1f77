#include "flowguard/proxy.hpp"

namespace flowguard::proxy {

ContextRegistry::ContextRegistry(std::shared_ptr<const automaton::Automaton> automaton, engine::EngineConfig config,
                                 std::function<std::shared_ptr<engine::RandomSource>()> make_rng)
    : automaton_(std::move(automaton)), config_(std::move(config)), make_rng_(std::move(make_rng)) {
  config_.validate();
}

ContextRegistry::Ticket::Ticket(Slot& s) : slot_(s) {
  std::unique_lock lock(s.mu);
  const auto mine = s.next++;
  s.cv.wait(lock, [&] { return s.serving == mine; });
}

ContextRegistry::Ticket::~Ticket() {
  {
    std::lock_guard lock(slot_.mu);
    ++slot_.serving;
  }
  slot_.cv.notify_all();
}

std::shared_ptr<ContextRegistry::Slot> ContextRegistry::slot_for(const std::string& key) {
  std::lock_guard lock(mu_);
  auto it = slots_.find(key);
  if (it != slots_.end()) return it->second;
  auto rng = make_rng_ ? make_rng_() : std::make_shared<engine::SystemRandom>();
  auto slot = std::make_shared<Slot>(automaton_, config_, std::move(rng), key);
  slots_.emplace(key, slot);
  return slot;
}

std::size_t ContextRegistry::size() const {
  std::lock_guard lock(mu_);
  return slots_.size();
}

std::vector<std::string> ContextRegistry::keys() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [k, v] : slots_) out.push_back(k);
  return out;
}

}  // namespace flowguard::proxy
