#include <algorithm>
#include <map>

#include "flowguard/library.hpp"
#include "library/embedded.hpp"

namespace flowguard::library {

namespace {

struct Catalog {
  std::vector<SpecSource> sources;
  std::map<std::string, spec::ProtocolSpec, std::less<>> parsed;
};

const Catalog& catalog() {
  static const Catalog c = [] {
    Catalog out;
    for (const auto& f : detail::embedded_specs()) {
      auto parsed = spec::parse_spec(f.content);
      out.sources.push_back({parsed.name, std::string(f.name), std::string(f.content)});
      out.parsed.emplace(parsed.name, std::move(parsed));
    }
    std::sort(out.sources.begin(), out.sources.end(),
              [](const SpecSource& a, const SpecSource& b) { return a.name < b.name; });
    return out;
  }();
  return c;
}

}  // namespace

const std::vector<SpecSource>& builtin_spec_sources() { return catalog().sources; }

std::vector<std::string> builtin_spec_names() {
  std::vector<std::string> out;
  for (const auto& s : catalog().sources) out.push_back(s.name);
  return out;
}

bool has_builtin_spec(std::string_view name) { return catalog().parsed.find(name) != catalog().parsed.end(); }

spec::ProtocolSpec builtin_spec(std::string_view name) {
  auto it = catalog().parsed.find(name);
  if (it == catalog().parsed.end()) throw std::out_of_range("no builtin spec named '" + std::string(name) + "'");
  return it->second;
}

std::vector<spec::ProtocolSpec> builtin_specs() {
  std::vector<spec::ProtocolSpec> out;
  for (const auto& s : catalog().sources) out.push_back(catalog().parsed.find(s.name)->second);
  return out;
}

}  // namespace flowguard::library
