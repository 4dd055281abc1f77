#pragma once

#include <string_view>
#include <vector>

namespace flowguard::library::detail {

struct EmbeddedFile {
  std::string_view name;  // path relative to the catalog directory
  std::string_view content;
};

const std::vector<EmbeddedFile>& embedded_specs();
const std::vector<EmbeddedFile>& embedded_scenarios();

}  // namespace flowguard::library::detail
