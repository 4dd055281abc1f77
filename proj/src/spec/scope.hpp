#pragma once

#include <map>
#include <string>
#include <vector>

#include "flowguard/spec.hpp"

namespace flowguard::spec::detail {

// Flow messages as a tree. parent == -1 means the message hangs off init.
struct ScopeNode {
  const MessagePattern* msg = nullptr;
  int parent = -1;
  int depth = 1;
  bool leaf = true;
};

struct ScopeInfo {
  std::vector<ScopeNode> nodes;  // depth-first document order
  // identifier -> node whose edge introduces it; absent when undeterminable
  std::map<std::string, int> intro;
  // definitions in an order where each only depends on earlier ones
  std::vector<const IdentifierDefinition*> definition_order;
  std::vector<Diagnostic> diags;

  bool ancestor_or_self(int a, int b) const;
  int node_of(const MessagePattern* m) const;
};

ScopeInfo analyze_scope(const ProtocolSpec& spec);

std::string message_location(const MessagePattern& m);

}  // namespace flowguard::spec::detail
