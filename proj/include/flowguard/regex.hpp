#pragma once

#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace flowguard::regex {

class InvalidPattern : public std::runtime_error {
 public:
  InvalidPattern(std::string pattern, const std::string& why)
      : std::runtime_error(why + " in pattern '" + pattern + "'"), pattern_(std::move(pattern)) {}
  const std::string& pattern() const { return pattern_; }

 private:
  std::string pattern_;
};

/// A compiled pattern in the spec dialect: perl-style syntax restricted to
/// character classes, anchors, greedy and lazy quantifiers, bounded
/// repetition and groups. Backreferences, lookaround, named or atomic groups
/// and inline flags are refused at compile time.
class Pattern {
 public:
  static Pattern compile(std::string_view source);

  const std::string& source() const { return source_; }
  unsigned capture_groups() const { return groups_; }

  /// Unanchored search; `^`/`$` inside the pattern anchor as usual.
  bool search(std::string_view subject) const;
  /// Searches and returns capture group 1, or the whole match when the
  /// pattern has no groups. A group that did not participate yields "".
  std::optional<std::string> extract(std::string_view subject) const;

  bool operator==(const Pattern& other) const { return source_ == other.source_; }

 private:
  struct Impl;
  std::string source_;
  unsigned groups_ = 0;
  std::shared_ptr<const Impl> impl_;
};

/// Throws InvalidPattern if `source` uses a construct outside the dialect.
/// Returns the number of capturing groups.
unsigned check_dialect(std::string_view source);

}  // namespace flowguard::regex
