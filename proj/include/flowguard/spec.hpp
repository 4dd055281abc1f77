#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flowguard::spec {

/// Source line of an element. Never takes part in equality, so a spec that
/// went through serialize/parse compares equal to the original.
struct SourceLine {
  int value = 0;
  bool operator==(const SourceLine&) const { return true; }
};

enum class Direction { Request, Response };

std::string_view to_string(Direction d);

/// How a message component (endpoint, parameter, header) or an integrity
/// operand is constrained.
///   Any     - present, any value (including empty)
///   Literal - equal to the template after `${id}` expansion
///   Regex   - the pattern is found somewhere in the value
struct ValuePattern {
  enum class Kind { Any, Literal, Regex };
  Kind kind = Kind::Any;
  std::string text;

  bool operator==(const ValuePattern&) const = default;
};

struct FieldPattern {
  std::string name;
  ValuePattern value;
  std::optional<std::string> id;
  SourceLine line;

  bool operator==(const FieldPattern&) const = default;
};

struct MessagePattern {
  Direction direction = Direction::Request;
  std::string desc;
  std::optional<std::string> method;
  /// nullopt: no <Endpoint> element, any endpoint is accepted.
  std::optional<ValuePattern> endpoint;
  std::optional<std::string> endpoint_id;
  std::vector<FieldPattern> parameters;
  std::vector<FieldPattern> headers;
  SourceLine line;

  bool operator==(const MessagePattern&) const = default;
};

/// One element of a flow: either a message or a Branch whose paths are
/// alternative continuations, tried in document order. A Branch is always
/// the last element of the sequence that holds it.
struct FlowStep {
  std::optional<MessagePattern> message;
  std::vector<std::vector<FlowStep>> paths;
  SourceLine line;

  bool is_branch() const { return !message.has_value(); }
  bool operator==(const FlowStep&) const = default;
};

struct IdentifierDefinition {
  std::string id;
  std::string source;  // template
  std::string regexp;
  SourceLine line;

  bool operator==(const IdentifierDefinition&) const = default;
};

struct SecrecyPolicy {
  std::string target;  // identifier name, without ${}
  std::vector<std::string> origins;  // templates
  SourceLine line;

  bool operator==(const SecrecyPolicy&) const = default;
};

struct IntegrityPolicy {
  std::string target;
  /// Literal: equality with the expanded template. Regex: search.
  ValuePattern matches;
  SourceLine line;

  bool operator==(const IntegrityPolicy&) const = default;
};

struct ProtocolSpec {
  std::string name;
  std::vector<FlowStep> flow;
  std::vector<IdentifierDefinition> definitions;
  std::vector<SecrecyPolicy> secrecy;
  std::vector<IntegrityPolicy> integrity;

  bool operator==(const ProtocolSpec&) const = default;
};

class SpecError : public std::runtime_error {
 public:
  enum class Kind {
    XmlSyntax,
    UnknownTag,
    DuplicateIdentifier,
    UnresolvedReference,
    InvalidRegex,
    InvalidStructure,
  };

  SpecError(Kind kind, std::string location, const std::string& message)
      : std::runtime_error(location.empty() ? message : location + ": " + message),
        kind_(kind),
        location_(std::move(location)),
        message_(message) {}

  Kind kind() const { return kind_; }
  const std::string& location() const { return location_; }
  const std::string& message() const { return message_; }

 private:
  Kind kind_;
  std::string location_;
  std::string message_;
};

std::string_view to_string(SpecError::Kind k);

ProtocolSpec parse_spec(std::string_view xml);
ProtocolSpec parse_spec_file(const std::string& path);

/// Canonical XML rendering; parse_spec(serialize_spec(s)) == s.
std::string serialize_spec(const ProtocolSpec& spec);

struct Diagnostic {
  enum class Severity { Error, Warning };
  Severity severity = Severity::Error;
  std::string message;
  std::string location;

  bool is_error() const { return severity == Severity::Error; }
  std::string to_string() const;
};

std::vector<Diagnostic> validate_spec(const ProtocolSpec& spec);
bool has_errors(const std::vector<Diagnostic>& diags);

/// Identifier names referenced as `${name}` in a template, in order.
std::vector<std::string> template_refs(std::string_view text);
/// Expands `${name}` references. Returns nullopt if any lookup fails.
std::optional<std::string> expand_template(
    std::string_view text, const std::function<std::optional<std::string>(const std::string&)>& lookup);

/// Every message of the flow in depth-first document order.
std::vector<const MessagePattern*> flow_messages(const ProtocolSpec& spec);

}  // namespace flowguard::spec
