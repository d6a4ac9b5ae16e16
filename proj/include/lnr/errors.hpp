// Error types shared across modules. Each carries enough context for the
// service layer to map it onto an HTTP status.
#pragma once

#include <stdexcept>
#include <string>

namespace lnr {

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value failed a domain invariant; `field` names the offending input.
class ValidationError : public std::invalid_argument {
 public:
  ValidationError(std::string field, const std::string& message)
      : std::invalid_argument(field + ": " + message), field_(std::move(field)), message_(message) {}
  const std::string& field() const { return field_; }
  const std::string& message() const { return message_; }

  // Re-raises with `prefix` prepended to the field path.
  ValidationError nested(const std::string& prefix) const { return {prefix + field_, message_}; }

 private:
  std::string field_;
  std::string message_;
};

class NotFoundError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class VersionConflictError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class QueueFullError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed text input. `line` is 1-based, 0 when unknown.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string source, std::size_t line, std::string field, const std::string& message)
      : std::runtime_error(format(source, line, field, message)),
        source_(std::move(source)),
        line_(line),
        field_(std::move(field)) {}

  const std::string& source() const { return source_; }
  std::size_t line() const { return line_; }
  const std::string& field() const { return field_; }

 private:
  static std::string format(const std::string& source, std::size_t line, const std::string& field,
                            const std::string& message) {
    std::string out = source.empty() ? "<input>" : source;
    if (line > 0) out += ":" + std::to_string(line);
    if (!field.empty()) out += ": " + field;
    return out + ": " + message;
  }

  std::string source_;
  std::size_t line_;
  std::string field_;
};

}  // namespace lnr
