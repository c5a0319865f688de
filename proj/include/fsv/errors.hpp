#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsv {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dimension disagreement between operands.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

// Malformed input row; carries the 1-based line number.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Cross-reference failure; lists every offending identifier.
class ValidationError : public Error {
 public:
  ValidationError(const std::string& what, std::vector<std::string> offenders)
      : Error(compose(what, offenders)), offenders_(std::move(offenders)) {}
  const std::vector<std::string>& offenders() const { return offenders_; }

 private:
  static std::string compose(const std::string& what, const std::vector<std::string>& offenders) {
    std::string msg = what;
    if (!offenders.empty()) {
      msg += ": ";
      for (std::size_t i = 0; i < offenders.size(); ++i) {
        if (i) msg += ", ";
        if (i == 20) {
          msg += "... (" + std::to_string(offenders.size()) + " total)";
          break;
        }
        msg += offenders[i];
      }
    }
    return msg;
  }
  std::vector<std::string> offenders_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// An upstream artifact (dataset file, checkpoint) is absent.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace fsv
