#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace predbias {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user configuration: unknown option values, missing fields, out-of-range
// hyperparameters. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// A document that is not well-formed at the syntax or schema level.
class ParseError : public Error {
 public:
  ParseError(const std::string& source, std::size_t line, const std::string& what)
      : Error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

enum class ValidationErrc {
  unknown_label,
  duplicate_label,
  duplicate_pair,
  duplicate_instance,
  duplicate_image,
  dangling_instance,
  self_relation,
  index_out_of_range,
  bad_bbox,
  empty_dataset,
  vocabulary_mismatch,
  not_stochastic,
  dimension_mismatch,
  invalid_value,
};

// Well-formed input that breaks a domain invariant.
class ValidationError : public Error {
 public:
  ValidationError(ValidationErrc code, const std::string& what) : Error(what), code_(code) {}

  ValidationErrc code() const noexcept { return code_; }

 private:
  ValidationErrc code_;
};

/// Runs fn, prefixing any failure with the stage name. The error category is
/// kept so callers can still map it to an exit code.
template <typename Fn>
decltype(auto) run_stage(std::string_view stage, Fn&& fn) {
  const auto prefix = "stage '" + std::string(stage) + "': ";
  try {
    return fn();
  } catch (const ConfigError& e) {
    throw ConfigError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(e.code(), prefix + e.what());
  } catch (const IoError& e) {
    throw IoError(prefix + e.what());
  } catch (const std::exception& e) {
    throw Error(prefix + e.what());
  }
}

}  // namespace predbias
