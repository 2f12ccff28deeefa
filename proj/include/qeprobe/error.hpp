#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qeprobe {

enum class ErrorCode {
  parse,
  empty_corpus,
  degenerate_range,
  already_standardized,
  not_standardized,
  contract,
  empty_input,
  not_applicable,
  empty_vocabulary,
  plugin,
  transport,
  protocol,
  stale_variants,
  undefined_family_mean,
  undefined_correlation,
  checksum,
  config,
  io,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::empty_corpus: return "empty-corpus";
    case ErrorCode::degenerate_range: return "degenerate-range";
    case ErrorCode::already_standardized: return "already-standardized";
    case ErrorCode::not_standardized: return "not-standardized";
    case ErrorCode::contract: return "contract";
    case ErrorCode::empty_input: return "empty-input";
    case ErrorCode::not_applicable: return "not-applicable";
    case ErrorCode::empty_vocabulary: return "empty-vocabulary";
    case ErrorCode::plugin: return "plugin";
    case ErrorCode::transport: return "transport";
    case ErrorCode::protocol: return "protocol";
    case ErrorCode::stale_variants: return "stale-variants";
    case ErrorCode::undefined_family_mean: return "undefined-family-mean";
    case ErrorCode::undefined_correlation: return "undefined-correlation";
    case ErrorCode::checksum: return "checksum";
    case ErrorCode::config: return "config";
    case ErrorCode::io: return "io";
  }
  return "unknown";
}

/// Every failure raised by the library. The code is stable and is what the
/// CLI prints in its structured error line; the message is for humans.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace qeprobe
