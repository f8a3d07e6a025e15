#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bicsearch {

enum class ErrorCode {
  InvalidArgument,
  UnknownCommit,
  RepoAccess,
  FileAbsentAtRevision,
  LineOutOfRange,
  BlamelessInput,
  TemporalViolation,
  MalformedDocument,
  UnknownNode,
  BudgetExhausted,
  PolicyFailure,
  AuthFailure,
  RateLimited,
  MalformedResponse,
  CassetteMiss,
  KeyMismatch,
  DatasetFormat,
  Io,
  Internal,
};

std::string_view to_string(ErrorCode code);

// Every library failure surfaces as this exception; the C API maps the code
// onto its status enum one to one.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace bicsearch
