#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace estimand {

/// Broad failure classes. The CLI maps Validation/Config/Io to exit code 1
/// and Numeric to exit code 2.
enum class ErrorKind { Validation, Config, Numeric, Io };

/// Base of every error thrown by the library. Carries a stable
/// machine-readable code (e.g. "E_ARITY") next to the human message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string code, const std::string& message)
      : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& code() const noexcept { return code_; }

 private:
  ErrorKind kind_;
  std::string code_;
};

#define ESTIMAND_DEFINE_ERROR(Name, Kind, Code)                    \
  class Name : public Error {                                      \
   public:                                                         \
    explicit Name(const std::string& message)                      \
        : Error(ErrorKind::Kind, Code, message) {}                 \
  };

ESTIMAND_DEFINE_ERROR(InvalidArgument, Validation, "E_INVALID")
ESTIMAND_DEFINE_ERROR(ArityError, Validation, "E_ARITY")
ESTIMAND_DEFINE_ERROR(FamilyLinkError, Validation, "E_FAMILY_LINK")
ESTIMAND_DEFINE_ERROR(ScaleMismatchError, Validation, "E_SCALE_MISMATCH")
ESTIMAND_DEFINE_ERROR(DegenerateTableError, Validation, "E_DEGENERATE_TABLE")
ESTIMAND_DEFINE_ERROR(ConfigError, Config, "E_CONFIG")
ESTIMAND_DEFINE_ERROR(IoError, Io, "E_IO")
ESTIMAND_DEFINE_ERROR(DomainError, Numeric, "E_DOMAIN")
ESTIMAND_DEFINE_ERROR(SingularDesignError, Numeric, "E_SINGULAR_DESIGN")
ESTIMAND_DEFINE_ERROR(SeparationError, Numeric, "E_SEPARATION")
ESTIMAND_DEFINE_ERROR(InfeasibleTargetError, Numeric, "E_INFEASIBLE_TARGET")
ESTIMAND_DEFINE_ERROR(DegenerateArmError, Numeric, "E_DEGENERATE_ARM")
ESTIMAND_DEFINE_ERROR(ReplicateFailureError, Numeric, "E_REPLICATE_FAILURES")

#undef ESTIMAND_DEFINE_ERROR

}  // namespace estimand
