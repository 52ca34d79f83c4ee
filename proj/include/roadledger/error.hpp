#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace roadledger {

enum class ErrorCode {
  kMalformed,
  kPayloadTooLarge,
  kLedgerError,
  kMissingFeatureName,
  kAuthFailure,
  kWrongChannelKind,
  kNotFound,
  kIntegrityFailure,
  kInvalidTopic,
  kDuplicateRegistration,
  kUnknownAccount,
  kUnknownContract,
  kUnknownBundle,
  kInsufficientFunds,
  kAlreadyGranted,
  kNotOwner,
  kUnknownChannel,
  kExceedsDeposit,
  kInvalidProof,
  kChallengeExpired,
  kAlreadySettled,
  kChannelNotOpen,
  kBadSignature,
  kAccessDenied,
  kUnknownItem,
  kUnregisteredDevice,
  kUnknownDevice,
  kAreaTooLarge,
  kOutsideArea,
  kInvalidArgument,
  kEmptyInput,
  kConfig,
  kIo,
};

std::string_view error_name(ErrorCode code);

/// Domain error carrying a stable code; the message adds context.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_name(code)) + ": " + what),
        code_(code) {}
  explicit Error(ErrorCode code)
      : std::runtime_error(std::string(error_name(code))), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace roadledger
