#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tagforge {

enum class ErrorCode {
  kInvalidArgument,
  kIo,
  kEmptyDocument,
  kMissingTaggedChunk,
  kInvalidCategoryName,
  kInvalidSpan,
  kOverlapUnresolvable,
  kTemplateSlotMissing,
  kUnparseableOutput,
  kBridgeUnavailable,
  kProtocolError,
  kMappingMissing,
  kChunkMismatch,
  kInvalidRequest,
  kAuthError,
  kThrottled,
  kTransportError,
  kContextWindowExceeded,
  kFixtureMiss,
  kStoreCorrupt,
  kCorpusTooSmall,
  kNeedleCollision,
  kZeroShortAccuracy,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tagforge
