#pragma once

#include <stdexcept>
#include <string>

namespace forge {

struct ForgeError : std::runtime_error {
  explicit ForgeError(const std::string &msg) : std::runtime_error(msg) {}
};

// Malformed interchange documents. byte_offset / turn_index are -1 when not
// applicable.
struct ParseError : ForgeError {
  long byte_offset = -1;
  int turn_index = -1;
  ParseError(const std::string &msg, long offset = -1, int turn = -1)
      : ForgeError(msg), byte_offset(offset), turn_index(turn) {}
};

// A caller handed us a value object that breaks its own invariants.
struct InvariantViolation : ForgeError {
  using ForgeError::ForgeError;
};

struct ConfigError : ForgeError {
  std::string key_path;
  ConfigError(const std::string &msg, std::string key = "")
      : ForgeError(key.empty() ? msg : key + ": " + msg),
        key_path(std::move(key)) {}
};

// Environment engine errors.
struct MissingVignette : ForgeError {
  using ForgeError::ForgeError;
};
struct MissingImage : ForgeError {
  using ForgeError::ForgeError;
};
struct UnknownAction : ForgeError {
  using ForgeError::ForgeError;
};
struct SchemaViolation : ForgeError {
  using ForgeError::ForgeError;
};
struct DepthExceeded : ForgeError {
  using ForgeError::ForgeError;
};
struct MarkerMissing : ForgeError {
  using ForgeError::ForgeError;
};
struct ProtocolViolation : ForgeError {
  using ForgeError::ForgeError;
};

// Policy gateway errors.
struct FixtureMiss : ForgeError {
  using ForgeError::ForgeError;
};
struct TransportError : ForgeError {
  int retries = 0;
  TransportError(const std::string &msg, int r = 0)
      : ForgeError(msg), retries(r) {}
};
struct MalformedResponse : ForgeError {
  using ForgeError::ForgeError;
};
struct RecapInvalid : ForgeError {
  using ForgeError::ForgeError;
};

struct IncompleteRecord : ForgeError {
  using ForgeError::ForgeError;
};

} // namespace forge
