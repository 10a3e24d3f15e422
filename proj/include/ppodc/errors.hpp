#pragma once

#include <stdexcept>
#include <string>

namespace ppodc {

// Base for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Value outside the domain an operation accepts (e.g. plaintext >= N).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller misuse: mismatched dimensions, mismatched key context, empty input.
class UsageError : public Error {
 public:
  using Error::Error;
};

// Data that fails a structural check: malformed frame, invalid ciphertext,
// protocol transcript that cannot have come from an honest peer.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

// The peer or the channel went away mid-protocol.
class ProtocolAbort : public Error {
 public:
  using Error::Error;
};

// Unsatisfiable configuration, detected before any protocol traffic.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A cluster of size zero reached arithmetic that divides or scales by |c|.
class DegenerateClusterError : public Error {
 public:
  using Error::Error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

}  // namespace ppodc
