#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace labelforge {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IngestError : public Error {
 public:
  using Error::Error;
};

class TaxonomyError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class TemplateError : public Error {
 public:
  using Error::Error;
};

/// Misconfiguration: missing secrets, rejected credentials, bad config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-transient protocol failure (4xx other than 429, malformed response).
class BackendError : public Error {
 public:
  using Error::Error;
};

/// Retries exhausted. what() summarises the attempt trace; trace() has one
/// entry per attempt.
class BackendUnavailable : public Error {
 public:
  explicit BackendUnavailable(const std::string& what, std::vector<std::string> trace = {})
      : Error(what), trace_(std::move(trace)) {}
  const std::vector<std::string>& trace() const { return trace_; }

 private:
  std::vector<std::string> trace_;
};

/// Connection-level failure (refused, reset, timed out) raised by a transport.
class TransportFailure : public Error {
 public:
  using Error::Error;
};

class StrategyError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class NotReadyError : public Error {
 public:
  using Error::Error;
};

class SizingError : public Error {
 public:
  using Error::Error;
};

/// A metric was requested on data of the wrong shape (e.g. multi-label rows
/// passed to an exclusive-only metric).
class ModeError : public Error {
 public:
  using Error::Error;
};

class ExportError : public Error {
 public:
  using Error::Error;
};

class StoreError : public Error {
 public:
  using Error::Error;
};

}  // namespace labelforge
