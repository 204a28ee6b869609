#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace dasam {

/// Base for every error raised by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition of an operation was violated by the caller (shape
/// mismatch, empty prompt set, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// One or more configuration fields are invalid. `fields()` lists every
/// violated field as "section.key: reason".
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> fields);
  const std::vector<std::string>& fields() const noexcept { return fields_; }

 private:
  std::vector<std::string> fields_;
};

/// A serialized payload (RLE, request body, record file) could not be parsed.
class MalformedPayload : public Error {
 public:
  MalformedPayload(std::string field, const std::string& message);
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// A line-oriented input file could not be ingested.
class IngestionError : public Error {
 public:
  IngestionError(std::string path, int line, const std::string& message);
  int line() const noexcept { return line_; }
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
  int line_;
};

class CheckpointVersionError : public Error {
 public:
  CheckpointVersionError(int found, int expected);
  int found() const noexcept { return found_; }
  int expected() const noexcept { return expected_; }

 private:
  int found_;
  int expected_;
};

/// Raised by the trainer's divergence guard when the loss is not finite.
class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace dasam
