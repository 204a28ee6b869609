#include "dasam/error.hpp"

namespace dasam {
namespace {

std::string join_fields(const std::vector<std::string>& fields) {
  std::string out = "invalid configuration:";
  for (const auto& f : fields) {
    out += " [" + f + "]";
  }
  return out;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> fields)
    : Error(join_fields(fields)), fields_(std::move(fields)) {}

MalformedPayload::MalformedPayload(std::string field, const std::string& message)
    : Error(field + ": " + message), field_(std::move(field)) {}

IngestionError::IngestionError(std::string path, int line, const std::string& message)
    : Error(path + ":" + std::to_string(line) + ": " + message), path_(std::move(path)), line_(line) {}

CheckpointVersionError::CheckpointVersionError(int found, int expected)
    : Error("checkpoint format version " + std::to_string(found) + " is not supported (expected " +
            std::to_string(expected) + ")"),
      found_(found),
      expected_(expected) {}

}  // namespace dasam
