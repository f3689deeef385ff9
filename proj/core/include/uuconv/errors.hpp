#pragma once

#include <stdexcept>
#include <string>

namespace uuconv {

// Bad shapes, bad config values, out-of-range labels. Maps to exit code 1.
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Missing files, malformed headers, truncated payloads. Maps to exit code 2.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace uuconv
