#pragma once

#include <stdexcept>
#include <string>

namespace argus {

// Validation failures map to CLI exit code 1, I/O failures to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace argus
