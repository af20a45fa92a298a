#pragma once

#include <stdexcept>

namespace aubase {

/// Malformed or inconsistent input files (manifests, banks, configs).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace aubase
