#pragma once

#include <stdexcept>
#include <string>

namespace gvimp {

/// A numerical routine hit a non-positive pivot, a singular system or a non-finite value.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid or inconsistent experiment configuration (including missing files).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gvimp
