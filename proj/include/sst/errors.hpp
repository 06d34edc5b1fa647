#pragma once

#include <stdexcept>

namespace sst {

/// Bad or missing user input (files, configs, datasets). The CLI maps it to exit code 1.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sst
