#pragma once

#include <stdexcept>
#include <string>

namespace fnmt {

/// Base class for all recoverable toolkit failures.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fnmt
