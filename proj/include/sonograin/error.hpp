#pragma once

#include <stdexcept>
#include <string>

namespace sonograin {

// InputError: a file or argument could not be used as given.
// BuildError: inputs were readable but no valid result can be produced from them.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BuildError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sonograin
