// error.hpp -- exception types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace bbdrop {

// Internal failure (bug, numerical blow-up, broken invariant). CLI exit 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user input: malformed files, unknown config keys, missing paths,
// violated preconditions on data. CLI exit 2.
class InputError : public Error {
 public:
  using Error::Error;
};

}  // namespace bbdrop
