#pragma once

#include <stdexcept>
#include <string>

namespace bf {

// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke an operation's precondition (bad argument, wrong shape, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Bytes on disk or on the wire do not follow the expected layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

// A named entity (source, split, dataset, function) does not exist.
class LookupError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace bf
