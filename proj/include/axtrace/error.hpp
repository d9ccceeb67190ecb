#pragma once

#include <stdexcept>
#include <string>

namespace axtrace {

// Missing files, short reads, unwritable outputs.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed headers, payload size mismatches, bad SWC rows, bad JSON fields.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Broken internal contract, e.g. a negative edge weight reaching the solver.
class IntegrityError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace axtrace
