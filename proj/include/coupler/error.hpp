#pragma once

#include <stdexcept>
#include <string>

namespace coupler {

// Base for all library errors. Carries a plain message; subclasses add the
// indices needed to locate the problem.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class MeshError : public Error {
 public:
  using Error::Error;
};

class InversionError : public Error {
 public:
  InversionError(int element, double det)
      : Error("element " + std::to_string(element) +
              " inverted (det F = " + std::to_string(det) + ")"),
        element_(element),
        det_(det) {}

  int element() const { return element_; }
  double det() const { return det_; }

 private:
  int element_;
  double det_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace coupler
