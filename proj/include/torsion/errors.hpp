#pragma once

#include <stdexcept>
#include <string>

namespace torsion {

/// Base class for every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Ill-posed symmetry input. `norm()` is the violated Frobenius norm.
class NormViolation : public Error {
 public:
  NormViolation(const std::string& what, double norm)
      : Error(what + " (norm " + std::to_string(norm) + ")"), norm_(norm) {}
  double norm() const noexcept { return norm_; }

 private:
  double norm_;
};

class NonOrthogonal : public NormViolation {
 public:
  explicit NonOrthogonal(double norm) : NormViolation("Q is not orthogonal: |Q^T Q - I|", norm) {}
};

class NonSymmetric : public NormViolation {
 public:
  explicit NonSymmetric(double norm) : NormViolation("Hessian is not symmetric: |H - H^T|", norm) {}
};

class NonCommuting : public NormViolation {
 public:
  explicit NonCommuting(double norm) : NormViolation("Q and H do not commute: |QH - HQ|", norm) {}
};

class IndexOutOfRange : public Error {
 public:
  using Error::Error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class UnknownFamily : public Error {
 public:
  using Error::Error;
};

class BadParameters : public Error {
 public:
  using Error::Error;
};

class StepSizeUnderflow : public Error {
 public:
  using Error::Error;
};

}  // namespace torsion
