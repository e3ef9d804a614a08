#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace fex {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error taxonomy shared across modules; the CLI maps these to exit codes.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct NotMemberError : Error { using Error::Error; };
struct UndecidedError : Error { using Error::Error; };
struct NumericalFailure : Error { using Error::Error; };
struct InvariantViolation : Error { using Error::Error; };

// Deterministic RNG. mt19937_64 plus hand-rolled transforms, so a seed pins
// the whole stream; std:: distributions are implementation-defined and would
// not be reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t raw() { return state_(); }

  // [0,1), 53-bit resolution
  double uniform() {
    return static_cast<double>(state_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform(), u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  Vector gaussian_vector(int n) {
    Vector v(n);
    for (int i = 0; i < n; ++i) v(i) = gaussian();
    return v;
  }

  Vector unit_vector(int n) {
    Vector v = gaussian_vector(n);
    double nrm = v.norm();
    while (nrm < 1e-12) {
      v = gaussian_vector(n);
      nrm = v.norm();
    }
    return v / nrm;
  }

  Matrix gaussian_matrix(int r, int c) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) m(i, j) = gaussian();
    return m;
  }

  Matrix symmetric_gaussian(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) {
      m(i, i) = gaussian();
      for (int j = i + 1; j < n; ++j) m(i, j) = m(j, i) = gaussian();
    }
    return m;
  }

  int uniform_int(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(uniform() * (hi - lo + 1));
  }

 private:
  std::mt19937_64 state_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fex
