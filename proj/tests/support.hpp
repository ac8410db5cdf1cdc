#pragma once

// Shared helpers for the unit tests: Eigen conversions (Eigen is the
// independent oracle for the 3x3 linear algebra) and seeded random inputs.

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "atsim/linalg.hpp"

namespace testing {

inline constexpr double kPi = 3.14159265358979323846;

inline Eigen::Matrix3cd to_eigen(const atsim::ComplexMatrix3& m) {
  Eigen::Matrix3cd e;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) e(r, c) = m(r, c);
  return e;
}

inline atsim::ComplexMatrix3 from_eigen(const Eigen::Matrix3cd& e) {
  atsim::ComplexMatrix3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = e(r, c);
  return m;
}

inline Eigen::Matrix3cd gaussian_matrix(std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::Matrix3cd a;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) a(r, c) = {g(rng), g(rng)};
  return a;
}

inline atsim::ComplexMatrix3 random_hermitian(std::mt19937_64& rng, double scale = 10.0) {
  const Eigen::Matrix3cd a = gaussian_matrix(rng, scale);
  return from_eigen(0.5 * (a + a.adjoint()));
}

inline atsim::ComplexMatrix3 random_unitary(std::mt19937_64& rng) {
  Eigen::HouseholderQR<Eigen::Matrix3cd> qr(gaussian_matrix(rng));
  return from_eigen(qr.householderQ() * Eigen::Matrix3cd::Identity());
}

inline atsim::DensityMatrix random_density(std::mt19937_64& rng) {
  const Eigen::Matrix3cd a = gaussian_matrix(rng);
  Eigen::Matrix3cd rho = a * a.adjoint();
  rho /= rho.trace();
  return {from_eigen(rho), atsim::Basis::bare};
}

inline atsim::StateVector3 random_state(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  atsim::StateVector3 psi;
  for (int k = 0; k < 3; ++k) psi[k] = {g(rng), g(rng)};
  const double n = std::sqrt(psi.norm_squared());
  for (int k = 0; k < 3; ++k) psi[k] /= n;
  return psi;
}

inline std::array<double, 3> oracle_spectrum(const atsim::ComplexMatrix3& h) {
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3cd> es(to_eigen(h));
  return {es.eigenvalues()(0), es.eigenvalues()(1), es.eigenvalues()(2)};
}

}  // namespace testing
