#pragma once

// Fixed-size dense complex linear algebra for three-level systems.
//
// Units: Hamiltonians are angular frequencies in rad/us, times in us.

#include <array>
#include <complex>
#include <string>
#include <string_view>

namespace atsim {

using Complex = std::complex<double>;

/// Which orthonormal basis the components of a state refer to.
///   bare:    (|0>, |1>, |2>) = (m_s = 0, m_s = -1, m_s = +1)
///   dressed: (|+>, |->, |2>)
enum class Basis { bare, dressed };

std::string_view to_string(Basis basis);

class ComplexMatrix3 {
 public:
  ComplexMatrix3() = default;

  static ComplexMatrix3 identity();
  static ComplexMatrix3 diagonal(Complex d0, Complex d1, Complex d2);
  /// |level><level|
  static ComplexMatrix3 projector(int level);
  /// |to><from|
  static ComplexMatrix3 transition(int from, int to);
  /// Matrix whose k-th column is columns[k].
  static ComplexMatrix3 from_columns(const std::array<std::array<Complex, 3>, 3>& columns);

  Complex& operator()(int row, int col) { return m_[index(row, col)]; }
  const Complex& operator()(int row, int col) const { return m_[index(row, col)]; }

  std::array<Complex, 3> column(int col) const;

  ComplexMatrix3 adjoint() const;
  Complex trace() const;
  /// Largest entrywise modulus.
  double max_abs() const;
  /// max |M - M^dagger| entrywise.
  double hermitian_asymmetry() const;

  ComplexMatrix3& operator+=(const ComplexMatrix3& rhs);
  ComplexMatrix3& operator-=(const ComplexMatrix3& rhs);
  ComplexMatrix3& operator*=(Complex s);

  friend ComplexMatrix3 operator+(ComplexMatrix3 a, const ComplexMatrix3& b) { return a += b; }
  friend ComplexMatrix3 operator-(ComplexMatrix3 a, const ComplexMatrix3& b) { return a -= b; }
  friend ComplexMatrix3 operator*(ComplexMatrix3 a, Complex s) { return a *= s; }
  friend ComplexMatrix3 operator*(Complex s, ComplexMatrix3 a) { return a *= s; }
  friend ComplexMatrix3 operator*(const ComplexMatrix3& a, const ComplexMatrix3& b);
  friend bool operator==(const ComplexMatrix3&, const ComplexMatrix3&) = default;

 private:
  static constexpr int index(int row, int col) { return 3 * row + col; }
  std::array<Complex, 9> m_{};
};

/// max |a - b| entrywise.
double max_abs_diff(const ComplexMatrix3& a, const ComplexMatrix3& b);

ComplexMatrix3 commutator(const ComplexMatrix3& a, const ComplexMatrix3& b);

/// max |U^dagger U - I| entrywise.
double unitarity_error(const ComplexMatrix3& u);

struct StateVector3 {
  std::array<Complex, 3> amplitudes{};
  Basis basis = Basis::bare;

  static StateVector3 basis_state(int level, Basis basis = Basis::bare);

  const Complex& operator[](int k) const { return amplitudes[k]; }
  Complex& operator[](int k) { return amplitudes[k]; }

  double norm_squared() const;
};

/// <bra|ket>. Both vectors must carry the same basis tag.
Complex inner(const StateVector3& bra, const StateVector3& ket);

/// Applies m to the amplitudes; the basis tag is preserved.
StateVector3 apply(const ComplexMatrix3& m, const StateVector3& psi);

struct DensityMatrix {
  ComplexMatrix3 rho;
  Basis basis = Basis::bare;

  static DensityMatrix pure(const StateVector3& psi);
  static DensityMatrix maximally_mixed(Basis basis = Basis::bare);
};

struct DensityDiagnostics {
  double trace_error = 0.0;       // |tr rho - 1|
  double hermitian_error = 0.0;   // max |rho - rho^dagger|
  double min_eigenvalue = 0.0;

  bool ok() const;
  std::string describe() const;
};

DensityDiagnostics diagnose(const DensityMatrix& rho);

/// Throws InvalidInput naming the violated invariant.
void require_valid(const DensityMatrix& rho, std::string_view what);

struct EigenSystem {
  /// Ascending, rad/us.
  std::array<double, 3> values{};
  /// Column k pairs with values[k].
  ComplexMatrix3 vectors;

  StateVector3 vector(int k) const;
};

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// Eigenvalues are returned ascending. Each eigenvector is normalized and
/// rephased so that its first component with modulus above 1e-12 is real and
/// non-negative. Within a degenerate cluster (|l_i - l_j| < 1e-10) vectors
/// are re-orthonormalized and ordered by descending lexicographic comparison
/// of their real parts, which makes diagonal input return the identity.
///
/// Throws InvalidInput if h is not Hermitian.
EigenSystem eig_hermitian(const ComplexMatrix3& h);

/// Largest |eigenvalue| of a Hermitian matrix.
double spectral_norm(const ComplexMatrix3& h);

/// U = exp(-i h t) built from the eigendecomposition of h. Requires t >= 0.
ComplexMatrix3 propagator(const ComplexMatrix3& h, double t);

/// V^dagger h V. Throws InvalidInput unless V is unitary to 1e-10.
ComplexMatrix3 conjugate_basis(const ComplexMatrix3& h, const ComplexMatrix3& v);

/// Tolerance used for the Hermitian check, scaled by max(1, max|h|).
inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr double kUnitaryTolerance = 1e-10;
inline constexpr double kDegeneracyTolerance = 1e-10;

}  // namespace atsim
