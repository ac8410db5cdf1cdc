#include "atsim/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "atsim/error.hpp"

namespace atsim {

std::string_view to_string(Basis basis) {
  return basis == Basis::bare ? "bare" : "dressed";
}

ComplexMatrix3 ComplexMatrix3::identity() { return diagonal(1.0, 1.0, 1.0); }

ComplexMatrix3 ComplexMatrix3::diagonal(Complex d0, Complex d1, Complex d2) {
  ComplexMatrix3 m;
  m(0, 0) = d0;
  m(1, 1) = d1;
  m(2, 2) = d2;
  return m;
}

ComplexMatrix3 ComplexMatrix3::projector(int level) { return transition(level, level); }

ComplexMatrix3 ComplexMatrix3::transition(int from, int to) {
  if (from < 0 || from > 2 || to < 0 || to > 2) {
    throw InvalidInput("level index out of range [0, 2]");
  }
  ComplexMatrix3 m;
  m(to, from) = 1.0;
  return m;
}

ComplexMatrix3 ComplexMatrix3::from_columns(
    const std::array<std::array<Complex, 3>, 3>& columns) {
  ComplexMatrix3 m;
  for (int c = 0; c < 3; ++c)
    for (int r = 0; r < 3; ++r) m(r, c) = columns[c][r];
  return m;
}

std::array<Complex, 3> ComplexMatrix3::column(int col) const {
  return {(*this)(0, col), (*this)(1, col), (*this)(2, col)};
}

ComplexMatrix3 ComplexMatrix3::adjoint() const {
  ComplexMatrix3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out(r, c) = std::conj((*this)(c, r));
  return out;
}

Complex ComplexMatrix3::trace() const { return m_[0] + m_[4] + m_[8]; }

double ComplexMatrix3::max_abs() const {
  double best = 0.0;
  for (const auto& z : m_) best = std::max(best, std::abs(z));
  return best;
}

double ComplexMatrix3::hermitian_asymmetry() const { return max_abs_diff(*this, adjoint()); }

ComplexMatrix3& ComplexMatrix3::operator+=(const ComplexMatrix3& rhs) {
  for (std::size_t i = 0; i < m_.size(); ++i) m_[i] += rhs.m_[i];
  return *this;
}

ComplexMatrix3& ComplexMatrix3::operator-=(const ComplexMatrix3& rhs) {
  for (std::size_t i = 0; i < m_.size(); ++i) m_[i] -= rhs.m_[i];
  return *this;
}

ComplexMatrix3& ComplexMatrix3::operator*=(Complex s) {
  for (auto& z : m_) z *= s;
  return *this;
}

ComplexMatrix3 operator*(const ComplexMatrix3& a, const ComplexMatrix3& b) {
  ComplexMatrix3 out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      out(r, c) = a(r, 0) * b(0, c) + a(r, 1) * b(1, c) + a(r, 2) * b(2, c);
  return out;
}

double max_abs_diff(const ComplexMatrix3& a, const ComplexMatrix3& b) {
  double best = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) best = std::max(best, std::abs(a(r, c) - b(r, c)));
  return best;
}

ComplexMatrix3 commutator(const ComplexMatrix3& a, const ComplexMatrix3& b) {
  return a * b - b * a;
}

double unitarity_error(const ComplexMatrix3& u) {
  return max_abs_diff(u.adjoint() * u, ComplexMatrix3::identity());
}

StateVector3 StateVector3::basis_state(int level, Basis basis) {
  if (level < 0 || level > 2) throw InvalidInput("level index out of range [0, 2]");
  StateVector3 psi;
  psi.amplitudes[level] = 1.0;
  psi.basis = basis;
  return psi;
}

double StateVector3::norm_squared() const {
  return std::norm(amplitudes[0]) + std::norm(amplitudes[1]) + std::norm(amplitudes[2]);
}

Complex inner(const StateVector3& bra, const StateVector3& ket) {
  if (bra.basis != ket.basis) {
    throw InvalidInput("inner product between states in different bases");
  }
  Complex s = 0.0;
  for (int k = 0; k < 3; ++k) s += std::conj(bra[k]) * ket[k];
  return s;
}

StateVector3 apply(const ComplexMatrix3& m, const StateVector3& psi) {
  StateVector3 out;
  out.basis = psi.basis;
  for (int r = 0; r < 3; ++r) out[r] = m(r, 0) * psi[0] + m(r, 1) * psi[1] + m(r, 2) * psi[2];
  return out;
}

DensityMatrix DensityMatrix::pure(const StateVector3& psi) {
  DensityMatrix d;
  d.basis = psi.basis;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) d.rho(r, c) = psi[r] * std::conj(psi[c]);
  return d;
}

DensityMatrix DensityMatrix::maximally_mixed(Basis basis) {
  return {ComplexMatrix3::diagonal(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0), basis};
}

bool DensityDiagnostics::ok() const {
  return trace_error < 1e-9 && hermitian_error < 1e-10 && min_eigenvalue >= -1e-7;
}

std::string DensityDiagnostics::describe() const {
  std::ostringstream os;
  os << "|tr(rho)-1| = " << trace_error << ", max|rho-rho^dagger| = " << hermitian_error
     << ", min eigenvalue = " << min_eigenvalue;
  return os.str();
}

DensityDiagnostics diagnose(const DensityMatrix& d) {
  DensityDiagnostics out;
  out.trace_error = std::abs(d.rho.trace() - 1.0);
  out.hermitian_error = d.rho.hermitian_asymmetry();
  // Eigenvalues of the Hermitian part; the asymmetry is reported separately.
  ComplexMatrix3 herm = (d.rho + d.rho.adjoint()) * 0.5;
  out.min_eigenvalue = eig_hermitian(herm).values[0];
  return out;
}

void require_valid(const DensityMatrix& rho, std::string_view what) {
  auto diag = diagnose(rho);
  if (!diag.ok()) {
    throw InvalidInput(std::string(what) + " is not a valid density matrix: " + diag.describe());
  }
}

StateVector3 EigenSystem::vector(int k) const {
  StateVector3 v;
  v.amplitudes = vectors.column(k);
  return v;
}

namespace {

void require_hermitian(const ComplexMatrix3& h) {
  const double asym = h.hermitian_asymmetry();
  if (asym > kHermitianTolerance * std::max(1.0, h.max_abs())) {
    std::ostringstream os;
    os << "matrix is not Hermitian: max|H - H^dagger| = " << asym;
    throw InvalidInput(os.str());
  }
}

double off_diagonal_norm(const ComplexMatrix3& a) {
  return std::sqrt(std::norm(a(0, 1)) + std::norm(a(0, 2)) + std::norm(a(1, 2)));
}

// Zeroes the (p, q) element with G = D R, where D = diag(1, e^{-i phi}) removes
// the phase of a(p, q) and R is the real Jacobi rotation of the resulting
// symmetric 2x2 block.
void jacobi_rotate(ComplexMatrix3& a, ComplexMatrix3& v, int p, int q) {
  const Complex apq = a(p, q);
  const double mag = std::abs(apq);
  if (mag == 0.0) return;
  const Complex phase = apq / mag;
  const double app = a(p, p).real();
  const double aqq = a(q, q).real();
  const double theta = 0.5 * std::atan2(2.0 * mag, aqq - app);
  const double c = std::cos(theta);
  const double s = std::sin(theta);

  ComplexMatrix3 g = ComplexMatrix3::identity();
  g(p, p) = c;
  g(p, q) = s;
  g(q, p) = -s * std::conj(phase);
  g(q, q) = c * std::conj(phase);

  a = g.adjoint() * a * g;
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  for (int k = 0; k < 3; ++k) a(k, k) = a(k, k).real();
  v = v * g;
}

void normalize(std::array<Complex, 3>& x) {
  const double n = std::sqrt(std::norm(x[0]) + std::norm(x[1]) + std::norm(x[2]));
  for (auto& z : x) z /= n;
}

void apply_phase_convention(std::array<Complex, 3>& x) {
  for (const auto& z : x) {
    if (std::abs(z) > 1e-12) {
      const Complex phase = std::conj(z) / std::abs(z);
      for (auto& w : x) w *= phase;
      return;
    }
  }
}

bool lexicographically_greater(const std::array<Complex, 3>& a, const std::array<Complex, 3>& b) {
  for (int k = 0; k < 3; ++k) {
    if (a[k].real() > b[k].real() + 1e-12) return true;
    if (a[k].real() < b[k].real() - 1e-12) return false;
  }
  return false;
}

}  // namespace

EigenSystem eig_hermitian(const ComplexMatrix3& h) {
  require_hermitian(h);
  ComplexMatrix3 a = (h + h.adjoint()) * 0.5;
  ComplexMatrix3 v = ComplexMatrix3::identity();

  double frob = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) frob += std::norm(a(r, c));
  frob = std::sqrt(frob);

  constexpr int kMaxSweeps = 64;
  for (int sweep = 0; sweep < kMaxSweeps && frob > 0.0; ++sweep) {
    if (off_diagonal_norm(a) <= 1e-17 * frob) break;
    jacobi_rotate(a, v, 0, 1);
    jacobi_rotate(a, v, 0, 2);
    jacobi_rotate(a, v, 1, 2);
  }

  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return a(i, i).real() < a(j, j).real(); });

  std::array<double, 3> values{};
  std::array<std::array<Complex, 3>, 3> vecs{};
  for (int k = 0; k < 3; ++k) {
    values[k] = a(order[k], order[k]).real();
    vecs[k] = v.column(order[k]);
  }

  // Degenerate clusters: Gram-Schmidt, phase convention, lexicographic order.
  int start = 0;
  while (start < 3) {
    int end = start + 1;
    while (end < 3 && values[end] - values[end - 1] < kDegeneracyTolerance) ++end;
    for (int k = start; k < end; ++k) {
      for (int j = start; j < k; ++j) {
        Complex proj = 0.0;
        for (int r = 0; r < 3; ++r) proj += std::conj(vecs[j][r]) * vecs[k][r];
        for (int r = 0; r < 3; ++r) vecs[k][r] -= proj * vecs[j][r];
      }
      normalize(vecs[k]);
    }
    for (int k = start; k < end; ++k) apply_phase_convention(vecs[k]);
    if (end - start > 1) {
      std::stable_sort(vecs.begin() + start, vecs.begin() + end, lexicographically_greater);
    }
    start = end;
  }

  EigenSystem out;
  out.values = values;
  out.vectors = ComplexMatrix3::from_columns(vecs);
  return out;
}

double spectral_norm(const ComplexMatrix3& h) {
  const auto es = eig_hermitian(h);
  return std::max(std::abs(es.values[0]), std::abs(es.values[2]));
}

ComplexMatrix3 propagator(const ComplexMatrix3& h, double t) {
  if (!(t >= 0.0) || !std::isfinite(t)) {
    throw InvalidInput("propagator requires a finite duration t >= 0");
  }
  if (t == 0.0) return ComplexMatrix3::identity();
  const auto es = eig_hermitian(h);
  const Complex i(0.0, 1.0);
  const auto phases = ComplexMatrix3::diagonal(std::exp(-i * es.values[0] * t),
                                               std::exp(-i * es.values[1] * t),
                                               std::exp(-i * es.values[2] * t));
  return es.vectors * phases * es.vectors.adjoint();
}

ComplexMatrix3 conjugate_basis(const ComplexMatrix3& h, const ComplexMatrix3& v) {
  const double err = unitarity_error(v);
  if (err > kUnitaryTolerance) {
    std::ostringstream os;
    os << "basis change is not unitary: max|V^dagger V - I| = " << err;
    throw InvalidInput(os.str());
  }
  return v.adjoint() * h * v;
}

}  // namespace atsim
