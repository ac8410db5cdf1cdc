#include "atsim/model.hpp"

#include <cmath>
#include <sstream>

#include "atsim/error.hpp"

namespace atsim {
namespace {

const Complex kI(0.0, 1.0);

bool finite(double x) { return std::isfinite(x); }

void require_resonant_coupling(const DriveParams& d, const char* who) {
  if (d.delta_c != 0.0) {
    std::ostringstream os;
    os << who << " requires resonant coupling (delta_c = 0), got delta_c = " << d.delta_c;
    throw InvalidInput(os.str());
  }
}

// s + dc and s - dc with s = sqrt(dc^2 + oc^2), each computed without cancellation.
std::pair<double, double> sum_and_difference(double oc, double dc, double s) {
  if (dc >= 0.0) {
    const double sum = s + dc;
    return {sum, oc * oc / sum};
  }
  const double diff = s - dc;
  return {oc * oc / diff, diff};
}

}  // namespace

void GroundStateParams::validate() const {
  if (!(zero_field_splitting_ghz > 0.0) || !finite(zero_field_splitting_ghz)) {
    throw InvalidInput("zero-field splitting D must be finite and > 0");
  }
  if (!finite(gyromagnetic_ghz_per_t)) throw InvalidInput("gyromagnetic ratio must be finite");
  if (!(b_z_tesla >= 0.0) || !finite(b_z_tesla)) {
    throw InvalidInput("axial field B_z must be finite and >= 0");
  }
}

TransitionFrequencies transition_frequencies(const GroundStateParams& p) {
  p.validate();
  // S_z = diag(0, -1, +1) in (|0>, |1>, |2>).
  const auto sz = ComplexMatrix3::diagonal(0.0, -1.0, 1.0);
  const auto h = p.zero_field_splitting_ghz * (sz * sz) +
                 (p.gyromagnetic_ghz_per_t * p.b_z_tesla) * sz;
  // The operator is diagonal in this basis; levels are read in basis order
  // so that the m_s labels survive a level crossing.
  return {h(1, 1).real() - h(0, 0).real(), h(2, 2).real() - h(0, 0).real()};
}

void DriveParams::validate() const {
  for (double v : {omega_c, omega_p, delta_c, delta_p, phi_c, phi_p}) {
    if (!finite(v)) throw InvalidInput("drive parameters must be finite");
  }
  if (omega_c < 0.0) throw InvalidInput("coupling Rabi frequency omega_c must be >= 0");
  if (omega_p < 0.0) throw InvalidInput("probe Rabi frequency omega_p must be >= 0");
}

double DriveParams::omega_eff() const { return std::hypot(delta_c, omega_c); }

ComplexMatrix3 rotating_frame_hamiltonian(const DriveParams& d) {
  d.validate();
  ComplexMatrix3 h;
  const Complex c = 0.5 * d.omega_c * std::exp(kI * d.phi_c);
  const Complex p = 0.5 * d.omega_p * std::exp(kI * d.phi_p);
  h(0, 1) = c;
  h(1, 0) = std::conj(c);
  h(0, 2) = p;
  h(2, 0) = std::conj(p);
  h(1, 1) = d.delta_c;
  h(2, 2) = d.delta_p;
  return h;
}

ComplexMatrix3 phase_gauge(const DriveParams& d) {
  return ComplexMatrix3::diagonal(1.0, std::exp(-kI * d.phi_c), std::exp(-kI * d.phi_p));
}

ComplexMatrix3 dressed_hamiltonian(const DriveParams& d) {
  d.validate();
  require_resonant_coupling(d, "dressed_hamiltonian");
  const double half_c = 0.5 * d.omega_c;
  const double g = std::sqrt(2.0) * d.omega_p / 4.0;
  ComplexMatrix3 h;
  h(0, 0) = half_c;
  h(1, 1) = -half_c;
  h(2, 2) = d.delta_p;
  h(0, 2) = h(2, 0) = g;
  h(1, 2) = h(2, 1) = g;
  return h;
}

ComplexMatrix3 effective_two_level(const DriveParams& d, Branch branch) {
  d.validate();
  require_resonant_coupling(d, "effective_two_level");
  if (!(d.omega_c > 0.0)) {
    throw InvalidInput("effective_two_level requires omega_c > 0 (perturbation theory undefined)");
  }
  if (d.omega_p > 0.0 && d.omega_c / d.omega_p < 5.0) {
    std::ostringstream os;
    os << "effective_two_level: omega_c/omega_p = " << d.omega_c / d.omega_p
       << " < 5, second-order elimination is inaccurate";
    warn(os.str());
  }
  const double half_c = 0.5 * d.omega_c;
  const double g = std::sqrt(2.0) * d.omega_p / 4.0;
  const double shift = d.omega_p * d.omega_p / (8.0 * d.omega_c);
  ComplexMatrix3 h;
  h(0, 0) = half_c;
  h(1, 1) = -half_c;
  if (branch == Branch::plus) {
    h(0, 2) = h(2, 0) = g;
    h(2, 2) = d.delta_p + shift;
  } else {
    h(1, 2) = h(2, 1) = g;
    h(2, 2) = d.delta_p - shift;
  }
  return h;
}

double branch_resonance(const DriveParams& d, Branch branch) {
  if (!(d.omega_c > 0.0)) throw InvalidInput("branch_resonance requires omega_c > 0");
  const double r = 0.5 * d.omega_c - d.omega_p * d.omega_p / (8.0 * d.omega_c);
  return branch == Branch::plus ? r : -r;
}

ComplexMatrix3 DressedBasis::matrix() const {
  return ComplexMatrix3::from_columns({plus.amplitudes, minus.amplitudes, two.amplitudes});
}

DressedBasis dressed_basis(const DriveParams& d) {
  d.validate();
  if (d.omega_c == 0.0 && d.delta_c == 0.0) {
    throw InvalidInput("dressed basis undefined for omega_c = delta_c = 0");
  }
  const double s = d.omega_eff();
  const auto [s_plus, s_minus] = sum_and_difference(d.omega_c, d.delta_c, s);
  // |+> = (Oc|0> + (dc + s)|1>)/N+,  |-> = (Oc|0> + (dc - s)|1>)/N-,
  // N+- = sqrt(2 s (s +- dc)); rewritten in half-angle form.
  const double a = std::sqrt(s_minus / (2.0 * s));
  const double b = std::sqrt(s_plus / (2.0 * s));
  const Complex e1 = std::exp(-kI * d.phi_c);
  const Complex e2 = std::exp(-kI * d.phi_p);

  DressedBasis basis;
  basis.plus.amplitudes = {a, b * e1, 0.0};
  basis.minus.amplitudes = {b, -a * e1, 0.0};
  basis.two.amplitudes = {0.0, 0.0, e2};
  return basis;
}

NonresonantDressed nonresonant_dressed(const DriveParams& d) {
  NonresonantDressed out;
  out.basis = dressed_basis(d);
  out.hamiltonian = conjugate_basis(rotating_frame_hamiltonian(d), out.basis.matrix());
  return out;
}

double ats_splitting(const DriveParams& d) {
  d.validate();
  if (!(d.omega_c > 0.0)) throw InvalidInput("ats_splitting requires omega_c > 0");
  if (d.delta_c == 0.0) {
    return d.omega_c - d.omega_p * d.omega_p / (4.0 * d.omega_c);
  }
  return d.omega_eff();
}

DressedEnergies eigenenergies_detuned(const DriveParams& d, double omega_02) {
  d.validate();
  const double s = d.omega_eff();
  return {omega_02 + 0.5 * d.delta_c + 0.5 * s, omega_02 + 0.5 * d.delta_c - 0.5 * s};
}

}  // namespace atsim
