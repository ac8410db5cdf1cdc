#pragma once

// Hamiltonians of the driven V-type three-level system and the closed-form
// spectral quantities derived from them.
//
// Basis order is fixed everywhere: (|0>, |1>, |2>) = (m_s = 0, m_s = -1, m_s = +1);
// dressed order is (|+>, |->, |2>). Angular frequencies are rad/us.

#include <numbers>
#include <utility>

#include "atsim/linalg.hpp"

namespace atsim {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Ordinary frequency in MHz to angular frequency in rad/us.
constexpr double mhz_to_angular(double mhz) { return kTwoPi * mhz; }
constexpr double angular_to_mhz(double rad_per_us) { return rad_per_us / kTwoPi; }

struct GroundStateParams {
  double zero_field_splitting_ghz = 2.87;
  double gyromagnetic_ghz_per_t = 28.03;
  double b_z_tesla = 0.0;

  void validate() const;
};

struct TransitionFrequencies {
  double omega_01_ghz = 0.0;  // |0> <-> |1>  (m_s = -1)
  double omega_02_ghz = 0.0;  // |0> <-> |2>  (m_s = +1)
};

/// Eigenvalues of D S_z^2 + gamma_e B_z S_z with S_z = diag(0, -1, +1),
/// measured from the m_s = 0 level.
TransitionFrequencies transition_frequencies(const GroundStateParams& p);

struct DriveParams {
  double omega_c = 0.0;  // coupling Rabi frequency, rad/us
  double omega_p = 0.0;  // probe Rabi frequency, rad/us
  double delta_c = 0.0;  // coupling detuning, rad/us
  double delta_p = 0.0;  // probe detuning, rad/us
  double phi_c = 0.0;    // coupling phase, rad
  double phi_p = 0.0;    // probe phase, rad

  void validate() const;
  /// sqrt(delta_c^2 + omega_c^2)
  double omega_eff() const;
};

/// Rotating-frame Hamiltonian in the bare basis:
///   [[0, Oc/2 e^{i phi_c}, Op/2 e^{i phi_p}],
///    [c.c., delta_c, 0],
///    [c.c., 0, delta_p]]
ComplexMatrix3 rotating_frame_hamiltonian(const DriveParams& d);

/// diag(1, e^{-i phi_c}, e^{-i phi_p}); conjugating the phased Hamiltonian by
/// it removes both drive phases.
ComplexMatrix3 phase_gauge(const DriveParams& d);

/// Resonant-coupling Hamiltonian in the dressed basis (|+>, |->, |2>).
/// Requires delta_c == 0.
ComplexMatrix3 dressed_hamiltonian(const DriveParams& d);

enum class Branch { plus = +1, minus = -1 };

/// Second-order effective Hamiltonian in the dressed basis in which the
/// off-resonant dressed level is decoupled from |2> and its level shift
/// Op^2/(8 Oc) is folded into the |2> energy. Requires delta_c == 0 and Oc > 0;
/// warns when Oc/Op < 5.
ComplexMatrix3 effective_two_level(const DriveParams& d, Branch branch);

/// Probe detuning at which |2> is resonant with the chosen dressed level:
/// +-(Oc/2 - Op^2/(8 Oc)).
double branch_resonance(const DriveParams& d, Branch branch);

struct DressedBasis {
  StateVector3 plus;
  StateVector3 minus;
  StateVector3 two;

  /// Unitary whose columns are plus, minus, two (bare components).
  ComplexMatrix3 matrix() const;
};

/// Dressed states of the coupling block for arbitrary delta_c, including the
/// drive phases so that matrix() maps the phased bare Hamiltonian into the
/// dressed frame. Requires (omega_c, delta_c) != (0, 0).
DressedBasis dressed_basis(const DriveParams& d);

struct NonresonantDressed {
  ComplexMatrix3 hamiltonian;  // dressed basis
  DressedBasis basis;
};

/// Exact conjugation of the rotating-frame Hamiltonian into dressed_basis(d).
NonresonantDressed nonresonant_dressed(const DriveParams& d);

/// Autler-Townes splitting: Oc - Op^2/(4 Oc) for delta_c == 0, sqrt(delta_c^2 + Oc^2)
/// otherwise. Requires Oc > 0.
double ats_splitting(const DriveParams& d);

struct DressedEnergies {
  double e_plus = 0.0;
  double e_minus = 0.0;
};

/// E+- = omega_02 + delta_c/2 +- omega_eff/2 (same units as the inputs).
DressedEnergies eigenenergies_detuned(const DriveParams& d, double omega_02);

}  // namespace atsim
