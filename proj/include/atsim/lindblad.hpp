#pragma once

// Markovian open-system dynamics of the three-level system:
//   d rho/dt = -i[H, rho] + sum_j D(A_j) rho,   D(A) rho = A rho A^dagger - {A^dagger A, rho}/2.
//
// Rates are plain 1/us (no factor 2 pi); Hamiltonians are rad/us.

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "atsim/linalg.hpp"
#include "atsim/model.hpp"

namespace atsim {

enum class LindbladKind { dephasing, relaxation };

struct LindbladOp {
  ComplexMatrix3 matrix;  // (1/us)^{1/2}
  LindbladKind kind = LindbladKind::dephasing;
};

struct LevelRate {
  int level = 0;
  double rate = 0.0;  // 1/us
};

/// One operator sqrt(2 gamma_a)|a><a| per entry. A pair of projector operators on
/// levels a and b damps the coherence rho_ab at gamma_a + gamma_b.
std::vector<LindbladOp> make_dephasing(std::span<const LevelRate> levels);

/// sqrt(Gamma)|to><from|.
LindbladOp make_relaxation(int from, int to, double rate);

/// Per-level rates (gamma_a0, gamma_a1, gamma_a2) reproducing coherence decay
/// rates gamma1 on rho01, gamma2 on rho02, gamma3 on rho12, or nullopt when
/// the triple has no nonnegative decomposition.
std::optional<std::array<double, 3>> per_level_dephasing(double gamma1, double gamma2,
                                                         double gamma3);

struct DecoherenceParams {
  double gamma1 = 0.0;  // decay of rho01, 1/us
  double gamma2 = 0.0;  // decay of rho02, 1/us
  double gamma3 = 0.0;  // decay of rho12, 1/us
  /// relaxation[i][j]: population transfer rate |i> -> |j>, 1/us. Diagonal ignored.
  std::array<std::array<double, 3>, 3> relaxation{};
  /// Fluorescence contrast C in PL = 1 - C + C p0.
  double contrast = 0.22;

  void validate() const;
  bool has_relaxation() const;
};

/// Dissipative part of the master equation. Coherence-level dephasing that has
/// a per-level decomposition becomes Lindblad operators; otherwise it is kept
/// as direct damping of (rho01, rho02, rho12).
struct Dissipation {
  std::vector<LindbladOp> ops;
  std::array<double, 3> coherence_damping{};

  bool empty() const;
  /// Smallest strictly positive rate, or 0 when none.
  double slowest_rate() const;
};

Dissipation make_dissipation(const DecoherenceParams& dec);

ComplexMatrix3 lindblad_rhs(const ComplexMatrix3& rho, const ComplexMatrix3& h,
                            std::span<const LindbladOp> ops);
ComplexMatrix3 lindblad_rhs(const ComplexMatrix3& rho, const ComplexMatrix3& h,
                            const Dissipation& diss);
ComplexMatrix3 lindblad_rhs(const DensityMatrix& rho, const ComplexMatrix3& h,
                            const Dissipation& diss);

/// y1 = rho00, y2 = rho11, y3 + i y4 = rho01, y5 + i y6 = rho02, y7 + i y8 = rho12;
/// rho22 = 1 - y1 - y2.
struct RealState8 {
  std::array<double, 8> y{};

  static RealState8 from_density(const DensityMatrix& rho);
  DensityMatrix to_density() const;
};

/// Resonant-coupling equations of motion written as eight real ODEs with
/// coherence-level dephasing. Requires delta_c == 0 and no relaxation.
RealState8 real_ode_rhs(const RealState8& state, const DriveParams& d,
                        const DecoherenceParams& dec);

struct EvolveOptions {
  /// Fixed step; default from default_time_step(h). Shrunk (with a warning)
  /// until dt * ||H|| <= 0.1.
  std::optional<double> dt;
  /// Record the state every this many steps (0 = final state only).
  int sample_every = 0;
};

struct TrajectorySample {
  double t = 0.0;
  DensityMatrix rho;
};

struct Evolution {
  DensityMatrix final_state;
  std::vector<TrajectorySample> trajectory;
  double dt = 0.0;
  long steps = 0;
};

/// 2 pi / (50 max(spread of H, 1 rad/us)), capped so that dt * ||H|| <= 0.1.
double default_time_step(const ComplexMatrix3& h);

/// 2 pi / (50 max(Oc, Op, |dp|, |dc|, 1 rad/us)).
double default_time_step(const DriveParams& d);

/// Classical fixed-step fourth-order Runge-Kutta. The number of steps is
/// ceil(t_final / dt) and the step is adjusted so the last one lands exactly on
/// t_final. Throws NumericalFailure if the step must shrink below 1e-7 us.
Evolution evolve_rk4(const DensityMatrix& rho0, const ComplexMatrix3& h,
                     const Dissipation& diss, double t_final, const EvolveOptions& options = {});

/// Solves 0 = -i[H, rho] + dissipator(rho) with tr rho = 1 as a 9x9 real linear
/// system. Rank-deficient or ill-conditioned (> 1e12) systems fall back to
/// long-time integration from rho0 (default |0><0|); throws NumericalFailure
/// naming the rank defect when no dissipation is present or the fallback does
/// not settle.
DensityMatrix steady_state(const ComplexMatrix3& h, const Dissipation& diss,
                           const std::optional<DensityMatrix>& rho0 = std::nullopt);

}  // namespace atsim
