#pragma once

// Pulse-sequence experiments on the driven three-level system: schedules,
// fluorescence readout, spectral scans, sweeps, interference dynamics and
// the optimal-duration conditions.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "atsim/lindblad.hpp"
#include "atsim/linalg.hpp"
#include "atsim/model.hpp"

namespace atsim {

inline constexpr double kDefaultContrast = 0.22;

// ---------------------------------------------------------------- readout

/// <0|rho|0> for a bare-basis state. Dressed states must be converted first.
double population_p0(const DensityMatrix& rho);
double population_p0(const StateVector3& psi);

/// 1 - C + C p0.
double pl_from_p0(double p0, double contrast = kDefaultContrast);
double pl_from_p0(double p0, const DecoherenceParams& dec);

/// Converts a dressed-basis state to the bare basis through `basis`.
StateVector3 to_bare(const StateVector3& psi, const DressedBasis& basis);
DensityMatrix to_bare(const DensityMatrix& rho, const DressedBasis& basis);

// ---------------------------------------------------------------- schedules

enum class Transition { coupling, probe };  // |0><->|1>, |0><->|2>

/// Ideal instantaneous rotation exp(-i angle/2 (cos(axis) X + sin(axis) Y)) on
/// the two-level subspace of `transition`. A pi/2 coupling pulse about the y
/// axis (axis_phase = pi/2) takes |0> to |+> = (|0> + |1>)/sqrt(2).
struct PrePulse {
  Transition transition = Transition::coupling;
  double angle = 0.0;       // rad
  double axis_phase = 0.0;  // rad

  ComplexMatrix3 unitary() const;
};

using InitialState = std::variant<StateVector3, DensityMatrix>;

struct PulseSchedule {
  InitialState init = StateVector3::basis_state(0);
  std::vector<PrePulse> pre_pulses;
  DriveParams drive;
  double duration = 0.0;  // us
  int readout_level = 0;

  void validate() const;
};

struct ScheduleOutcome {
  double p0 = 0.0;  // population of readout_level
  double pl = 0.0;
  DensityMatrix final_state;
};

/// Applies the pre-pulses, then evolves under the simultaneous drive: unitary
/// propagation without decoherence, RK4 Lindblad integration with it.
ScheduleOutcome run_schedule(const PulseSchedule& schedule,
                             const std::optional<DecoherenceParams>& dec);

// ---------------------------------------------------------------- interference law

/// P = |cos(sqrt(2) Op t / 4) + e^{i Oc t}|^2 / 4, valid at the plus-branch resonance.
double analytic_interference(double omega_p, double omega_c, double t);

enum class OptimalFamily { A, B };

struct OptimalDuration {
  double t = 0.0;  // us
  OptimalFamily family = OptimalFamily::A;
  int n = 0;
  int k = 0;
  double residual = 0.0;  // |cos(sqrt(2) Op t / 4) - target|
};

/// Durations on the coupling grid that best satisfy the maximal-contrast conditions:
///   A: Oc t = 2 n pi,     Op t ~ 2 sqrt(2) (2k - 1) pi   (target cos = -1)
///   B: Oc t = (2n - 1) pi, Op t ~ 2 sqrt(2) (2k) pi      (target cos = +1)
/// for n = 1..max_index. For each (family, k) the grid point with the smallest
/// residual is kept. Sorted by t.
std::vector<OptimalDuration> optimal_durations(double omega_c, double omega_p, int max_index);

// ---------------------------------------------------------------- scans

struct NoiseOptions {
  double sigma = 0.0;  // Gaussian PL noise, off when 0
  std::uint64_t seed = 0;
};

struct ScanOptions {
  unsigned threads = 1;
  NoiseOptions noise;
};

struct ScanResult {
  std::vector<double> axis;      // probe detuning, rad/us
  std::vector<double> axis_mhz;  // same, MHz
  std::vector<double> p0;
  std::vector<double> pl;
  nlohmann::json metadata;
};

struct TimeTrace {
  std::vector<double> times;  // us
  std::vector<double> p0;
  std::vector<double> pl;
  std::string constraint;
  nlohmann::json metadata;
};

/// Symmetric grid of `points` values on [center - half_width, center + half_width].
std::vector<double> linear_grid(double center, double half_width, int points);

/// Default probe grid: +-1.5 max(Oc, Oeff) around 0, 301 points.
std::vector<double> default_probe_grid(const DriveParams& d, int points = 301);

/// One run_schedule per probe detuning, starting in |0>. Results are in axis
/// order regardless of the thread count; noise is seeded per point.
ScanResult spectrum_scan(const DriveParams& base, std::span<const double> delta_p_grid,
                         double duration, const std::optional<DecoherenceParams>& dec,
                         const ScanOptions& options = {});

/// Samples p0 and PL at t = 2 n pi / Oc, n = 0..n_max, with the probe set to the
/// branch resonance. A single trajectory is integrated and sampled stroboscopically.
TimeTrace dynamics_trace(const DriveParams& base, int n_max,
                         const std::optional<DecoherenceParams>& dec,
                         Branch branch = Branch::plus);

/// Rabi oscillation after a pi/2 coupling pre-pulse (|0> -> |+>). With
/// coupling_on = false the coupling is off and the probe is resonant with
/// |0><->|2>; otherwise the probe sits at the plus-branch resonance.
TimeTrace rabi_trace(const DriveParams& base, std::span<const double> times,
                     const std::optional<DecoherenceParams>& dec, bool coupling_on);

// ---------------------------------------------------------------- dips and sweeps

struct Dip {
  double position = 0.0;  // rad/us
  double value = 0.0;     // interpolated minimum
  double depth = 0.0;     // max(values) - value
};

/// Local minima below max - 0.2 (max - min), refined by three-point parabolic
/// interpolation, ascending by position. Requires >= 5 points.
std::vector<Dip> find_dips(std::span<const double> axis, std::span<const double> values);
std::vector<Dip> find_dips(const ScanResult& scan);

struct DurationRule {
  enum class Kind { fixed, coupling_cycles, probe_angle };
  Kind kind = Kind::fixed;
  double value = 0.0;

  /// fixed: value us; coupling_cycles: 2 pi value / Oeff; probe_angle: value / Op.
  double duration(const DriveParams& d) const;
  static DurationRule fixed(double t_us) { return {Kind::fixed, t_us}; }
  static DurationRule coupling_cycles(double n) { return {Kind::coupling_cycles, n}; }
  static DurationRule probe_angle(double theta) { return {Kind::probe_angle, theta}; }
};

struct ProbeSpec {
  /// Op = Oc / ratio when ratio is set, otherwise the fixed omega_p.
  std::optional<double> ratio;
  double omega_p = 0.0;
};

struct SweepOptions {
  int points = 301;
  ScanOptions scan;
};

struct AmplitudePoint {
  double omega_c = 0.0;
  double splitting = 0.0;  // rad/us; NaN when flagged
  int dip_count = 0;
  bool flagged = false;    // no dip on one side of the doublet center
};

std::vector<AmplitudePoint> amplitude_sweep(std::span<const double> omega_c_grid,
                                            const ProbeSpec& probe, const DurationRule& rule,
                                            const std::optional<DecoherenceParams>& dec,
                                            const SweepOptions& options = {});

/// dips: the deepest dip on each side of delta_c / 2, ascending by position.
struct DetuningPoint {
  double delta_c = 0.0;
  std::vector<Dip> dips;
};

std::vector<DetuningPoint> detuning_sweep(std::span<const double> delta_c_grid,
                                          const DriveParams& base, const DurationRule& rule,
                                          const std::optional<DecoherenceParams>& dec,
                                          const SweepOptions& options = {});

/// Least-squares slope of y against x.
double fitted_slope(std::span<const double> x, std::span<const double> y);

}  // namespace atsim
