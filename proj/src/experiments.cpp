#include "atsim/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "atsim/error.hpp"

namespace atsim {
namespace {

const Complex kI(0.0, 1.0);

void require_bare(Basis basis, const char* who) {
  if (basis != Basis::bare) {
    throw InvalidInput(std::string(who) + " expects a bare-basis state; convert dressed states first");
  }
}

double clamp_probability(double p) { return std::clamp(p, 0.0, 1.0); }

nlohmann::json drive_json(const DriveParams& d) {
  return {{"omega_c", d.omega_c}, {"omega_p", d.omega_p}, {"delta_c", d.delta_c},
          {"delta_p", d.delta_p}, {"phi_c", d.phi_c},     {"phi_p", d.phi_p}};
}

nlohmann::json decoherence_json(const std::optional<DecoherenceParams>& dec) {
  if (!dec) return nullptr;
  return {{"gamma1", dec->gamma1},
          {"gamma2", dec->gamma2},
          {"gamma3", dec->gamma3},
          {"relaxation", dec->relaxation},
          {"contrast", dec->contrast}};
}

double contrast_of(const std::optional<DecoherenceParams>& dec) {
  return dec ? dec->contrast : kDefaultContrast;
}

// Runs body(i) for i in [0, count) on up to `threads` workers.
template <typename Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  workers.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

double pl_noise(const NoiseOptions& noise, std::size_t index) {
  if (noise.sigma <= 0.0) return 0.0;
  std::seed_seq seq{static_cast<std::uint32_t>(noise.seed), static_cast<std::uint32_t>(noise.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> gauss(0.0, noise.sigma);
  return gauss(rng);
}

}  // namespace

double population_p0(const DensityMatrix& rho) {
  require_bare(rho.basis, "population_p0");
  return clamp_probability(rho.rho(0, 0).real());
}

double population_p0(const StateVector3& psi) {
  require_bare(psi.basis, "population_p0");
  return clamp_probability(std::norm(psi[0]) / psi.norm_squared());
}

double pl_from_p0(double p0, double contrast) {
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw InvalidInput("population must lie in [0, 1]");
  if (!(contrast >= 0.0 && contrast <= 1.0)) throw InvalidInput("contrast must lie in [0, 1]");
  return 1.0 - contrast + contrast * p0;
}

double pl_from_p0(double p0, const DecoherenceParams& dec) { return pl_from_p0(p0, dec.contrast); }

StateVector3 to_bare(const StateVector3& psi, const DressedBasis& basis) {
  if (psi.basis == Basis::bare) return psi;
  StateVector3 out = apply(basis.matrix(), psi);
  out.basis = Basis::bare;
  return out;
}

DensityMatrix to_bare(const DensityMatrix& rho, const DressedBasis& basis) {
  if (rho.basis == Basis::bare) return rho;
  const auto b = basis.matrix();
  return {b * rho.rho * b.adjoint(), Basis::bare};
}

ComplexMatrix3 PrePulse::unitary() const {
  if (!std::isfinite(angle) || !std::isfinite(axis_phase)) {
    throw InvalidInput("pre-pulse angle and axis must be finite");
  }
  const int j = transition == Transition::coupling ? 1 : 2;
  const double c = std::cos(0.5 * angle);
  const double s = std::sin(0.5 * angle);
  ComplexMatrix3 u = ComplexMatrix3::identity();
  u(0, 0) = c;
  u(j, j) = c;
  // -i s (cos(phi) X + sin(phi) Y) with X = |0><j| + |j><0|, Y = -i|0><j| + i|j><0|.
  u(0, j) = -kI * s * std::exp(-kI * axis_phase);
  u(j, 0) = -kI * s * std::exp(kI * axis_phase);
  return u;
}

void PulseSchedule::validate() const {
  drive.validate();
  if (!(duration >= 0.0) || !std::isfinite(duration)) {
    throw InvalidInput("schedule duration must be finite and >= 0");
  }
  if (readout_level < 0 || readout_level > 2) throw InvalidInput("readout level out of range");
  for (const auto& p : pre_pulses) (void)p.unitary();
  std::visit(
      [](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, StateVector3>) {
          require_bare(s.basis, "PulseSchedule");
          if (std::abs(s.norm_squared() - 1.0) > 1e-10) {
            throw InvalidInput("initial state is not normalized");
          }
        } else {
          require_bare(s.basis, "PulseSchedule");
          require_valid(s, "initial state");
        }
      },
      init);
}

ScheduleOutcome run_schedule(const PulseSchedule& s, const std::optional<DecoherenceParams>& dec) {
  s.validate();
  ComplexMatrix3 pre = ComplexMatrix3::identity();
  for (const auto& p : s.pre_pulses) pre = p.unitary() * pre;

  DensityMatrix rho = std::visit(
      [&](const auto& init) {
        using T = std::decay_t<decltype(init)>;
        if constexpr (std::is_same_v<T, StateVector3>) {
          return DensityMatrix::pure(apply(pre, init));
        } else {
          return DensityMatrix{pre * init.rho * pre.adjoint(), Basis::bare};
        }
      },
      s.init);

  const ComplexMatrix3 h = rotating_frame_hamiltonian(s.drive);
  if (dec) {
    rho = evolve_rk4(rho, h, make_dissipation(*dec), s.duration).final_state;
  } else if (s.duration > 0.0) {
    const ComplexMatrix3 u = propagator(h, s.duration);
    rho.rho = u * rho.rho * u.adjoint();
  }

  ScheduleOutcome out;
  out.p0 = clamp_probability(rho.rho(s.readout_level, s.readout_level).real());
  out.pl = pl_from_p0(out.p0, contrast_of(dec));
  out.final_state = rho;
  return out;
}

double analytic_interference(double omega_p, double omega_c, double t) {
  const Complex amp = std::cos(std::sqrt(2.0) * omega_p * t / 4.0) + std::exp(kI * omega_c * t);
  return 0.25 * std::norm(amp);
}

std::vector<OptimalDuration> optimal_durations(double omega_c, double omega_p, int max_index) {
  if (!(omega_c > 0.0) || !(omega_p > 0.0)) {
    throw InvalidInput("optimal_durations requires omega_c > 0 and omega_p > 0");
  }
  if (max_index < 1) throw InvalidInput("optimal_durations requires max_index >= 1");
  const double pi = std::numbers::pi;

  auto duration = [&](OptimalFamily f, int n) {
    return f == OptimalFamily::A ? 2.0 * n * pi / omega_c : (2.0 * n - 1.0) * pi / omega_c;
  };
  auto residual = [&](OptimalFamily f, int n) {
    const double t = duration(f, n);
    if (t < 0.0) return std::numeric_limits<double>::infinity();
    const double target = f == OptimalFamily::A ? -1.0 : 1.0;
    return std::abs(std::cos(std::sqrt(2.0) * omega_p * t / 4.0) - target);
  };

  std::map<std::pair<int, int>, OptimalDuration> best;  // (family, k)
  for (auto f : {OptimalFamily::A, OptimalFamily::B}) {
    for (int n = 1; n <= max_index; ++n) {
      const double r = residual(f, n);
      if (!(r <= residual(f, n - 1) && r < residual(f, n + 1))) continue;
      const double t = duration(f, n);
      const double x = std::sqrt(2.0) * omega_p * t / 4.0;
      const int k = f == OptimalFamily::A ? static_cast<int>(std::lround((x / pi + 1.0) / 2.0))
                                          : static_cast<int>(std::lround(x / (2.0 * pi)));
      if (k < 1) continue;
      const auto key = std::make_pair(static_cast<int>(f), k);
      auto it = best.find(key);
      if (it == best.end() || r < it->second.residual) best[key] = {t, f, n, k, r};
    }
  }
  std::vector<OptimalDuration> out;
  for (const auto& [key, value] : best) out.push_back(value);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.t < b.t; });
  return out;
}

std::vector<double> linear_grid(double center, double half_width, int points) {
  if (points < 2) throw InvalidInput("grid needs at least two points");
  std::vector<double> grid(points);
  for (int i = 0; i < points; ++i) {
    grid[i] = center - half_width + 2.0 * half_width * i / (points - 1);
  }
  return grid;
}

std::vector<double> default_probe_grid(const DriveParams& d, int points) {
  const double scale = std::max({d.omega_c, d.omega_eff(), d.omega_p});
  if (!(scale > 0.0)) throw InvalidInput("default probe grid needs a nonzero drive");
  return linear_grid(0.0, 1.5 * scale, points);
}

ScanResult spectrum_scan(const DriveParams& base, std::span<const double> grid, double duration,
                         const std::optional<DecoherenceParams>& dec, const ScanOptions& options) {
  base.validate();
  if (dec) dec->validate();
  if (!std::is_sorted(grid.begin(), grid.end())) {
    throw InvalidInput("spectrum_scan: probe grid must be sorted ascending");
  }
  if (!(duration >= 0.0)) throw InvalidInput("spectrum_scan: duration must be >= 0");

  ScanResult out;
  out.axis.assign(grid.begin(), grid.end());
  out.axis_mhz.resize(grid.size());
  out.p0.resize(grid.size());
  out.pl.resize(grid.size());
  std::transform(grid.begin(), grid.end(), out.axis_mhz.begin(), angular_to_mhz);

  parallel_for(grid.size(), options.threads, [&](std::size_t i) {
    PulseSchedule s;
    s.drive = base;
    s.drive.delta_p = grid[i];
    s.duration = duration;
    const auto r = run_schedule(s, dec);
    out.p0[i] = r.p0;
    out.pl[i] = r.pl + pl_noise(options.noise, i);
  });

  out.metadata = {{"experiment", "spectrum_scan"},
                  {"drive", drive_json(base)},
                  {"duration_us", duration},
                  {"decoherence", decoherence_json(dec)},
                  {"contrast", contrast_of(dec)},
                  {"points", grid.size()},
                  {"noise", {{"sigma", options.noise.sigma}, {"seed", options.noise.seed}}}};
  return out;
}

TimeTrace dynamics_trace(const DriveParams& base, int n_max,
                         const std::optional<DecoherenceParams>& dec, Branch branch) {
  base.validate();
  if (base.delta_c != 0.0) throw InvalidInput("dynamics_trace requires delta_c = 0");
  if (!(base.omega_c > 0.0)) throw InvalidInput("dynamics_trace requires omega_c > 0");
  if (n_max < 0) throw InvalidInput("dynamics_trace requires n_max >= 0");

  DriveParams d = base;
  d.delta_p = branch_resonance(d, branch);
  const ComplexMatrix3 h = rotating_frame_hamiltonian(d);
  const double period = kTwoPi / d.omega_c;
  const double contrast = contrast_of(dec);

  TimeTrace out;
  out.constraint = "t = 2 n pi / omega_c";
  const auto ground = DensityMatrix::pure(StateVector3::basis_state(0));

  if (!dec) {
    for (int n = 0; n <= n_max; ++n) {
      const double t = n * period;
      const auto psi = apply(propagator(h, t), StateVector3::basis_state(0));
      out.times.push_back(t);
      out.p0.push_back(population_p0(psi));
    }
  } else {
    const double dt_target = default_time_step(h);
    const int per_period = static_cast<int>(std::ceil(period / dt_target));
    EvolveOptions opts;
    opts.dt = period / per_period;
    opts.sample_every = per_period;
    const auto evo = evolve_rk4(ground, h, make_dissipation(*dec), n_max * period, opts);
    out.times.push_back(0.0);
    out.p0.push_back(1.0);
    for (std::size_t i = 1; i < evo.trajectory.size(); ++i) {
      out.times.push_back(static_cast<double>(i) * period);
      out.p0.push_back(population_p0(evo.trajectory[i].rho));
    }
  }
  for (double p : out.p0) out.pl.push_back(pl_from_p0(p, contrast));

  out.metadata = {{"experiment", "dynamics_trace"},
                  {"drive", drive_json(d)},
                  {"branch", branch == Branch::plus ? "plus" : "minus"},
                  {"n_max", n_max},
                  {"decoherence", decoherence_json(dec)},
                  {"contrast", contrast}};
  return out;
}

TimeTrace rabi_trace(const DriveParams& base, std::span<const double> times,
                     const std::optional<DecoherenceParams>& dec, bool coupling_on) {
  base.validate();
  DriveParams d = base;
  d.delta_c = 0.0;
  if (coupling_on) {
    d.delta_p = branch_resonance(d, Branch::plus);
  } else {
    d.omega_c = 0.0;
    d.delta_p = 0.0;
  }
  PulseSchedule s;
  s.pre_pulses = {PrePulse{Transition::coupling, std::numbers::pi / 2.0, std::numbers::pi / 2.0}};
  s.drive = d;

  TimeTrace out;
  out.constraint = coupling_on ? "pi/2 coupling pre-pulse, probe on |+> <-> |2> with coupling"
                               : "pi/2 coupling pre-pulse, probe only";
  for (double t : times) {
    s.duration = t;
    const auto r = run_schedule(s, dec);
    out.times.push_back(t);
    out.p0.push_back(r.p0);
    out.pl.push_back(r.pl);
  }
  out.metadata = {{"experiment", "rabi_trace"},
                  {"drive", drive_json(d)},
                  {"coupling_on", coupling_on},
                  {"decoherence", decoherence_json(dec)},
                  {"contrast", contrast_of(dec)}};
  return out;
}

std::vector<Dip> find_dips(std::span<const double> axis, std::span<const double> values) {
  if (axis.size() != values.size()) throw InvalidInput("find_dips: axis/value size mismatch");
  if (axis.size() < 5) throw InvalidInput("find_dips requires at least 5 points");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  std::vector<Dip> dips;
  if (!(range > 0.0)) return dips;
  const double threshold = *hi - 0.2 * range;

  for (std::size_t i = 1; i + 1 < values.size(); ++i) {
    const double y0 = values[i - 1], y1 = values[i], y2 = values[i + 1];
    if (!(y1 < y0 && y1 <= y2 && y1 < threshold)) continue;
    const double x0 = axis[i - 1], x1 = axis[i], x2 = axis[i + 1];
    const double num = (x1 - x0) * (x1 - x0) * (y1 - y2) - (x1 - x2) * (x1 - x2) * (y1 - y0);
    const double den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0);
    double x = x1;
    double y = y1;
    if (den != 0.0) {
      x = std::clamp(x1 - 0.5 * num / den, x0, x2);
      // Lagrange form of the parabola through the three samples.
      y = y0 * (x - x1) * (x - x2) / ((x0 - x1) * (x0 - x2)) +
          y1 * (x - x0) * (x - x2) / ((x1 - x0) * (x1 - x2)) +
          y2 * (x - x0) * (x - x1) / ((x2 - x0) * (x2 - x1));
    }
    dips.push_back({x, y, *hi - y});
  }
  return dips;
}

std::vector<Dip> find_dips(const ScanResult& scan) { return find_dips(scan.axis, scan.pl); }

double DurationRule::duration(const DriveParams& d) const {
  switch (kind) {
    case Kind::fixed:
      if (!(value >= 0.0)) throw InvalidInput("fixed duration must be >= 0");
      return value;
    case Kind::coupling_cycles:
      if (!(d.omega_eff() > 0.0)) throw InvalidInput("coupling-cycle rule needs a coupling drive");
      return kTwoPi * value / d.omega_eff();
    case Kind::probe_angle:
      if (!(d.omega_p > 0.0)) throw InvalidInput("probe-angle rule needs omega_p > 0");
      return value / d.omega_p;
  }
  throw InvalidInput("unknown duration rule");
}

namespace {

// The doublet straddles the mean of the two dressed energies, delta_c / 2.
// Picking the deepest dip on each side keeps a strong dip's side lobe from
// displacing the weaker partner when the coupling is detuned.
std::vector<Dip> doublet(const std::vector<Dip>& dips, double center) {
  const Dip* lo = nullptr;
  const Dip* hi = nullptr;
  for (const auto& d : dips) {
    const Dip*& slot = d.position < center ? lo : hi;
    if (!slot || d.depth > slot->depth) slot = &d;
  }
  std::vector<Dip> out;
  if (lo) out.push_back(*lo);
  if (hi) out.push_back(*hi);
  return out;
}

}  // namespace

std::vector<AmplitudePoint> amplitude_sweep(std::span<const double> omega_c_grid,
                                            const ProbeSpec& probe, const DurationRule& rule,
                                            const std::optional<DecoherenceParams>& dec,
                                            const SweepOptions& options) {
  std::vector<AmplitudePoint> out;
  for (double oc : omega_c_grid) {
    if (!(oc > 0.0)) throw InvalidInput("amplitude_sweep requires omega_c > 0");
    DriveParams d;
    d.omega_c = oc;
    d.omega_p = probe.ratio ? oc / *probe.ratio : probe.omega_p;
    const auto grid = default_probe_grid(d, options.points);
    const auto scan = spectrum_scan(d, grid, rule.duration(d), dec, options.scan);
    const auto all = find_dips(scan);
    AmplitudePoint pt;
    pt.omega_c = oc;
    pt.dip_count = static_cast<int>(all.size());
    const auto pair = doublet(all, 0.0);
    if (pair.size() == 2) {
      pt.splitting = pair[1].position - pair[0].position;
    } else {
      pt.flagged = true;
      pt.splitting = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(pt);
  }
  return out;
}

std::vector<DetuningPoint> detuning_sweep(std::span<const double> delta_c_grid,
                                          const DriveParams& base, const DurationRule& rule,
                                          const std::optional<DecoherenceParams>& dec,
                                          const SweepOptions& options) {
  std::vector<DetuningPoint> out;
  for (double dc : delta_c_grid) {
    if (!std::isfinite(dc)) throw InvalidInput("detuning_sweep requires finite detunings");
    DriveParams d = base;
    d.delta_c = dc;
    const auto grid = default_probe_grid(d, options.points);
    const auto scan = spectrum_scan(d, grid, rule.duration(d), dec, options.scan);
    out.push_back({dc, doublet(find_dips(scan), 0.5 * dc)});
  }
  return out;
}

double fitted_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidInput("fitted_slope needs >= 2 pairs");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw InvalidInput("fitted_slope: x values are all equal");
  return sxy / sxx;
}

}  // namespace atsim
