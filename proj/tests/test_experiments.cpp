#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "atsim/error.hpp"
#include "atsim/experiments.hpp"
#include "atsim/model.hpp"
#include "support.hpp"

using namespace atsim;
using testing::kPi;

namespace {

DecoherenceParams s5_rates() {
  DecoherenceParams dec;
  dec.gamma1 = 0.0784;
  dec.gamma2 = 0.0784;
  dec.gamma3 = 2.0 * 0.0784;
  return dec;
}

DriveParams fig4_drive() {
  const double oc = 2.0 * kPi * 4.73;
  return {oc, oc / 14.0};
}

}  // namespace

TEST_CASE("readout") {
  CHECK(population_p0(StateVector3::basis_state(0)) == 1.0);
  CHECK(population_p0(DensityMatrix::maximally_mixed()) == doctest::Approx(1.0 / 3.0));
  const auto basis = dressed_basis({1.0, 0.0});
  const auto plus = to_bare(StateVector3::basis_state(0, Basis::dressed), basis);
  CHECK(population_p0(plus) == doctest::Approx(0.5));
  CHECK_THROWS_AS(population_p0(StateVector3::basis_state(0, Basis::dressed)), InvalidInput);

  CHECK(pl_from_p0(1.0) == doctest::Approx(1.0));
  CHECK(pl_from_p0(0.0) == doctest::Approx(0.78));
  CHECK(pl_from_p0(1.0 / 3.0) == doctest::Approx(0.8533).epsilon(1e-4));
}

TEST_CASE("interference law") {
  const double op = 2.0 * kPi * 0.338, oc = 14.0 * op;
  CHECK(analytic_interference(op, oc, 0.0) == doctest::Approx(1.0));
  // Op t = 2 sqrt(2) pi makes the cosine -1; the coupling phase is a multiple of 2 pi.
  const double t1 = 2.0 * std::sqrt(2.0) * kPi / op;
  const double t2 = 2.0 * t1;
  CHECK(analytic_interference(op, 2.0 * kPi * 3.0 / t1, t1) < 1e-24);
  CHECK(analytic_interference(op, 2.0 * kPi * 5.0 / t2, t2) == doctest::Approx(1.0));
}

TEST_CASE("optimal durations") {
  const auto d = fig4_drive();
  const auto all = optimal_durations(d.omega_c, d.omega_p, 40);
  REQUIRE_FALSE(all.empty());
  CHECK(std::is_sorted(all.begin(), all.end(),
                       [](const auto& a, const auto& b) { return a.t < b.t; }));
  const auto first_a = std::find_if(all.begin(), all.end(), [](const OptimalDuration& o) {
    return o.family == OptimalFamily::A && o.k == 1;
  });
  REQUIRE(first_a != all.end());
  CHECK(first_a->n == 20);
  CHECK(first_a->t == doctest::Approx(40.0 * kPi / d.omega_c));
  for (const auto& o : all) {
    if (o.residual < 0.01) CHECK(analytic_interference(d.omega_p, d.omega_c, o.t) < 0.01);
  }
  // Exactly matched ratio: Oc/Op = n / (sqrt(2)(2k - 1)) with n = 20, k = 1.
  const double op = 1.0, oc = 20.0 / std::sqrt(2.0);
  const auto exact = optimal_durations(oc, op, 40);
  const bool has_zero = std::any_of(exact.begin(), exact.end(), [](const OptimalDuration& o) {
    return o.family == OptimalFamily::A && o.n == 20 && o.residual < 1e-12;
  });
  CHECK(has_zero);
}

TEST_CASE("run_schedule") {
  SUBCASE("zero duration without pre-pulses") {
    PulseSchedule s;
    s.drive = fig4_drive();
    const auto out = run_schedule(s, std::nullopt);
    CHECK(out.p0 == doctest::Approx(1.0));
    CHECK(out.pl == doctest::Approx(1.0));
  }
  SUBCASE("pi/2 coupling pre-pulse prepares |+>") {
    const auto u = PrePulse{Transition::coupling, kPi / 2.0, kPi / 2.0}.unitary();
    const auto psi = apply(u, StateVector3::basis_state(0));
    CHECK(std::abs(psi[0] - 1.0 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(psi[1] - 1.0 / std::sqrt(2.0)) < 1e-15);
  }
  SUBCASE("coupled Rabi oscillation runs at sqrt(2) Op / 2") {
    const auto base = fig4_drive();
    const double rabi = std::sqrt(2.0) * base.omega_p / 2.0;
    const std::vector<double> times{0.0, kPi / rabi, 2.0 * kPi / rabi};
    const auto trace = rabi_trace(base, times, std::nullopt, true);
    // |+> has p0 = 1/2, |2> has p0 = 0.
    CHECK(trace.p0[0] == doctest::Approx(0.5));
    CHECK(trace.p0[1] < 0.02);
    CHECK(trace.p0[2] == doctest::Approx(0.5).epsilon(0.05));
  }
  SUBCASE("long pulse with the measured dephasing saturates near 0.853") {
    // Ramsey times 8.2 us (0 <-> 1) and 8.7 us (0 <-> 2).
    DecoherenceParams ramsey;
    ramsey.gamma1 = 1.0 / 8.2;
    ramsey.gamma2 = 1.0 / 8.7;
    ramsey.gamma3 = ramsey.gamma1 + ramsey.gamma2;
    const double oc = 2.0 * kPi / 1.8;
    for (double dp : {-oc / 2.0, 0.0, oc / 2.0}) {
      PulseSchedule s;
      s.drive = {oc, oc / 2.0, 0.0, dp};
      s.duration = 52.2;
      const auto out = run_schedule(s, ramsey);
      CHECK(std::abs(out.pl - 0.853) < 0.005);
      CHECK(diagnose(out.final_state).ok());
    }
  }
  SUBCASE("invalid schedules") {
    PulseSchedule s;
    s.duration = -1.0;
    CHECK_THROWS_AS(run_schedule(s, std::nullopt), InvalidInput);
  }
}

TEST_CASE("geometric phase of a 2 pi pulse on the plus branch") {
  DriveParams d = fig4_drive();
  d.delta_p = branch_resonance(d, Branch::plus);
  const double t = 2.0 * kPi / (std::sqrt(2.0) * d.omega_p / 2.0);
  const auto basis = dressed_basis(d);
  const auto psi = apply(propagator(rotating_frame_hamiltonian(d), t), basis.plus);
  // Remove the dynamical phase of the |+> level (energy Oc/2 in this frame).
  const Complex amp = inner(basis.plus, psi) * std::exp(Complex(0.0, d.omega_c / 2.0 * t));
  CHECK(std::abs(amp + 1.0) < 0.05);
}

TEST_CASE("spectrum scans") {
  const double oc = 2.0 * kPi / 1.8;
  const DriveParams fig2b{oc, oc / 2.0};
  const auto grid = default_probe_grid(fig2b, 101);

  SUBCASE("no probe gives a flat scan") {
    const auto scan = spectrum_scan({oc, 0.0}, grid, 1.8, std::nullopt);
    for (double pl : scan.pl) CHECK(pl == doctest::Approx(1.0));
    CHECK(find_dips(scan).empty());
  }
  SUBCASE("PL stays within the contrast band") {
    const auto scan = spectrum_scan(fig2b, grid, 1.8, s5_rates());
    for (std::size_t i = 0; i < scan.pl.size(); ++i) {
      CHECK(scan.p0[i] >= -1e-12);
      CHECK(scan.p0[i] <= 1.0 + 1e-12);
      CHECK(scan.pl[i] >= 0.78 - 1e-12);
      CHECK(scan.pl[i] <= 1.0 + 1e-12);
    }
    CHECK(scan.axis_mhz[0] == doctest::Approx(scan.axis[0] / (2.0 * kPi)));
  }
  SUBCASE("results do not depend on the thread count") {
    ScanOptions one, four;
    four.threads = 4;
    one.noise = four.noise = {0.01, 42};
    const auto a = spectrum_scan(fig2b, grid, 1.8, std::nullopt, one);
    const auto b = spectrum_scan(fig2b, grid, 1.8, std::nullopt, four);
    CHECK(a.pl == b.pl);
    CHECK(a.p0 == b.p0);
    CHECK(a.metadata == b.metadata);
  }
  SUBCASE("noise is seeded") {
    ScanOptions a, b, c;
    a.noise = b.noise = {0.01, 7};
    c.noise = {0.01, 8};
    const auto sa = spectrum_scan(fig2b, grid, 1.8, std::nullopt, a);
    CHECK(sa.pl == spectrum_scan(fig2b, grid, 1.8, std::nullopt, b).pl);
    CHECK(sa.pl != spectrum_scan(fig2b, grid, 1.8, std::nullopt, c).pl);
  }
  SUBCASE("optimal duration gives full-contrast dips") {
    const auto d = fig4_drive();
    const auto scan = spectrum_scan(d, default_probe_grid(d, 301), 40.0 * kPi / d.omega_c,
                                    std::nullopt);
    const auto dips = find_dips(scan);
    REQUIRE(dips.size() >= 2);
    const double deepest = std::min_element(dips.begin(), dips.end(), [](auto& a, auto& b) {
                             return a.value < b.value;
                           })->value;
    CHECK(deepest < pl_from_p0(0.02));
  }
}

TEST_CASE("find_dips") {
  SUBCASE("symmetric Lorentzian doublet") {
    const auto axis = linear_grid(0.0, 10.0, 201);
    const double spacing = axis[1] - axis[0];
    std::vector<double> y;
    for (double x : axis) {
      y.push_back(1.0 - 0.2 / (1.0 + std::pow((x - 3.3) / 0.8, 2)) -
                  0.2 / (1.0 + std::pow((x + 3.3) / 0.8, 2)));
    }
    const auto dips = find_dips(axis, y);
    REQUIRE(dips.size() == 2);
    CHECK(std::abs(dips[0].position + dips[1].position) < spacing / 10.0);
    CHECK(dips[0].position < dips[1].position);
  }
  SUBCASE("monotone data has no dips") {
    const auto axis = linear_grid(0.0, 1.0, 21);
    CHECK(find_dips(axis, axis).empty());
  }
  SUBCASE("too few points") {
    const std::vector<double> x{0, 1, 2, 3}, y{1, 0, 0, 1};
    CHECK_THROWS_AS(find_dips(x, y), InvalidInput);
  }
}

TEST_CASE("dynamics trace follows the interference law") {
  const auto d = fig4_drive();
  const int n_max = static_cast<int>(4.0 * 2.0 * std::sqrt(2.0) * kPi / d.omega_p * d.omega_c /
                                     (2.0 * kPi));
  const auto trace = dynamics_trace(d, n_max, std::nullopt);
  REQUIRE(trace.times.size() == static_cast<std::size_t>(n_max + 1));
  double worst = 0.0;
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    worst = std::max(worst, std::abs(trace.p0[i] -
                                     analytic_interference(d.omega_p, d.omega_c, trace.times[i])));
  }
  CHECK(worst <= 0.05);
  CHECK_FALSE(trace.constraint.empty());
}

TEST_CASE("sweeps") {
  SUBCASE("splitting grows linearly with the coupling") {
    std::vector<double> grid;
    for (int i = 0; i < 5; ++i) grid.push_back(2.0 * kPi * (2.0 + 1.5 * i));
    SweepOptions opt;
    opt.points = 201;
    const auto pts = amplitude_sweep(grid, {14.0, 0.0}, DurationRule::coupling_cycles(20), std::nullopt, opt);
    std::vector<double> x, y;
    for (const auto& p : pts) {
      REQUIRE_FALSE(p.flagged);
      x.push_back(p.omega_c);
      y.push_back(p.splitting);
      const double spacing = 3.0 * p.omega_c * std::sqrt(1.0 + 1.0 / 196.0) / 200.0;
      CHECK(std::abs(p.splitting - ats_splitting({p.omega_c, p.omega_c / 14.0})) < spacing);
    }
    CHECK(fitted_slope(x, y) == doctest::Approx(1.0).epsilon(0.02));
    CHECK_THROWS_AS(amplitude_sweep(std::vector<double>{0.0}, {14.0, 0.0},
                                    DurationRule::coupling_cycles(20), std::nullopt, opt),
                    InvalidInput);
  }
  SUBCASE("resonant coupling gives a symmetric doublet") {
    const auto base = fig4_drive();
    const std::vector<double> dc{0.0, base.omega_c / 2.0};
    SweepOptions opt;
    opt.points = 301;
    const auto pts = detuning_sweep(dc, base, DurationRule::coupling_cycles(20), std::nullopt, opt);
    REQUIRE(pts[0].dips.size() == 2);
    CHECK(std::abs(pts[0].dips[0].depth - pts[0].dips[1].depth) < 1e-3);
    REQUIRE(pts[1].dips.size() == 2);
    CHECK(std::abs(pts[1].dips[0].depth - pts[1].dips[1].depth) > 1e-3);
    const double center = 0.5 * (pts[1].dips[0].position + pts[1].dips[1].position);
    CHECK(center == doctest::Approx(base.omega_c / 4.0).epsilon(0.05));
  }
  SUBCASE("slope of exact line") {
    const std::vector<double> x{0, 1, 2, 3}, y{1, 3, 5, 7};
    CHECK(fitted_slope(x, y) == doctest::Approx(2.0));
  }
}
