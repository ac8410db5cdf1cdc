#include <doctest.h>

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "atsim/error.hpp"
#include "atsim/linalg.hpp"
#include "atsim/model.hpp"
#include "support.hpp"

using namespace atsim;
using testing::kPi;

namespace {

void check_same_spectrum(const ComplexMatrix3& a, const ComplexMatrix3& b, double tol) {
  const auto ea = testing::oracle_spectrum(a);
  const auto eb = testing::oracle_spectrum(b);
  for (int k = 0; k < 3; ++k) CHECK(std::abs(ea[k] - eb[k]) < tol);
}

struct WarningCapture {
  std::vector<std::string> messages;
  WarningSink previous;
  WarningCapture() {
    previous = set_warning_sink([this](std::string_view m) { messages.emplace_back(m); });
  }
  ~WarningCapture() { set_warning_sink(previous); }
};

}  // namespace

TEST_CASE("transition frequencies") {
  SUBCASE("zero field") {
    const auto f = transition_frequencies({});
    CHECK(f.omega_01_ghz == doctest::Approx(2.87));
    CHECK(f.omega_02_ghz == doctest::Approx(2.87));
  }
  SUBCASE("51 mT agrees with the measured lines") {
    GroundStateParams p;
    p.b_z_tesla = 0.051;
    const auto f = transition_frequencies(p);
    CHECK(f.omega_01_ghz == doctest::Approx(2.87 - 28.03 * 0.051).epsilon(1e-12));
    CHECK(f.omega_02_ghz == doctest::Approx(2.87 + 28.03 * 0.051).epsilon(1e-12));
    CHECK(std::abs(f.omega_01_ghz / 1.43398 - 1.0) < 5e-3);
    CHECK(std::abs(f.omega_02_ghz / 4.30738 - 1.0) < 5e-3);
  }
  SUBCASE("level crossing") {
    const auto f = transition_frequencies({1.0, 1.0, 1.0});
    CHECK(std::abs(f.omega_01_ghz) < 1e-15);
    CHECK(f.omega_02_ghz == doctest::Approx(2.0));
  }
}

TEST_CASE("drive parameter validation") {
  DriveParams d;
  d.omega_c = -1.0;
  CHECK_THROWS_AS(d.validate(), InvalidInput);
  d.omega_c = std::nan("");
  CHECK_THROWS_AS(rotating_frame_hamiltonian(d), InvalidInput);
}

TEST_CASE("rotating-frame Hamiltonian") {
  SUBCASE("no drive is diagonal") {
    const auto h = rotating_frame_hamiltonian({0.0, 0.0, 1.5, -2.5});
    CHECK(h == ComplexMatrix3::diagonal(0.0, 1.5, -2.5));
  }
  SUBCASE("phase-free matrix is real symmetric") {
    const double oc = 2.0 * kPi * 4.73;
    const auto h = rotating_frame_hamiltonian({oc, oc / 14.0, 0.3, -0.7});
    CHECK(h(0, 1) == Complex(oc / 2.0));
    CHECK(h(1, 0) == Complex(oc / 2.0));
    CHECK(h(0, 2) == Complex(oc / 28.0));
    CHECK(h(2, 0) == Complex(oc / 28.0));
    CHECK(h(1, 2) == Complex(0.0));
    CHECK(h(1, 1) == Complex(0.3));
    CHECK(h(2, 2) == Complex(-0.7));
  }
  SUBCASE("drive phases do not change populations") {
    const double oc = 2.0 * kPi * 4.73;
    DriveParams d{oc, oc / 14.0, 0.4, oc / 2.0};
    DriveParams phased = d;
    phased.phi_c = 0.9;
    phased.phi_p = -2.1;
    const auto psi0 = StateVector3::basis_state(0);
    for (double t : {0.3, 1.7, 12.0}) {
      const auto a = apply(propagator(rotating_frame_hamiltonian(d), t), psi0);
      const auto b = apply(propagator(rotating_frame_hamiltonian(phased), t), psi0);
      for (int k = 0; k < 3; ++k) CHECK(std::abs(std::norm(a[k]) - std::norm(b[k])) < 1e-12);
    }
  }
  SUBCASE("phase gauge removes the phases") {
    DriveParams d{3.0, 1.0, 0.5, -0.2, 0.7, 2.3};
    const auto v = phase_gauge(d);
    DriveParams plain = d;
    plain.phi_c = plain.phi_p = 0.0;
    const auto gauged = v.adjoint() * rotating_frame_hamiltonian(d) * v;
    CHECK(max_abs_diff(gauged, rotating_frame_hamiltonian(plain)) < 1e-12);
  }
}

TEST_CASE("resonant dressed Hamiltonian") {
  SUBCASE("no probe gives the bare doublet") {
    const auto h = dressed_hamiltonian({6.0, 0.0, 0.0, 1.25});
    CHECK(max_abs_diff(h, ComplexMatrix3::diagonal(3.0, -3.0, 1.25)) < 1e-15);
  }
  SUBCASE("same spectrum as the bare frame") {
    const DriveParams d{10.0, 1.0, 0.0, 3.0};
    check_same_spectrum(dressed_hamiltonian(d), rotating_frame_hamiltonian(d), 1e-12);
  }
  SUBCASE("no drive gives the zero matrix") {
    CHECK(dressed_hamiltonian({}).max_abs() == 0.0);
  }
  SUBCASE("coupling detuning is rejected") {
    CHECK_THROWS_AS(dressed_hamiltonian({1.0, 0.1, 0.2, 0.0}), InvalidInput);
  }
}

TEST_CASE("effective two-level Hamiltonian") {
  const double oc = 2.0 * kPi * 4.73;
  const double op = oc / 14.0;
  const double shift = op * op / (8.0 * oc);

  CHECK(branch_resonance({oc, op}, Branch::plus) == doctest::Approx(oc / 2.0 - shift));
  CHECK(branch_resonance({oc, op}, Branch::minus) == doctest::Approx(-oc / 2.0 + shift));

  SUBCASE("weak probe limit is diagonal") {
    const auto h = effective_two_level({oc, 0.0, 0.0, 0.8}, Branch::plus);
    CHECK(max_abs_diff(h, ComplexMatrix3::diagonal(oc / 2.0, -oc / 2.0, 0.8)) < 1e-12);
  }
  SUBCASE("resonant branch is degenerate with |2>") {
    for (Branch b : {Branch::plus, Branch::minus}) {
      const DriveParams d{oc, op, 0.0, branch_resonance({oc, op}, b)};
      const auto h = effective_two_level(d, b);
      const int level = b == Branch::plus ? 0 : 1;
      CHECK(std::abs(h(level, level) - h(2, 2)) < 1e-12);
    }
  }
  SUBCASE("tracks the exact spectrum near resonance") {
    const DriveParams d{oc, op, 0.0, branch_resonance({oc, op}, Branch::plus)};
    const auto exact = testing::oracle_spectrum(rotating_frame_hamiltonian(d));
    const auto approx = testing::oracle_spectrum(effective_two_level(d, Branch::plus));
    for (int k = 0; k < 3; ++k) CHECK(std::abs(exact[k] - approx[k]) < 1e-3 * oc);
  }
  SUBCASE("strong probe warns") {
    WarningCapture capture;
    effective_two_level({1.0, 0.5}, Branch::plus);
    CHECK(capture.messages.size() == 1);
  }
  SUBCASE("preconditions") {
    CHECK_THROWS_AS(effective_two_level({0.0, 0.1}, Branch::plus), InvalidInput);
    CHECK_THROWS_AS(effective_two_level({1.0, 0.1, 0.2}, Branch::plus), InvalidInput);
  }
}

TEST_CASE("non-resonant dressed Hamiltonian") {
  SUBCASE("reduces to the resonant case") {
    const DriveParams d{10.0, 1.0, 0.0, 3.0};
    CHECK(max_abs_diff(nonresonant_dressed(d).hamiltonian, dressed_hamiltonian(d)) < 1e-12);
  }
  SUBCASE("exact conjugation keeps the spectrum") {
    const DriveParams d{10.0, 1.0, 3.0, 2.0};
    check_same_spectrum(nonresonant_dressed(d).hamiltonian, rotating_frame_hamiltonian(d), 1e-12);
  }
  SUBCASE("matrix elements match the closed form") {
    const double oc = 10.0, op = 1.0, dc = 3.0, dp = 2.0;
    const auto h = nonresonant_dressed({oc, op, dc, dp}).hamiltonian;
    const double s = std::hypot(oc, dc);
    CHECK(std::abs(h(0, 0) - (dc + s) / 2.0) < 1e-10);
    CHECK(std::abs(h(1, 1) - (dc - s) / 2.0) < 1e-10);
    CHECK(std::abs(h(0, 1)) < 1e-10);
    CHECK(std::abs(h(0, 2) - oc * op / (2.0 * std::sqrt(2.0 * s * s + 2.0 * dc * s))) < 1e-10);
    CHECK(std::abs(h(1, 2) - oc * op / (2.0 * std::sqrt(2.0 * s * s - 2.0 * dc * s))) < 1e-10);
    CHECK(std::abs(h(2, 2) - dp) < 1e-10);
  }
  SUBCASE("basis is orthonormal with phases") {
    const auto basis = dressed_basis({4.0, 1.0, -1.5, 0.0, 0.4, 1.1});
    CHECK(unitarity_error(basis.matrix()) < 1e-14);
    CHECK_THROWS_AS(dressed_basis({}), InvalidInput);
  }
}

TEST_CASE("ATS splitting") {
  CHECK(ats_splitting({3.0, 0.0}) == doctest::Approx(3.0));
  CHECK(ats_splitting({3.0, 0.5, 4.0}) == doctest::Approx(5.0));
  const double oc = 2.0 * kPi * 4.73;
  CHECK(std::abs(ats_splitting({oc, oc / 14.0}) - oc * (1.0 - 1.0 / 784.0)) < 1e-12);
  CHECK_THROWS_AS(ats_splitting({0.0, 1.0}), InvalidInput);
}

TEST_CASE("detuned dressed energies") {
  const auto resonant = eigenenergies_detuned({2.0, 0.1}, 100.0);
  CHECK(resonant.e_plus == doctest::Approx(101.0));
  CHECK(resonant.e_minus == doctest::Approx(99.0));
  const auto equal = eigenenergies_detuned({2.0, 0.1, 2.0}, 0.0);
  CHECK(equal.e_plus - equal.e_minus == doctest::Approx(2.0 * std::sqrt(2.0)));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-20.0, 20.0);
  for (int n = 0; n < 50; ++n) {
    const DriveParams d{std::abs(u(rng)), 1.0, u(rng)};
    const auto e = eigenenergies_detuned(d, u(rng));
    CHECK(e.e_plus - e.e_minus == doctest::Approx(d.omega_eff()).epsilon(1e-13));
  }
}
