#include "atsim/lindblad.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "atsim/error.hpp"

namespace atsim {
namespace {

const Complex kI(0.0, 1.0);

constexpr std::array<std::pair<int, int>, 3> kCoherences{{{0, 1}, {0, 2}, {1, 2}}};

void require_rate(double rate, const char* what) {
  if (!(rate >= 0.0) || !std::isfinite(rate)) {
    std::ostringstream os;
    os << what << " must be finite and >= 0, got " << rate;
    throw InvalidInput(os.str());
  }
}

ComplexMatrix3 dissipator(const ComplexMatrix3& a, const ComplexMatrix3& rho) {
  const ComplexMatrix3 ad = a.adjoint();
  const ComplexMatrix3 ada = ad * a;
  return a * rho * ad - (ada * rho + rho * ada) * 0.5;
}

}  // namespace

std::vector<LindbladOp> make_dephasing(std::span<const LevelRate> levels) {
  std::vector<LindbladOp> ops;
  ops.reserve(levels.size());
  for (const auto& [level, rate] : levels) {
    require_rate(rate, "dephasing rate");
    ops.push_back({ComplexMatrix3::projector(level) * std::sqrt(2.0 * rate),
                   LindbladKind::dephasing});
  }
  return ops;
}

LindbladOp make_relaxation(int from, int to, double rate) {
  require_rate(rate, "relaxation rate");
  if (from == to) throw InvalidInput("relaxation requires distinct levels");
  return {ComplexMatrix3::transition(from, to) * std::sqrt(rate), LindbladKind::relaxation};
}

std::optional<std::array<double, 3>> per_level_dephasing(double gamma1, double gamma2,
                                                         double gamma3) {
  // gamma1 = g0 + g1, gamma2 = g0 + g2, gamma3 = g1 + g2.
  std::array<double, 3> g{0.5 * (gamma1 + gamma2 - gamma3), 0.5 * (gamma1 + gamma3 - gamma2),
                          0.5 * (gamma2 + gamma3 - gamma1)};
  const double scale = std::max({gamma1, gamma2, gamma3, 0.0});
  for (auto& x : g) {
    if (x < -1e-12 * scale) return std::nullopt;
    x = std::max(x, 0.0);
  }
  return g;
}

void DecoherenceParams::validate() const {
  require_rate(gamma1, "gamma1");
  require_rate(gamma2, "gamma2");
  require_rate(gamma3, "gamma3");
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) require_rate(relaxation[i][j], "relaxation rate");
  if (!(contrast >= 0.0 && contrast <= 1.0)) {
    throw InvalidInput("fluorescence contrast must lie in [0, 1]");
  }
}

bool DecoherenceParams::has_relaxation() const {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j && relaxation[i][j] > 0.0) return true;
  return false;
}

bool Dissipation::empty() const {
  const bool ops_zero = std::all_of(ops.begin(), ops.end(),
                                    [](const LindbladOp& op) { return op.matrix.max_abs() == 0.0; });
  return ops_zero && std::all_of(coherence_damping.begin(), coherence_damping.end(),
                                 [](double g) { return g == 0.0; });
}

double Dissipation::slowest_rate() const {
  double slowest = 0.0;
  auto consider = [&](double r) {
    if (r > 0.0 && (slowest == 0.0 || r < slowest)) slowest = r;
  };
  for (const auto& op : ops) {
    const double m = op.matrix.max_abs();
    consider(op.kind == LindbladKind::dephasing ? 0.5 * m * m : m * m);
  }
  for (double g : coherence_damping) consider(g);
  return slowest;
}

Dissipation make_dissipation(const DecoherenceParams& dec) {
  dec.validate();
  Dissipation diss;
  if (auto per_level = per_level_dephasing(dec.gamma1, dec.gamma2, dec.gamma3)) {
    std::vector<LevelRate> levels;
    for (int a = 0; a < 3; ++a) {
      if ((*per_level)[a] > 0.0) levels.push_back({a, (*per_level)[a]});
    }
    diss.ops = make_dephasing(levels);
  } else {
    std::ostringstream os;
    os << "dephasing rates (" << dec.gamma1 << ", " << dec.gamma2 << ", " << dec.gamma3
       << ") have no nonnegative per-level decomposition; applying direct coherence damping,"
       << " which is not completely positive (states may leave the positive cone)";
    warn(os.str());
    diss.coherence_damping = {dec.gamma1, dec.gamma2, dec.gamma3};
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j && dec.relaxation[i][j] > 0.0)
        diss.ops.push_back(make_relaxation(i, j, dec.relaxation[i][j]));
  return diss;
}

ComplexMatrix3 lindblad_rhs(const ComplexMatrix3& rho, const ComplexMatrix3& h,
                            std::span<const LindbladOp> ops) {
  ComplexMatrix3 out = commutator(h, rho) * (-kI);
  for (const auto& op : ops) out += dissipator(op.matrix, rho);
  return out;
}

ComplexMatrix3 lindblad_rhs(const ComplexMatrix3& rho, const ComplexMatrix3& h,
                            const Dissipation& diss) {
  ComplexMatrix3 out = lindblad_rhs(rho, h, std::span<const LindbladOp>(diss.ops));
  for (std::size_t k = 0; k < kCoherences.size(); ++k) {
    const double g = diss.coherence_damping[k];
    if (g == 0.0) continue;
    const auto [i, j] = kCoherences[k];
    out(i, j) -= g * rho(i, j);
    out(j, i) -= g * rho(j, i);
  }
  return out;
}

ComplexMatrix3 lindblad_rhs(const DensityMatrix& rho, const ComplexMatrix3& h,
                            const Dissipation& diss) {
  return lindblad_rhs(rho.rho, h, diss);
}

RealState8 RealState8::from_density(const DensityMatrix& d) {
  if (d.basis != Basis::bare) throw InvalidInput("RealState8 is defined in the bare basis");
  const auto& r = d.rho;
  return {{r(0, 0).real(), r(1, 1).real(), r(0, 1).real(), r(0, 1).imag(), r(0, 2).real(),
           r(0, 2).imag(), r(1, 2).real(), r(1, 2).imag()}};
}

DensityMatrix RealState8::to_density() const {
  DensityMatrix d;
  auto& r = d.rho;
  r(0, 0) = y[0];
  r(1, 1) = y[1];
  r(2, 2) = 1.0 - y[0] - y[1];
  r(0, 1) = {y[2], y[3]};
  r(0, 2) = {y[4], y[5]};
  r(1, 2) = {y[6], y[7]};
  r(1, 0) = std::conj(r(0, 1));
  r(2, 0) = std::conj(r(0, 2));
  r(2, 1) = std::conj(r(1, 2));
  return d;
}

RealState8 real_ode_rhs(const RealState8& s, const DriveParams& d, const DecoherenceParams& dec) {
  d.validate();
  dec.validate();
  if (d.delta_c != 0.0) {
    throw InvalidInput("real_ode_rhs is written for resonant coupling (delta_c = 0)");
  }
  if (dec.has_relaxation()) {
    throw InvalidInput("real_ode_rhs models dephasing only; relaxation rates must be zero");
  }
  const auto& y = s.y;
  const double a = 0.5 * d.omega_c;
  const double b = 0.5 * d.omega_p;
  const double dp = d.delta_p;

  const double r00 = y[0];
  const double r11 = y[1];
  const double r22 = 1.0 - y[0] - y[1];
  const Complex r01{y[2], y[3]};
  const Complex r02{y[4], y[5]};
  const Complex r12{y[6], y[7]};
  const Complex r10 = std::conj(r01);
  const Complex r20 = std::conj(r02);
  const Complex r21 = std::conj(r12);

  const Complex d00 = -kI * (a * (r10 - r01) + b * (r20 - r02));
  const Complex d01 = -kI * (a * (r11 - r00) + b * r21) - dec.gamma1 * r01;
  const Complex d02 = -kI * (a * r12 + b * (r22 - r00) - dp * r02) - dec.gamma2 * r02;
  const Complex d11 = -kI * (a * (r01 - r10));
  const Complex d12 = -kI * (a * r02 - b * r10 - dp * r12) - dec.gamma3 * r12;

  return {{d00.real(), d11.real(), d01.real(), d01.imag(), d02.real(), d02.imag(), d12.real(),
           d12.imag()}};
}

double default_time_step(const ComplexMatrix3& h) {
  const auto es = eig_hermitian(h);
  const double spread = es.values[2] - es.values[0];
  const double norm = std::max(std::abs(es.values[0]), std::abs(es.values[2]));
  double dt = kTwoPi / (50.0 * std::max(spread, 1.0));
  if (norm > 0.0) dt = std::min(dt, 0.1 / norm);
  return dt;
}

double default_time_step(const DriveParams& d) {
  const double fastest =
      std::max({d.omega_c, d.omega_p, std::abs(d.delta_p), std::abs(d.delta_c), 1.0});
  return kTwoPi / (50.0 * fastest);
}

Evolution evolve_rk4(const DensityMatrix& rho0, const ComplexMatrix3& h, const Dissipation& diss,
                     double t_final, const EvolveOptions& options) {
  if (!(t_final >= 0.0) || !std::isfinite(t_final)) {
    throw InvalidInput("evolve_rk4 requires a finite t_final >= 0");
  }
  Evolution out;
  out.final_state = rho0;
  if (options.sample_every > 0) out.trajectory.push_back({0.0, rho0});
  if (t_final == 0.0) return out;

  const double norm = spectral_norm(h);
  double dt = options.dt.value_or(default_time_step(h));
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidInput("evolve_rk4 requires dt > 0");
  dt = std::min(dt, t_final);
  if (dt * norm > 0.1) {
    const double requested = dt;
    while (dt * norm > 0.1) {
      dt *= 0.5;
      if (dt < 1e-7) {
        std::ostringstream os;
        os << "evolve_rk4: step size collapsed below 1e-7 us (||H|| = " << norm << " rad/us)";
        throw NumericalFailure(os.str());
      }
    }
    if (options.dt) {
      std::ostringstream os;
      os << "evolve_rk4: dt = " << requested << " us violates dt*||H|| <= 0.1 (||H|| = " << norm
         << "); using dt = " << dt;
      warn(os.str());
    }
  }
  const long steps = static_cast<long>(std::ceil(t_final / dt - 1e-9));
  dt = t_final / static_cast<double>(steps);
  out.dt = dt;
  out.steps = steps;

  auto f = [&](const ComplexMatrix3& rho) { return lindblad_rhs(rho, h, diss); };
  ComplexMatrix3 rho = rho0.rho;
  for (long n = 1; n <= steps; ++n) {
    const ComplexMatrix3 k1 = f(rho);
    const ComplexMatrix3 k2 = f(rho + k1 * (0.5 * dt));
    const ComplexMatrix3 k3 = f(rho + k2 * (0.5 * dt));
    const ComplexMatrix3 k4 = f(rho + k3 * dt);
    rho += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    if (options.sample_every > 0 && (n % options.sample_every == 0 || n == steps)) {
      out.trajectory.push_back({static_cast<double>(n) * dt, {rho, rho0.basis}});
    }
  }
  out.final_state = {rho, rho0.basis};
  return out;
}

namespace {

// Real coordinates of a Hermitian matrix:
// (rho00, rho11, rho22, Re rho01, Im rho01, Re rho02, Im rho02, Re rho12, Im rho12).
using Vec9 = Eigen::Matrix<double, 9, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;

Vec9 coordinates(const ComplexMatrix3& m) {
  Vec9 x;
  x << m(0, 0).real(), m(1, 1).real(), m(2, 2).real(), m(0, 1).real(), m(0, 1).imag(),
      m(0, 2).real(), m(0, 2).imag(), m(1, 2).real(), m(1, 2).imag();
  return x;
}

ComplexMatrix3 from_coordinates(const Vec9& x) {
  ComplexMatrix3 m;
  m(0, 0) = x(0);
  m(1, 1) = x(1);
  m(2, 2) = x(2);
  m(0, 1) = {x(3), x(4)};
  m(0, 2) = {x(5), x(6)};
  m(1, 2) = {x(7), x(8)};
  m(1, 0) = std::conj(m(0, 1));
  m(2, 0) = std::conj(m(0, 2));
  m(2, 1) = std::conj(m(1, 2));
  return m;
}

double residual_norm(const ComplexMatrix3& rho, const ComplexMatrix3& h, const Dissipation& diss) {
  return lindblad_rhs(rho, h, diss).max_abs();
}

}  // namespace

DensityMatrix steady_state(const ComplexMatrix3& h, const Dissipation& diss,
                           const std::optional<DensityMatrix>& rho0) {
  Mat9 a;
  for (int j = 0; j < 9; ++j) {
    Vec9 e = Vec9::Zero();
    e(j) = 1.0;
    a.col(j) = coordinates(lindblad_rhs(from_coordinates(e), h, diss));
  }
  // The population equations sum to zero; the first is replaced by tr rho = 1.
  a.row(0).setZero();
  a(0, 0) = a(0, 1) = a(0, 2) = 1.0;
  Vec9 rhs = Vec9::Zero();
  rhs(0) = 1.0;

  Eigen::FullPivLU<Mat9> lu(a);
  lu.setThreshold(1e-12);
  const int rank = static_cast<int>(lu.rank());

  if (diss.empty()) {
    std::ostringstream os;
    os << "steady_state: no dissipation, stationary states are not unique (rank " << rank
       << " of 9, defect " << 9 - rank << ")";
    throw NumericalFailure(os.str());
  }

  double condition = std::numeric_limits<double>::infinity();
  if (rank == 9) {
    const Mat9 inv = lu.inverse();
    condition = a.cwiseAbs().colwise().sum().maxCoeff() * inv.cwiseAbs().colwise().sum().maxCoeff();
  }

  if (rank == 9 && condition <= 1e12) {
    const Vec9 x = lu.solve(rhs);
    DensityMatrix out{from_coordinates(x), Basis::bare};
    const double res = residual_norm(out.rho, h, diss);
    if (res < 1e-10) return out;
    std::ostringstream os;
    os << "steady_state: direct solve residual " << res << " exceeds 1e-10";
    warn(os.str());
  }

  // Fallback: integrate to long times from the initial state.
  const DensityMatrix start = rho0.value_or(DensityMatrix::pure(StateVector3::basis_state(0)));
  const double chunk = 50.0 / diss.slowest_rate();
  DensityMatrix rho = start;
  double res = residual_norm(rho.rho, h, diss);
  for (int pass = 0; pass < 8 && res >= 1e-10; ++pass) {
    rho = evolve_rk4(rho, h, diss, chunk).final_state;
    res = residual_norm(rho.rho, h, diss);
  }
  if (res >= 1e-10) {
    std::ostringstream os;
    os << "steady_state: linear system rank " << rank << " of 9 (defect " << 9 - rank
       << ", condition " << condition << ") and long-time integration did not settle (residual "
       << res << ")";
    throw NumericalFailure(os.str());
  }
  return rho;
}

}  // namespace atsim
