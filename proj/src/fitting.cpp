#include "atsim/fitting.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "atsim/error.hpp"

namespace atsim {
namespace {

constexpr double kPi = std::numbers::pi;

constexpr std::array<std::string_view, 6> kCos4Names{"a", "T", "k", "t_c", "b", "w"};
constexpr std::array<std::string_view, 4> kRamseyNames{"a", "T2", "omega", "b"};
constexpr std::array<std::string_view, 5> kRabiNames{"a", "T", "x_c", "w", "b"};
constexpr std::array<std::string_view, 3> kExpNames{"a", "T1", "b"};

constexpr int kContinuationStages = 8;

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

struct Problem {
  FitModelId model;
  std::span<const DataPoint> data;
  std::vector<double> weights;  // 1/sigma
  std::vector<int> free;        // indices of free parameters
  std::vector<double> lower, upper;
};

Vec residuals(const Problem& p, const std::vector<double>& theta) {
  Vec r(static_cast<Eigen::Index>(p.data.size()));
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    r(i) = (p.data[i].y - evaluate_model(p.model, p.data[i].t, theta)) * p.weights[i];
  }
  return r;
}

double sum_squares(const Vec& r) {
  const double s = r.squaredNorm();
  return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
}

// d model / d theta_free, weighted, by central differences.
Mat jacobian(const Problem& p, const std::vector<double>& theta) {
  Mat j(static_cast<Eigen::Index>(p.data.size()), static_cast<Eigen::Index>(p.free.size()));
  for (std::size_t c = 0; c < p.free.size(); ++c) {
    const int idx = p.free[c];
    const double h = 6e-6 * std::max(std::abs(theta[idx]), 1e-3);
    auto up = theta;
    auto down = theta;
    up[idx] += h;
    down[idx] -= h;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double fu = evaluate_model(p.model, p.data[i].t, up);
      const double fd = evaluate_model(p.model, p.data[i].t, down);
      j(i, c) = (fu - fd) / (2.0 * h) * p.weights[i];
    }
  }
  return j;
}

// Throws when the normal matrix has a (numerically) null direction.
void require_nonsingular(const Problem& p, const Mat& jtj) {
  const auto names = parameter_names(p.model);
  const Eigen::Index n = jtj.rows();
  Vec scale(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(jtj(i, i) > 0.0) || !std::isfinite(jtj(i, i))) {
      std::ostringstream os;
      os << "fit: singular normal matrix, the model does not depend on parameter '"
         << names[p.free[i]] << "'";
      throw NumericalFailure(os.str());
    }
    scale(i) = 1.0 / std::sqrt(jtj(i, i));
  }
  const Mat corr = scale.asDiagonal() * jtj * scale.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Mat> es(corr);
  const double lo = es.eigenvalues()(0);
  const double hi = es.eigenvalues()(n - 1);
  if (lo <= 1e-12 * hi) {
    Eigen::Index worst = 0;
    es.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
    std::ostringstream os;
    os << "fit: singular normal matrix (eigenvalue ratio " << lo / hi
       << "), degenerate direction dominated by parameter '" << names[p.free[worst]] << "'";
    throw NumericalFailure(os.str());
  }
}

void project(const Problem& p, std::vector<double>& theta) {
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] = std::clamp(theta[i], p.lower[i], p.upper[i]);
  }
}

struct Run {
  std::vector<double> theta;
  double ssr = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<double> history;
};

Run levenberg_marquardt(const Problem& p, std::vector<double> theta, int max_iterations) {
  project(p, theta);
  Run run;
  Vec r = residuals(p, theta);
  double ssr = sum_squares(r);
  if (!std::isfinite(ssr)) throw NumericalFailure("fit: model is not finite at the initial point");
  run.history.push_back(ssr);

  Mat j = jacobian(p, theta);
  require_nonsingular(p, j.transpose() * j);

  double lambda = 1e-3;
  int it = 0;
  bool done = ssr == 0.0;
  bool converged = done;
  while (!done && it < max_iterations) {
    ++it;
    const Mat jtj = j.transpose() * j;
    const Vec g = j.transpose() * r;
    if (g.cwiseAbs().maxCoeff() < 1e-8) {
      converged = true;
      break;
    }
    bool accepted = false;
    while (!accepted) {
      Mat a = jtj;
      a.diagonal() += lambda * jtj.diagonal();
      const Vec step = a.ldlt().solve(g);
      auto trial = theta;
      for (std::size_t c = 0; c < p.free.size(); ++c) trial[p.free[c]] += step(c);
      project(p, trial);
      const Vec r_trial = residuals(p, trial);
      const double ssr_trial = sum_squares(r_trial);
      if (ssr_trial < ssr) {
        const double rel = (ssr - ssr_trial) / ssr;
        theta = trial;
        r = r_trial;
        ssr = ssr_trial;
        run.history.push_back(ssr);
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        if (rel < 1e-10 || ssr == 0.0) {
          converged = true;
          done = true;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e16) {
          // No descent direction left at working precision.
          converged = true;
          done = true;
          break;
        }
      }
    }
    if (!done) j = jacobian(p, theta);
  }
  run.theta = theta;
  run.ssr = ssr;
  run.converged = converged;
  run.iterations = it;
  return run;
}

// Envelope parameters, which a short window cannot pin down.
std::vector<int> envelope_indices(FitModelId model) {
  switch (model) {
    case FitModelId::damped_cos4: return {1, 2};
    case FitModelId::gaussian_ramsey: return {1};
    case FitModelId::damped_rabi: return {1};
    case FitModelId::exp_decay: return {};
  }
  return {};
}

// Offset parameter and its period for models with a free phase origin.
struct Offset {
  int index = -1;
  double period = 0.0;
};

Offset phase_offset(FitModelId model, const std::vector<double>& th) {
  switch (model) {
    case FitModelId::damped_cos4: return {3, kPi / std::abs(th[5])};
    case FitModelId::damped_rabi: return {2, 2.0 * std::abs(th[3])};
    case FitModelId::gaussian_ramsey:
    case FitModelId::exp_decay: return {};
  }
  return {};
}

constexpr int kPhaseCandidates = 16;

// Oscillatory models have a narrow basin in frequency: a start that is off by
// a fraction of a period over the whole record lands in a wrong minimum. Fitting
// a growing prefix of the (time-ordered) record keeps the accumulated phase
// error small at every stage, so each stage starts inside the next basin. The
// envelope is held during the prefix stages and released for the final fit.
// A start whose offset is close to half a period out of phase can still be
// pulled into a neighbouring frequency basin by a short noisy window, so the
// first window picks the offset from evenly spaced copies across one period,
// fitting only the amplitude and baseline for each (amplitude sign kept).
Run windowed_continuation(const Problem& p, std::vector<double> theta, int max_iterations,
                          int stages) {
  const auto envelope = envelope_indices(p.model);
  std::vector<int> fast;
  for (int idx : p.free) {
    if (std::find(envelope.begin(), envelope.end(), idx) == envelope.end()) fast.push_back(idx);
  }
  std::vector<std::size_t> order(p.data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return p.data[a].t < p.data[b].t; });
  std::vector<DataPoint> sorted;
  std::vector<double> weights;
  for (std::size_t i : order) {
    sorted.push_back(p.data[i]);
    weights.push_back(p.weights[i]);
  }
  const auto is_free = [&](int idx) {
    return std::find(p.free.begin(), p.free.end(), idx) != p.free.end();
  };
  // Amplitude and baseline; the baseline is last except in damped_cos4.
  const int baseline = p.model == FitModelId::damped_cos4 ? 4 : static_cast<int>(theta.size()) - 1;
  std::vector<int> linear;
  for (int idx : {0, baseline}) {
    if (is_free(idx)) linear.push_back(idx);
  }

  const std::size_t min_points = fast.size() + 2;
  bool phased = false;
  for (int s = 1; s < stages && !fast.empty(); ++s) {
    const std::size_t n = sorted.size() * static_cast<std::size_t>(s) / static_cast<std::size_t>(stages);
    if (n < min_points) continue;
    Problem sub = p;
    sub.data = std::span<const DataPoint>(sorted.data(), n);
    sub.weights.assign(weights.begin(), weights.begin() + static_cast<std::ptrdiff_t>(n));
    const Offset offset = phase_offset(p.model, theta);
    if (!phased && offset.index >= 0 && is_free(offset.index) && std::isfinite(offset.period)) {
      phased = true;
      sub.free = linear;
      double best_ssr = std::numeric_limits<double>::infinity();
      std::vector<double> best = theta;
      for (int c = 0; c < kPhaseCandidates; ++c) {
        auto candidate = theta;
        candidate[offset.index] += offset.period * c / kPhaseCandidates;
        try {
          const Run r = sub.free.empty() ? Run{candidate, sum_squares(residuals(sub, candidate))}
                                         : levenberg_marquardt(sub, candidate, max_iterations);
          // An inverted amplitude matches troughs to peaks; keep the starting sign.
          if (r.theta[0] * theta[0] > 0.0 && r.ssr < best_ssr) {
            best_ssr = r.ssr;
            best = r.theta;
          }
        } catch (const NumericalFailure&) {
          // Candidate with no signal in the window; the others still count.
        }
      }
      theta = best;
    }
    sub.free = fast;
    try {
      theta = levenberg_marquardt(sub, theta, max_iterations).theta;
    } catch (const NumericalFailure&) {
      // The prefix may not constrain every parameter yet; carry on with the longer one.
    }
  }
  return levenberg_marquardt(p, theta, max_iterations);
}

// Folds parameters whose sign or period does not change the model.
// Offsets are only defined modulo the oscillation period; report the copy
// nearest the starting guess.
double nearest_equivalent(double offset, double period, double reference) {
  return offset - period * std::round((offset - reference) / period);
}

void canonicalize(FitModelId model, std::vector<double>& th, const std::vector<double>& init) {
  switch (model) {
    case FitModelId::damped_cos4:
      th[5] = std::abs(th[5]);
      if (th[5] > 0.0) th[3] = nearest_equivalent(th[3], kPi / th[5], init[3]);
      break;
    case FitModelId::gaussian_ramsey:
      th[1] = std::abs(th[1]);
      th[2] = std::abs(th[2]);
      break;
    case FitModelId::damped_rabi:
      th[1] = std::abs(th[1]);
      th[3] = std::abs(th[3]);
      // a cos(x) = -a cos(x - pi): a half-period shift flips the amplitude sign.
      if (th[0] * init[0] < 0.0) {
        th[0] = -th[0];
        th[2] += th[3];
      }
      if (th[3] > 0.0) th[2] = nearest_equivalent(th[2], 2.0 * th[3], init[2]);
      break;
    case FitModelId::exp_decay:
      break;
  }
}

ParamMap derived_frequencies(FitModelId model, const std::vector<double>& th) {
  switch (model) {
    case FitModelId::damped_cos4:
      return {{"w_mhz", th[5] / (2.0 * kPi)}, {"envelope_angular_frequency", 2.0 * th[5]}};
    case FitModelId::gaussian_ramsey:
      return {{"omega_rad_per_us", 2.0 * kPi * th[2]}};
    case FitModelId::damped_rabi:
      return {{"angular_frequency", kPi / th[3]}, {"frequency_mhz", 1.0 / (2.0 * th[3])}};
    case FitModelId::exp_decay:
      return {};
  }
  return {};
}

}  // namespace

std::string_view to_string(FitModelId id) {
  switch (id) {
    case FitModelId::damped_cos4: return "damped_cos4";
    case FitModelId::gaussian_ramsey: return "gaussian_ramsey";
    case FitModelId::damped_rabi: return "damped_rabi";
    case FitModelId::exp_decay: return "exp_decay";
  }
  return "unknown";
}

FitModelId fit_model_from_string(std::string_view name) {
  for (auto id : {FitModelId::damped_cos4, FitModelId::gaussian_ramsey, FitModelId::damped_rabi,
                  FitModelId::exp_decay}) {
    if (to_string(id) == name) return id;
  }
  throw InvalidInput("unknown fit model '" + std::string(name) + "'");
}

std::span<const std::string_view> parameter_names(FitModelId id) {
  switch (id) {
    case FitModelId::damped_cos4: return kCos4Names;
    case FitModelId::gaussian_ramsey: return kRamseyNames;
    case FitModelId::damped_rabi: return kRabiNames;
    case FitModelId::exp_decay: return kExpNames;
  }
  return {};
}

double evaluate_model(FitModelId id, double t, std::span<const double> p) {
  switch (id) {
    case FitModelId::damped_cos4: {
      const double c = std::cos(p[5] * (t - p[3]));
      const double c2 = c * c;
      return p[0] * std::exp(-std::pow(std::abs(t) / p[1], p[2])) * c2 * c2 + p[4];
    }
    case FitModelId::gaussian_ramsey: {
      const double x = t / p[1];
      return p[0] * std::exp(-x * x) * std::cos(2.0 * kPi * p[2] * t) + p[3];
    }
    case FitModelId::damped_rabi: {
      const double x = t / p[1];
      return p[0] * std::exp(-x * x) * std::cos(kPi * (t - p[2]) / p[3]) + p[4];
    }
    case FitModelId::exp_decay:
      return p[0] * std::exp(-t / p[1]) + p[2];
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::vector<DataPoint> generate(FitModelId model, std::span<const double> times,
                                const ParamMap& params) {
  const auto names = parameter_names(model);
  std::vector<double> th;
  for (auto n : names) {
    auto it = params.find(std::string(n));
    if (it == params.end()) throw InvalidInput("missing parameter '" + std::string(n) + "'");
    th.push_back(it->second);
  }
  std::vector<DataPoint> out;
  out.reserve(times.size());
  for (double t : times) out.push_back({t, evaluate_model(model, t, th)});
  return out;
}

FitResult fit(FitModelId model, std::span<const DataPoint> data, const ParamMap& init,
              const FitOptions& options) {
  const auto names = parameter_names(model);
  const std::size_t np = names.size();

  Problem p{model, data, {}, {}, {}, {}};
  std::vector<double> theta;
  for (auto n : names) {
    auto it = init.find(std::string(n));
    if (it == init.end()) throw InvalidInput("fit: missing initial value for '" + std::string(n) + "'");
    if (!std::isfinite(it->second)) throw InvalidInput("fit: initial value for '" + std::string(n) + "' is not finite");
    theta.push_back(it->second);
  }
  for (const auto& [name, _] : init) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw InvalidInput("fit: '" + name + "' is not a parameter of " + std::string(to_string(model)));
    }
  }

  p.lower.assign(np, -std::numeric_limits<double>::infinity());
  p.upper.assign(np, std::numeric_limits<double>::infinity());
  if (model == FitModelId::damped_cos4) {
    p.lower[2] = 0.5;
    p.upper[2] = 4.0;
  }
  for (const auto& [name, range] : options.bounds) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) throw InvalidInput("fit: bound on unknown parameter '" + name + "'");
    if (!(range.first <= range.second)) throw InvalidInput("fit: empty bound for '" + name + "'");
    const auto idx = static_cast<std::size_t>(it - names.begin());
    p.lower[idx] = range.first;
    p.upper[idx] = range.second;
  }
  for (std::size_t i = 0; i < np; ++i) {
    if (!options.fixed.contains(std::string(names[i]))) p.free.push_back(static_cast<int>(i));
  }
  for (const auto& name : options.fixed) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw InvalidInput("fit: cannot fix unknown parameter '" + name + "'");
    }
  }
  if (p.free.empty()) throw InvalidInput("fit: every parameter is fixed");
  if (data.size() < np + 2) {
    std::ostringstream os;
    os << "fit: " << to_string(model) << " needs at least " << np + 2 << " data points, got "
       << data.size();
    throw InvalidInput(os.str());
  }
  if (!options.sigma.empty() && options.sigma.size() != data.size()) {
    throw InvalidInput("fit: sigma must match the data length");
  }
  p.weights.assign(data.size(), 1.0);
  for (std::size_t i = 0; i < options.sigma.size(); ++i) {
    if (!(options.sigma[i] > 0.0)) throw InvalidInput("fit: sigma values must be > 0");
    p.weights[i] = 1.0 / options.sigma[i];
  }

  Run best;
  std::optional<NumericalFailure> direct_failure;
  try {
    best = levenberg_marquardt(p, theta, options.max_iterations);
  } catch (const NumericalFailure& e) {
    direct_failure = e;
    best.ssr = std::numeric_limits<double>::infinity();
  }
  if (model != FitModelId::exp_decay) {
    try {
      Run staged = windowed_continuation(p, theta, options.max_iterations, kContinuationStages);
      if (staged.ssr < best.ssr) best = std::move(staged);
    } catch (const NumericalFailure&) {
      if (direct_failure) throw;
    }
  }
  if (!std::isfinite(best.ssr)) throw *direct_failure;
  if (options.multi_start > 0) {
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> u(-0.2, 0.2);
    for (int s = 0; s < options.multi_start; ++s) {
      auto start = theta;
      for (int idx : p.free) start[idx] *= 1.0 + u(rng);
      try {
        Run candidate = levenberg_marquardt(p, start, options.max_iterations);
        if (candidate.ssr < best.ssr) best = std::move(candidate);
      } catch (const NumericalFailure&) {
        // A perturbed start may land on a degenerate point; the others still count.
      }
    }
  }

  canonicalize(model, best.theta, theta);

  FitResult out;
  out.model = model;
  out.sum_squares = best.ssr;
  out.residual_norm = std::sqrt(best.ssr);
  out.converged = best.converged && std::isfinite(best.ssr);
  out.iterations = best.iterations;
  out.history = best.history;
  for (std::size_t i = 0; i < np; ++i) {
    out.params[std::string(names[i])] = best.theta[i];
    out.std_errors[std::string(names[i])] = 0.0;
  }

  const Mat j = jacobian(p, best.theta);
  const Mat jtj = j.transpose() * j;
  require_nonsingular(p, jtj);
  const auto dof = static_cast<double>(data.size() - p.free.size());
  const double s2 = best.ssr / dof;
  const Mat cov = jtj.inverse() * s2;
  for (std::size_t c = 0; c < p.free.size(); ++c) {
    out.std_errors[std::string(names[p.free[c]])] = std::sqrt(std::max(cov(c, c), 0.0));
  }
  out.derived = derived_frequencies(model, best.theta);
  return out;
}

double dominant_angular_frequency(std::span<const DataPoint> data) {
  if (data.size() < 4) throw InvalidInput("periodogram needs at least 4 points");
  const double span = data.back().t - data.front().t;
  if (!(span > 0.0)) throw InvalidInput("periodogram needs increasing times");
  double mean = 0.0;
  for (const auto& d : data) mean += d.y;
  mean /= static_cast<double>(data.size());

  const double spacing = span / static_cast<double>(data.size() - 1);
  const double w_min = 2.0 * kPi / span;
  const double w_max = kPi / spacing;
  const double dw = w_min / 4.0;
  double best_w = w_min;
  double best_power = -1.0;
  for (double w = w_min; w <= w_max; w += dw) {
    std::complex<double> s = 0.0;
    for (const auto& d : data) s += (d.y - mean) * std::polar(1.0, -w * d.t);
    const double power = std::norm(s);
    if (power > best_power) {
      best_power = power;
      best_w = w;
    }
  }
  return best_w;
}

ParamMap default_init(FitModelId model, std::span<const DataPoint> data) {
  if (data.size() < 4) throw InvalidInput("default_init needs at least 4 points");
  const auto [lo_it, hi_it] = std::minmax_element(
      data.begin(), data.end(), [](const DataPoint& a, const DataPoint& b) { return a.y < b.y; });
  const double y_min = lo_it->y;
  const double y_max = hi_it->y;
  if (!(y_max - y_min >= 1e-12)) throw InvalidInput("default_init: data are flat (range < 1e-12)");

  const std::size_t decile = std::max<std::size_t>(1, data.size() / 10);
  double tail = 0.0;
  for (std::size_t i = data.size() - decile; i < data.size(); ++i) tail += data[i].y;
  tail /= static_cast<double>(decile);

  const double t0 = data.front().t;
  const double span = data.back().t - t0;

  auto decay_time = [&](double baseline) {
    std::vector<double> env(data.size());
    double running = 0.0;
    for (std::size_t i = data.size(); i-- > 0;) {
      running = std::max(running, std::abs(data[i].y - baseline));
      env[i] = running;
    }
    const double target = env.front() / std::numbers::e;
    for (std::size_t i = 0; i < env.size(); ++i) {
      if (env[i] < target) return std::max(data[i].t - t0, 1e-3 * span);
    }
    return 2.0 * span;
  };

  auto phase_at = [&](double w) {
    double mean = 0.0;
    for (const auto& d : data) mean += d.y;
    mean /= static_cast<double>(data.size());
    std::complex<double> s = 0.0;
    for (const auto& d : data) s += (d.y - mean) * std::polar(1.0, -w * d.t);
    return -std::arg(s);
  };
  auto wrap = [](double x, double period) { return x - period * std::floor(x / period); };

  switch (model) {
    case FitModelId::damped_cos4: {
      const double w_peak = dominant_angular_frequency(data);
      const double w = 0.5 * w_peak;
      const double tc = wrap(phase_at(w_peak) / w_peak, kPi / w);
      return {{"a", y_max - y_min}, {"T", decay_time(y_min)}, {"k", 1.5},
              {"t_c", tc},          {"b", y_min},             {"w", w}};
    }
    case FitModelId::gaussian_ramsey: {
      const double w_peak = dominant_angular_frequency(data);
      const double first = data.front().y - tail;
      return {{"a", std::abs(first) > 0.0 ? first : 0.5 * (y_max - y_min)},
              {"T2", decay_time(tail)},
              {"omega", w_peak / (2.0 * kPi)},
              {"b", tail}};
    }
    case FitModelId::damped_rabi: {
      const double w_peak = dominant_angular_frequency(data);
      const double xc = wrap(phase_at(w_peak) / w_peak, 2.0 * kPi / w_peak);
      return {{"a", 0.5 * (y_max - y_min)},
              {"T", decay_time(tail)},
              {"x_c", xc},
              {"w", kPi / w_peak},
              {"b", tail}};
    }
    case FitModelId::exp_decay: {
      const auto peak = std::max_element(data.begin(), data.end(), [&](const auto& a, const auto& b) {
        return std::abs(a.y - tail) < std::abs(b.y - tail);
      });
      return {{"a", peak->y - tail}, {"T1", decay_time(tail)}, {"b", tail}};
    }
  }
  throw InvalidInput("unknown fit model");
}

}  // namespace atsim
