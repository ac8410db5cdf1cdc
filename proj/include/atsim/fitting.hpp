#pragma once

// Levenberg-Marquardt fitting of the decay/oscillation models used to
// characterize the measured and simulated traces.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace atsim {

/// damped_cos4:     S(t) = a exp(-(t/T)^k) cos^4(w (t - t_c)) + b     w in rad/us
/// gaussian_ramsey: y(t) = a exp(-(t/T2)^2) cos(2 pi omega t) + b    omega in MHz
/// damped_rabi:     y(t) = a exp(-(t/T)^2) cos(pi (t - x_c)/w) + b
/// exp_decay:       y(t) = a exp(-t/T1) + b
enum class FitModelId { damped_cos4, gaussian_ramsey, damped_rabi, exp_decay };

std::string_view to_string(FitModelId id);
/// Throws InvalidInput for unknown names.
FitModelId fit_model_from_string(std::string_view name);

/// Parameter names in evaluation order.
std::span<const std::string_view> parameter_names(FitModelId id);

double evaluate_model(FitModelId id, double t, std::span<const double> params);

using ParamMap = std::map<std::string, double>;

struct DataPoint {
  double t = 0.0;
  double y = 0.0;
};

struct FitOptions {
  /// Inclusive bounds by parameter name. damped_cos4 defaults k to [0.5, 4].
  std::map<std::string, std::pair<double, double>> bounds;
  /// Parameters held at their initial value.
  std::set<std::string> fixed;
  /// Optional per-point standard deviations (same length as the data).
  std::vector<double> sigma;
  int max_iterations = 500;
  /// Extra seeded starts (init perturbed by +-20%); 0 disables.
  int multi_start = 0;
  std::uint64_t seed = 0;
};

struct FitResult {
  FitModelId model = FitModelId::exp_decay;
  ParamMap params;
  ParamMap std_errors;  // 0 for fixed parameters
  /// Frequency parameters restated in the other convention (rad/us vs MHz).
  ParamMap derived;
  double sum_squares = 0.0;    // weighted sum of squared residuals
  double residual_norm = 0.0;  // sqrt(sum_squares)
  bool converged = false;
  int iterations = 0;
  /// Sum of squares after the initial point and each accepted step.
  std::vector<double> history;
};

/// Fits `model` to `data` starting from `init` (missing names are an error).
/// Oscillatory models are also fitted through a growing time window (envelope
/// held until the last stage) and the lower residual wins, which widens the
/// frequency basin. Jacobian by central differences; std errors from the diagonal of
/// s^2 (J^T J)^{-1} with s^2 = SSR / (N - p). Throws NumericalFailure when
/// J^T J is singular, naming the dominant parameter of the degenerate direction.
FitResult fit(FitModelId model, std::span<const DataPoint> data, const ParamMap& init,
              const FitOptions& options = {});

/// Heuristic starting point: baseline from the last decile, amplitude from the
/// peak deviation, frequency from the periodogram peak, decay from the 1/e
/// crossing of the envelope. Throws InvalidInput for flat data.
ParamMap default_init(FitModelId model, std::span<const DataPoint> data);

/// Angular frequency of the largest periodogram peak of the mean-subtracted data
/// (rad per time unit), searched on a grid four times finer than 2 pi / span.
double dominant_angular_frequency(std::span<const DataPoint> data);

std::vector<DataPoint> generate(FitModelId model, std::span<const double> times,
                                const ParamMap& params);

}  // namespace atsim
