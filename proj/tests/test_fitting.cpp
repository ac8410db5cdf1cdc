#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "atsim/error.hpp"
#include "atsim/fitting.hpp"
#include "support.hpp"

using namespace atsim;
using testing::kPi;

namespace {

struct Case {
  FitModelId model;
  ParamMap truth;
  double t_max;
  int points;
};

std::vector<Case> cases() {
  return {
      {FitModelId::damped_cos4,
       {{"a", 0.211}, {"T", 17.5}, {"k", 1.5}, {"t_c", 7.85}, {"b", 0.790}, {"w", 2.0 * kPi * 0.123}},
       35.0, 80},
      {FitModelId::gaussian_ramsey, {{"a", 0.3}, {"T2", 8.2}, {"omega", 0.5}, {"b", 0.7}}, 20.0, 200},
      {FitModelId::damped_rabi, {{"a", 0.25}, {"T", 25.0}, {"x_c", 0.1}, {"w", 1.5}, {"b", 0.75}}, 30.0, 200},
      {FitModelId::exp_decay, {{"a", 0.2}, {"T1", 1700.0}, {"b", 0.8}}, 6000.0, 100},
  };
}

std::vector<double> uniform_times(double t_max, int points) {
  std::vector<double> t;
  for (int i = 0; i < points; ++i) t.push_back(t_max * i / (points - 1));
  return t;
}

ParamMap scaled(const ParamMap& p, double factor) {
  ParamMap out;
  for (const auto& [k, v] : p) out[k] = v * factor;
  return out;
}

std::vector<DataPoint> with_noise(std::vector<DataPoint> data, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, sigma);
  for (auto& d : data) d.y += g(rng);
  return data;
}

}  // namespace

TEST_CASE("model names") {
  for (auto id : {FitModelId::damped_cos4, FitModelId::gaussian_ramsey, FitModelId::damped_rabi,
                  FitModelId::exp_decay}) {
    CHECK(fit_model_from_string(to_string(id)) == id);
  }
  CHECK_THROWS_AS(fit_model_from_string("lorentzian"), InvalidInput);
  CHECK(parameter_names(FitModelId::damped_cos4).size() == 6);
  CHECK(parameter_names(FitModelId::gaussian_ramsey).size() == 4);
  CHECK(parameter_names(FitModelId::damped_rabi).size() == 5);
  CHECK(parameter_names(FitModelId::exp_decay).size() == 3);
}

TEST_CASE("model formulas") {
  const std::vector<double> cos4{0.2, 10.0, 2.0, 1.0, 0.8, 0.5};
  const double t = 3.0;
  CHECK(evaluate_model(FitModelId::damped_cos4, t, cos4) ==
        doctest::Approx(0.2 * std::exp(-0.09) * std::pow(std::cos(0.5 * 2.0), 4) + 0.8));
  const std::vector<double> ramsey{0.3, 8.2, 0.5, 0.7};
  CHECK(evaluate_model(FitModelId::gaussian_ramsey, t, ramsey) ==
        doctest::Approx(0.3 * std::exp(-std::pow(t / 8.2, 2)) * std::cos(2.0 * kPi * 0.5 * t) + 0.7));
  const std::vector<double> rabi{0.25, 25.0, 0.1, 1.5, 0.75};
  CHECK(evaluate_model(FitModelId::damped_rabi, t, rabi) ==
        doctest::Approx(0.25 * std::exp(-std::pow(t / 25.0, 2)) * std::cos(kPi * (t - 0.1) / 1.5) + 0.75));
  const std::vector<double> expd{0.2, 1700.0, 0.8};
  CHECK(evaluate_model(FitModelId::exp_decay, t, expd) == doctest::Approx(0.2 * std::exp(-t / 1700.0) + 0.8));
}

TEST_CASE("noiseless roundtrips from perturbed starts") {
  for (const auto& c : cases()) {
    CAPTURE(to_string(c.model));
    const auto data = generate(c.model, uniform_times(c.t_max, c.points), c.truth);
    for (double factor : {0.8, 1.2}) {
      const auto r = fit(c.model, data, scaled(c.truth, factor));
      CHECK(r.converged);
      for (const auto& [k, v] : c.truth) {
        CAPTURE(k);
        CHECK(std::abs(r.params.at(k) / v - 1.0) < 0.01);
      }
      CHECK(std::is_sorted(r.history.rbegin(), r.history.rend()));
    }
  }
}

TEST_CASE("noisy roundtrips fall within three standard errors") {
  std::uint64_t seed = 100;
  for (const auto& c : cases()) {
    CAPTURE(to_string(c.model));
    const auto data = with_noise(generate(c.model, uniform_times(c.t_max, c.points), c.truth), 0.01, ++seed);
    for (double factor : {0.8, 1.2}) {
      const auto r = fit(c.model, data, scaled(c.truth, factor));
      for (const auto& [k, v] : c.truth) {
        CAPTURE(k);
        CHECK(r.std_errors.at(k) > 0.0);
        CHECK(std::abs(r.params.at(k) - v) <= 3.0 * r.std_errors.at(k));
      }
    }
  }
}

TEST_CASE("affine rescaling of the data") {
  const double alpha = 2.5, beta = -0.4;
  for (const auto& c : cases()) {
    CAPTURE(to_string(c.model));
    const auto data = with_noise(generate(c.model, uniform_times(c.t_max, c.points), c.truth), 0.01, 7);
    auto moved = data;
    for (auto& d : moved) d.y = alpha * d.y + beta;
    ParamMap init = c.truth;
    ParamMap moved_init = init;
    moved_init["a"] = alpha * init["a"];
    moved_init["b"] = alpha * init["b"] + beta;
    const auto r = fit(c.model, data, init);
    const auto m = fit(c.model, moved, moved_init);
    CHECK(m.params.at("a") == doctest::Approx(alpha * r.params.at("a")).epsilon(1e-6));
    CHECK(m.params.at("b") == doctest::Approx(alpha * r.params.at("b") + beta).epsilon(1e-6));
    for (const auto& [k, v] : r.params) {
      if (k == "a" || k == "b") continue;
      CAPTURE(k);
      CHECK(m.params.at(k) == doctest::Approx(v).epsilon(1e-6));
    }
  }
}

TEST_CASE("constant model reduces to the mean") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.8, 0.05);
  std::vector<DataPoint> data;
  for (int i = 0; i < 40; ++i) data.push_back({double(i), g(rng)});
  const double mean = std::accumulate(data.begin(), data.end(), 0.0,
                                      [](double s, const DataPoint& d) { return s + d.y; }) /
                      data.size();
  double ss = 0.0;
  for (const auto& d : data) ss += (d.y - mean) * (d.y - mean);
  FitOptions opt;
  opt.fixed = {"a", "T1"};
  for (double t1 : {0.1, 10.0, 1e4}) {
    const auto r = fit(FitModelId::exp_decay, data, {{"a", 0.0}, {"T1", t1}, {"b", 0.0}}, opt);
    CHECK(r.params.at("b") == doctest::Approx(mean).epsilon(1e-10));
    CHECK(r.sum_squares == doctest::Approx(ss).epsilon(1e-8));
    CHECK(r.std_errors.at("a") == 0.0);
  }
}

TEST_CASE("Ramsey decay time") {
  const ParamMap truth{{"a", 0.3}, {"T2", 8.2}, {"omega", 0.5}, {"b", 0.7}};
  const auto data = generate(FitModelId::gaussian_ramsey, uniform_times(20.0, 200), truth);
  const auto r = fit(FitModelId::gaussian_ramsey, data, default_init(FitModelId::gaussian_ramsey, data));
  CHECK(r.params.at("T2") == doctest::Approx(8.2).epsilon(0.01));
  CHECK(r.derived.at("omega_rad_per_us") == doctest::Approx(2.0 * kPi * r.params.at("omega")));
}

TEST_CASE("default initial guesses") {
  SUBCASE("cosine frequency within one periodogram bin") {
    const double span = 20.0, omega = 2.0 * kPi * 0.37;
    std::vector<DataPoint> data;
    for (double t : uniform_times(span, 200)) data.push_back({t, std::cos(omega * t)});
    CHECK(std::abs(dominant_angular_frequency(data) - omega) <= 2.0 * kPi / span);
    const auto init = default_init(FitModelId::gaussian_ramsey, data);
    CHECK(std::abs(2.0 * kPi * init.at("omega") - omega) <= 2.0 * kPi / span);
  }
  SUBCASE("flat data is rejected") {
    std::vector<DataPoint> flat;
    for (double t : uniform_times(10.0, 20)) flat.push_back({t, 0.5});
    CHECK_THROWS_AS(default_init(FitModelId::exp_decay, flat), InvalidInput);
  }
  SUBCASE("decay time from the 1/e crossing") {
    const auto data = generate(FitModelId::exp_decay, uniform_times(6000.0, 100),
                               {{"a", 0.2}, {"T1", 1700.0}, {"b", 0.8}});
    const double t1 = default_init(FitModelId::exp_decay, data).at("T1");
    CHECK(t1 > 850.0);
    CHECK(t1 < 3400.0);
  }
}

TEST_CASE("Rabi to interference frequency ratio") {
  const double op = 2.0 * kPi * 0.338;
  const auto cos4 = generate(FitModelId::damped_cos4, uniform_times(35.0, 80),
                             {{"a", 0.211}, {"T", 17.5}, {"k", 1.5}, {"t_c", 7.85}, {"b", 0.790},
                              {"w", 2.0 * kPi * 0.123}});
  const auto rabi = generate(FitModelId::damped_rabi, uniform_times(10.0, 120),
                             {{"a", 0.25}, {"T", 25.0}, {"x_c", 0.0}, {"w", kPi / op}, {"b", 0.75}});
  const auto fc = fit(FitModelId::damped_cos4, cos4, default_init(FitModelId::damped_cos4, cos4));
  const auto fr = fit(FitModelId::damped_rabi, rabi, default_init(FitModelId::damped_rabi, rabi));
  const double ratio = (kPi / fr.params.at("w")) / fc.params.at("w");
  CHECK(ratio >= 2.6);
  CHECK(ratio <= 2.9);
}

TEST_CASE("degenerate and invalid inputs") {
  const auto data = generate(FitModelId::exp_decay, uniform_times(10.0, 20), {{"a", 0.2}, {"T1", 3.0}, {"b", 0.8}});
  SUBCASE("zero amplitude leaves the decay time undetermined") {
    FitOptions opt;
    opt.fixed = {"a"};
    try {
      fit(FitModelId::exp_decay, data, {{"a", 0.0}, {"T1", 3.0}, {"b", 0.8}}, opt);
      FAIL("expected NumericalFailure");
    } catch (const NumericalFailure& e) {
      CHECK(std::string(e.what()).find("T1") != std::string::npos);
    }
  }
  SUBCASE("too few points") {
    const std::vector<DataPoint> four(data.begin(), data.begin() + 4);
    CHECK_THROWS_AS(fit(FitModelId::exp_decay, four, {{"a", 0.2}, {"T1", 3.0}, {"b", 0.8}}), InvalidInput);
  }
  SUBCASE("missing or unknown parameter names") {
    CHECK_THROWS_AS(fit(FitModelId::exp_decay, data, {{"a", 0.2}, {"T1", 3.0}}), InvalidInput);
    FitOptions opt;
    opt.fixed = {"tau"};
    CHECK_THROWS_AS(fit(FitModelId::exp_decay, data, {{"a", 0.2}, {"T1", 3.0}, {"b", 0.8}}, opt),
                    InvalidInput);
  }
  SUBCASE("bounds are respected") {
    FitOptions opt;
    opt.bounds["T1"] = {4.0, 10.0};
    const auto r = fit(FitModelId::exp_decay, data, {{"a", 0.2}, {"T1", 5.0}, {"b", 0.8}}, opt);
    CHECK(r.params.at("T1") >= 4.0);
  }
  SUBCASE("multi-start is deterministic") {
    FitOptions opt;
    opt.multi_start = 5;
    opt.seed = 9;
    const auto noisy = with_noise(data, 0.01, 1);
    const ParamMap init{{"a", 0.3}, {"T1", 2.0}, {"b", 0.7}};
    CHECK(fit(FitModelId::exp_decay, noisy, init, opt).params ==
          fit(FitModelId::exp_decay, noisy, init, opt).params);
  }
}
