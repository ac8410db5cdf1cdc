#include "atsim/cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <sstream>

#include "atsim/error.hpp"
#include "atsim/experiments.hpp"
#include "atsim/fitting.hpp"
#include "atsim/lindblad.hpp"
#include "atsim/model.hpp"

namespace atsim::cli {
namespace {

using nlohmann::json;

std::string fmt12(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", x);
  return buf;
}

// ------------------------------------------------------------ config reading

std::string join(const std::string& path, std::string_view key) {
  return path + "/" + std::string(key);
}

const json* find(const json& obj, std::string_view key) {
  if (!obj.is_object()) return nullptr;
  auto it = obj.find(std::string(key));
  if (it == obj.end() || it->is_null()) return nullptr;
  return &*it;
}

double number(const json& obj, const std::string& path, std::string_view key,
              std::optional<double> fallback = std::nullopt) {
  const json* v = find(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key) + ": required number is missing");
  }
  if (!v->is_number()) throw ConfigError(join(path, key) + ": expected a number");
  const double x = v->get<double>();
  if (!std::isfinite(x)) throw ConfigError(join(path, key) + ": must be finite");
  return x;
}

long integer(const json& obj, const std::string& path, std::string_view key,
             std::optional<long> fallback = std::nullopt) {
  const json* v = find(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key) + ": required integer is missing");
  }
  if (!v->is_number_integer()) throw ConfigError(join(path, key) + ": expected an integer");
  return v->get<long>();
}

std::string text(const json& obj, const std::string& path, std::string_view key,
                 std::optional<std::string> fallback = std::nullopt) {
  const json* v = find(obj, key);
  if (!v) {
    if (fallback) return *fallback;
    throw ConfigError(join(path, key) + ": required string is missing");
  }
  if (!v->is_string()) throw ConfigError(join(path, key) + ": expected a string");
  return v->get<std::string>();
}

bool flag(const json& obj, const std::string& path, std::string_view key, bool fallback) {
  const json* v = find(obj, key);
  if (!v) return fallback;
  if (!v->is_boolean()) throw ConfigError(join(path, key) + ": expected true or false");
  return v->get<bool>();
}

const json& section(const json& obj, const std::string& path, std::string_view key) {
  const json* v = find(obj, key);
  if (!v) throw ConfigError(join(path, key) + ": required section is missing");
  if (!v->is_object()) throw ConfigError(join(path, key) + ": expected an object");
  return *v;
}

// Runs a module-level validation and attributes its failure to a config path.
template <typename F>
void checked(const std::string& path, F&& f) {
  try {
    f();
  } catch (const InvalidInput& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

struct Units {
  double freq = kTwoPi;  // MHz -> rad/us unless angular
};

Units units_of(const json& cfg) {
  return {flag(cfg, "", "angular", false) ? 1.0 : kTwoPi};
}

DriveParams read_drive(const json& cfg, Units u) {
  const json& d = section(cfg, "", "drive");
  const std::string path = "/drive";
  DriveParams p;
  p.omega_c = number(d, path, "omega_c", 0.0) * u.freq;
  if (find(d, "ratio")) {
    const double ratio = number(d, path, "ratio");
    if (!(ratio > 0.0)) throw ConfigError(path + "/ratio: must be > 0");
    if (find(d, "omega_p")) throw ConfigError(path + ": give either omega_p or ratio, not both");
    p.omega_p = p.omega_c / ratio;
  } else {
    p.omega_p = number(d, path, "omega_p", 0.0) * u.freq;
  }
  p.delta_c = number(d, path, "delta_c", 0.0) * u.freq;
  p.delta_p = number(d, path, "delta_p", 0.0) * u.freq;
  p.phi_c = number(d, path, "phi_c", 0.0);
  p.phi_p = number(d, path, "phi_p", 0.0);
  checked(path, [&] { p.validate(); });
  return p;
}

json drive_json(const DriveParams& p) {
  return {{"omega_c", p.omega_c}, {"omega_p", p.omega_p}, {"delta_c", p.delta_c},
          {"delta_p", p.delta_p}, {"phi_c", p.phi_c},     {"phi_p", p.phi_p}};
}

std::optional<DecoherenceParams> read_decoherence(const json& cfg) {
  const json* v = find(cfg, "decoherence");
  if (!v) return std::nullopt;
  if (!v->is_object()) throw ConfigError("/decoherence: expected an object or null");
  const std::string path = "/decoherence";
  DecoherenceParams dec;
  dec.gamma1 = number(*v, path, "gamma1", 0.0);
  dec.gamma2 = number(*v, path, "gamma2", 0.0);
  dec.gamma3 = number(*v, path, "gamma3", 0.0);
  dec.contrast = number(*v, path, "contrast", kDefaultContrast);
  if (const json* r = find(*v, "relaxation")) {
    if (!r->is_array() || r->size() != 3) throw ConfigError(path + "/relaxation: expected a 3x3 array");
    for (int i = 0; i < 3; ++i) {
      const json& row = (*r)[i];
      if (!row.is_array() || row.size() != 3) throw ConfigError(path + "/relaxation: expected a 3x3 array");
      for (int j = 0; j < 3; ++j) {
        if (!row[j].is_number()) throw ConfigError(path + "/relaxation: entries must be numbers");
        dec.relaxation[i][j] = row[j].get<double>();
      }
    }
  }
  checked(path, [&] { dec.validate(); });
  return dec;
}

json decoherence_json(const std::optional<DecoherenceParams>& dec) {
  if (!dec) return nullptr;
  return {{"gamma1", dec->gamma1},
          {"gamma2", dec->gamma2},
          {"gamma3", dec->gamma3},
          {"contrast", dec->contrast},
          {"relaxation", dec->relaxation}};
}

DurationRule read_duration(const json& cfg) {
  if (find(cfg, "duration_us")) {
    const double t = number(cfg, "", "duration_us");
    if (!(t >= 0.0)) throw ConfigError("/duration_us: must be >= 0");
    return DurationRule::fixed(t);
  }
  const json& d = section(cfg, "", "duration");
  const std::string rule = text(d, "/duration", "rule");
  const double value = number(d, "/duration", "value");
  if (rule == "fixed") return DurationRule::fixed(value);
  if (rule == "coupling_cycles") return DurationRule::coupling_cycles(value);
  if (rule == "probe_angle") return DurationRule::probe_angle(value);
  throw ConfigError("/duration/rule: expected fixed, coupling_cycles or probe_angle");
}

json duration_json(const DurationRule& r) {
  const char* name = r.kind == DurationRule::Kind::fixed             ? "fixed"
                     : r.kind == DurationRule::Kind::coupling_cycles ? "coupling_cycles"
                                                                     : "probe_angle";
  return {{"rule", name}, {"value", r.value}};
}

struct GridSpec {
  double center = 0.0;
  double half_width = 0.0;
  int points = 301;
};

// {"center", "half_width", "points"} or {"min", "max", "points"}, frequencies scaled by u.
GridSpec read_grid(const json& obj, const std::string& path, Units u, GridSpec fallback) {
  GridSpec g = fallback;
  if (!obj.is_object()) return g;
  g.points = static_cast<int>(integer(obj, path, "points", fallback.points));
  if (g.points < 5) throw ConfigError(path + "/points: need at least 5 points");
  if (find(obj, "min") || find(obj, "max")) {
    const double lo = number(obj, path, "min") * u.freq;
    const double hi = number(obj, path, "max") * u.freq;
    if (!(hi > lo)) throw ConfigError(path + ": max must exceed min");
    g.center = 0.5 * (lo + hi);
    g.half_width = 0.5 * (hi - lo);
  } else {
    if (find(obj, "center")) g.center = number(obj, path, "center") * u.freq;
    if (find(obj, "half_width")) g.half_width = number(obj, path, "half_width") * u.freq;
  }
  if (!(g.half_width > 0.0)) throw ConfigError(path + "/half_width: must be > 0");
  return g;
}

json grid_json(const GridSpec& g) {
  return {{"center", g.center}, {"half_width", g.half_width}, {"points", g.points}};
}

// Sweep axes: {"values": [...]} or a grid spec; resolved to explicit values.
std::vector<double> read_values(const json& cfg, std::string_view key, Units u) {
  const std::string path = "/" + std::string(key);
  const json& obj = section(cfg, "", key);
  if (const json* vals = find(obj, "values")) {
    if (!vals->is_array() || vals->empty()) throw ConfigError(path + "/values: expected a non-empty array");
    std::vector<double> out;
    for (const auto& v : *vals) {
      if (!v.is_number()) throw ConfigError(path + "/values: entries must be numbers");
      out.push_back(v.get<double>() * u.freq);
    }
    return out;
  }
  const long points = integer(obj, path, "points");
  if (points < 2) throw ConfigError(path + "/points: need at least 2 points");
  const double lo = number(obj, path, "min") * u.freq;
  const double hi = number(obj, path, "max") * u.freq;
  if (!(hi >= lo)) throw ConfigError(path + ": max must not be below min");
  return linear_grid(0.5 * (lo + hi), 0.5 * (hi - lo), static_cast<int>(points));
}

NoiseOptions read_noise(const json& cfg) {
  NoiseOptions n;
  if (const json* v = find(cfg, "noise")) {
    n.sigma = number(*v, "/noise", "sigma", 0.0);
    if (n.sigma < 0.0) throw ConfigError("/noise/sigma: must be >= 0");
    if (const json* s = find(*v, "seed")) {
      if (!s->is_number_unsigned() && !s->is_number_integer()) throw ConfigError("/noise/seed: expected an integer");
      n.seed = s->get<std::uint64_t>();
    }
  }
  return n;
}

// ------------------------------------------------------------ rendering

json header(std::string_view command, json resolved) {
  resolved["command"] = command;
  resolved["angular"] = true;
  return resolved;
}

std::string csv_prelude(const json& resolved) {
  return "# format: " + std::string(kFormatVersion) + "\n# config: " + resolved.dump() + "\n";
}

json document(const json& resolved) {
  return {{"format", kFormatVersion}, {"config", resolved}};
}

json dips_json(const std::vector<Dip>& dips) {
  json out = json::array();
  for (const auto& d : dips) {
    out.push_back({{"position_mhz", angular_to_mhz(d.position)}, {"value", d.value}, {"depth", d.depth}});
  }
  return out;
}

json fit_json(const FitResult& r) {
  return {{"model", to_string(r.model)},      {"params", r.params},
          {"std_errors", r.std_errors},       {"derived", r.derived},
          {"sum_squares", r.sum_squares},     {"residual_norm", r.residual_norm},
          {"converged", r.converged},         {"iterations", r.iterations}};
}

// ------------------------------------------------------------ commands

Report run_spectrum(const json& cfg, unsigned threads) {
  const Units u = units_of(cfg);
  const DriveParams drive = read_drive(cfg, u);
  const auto dec = read_decoherence(cfg);
  const DurationRule rule = read_duration(cfg);
  double duration = 0.0;
  checked("/duration", [&] { duration = rule.duration(drive); });
  GridSpec fallback;
  fallback.half_width = 1.5 * std::max({drive.omega_c, drive.omega_eff(), drive.omega_p});
  const json* grid_cfg = find(cfg, "grid");
  const GridSpec grid = read_grid(grid_cfg ? *grid_cfg : json(), "/grid", u, fallback);
  ScanOptions opts;
  opts.threads = threads;
  opts.noise = read_noise(cfg);

  const json resolved = header("spectrum", {{"drive", drive_json(drive)},
                                            {"decoherence", decoherence_json(dec)},
                                            {"duration", duration_json(rule)},
                                            {"grid", grid_json(grid)},
                                            {"noise", {{"sigma", opts.noise.sigma}, {"seed", opts.noise.seed}}}});
  const auto axis = linear_grid(grid.center, grid.half_width, grid.points);
  const auto scan = spectrum_scan(drive, axis, duration, dec, opts);
  const auto dips = find_dips(scan);

  Report rep;
  std::ostringstream csv;
  csv << csv_prelude(resolved) << "delta_p_mhz,p0,pl\n";
  for (std::size_t i = 0; i < scan.axis.size(); ++i) {
    csv << fmt12(scan.axis_mhz[i]) << ',' << fmt12(scan.p0[i]) << ',' << fmt12(scan.pl[i]) << '\n';
  }
  rep.csv = csv.str();
  rep.json = document(resolved);
  rep.json["axis"] = scan.axis_mhz;
  rep.json["p0"] = scan.p0;
  rep.json["pl"] = scan.pl;
  rep.json["dips"] = dips_json(dips);
  rep.json["duration_us"] = duration;
  return rep;
}

Report trace_report(const json& resolved, const TimeTrace& trace, const std::optional<FitResult>& fit) {
  Report rep;
  std::ostringstream csv;
  csv << csv_prelude(resolved) << "t_us,p0,pl\n";
  for (std::size_t i = 0; i < trace.times.size(); ++i) {
    csv << fmt12(trace.times[i]) << ',' << fmt12(trace.p0[i]) << ',' << fmt12(trace.pl[i]) << '\n';
  }
  rep.csv = csv.str();
  rep.json = document(resolved);
  rep.json["axis"] = trace.times;
  rep.json["p0"] = trace.p0;
  rep.json["pl"] = trace.pl;
  rep.json["dips"] = json::array();
  rep.json["constraint"] = trace.constraint;
  if (fit) rep.json["fit"] = fit_json(*fit);
  return rep;
}

std::vector<DataPoint> trace_points(const TimeTrace& trace) {
  std::vector<DataPoint> pts;
  for (std::size_t i = 0; i < trace.times.size(); ++i) pts.push_back({trace.times[i], trace.pl[i]});
  return pts;
}

Report run_dynamics(const json& cfg, unsigned) {
  const Units u = units_of(cfg);
  const DriveParams drive = read_drive(cfg, u);
  const auto dec = read_decoherence(cfg);
  const std::string sequence = text(cfg, "", "sequence", std::string("ats"));
  const bool want_fit = flag(cfg, "", "fit", false);

  if (sequence == "ats") {
    const long n_max = integer(cfg, "", "n_max");
    if (n_max < 0) throw ConfigError("/n_max: must be >= 0");
    const std::string branch_name = text(cfg, "", "branch", std::string("plus"));
    if (branch_name != "plus" && branch_name != "minus") throw ConfigError("/branch: expected plus or minus");
    const Branch branch = branch_name == "plus" ? Branch::plus : Branch::minus;
    if (drive.delta_c != 0.0) throw ConfigError("/drive/delta_c: dynamics requires resonant coupling");
    if (!(drive.omega_c > 0.0)) throw ConfigError("/drive/omega_c: must be > 0");

    const json resolved = header("dynamics", {{"drive", drive_json(drive)},
                                              {"decoherence", decoherence_json(dec)},
                                              {"sequence", sequence},
                                              {"n_max", n_max},
                                              {"branch", branch_name},
                                              {"fit", want_fit}});
    const auto trace = dynamics_trace(drive, static_cast<int>(n_max), dec, branch);
    std::optional<FitResult> fit;
    if (want_fit) {
      const auto pts = trace_points(trace);
      fit = atsim::fit(FitModelId::damped_cos4, pts, default_init(FitModelId::damped_cos4, pts));
    }
    return trace_report(resolved, trace, fit);
  }
  if (sequence == "rabi" || sequence == "rabi_coupled") {
    const json& times_cfg = section(cfg, "", "times");
    const double t_max = number(times_cfg, "/times", "t_max");
    const long points = integer(times_cfg, "/times", "points");
    if (!(t_max > 0.0) || points < 2) throw ConfigError("/times: need t_max > 0 and points >= 2");
    const json resolved = header("dynamics", {{"drive", drive_json(drive)},
                                              {"decoherence", decoherence_json(dec)},
                                              {"sequence", sequence},
                                              {"times", {{"t_max", t_max}, {"points", points}}},
                                              {"fit", want_fit}});
    const auto times = linear_grid(0.5 * t_max, 0.5 * t_max, static_cast<int>(points));
    const auto trace = rabi_trace(drive, times, dec, sequence == "rabi_coupled");
    std::optional<FitResult> fit;
    if (want_fit) {
      const auto pts = trace_points(trace);
      FitOptions opts;
      if (!dec) opts.fixed = {"T"};
      auto init = default_init(FitModelId::damped_rabi, pts);
      if (!dec) init["T"] = 1e6;
      fit = atsim::fit(FitModelId::damped_rabi, pts, init, opts);
    }
    return trace_report(resolved, trace, fit);
  }
  throw ConfigError("/sequence: expected ats, rabi or rabi_coupled");
}

Report run_sweep_amplitude(const json& cfg, unsigned threads) {
  const Units u = units_of(cfg);
  const auto omega_c = read_values(cfg, "omega_c", u);
  ProbeSpec probe;
  const json& p = section(cfg, "", "probe");
  if (find(p, "ratio")) {
    probe.ratio = number(p, "/probe", "ratio");
    if (!(*probe.ratio > 0.0)) throw ConfigError("/probe/ratio: must be > 0");
  } else {
    probe.omega_p = number(p, "/probe", "omega_p") * u.freq;
  }
  const auto dec = read_decoherence(cfg);
  const DurationRule rule = read_duration(cfg);
  SweepOptions opts;
  opts.points = static_cast<int>(integer(cfg, "", "points", 301));
  opts.scan.threads = threads;

  json probe_json = probe.ratio ? json{{"ratio", *probe.ratio}} : json{{"omega_p", probe.omega_p}};
  const json resolved = header("sweep-amplitude", {{"omega_c", {{"values", omega_c}}},
                                                   {"probe", probe_json},
                                                   {"decoherence", decoherence_json(dec)},
                                                   {"duration", duration_json(rule)},
                                                   {"points", opts.points}});
  std::vector<AmplitudePoint> pts;
  checked("/omega_c", [&] { pts = amplitude_sweep(omega_c, probe, rule, dec, opts); });

  std::vector<double> x, y;
  Report rep;
  std::ostringstream csv;
  csv << csv_prelude(resolved) << "omega_c_mhz,splitting_mhz,dip_count,flagged\n";
  json rows = json::array();
  for (const auto& pt : pts) {
    csv << fmt12(angular_to_mhz(pt.omega_c)) << ',' << fmt12(angular_to_mhz(pt.splitting)) << ','
        << pt.dip_count << ',' << (pt.flagged ? 1 : 0) << '\n';
    rows.push_back({{"omega_c_mhz", angular_to_mhz(pt.omega_c)},
                    {"splitting_mhz", pt.flagged ? json(nullptr) : json(angular_to_mhz(pt.splitting))},
                    {"dip_count", pt.dip_count},
                    {"flagged", pt.flagged}});
    if (!pt.flagged) {
      x.push_back(pt.omega_c);
      y.push_back(pt.splitting);
    }
  }
  rep.csv = csv.str();
  rep.json = document(resolved);
  rep.json["points"] = rows;
  rep.json["slope"] = x.size() >= 2 ? json(fitted_slope(x, y)) : json(nullptr);
  return rep;
}

Report run_sweep_detuning(const json& cfg, unsigned threads) {
  const Units u = units_of(cfg);
  const DriveParams drive = read_drive(cfg, u);
  const auto delta_c = read_values(cfg, "delta_c", u);
  const auto dec = read_decoherence(cfg);
  const DurationRule rule = read_duration(cfg);
  SweepOptions opts;
  opts.points = static_cast<int>(integer(cfg, "", "points", 301));
  opts.scan.threads = threads;

  const json resolved = header("sweep-detuning", {{"drive", drive_json(drive)},
                                                  {"delta_c", {{"values", delta_c}}},
                                                  {"decoherence", decoherence_json(dec)},
                                                  {"duration", duration_json(rule)},
                                                  {"points", opts.points}});
  std::vector<DetuningPoint> pts;
  checked("/delta_c", [&] { pts = detuning_sweep(delta_c, drive, rule, dec, opts); });

  Report rep;
  std::ostringstream csv;
  csv << csv_prelude(resolved) << "delta_c_mhz,dip_lo_mhz,dip_hi_mhz,depth_lo,depth_hi,separation_mhz\n";
  json rows = json::array();
  const std::string nan = "nan";
  for (const auto& pt : pts) {
    csv << fmt12(angular_to_mhz(pt.delta_c)) << ',';
    if (pt.dips.size() == 2) {
      csv << fmt12(angular_to_mhz(pt.dips[0].position)) << ',' << fmt12(angular_to_mhz(pt.dips[1].position))
          << ',' << fmt12(pt.dips[0].depth) << ',' << fmt12(pt.dips[1].depth) << ','
          << fmt12(angular_to_mhz(pt.dips[1].position - pt.dips[0].position)) << '\n';
    } else {
      csv << nan << ',' << nan << ',' << nan << ',' << nan << ',' << nan << '\n';
    }
    rows.push_back({{"delta_c_mhz", angular_to_mhz(pt.delta_c)}, {"dips", dips_json(pt.dips)}});
  }
  rep.csv = csv.str();
  rep.json = document(resolved);
  rep.json["points"] = rows;
  return rep;
}

Report run_steady_state(const json& cfg, unsigned) {
  const Units u = units_of(cfg);
  const DriveParams drive = read_drive(cfg, u);
  const auto dec = read_decoherence(cfg);
  if (!dec) throw ConfigError("/decoherence: steady-state needs at least one nonzero rate");
  const json resolved = header("steady-state", {{"drive", drive_json(drive)}, {"decoherence", decoherence_json(dec)}});
  const auto rho = steady_state(rotating_frame_hamiltonian(drive), make_dissipation(*dec));
  const double p0 = population_p0(rho);
  const double pl = pl_from_p0(p0, *dec);

  Report rep;
  std::ostringstream csv;
  csv << csv_prelude(resolved) << "row,col,re,im\n";
  json matrix = json::array();
  for (int r = 0; r < 3; ++r) {
    json row = json::array();
    for (int c = 0; c < 3; ++c) {
      csv << r << ',' << c << ',' << fmt12(rho.rho(r, c).real()) << ',' << fmt12(rho.rho(r, c).imag()) << '\n';
      row.push_back({rho.rho(r, c).real(), rho.rho(r, c).imag()});
    }
    matrix.push_back(row);
  }
  rep.csv = csv.str();
  rep.json = document(resolved);
  rep.json["rho"] = matrix;
  rep.json["p0"] = p0;
  rep.json["pl"] = pl;
  return rep;
}

Report run_optimal(const json& cfg, unsigned) {
  const Units u = units_of(cfg);
  const DriveParams drive = read_drive(cfg, u);
  const long max_index = integer(cfg, "", "max_index", 100);
  const json resolved = header("optimal", {{"drive", drive_json(drive)}, {"max_index", max_index}});
  std::vector<OptimalDuration> list;
  checked("/drive", [&] { list = optimal_durations(drive.omega_c, drive.omega_p, static_cast<int>(max_index)); });

  Report rep;
  std::ostringstream csv;
  csv << csv_prelude(resolved) << "t_us,family,n,k,residual,p0_analytic\n";
  json rows = json::array();
  for (const auto& o : list) {
    const double p0 = analytic_interference(drive.omega_p, drive.omega_c, o.t);
    const char* fam = o.family == OptimalFamily::A ? "A" : "B";
    csv << fmt12(o.t) << ',' << fam << ',' << o.n << ',' << o.k << ',' << fmt12(o.residual) << ','
        << fmt12(p0) << '\n';
    rows.push_back({{"t_us", o.t}, {"family", fam}, {"n", o.n}, {"k", o.k}, {"residual", o.residual},
                    {"p0_analytic", p0}});
  }
  rep.csv = csv.str();
  rep.json = document(resolved);
  rep.json["durations"] = rows;
  return rep;
}

std::vector<DataPoint> read_csv_points(const std::string& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw ConfigError("/data: cannot open '" + path + "'");
  std::vector<DataPoint> pts;
  std::string line;
  int t_col = 0;
  int y_col = 1;
  bool header_seen = false;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    char* end = nullptr;
    std::strtod(cells[0].c_str(), &end);
    const bool numeric = end != cells[0].c_str();
    if (!numeric) {
      if (header_seen) throw ConfigError(path + ":" + std::to_string(line_no) + ": unexpected text row");
      header_seen = true;
      if (!column.empty()) {
        auto it = std::find(cells.begin(), cells.end(), column);
        if (it == cells.end()) throw ConfigError("/column: '" + column + "' not in header of " + path);
        y_col = static_cast<int>(it - cells.begin());
      }
      continue;
    }
    if (static_cast<int>(cells.size()) <= std::max(t_col, y_col)) {
      throw ConfigError(path + ":" + std::to_string(line_no) + ": too few columns");
    }
    pts.push_back({std::strtod(cells[t_col].c_str(), nullptr), std::strtod(cells[y_col].c_str(), nullptr)});
  }
  return pts;
}

Report run_fit(const json& cfg, unsigned) {
  const std::string model_name = text(cfg, "", "model");
  FitModelId model;
  try {
    model = fit_model_from_string(model_name);
  } catch (const InvalidInput& e) {
    throw ConfigError(std::string("/model: ") + e.what());
  }
  std::vector<DataPoint> pts;
  json data_json;
  if (find(cfg, "data")) {
    const std::string path = text(cfg, "", "data");
    const std::string column = text(cfg, "", "column", std::string());
    pts = read_csv_points(path, column);
    data_json = {{"t", json::array()}, {"y", json::array()}};
  } else {
    const json& t = section(cfg, "", "samples");
    const json* ts = find(t, "t");
    const json* ys = find(t, "y");
    if (!ts || !ys || !ts->is_array() || !ys->is_array() || ts->size() != ys->size()) {
      throw ConfigError("/samples: expected arrays t and y of equal length");
    }
    for (std::size_t i = 0; i < ts->size(); ++i) {
      if (!(*ts)[i].is_number() || !(*ys)[i].is_number()) throw ConfigError("/samples: entries must be numbers");
      pts.push_back({(*ts)[i].get<double>(), (*ys)[i].get<double>()});
    }
  }
  std::vector<double> tv, yv;
  for (const auto& p : pts) {
    tv.push_back(p.t);
    yv.push_back(p.y);
  }

  ParamMap init;
  checked("/samples", [&] { init = default_init(model, pts); });
  if (const json* given = find(cfg, "init")) {
    if (!given->is_object()) throw ConfigError("/init: expected an object");
    for (const auto& [k, v] : given->items()) {
      if (!v.is_number()) throw ConfigError("/init/" + k + ": expected a number");
      init[k] = v.get<double>();
    }
  }
  FitOptions opts;
  if (const json* fixed = find(cfg, "fixed")) {
    if (!fixed->is_array()) throw ConfigError("/fixed: expected an array of names");
    for (const auto& n : *fixed) opts.fixed.insert(n.get<std::string>());
  }
  if (const json* bounds = find(cfg, "bounds")) {
    for (const auto& [k, v] : bounds->items()) {
      if (!v.is_array() || v.size() != 2) throw ConfigError("/bounds/" + k + ": expected [lower, upper]");
      opts.bounds[k] = {v[0].get<double>(), v[1].get<double>()};
    }
  }
  opts.multi_start = static_cast<int>(integer(cfg, "", "multi_start", 0));
  if (const json* s = find(cfg, "seed")) opts.seed = s->get<std::uint64_t>();

  json bounds_json = json::object();
  for (const auto& [k, v] : opts.bounds) bounds_json[k] = {v.first, v.second};
  const json resolved = header("fit", {{"model", model_name},
                                       {"samples", {{"t", tv}, {"y", yv}}},
                                       {"init", init},
                                       {"fixed", opts.fixed},
                                       {"bounds", bounds_json},
                                       {"multi_start", opts.multi_start},
                                       {"seed", opts.seed}});
  FitResult result;
  checked("/init", [&] { result = atsim::fit(model, pts, init, opts); });

  Report rep;
  std::ostringstream csv;
  csv << csv_prelude(resolved) << "param,value,std_error\n";
  for (const auto& [k, v] : result.params) {
    csv << k << ',' << fmt12(v) << ',' << fmt12(result.std_errors.at(k)) << '\n';
  }
  rep.csv = csv.str();
  rep.json = document(resolved);
  rep.json["axis"] = tv;
  rep.json["fit"] = fit_json(result);
  return rep;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

unsigned default_threads() {
  if (const char* env = std::getenv("ATSIM_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && n > 0) return static_cast<unsigned>(n);
  }
  return 1;
}

}  // namespace

nlohmann::json parse_config(std::string_view text_in) {
  std::string text(text_in);
  // A previous CSV output: the config is on the "# config: " line.
  if (!text.empty() && text[0] == '#') {
    std::istringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
      constexpr std::string_view tag = "# config: ";
      if (line.rfind(tag, 0) == 0) {
        text = line.substr(tag.size());
        break;
      }
      if (line.empty() || line[0] != '#') break;
    }
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    std::ostringstream os;
    os << "malformed JSON at line " << line << ", column " << col << ": " << e.what();
    throw ConfigError(os.str());
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (doc.contains("format") && doc.contains("config")) return doc["config"];
  return doc;
}

nlohmann::json preset(std::string_view figure) {
  const json s5_dephasing = {{"gamma1", 0.0784}, {"gamma2", 0.0784}, {"gamma3", 2 * 0.0784}, {"contrast", 0.22}};
  if (figure == "fig2b") {
    // t = 1.8 us = pi/Op = 2 pi/Oc.
    return {{"command", "spectrum"},
            {"preset", "fig2b"},
            {"drive", {{"omega_c", 1.0 / 1.8}, {"ratio", 2.0}}},
            {"duration_us", 1.8},
            {"grid", {{"center", 0.0}, {"half_width", 1.5 / 1.8}, {"points", 301}}}};
  }
  if (figure == "fig2c") {
    return {{"command", "sweep-amplitude"},
            {"preset", "fig2c"},
            {"omega_c", {{"min", 2.0}, {"max", 8.0}, {"points", 13}}},
            {"probe", {{"ratio", 14.0}}},
            {"duration", {{"rule", "coupling_cycles"}, {"value", 20}}},
            {"points", 301}};
  }
  if (figure == "fig2d") {
    return {{"command", "sweep-detuning"},
            {"preset", "fig2d"},
            {"drive", {{"omega_c", 4.73}, {"ratio", 14.0}}},
            {"delta_c", {{"min", -4.73 / 2}, {"max", 4.73 / 2}, {"points", 11}}},
            {"duration", {{"rule", "coupling_cycles"}, {"value", 20}}},
            {"points", 301}};
  }
  if (figure == "fig3e") {
    return {{"command", "dynamics"},
            {"preset", "fig3e"},
            {"drive", {{"omega_c", 4.73}, {"ratio", 14.0}}},
            {"sequence", "ats"},
            {"n_max", 166},
            {"decoherence", s5_dephasing},
            {"fit", true}};
  }
  if (figure == "fig4") {
    return {{"command", "spectrum"},
            {"preset", "fig4"},
            {"drive", {{"omega_c", 4.73}, {"ratio", 14.0}}},
            {"duration", {{"rule", "coupling_cycles"}, {"value", 20}}},
            {"grid", {{"center", 0.0}, {"half_width", 1.5 * 4.73}, {"points", 301}}}};
  }
  if (figure == "figS5") {
    return {{"command", "dynamics"},
            {"preset", "figS5"},
            {"drive", {{"omega_c", 5.0}, {"ratio", 14.0}}},
            {"sequence", "ats"},
            {"n_max", 300},
            {"decoherence", s5_dephasing},
            {"fit", true}};
  }
  throw ConfigError("unknown figure '" + std::string(figure) +
                    "' (expected fig2b, fig2c, fig2d, fig3e, fig4 or figS5)");
}

Report execute(std::string_view command, const nlohmann::json& config, unsigned threads) {
  if (const json* c = find(config, "command")) {
    if (!c->is_string() || c->get<std::string>() != command) {
      throw ConfigError("/command: config was written for '" + c->dump() + "', not '" +
                        std::string(command) + "'");
    }
  }
  threads = std::max(1u, threads);
  if (command == "spectrum") return run_spectrum(config, threads);
  if (command == "dynamics") return run_dynamics(config, threads);
  if (command == "sweep-amplitude") return run_sweep_amplitude(config, threads);
  if (command == "sweep-detuning") return run_sweep_detuning(config, threads);
  if (command == "steady-state") return run_steady_state(config, threads);
  if (command == "optimal") return run_optimal(config, threads);
  if (command == "fit") return run_fit(config, threads);
  throw ConfigError("unknown command '" + std::string(command) + "'");
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Autler-Townes splitting simulator for a driven V-type three-level system"};
  app.name(args.empty() ? "atsim" : args[0]);
  app.require_subcommand(1);

  std::string config_path;
  std::string out_path;
  std::string format = "csv";
  std::optional<std::uint64_t> seed;
  unsigned threads = default_threads();
  std::string figure;

  auto add_common = [&](CLI::App* sub, bool needs_config) {
    auto* opt = sub->add_option("--config", config_path, "JSON config (or a previous atsim output)");
    if (needs_config) opt->required();
    sub->add_option("--out", out_path, "Output file (default: stdout)");
    sub->add_option("--format", format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    sub->add_option("--seed", seed, "Noise seed (overrides the config)");
    sub->add_option("--threads", threads, "Worker threads for scans (default: $ATSIM_THREADS or 1)")
        ->check(CLI::PositiveNumber);
  };

  const std::vector<std::pair<std::string, std::string>> commands{
      {"spectrum", "Probe-detuning scan of p0 and PL"},
      {"dynamics", "Stroboscopic ATS trace or Rabi trace"},
      {"sweep-amplitude", "Splitting versus coupling Rabi frequency"},
      {"sweep-detuning", "Dip positions and depths versus coupling detuning"},
      {"steady-state", "Long-pulse steady state of the Lindblad equation"},
      {"optimal", "Durations that maximize the ATS contrast"},
      {"fit", "Fit a decay/oscillation model to a trace"}};
  for (const auto& [name, help] : commands) add_common(app.add_subcommand(name, help), true);
  auto* reproduce = app.add_subcommand("reproduce", "Run a figure preset");
  reproduce->add_option("figure", figure, "fig2b | fig2c | fig2d | fig3e | fig4 | figS5")->required();
  add_common(reproduce, false);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitConfig;
  }

  const CLI::App* chosen = app.get_subcommands().front();
  try {
    std::string command = chosen->get_name();
    json config;
    if (command == "reproduce") {
      config = preset(figure);
      if (!config_path.empty()) throw ConfigError("reproduce takes a figure name, not --config");
      command = config["command"].get<std::string>();
    } else {
      config = parse_config(read_file(config_path));
    }
    if (seed) config["noise"]["seed"] = *seed;

    const Report rep = execute(command, config, threads);
    const std::string body = format == "json" ? rep.json.dump(2) + "\n" : rep.csv;
    if (out_path.empty()) {
      out << body;
    } else {
      std::ofstream file(out_path, std::ios::binary);
      if (!file) throw ConfigError("cannot open output file '" + out_path + "'");
      file << body;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const InvalidInput& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const json::exception& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  }
}

}  // namespace atsim::cli
