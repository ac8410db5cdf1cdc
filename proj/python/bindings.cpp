#include <pybind11/complex.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "atsim/cli.hpp"
#include "atsim/error.hpp"
#include "atsim/experiments.hpp"
#include "atsim/fitting.hpp"
#include "atsim/lindblad.hpp"
#include "atsim/linalg.hpp"
#include "atsim/model.hpp"

namespace py = pybind11;
using namespace atsim;

namespace {

using ComplexArray = py::array_t<Complex, py::array::c_style | py::array::forcecast>;
using RealArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<Complex> to_numpy(const ComplexMatrix3& m) {
  py::array_t<Complex> out({3, 3});
  auto v = out.mutable_unchecked<2>();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v(r, c) = m(r, c);
  return out;
}

ComplexMatrix3 from_numpy(const ComplexArray& a) {
  if (a.ndim() != 2 || a.shape(0) != 3 || a.shape(1) != 3) {
    throw InvalidInput("expected a 3x3 matrix");
  }
  auto v = a.unchecked<2>();
  ComplexMatrix3 m;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) m(r, c) = v(r, c);
  return m;
}

std::vector<double> to_vector(const RealArray& a) {
  if (a.ndim() != 1) throw InvalidInput("expected a one-dimensional array");
  return {a.data(), a.data() + a.size()};
}

std::optional<DecoherenceParams> optional_decoherence(const py::object& obj) {
  if (obj.is_none()) return std::nullopt;
  return obj.cast<DecoherenceParams>();
}

Dissipation dissipation_of(const py::object& obj) {
  const auto dec = optional_decoherence(obj);
  return dec ? make_dissipation(*dec) : Dissipation{};
}

py::dict dip_dict(const Dip& d) {
  py::dict out;
  out["position"] = d.position;
  out["value"] = d.value;
  out["depth"] = d.depth;
  return out;
}

py::list dips_list(const std::vector<Dip>& dips) {
  py::list out;
  for (const auto& d : dips) out.append(dip_dict(d));
  return out;
}

py::dict trace_dict(const TimeTrace& t) {
  py::dict out;
  out["t"] = py::array_t<double>(t.times.size(), t.times.data());
  out["p0"] = py::array_t<double>(t.p0.size(), t.p0.data());
  out["pl"] = py::array_t<double>(t.pl.size(), t.pl.data());
  out["constraint"] = t.constraint;
  return out;
}

}  // namespace

PYBIND11_MODULE(_atsim, m) {
  m.doc() = "Autler-Townes splitting simulator for a driven V-type three-level system";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<NumericalFailure>(m, "NumericalFailure", base.ptr());

  m.def("mhz_to_angular", &mhz_to_angular, py::arg("mhz"));
  m.def("angular_to_mhz", &angular_to_mhz, py::arg("rad_per_us"));

  py::class_<DriveParams>(m, "DriveParams")
      .def(py::init([](double omega_c, double omega_p, double delta_c, double delta_p, double phi_c,
                       double phi_p) {
             DriveParams d{omega_c, omega_p, delta_c, delta_p, phi_c, phi_p};
             d.validate();
             return d;
           }),
           py::arg("omega_c") = 0.0, py::arg("omega_p") = 0.0, py::arg("delta_c") = 0.0,
           py::arg("delta_p") = 0.0, py::arg("phi_c") = 0.0, py::arg("phi_p") = 0.0)
      .def_readwrite("omega_c", &DriveParams::omega_c)
      .def_readwrite("omega_p", &DriveParams::omega_p)
      .def_readwrite("delta_c", &DriveParams::delta_c)
      .def_readwrite("delta_p", &DriveParams::delta_p)
      .def_readwrite("phi_c", &DriveParams::phi_c)
      .def_readwrite("phi_p", &DriveParams::phi_p)
      .def_property_readonly("omega_eff", &DriveParams::omega_eff)
      .def("__repr__", [](const DriveParams& d) {
        std::ostringstream os;
        os << "DriveParams(omega_c=" << d.omega_c << ", omega_p=" << d.omega_p
           << ", delta_c=" << d.delta_c << ", delta_p=" << d.delta_p << ")";
        return os.str();
      });

  py::class_<DecoherenceParams>(m, "DecoherenceParams")
      .def(py::init([](double gamma1, double gamma2, double gamma3, double contrast) {
             DecoherenceParams dec;
             dec.gamma1 = gamma1;
             dec.gamma2 = gamma2;
             dec.gamma3 = gamma3;
             dec.contrast = contrast;
             dec.validate();
             return dec;
           }),
           py::arg("gamma1") = 0.0, py::arg("gamma2") = 0.0, py::arg("gamma3") = 0.0,
           py::arg("contrast") = kDefaultContrast)
      .def_readwrite("gamma1", &DecoherenceParams::gamma1)
      .def_readwrite("gamma2", &DecoherenceParams::gamma2)
      .def_readwrite("gamma3", &DecoherenceParams::gamma3)
      .def_readwrite("contrast", &DecoherenceParams::contrast)
      .def("set_relaxation", [](DecoherenceParams& dec, int from, int to, double rate) {
        if (from < 0 || from > 2 || to < 0 || to > 2 || from == to) {
          throw InvalidInput("relaxation levels must be distinct and in 0..2");
        }
        dec.relaxation[from][to] = rate;
        dec.validate();
      }, py::arg("from_level"), py::arg("to_level"), py::arg("rate"));

  py::enum_<Branch>(m, "Branch").value("plus", Branch::plus).value("minus", Branch::minus);

  // Linear algebra and Hamiltonians.
  m.def("eig_hermitian", [](const ComplexArray& h) {
    const auto es = eig_hermitian(from_numpy(h));
    return py::make_tuple(py::array_t<double>(3, es.values.data()), to_numpy(es.vectors));
  }, py::arg("h"));
  m.def("propagator", [](const ComplexArray& h, double t) { return to_numpy(propagator(from_numpy(h), t)); },
        py::arg("h"), py::arg("t"));
  m.def("rotating_frame_hamiltonian", [](const DriveParams& d) { return to_numpy(rotating_frame_hamiltonian(d)); },
        py::arg("drive"));
  m.def("dressed_hamiltonian", [](const DriveParams& d) { return to_numpy(dressed_hamiltonian(d)); },
        py::arg("drive"));
  m.def("effective_two_level", [](const DriveParams& d, Branch b) { return to_numpy(effective_two_level(d, b)); },
        py::arg("drive"), py::arg("branch") = Branch::plus);
  m.def("nonresonant_dressed", [](const DriveParams& d) {
    const auto nd = nonresonant_dressed(d);
    return py::make_tuple(to_numpy(nd.hamiltonian), to_numpy(nd.basis.matrix()));
  }, py::arg("drive"));
  m.def("branch_resonance", &branch_resonance, py::arg("drive"), py::arg("branch") = Branch::plus);
  m.def("ats_splitting", &ats_splitting, py::arg("drive"));
  m.def("transition_frequencies", [](double b_z_tesla, double d_ghz, double gamma_ghz_per_t) {
    const auto f = transition_frequencies({d_ghz, gamma_ghz_per_t, b_z_tesla});
    return py::make_tuple(f.omega_01_ghz, f.omega_02_ghz);
  }, py::arg("b_z_tesla") = 0.0, py::arg("zero_field_splitting_ghz") = 2.87,
        py::arg("gyromagnetic_ghz_per_t") = 28.03);

  // Open-system dynamics.
  m.def("lindblad_rhs", [](const ComplexArray& rho, const ComplexArray& h, const py::object& dec) {
    return to_numpy(lindblad_rhs(from_numpy(rho), from_numpy(h), dissipation_of(dec)));
  }, py::arg("rho"), py::arg("h"), py::arg("decoherence") = py::none());
  m.def("evolve", [](const ComplexArray& rho0, const ComplexArray& h, double t, const py::object& dec,
                     std::optional<double> dt) {
    EvolveOptions opt;
    opt.dt = dt;
    const DensityMatrix start{from_numpy(rho0)};
    const ComplexMatrix3 hamiltonian = from_numpy(h);
    const Dissipation diss = dissipation_of(dec);
    ComplexMatrix3 rho;
    {
      py::gil_scoped_release release;
      rho = evolve_rk4(start, hamiltonian, diss, t, opt).final_state.rho;
    }
    return to_numpy(rho);
  }, py::arg("rho0"), py::arg("h"), py::arg("t"), py::arg("decoherence") = py::none(),
        py::arg("dt") = py::none());
  m.def("steady_state", [](const ComplexArray& h, const DecoherenceParams& dec) {
    return to_numpy(steady_state(from_numpy(h), make_dissipation(dec)).rho);
  }, py::arg("h"), py::arg("decoherence"));

  // Experiments.
  m.def("pl_from_p0", py::overload_cast<double, double>(&pl_from_p0), py::arg("p0"),
        py::arg("contrast") = kDefaultContrast);
  m.def("analytic_interference", &analytic_interference, py::arg("omega_p"), py::arg("omega_c"), py::arg("t"));
  m.def("optimal_durations", [](double omega_c, double omega_p, int max_index) {
    py::list out;
    for (const auto& o : optimal_durations(omega_c, omega_p, max_index)) {
      py::dict d;
      d["t"] = o.t;
      d["family"] = o.family == OptimalFamily::A ? "A" : "B";
      d["n"] = o.n;
      d["k"] = o.k;
      d["residual"] = o.residual;
      out.append(d);
    }
    return out;
  }, py::arg("omega_c"), py::arg("omega_p"), py::arg("max_index") = 100);
  m.def("spectrum_scan", [](const DriveParams& d, const RealArray& grid, double duration,
                            const py::object& dec, unsigned threads, double noise_sigma,
                            std::uint64_t seed) {
    const auto axis = to_vector(grid);
    const auto decoherence = optional_decoherence(dec);
    ScanOptions opt;
    opt.threads = threads;
    opt.noise = {noise_sigma, seed};
    ScanResult scan;
    {
      py::gil_scoped_release release;
      scan = spectrum_scan(d, axis, duration, decoherence, opt);
    }
    py::dict out;
    out["delta_p"] = py::array_t<double>(scan.axis.size(), scan.axis.data());
    out["delta_p_mhz"] = py::array_t<double>(scan.axis_mhz.size(), scan.axis_mhz.data());
    out["p0"] = py::array_t<double>(scan.p0.size(), scan.p0.data());
    out["pl"] = py::array_t<double>(scan.pl.size(), scan.pl.data());
    out["dips"] = dips_list(find_dips(scan));
    return out;
  }, py::arg("drive"), py::arg("grid"), py::arg("duration"), py::arg("decoherence") = py::none(),
        py::arg("threads") = 1, py::arg("noise_sigma") = 0.0, py::arg("seed") = 0);
  m.def("dynamics_trace", [](const DriveParams& d, int n_max, const py::object& dec, Branch branch) {
    const auto decoherence = optional_decoherence(dec);
    TimeTrace trace;
    {
      py::gil_scoped_release release;
      trace = dynamics_trace(d, n_max, decoherence, branch);
    }
    return trace_dict(trace);
  }, py::arg("drive"), py::arg("n_max"), py::arg("decoherence") = py::none(),
        py::arg("branch") = Branch::plus);
  m.def("rabi_trace", [](const DriveParams& d, const RealArray& times, const py::object& dec,
                         bool coupling_on) {
    return trace_dict(rabi_trace(d, to_vector(times), optional_decoherence(dec), coupling_on));
  }, py::arg("drive"), py::arg("times"), py::arg("decoherence") = py::none(),
        py::arg("coupling_on") = false);
  m.def("find_dips", [](const RealArray& axis, const RealArray& values) {
    return dips_list(find_dips(to_vector(axis), to_vector(values)));
  }, py::arg("axis"), py::arg("values"));

  // Fitting.
  m.def("fit", [](const std::string& model, const RealArray& t, const RealArray& y, const ParamMap& init,
                  const std::set<std::string>& fixed,
                  const std::map<std::string, std::pair<double, double>>& bounds, int multi_start,
                  std::uint64_t seed) {
    const auto tv = to_vector(t), yv = to_vector(y);
    if (tv.size() != yv.size()) throw InvalidInput("t and y must have the same length");
    std::vector<DataPoint> data;
    for (std::size_t i = 0; i < tv.size(); ++i) data.push_back({tv[i], yv[i]});
    FitOptions opt;
    opt.fixed = fixed;
    opt.bounds = bounds;
    opt.multi_start = multi_start;
    opt.seed = seed;
    const auto r = fit(fit_model_from_string(model), data, init, opt);
    py::dict out;
    out["params"] = r.params;
    out["std_errors"] = r.std_errors;
    out["derived"] = r.derived;
    out["residual_norm"] = r.residual_norm;
    out["converged"] = r.converged;
    out["iterations"] = r.iterations;
    return out;
  }, py::arg("model"), py::arg("t"), py::arg("y"), py::arg("init"),
        py::arg("fixed") = std::set<std::string>{},
        py::arg("bounds") = std::map<std::string, std::pair<double, double>>{},
        py::arg("multi_start") = 0, py::arg("seed") = 0);
  m.def("evaluate_model", [](const std::string& model, const RealArray& t, const ParamMap& params) {
    const auto id = fit_model_from_string(model);
    const auto names = parameter_names(id);
    std::vector<double> theta;
    for (auto n : names) {
      auto it = params.find(std::string(n));
      if (it == params.end()) throw InvalidInput("missing parameter '" + std::string(n) + "'");
      theta.push_back(it->second);
    }
    const auto tv = to_vector(t);
    py::array_t<double> out(tv.size());
    auto v = out.mutable_unchecked<1>();
    for (std::size_t i = 0; i < tv.size(); ++i) v(i) = evaluate_model(id, tv[i], theta);
    return out;
  }, py::arg("model"), py::arg("t"), py::arg("params"));

  m.def("run_cli", [](std::vector<std::string> args) {
    args.insert(args.begin(), "atsim");
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return py::make_tuple(code, out.str(), err.str());
  }, py::arg("args"));
}
