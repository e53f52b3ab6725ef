#include "lem/cli.hpp"
#include "lem/generator.hpp"
#include "lem/io.hpp"
#include "lem/market.hpp"
#include "lem/oracle.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

namespace py = pybind11;
using namespace lem;

namespace {

// [rows][cols] -> 2-D float array, scaled.
py::array_t<double> to_array(const std::vector<std::vector<double>>& m, double scale = 1.0) {
  const std::size_t rows = m.size(), cols = rows ? m.front().size() : 0;
  py::array_t<double> a({rows, cols});
  auto v = a.mutable_unchecked<2>();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) v(i, j) = m[i][j] * scale;
  return a;
}

py::array_t<double> to_array(const std::vector<double>& x, double scale = 1.0) {
  py::array_t<double> a(x.size());
  auto v = a.mutable_unchecked<1>();
  for (std::size_t i = 0; i < x.size(); ++i) v(i) = x[i] * scale;
  return a;
}

py::dict costs_dict(const io::RunReport& r) {
  py::dict d;
  d["lmo"] = r.costs.lmo;
  d["dso"] = r.costs.dso;
  d["device_total"] = r.costs.device_total;
  d["social"] = r.costs.social();
  d["prosumer_average"] = r.costs.prosumer_average();
  py::dict per;
  for (std::size_t a = 0; a < r.prosumer_ids.size(); ++a) per[py::int_(r.prosumer_ids[a])] = r.costs.prosumers.at(a);
  d["prosumers"] = per;
  return d;
}

py::list trace_list(const io::RunReport& r) {
  py::list out;
  for (const auto& o : r.trace.outer) {
    py::dict d;
    d["outer"] = o.outer;
    d["inner_iterations"] = o.inner_iterations;
    d["multiplier_change"] = o.lambda_p_change;
    d["residual"] = o.consensus_residual;
    d["objective"] = o.prosumer_objective;
    d["subproblem_gap"] = o.max_subproblem_gap;
    d["subproblem_nodes"] = o.subproblem_nodes;
    d["stop"] = o.stop;
    out.append(d);
  }
  return out;
}

market::ClearingOptions clearing_options(const std::string& solver, int threads, bool log_messages) {
  market::ClearingOptions o;
  if (solver == "exact")
    o.prosumer.mode = prosumer::SolveMode::Exact;
  else if (solver == "relax-repair")
    o.prosumer.mode = prosumer::SolveMode::RelaxRepair;
  else
    throw InputError("prosumer_solver must be 'exact' or 'relax-repair'");
  if (threads < 1) throw InputError("threads must be positive");
  o.threads = o.dso.threads = threads;
  o.log_messages = log_messages;
  return o;
}

io::RunReport clear(const Scenario& sc, const std::string& mode, const std::string& solver, int threads,
                    bool log_messages, bool fix_binaries) {
  const auto opts = clearing_options(solver, threads, log_messages);
  py::gil_scoped_release release;
  if (mode == "distributed") return io::make_report(sc, market::run_clearing(sc, opts));
  if (mode == "centralized") {
    if (!fix_binaries) return io::make_report(sc, oracle::solve_centralized(sc));
    const auto dist = market::run_clearing(sc, opts);
    return io::make_report(sc, oracle::solve_centralized(sc, &dist));
  }
  if (mode == "selfish") return io::make_report(sc, oracle::solve_selfish(sc, opts.prosumer, opts.dso, threads));
  throw InputError("mode must be 'distributed', 'centralized' or 'selfish'");
}

}  // namespace

PYBIND11_MODULE(_lem, m) {
  m.doc() = "Local energy market clearing with distribution network constraints";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<io::IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<oracle::OracleInfeasible>(m, "OracleInfeasible", PyExc_RuntimeError);
  py::register_exception<dso::DsoInfeasible>(m, "DsoInfeasible", PyExc_RuntimeError);

  py::class_<AdmmConfig>(m, "AdmmConfig")
      .def(py::init<>())
      .def_readwrite("rho", &AdmmConfig::rho)
      .def_readwrite("rho_prime", &AdmmConfig::rho_prime)
      .def_readwrite("eps1", &AdmmConfig::eps1)
      .def_readwrite("eps2", &AdmmConfig::eps2)
      .def_readwrite("max_outer", &AdmmConfig::max_outer)
      .def_readwrite("max_inner", &AdmmConfig::max_inner)
      .def_readwrite("lambda_p_init", &AdmmConfig::lambda_p_init)
      .def_readwrite("lambda_loss_init", &AdmmConfig::lambda_loss_init);

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("horizon", &Scenario::horizon)
      .def_readonly("dt", &Scenario::dt)
      .def_readwrite("admm", &Scenario::admm)
      .def_property_readonly("base_mva", [](const Scenario& s) { return s.network.base_mva; })
      .def_property_readonly("bus_ids",
                             [](const Scenario& s) {
                               std::vector<int> ids;
                               for (const auto& b : s.network.buses) ids.push_back(b.id);
                               return ids;
                             })
      .def_property_readonly("lines",
                             [](const Scenario& s) {
                               std::vector<std::pair<int, int>> l;
                               for (const auto& ln : s.network.lines) l.emplace_back(ln.from_bus, ln.to_bus);
                               return l;
                             })
      .def_property_readonly("prosumers",
                             [](const Scenario& s) {
                               py::list out;
                               for (const auto& p : s.prosumers) {
                                 py::dict d;
                                 d["id"] = p.id;
                                 d["bus"] = p.bus_id;
                                 d["peak_load"] = p.peak_load;
                                 d["pv"] = p.pvs.size();
                                 std::size_t ev = 0;
                                 for (const auto& st : p.storages) ev += st.kind == StorageKind::Ev;
                                 d["ev"] = ev;
                                 d["bess"] = p.storages.size() - ev;
                                 d["fl"] = p.fls.size();
                                 out.append(d);
                               }
                               return out;
                             })
      .def_property_readonly("wem_price", [](const Scenario& s) { return s.profiles.wem_price; })
      .def("__eq__", [](const Scenario& a, const Scenario& b) { return a == b; })
      .def("__repr__", [](const Scenario& s) {
        std::ostringstream os;
        os << "<Scenario '" << s.name << "': " << s.network.buses.size() << " buses, " << s.prosumers.size()
           << " prosumers, " << s.horizon << " hours>";
        return os.str();
      });

  py::class_<io::RunReport>(m, "Report")
      .def_readonly("mode", &io::RunReport::mode)
      .def_readonly("status", &io::RunReport::status)
      .def_readonly("outer_iterations", &io::RunReport::outer_iterations)
      .def_readonly("bus_ids", &io::RunReport::bus_ids)
      .def_readonly("prosumer_ids", &io::RunReport::prosumer_ids)
      .def_readonly("violations", &io::RunReport::violations)
      .def_readonly("note", &io::RunReport::note)
      .def_readonly("messages", &io::RunReport::messages)
      .def_property_readonly("converged", [](const io::RunReport& r) { return r.status != "iter_limit"; })
      .def_property_readonly(
          "dlmp", [](const io::RunReport& r) { return to_array(r.dlmp, 1.0 / r.base_mva); },
          "[bus, hour] prices in currency per MWh; empty when the mode sets no prices")
      .def_property_readonly(
          "p_net", [](const io::RunReport& r) {
            std::vector<std::vector<double>> p;
            for (const auto& s : r.schedules) p.push_back(s.p_net);
            return to_array(p, r.base_mva);
          },
          "[prosumer, hour] net consumption in MW")
      .def_property_readonly("p_ug", [](const io::RunReport& r) { return to_array(r.p_ug, r.base_mva); })
      .def_property_readonly("p_loss", [](const io::RunReport& r) { return to_array(r.p_loss, r.base_mva); })
      .def_property_readonly("costs", &costs_dict)
      .def_property_readonly("trace", &trace_list)
      .def("emit", [](const io::RunReport& r, const std::filesystem::path& dir) { io::emit_results(r, dir); },
           py::arg("out_dir"), "Write dlmp.csv, schedules.csv, trace.csv and summary.json")
      .def("__repr__", [](const io::RunReport& r) {
        std::ostringstream os;
        os << "<Report " << r.mode << " " << r.status << ": social cost " << io::format_number(r.costs.social()) << ">";
        return os.str();
      });

  m.def("load_scenario", &io::load_scenario, py::arg("path"));
  m.def("write_scenario", &io::write_scenario, py::arg("scenario"), py::arg("path"));
  m.def(
      "generate_scenario",
      [](const py::object& spec) {
        const std::string text = py::module_::import("json").attr("dumps")(spec).cast<std::string>();
        return io::generate_scenario(io::parse_generator_spec(text, "spec"));
      },
      py::arg("spec"), "Synthetic scenario from a generator spec given as a dict");
  m.def("clear", &clear, py::arg("scenario"), py::arg("mode") = "distributed", py::arg("prosumer_solver") = "exact",
        py::arg("threads") = 1, py::arg("log_messages") = false, py::arg("fix_binaries") = false,
        "Clear the market in one of the modes and return a Report");
  m.def(
      "audit_privacy",
      [](const std::vector<std::string>& log) {
        const auto r = market::audit_privacy(log);
        return py::make_tuple(r.pass, r.violations);
      },
      py::arg("messages"), "(passed, violations) for a message log");
  m.def(
      "cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = cli::cli_main(args, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"), "Run the command line; returns (exit code, stdout, stderr)");
}
