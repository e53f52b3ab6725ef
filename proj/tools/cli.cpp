#include "lem/cli.hpp"

#include "lem/generator.hpp"
#include "lem/io.hpp"
#include "lem/market.hpp"
#include "lem/oracle.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>
#include <ostream>

namespace lem::cli {
namespace {

struct ClearArgs {
  std::string scenario, out, mode = "distributed", solver = "exact";
  std::optional<double> rho, rho_prime, eps1, eps2;
  std::optional<int> max_outer, max_inner;
  int threads = 1;
  bool log_messages = false;
  bool fix_binaries = false;
};

void apply_overrides(const ClearArgs& a, AdmmConfig& cfg) {
  if (a.rho) cfg.rho = *a.rho;
  if (a.rho_prime) cfg.rho_prime = *a.rho_prime;
  if (a.eps1) cfg.eps1 = *a.eps1;
  if (a.eps2) cfg.eps2 = *a.eps2;
  if (a.max_outer) cfg.max_outer = *a.max_outer;
  if (a.max_inner) cfg.max_inner = *a.max_inner;
}

void print_costs(const io::RunReport& rep, std::ostream& out) {
  out << "status " << rep.status << ", outer iterations " << rep.outer_iterations << "\n"
      << "lmo cost " << io::format_number(rep.costs.lmo) << ", dso cost " << io::format_number(rep.costs.dso)
      << ", device cost " << io::format_number(rep.costs.device_total) << ", social cost "
      << io::format_number(rep.costs.social()) << "\n";
  for (const auto& v : rep.violations) out << "violation: " << v << "\n";
}

int run_clear(const ClearArgs& a, std::ostream& out, std::ostream& err) {
  Scenario sc = io::load_scenario(a.scenario);
  apply_overrides(a, sc.admm);
  if (auto rep = validate_scenario(sc); !rep.ok()) throw InputError(rep.summary());

  market::ClearingOptions opts;
  opts.prosumer.mode = a.solver == "exact" ? prosumer::SolveMode::Exact : prosumer::SolveMode::RelaxRepair;
  opts.threads = a.threads;
  opts.dso.threads = a.threads;
  opts.log_messages = a.log_messages;

  if (a.mode == "distributed") {
    const market::ClearingResult res = market::run_clearing(sc, opts);
    const io::RunReport rep = io::make_report(sc, res);
    io::emit_results(rep, a.out);
    if (a.log_messages) {
      std::ofstream log(std::filesystem::path(a.out) / "messages.log", std::ios::binary);
      for (const auto& m : rep.messages) log << m << "\n";
      if (!log) throw io::IoError("cannot write " + (std::filesystem::path(a.out) / "messages.log").string());
    }
    print_costs(rep, out);
    if (res.status != market::Status::Converged) {
      err << "not converged within " << sc.admm.max_outer << " outer iterations; results written for the last iterate\n";
      return kNotConverged;
    }
    return kSuccess;
  }

  oracle::OracleResult res;
  if (a.mode == "centralized") {
    if (a.fix_binaries) {
      const market::ClearingResult dist = market::run_clearing(sc, opts);
      res = oracle::solve_centralized(sc, &dist);
    } else {
      res = oracle::solve_centralized(sc);
    }
  } else {
    res = oracle::solve_selfish(sc, opts.prosumer, opts.dso, a.threads);
  }
  const io::RunReport rep = io::make_report(sc, res);
  io::emit_results(rep, a.out);
  print_costs(rep, out);
  out << "note: " << rep.note << "\n";
  return kSuccess;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Local energy market clearing with distribution network constraints", "lem"};
  app.require_subcommand(1);

  ClearArgs clear;
  auto* c = app.add_subcommand("clear", "Clear a scenario and write results");
  c->add_option("--scenario", clear.scenario, "Scenario directory")->required();
  c->add_option("--out", clear.out, "Output directory")->required();
  c->add_option("--mode", clear.mode, "Clearing mode")
      ->check(CLI::IsMember({"distributed", "centralized", "selfish"}))
      ->capture_default_str();
  c->add_option("--rho", clear.rho, "Outer-loop penalty");
  c->add_option("--rho-prime", clear.rho_prime, "Inner-loop penalty");
  c->add_option("--eps1", clear.eps1, "Outer-loop tolerance");
  c->add_option("--eps2", clear.eps2, "Inner-loop tolerance");
  c->add_option("--max-outer", clear.max_outer, "Outer iteration cap");
  c->add_option("--max-inner", clear.max_inner, "Inner iteration cap");
  c->add_option("--prosumer-solver", clear.solver, "Prosumer binary handling")
      ->check(CLI::IsMember({"exact", "relax-repair"}))
      ->capture_default_str();
  c->add_option("--threads", clear.threads, "Concurrent prosumer and hourly DSO solves")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  c->add_flag("--log-messages", clear.log_messages, "Write agent messages to messages.log");
  c->add_flag("--fix-binaries", clear.fix_binaries,
              "Centralized mode: pin binaries to a distributed run instead of relaxing them");

  std::string spec_file, gen_out;
  auto* g = app.add_subcommand("generate", "Write a synthetic scenario directory");
  g->add_option("--spec", spec_file, "Generator spec (JSON)")->required();
  g->add_option("--out", gen_out, "Output directory")->required();

  std::string val_dir;
  auto* v = app.add_subcommand("validate", "Load and validate a scenario directory");
  v->add_option("--scenario", val_dir, "Scenario directory")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto used = app.get_subcommands();
    err << (used.empty() ? app.help() : used.front()->help());
    return kInputError;
  }

  try {
    if (*c) return run_clear(clear, out, err);
    if (*g) {
      const io::GeneratorSpec spec = io::load_generator_spec(spec_file);
      const Scenario sc = io::generate_scenario(spec);
      io::write_scenario(sc, gen_out);
      out << "wrote " << sc.network.buses.size() << " buses, " << sc.network.lines.size() << " lines, "
          << sc.prosumers.size() << " prosumers, " << sc.horizon << " hours to " << gen_out << "\n";
      return kSuccess;
    }
    const Scenario sc = io::load_scenario(val_dir);
    out << "ok: " << sc.network.buses.size() << " buses, " << sc.network.lines.size() << " lines, "
        << sc.prosumers.size() << " prosumers, " << sc.horizon << " hours\n";
    return kSuccess;
  } catch (const io::ScenarioFormatError& e) {
    for (const auto& m : e.errors()) err << "error: " << m << "\n";
    return kInputError;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const io::IoError& e) {
    err << "error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "solve failed: " << e.what() << "\n";
    return kSolveFailed;
  }
}

}  // namespace lem::cli
