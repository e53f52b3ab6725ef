#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lem {

/// Raised for malformed scenarios, bad parameters and violated preconditions.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class UnitSystem { Physical, PerUnit };

struct Bus {
  int id = 0;
  double vmin = 0.95;  // voltage magnitude, pu
  double vmax = 1.05;
  bool is_pcc = false;
  // Non-participating (background) peak load at this bus; scaled hourly by
  // the scenario load profile.
  double p_load = 0.0;
  double q_load = 0.0;

  bool operator==(const Bus&) const = default;
};

struct Line {
  int from_bus = 0;
  int to_bus = 0;
  double r = 0.0;
  double x = 0.0;
  double s_max = 1.0;

  bool operator==(const Line&) const = default;
};

struct NetworkModel {
  std::vector<Bus> buses;
  std::vector<Line> lines;
  double base_mva = 1.0;
  double base_kv = 1.0;

  std::size_t bus_index(int id) const;  // throws InputError on unknown id
  bool has_bus(int id) const;
  std::size_t pcc_index() const;

  bool operator==(const NetworkModel&) const = default;
};

struct PvUnit {
  double capacity = 0.0;  // forecast peak; p_forecast[t] = capacity * pv_cf[t]
  std::vector<double> p_forecast;
  double s_inv = 0.0;
  double pf = 1.0;

  bool operator==(const PvUnit&) const = default;
};

enum class StorageKind { Bess, Ev };

/// Battery or EV. Hours outside [t_arrive, t_depart] force zero power.
struct StorageDevice {
  StorageKind kind = StorageKind::Bess;
  double p_ch_max = 0.0;
  double p_dch_max = 0.0;
  double eta_ch = 1.0;
  double eta_dch = 1.0;
  double e0 = 0.0;
  double soc_min = 0.0;
  double soc_max = 0.0;
  int t_arrive = 0;
  int t_depart = 0;
  double e_trip = 0.0;
  double throughput_cost = 0.0;

  int window_length() const { return t_depart - t_arrive + 1; }
  bool in_window(int t) const { return t >= t_arrive && t <= t_depart; }

  bool operator==(const StorageDevice&) const = default;
};

struct FlexibleLoad {
  double max_share = 0.0;  // p_fl_max[t] = max_share * baseline_load[t]
  std::vector<double> p_fl_max;
  int t_max = 0;
  double e_min = 0.0;
  double discomfort_cost = 0.0;

  bool operator==(const FlexibleLoad&) const = default;
};

struct Prosumer {
  int id = 0;
  int bus_id = 0;
  double peak_load = 0.0;  // baseline_load[t] = peak_load * load_scale[t]
  std::vector<double> baseline_load;
  double pf_load = 1.0;
  std::vector<PvUnit> pvs;
  std::vector<StorageDevice> storages;
  std::vector<FlexibleLoad> fls;

  bool operator==(const Prosumer&) const = default;
};

struct AdmmConfig {
  double rho = 1.0;
  double rho_prime = 1.0;
  double eps1 = 1e-4;
  double eps2 = 1e-4;
  int max_outer = 100;
  int max_inner = 50;
  double lambda_p_init = 0.0;
  double lambda_loss_init = 0.0;

  bool operator==(const AdmmConfig&) const = default;
};

void validate_admm_config(const AdmmConfig& cfg);  // throws InputError

/// Hourly exogenous profiles. Prices are currency per unit energy.
struct Profiles {
  std::vector<double> wem_price;
  std::vector<double> loss_cost;
  std::vector<double> load_scale;
  std::vector<double> pv_cf;

  bool operator==(const Profiles&) const = default;
};

struct Scenario {
  std::string name;
  UnitSystem units = UnitSystem::Physical;
  NetworkModel network;
  std::vector<Prosumer> prosumers;
  int horizon = 24;
  double dt = 1.0;
  Profiles profiles;
  AdmmConfig admm;

  const std::vector<double>& wem_price() const { return profiles.wem_price; }
  const std::vector<double>& loss_cost() const { return profiles.loss_cost; }

  /// Background (non-participating) active/reactive load at bus index n, hour t.
  double background_p(std::size_t n, int t) const;
  double background_q(std::size_t n, int t) const;

  bool operator==(const Scenario&) const = default;
};

struct ValidationReport {
  std::vector<std::string> errors;
  bool ok() const { return errors.empty(); }
  std::string summary() const;
};

ValidationReport validate_network(const NetworkModel& net);
ValidationReport validate_scenario(const Scenario& sc);

/// Recomputes every hourly vector (baseline loads, PV forecasts, FL limits)
/// from the per-device shape parameters and the scenario profiles.
void materialize_profiles(Scenario& sc);

/// Converts a physical-unit scenario (MW, MWh, ohm, currency/MWh) to per-unit.
/// Already per-unit scenarios are returned unchanged.
Scenario to_per_unit(const Scenario& raw);
Scenario from_per_unit(const Scenario& pu);

double impedance_base(double base_kv, double base_mva);

/// Reactive power drawn at a lagging power factor.
double reactive_from_pf(double p, double pf);

}  // namespace lem
