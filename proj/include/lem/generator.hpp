#pragma once

#include "lem/model.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace lem::io {

/// Ownership probabilities, one per device class, each in [0, 1].
struct DeviceMix {
  double pv = 0.7;
  double bess = 0.3;
  double ev = 0.3;
  double fl = 0.5;

  bool operator==(const DeviceMix&) const = default;
};

/// Daily profile shapes, evaluated at clock hours.
struct ProfileShape {
  double price_offpeak = 30.0;  // currency/MWh
  double price_peak = 80.0;     // evening price peak
  double loss_cost = 50.0;      // currency/MWh
  double load_valley = 0.55;    // night load as a fraction of peak
  double pv_peak = 0.85;        // midday PV capacity factor

  bool operator==(const ProfileShape&) const = default;
};

struct GeneratorSpec {
  std::string name;
  std::uint64_t seed = 1;
  std::string feeder = "six_bus";  // six_bus | ieee69
  double penetration = 0.3;        // share of customers at each load point that are prosumers
  double customer_kw = 20.0;       // each load point is split into customers of about this peak
  int horizon = 24;
  double dt = 1.0;
  int start_hour = 12;  // clock hour of t = 0; noon keeps overnight EV stays inside the day
  DeviceMix devices;
  ProfileShape profiles;
  AdmmConfig admm;

  bool operator==(const GeneratorSpec&) const = default;
};

/// Throws InputError naming the inconsistent field.
void validate_generator_spec(const GeneratorSpec& spec);

/// Reads a JSON generator spec; unspecified fields keep their defaults.
GeneratorSpec load_generator_spec(const std::filesystem::path& file);

/// Same from JSON text; `source` names the input in error messages.
GeneratorSpec parse_generator_spec(const std::string& text, const std::string& source = "spec");

/// Deterministic synthetic scenario in physical units. Every customer draws
/// its membership and devices from its own stream keyed by (seed, bus,
/// customer), so raising the penetration only adds prosumers.
Scenario generate_scenario(const GeneratorSpec& spec);

/// Bus and line data of a built-in feeder in physical units, without
/// prosumers or profiles.
NetworkModel feeder_template(const std::string& feeder);

}  // namespace lem::io
