#include "lem/generator.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

namespace lem::io {

namespace {

struct BranchRow {
  int from, to;
  double r, x;    // ohm
  double p, q;    // receiving-end load, kW / kvar
};

// Baran & Wu 69-bus feeder, 12.66 kV.
constexpr BranchRow kIeee69[] = {
    {1, 2, 0.0005, 0.0012, 0, 0},          {2, 3, 0.0005, 0.0012, 0, 0},
    {3, 4, 0.0015, 0.0036, 0, 0},          {4, 5, 0.0251, 0.0294, 0, 0},
    {5, 6, 0.3660, 0.1864, 2.6, 2.2},      {6, 7, 0.3811, 0.1941, 40.4, 30},
    {7, 8, 0.0922, 0.0470, 75, 54},        {8, 9, 0.0493, 0.0251, 30, 22},
    {9, 10, 0.8190, 0.2707, 28, 19},       {10, 11, 0.1872, 0.0619, 145, 104},
    {11, 12, 0.7114, 0.2351, 145, 104},    {12, 13, 1.0300, 0.3400, 8, 5},
    {13, 14, 1.0440, 0.3450, 8, 5.5},      {14, 15, 1.0580, 0.3496, 0, 0},
    {15, 16, 0.1966, 0.0650, 45.5, 30},    {16, 17, 0.3744, 0.1238, 60, 35},
    {17, 18, 0.0047, 0.0016, 60, 35},      {18, 19, 0.3276, 0.1083, 0, 0},
    {19, 20, 0.2106, 0.0690, 1, 0.6},      {20, 21, 0.3416, 0.1129, 114, 81},
    {21, 22, 0.0140, 0.0046, 5, 3.5},      {22, 23, 0.1591, 0.0526, 0, 0},
    {23, 24, 0.3463, 0.1145, 28, 20},      {24, 25, 0.7488, 0.2475, 0, 0},
    {25, 26, 0.3089, 0.1021, 14, 10},      {26, 27, 0.1732, 0.0572, 14, 10},
    {3, 28, 0.0044, 0.0108, 26, 18.6},     {28, 29, 0.0640, 0.1565, 26, 18.6},
    {29, 30, 0.3978, 0.1315, 0, 0},        {30, 31, 0.0702, 0.0232, 0, 0},
    {31, 32, 0.3510, 0.1160, 0, 0},        {32, 33, 0.8390, 0.2816, 14, 10},
    {33, 34, 1.7080, 0.5646, 19.5, 14},    {34, 35, 1.4740, 0.4873, 6, 4},
    {3, 36, 0.0044, 0.0108, 26, 18.55},    {36, 37, 0.0640, 0.1565, 26, 18.55},
    {37, 38, 0.1053, 0.1230, 0, 0},        {38, 39, 0.0304, 0.0355, 24, 17},
    {39, 40, 0.0018, 0.0021, 24, 17},      {40, 41, 0.7283, 0.8509, 1.2, 1},
    {41, 42, 0.3100, 0.3623, 0, 0},        {42, 43, 0.0410, 0.0478, 6, 4.3},
    {43, 44, 0.0092, 0.0116, 0, 0},        {44, 45, 0.1089, 0.1373, 39.22, 26.3},
    {45, 46, 0.0009, 0.0012, 39.22, 26.3}, {4, 47, 0.0034, 0.0084, 0, 0},
    {47, 48, 0.0851, 0.2083, 79, 56.4},    {48, 49, 0.2898, 0.7091, 384.7, 274.5},
    {49, 50, 0.0822, 0.2011, 384.7, 274.5}, {8, 51, 0.0928, 0.0473, 40.5, 28.3},
    {51, 52, 0.3319, 0.1114, 3.6, 2.7},    {9, 53, 0.1740, 0.0886, 4.35, 3.5},
    {53, 54, 0.2030, 0.1034, 26.4, 19},    {54, 55, 0.2842, 0.1447, 24, 17.2},
    {55, 56, 0.2813, 0.1433, 0, 0},        {56, 57, 1.5900, 0.5337, 0, 0},
    {57, 58, 0.7837, 0.2630, 0, 0},        {58, 59, 0.3042, 0.1006, 100, 72},
    {59, 60, 0.3861, 0.1172, 0, 0},        {60, 61, 0.5075, 0.2585, 1244, 888},
    {61, 62, 0.0974, 0.0496, 32, 23},      {62, 63, 0.1450, 0.0738, 0, 0},
    {63, 64, 0.7105, 0.3619, 227, 162},    {64, 65, 1.0410, 0.5302, 59, 42},
    {11, 66, 0.2012, 0.0611, 18, 13},      {66, 67, 0.0047, 0.0014, 18, 13},
    {12, 68, 0.7394, 0.2444, 28, 20},      {68, 69, 0.0047, 0.0016, 28, 20},
};

// Small feeder: 1(PCC) - 2 - 3 - 4, 3 - 5, 2 - 6.
constexpr BranchRow kSixBus[] = {
    {1, 2, 0.20, 0.40, 0, 0},      {2, 3, 0.35, 0.60, 300, 150}, {3, 4, 0.45, 0.70, 400, 200},
    {3, 5, 0.50, 0.75, 350, 170}, {2, 6, 0.40, 0.65, 250, 120},
};

template <std::size_t N>
NetworkModel build_feeder(const BranchRow (&rows)[N], double base_kv, double base_mva, double s_max_mva) {
  NetworkModel net;
  net.base_kv = base_kv;
  net.base_mva = base_mva;
  Bus pcc;
  pcc.id = 1;
  pcc.is_pcc = true;
  pcc.vmin = pcc.vmax = 1.0;
  net.buses.push_back(pcc);
  for (const BranchRow& b : rows) {
    Bus bus;
    bus.id = b.to;
    bus.vmin = 0.9;
    bus.vmax = 1.05;
    bus.p_load = b.p / 1000.0;
    bus.q_load = b.q / 1000.0;
    net.buses.push_back(bus);
    net.lines.push_back(Line{b.from, b.to, b.r, b.x, s_max_mva});
  }
  return net;
}

// Portable draws from the raw 64-bit engine output, so scenarios do not
// depend on the standard library's distribution algorithms.
class Draws {
 public:
  Draws(std::uint64_t seed, int bus, int customer) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(bus), static_cast<std::uint32_t>(customer)};
    rng_.seed(seq);
  }

  double uniform() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Normal truncated to mean +- 2 sd.
  double truncated_normal(double mean, double sd) {
    for (int i = 0; i < 64; ++i) {
      const double u1 = 1.0 - uniform();  // (0, 1]
      const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * uniform());
      if (std::abs(z) <= 2.0) return mean + sd * z;
    }
    return mean;
  }

 private:
  std::mt19937_64 rng_;
};

double bump(double hour, double center, double width) {
  double d = std::fmod(std::abs(hour - center), 24.0);
  d = std::min(d, 24.0 - d);
  return std::exp(-(d / width) * (d / width));
}

Profiles make_profiles(const GeneratorSpec& g) {
  Profiles p;
  const ProfileShape& s = g.profiles;
  for (int t = 0; t < g.horizon; ++t) {
    const double h = std::fmod(g.start_hour + t * g.dt, 24.0);
    const double price_shape = std::max(0.45 * bump(h, 8.0, 2.0), bump(h, 19.0, 2.5));
    const double load_shape = std::max(0.6 * bump(h, 8.0, 2.5), bump(h, 19.0, 3.0));
    p.wem_price.push_back(s.price_offpeak + (s.price_peak - s.price_offpeak) * price_shape);
    p.loss_cost.push_back(s.loss_cost);
    p.load_scale.push_back(s.load_valley + (1.0 - s.load_valley) * load_shape);
    p.pv_cf.push_back(h > 6.0 && h < 19.0 ? s.pv_peak * std::sin(M_PI * (h - 6.0) / 13.0) : 0.0);
  }
  return p;
}

// Horizon index of a clock time, counted from start_hour and clipped to the
// horizon.
int to_index(const GeneratorSpec& g, double clock) {
  double rel = std::fmod(clock - g.start_hour + 48.0, 24.0);
  const int idx = static_cast<int>(std::lround(rel / g.dt));
  return std::clamp(idx, 0, g.horizon - 1);
}

}  // namespace

NetworkModel feeder_template(const std::string& feeder) {
  if (feeder == "ieee69") return build_feeder(kIeee69, 12.66, 10.0, 6.0);
  if (feeder == "six_bus") return build_feeder(kSixBus, 12.66, 10.0, 2.0);
  throw InputError("unknown feeder template '" + feeder + "' (expected six_bus or ieee69)");
}

void validate_generator_spec(const GeneratorSpec& g) {
  if (g.feeder != "six_bus" && g.feeder != "ieee69")
    throw InputError("unknown feeder template '" + g.feeder + "' (expected six_bus or ieee69)");
  if (!(g.penetration >= 0.0 && g.penetration <= 1.0)) throw InputError("penetration must lie in [0, 1]");
  for (double p : {g.devices.pv, g.devices.bess, g.devices.ev, g.devices.fl})
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("device probabilities must lie in [0, 1]");
  if (!(g.customer_kw > 0.0)) throw InputError("customer_kw must be positive");
  if (g.horizon < 1) throw InputError("horizon must be at least 1");
  if (!(g.dt > 0.0)) throw InputError("dt must be positive");
  if (g.start_hour < 0 || g.start_hour > 23) throw InputError("start_hour must lie in [0, 23]");
  const ProfileShape& s = g.profiles;
  if (!(s.load_valley >= 0.0 && s.load_valley <= 1.0)) throw InputError("load_valley must lie in [0, 1]");
  if (!(s.pv_peak >= 0.0 && s.pv_peak <= 1.0)) throw InputError("pv_peak must lie in [0, 1]");
  if (s.loss_cost < 0.0) throw InputError("loss_cost must be nonnegative");
  validate_admm_config(g.admm);
}

GeneratorSpec load_generator_spec(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw InputError("cannot read generator spec " + file.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_generator_spec(text.str(), file.string());
}

GeneratorSpec parse_generator_spec(const std::string& text, const std::string& source) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError("malformed generator spec " + source + ": " + e.what());
  }
  if (!j.is_object()) throw InputError("generator spec " + source + " must be a JSON object");
  static const std::set<std::string> keys = {"name",    "seed",       "feeder", "penetration", "customer_kw", "horizon",
                                             "dt",      "start_hour", "devices", "profiles",   "admm"};
  for (const auto& [k, v] : j.items())
    if (!keys.count(k)) throw InputError("unknown key '" + k + "' in " + source);
  GeneratorSpec g;
  try {
    g.name = j.value("name", g.name);
    g.seed = j.value("seed", g.seed);
    g.feeder = j.value("feeder", g.feeder);
    g.penetration = j.value("penetration", g.penetration);
    g.customer_kw = j.value("customer_kw", g.customer_kw);
    g.horizon = j.value("horizon", g.horizon);
    g.dt = j.value("dt", g.dt);
    g.start_hour = j.value("start_hour", g.start_hour);
    if (j.contains("devices")) {
      const auto& d = j.at("devices");
      for (const auto& [k, v] : d.items())
        if (k != "pv" && k != "bess" && k != "ev" && k != "fl")
          throw InputError("unknown key 'devices." + k + "' in " + source);
      g.devices.pv = d.value("pv", g.devices.pv);
      g.devices.bess = d.value("bess", g.devices.bess);
      g.devices.ev = d.value("ev", g.devices.ev);
      g.devices.fl = d.value("fl", g.devices.fl);
    }
    if (j.contains("profiles")) {
      const auto& p = j.at("profiles");
      static const std::set<std::string> pk = {"price_offpeak", "price_peak", "loss_cost", "load_valley", "pv_peak"};
      for (const auto& [k, v] : p.items())
        if (!pk.count(k)) throw InputError("unknown key 'profiles." + k + "' in " + source);
      ProfileShape& s = g.profiles;
      s.price_offpeak = p.value("price_offpeak", s.price_offpeak);
      s.price_peak = p.value("price_peak", s.price_peak);
      s.loss_cost = p.value("loss_cost", s.loss_cost);
      s.load_valley = p.value("load_valley", s.load_valley);
      s.pv_peak = p.value("pv_peak", s.pv_peak);
    }
    if (j.contains("admm")) {
      const auto& a = j.at("admm");
      static const std::set<std::string> ak = {"rho",       "rho_prime",     "eps1",           "eps2",
                                               "max_outer", "max_inner",     "lambda_p_init",  "lambda_loss_init"};
      for (const auto& [k, v] : a.items())
        if (!ak.count(k)) throw InputError("unknown key 'admm." + k + "' in " + source);
      AdmmConfig& c = g.admm;
      c.rho = a.value("rho", c.rho);
      c.rho_prime = a.value("rho_prime", c.rho_prime);
      c.eps1 = a.value("eps1", c.eps1);
      c.eps2 = a.value("eps2", c.eps2);
      c.max_outer = a.value("max_outer", c.max_outer);
      c.max_inner = a.value("max_inner", c.max_inner);
      c.lambda_p_init = a.value("lambda_p_init", c.lambda_p_init);
      c.lambda_loss_init = a.value("lambda_loss_init", c.lambda_loss_init);
    }
  } catch (const nlohmann::json::type_error& e) {
    throw InputError("wrong value type in " + source + ": " + e.what());
  }
  validate_generator_spec(g);
  return g;
}

Scenario generate_scenario(const GeneratorSpec& g) {
  validate_generator_spec(g);
  Scenario sc;
  sc.name = g.name.empty() ? g.feeder : g.name;
  sc.units = UnitSystem::Physical;
  sc.network = feeder_template(g.feeder);
  sc.horizon = g.horizon;
  sc.dt = g.dt;
  sc.profiles = make_profiles(g);
  sc.admm = g.admm;

  const int T = g.horizon;
  int next_id = 1;
  for (Bus& bus : sc.network.buses) {
    if (bus.p_load <= 0.0) continue;
    const double p_bus = bus.p_load, q_bus = bus.q_load;
    const int customers = std::max(1, static_cast<int>(std::lround(p_bus * 1000.0 / g.customer_kw)));
    const double peak = p_bus / customers;
    const double pf = p_bus / std::hypot(p_bus, q_bus);
    int joined = 0;
    for (int c = 0; c < customers; ++c) {
      // Fixed draw order per customer; values are drawn whether or not they
      // are used so the stream does not depend on ownership.
      Draws d(g.seed, bus.id, c);
      const double member = d.uniform();
      const double own_pv = d.uniform(), own_bess = d.uniform(), own_ev = d.uniform(), own_fl = d.uniform();
      const double pv_size = d.uniform(0.5, 1.0);
      const double bess_power = d.uniform(0.3, 0.5), bess_hours = d.uniform(2.0, 4.0);
      const double ev_hours = d.uniform(1.5, 2.5);
      const double arrive = d.truncated_normal(18.0, 2.0), depart = d.truncated_normal(7.0, 1.0) + 24.0;
      const double ev_e0 = d.uniform(0.2, 0.5), ev_goal = d.uniform(0.6, 0.8);
      if (member >= g.penetration) continue;
      ++joined;

      Prosumer p;
      p.id = next_id++;
      p.bus_id = bus.id;
      p.peak_load = peak;
      p.pf_load = pf;
      if (own_pv < g.devices.pv) {
        PvUnit u;
        u.capacity = pv_size * peak;
        u.s_inv = 1.1 * u.capacity;
        u.pf = 0.95;
        p.pvs.push_back(u);
      }
      if (own_bess < g.devices.bess) {
        StorageDevice s;
        s.kind = StorageKind::Bess;
        s.p_ch_max = s.p_dch_max = bess_power * peak;
        s.eta_ch = s.eta_dch = 0.95;
        s.soc_max = bess_hours * s.p_ch_max;
        s.soc_min = 0.1 * s.soc_max;
        s.e0 = s.e_trip = 0.5 * s.soc_max;
        s.t_arrive = 0;
        s.t_depart = T - 1;
        s.throughput_cost = 2.0;
        p.storages.push_back(s);
      }
      if (own_ev < g.devices.ev) {
        StorageDevice s;
        s.kind = StorageKind::Ev;
        s.soc_max = ev_hours * peak;
        s.p_ch_max = s.p_dch_max = s.soc_max / 5.0;
        s.eta_ch = s.eta_dch = 0.92;
        s.e0 = ev_e0 * s.soc_max;
        s.t_arrive = to_index(g, arrive);
        s.t_depart = std::max(s.t_arrive, to_index(g, depart));
        // Keep the trip target reachable with some slack.
        const double reach = s.e0 + 0.9 * s.eta_ch * s.p_ch_max * g.dt * s.window_length();
        s.e_trip = std::min(ev_goal * s.soc_max, reach);
        s.throughput_cost = 4.0;
        p.storages.push_back(s);
      }
      if (own_fl < g.devices.fl) {
        FlexibleLoad f;
        f.max_share = 0.05;
        f.t_max = std::min(4, T);
        f.discomfort_cost = 10.0;
        double e = 0.0;
        for (int t = 0; t < T; ++t) e += peak * sc.profiles.load_scale[t] * g.dt;
        f.e_min = 0.95 * e;
        p.fls.push_back(f);
      }
      sc.prosumers.push_back(std::move(p));
    }
    // Customers that did not join stay in the background load.
    bus.p_load = p_bus * (customers - joined) / customers;
    bus.q_load = q_bus * (customers - joined) / customers;
  }
  materialize_profiles(sc);
  return sc;
}

}  // namespace lem::io
