#include "lem/io.hpp"

#include <json.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

namespace lem::io {

using nlohmann::json;

namespace {

std::string join_errors(const std::vector<std::string>& errors) {
  std::string s = "scenario has " + std::to_string(errors.size()) + " error(s):";
  for (const auto& e : errors) s += "\n  " + e;
  return s;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  out.close();
  if (!out) throw IoError("write failed for " + path.string());
}

struct Table {
  std::string file;
  std::map<std::string, std::size_t> columns;
  struct Row {
    int line = 0;
    std::vector<std::string> fields;
  };
  std::vector<Row> rows;
};

std::optional<Table> read_table(const fs::path& dir, const std::string& file,
                                const std::vector<std::string>& required, std::vector<std::string>& errors) {
  const fs::path path = dir / file;
  if (!fs::exists(path)) {
    errors.push_back("missing file " + file);
    return std::nullopt;
  }
  std::istringstream in(read_file(path));
  Table t;
  t.file = file;
  std::string line;
  int number = 0;
  bool have_header = false;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto fields = split(line);
    if (!have_header) {
      if (number == 1 && fields[0].rfind("\xEF\xBB\xBF", 0) == 0) fields[0].erase(0, 3);
      for (std::size_t i = 0; i < fields.size(); ++i)
        if (!t.columns.emplace(fields[i], i).second)
          errors.push_back("duplicate column '" + fields[i] + "' in " + file);
      width = fields.size();
      have_header = true;
      continue;
    }
    if (fields.size() != width) {
      errors.push_back("expected " + std::to_string(width) + " fields, got " + std::to_string(fields.size()) +
                       " at " + file + ":" + std::to_string(number));
      continue;
    }
    t.rows.push_back({number, std::move(fields)});
  }
  if (!have_header) {
    errors.push_back("missing header row in " + file);
    return std::nullopt;
  }
  bool complete = true;
  for (const auto& c : required)
    if (!t.columns.count(c)) {
      errors.push_back("missing column '" + c + "' in " + file);
      complete = false;
    }
  if (!complete) return std::nullopt;
  return t;
}

// Field access for one row; problems are recorded, not thrown, so a single
// pass reports every malformed value.
class RowReader {
 public:
  RowReader(const Table& t, const Table::Row& r, std::vector<std::string>& errors)
      : table_(t), row_(r), errors_(errors) {}

  std::string where() const { return table_.file + ":" + std::to_string(row_.line); }

  std::string text(const std::string& col) const {
    const auto it = table_.columns.find(col);
    return it == table_.columns.end() ? std::string() : row_.fields[it->second];
  }

  double number(const std::string& col, std::optional<double> fallback = std::nullopt) {
    const std::string s = text(col);
    if (s.empty()) {
      if (fallback) return *fallback;
      fail("missing value in column " + col);
      return 0.0;
    }
    double v = 0.0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      fail("malformed number '" + s + "' in column " + col);
      return 0.0;
    }
    return v;
  }

  int integer(const std::string& col, std::optional<int> fallback = std::nullopt) {
    const std::string s = text(col);
    if (s.empty()) {
      if (fallback) return *fallback;
      fail("missing value in column " + col);
      return 0;
    }
    int v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) {
      fail("malformed integer '" + s + "' in column " + col);
      return 0;
    }
    return v;
  }

  bool flag(const std::string& col) {
    const std::string s = text(col);
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false" || s.empty()) return false;
    fail("malformed flag '" + s + "' in column " + col);
    return false;
  }

  bool ok() const { return ok_; }
  void fail(const std::string& msg) {
    errors_.push_back(msg + " at " + where());
    ok_ = false;
  }

 private:
  const Table& table_;
  const Table::Row& row_;
  std::vector<std::string>& errors_;
  bool ok_ = true;
};

void read_manifest(const fs::path& dir, Scenario& sc, std::vector<std::string>& errors) {
  const fs::path path = dir / "manifest.json";
  if (!fs::exists(path)) {
    errors.push_back("missing file manifest.json");
    return;
  }
  json m;
  try {
    m = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    errors.push_back(std::string("malformed manifest.json: ") + e.what());
    return;
  }
  if (!m.is_object()) {
    errors.push_back("manifest.json must hold an object");
    return;
  }
  static const std::set<std::string> top = {"name", "units", "base_mva", "base_kv", "horizon", "dt", "admm"};
  static const std::set<std::string> admm = {"rho",       "rho_prime", "eps1",          "eps2",
                                             "max_outer", "max_inner", "lambda_p_init", "lambda_loss_init"};
  for (const auto& [k, v] : m.items())
    if (!top.count(k)) errors.push_back("unknown key '" + k + "' in manifest.json");
  try {
    sc.name = m.value("name", std::string());
    const std::string units = m.value("units", std::string("physical"));
    if (units == "physical")
      sc.units = UnitSystem::Physical;
    else if (units == "per_unit")
      sc.units = UnitSystem::PerUnit;
    else
      errors.push_back("manifest.json: units must be 'physical' or 'per_unit', got '" + units + "'");
    sc.network.base_mva = m.value("base_mva", 1.0);
    sc.network.base_kv = m.value("base_kv", 1.0);
    if (!m.contains("horizon")) errors.push_back("manifest.json: missing key 'horizon'");
    sc.horizon = m.value("horizon", 0);
    sc.dt = m.value("dt", 1.0);
    if (m.contains("admm")) {
      const json& a = m.at("admm");
      for (const auto& [k, v] : a.items())
        if (!admm.count(k)) errors.push_back("unknown key 'admm." + k + "' in manifest.json");
      AdmmConfig& c = sc.admm;
      c.rho = a.value("rho", c.rho);
      c.rho_prime = a.value("rho_prime", c.rho_prime);
      c.eps1 = a.value("eps1", c.eps1);
      c.eps2 = a.value("eps2", c.eps2);
      c.max_outer = a.value("max_outer", c.max_outer);
      c.max_inner = a.value("max_inner", c.max_inner);
      c.lambda_p_init = a.value("lambda_p_init", c.lambda_p_init);
      c.lambda_loss_init = a.value("lambda_loss_init", c.lambda_loss_init);
    }
  } catch (const json::type_error& e) {
    errors.push_back(std::string("manifest.json: wrong value type: ") + e.what());
  }
}

}  // namespace

ScenarioFormatError::ScenarioFormatError(std::vector<std::string> errors)
    : InputError(join_errors(errors)), errors_(std::move(errors)) {}

std::string format_number(double v) {
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::logic_error("number formatting failed");
  return std::string(buf, p);
}

Scenario load_scenario(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("scenario directory not found: " + dir.string());
  std::vector<std::string> errors;
  Scenario sc;
  read_manifest(dir, sc, errors);

  std::set<int> bus_ids;
  if (auto t = read_table(dir, "buses.csv", {"id", "vmin", "vmax", "is_pcc"}, errors)) {
    for (const auto& row : t->rows) {
      RowReader r(*t, row, errors);
      Bus b;
      b.id = r.integer("id");
      b.vmin = r.number("vmin");
      b.vmax = r.number("vmax");
      b.is_pcc = r.flag("is_pcc");
      b.p_load = r.number("p_load", 0.0);
      b.q_load = r.number("q_load", 0.0);
      if (!r.ok()) continue;
      if (!bus_ids.insert(b.id).second) {
        r.fail("duplicate bus " + std::to_string(b.id));
        continue;
      }
      sc.network.buses.push_back(b);
    }
  }
  if (auto t = read_table(dir, "lines.csv", {"from", "to", "r", "x", "smax"}, errors)) {
    for (const auto& row : t->rows) {
      RowReader r(*t, row, errors);
      Line l;
      l.from_bus = r.integer("from");
      l.to_bus = r.integer("to");
      l.r = r.number("r");
      l.x = r.number("x");
      l.s_max = r.number("smax");
      if (!r.ok()) continue;
      for (int b : {l.from_bus, l.to_bus})
        if (!bus_ids.count(b)) r.fail("unknown bus " + std::to_string(b));
      if (r.ok()) sc.network.lines.push_back(l);
    }
  }

  std::map<int, std::size_t> prosumer_at;
  if (auto t = read_table(dir, "prosumers.csv", {"id", "bus", "peak_load", "pf_load"}, errors)) {
    for (const auto& row : t->rows) {
      RowReader r(*t, row, errors);
      Prosumer p;
      p.id = r.integer("id");
      p.bus_id = r.integer("bus");
      p.peak_load = r.number("peak_load");
      p.pf_load = r.number("pf_load");
      if (!r.ok()) continue;
      if (!bus_ids.count(p.bus_id)) {
        r.fail("unknown bus " + std::to_string(p.bus_id));
        continue;
      }
      if (prosumer_at.count(p.id)) {
        r.fail("duplicate prosumer " + std::to_string(p.id));
        continue;
      }
      prosumer_at[p.id] = sc.prosumers.size();
      sc.prosumers.push_back(p);
    }
  }
  auto owner = [&](RowReader& r) -> Prosumer* {
    const int id = r.integer("prosumer");
    if (!r.ok()) return nullptr;
    const auto it = prosumer_at.find(id);
    if (it == prosumer_at.end()) {
      r.fail("unknown prosumer " + std::to_string(id));
      return nullptr;
    }
    return &sc.prosumers[it->second];
  };
  if (auto t = read_table(dir, "pv.csv", {"prosumer", "capacity", "s_inv", "pf"}, errors)) {
    for (const auto& row : t->rows) {
      RowReader r(*t, row, errors);
      Prosumer* p = owner(r);
      PvUnit u;
      u.capacity = r.number("capacity");
      u.s_inv = r.number("s_inv");
      u.pf = r.number("pf");
      if (p && r.ok()) p->pvs.push_back(u);
    }
  }
  if (auto t = read_table(dir, "storage.csv",
                          {"prosumer", "kind", "p_ch_max", "p_dch_max", "eta_ch", "eta_dch", "e0", "soc_max"},
                          errors)) {
    for (const auto& row : t->rows) {
      RowReader r(*t, row, errors);
      Prosumer* p = owner(r);
      StorageDevice s;
      const std::string kind = r.text("kind");
      if (kind == "bess")
        s.kind = StorageKind::Bess;
      else if (kind == "ev")
        s.kind = StorageKind::Ev;
      else
        r.fail("unknown storage kind '" + kind + "'");
      s.p_ch_max = r.number("p_ch_max");
      s.p_dch_max = r.number("p_dch_max");
      s.eta_ch = r.number("eta_ch");
      s.eta_dch = r.number("eta_dch");
      s.e0 = r.number("e0");
      s.soc_min = r.number("soc_min", 0.0);
      s.soc_max = r.number("soc_max");
      s.t_arrive = r.integer("t_arrive", 0);
      s.t_depart = r.integer("t_depart", sc.horizon - 1);
      // A battery ends the day with at least its starting energy by default.
      s.e_trip = r.number("e_trip", s.kind == StorageKind::Bess ? s.e0 : 0.0);
      s.throughput_cost = r.number("throughput_cost", 0.0);
      if (p && r.ok()) p->storages.push_back(s);
    }
  }
  if (auto t = read_table(dir, "fl.csv", {"prosumer", "max_share", "t_max", "e_min"}, errors)) {
    for (const auto& row : t->rows) {
      RowReader r(*t, row, errors);
      Prosumer* p = owner(r);
      FlexibleLoad f;
      f.max_share = r.number("max_share");
      f.t_max = r.integer("t_max");
      f.e_min = r.number("e_min");
      f.discomfort_cost = r.number("discomfort_cost", 0.0);
      if (p && r.ok()) p->fls.push_back(f);
    }
  }
  if (auto t = read_table(dir, "profiles.csv", {"t", "wem_price", "loss_cost", "load_scale", "pv_cf"}, errors)) {
    int expect = 0;
    for (const auto& row : t->rows) {
      RowReader r(*t, row, errors);
      const int hour = r.integer("t");
      if (r.ok() && hour != expect) r.fail("expected hour " + std::to_string(expect) + ", got " + std::to_string(hour));
      ++expect;
      Profiles& pr = sc.profiles;
      pr.wem_price.push_back(r.number("wem_price"));
      pr.loss_cost.push_back(r.number("loss_cost"));
      pr.load_scale.push_back(r.number("load_scale"));
      pr.pv_cf.push_back(r.number("pv_cf"));
    }
    if (sc.horizon > 0 && static_cast<int>(t->rows.size()) != sc.horizon)
      errors.push_back("profiles.csv has " + std::to_string(t->rows.size()) + " hours, manifest horizon is " +
                       std::to_string(sc.horizon));
  }

  if (!errors.empty()) throw ScenarioFormatError(std::move(errors));
  materialize_profiles(sc);
  const ValidationReport rep = validate_scenario(sc);
  if (!rep.ok()) throw ScenarioFormatError(rep.errors);
  return sc;
}

void write_scenario(const Scenario& sc, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto num = format_number;

  json admm = {{"rho", sc.admm.rho},
               {"rho_prime", sc.admm.rho_prime},
               {"eps1", sc.admm.eps1},
               {"eps2", sc.admm.eps2},
               {"max_outer", sc.admm.max_outer},
               {"max_inner", sc.admm.max_inner},
               {"lambda_p_init", sc.admm.lambda_p_init},
               {"lambda_loss_init", sc.admm.lambda_loss_init}};
  json m = {{"name", sc.name},
            {"units", sc.units == UnitSystem::Physical ? "physical" : "per_unit"},
            {"base_mva", sc.network.base_mva},
            {"base_kv", sc.network.base_kv},
            {"horizon", sc.horizon},
            {"dt", sc.dt},
            {"admm", admm}};
  write_file(dir / "manifest.json", m.dump(2) + "\n");

  std::string s = "id,vmin,vmax,is_pcc,p_load,q_load\n";
  for (const Bus& b : sc.network.buses)
    s += std::to_string(b.id) + "," + num(b.vmin) + "," + num(b.vmax) + "," + (b.is_pcc ? "1" : "0") + "," +
         num(b.p_load) + "," + num(b.q_load) + "\n";
  write_file(dir / "buses.csv", s);

  s = "from,to,r,x,smax\n";
  for (const Line& l : sc.network.lines)
    s += std::to_string(l.from_bus) + "," + std::to_string(l.to_bus) + "," + num(l.r) + "," + num(l.x) + "," +
         num(l.s_max) + "\n";
  write_file(dir / "lines.csv", s);

  s = "id,bus,peak_load,pf_load\n";
  for (const Prosumer& p : sc.prosumers)
    s += std::to_string(p.id) + "," + std::to_string(p.bus_id) + "," + num(p.peak_load) + "," + num(p.pf_load) + "\n";
  write_file(dir / "prosumers.csv", s);

  s = "prosumer,capacity,s_inv,pf\n";
  for (const Prosumer& p : sc.prosumers)
    for (const PvUnit& u : p.pvs)
      s += std::to_string(p.id) + "," + num(u.capacity) + "," + num(u.s_inv) + "," + num(u.pf) + "\n";
  write_file(dir / "pv.csv", s);

  s = "prosumer,kind,p_ch_max,p_dch_max,eta_ch,eta_dch,e0,soc_min,soc_max,t_arrive,t_depart,e_trip,throughput_cost\n";
  for (const Prosumer& p : sc.prosumers)
    for (const StorageDevice& d : p.storages)
      s += std::to_string(p.id) + "," + (d.kind == StorageKind::Bess ? "bess" : "ev") + "," + num(d.p_ch_max) +
           "," + num(d.p_dch_max) + "," + num(d.eta_ch) + "," + num(d.eta_dch) + "," + num(d.e0) + "," +
           num(d.soc_min) + "," + num(d.soc_max) + "," + std::to_string(d.t_arrive) + "," +
           std::to_string(d.t_depart) + "," + num(d.e_trip) + "," + num(d.throughput_cost) + "\n";
  write_file(dir / "storage.csv", s);

  s = "prosumer,max_share,t_max,e_min,discomfort_cost\n";
  for (const Prosumer& p : sc.prosumers)
    for (const FlexibleLoad& f : p.fls)
      s += std::to_string(p.id) + "," + num(f.max_share) + "," + std::to_string(f.t_max) + "," + num(f.e_min) + "," +
           num(f.discomfort_cost) + "\n";
  write_file(dir / "fl.csv", s);

  s = "t,wem_price,loss_cost,load_scale,pv_cf\n";
  const Profiles& pr = sc.profiles;
  for (int t = 0; t < sc.horizon; ++t)
    s += std::to_string(t) + "," + num(pr.wem_price.at(t)) + "," + num(pr.loss_cost.at(t)) + "," +
         num(pr.load_scale.at(t)) + "," + num(pr.pv_cf.at(t)) + "\n";
  write_file(dir / "profiles.csv", s);
}

// ---------------------------------------------------------------------------
// Results

namespace {

// Hourly storage throughput and flexible-load discomfort costs.
market::Matrix hourly_device_cost(const Scenario& raw, const std::vector<prosumer::ProsumerSchedule>& schedules) {
  const Scenario sc = to_per_unit(raw);
  market::Matrix out;
  for (std::size_t a = 0; a < schedules.size(); ++a) {
    const Prosumer& p = sc.prosumers.at(a);
    const auto& s = schedules[a];
    std::vector<double> row(sc.horizon, 0.0);
    for (int t = 0; t < sc.horizon; ++t) {
      for (std::size_t k = 0; k < p.storages.size(); ++k)
        row[t] += p.storages[k].throughput_cost * (s.storages[k].p_ch[t] + s.storages[k].p_dch[t]) * sc.dt;
      for (std::size_t f = 0; f < p.fls.size(); ++f)
        row[t] += p.fls[f].discomfort_cost * std::abs(s.fls[f].p_fl[t]) * sc.dt;
    }
    out.push_back(std::move(row));
  }
  return out;
}

RunReport common(const Scenario& sc) {
  RunReport r;
  r.horizon = sc.horizon;
  r.dt = sc.dt;
  for (const Bus& b : sc.network.buses) r.bus_ids.push_back(b.id);
  for (const Prosumer& p : sc.prosumers) r.prosumer_ids.push_back(p.id);
  return r;
}

}  // namespace

RunReport make_report(const Scenario& sc, const market::ClearingResult& res) {
  RunReport r = common(sc);
  r.mode = "distributed";
  r.status = res.status == market::Status::Converged ? "converged" : "iter_limit";
  r.outer_iterations = res.outer_iterations;
  r.base_mva = res.base_mva;
  r.dlmp = res.dlmp;
  r.schedules = res.schedules;
  r.device_cost = hourly_device_cost(sc, res.schedules);
  r.p_ug = res.p_ug;
  r.p_loss = res.p_loss;
  r.costs = res.costs;
  r.trace = res.trace;
  r.messages = res.messages;
  for (const auto& v : res.network.violations) r.violations.push_back(v.describe(sc.network));
  return r;
}

RunReport make_report(const Scenario& sc, const oracle::OracleResult& res) {
  RunReport r = common(sc);
  r.mode = oracle::to_string(res.mode);
  r.status = "solved";
  r.outer_iterations = 0;
  r.base_mva = res.base_mva;
  r.dlmp = res.dlmp;
  r.schedules = res.schedules;
  r.device_cost = hourly_device_cost(sc, res.schedules);
  r.p_ug = res.p_ug;
  r.p_loss = res.p_loss;
  r.costs = res.costs;
  for (const auto& v : res.violations) r.violations.push_back(v.describe(sc.network));
  r.note = res.note;
  return r;
}

void emit_results(const RunReport& rep, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto num = format_number;
  const double mva = rep.base_mva;
  const int T = rep.horizon;

  std::string s = "bus,t,dlmp\n";
  for (std::size_t n = 0; n < rep.dlmp.size(); ++n)
    for (int t = 0; t < T; ++t)
      s += std::to_string(rep.bus_ids.at(n)) + "," + std::to_string(t) + "," + num(rep.dlmp[n].at(t) / mva) + "\n";
  write_file(dir / "dlmp.csv", s);

  s = "prosumer,t,p_net,p_load,p_pv,p_ch,p_dch,soc,p_fl,device_cost\n";
  for (std::size_t a = 0; a < rep.schedules.size(); ++a) {
    const auto& sc = rep.schedules[a];
    for (int t = 0; t < T; ++t) {
      double pv = 0.0, ch = 0.0, dch = 0.0, soc = 0.0, fl = 0.0;
      for (const auto& u : sc.p_pv) pv += u.at(t);
      for (const auto& st : sc.storages) {
        ch += st.p_ch.at(t);
        dch += st.p_dch.at(t);
        soc += st.soc.at(t);
      }
      for (const auto& f : sc.fls) fl += f.p_fl.at(t);
      s += std::to_string(rep.prosumer_ids.at(a)) + "," + std::to_string(t) + "," + num(sc.p_net.at(t) * mva) + "," +
           num(sc.p_l.at(t) * mva) + "," + num(pv * mva) + "," + num(ch * mva) + "," + num(dch * mva) + "," +
           num(soc * mva) + "," + num(fl * mva) + "," + num(rep.device_cost.at(a).at(t)) + "\n";
    }
  }
  write_file(dir / "schedules.csv", s);

  // Inner records of an outer iteration precede its outer record.
  s = "loop,outer,inner,multiplier_change,residual,objective,lmo_objective,subproblem_gap,subproblem_nodes,stop\n";
  std::string timing = "loop,outer,inner,millis,millis_prosumers\n";
  std::size_t i = 0;
  for (const auto& o : rep.trace.outer) {
    for (; i < rep.trace.inner.size() && rep.trace.inner[i].outer == o.outer; ++i) {
      const auto& r = rep.trace.inner[i];
      s += "inner," + std::to_string(r.outer) + "," + std::to_string(r.inner) + "," + num(r.lambda_loss_change) + "," +
           num(r.loss_residual) + "," + num(r.dso_objective) + "," + num(r.lmo_objective) + ",,," +
           (r.stop ? "1" : "0") + "\n";
      timing += "inner," + std::to_string(r.outer) + "," + std::to_string(r.inner) + "," + num(r.millis) + ",\n";
    }
    s += "outer," + std::to_string(o.outer) + "," + std::to_string(o.inner_iterations) + "," +
         num(o.lambda_p_change) + "," + num(o.consensus_residual) + "," + num(o.prosumer_objective) + ",," +
         num(o.max_subproblem_gap) + "," + std::to_string(o.subproblem_nodes) + "," + (o.stop ? "1" : "0") + "\n";
    timing += "outer," + std::to_string(o.outer) + "," + std::to_string(o.inner_iterations) + "," + num(o.millis) +
              "," + num(o.millis_prosumers) + "\n";
  }
  write_file(dir / "trace.csv", s);
  if (!rep.trace.outer.empty()) write_file(dir / "timing.csv", timing);

  json costs = {{"lmo", rep.costs.lmo},
                {"dso", rep.costs.dso},
                {"device_total", rep.costs.device_total},
                {"social", rep.costs.social()},
                {"prosumer_average", rep.costs.prosumer_average()}};
  json per = json::array();
  for (std::size_t a = 0; a < rep.costs.prosumers.size(); ++a)
    per.push_back({{"id", rep.prosumer_ids.at(a)}, {"cost", rep.costs.prosumers[a]}});
  costs["prosumers"] = per;
  std::vector<double> p_ug, p_loss;
  for (double v : rep.p_ug) p_ug.push_back(v * mva);
  for (double v : rep.p_loss) p_loss.push_back(v * mva);
  json summary = {{"mode", rep.mode},
                  {"status", rep.status},
                  {"outer_iterations", rep.outer_iterations},
                  {"horizon", rep.horizon},
                  {"dt", rep.dt},
                  {"base_mva", rep.base_mva},
                  {"buses", rep.bus_ids.size()},
                  {"prosumers", rep.prosumer_ids.size()},
                  {"costs", costs},
                  {"p_ug", p_ug},
                  {"p_loss", p_loss},
                  {"violations", rep.violations},
                  {"note", rep.note}};
  write_file(dir / "summary.json", summary.dump(2) + "\n");
}

}  // namespace lem::io
