#include "lem/lmo.hpp"

namespace lem::lmo {

Psi Psi::from_scenario(const Scenario& sc) {
  Psi psi;
  psi.n_buses = sc.network.buses.size();
  for (const Prosumer& p : sc.prosumers) psi.bus_of.push_back(sc.network.bus_index(p.bus_id));
  return psi;
}

std::vector<std::vector<std::size_t>> Psi::prosumers_at() const {
  std::vector<std::vector<std::size_t>> at(n_buses);
  for (std::size_t a = 0; a < bus_of.size(); ++a) at.at(bus_of[a]).push_back(a);
  return at;
}

LmoState LmoState::initial(const Scenario& sc) {
  LmoState s;
  const std::size_t A = sc.prosumers.size();
  const int T = sc.horizon;
  s.psi = Psi::from_scenario(sc);
  s.lambda_p.assign(A, std::vector<double>(T, sc.admm.lambda_p_init));
  s.lambda_loss.assign(T, sc.admm.lambda_loss_init);
  s.p_tilde.assign(A, std::vector<double>(T, 0.0));
  s.p_loss_tilde.assign(T, 0.0);
  return s;
}

namespace {

void check_rho(const AdmmConfig& cfg) {
  if (!(cfg.rho > 0.0)) throw InputError("rho must be positive");
  if (!(cfg.rho_prime > 0.0)) throw InputError("rho_prime must be positive");
}

double bg(const std::vector<double>& background, std::size_t t) { return background.empty() ? 0.0 : background[t]; }

}  // namespace

double subproblem_I_objective(const LmoState& st, const std::vector<double>& wem, const Matrix& p_star,
                              const std::vector<double>& loss_star, const AdmmConfig& cfg, double dt,
                              const Matrix& p_tilde, const std::vector<double>& loss_tilde,
                              const std::vector<double>& background) {
  double obj = 0.0;
  for (std::size_t t = 0; t < wem.size(); ++t) {
    double p_ug = loss_tilde[t] + bg(background, t);
    for (std::size_t a = 0; a < p_tilde.size(); ++a) {
      const double d = p_tilde[a][t] - p_star[a][t];
      p_ug += p_tilde[a][t];
      obj += st.lambda_p[a][t] * d + 0.5 * cfg.rho * d * d;
    }
    const double dl = loss_tilde[t] - loss_star[t];
    obj += wem[t] * p_ug * dt + st.lambda_loss[t] * dl + 0.5 * cfg.rho_prime * dl * dl;
  }
  return obj;
}

SubproblemI solve_subproblem_I(const LmoState& st, const std::vector<double>& wem, const Matrix& p_star,
                               const std::vector<double>& loss_star, const AdmmConfig& cfg, double dt,
                               const std::vector<double>& background) {
  check_rho(cfg);
  const std::size_t T = wem.size();
  const std::size_t A = p_star.size();
  if (st.lambda_p.size() != A || loss_star.size() != T || st.lambda_loss.size() != T)
    throw InputError("LMO inputs have inconsistent shapes");
  SubproblemI out;
  out.p_tilde.assign(A, std::vector<double>(T, 0.0));
  out.p_loss_tilde.assign(T, 0.0);
  out.p_ug.assign(T, 0.0);
  for (std::size_t t = 0; t < T; ++t) {
    const double price = wem[t] * dt;
    double sum = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      out.p_tilde[a][t] = p_star[a][t] - (price + st.lambda_p[a][t]) / cfg.rho;
      sum += out.p_tilde[a][t];
    }
    out.p_loss_tilde[t] = loss_star[t] - (price + st.lambda_loss[t]) / cfg.rho_prime;
    out.p_ug[t] = sum + out.p_loss_tilde[t] + bg(background, t);
  }
  out.objective = subproblem_I_objective(st, wem, p_star, loss_star, cfg, dt, out.p_tilde, out.p_loss_tilde, background);
  return out;
}

Matrix aggregate_to_nodes(const Psi& psi, const Matrix& p_net, const Matrix& background) {
  if (p_net.size() != psi.bus_of.size()) throw InputError("unmapped prosumer");
  std::size_t T = 0;
  if (!p_net.empty())
    T = p_net[0].size();
  else if (!background.empty())
    T = background[0].size();
  if (!background.empty() && background.size() != psi.n_buses)
    throw InputError("background load must cover every bus");
  Matrix node = background.empty() ? Matrix(psi.n_buses, std::vector<double>(T, 0.0)) : background;
  for (std::size_t a = 0; a < p_net.size(); ++a)
    for (std::size_t t = 0; t < T; ++t) node[psi.bus_of[a]][t] += p_net[a][t];
  return node;
}

Matrix map_dlmp_to_prosumers(const Psi& psi, const Matrix& dlmp) {
  Matrix out;
  out.reserve(psi.bus_of.size());
  for (std::size_t n : psi.bus_of) {
    if (n >= dlmp.size()) throw InputError("missing bus price for bus index " + std::to_string(n));
    out.push_back(dlmp[n]);
  }
  return out;
}

Matrix update_power_dual(const Matrix& lambda_p, const Matrix& p_tilde, const Matrix& p_net, const AdmmConfig& cfg) {
  Matrix out = lambda_p;
  for (std::size_t a = 0; a < out.size(); ++a)
    for (std::size_t t = 0; t < out[a].size(); ++t) out[a][t] += cfg.rho * (p_tilde[a][t] - p_net[a][t]);
  return out;
}

std::vector<double> update_loss_dual(const std::vector<double>& lambda_loss, const std::vector<double>& p_loss_tilde,
                                     const std::vector<double>& p_loss, const AdmmConfig& cfg) {
  std::vector<double> out = lambda_loss;
  for (std::size_t t = 0; t < out.size(); ++t) out[t] += cfg.rho_prime * (p_loss_tilde[t] - p_loss[t]);
  return out;
}

}  // namespace lem::lmo
