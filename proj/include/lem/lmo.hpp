#pragma once

#include "lem/model.hpp"

#include <vector>

namespace lem::lmo {

using Matrix = std::vector<std::vector<double>>;  // [row][t]

/// Prosumer -> bus incidence. psi[a] is the bus index hosting prosumer a;
/// the transpose relation (bus -> prosumers) is derived on demand.
struct Psi {
  std::vector<std::size_t> bus_of;
  std::size_t n_buses = 0;

  static Psi from_scenario(const Scenario& sc);
  std::vector<std::vector<std::size_t>> prosumers_at() const;
};

struct LmoState {
  Matrix lambda_p;                 // [a][t]
  std::vector<double> lambda_loss;  // [t]
  Matrix p_tilde;                  // [a][t]
  std::vector<double> p_loss_tilde;  // [t]
  Psi psi;

  static LmoState initial(const Scenario& sc);
};

struct SubproblemI {
  Matrix p_tilde;
  std::vector<double> p_loss_tilde;
  std::vector<double> p_ug;
  double objective = 0.0;
};

/// Closed-form minimizer of the LMO subproblem after eliminating p_ug through
/// the market balance p_ug = sum_a p_tilde + p_loss_tilde + background.
/// Throws InputError when rho or rho_prime is not positive.
SubproblemI solve_subproblem_I(const LmoState& state, const std::vector<double>& wem_price, const Matrix& p_net_star,
                               const std::vector<double>& p_loss_star, const AdmmConfig& cfg, double dt,
                               const std::vector<double>& background = {});

/// Objective of the LMO subproblem at a given point (for checks and traces).
double subproblem_I_objective(const LmoState& state, const std::vector<double>& wem_price, const Matrix& p_net_star,
                              const std::vector<double>& p_loss_star, const AdmmConfig& cfg, double dt,
                              const Matrix& p_tilde, const std::vector<double>& p_loss_tilde,
                              const std::vector<double>& background = {});

/// Nodal sums of co-located prosumers plus background load (may be empty).
Matrix aggregate_to_nodes(const Psi& psi, const Matrix& p_net, const Matrix& background = {});

/// Each prosumer receives its bus price unchanged.
Matrix map_dlmp_to_prosumers(const Psi& psi, const Matrix& dlmp);

/// lambda + rho * (tilde - actual), elementwise.
Matrix update_power_dual(const Matrix& lambda_p, const Matrix& p_tilde, const Matrix& p_net, const AdmmConfig& cfg);
std::vector<double> update_loss_dual(const std::vector<double>& lambda_loss, const std::vector<double>& p_loss_tilde,
                                     const std::vector<double>& p_loss, const AdmmConfig& cfg);

}  // namespace lem::lmo
