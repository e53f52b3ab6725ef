#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace lem::socp {

enum class ConeKind { Free, NonNeg, SecondOrder };

struct ConeBlock {
  ConeKind kind = ConeKind::Free;
  int size = 0;
};

/// Standard-form conic program
///
///   minimize    c'x + 1/2 sum_i q_i x_i^2 + offset
///   subject to  A x = b,  x in K_1 x K_2 x ...
///
/// where the cone blocks partition x in order. A SecondOrder block of size k
/// is { (t, u) : t >= ||u|| } with the head t stored first.
struct ConicProgram {
  int n_vars = 0;
  Eigen::VectorXd c;
  Eigen::VectorXd q;
  double offset = 0.0;
  Eigen::SparseMatrix<double> A;
  Eigen::VectorXd b;
  std::vector<ConeBlock> cones;

  int n_eq() const { return static_cast<int>(b.size()); }
  /// Throws InputError if the block partition, dimensions or q are invalid.
  void check() const;
  double objective(const Eigen::VectorXd& x) const;
};

/// Incremental assembly of a ConicProgram. Variables are allocated block by
/// block; constraint rows are appended with sparse coefficients.
class ProgramBuilder {
 public:
  int add_block(ConeKind kind, int size);  // returns the first variable index
  int add_free(int size = 1) { return add_block(ConeKind::Free, size); }
  int add_nonneg(int size = 1) { return add_block(ConeKind::NonNeg, size); }
  int add_soc(int size) { return add_block(ConeKind::SecondOrder, size); }

  int add_row(const std::vector<std::pair<int, double>>& coeffs, double rhs);
  void add_to_row(int row, int var, double coef);  // duplicates are summed
  void add_rhs(int row, double v) { b_.at(row) += v; }
  void set_linear(int var, double coef) { c_.at(var) = coef; }
  void add_linear(int var, double coef) { c_.at(var) += coef; }
  void add_quadratic(int var, double q) { q_.at(var) += q; }
  void add_offset(double v) { offset_ += v; }

  int n_vars() const { return static_cast<int>(c_.size()); }
  int n_rows() const { return static_cast<int>(b_.size()); }

  ConicProgram build() const;

 private:
  std::vector<ConeBlock> cones_;
  std::vector<double> c_, q_, b_;
  std::vector<Eigen::Triplet<double>> triplets_;
  double offset_ = 0.0;
};

enum class SolveStatus { Optimal, Infeasible, Unbounded, IterLimit };

std::string to_string(SolveStatus s);

struct Residuals {
  double primal = 0.0;  // ||Ax - b||_inf / (1 + ||b||_inf)
  double dual = 0.0;    // ||c + Qx - A'y - s||_inf / (1 + ||c||_inf)
  double gap = 0.0;     // |primal obj - dual obj| / (1 + |primal obj|)
};

struct ConicSolution {
  SolveStatus status = SolveStatus::IterLimit;
  Eigen::VectorXd x;  // primal point
  Eigen::VectorXd y;  // equality multipliers: d(obj)/d(b)
  Eigen::VectorXd s;  // dual cone slack, zero on Free blocks
  double obj = 0.0;
  double dual_obj = 0.0;
  Residuals residuals;
  int iterations = 0;
  // Optimal at SolverOptions::tol_reduced only: the iteration broke down
  // before reaching tol and the best iterate was returned.
  bool reduced_accuracy = false;
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double regularization = 1e-11;
  int refinement_steps = 3;
  // Fallback acceptance level for the best iterate when the iteration breaks
  // down (non-finite step, singular system, stall, iteration limit).
  double tol_reduced = 1e-7;
};

/// Primal-dual interior-point method (Mehrotra predictor-corrector with
/// Nesterov-Todd scaling on second-order blocks). Pure; deterministic.
ConicSolution solve_socp(const ConicProgram& prog, const SolverOptions& opts = {});
ConicSolution solve_socp(const ConicProgram& prog, double tol);

/// Absolute KKT residuals recomputed from (x, y, s) alone.
struct KktReport {
  double primal = 0.0;         // ||Ax - b||_inf
  double dual = 0.0;           // ||c + Qx - A'y - s||_inf
  double complementarity = 0.0;  // |x's|
  double cone_violation = 0.0;   // max distance of x or s outside its cone
};

KktReport check_kkt(const ConicProgram& prog, const ConicSolution& sol);

struct ProbeResult {
  bool conclusive = false;
  double estimate = 0.0;  // central difference of the optimal value w.r.t. b[eq_index]
};

/// Re-solves with b[eq_index] +/- delta. Throws InputError when delta <= 0.
ProbeResult dual_sensitivity_probe(const ConicProgram& prog, const ConicSolution& sol, int eq_index,
                                   double delta = 1e-5, const SolverOptions& opts = {});

/// Plain-text dump, one record per line:
///   conic <n_vars> <n_eq> <nnz> <n_blocks>
///   cone <F|L|Q> <size>            (one line per block, in order)
///   c <j> <value>                  (nonzeros only)
///   q <j> <value>                  (nonzeros only)
///   offset <value>
///   a <row> <col> <value>
///   b <row> <value>                (nonzeros only)
///   end
void write_standard_form(const ConicProgram& prog, std::ostream& os);
ConicProgram read_standard_form(std::istream& is);

/// Returns a copy of prog with the listed variables fixed to the given values
/// and eliminated. NonNeg variables forced to zero by rows of the form
/// sum(a_j x_j) = 0 with a_j > 0 over NonNeg variables are eliminated too.
/// `kept` maps reduced indices back to original ones. Throws InputError
/// when a fixing is trivially inconsistent (reports infeasible via flag).
struct ReducedProgram {
  ConicProgram program;
  std::vector<int> kept;
  Eigen::VectorXd fixed_values;  // value of every original variable that was eliminated
  std::vector<bool> eliminated;
  std::vector<int> row_of;  // reduced row of each original row, -1 if dropped
  bool infeasible = false;
  Eigen::VectorXd expand(const Eigen::VectorXd& reduced_x) const;
};

ReducedProgram fix_variables(const ConicProgram& prog, const std::vector<std::pair<int, double>>& fixes);

}  // namespace lem::socp
