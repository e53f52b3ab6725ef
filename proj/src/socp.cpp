#include "lem/socp.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "lem/model.hpp"

namespace lem::socp {

using Eigen::SparseMatrix;
using Eigen::VectorXd;
using Triplet = Eigen::Triplet<double>;

// ---------------------------------------------------------------------------
// Program container

void ConicProgram::check() const {
  int total = 0;
  for (const ConeBlock& blk : cones) {
    if (blk.size < 0) throw InputError("cone block with negative size");
    if (blk.kind == ConeKind::SecondOrder && blk.size < 2)
      throw InputError("second-order block needs size >= 2");
    total += blk.size;
  }
  if (total != n_vars) throw InputError("cone blocks do not partition the variables");
  if (c.size() != n_vars || q.size() != n_vars) throw InputError("objective size mismatch");
  if (A.cols() != n_vars || A.rows() != b.size()) throw InputError("constraint size mismatch");
  for (int j = 0; j < n_vars; ++j)
    if (q[j] < 0.0) throw InputError("quadratic objective must be nonnegative");
}

double ConicProgram::objective(const VectorXd& x) const {
  return c.dot(x) + 0.5 * (q.array() * x.array().square()).sum() + offset;
}

int ProgramBuilder::add_block(ConeKind kind, int size) {
  if (size <= 0) throw InputError("block size must be positive");
  if (kind == ConeKind::SecondOrder && size < 2) throw InputError("second-order block needs size >= 2");
  const int first = n_vars();
  if (!cones_.empty() && cones_.back().kind == kind && kind != ConeKind::SecondOrder)
    cones_.back().size += size;
  else
    cones_.push_back({kind, size});
  c_.resize(c_.size() + size, 0.0);
  q_.resize(q_.size() + size, 0.0);
  return first;
}

int ProgramBuilder::add_row(const std::vector<std::pair<int, double>>& coeffs, double rhs) {
  const int row = n_rows();
  for (const auto& [col, val] : coeffs) {
    if (col < 0 || col >= n_vars()) throw InputError("row references unknown variable");
    if (val != 0.0) triplets_.emplace_back(row, col, val);
  }
  b_.push_back(rhs);
  return row;
}

void ProgramBuilder::add_to_row(int row, int var, double coef) {
  if (row < 0 || row >= n_rows()) throw InputError("unknown row");
  if (var < 0 || var >= n_vars()) throw InputError("row references unknown variable");
  if (coef != 0.0) triplets_.emplace_back(row, var, coef);
}

ConicProgram ProgramBuilder::build() const {
  ConicProgram p;
  p.n_vars = n_vars();
  p.c = Eigen::Map<const VectorXd>(c_.data(), static_cast<Eigen::Index>(c_.size()));
  p.q = Eigen::Map<const VectorXd>(q_.data(), static_cast<Eigen::Index>(q_.size()));
  p.b = Eigen::Map<const VectorXd>(b_.data(), static_cast<Eigen::Index>(b_.size()));
  p.offset = offset_;
  p.A.resize(n_rows(), n_vars());
  p.A.setFromTriplets(triplets_.begin(), triplets_.end());
  p.A.makeCompressed();
  p.cones = cones_;
  return p;
}

std::string to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "Optimal";
    case SolveStatus::Infeasible: return "Infeasible";
    case SolveStatus::Unbounded: return "Unbounded";
    case SolveStatus::IterLimit: return "IterLimit";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Interior-point solver

namespace {

struct Block {
  ConeKind kind;
  int start;
  int size;
};

std::vector<Block> layout(const ConicProgram& p) {
  std::vector<Block> out;
  int at = 0;
  for (const ConeBlock& c : p.cones) {
    if (c.size > 0) out.push_back({c.kind, at, c.size});
    at += c.size;
  }
  return out;
}

double soc_det(const double* v, int k) {
  double t = v[0] * v[0];
  for (int i = 1; i < k; ++i) t -= v[i] * v[i];
  return t;
}

// Largest step alpha such that v + alpha*d stays in the cone block.
double max_step(const Block& blk, const VectorXd& v, const VectorXd& d) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  double amax = inf;
  if (blk.kind == ConeKind::NonNeg) {
    for (int i = blk.start; i < blk.start + blk.size; ++i)
      if (d[i] < 0.0) amax = std::min(amax, -v[i] / d[i]);
  } else if (blk.kind == ConeKind::SecondOrder) {
    const double* x = v.data() + blk.start;
    const double* dx = d.data() + blk.start;
    const int k = blk.size;
    double a = dx[0] * dx[0], b = x[0] * dx[0], c = x[0] * x[0];
    for (int i = 1; i < k; ++i) {
      a -= dx[i] * dx[i];
      b -= x[i] * dx[i];
      c -= x[i] * x[i];
    }
    if (dx[0] < 0.0) amax = std::min(amax, -x[0] / dx[0]);
    // smallest positive root of a*t^2 + 2*b*t + c
    if (std::abs(a) < 1e-300) {
      if (b < 0.0) amax = std::min(amax, -c / (2.0 * b));
    } else {
      const double disc = b * b - a * c;
      if (disc >= 0.0) {
        const double sq = std::sqrt(disc);
        const double qq = -(b + (b >= 0.0 ? sq : -sq));
        double r1 = qq / a;
        double r2 = qq != 0.0 ? c / qq : inf;
        for (double r : {r1, r2})
          if (r > 0.0) amax = std::min(amax, r);
      }
    }
  }
  return amax;
}

// Nesterov-Todd scaling data for one second-order block.
struct SocScaling {
  double eta = 1.0;
  Eigen::MatrixXd wbar;      // unit scaling matrix, W = eta * wbar
  Eigen::MatrixXd wbar_inv;  // J wbar J
  Eigen::MatrixXd hess;      // W^{-2}
};

SocScaling soc_scaling(const double* x, const double* s, int k) {
  SocScaling sc;
  const double xd = std::max(soc_det(x, k), 1e-300);
  const double sd = std::max(soc_det(s, k), 1e-300);
  const double xn = std::sqrt(xd), sn = std::sqrt(sd);
  VectorXd xb(k), sb(k);
  for (int i = 0; i < k; ++i) {
    xb[i] = x[i] / xn;
    sb[i] = s[i] / sn;
  }
  const double gamma = std::sqrt(std::max((1.0 + xb.dot(sb)) / 2.0, 1e-300));
  VectorXd w(k);
  w[0] = (xb[0] + sb[0]) / (2.0 * gamma);
  for (int i = 1; i < k; ++i) w[i] = (xb[i] - sb[i]) / (2.0 * gamma);
  sc.eta = std::pow(xd / sd, 0.25);
  Eigen::MatrixXd wb = Eigen::MatrixXd::Identity(k, k);
  wb(0, 0) = w[0];
  for (int i = 1; i < k; ++i) {
    wb(0, i) = w[i];
    wb(i, 0) = w[i];
  }
  const double denom = 1.0 + w[0];
  for (int i = 1; i < k; ++i)
    for (int j = 1; j < k; ++j) wb(i, j) += w[i] * w[j] / denom;
  sc.wbar = wb;
  Eigen::MatrixXd wi = wb;
  for (int i = 1; i < k; ++i) {
    wi(0, i) = -wi(0, i);
    wi(i, 0) = -wi(i, 0);
  }
  sc.wbar_inv = wi;
  // W^{-2} = eta^{-2} (2 v v' - J), v = J w
  VectorXd v = w;
  for (int i = 1; i < k; ++i) v[i] = -v[i];
  Eigen::MatrixXd h = 2.0 * v * v.transpose();
  h(0, 0) -= 1.0;
  for (int i = 1; i < k; ++i) h(i, i) += 1.0;
  sc.hess = h / (sc.eta * sc.eta);
  return sc;
}

// Jordan-algebra helpers on a single SOC block.
void soc_product(const double* u, const double* v, double* out, int k) {
  double d = 0.0;
  for (int i = 0; i < k; ++i) d += u[i] * v[i];
  out[0] = d;
  for (int i = 1; i < k; ++i) out[i] = u[0] * v[i] + v[0] * u[i];
}

// Solves lambda o z = r for z.
void soc_divide(const double* lam, const double* r, double* z, int k) {
  double l1r1 = 0.0, l1sq = 0.0;
  for (int i = 1; i < k; ++i) {
    l1r1 += lam[i] * r[i];
    l1sq += lam[i] * lam[i];
  }
  const double det = lam[0] * lam[0] - l1sq;
  z[0] = (lam[0] * r[0] - l1r1) / det;
  for (int i = 1; i < k; ++i) z[i] = (r[i] - z[0] * lam[i]) / lam[0];
}

class Ipm {
 public:
  Ipm(const ConicProgram& p, const SolverOptions& o) : p_(p), o_(o), blocks_(layout(p)) {
    n_ = p.n_vars;
    m_ = p.n_eq();
    nu_ = 0;
    for (const Block& b : blocks_) {
      if (b.kind == ConeKind::NonNeg) nu_ += b.size;
      if (b.kind == ConeKind::SecondOrder) nu_ += 1;
    }
    is_free_.assign(n_, false);
    for (const Block& b : blocks_)
      if (b.kind == ConeKind::Free)
        for (int i = b.start; i < b.start + b.size; ++i) is_free_[i] = true;
    at_ = p.A.transpose();
    bnorm_ = p.b.size() ? p.b.lpNorm<Eigen::Infinity>() : 0.0;
    cnorm_ = p.c.size() ? p.c.lpNorm<Eigen::Infinity>() : 0.0;
  }

  ConicSolution run();

 private:
  void build_pattern();
  void assemble(bool identity_hessian);
  bool factor();
  VectorXd solve_kkt(const VectorXd& rhs);
  VectorXd kkt_multiply(const VectorXd& z) const;
  void compute_scaling();
  VectorXd apply_w(const VectorXd& v) const;
  VectorXd apply_winv(const VectorXd& v) const;
  VectorXd jordan_product(const VectorXd& u, const VectorXd& v) const;
  VectorXd jordan_divide(const VectorXd& lam, const VectorXd& r) const;
  VectorXd unit_e() const;
  void initial_point();
  void shift_into_cone(VectorXd& v) const;
  double step_to_boundary(const VectorXd& x, const VectorXd& dx, const VectorXd& s,
                          const VectorXd& ds) const;
  void direction(const VectorXd& xi, const VectorXd& rp, const VectorXd& rd, VectorXd& dx,
                 VectorXd& dy, VectorXd& ds);
  ConicSolution finish(SolveStatus st, int iters);

  const ConicProgram& p_;
  SolverOptions o_;
  std::vector<Block> blocks_;
  int n_ = 0, m_ = 0, nu_ = 0;
  std::vector<bool> is_free_;
  SparseMatrix<double> at_;
  double bnorm_ = 0.0, cnorm_ = 0.0;

  VectorXd x_, y_, s_;
  VectorXd best_x_, best_y_, best_s_;  // lowest max(pres, dres, gap) so far
  double best_metric_ = std::numeric_limits<double>::infinity();
  ConicSolution breakdown(SolveStatus st, int iters);
  std::vector<SocScaling> soc_;
  VectorXd nn_w_;  // sqrt(x/s) on NonNeg coordinates
  VectorXd hdiag_;  // diagonal of W^{-2} on NonNeg coordinates (s/x)

  SparseMatrix<double> kkt_;       // regularized, lower triangle
  SparseMatrix<double> kkt_true_;  // unregularized, full
  Eigen::SimplicialLDLT<SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> ldlt_;
  bool analyzed_ = false;
};

void Ipm::compute_scaling() {
  soc_.clear();
  nn_w_ = VectorXd::Zero(n_);
  hdiag_ = VectorXd::Zero(n_);
  for (const Block& b : blocks_) {
    if (b.kind == ConeKind::NonNeg) {
      for (int i = b.start; i < b.start + b.size; ++i) {
        nn_w_[i] = std::sqrt(x_[i] / s_[i]);
        hdiag_[i] = s_[i] / x_[i];
      }
    } else if (b.kind == ConeKind::SecondOrder) {
      soc_.push_back(soc_scaling(x_.data() + b.start, s_.data() + b.start, b.size));
    }
  }
}

VectorXd Ipm::apply_w(const VectorXd& v) const {
  VectorXd out = VectorXd::Zero(n_);
  std::size_t q = 0;
  for (const Block& b : blocks_) {
    if (b.kind == ConeKind::NonNeg) {
      for (int i = b.start; i < b.start + b.size; ++i) out[i] = nn_w_[i] * v[i];
    } else if (b.kind == ConeKind::SecondOrder) {
      const SocScaling& sc = soc_[q++];
      out.segment(b.start, b.size) = sc.eta * (sc.wbar * v.segment(b.start, b.size));
    }
  }
  return out;
}

VectorXd Ipm::apply_winv(const VectorXd& v) const {
  VectorXd out = VectorXd::Zero(n_);
  std::size_t q = 0;
  for (const Block& b : blocks_) {
    if (b.kind == ConeKind::NonNeg) {
      for (int i = b.start; i < b.start + b.size; ++i) out[i] = v[i] / nn_w_[i];
    } else if (b.kind == ConeKind::SecondOrder) {
      const SocScaling& sc = soc_[q++];
      out.segment(b.start, b.size) = (sc.wbar_inv * v.segment(b.start, b.size)) / sc.eta;
    }
  }
  return out;
}

VectorXd Ipm::jordan_product(const VectorXd& u, const VectorXd& v) const {
  VectorXd out = VectorXd::Zero(n_);
  for (const Block& b : blocks_) {
    if (b.kind == ConeKind::NonNeg) {
      for (int i = b.start; i < b.start + b.size; ++i) out[i] = u[i] * v[i];
    } else if (b.kind == ConeKind::SecondOrder) {
      soc_product(u.data() + b.start, v.data() + b.start, out.data() + b.start, b.size);
    }
  }
  return out;
}

VectorXd Ipm::jordan_divide(const VectorXd& lam, const VectorXd& r) const {
  VectorXd out = VectorXd::Zero(n_);
  for (const Block& b : blocks_) {
    if (b.kind == ConeKind::NonNeg) {
      for (int i = b.start; i < b.start + b.size; ++i) out[i] = r[i] / lam[i];
    } else if (b.kind == ConeKind::SecondOrder) {
      soc_divide(lam.data() + b.start, r.data() + b.start, out.data() + b.start, b.size);
    }
  }
  return out;
}

VectorXd Ipm::unit_e() const {
  VectorXd e = VectorXd::Zero(n_);
  for (const Block& b : blocks_) {
    if (b.kind == ConeKind::NonNeg) e.segment(b.start, b.size).setOnes();
    if (b.kind == ConeKind::SecondOrder) e[b.start] = 1.0;
  }
  return e;
}

// Builds the lower triangle of [[H, A'], [A, -delta I]] where H is either
// Q + W^{-2} (+delta on the diagonal) or Q + I for the initial point.
void Ipm::assemble(bool identity_hessian) {
  const double delta = o_.regularization;
  std::vector<Triplet> reg, tru;
  reg.reserve(4 * n_ + p_.A.nonZeros() + m_);
  auto add = [&](int r, int c, double v) {
    reg.emplace_back(r, c, v);
    tru.emplace_back(r, c, v);
    if (r != c) tru.emplace_back(c, r, v);
  };
  std::size_t q = 0;
  for (const Block& b : blocks_) {
    if (b.kind == ConeKind::SecondOrder && !identity_hessian) {
      const Eigen::MatrixXd& h = soc_[q++].hess;
      for (int j = 0; j < b.size; ++j)
        for (int i = j; i < b.size; ++i) {
          double v = h(i, j);
          if (i == j) v += p_.q[b.start + i];
          add(b.start + i, b.start + j, v);
        }
    } else {
      for (int i = b.start; i < b.start + b.size; ++i) {
        double v = p_.q[i];
        if (identity_hessian)
          v += 1.0;
        else if (b.kind == ConeKind::NonNeg)
          v += hdiag_[i];
        add(i, i, v);
      }
      if (b.kind == ConeKind::SecondOrder) {
        // identity_hessian: keep the dense block pattern stable
        for (int j = 0; j < b.size; ++j)
          for (int i = j + 1; i < b.size; ++i) add(b.start + i, b.start + j, 0.0);
        ++q;
      }
    }
  }
  for (int k = 0; k < p_.A.outerSize(); ++k)
    for (SparseMatrix<double>::InnerIterator it(p_.A, k); it; ++it)
      add(n_ + static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int i = 0; i < m_; ++i) {
    reg.emplace_back(n_ + i, n_ + i, 0.0);
    tru.emplace_back(n_ + i, n_ + i, 0.0);
  }
  // regularization on the diagonal (primal +delta, dual -delta)
  for (int i = 0; i < n_; ++i) reg.emplace_back(i, i, delta);
  for (int i = 0; i < m_; ++i) reg.emplace_back(n_ + i, n_ + i, -delta);

  kkt_.resize(n_ + m_, n_ + m_);
  kkt_.setFromTriplets(reg.begin(), reg.end());
  kkt_true_.resize(n_ + m_, n_ + m_);
  kkt_true_.setFromTriplets(tru.begin(), tru.end());
}

bool Ipm::factor() {
  if (!analyzed_) {
    ldlt_.analyzePattern(kkt_);
    analyzed_ = true;
  }
  auto good = [&] {
    if (ldlt_.info() != Eigen::Success) return false;
    const VectorXd d = ldlt_.vectorD();
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (!std::isfinite(d[i]) || d[i] == 0.0) return false;
    return true;
  };
  ldlt_.factorize(kkt_);
  if (good()) return true;
  // Near the boundary the scaled system loses definiteness numerically; add a
  // growing quasi-definite shift and let refinement against kkt_true_ recover.
  double applied = 0.0;
  for (double shift = 1e-9; shift <= 1e-3; shift *= 100.0) {
    const double inc = shift - applied;
    for (int i = 0; i < n_; ++i) kkt_.coeffRef(i, i) += inc;
    for (int i = 0; i < m_; ++i) kkt_.coeffRef(n_ + i, n_ + i) -= inc;
    applied = shift;
    ldlt_.factorize(kkt_);
    if (good()) return true;
  }
  return false;
}

VectorXd Ipm::kkt_multiply(const VectorXd& z) const { return kkt_true_ * z; }

VectorXd Ipm::solve_kkt(const VectorXd& rhs) {
  // Refine against the unregularized matrix until the residual stops
  // shrinking; a shifted factorization may need more than the nominal steps.
  VectorXd z = ldlt_.solve(rhs);
  VectorXd r = rhs - kkt_multiply(z);
  double rn = r.lpNorm<Eigen::Infinity>();
  const double target = 1e-15 * (1.0 + rhs.lpNorm<Eigen::Infinity>());
  const int max_steps = std::max(o_.refinement_steps, 30);
  for (int k = 0; k < max_steps && rn > target; ++k) {
    const VectorXd cand = z + ldlt_.solve(r);
    const VectorXd rc = rhs - kkt_multiply(cand);
    const double cn = rc.lpNorm<Eigen::Infinity>();
    if (!(cn < rn)) break;
    if (k >= o_.refinement_steps && cn > 0.5 * rn) {
      z = cand;
      break;
    }
    z = cand;
    r = rc;
    rn = cn;
  }
  return z;
}

void Ipm::shift_into_cone(VectorXd& v) const {
  for (const Block& b : blocks_) {
    if (b.kind == ConeKind::NonNeg) {
      const double mn = v.segment(b.start, b.size).minCoeff();
      if (mn <= 0.0) v.segment(b.start, b.size).array() += 1.0 - mn;
    } else if (b.kind == ConeKind::SecondOrder) {
      const double tail = v.segment(b.start + 1, b.size - 1).norm();
      const double alpha = tail - v[b.start];
      if (alpha >= 0.0) v[b.start] += 1.0 + alpha;
    }
  }
}

void Ipm::initial_point() {
  // x: least-norm solution of Ax = b; (s, y): least-norm dual slack.
  assemble(true);
  if (!factor()) {
    x_ = unit_e();
    y_ = VectorXd::Zero(m_);
    s_ = unit_e();
    analyzed_ = false;
    return;
  }
  VectorXd rhs = VectorXd::Zero(n_ + m_);
  rhs.tail(m_) = p_.b;
  VectorXd z = solve_kkt(rhs);
  x_ = z.head(n_);
  shift_into_cone(x_);

  rhs.setZero();
  rhs.head(n_) = p_.c + (p_.q.array() * x_.array()).matrix();
  z = solve_kkt(rhs);
  VectorXd v = z.head(n_);
  y_ = z.tail(m_);
  s_ = v;
  for (int i = 0; i < n_; ++i)
    if (is_free_[i]) s_[i] = 0.0;
  shift_into_cone(s_);
  for (int i = 0; i < n_; ++i)
    if (is_free_[i]) s_[i] = 0.0;
  analyzed_ = false;  // the pattern changes once the NT blocks are dense
}

double Ipm::step_to_boundary(const VectorXd& x, const VectorXd& dx, const VectorXd& s,
                             const VectorXd& ds) const {
  double a = std::numeric_limits<double>::infinity();
  for (const Block& b : blocks_) {
    if (b.kind == ConeKind::Free) continue;
    a = std::min(a, max_step(b, x, dx));
    a = std::min(a, max_step(b, s, ds));
  }
  return a;
}

void Ipm::direction(const VectorXd& xi, const VectorXd& rp, const VectorXd& rd, VectorXd& dx,
                    VectorXd& dy, VectorXd& ds) {
  const VectorXd winv_xi = apply_winv(xi);
  VectorXd rhs(n_ + m_);
  rhs.head(n_) = -rd + winv_xi;
  rhs.tail(m_) = -rp;
  VectorXd z = solve_kkt(rhs);
  dx = z.head(n_);
  dy = -z.tail(m_);
  // ds = W^{-1} xi - W^{-2} dx; zero on free coordinates
  ds = winv_xi - apply_winv(apply_winv(dx));
  for (int i = 0; i < n_; ++i)
    if (is_free_[i]) ds[i] = 0.0;
}

ConicSolution Ipm::finish(SolveStatus st, int iters) {
  ConicSolution sol;
  sol.status = st;
  sol.x = x_;
  sol.y = y_;
  sol.s = s_;
  sol.iterations = iters;
  sol.obj = p_.objective(x_);
  const double quad = 0.5 * (p_.q.array() * x_.array().square()).sum();
  sol.dual_obj = p_.b.dot(y_) - quad + p_.offset;
  const VectorXd rp = p_.A * x_ - p_.b;
  const VectorXd rd = p_.c + (p_.q.array() * x_.array()).matrix() - at_ * y_ - s_;
  sol.residuals.primal = m_ ? rp.lpNorm<Eigen::Infinity>() / (1.0 + bnorm_) : 0.0;
  sol.residuals.dual = n_ ? rd.lpNorm<Eigen::Infinity>() / (1.0 + cnorm_) : 0.0;
  sol.residuals.gap = std::abs(sol.obj - sol.dual_obj) / (1.0 + std::abs(sol.obj));
  return sol;
}

// Returns the best iterate when it meets the reduced tolerance, else `st`.
ConicSolution Ipm::breakdown(SolveStatus st, int iters) {
  if (best_metric_ <= std::max(o_.tol, o_.tol_reduced)) {
    x_ = best_x_;
    y_ = best_y_;
    s_ = best_s_;
    ConicSolution sol = finish(SolveStatus::Optimal, iters);
    sol.reduced_accuracy = true;
    return sol;
  }
  return finish(st, iters);
}

ConicSolution Ipm::run() {
  if (n_ == 0) {
    x_ = VectorXd::Zero(0);
    s_ = VectorXd::Zero(0);
    y_ = VectorXd::Zero(m_);
    const bool ok = m_ == 0 || bnorm_ <= o_.tol;
    return finish(ok ? SolveStatus::Optimal : SolveStatus::Infeasible, 0);
  }
  initial_point();
  const VectorXd e = unit_e();
  int stall = 0;
  double best_pres = std::numeric_limits<double>::infinity();
  double best_dres = std::numeric_limits<double>::infinity();

  for (int it = 0; it < o_.max_iter; ++it) {
    const VectorXd qx = (p_.q.array() * x_.array()).matrix();
    const VectorXd rp = p_.A * x_ - p_.b;
    const VectorXd rd = p_.c + qx - at_ * y_ - s_;
    const double pobj = p_.c.dot(x_) + 0.5 * x_.dot(qx);
    const double dobj = p_.b.dot(y_) - 0.5 * x_.dot(qx);
    const double pres = m_ ? rp.lpNorm<Eigen::Infinity>() / (1.0 + bnorm_) : 0.0;
    const double dres = rd.lpNorm<Eigen::Infinity>() / (1.0 + cnorm_);
    const double xs = x_.dot(s_);
    const double gap = std::max(std::abs(pobj - dobj), std::abs(xs)) / (1.0 + std::abs(pobj + p_.offset));
    if (pres <= o_.tol && dres <= o_.tol && gap <= o_.tol) return finish(SolveStatus::Optimal, it);
    const double metric = std::max({pres, dres, gap});
    if (metric < best_metric_) {
      best_metric_ = metric;
      best_x_ = x_;
      best_y_ = y_;
      best_s_ = s_;
    }

    // Infeasibility certificates along diverging iterates.
    const double by = p_.b.dot(y_);
    if (by > 0.0) {
      const double cert = (at_ * y_ + s_).lpNorm<Eigen::Infinity>() / by;
      if (cert < o_.tol * 1e-2 && pres > o_.tol) return finish(SolveStatus::Infeasible, it);
    }
    const double cx = p_.c.dot(x_);
    if (cx < 0.0) {
      const double cert = std::max(p_.A.cols() ? (p_.A * x_).lpNorm<Eigen::Infinity>() : 0.0,
                                   qx.lpNorm<Eigen::Infinity>()) / -cx;
      if (cert < o_.tol * 1e-2 && dres > o_.tol) return finish(SolveStatus::Unbounded, it);
    }
    if (!x_.allFinite() || !s_.allFinite() || !y_.allFinite()) return breakdown(SolveStatus::Infeasible, it);

    compute_scaling();
    assemble(false);
    if (!factor()) {
      // Structurally singular system: classify rather than abort.
      return breakdown(dres > o_.tol && pres <= o_.tol ? SolveStatus::Unbounded : SolveStatus::Infeasible, it);
    }

    const double mu = nu_ > 0 ? xs / nu_ : 0.0;
    const VectorXd lam = apply_w(s_);

    // Predictor.
    VectorXd dxa, dya, dsa;
    VectorXd xi_aff = -lam;
    direction(xi_aff, rp, rd, dxa, dya, dsa);
    const double alpha_aff = std::min(1.0, step_to_boundary(x_, dxa, s_, dsa));
    double sigma = 0.0;
    if (nu_ > 0) {
      const double mu_aff = (x_ + alpha_aff * dxa).dot(s_ + alpha_aff * dsa) / nu_;
      sigma = std::clamp(std::pow(std::max(mu_aff, 0.0) / mu, 3.0), 0.0, 1.0);
    }

    // Corrector.
    const VectorXd wdx = apply_winv(dxa);
    const VectorXd wds = apply_w(dsa);
    VectorXd rc = sigma * mu * e - jordan_product(lam, lam) - jordan_product(wdx, wds);
    const VectorXd xi = jordan_divide(lam, rc);
    VectorXd dx, dy, ds;
    direction(xi, rp, rd, dx, dy, ds);
    const double amax = step_to_boundary(x_, dx, s_, ds);
    const double alpha = std::min(1.0, 0.99 * amax);

    x_ += alpha * dx;
    y_ += alpha * dy;
    s_ += alpha * ds;

    // Stall detection: tiny steps while residuals stop improving.
    if (pres < 0.5 * best_pres || dres < 0.5 * best_dres) stall = 0;
    else if (alpha < 1e-8) ++stall;
    best_pres = std::min(best_pres, pres);
    best_dres = std::min(best_dres, dres);
    if (stall >= 8) {
      const bool dual_bad = dres > o_.tol && pres <= o_.tol;
      return breakdown(dual_bad ? SolveStatus::Unbounded : SolveStatus::Infeasible, it);
    }
  }
  return breakdown(SolveStatus::IterLimit, o_.max_iter);
}

}  // namespace

ConicSolution solve_socp(const ConicProgram& prog, const SolverOptions& opts) {
  prog.check();
  if (!(opts.tol > 0.0)) throw InputError("tolerance must be positive");
  // Normalize the objective to unit max coefficient; prices in per-unit can
  // be in the hundreds while b is O(1), which ruins the late iterations.
  const double k = std::max(prog.c.size() ? prog.c.lpNorm<Eigen::Infinity>() : 0.0,
                            prog.q.size() ? prog.q.lpNorm<Eigen::Infinity>() : 0.0);
  if (!(k > 1.0) || !std::isfinite(k)) {
    Ipm ipm(prog, opts);
    return ipm.run();
  }
  ConicProgram scaled = prog;
  scaled.c /= k;
  scaled.q /= k;
  scaled.offset /= k;
  Ipm ipm(scaled, opts);
  ConicSolution sol = ipm.run();
  sol.y *= k;
  sol.s *= k;
  sol.obj = prog.objective(sol.x);
  sol.dual_obj *= k;
  return sol;
}

ConicSolution solve_socp(const ConicProgram& prog, double tol) {
  SolverOptions o;
  o.tol = tol;
  return solve_socp(prog, o);
}

// ---------------------------------------------------------------------------
// Certificates

KktReport check_kkt(const ConicProgram& prog, const ConicSolution& sol) {
  KktReport rep;
  if (prog.n_vars == 0 && prog.n_eq() == 0) return rep;
  const VectorXd& x = sol.x;
  if (prog.n_eq() > 0) rep.primal = (prog.A * x - prog.b).lpNorm<Eigen::Infinity>();
  if (prog.n_vars > 0) {
    const VectorXd rd = prog.c + (prog.q.array() * x.array()).matrix() -
                        prog.A.transpose() * sol.y - sol.s;
    rep.dual = rd.lpNorm<Eigen::Infinity>();
    rep.complementarity = std::abs(x.dot(sol.s));
  }
  for (const Block& b : layout(prog)) {
    if (b.kind == ConeKind::Free) {
      for (int i = b.start; i < b.start + b.size; ++i)
        rep.cone_violation = std::max(rep.cone_violation, std::abs(sol.s[i]));
    } else if (b.kind == ConeKind::NonNeg) {
      for (int i = b.start; i < b.start + b.size; ++i)
        rep.cone_violation = std::max({rep.cone_violation, -x[i], -sol.s[i]});
    } else {
      for (const VectorXd* v : {&x, &sol.s}) {
        const double tail = v->segment(b.start + 1, b.size - 1).norm();
        rep.cone_violation = std::max(rep.cone_violation, tail - (*v)[b.start]);
      }
    }
  }
  return rep;
}

ProbeResult dual_sensitivity_probe(const ConicProgram& prog, const ConicSolution& sol, int eq_index,
                                   double delta, const SolverOptions& opts) {
  if (!(delta > 0.0)) throw InputError("delta must be positive");
  if (eq_index < 0 || eq_index >= prog.n_eq()) throw InputError("eq_index out of range");
  ProbeResult res;
  if (sol.status != SolveStatus::Optimal) return res;
  ConicProgram up = prog, down = prog;
  up.b[eq_index] += delta;
  down.b[eq_index] -= delta;
  const ConicSolution su = solve_socp(up, opts);
  const ConicSolution sd = solve_socp(down, opts);
  if (su.status != SolveStatus::Optimal || sd.status != SolveStatus::Optimal) return res;
  res.conclusive = true;
  res.estimate = (su.obj - sd.obj) / (2.0 * delta);
  return res;
}

// ---------------------------------------------------------------------------
// Text format

void write_standard_form(const ConicProgram& prog, std::ostream& os) {
  os.precision(17);
  os << "conic " << prog.n_vars << ' ' << prog.n_eq() << ' ' << prog.A.nonZeros() << ' '
     << prog.cones.size() << '\n';
  for (const ConeBlock& c : prog.cones) {
    const char k = c.kind == ConeKind::Free ? 'F' : c.kind == ConeKind::NonNeg ? 'L' : 'Q';
    os << "cone " << k << ' ' << c.size << '\n';
  }
  for (int j = 0; j < prog.n_vars; ++j)
    if (prog.c[j] != 0.0) os << "c " << j << ' ' << prog.c[j] << '\n';
  for (int j = 0; j < prog.n_vars; ++j)
    if (prog.q[j] != 0.0) os << "q " << j << ' ' << prog.q[j] << '\n';
  os << "offset " << prog.offset << '\n';
  for (int k = 0; k < prog.A.outerSize(); ++k)
    for (SparseMatrix<double>::InnerIterator it(prog.A, k); it; ++it)
      os << "a " << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
  for (int i = 0; i < prog.n_eq(); ++i)
    if (prog.b[i] != 0.0) os << "b " << i << ' ' << prog.b[i] << '\n';
  os << "end\n";
}

ConicProgram read_standard_form(std::istream& is) {
  std::string tag;
  int n = 0, m = 0, nnz = 0, nb = 0;
  if (!(is >> tag) || tag != "conic" || !(is >> n >> m >> nnz >> nb))
    throw InputError("standard form: missing header");
  ConicProgram p;
  p.n_vars = n;
  p.c = VectorXd::Zero(n);
  p.q = VectorXd::Zero(n);
  p.b = VectorXd::Zero(m);
  std::vector<Triplet> trips;
  while (is >> tag) {
    if (tag == "end") break;
    if (tag == "cone") {
      char k;
      int size;
      is >> k >> size;
      ConeKind kind = k == 'F' ? ConeKind::Free : k == 'L' ? ConeKind::NonNeg : ConeKind::SecondOrder;
      p.cones.push_back({kind, size});
    } else if (tag == "c") {
      int j;
      is >> j >> p.c[j];
    } else if (tag == "q") {
      int j;
      is >> j >> p.q[j];
    } else if (tag == "offset") {
      is >> p.offset;
    } else if (tag == "a") {
      int i, j;
      double v;
      is >> i >> j >> v;
      trips.emplace_back(i, j, v);
    } else if (tag == "b") {
      int i;
      is >> i >> p.b[i];
    } else {
      throw InputError("standard form: unknown record '" + tag + "'");
    }
  }
  p.A.resize(m, n);
  p.A.setFromTriplets(trips.begin(), trips.end());
  p.A.makeCompressed();
  p.check();
  return p;
}

// ---------------------------------------------------------------------------
// Variable fixing

VectorXd ReducedProgram::expand(const VectorXd& reduced_x) const {
  VectorXd full = fixed_values;
  for (std::size_t k = 0; k < kept.size(); ++k) full[kept[k]] = reduced_x[static_cast<Eigen::Index>(k)];
  return full;
}

ReducedProgram fix_variables(const ConicProgram& prog, const std::vector<std::pair<int, double>>& fixes) {
  const int n = prog.n_vars;
  const int m = prog.n_eq();
  ReducedProgram out;
  out.eliminated.assign(n, false);
  out.fixed_values = VectorXd::Zero(n);

  std::vector<ConeKind> kind(n);
  for (const Block& b : layout(prog))
    for (int i = b.start; i < b.start + b.size; ++i) kind[i] = b.kind;

  auto fix = [&](int j, double v) {
    if (kind[j] == ConeKind::SecondOrder) throw InputError("cannot fix a second-order cone variable");
    out.eliminated[j] = true;
    out.fixed_values[j] = v;
  };
  for (const auto& [j, v] : fixes) {
    if (j < 0 || j >= n) throw InputError("fixed variable out of range");
    fix(j, v);
  }

  // Row-wise view of A.
  SparseMatrix<double, Eigen::RowMajor> ar = prog.A;
  const double tol = 1e-12;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int i = 0; i < m; ++i) {
      double rhs = prog.b[i];
      bool all_pos = true, all_neg = true, any = false;
      for (SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(ar, i); it; ++it) {
        const int j = static_cast<int>(it.col());
        if (out.eliminated[j]) {
          rhs -= it.value() * out.fixed_values[j];
          continue;
        }
        any = true;
        if (kind[j] != ConeKind::NonNeg) all_pos = all_neg = false;
        if (it.value() <= 0.0) all_pos = false;
        if (it.value() >= 0.0) all_neg = false;
      }
      const double scale = 1.0 + std::abs(prog.b[i]);
      if (!any) {
        if (std::abs(rhs) > 1e-9 * scale) out.infeasible = true;
        continue;
      }
      if ((all_pos && rhs < -1e-9 * scale) || (all_neg && rhs > 1e-9 * scale)) out.infeasible = true;
      if ((all_pos || all_neg) && std::abs(rhs) <= tol * scale) {
        for (SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(ar, i); it; ++it) {
          const int j = static_cast<int>(it.col());
          if (!out.eliminated[j]) {
            fix(j, 0.0);
            changed = true;
          }
        }
      }
    }
  }

  std::vector<int> newidx(n, -1);
  ConicProgram& r = out.program;
  int at = 0;
  for (const Block& b : layout(prog)) {
    int cnt = 0;
    for (int i = b.start; i < b.start + b.size; ++i)
      if (!out.eliminated[i]) {
        newidx[i] = at + cnt;
        out.kept.push_back(i);
        ++cnt;
      }
    if (cnt > 0) {
      if (!r.cones.empty() && r.cones.back().kind == b.kind && b.kind != ConeKind::SecondOrder)
        r.cones.back().size += cnt;
      else
        r.cones.push_back({b.kind, cnt});
    }
    at += cnt;
  }
  r.n_vars = at;
  r.c = VectorXd::Zero(at);
  r.q = VectorXd::Zero(at);
  r.offset = prog.offset;
  for (int j = 0; j < n; ++j) {
    if (out.eliminated[j]) {
      const double v = out.fixed_values[j];
      r.offset += prog.c[j] * v + 0.5 * prog.q[j] * v * v;
    } else {
      r.c[newidx[j]] = prog.c[j];
      r.q[newidx[j]] = prog.q[j];
    }
  }
  std::vector<Triplet> trips;
  std::vector<double> rb;
  for (int i = 0; i < m; ++i) {
    double rhs = prog.b[i];
    std::vector<Triplet> row;
    for (SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(ar, i); it; ++it) {
      const int j = static_cast<int>(it.col());
      if (out.eliminated[j])
        rhs -= it.value() * out.fixed_values[j];
      else
        row.emplace_back(static_cast<int>(rb.size()), newidx[j], it.value());
    }
    if (row.empty()) {
      out.row_of.push_back(-1);
      continue;
    }
    out.row_of.push_back(static_cast<int>(rb.size()));
    trips.insert(trips.end(), row.begin(), row.end());
    rb.push_back(rhs);
  }
  r.b = Eigen::Map<VectorXd>(rb.data(), static_cast<Eigen::Index>(rb.size()));
  r.A.resize(static_cast<Eigen::Index>(rb.size()), at);
  r.A.setFromTriplets(trips.begin(), trips.end());
  r.A.makeCompressed();
  return out;
}

}  // namespace lem::socp
