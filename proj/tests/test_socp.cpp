#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "lem/model.hpp"
#include "lem/socp.hpp"
#include "generators.hpp"

using namespace lem::socp;
using Eigen::VectorXd;
using lem::testing::random_socp;

namespace {

ConicProgram two_var_lp() {
  ProgramBuilder b;
  int x = b.add_nonneg(2);
  b.set_linear(x, 1.0);
  b.set_linear(x + 1, 1.0);
  b.add_row({{x, 1.0}, {x + 1, 1.0}}, 1.0);
  return b.build();
}

}  // namespace

TEST_CASE("norm cone: x0 >= ||(3,4)|| gives 5") {
  ProgramBuilder b;
  int v = b.add_soc(3);
  b.set_linear(v, 1.0);
  b.add_row({{v + 1, 1.0}}, 3.0);
  b.add_row({{v + 2, 1.0}}, 4.0);
  auto sol = solve_socp(b.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(5.0).epsilon(1e-7));
  CHECK(sol.obj == doctest::Approx(5.0).epsilon(1e-7));
}

TEST_CASE("free variables with square invertible A solve A x = b") {
  ProgramBuilder b;
  int v = b.add_free(2);
  b.set_linear(v, 0.3);
  b.set_linear(v + 1, -0.7);
  b.add_row({{v, 2.0}, {v + 1, 1.0}}, 3.0);
  b.add_row({{v, 1.0}, {v + 1, 3.0}}, 5.0);
  auto sol = solve_socp(b.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(0.8).epsilon(1e-8));
  CHECK(sol.x[1] == doctest::Approx(1.4).epsilon(1e-8));
}

TEST_CASE("two-variable LP has objective 1 and equality dual 1") {
  auto sol = solve_socp(two_var_lp());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.obj == doctest::Approx(1.0).epsilon(1e-7));
  CHECK(sol.y[0] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("diagonal quadratic objective") {
  // min (x-0.4)^2 = x^2 - 0.8x + 0.16 over 0 <= x <= 1
  ProgramBuilder b;
  int x = b.add_nonneg(2);
  b.add_quadratic(x, 2.0);
  b.set_linear(x, -0.8);
  b.add_offset(0.16);
  b.add_row({{x, 1.0}, {x + 1, 1.0}}, 1.0);
  auto sol = solve_socp(b.build());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.x[0] == doctest::Approx(0.4).epsilon(1e-7));
  CHECK(std::abs(sol.obj) < 1e-8);
}

TEST_CASE("check_kkt") {
  SUBCASE("solver output satisfies its own contract") {
    auto prog = two_var_lp();
    auto sol = solve_socp(prog, 1e-8);
    auto rep = check_kkt(prog, sol);
    CHECK(rep.primal <= 1e-7);
    CHECK(rep.dual <= 1e-7);
    CHECK(rep.complementarity <= 1e-7);
  }
  SUBCASE("perturbed primal point is detected") {
    auto prog = two_var_lp();
    auto sol = solve_socp(prog, 1e-8);
    sol.x[0] += 1e-3;
    CHECK(check_kkt(prog, sol).primal >= 1e-4);
  }
  SUBCASE("empty program") {
    ConicProgram p;
    p.c = VectorXd::Zero(0);
    p.q = VectorXd::Zero(0);
    p.b = VectorXd::Zero(0);
    p.A.resize(0, 0);
    auto sol = solve_socp(p);
    CHECK(sol.status == SolveStatus::Optimal);
    auto rep = check_kkt(p, sol);
    CHECK(rep.primal == 0.0);
    CHECK(rep.dual == 0.0);
    CHECK(rep.complementarity == 0.0);
  }
}

TEST_CASE("dual sensitivity probe") {
  auto prog = two_var_lp();
  auto sol = solve_socp(prog);
  SUBCASE("LP equality dual") {
    auto pr = dual_sensitivity_probe(prog, sol, 0, 1e-5);
    REQUIRE(pr.conclusive);
    CHECK(pr.estimate == doctest::Approx(sol.y[0]).epsilon(1e-3));
    CHECK(pr.estimate == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("equality-only program") {
    ProgramBuilder b;
    int v = b.add_free(2);
    b.add_quadratic(v, 1.0);
    b.add_quadratic(v + 1, 2.0);
    b.set_linear(v, 0.5);
    b.add_row({{v, 1.0}, {v + 1, 1.0}}, 2.0);
    auto p = b.build();
    auto s = solve_socp(p);
    REQUIRE(s.status == SolveStatus::Optimal);
    auto pr = dual_sensitivity_probe(p, s, 0, 1e-5);
    REQUIRE(pr.conclusive);
    CHECK(std::abs(pr.estimate - s.y[0]) <= 1e-3 * std::abs(s.y[0]));
  }
  SUBCASE("delta must be positive") {
    CHECK_THROWS_WITH_AS(dual_sensitivity_probe(prog, sol, 0, 0.0), "delta must be positive",
                         lem::InputError);
  }
}

TEST_CASE("infeasible and unbounded programs terminate with a status") {
  SUBCASE("infeasible") {
    ProgramBuilder b;
    int x = b.add_nonneg(2);
    b.set_linear(x, 1.0);
    b.add_row({{x, 1.0}, {x + 1, 1.0}}, -1.0);
    auto sol = solve_socp(b.build());
    CHECK(sol.status == SolveStatus::Infeasible);
  }
  SUBCASE("unbounded") {
    ProgramBuilder b;
    int x = b.add_nonneg(2);
    b.set_linear(x, -1.0);
    b.add_row({{x, 1.0}, {x + 1, -1.0}}, 0.0);
    auto sol = solve_socp(b.build());
    CHECK(sol.status == SolveStatus::Unbounded);
  }
  SUBCASE("inconsistent duplicate rows") {
    ProgramBuilder b;
    int x = b.add_free(1);
    b.add_row({{x, 1.0}}, 1.0);
    b.add_row({{x, 1.0}}, 2.0);
    auto sol = solve_socp(b.build());
    CHECK(sol.status != SolveStatus::Optimal);
  }
}

TEST_CASE("random feasible programs: strong duality, probe agreement, scaling") {
  std::mt19937 rng(20240611);
  int probes = 0;
  for (int k = 0; k < 50; ++k) {
    auto prog = random_socp(rng, k % 2 == 1);
    SolverOptions opts;
    opts.tol = 1e-8;
    auto sol = solve_socp(prog, opts);
    INFO("program " << k);
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(std::abs(sol.obj - sol.dual_obj) <= 10 * opts.tol * (1.0 + std::abs(sol.obj)));
    auto rep = check_kkt(prog, sol);
    CHECK(rep.cone_violation <= 1e-12);

    if (k % 5 == 0) {
      opts.tol = 1e-10;
      auto tight = solve_socp(prog, opts);
      auto pr = dual_sensitivity_probe(prog, tight, 0, 1e-5, opts);
      if (pr.conclusive) {
        ++probes;
        CHECK(std::abs(pr.estimate - tight.y[0]) <= 1e-3 * std::max(1.0, std::abs(tight.y[0])));
      }
    }
    if (k % 7 == 0) {
      ConicProgram scaled = prog;
      scaled.c *= 3.0;
      scaled.q *= 3.0;
      opts.tol = 1e-10;
      auto a = solve_socp(prog, opts);
      auto bsol = solve_socp(scaled, opts);
      REQUIRE(bsol.status == SolveStatus::Optimal);
      // (x, y/3, s/3) from the scaled program must be a KKT point of the original.
      ConicSolution back = bsol;
      back.y /= 3.0;
      back.s /= 3.0;
      auto kk = check_kkt(prog, back);
      CHECK(kk.primal <= 1e-8);
      CHECK(kk.dual <= 1e-8 * (1.0 + prog.c.lpNorm<Eigen::Infinity>()));
      CHECK(kk.complementarity <= 1e-8 * (1.0 + std::abs(a.obj)));
      SolverOptions tight;
      tight.tol = 1e-12;
      auto a12 = solve_socp(prog, tight);
      auto b12 = solve_socp(scaled, tight);
      if (a12.status == SolveStatus::Optimal && b12.status == SolveStatus::Optimal)
        CHECK((a12.y * 3.0 - b12.y).lpNorm<Eigen::Infinity>() <= 1e-5 * (1 + a12.y.lpNorm<Eigen::Infinity>()));
      // The argmin is unique only with strictly convex structure; compare objectives
      CHECK(bsol.obj - 3.0 * prog.offset == doctest::Approx(3.0 * (a.obj - prog.offset)).epsilon(1e-6));
    }
  }
  CHECK(probes >= 5);
}

TEST_CASE("standard form text round trip") {
  std::mt19937 rng(7);
  auto prog = random_socp(rng, true);
  std::stringstream ss;
  write_standard_form(prog, ss);
  auto back = read_standard_form(ss);
  CHECK(back.n_vars == prog.n_vars);
  CHECK(back.cones.size() == prog.cones.size());
  CHECK((back.c - prog.c).norm() == 0.0);
  CHECK((Eigen::MatrixXd(back.A) - Eigen::MatrixXd(prog.A)).norm() == 0.0);
  CHECK(solve_socp(back).obj == doctest::Approx(solve_socp(prog).obj));
}

TEST_CASE("fix_variables eliminates forced zeros") {
  // p - x*P + s = 0 with x fixed to 0 forces p = s = 0.
  ProgramBuilder b;
  int v = b.add_nonneg(4);  // p, x, s, t
  b.set_linear(v, -1.0);
  b.add_row({{v, 1.0}, {v + 1, -2.0}, {v + 2, 1.0}}, 0.0);
  b.add_row({{v + 1, 1.0}, {v + 3, 1.0}}, 1.0);
  auto prog = b.build();
  auto red = fix_variables(prog, {{v + 1, 0.0}});
  CHECK_FALSE(red.infeasible);
  CHECK(red.program.n_vars == 1);  // only t remains
  auto sol = solve_socp(red.program);
  REQUIRE(sol.status == SolveStatus::Optimal);
  auto full = red.expand(sol.x);
  CHECK(full[v] == 0.0);
  CHECK(full[v + 3] == doctest::Approx(1.0));

  auto red1 = fix_variables(prog, {{v + 1, 1.0}});
  auto s1 = solve_socp(red1.program);
  REQUIRE(s1.status == SolveStatus::Optimal);
  CHECK(s1.obj == doctest::Approx(-2.0).epsilon(1e-7));
}
