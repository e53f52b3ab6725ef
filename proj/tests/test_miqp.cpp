#include "doctest.h"
#include "lem/miqp.hpp"
#include "lem/model.hpp"
#include "generators.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace lem::socp;
using namespace lem::miqp;
using Eigen::VectorXd;
using lem::testing::enumerate;
using lem::testing::storage_instance;

namespace {

// min sum 1/2 q_i x_i^2 + c_i x_i over x in {0,1}^n, encoded with x_i + u_i = 1.
MixedBinaryProgram separable(const std::vector<double>& q, const std::vector<double>& c, double offset) {
  ProgramBuilder b;
  const int n = static_cast<int>(q.size());
  const int x = b.add_nonneg(n);
  const int u = b.add_nonneg(n);
  for (int i = 0; i < n; ++i) {
    b.add_quadratic(x + i, q[i]);
    b.set_linear(x + i, c[i]);
    b.add_row({{x + i, 1.0}, {u + i, 1.0}}, 1.0);
  }
  b.add_offset(offset);
  MixedBinaryProgram p;
  p.relaxation = b.build();
  for (int i = 0; i < n; ++i) p.binary_indices.push_back(x + i);
  return p;
}

bool integral(const MixedBinaryProgram& p, const VectorXd& x) {
  for (int j : p.binary_indices)
    if (std::min(std::abs(x[j]), std::abs(1.0 - x[j])) > 1e-6) return false;
  return true;
}

}  // namespace

TEST_CASE("no binaries reduces to the continuous solve") {
  ProgramBuilder b;
  int x = b.add_nonneg(2);
  b.set_linear(x, 1.0);
  b.set_linear(x + 1, 1.0);
  b.add_row({{x, 1.0}, {x + 1, 1.0}}, 1.0);
  MixedBinaryProgram p;
  p.relaxation = b.build();
  auto r = solve_mbp(p);
  auto s = solve_socp(p.relaxation);
  CHECK(r.status == SolveStatus::Optimal);
  CHECK(r.obj == doctest::Approx(s.obj).epsilon(1e-12));
  CHECK(r.nodes == 1);
}

TEST_CASE("single binary quadratic") {
  // (x - 0.4)^2 = x^2 - 0.8x + 0.16
  auto p = separable({2.0}, {-0.8}, 0.16);
  auto r = solve_mbp(p);
  REQUIRE(r.status == SolveStatus::Optimal);
  CHECK(r.x[0] == 0.0);
  CHECK(r.obj == doctest::Approx(0.16).epsilon(1e-7));
  CHECK(r.gap <= 1e-6);
  CHECK(r.bound <= r.obj + 1e-9);
}

TEST_CASE("separable binaries match the 16-assignment enumeration") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < 20; ++k) {
    std::vector<double> q(4), c(4);
    for (int i = 0; i < 4; ++i) {
      q[i] = std::abs(u(rng));
      c[i] = u(rng);
    }
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 0; mask < 16; ++mask) {
      double v = 0.0;
      for (int i = 0; i < 4; ++i)
        if (mask >> i & 1) v += 0.5 * q[i] + c[i];
      best = std::min(best, v);
    }
    auto r = solve_mbp(separable(q, c, 0.0));
    INFO("case " << k);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(r.obj == doctest::Approx(best).epsilon(1e-6));
  }
}

TEST_CASE("preconditions") {
  auto p = separable({1.0}, {0.0}, 0.0);
  BnbOptions o;
  o.mip_gap = 0.0;
  CHECK_THROWS_WITH_AS(solve_mbp(p, o), "mip_gap must be positive", lem::InputError);
  ProgramBuilder b;
  int x = b.add_free(1);
  b.add_row({{x, 1.0}}, 0.5);
  MixedBinaryProgram bad;
  bad.relaxation = b.build();
  bad.binary_indices = {x};
  CHECK_THROWS_AS(solve_mbp(bad), lem::InputError);
}

TEST_CASE("infeasible integer program") {
  // x1 + x2 = 1.5 with both binary: relaxation feasible, no integer point.
  ProgramBuilder b;
  int x = b.add_nonneg(2);
  int u = b.add_nonneg(2);
  b.add_row({{x, 1.0}, {x + 1, 1.0}}, 1.5);
  b.add_row({{x, 1.0}, {u, 1.0}}, 1.0);
  b.add_row({{x + 1, 1.0}, {u + 1, 1.0}}, 1.0);
  b.set_linear(x, 1.0);
  MixedBinaryProgram p;
  p.relaxation = b.build();
  p.binary_indices = {x, x + 1};
  auto r = solve_mbp(p);
  CHECK(r.status == SolveStatus::Infeasible);
  CHECK_FALSE(r.has_incumbent);
}

TEST_CASE("node limit reports an honest gap") {
  std::mt19937_64 rng(99);
  auto p = storage_instance(rng, 4);
  BnbOptions o;
  o.node_limit = 3;
  auto r = solve_mbp(p, o);
  CHECK(r.nodes <= 3 + 2 * o.batch);
  if (r.status == SolveStatus::IterLimit && r.has_incumbent) {
    CHECK(r.bound <= r.obj + 1e-9);
    CHECK(r.gap == doctest::Approx(std::abs(r.obj - r.bound) / (1 + std::abs(r.obj))));
  }
}

TEST_CASE("branch and bound matches exhaustive enumeration") {
  std::mt19937_64 rng(2024);
  for (int k = 0; k < 12; ++k) {
    const int T = 2 + k % 3;  // 6, 9 or 12 binaries
    auto p = storage_instance(rng, T);
    BnbOptions o;
    o.mip_gap = 1e-9;
    auto r = solve_mbp(p, o);
    const double best = enumerate(p);
    INFO("case " << k << " T=" << T);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK(integral(p, r.x));
    CHECK(r.obj == doctest::Approx(best).epsilon(1e-6));
    auto relax = solve_socp(p.relaxation);
    CHECK(relax.obj <= r.obj + 1e-7 * (1 + std::abs(r.obj)));
    CHECK(r.bound <= r.obj + 1e-9);
  }
}

TEST_CASE("relax and repair") {
  SUBCASE("integral relaxation is returned unchanged") {
    auto p = separable({0.0, 0.0}, {1.0, -1.0}, 0.0);
    auto relax = solve_socp(p.relaxation);
    auto r = relax_and_repair(p);
    REQUIRE(r.status == SolveStatus::Optimal);
    CHECK_FALSE(r.fell_back);
    CHECK(r.obj == doctest::Approx(relax.obj).epsilon(1e-7));
    CHECK(r.x[0] == 0.0);
    CHECK(r.x[1] == 1.0);
  }
  SUBCASE("netting zeroes one side of a simultaneous pair") {
    MixedBinaryProgram p;
    p.binary_indices = {0, 1};
    p.exclusive.push_back({0, 1});
    VectorXd relaxed(2);
    relaxed << 0.6, 0.6;
    auto a = repair_assignment(p, relaxed);
    CHECK(a[0] + a[1] == 1.0);
    p.gates = {{0, 2}, {1, 3}};
    VectorXd with_flow(4);
    with_flow << 0.6, 0.6, 0.1, 0.3;
    a = repair_assignment(p, with_flow);
    CHECK(a[0] == 0.0);
    CHECK(a[1] == 1.0);
  }
  SUBCASE("gated flow rounds up and cardinality keeps the strongest") {
    MixedBinaryProgram p;
    p.binary_indices = {0, 1, 2};
    p.gates = {{0, 3}, {1, 4}, {2, 5}};
    p.cardinality.push_back({{0, 1, 2}, 2});
    VectorXd x(6);
    x << 0.2, 0.9, 0.7, 0.05, 0.4, 0.2;
    auto a = repair_assignment(p, x);
    CHECK(a == std::vector<double>{0.0, 1.0, 1.0});
  }
  SUBCASE("repaired objective is never below branch and bound") {
    std::mt19937_64 rng(31);
    for (int k = 0; k < 20; ++k) {
      auto p = storage_instance(rng, 2 + k % 3);
      auto rr = relax_and_repair(p);
      auto bb = solve_mbp(p);
      INFO("case " << k);
      REQUIRE(rr.status == SolveStatus::Optimal);
      REQUIRE(bb.status == SolveStatus::Optimal);
      CHECK(integral(p, rr.x));
      CHECK(bb.obj <= rr.obj + 1e-7 * (1 + std::abs(rr.obj)));
      CHECK(rr.relaxed_obj <= rr.obj + 1e-7 * (1 + std::abs(rr.obj)));
    }
  }
}

TEST_CASE("results do not depend on worker count") {
  std::mt19937_64 rng(4);
  auto p = storage_instance(rng, 4);
  BnbOptions one;
  one.batch = 4;
  BnbOptions many = one;
  many.threads = 4;
  auto a = solve_mbp(p, one);
  auto b = solve_mbp(p, many);
  CHECK(a.obj == b.obj);
  CHECK(a.nodes == b.nodes);
  CHECK((a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("repair incumbent does not change the optimum") {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 5; ++k) {
    auto p = storage_instance(rng, 3);
    BnbOptions o;
    o.mip_gap = 1e-9;
    auto plain = solve_mbp(p, o);
    o.repair_incumbent = true;
    auto seeded = solve_mbp(p, o);
    CHECK(seeded.obj == doctest::Approx(plain.obj).epsilon(1e-6));
    CHECK(seeded.nodes <= plain.nodes);
  }
}
