#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kam/zones.hpp"

using namespace kam;
using namespace kam::zones;

namespace {

IntVec iv(std::initializer_list<long> xs) {
  IntVec v;
  for (long x : xs) v.emplace_back(x);
  return v;
}

const ZoneContext& test_ctx() {
  static const ZoneContext ctx = build_context(decoupled_params(2, 5, 10, 0.02, 4));
  return ctx;
}

}  // namespace

TEST_CASE("parameter law") {
  const auto p = params_from_epsilon(2, std::exp(-10.0), 4.0);
  CHECK(p.K == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(p.Kbig == doctest::Approx(1e4).epsilon(1e-12));
  CHECK(p.alpha == doctest::Approx(std::exp(-5.0) * 1e10).epsilon(1e-12));
  CHECK(p.mode == ParamMode::paper_law);

  // alpha first dips below 1 near eps = 1e-40 for nu = 4
  const auto q = params_from_epsilon(2, 1e-40, 4.0);
  CHECK(q.K == doctest::Approx(8483.0369).epsilon(1e-6));
  CHECK(q.alpha == doctest::Approx(0.439).epsilon(2e-3));

  CHECK_THROWS(params_from_epsilon(2, 0.5, 4.0));   // K < 1
  CHECK_THROWS(params_from_epsilon(2, 0.30, 4.0));  // K < 2
  CHECK_THROWS(params_from_epsilon(2, 1e-10, 2.5)); // nu too small

  CHECK_THROWS(decoupled_params(2, 1.0, 10, 0.1, 4));
  CHECK_THROWS(decoupled_params(2, 5, 4, 0.1, 4));
  CHECK_THROWS(decoupled_params(2, 5, 10, 0.0, 4));

  // paper-law enumeration at tiny eps is infeasible by design
  CHECK_THROWS(build_context(q));
}

TEST_CASE("point classification") {
  const auto ctx = build_context(decoupled_params(2, 5, 10, 0.1, 4));

  const auto v0 = classify_point({0.9, 0.37}, ctx);
  CHECK(v0.in_omega0);
  CHECK_FALSE(v0.witness_k.has_value());
  CHECK(v0.min_resonance >= 0.05);

  const auto v1 = classify_point({0.5, 0.5}, ctx);
  CHECK_FALSE(v1.in_omega0);
  REQUIRE(v1.witness_k.has_value());
  CHECK(*v1.witness_k == iv({1, -1}));
  CHECK(v1.min_resonance == doctest::Approx(0.0));
  CHECK((v1.in_omega1 || v1.in_omega2));

  // the origin is fully resonant: hat part vanishes, every secondary
  // inequality fails, double-resonance zone
  const auto v2 = classify_point({0.0, 0.0}, ctx);
  CHECK_FALSE(v2.in_omega0);
  CHECK_FALSE(v2.in_omega1);
  CHECK(v2.in_omega2);
  CHECK_FALSE(v2.zhat_member);

  CHECK_THROWS(classify_point({1.2, 0.0}, ctx));
}

TEST_CASE("classification symmetry and coverage") {
  const auto& ctx = test_ctx();
  for (int t = 0; t < 2000; ++t) {
    Rng r(31, t);
    const Vec y = r.ball(2, 1.0);
    const Vec my = {-y[0], -y[1]};
    const auto a = classify_point(y, ctx);
    const auto b = classify_point(my, ctx);
    CHECK(a.in_omega0 == b.in_omega0);
    CHECK(a.in_omega1 == b.in_omega1);
    CHECK(a.in_omega2 == b.in_omega2);
    CHECK(a.min_resonance == doctest::Approx(b.min_resonance).epsilon(1e-12));
    CHECK((a.in_omega0 || a.in_omega1 || a.in_omega2));
  }

  // the simple-resonance non-resonance floor dominates the omega0 floor
  for (const auto& kd : ctx.kdata)
    CHECK(0.5 * ctx.params.alpha < 2 * ctx.params.alpha * ctx.params.Kbig / kd.knorm);
}

TEST_CASE("covering check") {
  const auto& ctx = test_ctx();

  const auto empty = covering_check(ctx, 0, 1);
  CHECK(empty.samples == 0);
  CHECK(empty.violations == 0);

  const auto rep = covering_check(ctx, 100000, 20260816);
  CHECK(rep.violations == 0);
  CHECK(rep.frac0 + rep.frac1 + rep.frac2 == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rep.frac0 > 0.5);  // alpha small: most of the ball is non-resonant

  // negative control: verifying against a doubled alpha must fail
  CHECK_THROWS_AS(covering_check(ctx, 100000, 20260816, 2.0), covering_failure);
  try {
    covering_check(ctx, 100000, 20260816, 2.0);
  } catch (const covering_failure& e) {
    CHECK(e.report.violations > 0);
    CHECK(e.report.first_violation.has_value());
    CHECK(e.report.first_violation_vector.has_value());
  }

  // determinism: identical seeds give identical reports
  const auto rep2 = covering_check(ctx, 100000, 20260816);
  CHECK(rep2.frac0 == rep.frac0);
  CHECK(rep2.frac1 == rep.frac1);
  CHECK(rep2.frac2 == rep.frac2);
}

TEST_CASE("double-resonance measure") {
  const auto& ctx = test_ctx();
  const auto rep = omega2_measure(ctx, 200000, 7);
  CHECK(rep.within_bound);
  CHECK(rep.estimate - rep.ci95 <= rep.bound);
  CHECK(rep.bound == rep.c_used * rep.bound_raw);

  // alpha -> 0 collapses the zones
  const auto tiny = build_context(decoupled_params(2, 5, 10, 1e-9, 4));
  const auto rt = omega2_measure(tiny, 50000, 7);
  CHECK(rt.hits == 0);

  // halving alpha quarters the analytic bound
  const auto half = build_context(decoupled_params(2, 5, 10, 0.01, 4));
  const auto rh = omega2_measure(half, 1, 7);
  CHECK(rh.bound == doctest::Approx(rep.bound / 4).epsilon(1e-12));
}

TEST_CASE("measure scales quadratically in alpha below saturation") {
  // At K = Kbig = 3 every membership inequality is jointly homogeneous in
  // (y, alpha) and the inhomogeneous windows (unit ball, |Jhat| <= K^n) are
  // inactive, so the true measure is exactly quadratic; the Monte Carlo
  // estimates must reproduce the factor 16 up to sampling noise.
  const auto lo = omega2_measure(build_context(decoupled_params(2, 3, 3, 0.005, 4)),
                                 1'000'000, 99);
  const auto hi = omega2_measure(build_context(decoupled_params(2, 3, 3, 0.02, 4)),
                                 1'000'000, 99);
  CHECK(lo.within_bound);
  CHECK(hi.within_bound);
  const double ratio = hi.estimate / lo.estimate;
  CHECK(ratio > 16.0 * 0.85);
  CHECK(ratio < 16.0 * 1.15);
}
