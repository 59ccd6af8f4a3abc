#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <nlohmann/json.hpp>

#include "kam/normalform.hpp"

using namespace kam;
using namespace kam::nf;

namespace {

IntVec iv(std::initializer_list<long> xs) {
  IntVec v;
  for (long x : xs) v.emplace_back(x);
  return v;
}

// eps * sum of cos(k.x) terms as both a potential and a state function
potential::AnalyticPotential cos_sum(
    int n, double s, std::vector<std::pair<std::vector<long>, double>> amps) {
  potential::AnalyticPotential P;
  P.n = n;
  P.s = s;
  double radius = 0;
  for (const auto& [k, a] : amps) {
    IntVec kk;
    double k1 = 0;
    for (long x : k) {
      kk.emplace_back(x);
      k1 += std::labs(x);
    }
    P.modes[kk] = Cplx(a / 2, 0);
    radius = std::max(radius, k1);
  }
  P.support_radius = static_cast<int>(radius);
  return P;
}

double rel_diff(Cplx a, Cplx b) {
  return std::abs(a - b) / std::max(1e-300, std::abs(b));
}

}  // namespace

TEST_CASE("coefficient algebra is exact on closed forms") {
  // (y.(1,1))^2 / (y.e1): content of non-primitive keys moves to the scalar
  CoefFn f;
  f.add_term({1.0, 0.0}, {{iv({2, 2}), 2}, {iv({1, 0}), -1}});
  const Vec y{0.7, 0.4};
  const double expect = 4.0 * std::pow(0.7 + 0.4, 2) / 0.7;
  CHECK(std::abs(f.eval(y) - expect) <= 1e-15 * expect);

  // derivative along (0,1): d/dt f(y + t (0,1)) at t = 0
  const CoefFn d = f.deriv(iv({0, 1}));
  const double hstep = 1e-6;
  const Vec yp{0.7, 0.4 + hstep}, ym{0.7, 0.4 - hstep};
  const double fd = (f.eval(yp) - f.eval(ym)).real() / (2 * hstep);
  CHECK(std::abs(d.eval(y).real() - fd) <= 1e-7 * std::abs(fd));

  // product merges exponents on equal primitive directions
  const CoefFn a = CoefFn::linear(iv({1, 2}));
  const CoefFn b = CoefFn::linear(iv({2, 4}));  // = 2 (y.(1,2))
  const CoefFn ab = a * b;
  REQUIRE(ab.terms.size() == 1);
  CHECK(ab.terms.front().pows.size() == 1);
  CHECK(ab.terms.front().pows.begin()->second == 2);
  CHECK(std::abs(ab.eval(y) - 2.0 * std::pow(0.7 + 0.8, 2)) <= 1e-14);

  // exact cancellation drops terms
  const CoefFn z = ab - Cplx{2.0, 0.0} * (a * a);
  CHECK(z.empty());

  // dividing by a linear form undoes multiplying by it
  const CoefFn q = (ab.divide_linear(iv({1, 2}))).divide_linear(iv({1, 2}));
  REQUIRE(q.terms.size() == 1);
  CHECK(q.terms.front().pows.empty());
  CHECK(std::abs(q.terms.front().c - Cplx{2.0, 0.0}) == 0.0);
}

TEST_CASE("state function evaluation and gradients") {
  StateFunction f;
  f.n = 2;
  f.add_mode(iv({1, 0}), CoefFn::constant({0.5, 0.0}));
  f.add_mode(iv({-1, 0}), CoefFn::constant({0.5, 0.0}));
  const Vec y{0.3, 0.1}, x{0.8, 1.7};
  CHECK(std::abs(f.eval(y, x) - std::cos(0.8)) <= 1e-15);

  const CVec gx = f.grad_x(y, x);
  CHECK(std::abs(gx[0] - Cplx{-std::sin(0.8), 0.0}) <= 1e-15);
  CHECK(std::abs(gx[1]) == 0.0);

  const StateFunction h = StateFunction::kinetic(2);
  CHECK(std::abs(h.eval(y, x) - 0.5 * (0.09 + 0.01)) <= 1e-16);
  const CVec gy = h.grad_y(y, x);
  CHECK(std::abs(gy[0] - Cplx{0.3, 0.0}) <= 1e-16);
  CHECK(std::abs(gy[1] - Cplx{0.1, 0.0}) <= 1e-16);
}

TEST_CASE("poisson bracket convention and antisymmetry") {
  // with h = |y|^2/2 and v = cos x1: {h, v} = -y . v_x = y1 sin x1
  const StateFunction h = StateFunction::kinetic(2);
  StateFunction v;
  v.n = 2;
  v.add_mode(iv({1, 0}), CoefFn::constant({0.5, 0.0}));
  v.add_mode(iv({-1, 0}), CoefFn::constant({0.5, 0.0}));
  const StateFunction hv = poisson_bracket(h, v);
  const Vec y{0.6, -0.2}, x{1.1, 0.4};
  CHECK(rel_diff(hv.eval(y, x), Cplx{0.6 * std::sin(1.1), 0.0}) <= 1e-14);

  const StateFunction vh = poisson_bracket(v, h);
  CHECK(std::abs(vh.eval(y, x) + hv.eval(y, x)) <= 1e-15);

  // {y1^2/2, y2 cos x1} = y1 y2 sin x1
  StateFunction u;
  u.n = 2;
  CoefFn c2;
  c2.add_term({0.5, 0.0}, {{iv({0, 1}), 1}});
  u.add_mode(iv({1, 0}), c2);
  u.add_mode(iv({-1, 0}), c2);
  const StateFunction hu = poisson_bracket(h, u);
  CHECK(rel_diff(hu.eval(y, x), Cplx{0.6 * (-0.2) * std::sin(1.1), 0.0}) <=
        1e-13);
}

TEST_CASE("weighted norm attains closed-form values") {
  Domain D = domain_points({{0.5, 0.5}});

  StateFunction f;
  f.n = 2;
  f.add_mode(iv({1, 2}), CoefFn::constant({0.5, 0.0}));
  f.add_mode(iv({-1, -2}), CoefFn::constant({0.5, 0.0}));
  const auto nv = weighted_norm(f, D, 0.1, 0.7);
  CHECK(nv.raw == doctest::Approx(0.5 * std::exp(3 * 0.7)).epsilon(1e-14));
  CHECK(nv.certified == doctest::Approx(norm_safety * nv.raw).epsilon(1e-15));

  // |y1| over the complex ball of radius r around the real ball: the
  // real-axis extreme point is in the sample set, so the sup is exact
  StateFunction g;
  g.n = 2;
  g.add_mode(iv({0, 0}), CoefFn::linear(iv({1, 0})));
  const Domain B = domain_ball({1.0, 0.0}, 0.25);
  CHECK(weighted_norm(g, B, 0.1, 1.0).raw == doctest::Approx(1.35).epsilon(1e-14));
}

TEST_CASE("high-mode truncation decay in the angle width") {
  Domain D = domain_points({{0.5, 0.5}});
  StateFunction f;
  f.n = 2;
  f.add_mode(iv({3, 0}), CoefFn::constant({1.0, 0.0}));
  f.add_mode(iv({-3, 0}), CoefFn::constant({1.0, 0.0}));
  const double s = 1.0, sigma = 0.4;
  REQUIRE(truncate(f, 3.0).term_count() == 2);  // N = 3 keeps it...
  CHECK(truncate_high(f, 2.9).term_count() == 2);  // ...and T_N^perp for N < 3
  const double full = weighted_norm(f, D, 0.1, s).raw;
  const double narrow = weighted_norm(f, D, 0.1, s - sigma).raw;
  CHECK(narrow <= std::exp(-2.9 * sigma) * full * (1 + 1e-14));
  CHECK(narrow == doctest::Approx(std::exp(-3 * sigma) * full).epsilon(1e-13));
}

TEST_CASE("plain sup norm sits between weighted norms") {
  Domain D = domain_points({{0.4, 0.6}});
  StateFunction f;
  f.n = 2;
  f.add_mode(iv({1, 0}), CoefFn::constant({0.3, 0.0}));
  f.add_mode(iv({-1, 0}), CoefFn::constant({0.3, 0.0}));
  f.add_mode(iv({1, 1}), CoefFn::constant({0.1, 0.1}));
  f.add_mode(iv({-1, -1}), CoefFn::constant({0.1, -0.1}));
  const double r = 0.05, s = 0.6, sigma = 0.5;
  const double lower = weighted_norm(f, D, r, s).raw;
  const double plain = plain_sup_norm(f, D, r, s);
  const double upper = std::pow(1.0 + 2.0 / sigma, 2) *
                       weighted_norm(f, D, r, s + sigma).raw;
  CHECK(lower <= plain * (1 + 1e-12));
  CHECK(plain <= upper * (1 + 1e-12));
}

TEST_CASE("projections split a function exactly") {
  StateFunction f;
  f.n = 2;
  f.add_mode(iv({0, 0}), CoefFn::linear(iv({1, 0})));
  f.add_mode(iv({0, 1}), CoefFn::constant({0.5, 0.0}));
  f.add_mode(iv({0, -1}), CoefFn::constant({0.5, 0.0}));
  f.add_mode(iv({0, 2}), CoefFn::constant({0.25, 0.0}));
  f.add_mode(iv({1, 1}), CoefFn::constant({0.1, 0.0}));

  const Sublattice L = Sublattice::line(iv({0, 1}));
  const StateFunction p = project(f, L), q = project_perp(f, L);
  CHECK(p.modes.size() == 4);  // 0, (0,1), (0,-1), (0,2)
  CHECK(q.modes.size() == 1);
  const Vec y{0.3, 0.4}, x{0.9, 2.1};
  CHECK(std::abs((p + q).eval(y, x) - f.eval(y, x)) <= 1e-16);

  CHECK(Sublattice::trivial().contains(iv({0, 0})));
  CHECK(!Sublattice::trivial().contains(iv({0, 1})));
  CHECK(L.contains(iv({0, -3})));
  CHECK(!L.contains(iv({1, 3})));
}

TEST_CASE("homological equation solves a single cosine in closed form") {
  const StateFunction h = StateFunction::kinetic(2);
  const double eps = 1e-4;
  const StateFunction f =
      StateFunction::from_potential(cos_sum(2, 1.0, {{{1, 0}, 1.0}}), eps);
  const Domain D = domain_ball({0.8, 0.3}, 0.1);
  const auto sol = solve_homological(h, f, Sublattice::trivial(), 2.0, 0.3, D,
                                     0.05, 1.0);

  // phi = eps sin(x1) / y1
  const Vec y{0.82, 0.25}, x{0.7, 1.9};
  CHECK(rel_diff(sol.phi.eval(y, x), Cplx{eps * std::sin(0.7) / 0.82, 0.0}) <=
        1e-13);
  CHECK(sol.residual <= 1e-12 * std::max(1.0, sol.residual_scale));
  CHECK(sol.phi_norm <= sol.fK_norm / 0.3 * (1 + 1e-12));

  // modes above the cutoff are not divided
  const StateFunction far =
      StateFunction::from_potential(cos_sum(2, 1.0, {{{3, 2}, 1.0}}), eps);
  const auto sol2 = solve_homological(h, far, Sublattice::trivial(), 2.0, 0.3,
                                      D, 0.05, 1.0);
  CHECK(sol2.phi.empty());
}

TEST_CASE("homological equation refuses a domain crossing the resonance") {
  const StateFunction h = StateFunction::kinetic(2);
  const StateFunction f =
      StateFunction::from_potential(cos_sum(2, 1.0, {{{1, 0}, 1.0}}), 1e-4);
  const Domain D = domain_ball({0.1, 0.5}, 0.2);  // y1 crosses alpha = 0.3
  CHECK_THROWS_AS(solve_homological(h, f, Sublattice::trivial(), 2.0, 0.3, D,
                                    0.05, 1.0),
                  small_divisor_error);
  try {
    solve_homological(h, f, Sublattice::trivial(), 2.0, 0.3, D, 0.05, 1.0);
  } catch (const small_divisor_error& e) {
    // either sign of the resonant mode is a valid witness
    CHECK((e.witness_m == iv({1, 0}) || e.witness_m == iv({-1, 0})));
    CHECK(std::abs(e.witness_y[0]) <= 0.3 + 0.05 + 1e-12);
  }
}

TEST_CASE("averaging step contracts and scales linearly in the forcing") {
  const StateFunction h = StateFunction::kinetic(2);
  const Domain D = domain_ball({0.75, 0.4}, 0.05);
  const double alpha = 0.3, K = 2.0, r = 0.15, s = 1.0, eps = 1e-5;
  const StateFunction f =
      StateFunction::from_potential(cos_sum(2, 1.0, {{{1, 0}, 1.0}}), eps);

  const auto res = averaging_step(h, f, Sublattice::trivial(), alpha, K, D, r, s);
  CHECK(res.report.theta_check < 1.0);
  CHECK(res.report.lie_orders >= 2);
  CHECK(res.report.f_star_norm <= res.report.f_star_bound);
  CHECK(res.report.r_next == doctest::Approx(r * 0.75));
  CHECK(res.report.s_next == doctest::Approx(s * 0.75));

  // doubling the forcing doubles the smallness measure
  const StateFunction f2 = 2.0 * f;
  const auto res2 = averaging_step(h, f2, Sublattice::trivial(), alpha, K, D, r, s);
  CHECK(res2.report.theta_check ==
        doctest::Approx(2.0 * res.report.theta_check).epsilon(1e-12));

  // an over-large forcing is refused with the measured smallness attached
  const StateFunction fbig = 1e4 * f;
  CHECK_THROWS_AS(
      averaging_step(h, fbig, Sublattice::trivial(), alpha, K, D, r, s),
      step_too_large);
}

TEST_CASE("averaging step is the exact identity when nothing needs averaging") {
  const StateFunction h = StateFunction::kinetic(2);
  const Domain D = domain_ball({0.75, 0.4}, 0.05);
  // a single high mode: T_K drops it, so f^K = 0
  const StateFunction f =
      StateFunction::from_potential(cos_sum(2, 1.0, {{{4, 1}, 1.0}}), 1e-5);
  const auto res = averaging_step(h, f, Sublattice::trivial(), 0.3, 2.0, D,
                                  0.15, 1.0);
  CHECK(res.phi.empty());
  CHECK(res.f_star.empty());
  CHECK(res.f_next.modes.size() == f.modes.size());
  const Vec y{0.74, 0.42}, x{0.3, 0.9};
  CHECK(std::abs(res.f_next.eval(y, x) - f.eval(y, x)) == 0.0);
}

namespace {

struct IterateSetup {
  StateFunction h = StateFunction::kinetic(2);
  potential::AnalyticPotential P;
  StateFunction f;
  Domain D;
  double alpha = 0.25, K = 3.0, r = 0.02, s = 1.0;

  // the center keeps |y.m| >= alpha for every |m|_1 <= K off the lattice,
  // including bracket-generated directions like (1,-2)
  explicit IterateSetup(double eps) {
    P = cos_sum(2, 1.0, {{{1, 0}, 1.0}, {{1, 1}, 1.0}});
    f = StateFunction::from_potential(P, eps);
    D = domain_ball({1.1, 0.35}, 0.03);
  }
};

// several cases inspect the same ladder; run it once
const IterateSetup& iterate_setup() {
  static const IterateSetup S(5e-12);
  return S;
}

const NormalFormReport& iterate_report() {
  static const NormalFormReport rep = [] {
    const auto& S = iterate_setup();
    return normal_form_iterate(S.h, S.f, Sublattice::trivial(), S.alpha, S.K,
                               S.D, S.r, S.s);
  }();
  return rep;
}

}  // namespace

TEST_CASE("normal form iteration certifies its remainder bounds") {
  const auto& S = iterate_setup();
  const auto& rep = iterate_report();
  REQUIRE(rep.accepted);
  CHECK(rep.theta_star < 1.0);
  CHECK(rep.steps == 3);
  CHECK(rep.r_star == doctest::Approx(S.r / 2));
  CHECK(rep.s_star == doctest::Approx(S.s * (1.0 - 1.0 / 3.0)));
  CHECK(rep.bounds_hold);
  CHECK(rep.f_star_norm <= rep.f_star_bound);
  if (rep.low_mode_norm > 0)
    CHECK(std::log(rep.low_mode_norm) <= rep.low_mode_log_bound);

  // the resonant part is x-independent for the trivial sublattice, and the
  // non-resonant remainder has zero angle average (exact, by construction)
  CHECK(rep.g.modes.size() <= 1);
  for (const auto& [k, fn] : rep.g.modes) CHECK(l1_norm(k) == 0.0);
  CHECK(rep.f_star_star.modes.count(IntVec(2, 0)) == 0);

  // every ladder step stayed small and solved its equation to tolerance
  for (const auto& sr : rep.step_reports) {
    CHECK(sr.theta_check <= 1.0);
    CHECK(sr.residual <= 1e-12);
  }

  // the strong smallness regime holds here, so the secondary bounds apply
  REQUIRE(rep.strong_smallness);
  CHECK(rep.g_shift_norm <= 2.0 * rep.theta);
  CHECK(rep.f_ss_norm <= rep.f_ss_bound);

  // refusal path: a large forcing reports not-accepted without throwing
  const auto bad = normal_form_iterate(S.h, 1e6 * S.f, Sublattice::trivial(),
                                       S.alpha, S.K, S.D, S.r, S.s);
  CHECK(!bad.accepted);
  CHECK(bad.theta_star >= 1.0);
}

TEST_CASE("normal form transformation conserves the transformed energy") {
  const auto& S = iterate_setup();
  const auto& rep = iterate_report();
  REQUIRE(rep.accepted);

  // H(Psi(p)) = (h + f_flat + f_star)(p) for real points in the core
  const StateFunction target = S.h + rep.f_flat + rep.f_star;
  for (const Vec& p0 : {Vec{1.1, 0.35}, Vec{1.11, 0.33}}) {
    Vec y = p0, x{0.7, 1.9};
    const Cplx rhs = target.eval(y, x);
    transform_point(rep, y, x);
    const Cplx lhs = (S.h + S.f).eval(y, x);
    CHECK(std::abs(lhs - rhs) <= 1e-11 * std::abs(rhs));
  }

  // the transformation is near-identity at the perturbation scale
  Vec y{1.1, 0.35}, x{0.7, 1.9};
  transform_point(rep, y, x);
  CHECK(std::abs(y[0] - 1.1) <= 1e-6);
  CHECK(std::abs(x[0] - 0.7) <= 1e-6);
}

TEST_CASE("generator flows are symplectic to round-off") {
  const auto& rep = iterate_report();
  REQUIRE(rep.accepted);
  REQUIRE(!rep.generators.empty());
  const StateFunction& phi = rep.generators.front();
  REQUIRE(!phi.empty());

  // complex-step Jacobian of the time-1 flow: exact derivatives, so the
  // symplectic identity is tested at the integrator tolerance
  const double hstep = 1e-30;
  const Vec y0{1.1, 0.35}, x0{0.7, 1.9};
  double M[4][4];
  for (int col = 0; col < 4; ++col) {
    CVec y(2), x(2);
    for (int j = 0; j < 2; ++j) {
      y[j] = y0[j];
      x[j] = x0[j];
    }
    if (col < 2)
      y[col] += Cplx{0.0, hstep};
    else
      x[col - 2] += Cplx{0.0, hstep};
    flow_time1(phi, y, x);
    for (int rw = 0; rw < 2; ++rw) {
      M[rw][col] = y[rw].imag() / hstep;
      M[rw + 2][col] = x[rw].imag() / hstep;
    }
  }
  // S = M^T J M with J (y,x) block structure: S must equal J
  double J[4][4] = {{0, 0, 1, 0}, {0, 0, 0, 1}, {-1, 0, 0, 0}, {0, -1, 0, 0}};
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      double sab = 0;
      for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) sab += M[i][a] * J[i][j] * M[j][b];
      CHECK(std::abs(sab - J[a][b]) <= 1e-10);
    }
}

TEST_CASE("single-step ladder matches the plain averaging step") {
  const StateFunction h = StateFunction::kinetic(2);
  const Domain D = domain_ball({0.75, 0.4}, 0.05);
  const double alpha = 0.3, r = 0.15, s = 1.0, eps = 2e-6;
  const StateFunction f =
      StateFunction::from_potential(cos_sum(2, 1.0, {{{1, 0}, 1.0}}), eps);

  const auto one = averaging_step(h, f, Sublattice::trivial(), alpha, 1.0, D, r, s);
  const auto rep = normal_form_iterate(h, f, Sublattice::trivial(), alpha, 1.0,
                                       D, r, s);
  REQUIRE(rep.accepted);
  REQUIRE(rep.steps == 1);
  const StateFunction ladder_next = rep.f_flat + rep.f_star;
  const Vec y{0.74, 0.42}, x{0.3, 0.9};
  CHECK(std::abs(ladder_next.eval(y, x) - one.f_next.eval(y, x)) == 0.0);
}

TEST_CASE("flows integrate shear generators exactly") {
  StateFunction phi;
  phi.n = 2;
  phi.add_mode(iv({1, 0}), CoefFn::constant({0.15, 0.0}));
  phi.add_mode(iv({-1, 0}), CoefFn::constant({0.15, 0.0}));
  // phi = 0.3 cos x1: x frozen, y1 advances by 0.3 sin x1
  Vec y{0.5, 0.2}, x{1.2, 0.7};
  flow_time1(phi, y, x);
  CHECK(y[0] == doctest::Approx(0.5 + 0.3 * std::sin(1.2)).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.2).epsilon(1e-14));
  CHECK(x[0] == doctest::Approx(1.2).epsilon(1e-14));

  StateFunction psi;
  psi.n = 2;
  psi.add_mode(iv({0, 0}), CoefFn::linear(iv({0, 1})));
  // psi = y2: y frozen, x2 advances by 1
  Vec y2{0.5, 0.2}, x2{1.2, 0.7};
  flow_time1(psi, y2, x2);
  CHECK(x2[1] == doctest::Approx(1.7).epsilon(1e-13));
  CHECK(y2[1] == doctest::Approx(0.2).epsilon(1e-14));
}

namespace {

struct LineSetup {
  StateFunction h = StateFunction::kinetic(2);
  potential::AnalyticPotential P;
  StateFunction f;
  Domain D;
  IntVec k = iv({0, 1});
  double alpha = 0.3, K = 3.0, r = 0.02, s = 1.0;

  explicit LineSetup(double eps) {
    P = cos_sum(2, 1.0, {{{0, 1}, eps}, {{1, 1}, 0.4 * eps}, {{0, 2}, 0.3 * eps}});
    f = StateFunction::from_potential(P, 1.0);
    D = domain_ball({0.8, 0.02}, 0.004);
  }
};

}  // namespace

TEST_CASE("resonant normal form reproduces the lattice profile") {
  const double eps = 2e-11;
  LineSetup S(eps);
  const auto L = Sublattice::line(S.k);
  const auto rep =
      normal_form_iterate(S.h, S.f, L, S.alpha, S.K, S.D, S.r, S.s);
  REQUIRE(rep.accepted);
  REQUIRE(rep.strong_smallness);

  const auto prof = potential::lattice_projection(S.P, S.k);
  const auto cmp = effective_profile(rep, prof, 0.1);
  CHECK(cmp.fk_abs == doctest::Approx(eps / 2).epsilon(1e-12));
  CHECK(cmp.within);
  CHECK(cmp.gf_norm <= cmp.gf_bound);
  CHECK(cmp.residual_norm <= cmp.residual_bound);
  // the profile deviation is higher order in the forcing
  CHECK(cmp.gf_norm <= 1e-3 * cmp.fk_abs);

  // low harmonics keep unit weight; past the genericity cutoff the weight
  // drops to the first-harmonic mass
  CHECK(cmp.Ks >= 1.0);
  CHECK(cmp.delta_k == 1.0);
  const auto far = effective_profile(rep, prof, 1e9);
  CHECK(far.delta_k == doctest::Approx(2.0 * cmp.fk_abs));

  // the one-angle profile at a fixed action matches the resonant part
  const Vec I{0.8, 0.02};
  const auto series = profile_at(rep, I);
  for (double t : {0.0, 0.9, 2.3}) {
    const Vec x{0.37, t};
    CHECK(std::abs(series.eval(t) - rep.g.eval(I, x).real()) <= 1e-12 * eps);
  }
  CHECK(series.c.count(1) == 1);
  CHECK(std::abs(series.c.at(1) - Cplx{eps / 2, 0.0}) <= 1e-3 * eps);
}

TEST_CASE("normal form report serializes to parseable json") {
  const auto& rep = iterate_report();
  const auto j = nlohmann::json::parse(report_to_json(rep));
  CHECK(j["accepted"] == true);
  CHECK(j["steps"] == 3);
  CHECK(j["lattice"] == "trivial");
  CHECK(j["step_reports"].size() == 3);
  CHECK(j["theta_star"].get<double>() ==
        doctest::Approx(rep.theta_star).epsilon(1e-15));
}
