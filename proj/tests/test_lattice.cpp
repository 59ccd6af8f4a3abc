#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "kam/lattice.hpp"

using namespace kam;
using namespace kam::lattice;

namespace {

IntVec iv(std::initializer_list<long> xs) {
  IntVec v;
  for (long x : xs) v.emplace_back(x);
  return v;
}

Int inf_norm(const IntVec& k) {
  Int m = 0;
  for (const Int& ki : k) m = std::max(m, Int(boost::multiprecision::abs(ki)));
  return m;
}

Int inf_norm(const IntMat& m) {
  Int r = 0;
  for (const Int& v : m.a) r = std::max(r, Int(boost::multiprecision::abs(v)));
  return r;
}

IntVec random_k(Rng& rng, int n, long box, bool force_nonzero = true) {
  IntVec k(n);
  bool nz = false;
  for (auto& ki : k) {
    ki = static_cast<long>(rng.uniform(-static_cast<double>(box), box + 1.0));
    if (ki != 0) nz = true;
  }
  if (force_nonzero && !nz) k[0] = 1;
  return k;
}

}  // namespace

TEST_CASE("generator normalization") {
  auto [p1, c1] = normalize_generator(iv({2, 4}));
  CHECK(p1 == iv({1, 2}));
  CHECK(c1 == 2);

  auto [p2, c2] = normalize_generator(iv({0, -3}));
  CHECK(p2 == iv({0, 1}));
  CHECK(c2 == -3);

  CHECK_THROWS(normalize_generator(iv({0, 0, 0})));

  Rng rng(7, 0);
  for (int t = 0; t < 500; ++t) {
    Rng r(7, t + 1);
    const IntVec k = random_k(r, 2 + t % 4, 30);
    auto [p, c] = normalize_generator(k);
    CHECK(is_primitive(p));
    // first nonzero entry positive
    for (const Int& pi : p) {
      if (pi != 0) {
        CHECK(pi > 0);
        break;
      }
    }
    for (size_t i = 0; i < k.size(); ++i) CHECK(p[i] * c == k[i]);
  }
}

TEST_CASE("minimal Bezout pair") {
  // brute-force minimality over a small grid
  for (long a = -12; a <= 12; ++a) {
    for (long b = -12; b <= 12; ++b) {
      if (a == 0 && b == 0) continue;
      auto [x, y] = bezout_min(Int(a), Int(b));
      const Int g = boost::multiprecision::gcd(Int(a), Int(b));
      CHECK(Int(a) * x + Int(b) * y == g);
      for (long xc = -30; xc <= 30; ++xc) {
        const long rem = static_cast<long>(g) - a * xc;
        if (b == 0) {
          if (a * xc == g && rem == 0) {
            const bool better = std::abs(xc) < boost::multiprecision::abs(x) ||
                                (std::abs(xc) == boost::multiprecision::abs(x) && xc >= 0 && x < 0);
            if (xc != x) CHECK_FALSE(better);
          }
          continue;
        }
        if (rem % b != 0) continue;
        const bool better = Int(std::abs(xc)) < boost::multiprecision::abs(x) ||
                            (Int(std::abs(xc)) == boost::multiprecision::abs(x) && xc >= 0 && x < 0);
        CHECK_FALSE(better);
      }
    }
  }
}

TEST_CASE("unimodular completion") {
  const auto c = bezout_complete(iv({2, 3}));
  CHECK(c.A.at(0, 0) == 1);
  CHECK(c.A.at(0, 1) == 1);
  CHECK(c.A.at(1, 0) == 2);
  CHECK(c.A.at(1, 1) == 3);

  // 1x1 edge keeps the literal last row, so det = k1 (signed)
  const auto e = bezout_complete(iv({-4}));
  CHECK(e.A.at(0, 0) == -4);

  for (int t = 0; t < 2000; ++t) {
    Rng r(11, t);
    const int n = 2 + t % 4;
    const IntVec k = random_k(r, n, 40);
    const auto comp = bezout_complete(k);
    CHECK(det(comp.A) == gcd_all(k));
    for (int j = 0; j < n; ++j) CHECK(comp.A.at(n - 1, j) == k[j]);
    CHECK(inf_norm(comp.A) <= std::max(Int(1), inf_norm(k)));
  }
}

TEST_CASE("resonance frame") {
  const auto f = build_frame(iv({1, 2, 2}));
  CHECK(f.kappa == 9);
  CHECK(det(f.L) == 1);

  CHECK_THROWS(build_frame(iv({2, 4})));   // imprimitive
  CHECK_THROWS(build_frame(iv({3})));      // dimension 1

  for (int t = 0; t < 400; ++t) {
    Rng r(13, t);
    const int n = 2 + t % 4;
    IntVec k = random_k(r, n, 25);
    k = normalize_generator(k).first;
    const auto fr = build_frame(k);

    CHECK(det(fr.L) == 1);
    for (int i = 0; i < n; ++i) CHECK(fr.L.at(i, n - 1) == Rat(k[i]));

    const RatMat prod = fr.L * fr.Linv;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) CHECK(prod.at(i, j) == Rat(i == j ? 1 : 0));

    const auto nb = verify_norm_bounds(fr);
    CHECK(nb.ok_L);
    CHECK(nb.ok_Linv);

    // coordinate split: J_n is the normalized resonant action
    Vec y(n);
    for (auto& yi : y) yi = r.uniform(-2, 2);
    const auto [Jhat, Jn] = fr.split(y);
    double yk = 0, kap = 0;
    for (int i = 0; i < n; ++i) {
      yk += y[i] * static_cast<double>(k[i]);
      kap += sqr(static_cast<double>(k[i]));
    }
    CHECK(Jn == doctest::Approx(yk / kap).epsilon(1e-12));

    // the hat part reproduces the orthogonal complement of y:
    // perp(y) = perp(Ahat^T Jhat)
    Vec Atj(n, 0.0);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j + 1 < n; ++j)
        Atj[i] += static_cast<double>(fr.A.at(j, i)) * Jhat[j];
    const Vec lhs = perp_project(k, y), rhs = perp_project(k, Atj);
    for (int i = 0; i < n; ++i) CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-9));

    // y reconstructs from (Jhat, Jn)
    Vec J = Jhat;
    J.push_back(Jn);
    const Vec y2 = matvec(fr.Ld, J);
    for (int i = 0; i < n; ++i) CHECK(y2[i] == doctest::Approx(y[i]).epsilon(1e-9));
  }
}
