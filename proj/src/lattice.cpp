#include "kam/lattice.hpp"

#include <algorithm>

namespace kam {

RatMat to_rational(const IntMat& m) {
  RatMat r(m.rows, m.cols);
  for (size_t i = 0; i < m.a.size(); ++i) r.a[i] = Rat(m.a[i]);
  return r;
}

Mat<double> to_double(const RatMat& m) {
  Mat<double> r(m.rows, m.cols);
  for (size_t i = 0; i < m.a.size(); ++i) r.a[i] = to_double(m.a[i]);
  return r;
}

Int det(const IntMat& m) {
  require(m.rows == m.cols, "det: square matrix required");
  const int n = m.rows;
  IntMat w = m;
  Int sign = 1, prev = 1;
  for (int k = 0; k + 1 < n; ++k) {
    if (w.at(k, k) == 0) {
      int p = -1;
      for (int i = k + 1; i < n; ++i)
        if (w.at(i, k) != 0) {
          p = i;
          break;
        }
      if (p < 0) return 0;
      for (int j = 0; j < n; ++j) std::swap(w.at(k, j), w.at(p, j));
      sign = -sign;
    }
    for (int i = k + 1; i < n; ++i) {
      for (int j = k + 1; j < n; ++j)
        w.at(i, j) = (w.at(i, j) * w.at(k, k) - w.at(i, k) * w.at(k, j)) / prev;
      w.at(i, k) = 0;
    }
    prev = w.at(k, k);
  }
  return sign * w.at(n - 1, n - 1);
}

Rat det(const RatMat& m) {
  require(m.rows == m.cols, "det: square matrix required");
  const int n = m.rows;
  RatMat w = m;
  Rat d(1);
  for (int k = 0; k < n; ++k) {
    int p = -1;
    for (int i = k; i < n; ++i)
      if (w.at(i, k) != 0) {
        p = i;
        break;
      }
    if (p < 0) return Rat(0);
    if (p != k) {
      for (int j = 0; j < n; ++j) std::swap(w.at(k, j), w.at(p, j));
      d = -d;
    }
    d *= w.at(k, k);
    for (int i = k + 1; i < n; ++i) {
      const Rat f = w.at(i, k) / w.at(k, k);
      for (int j = k; j < n; ++j) w.at(i, j) -= f * w.at(k, j);
    }
  }
  return d;
}

RatMat inverse(const RatMat& m) {
  require(m.rows == m.cols, "inverse: square matrix required");
  const int n = m.rows;
  RatMat w = m, inv = RatMat::identity(n);
  for (int k = 0; k < n; ++k) {
    int p = -1;
    for (int i = k; i < n; ++i)
      if (w.at(i, k) != 0) {
        p = i;
        break;
      }
    require(p >= 0, "inverse: singular matrix");
    if (p != k)
      for (int j = 0; j < n; ++j) {
        std::swap(w.at(k, j), w.at(p, j));
        std::swap(inv.at(k, j), inv.at(p, j));
      }
    const Rat piv = w.at(k, k);
    for (int j = 0; j < n; ++j) {
      w.at(k, j) /= piv;
      inv.at(k, j) /= piv;
    }
    for (int i = 0; i < n; ++i) {
      if (i == k || w.at(i, k) == 0) continue;
      const Rat f = w.at(i, k);
      for (int j = 0; j < n; ++j) {
        w.at(i, j) -= f * w.at(k, j);
        inv.at(i, j) -= f * inv.at(k, j);
      }
    }
  }
  return inv;
}

std::vector<double> matvec(const Mat<double>& m, const std::vector<double>& v) {
  require(m.cols == static_cast<int>(v.size()), "matvec: size mismatch");
  std::vector<double> r(m.rows, 0.0);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) r[i] += m.at(i, j) * v[j];
  return r;
}

IntVec matvec(const IntMat& m, const IntVec& v) {
  require(m.cols == static_cast<int>(v.size()), "matvec: size mismatch");
  IntVec r(m.rows, Int(0));
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) r[i] += m.at(i, j) * v[j];
  return r;
}

namespace lattice {

Int gcd_all(const IntVec& k) {
  Int g = 0;
  for (const Int& ki : k) g = boost::multiprecision::gcd(g, ki);
  return g;
}

bool is_primitive(const IntVec& k) { return gcd_all(k) == 1; }

std::pair<IntVec, Int> normalize_generator(const IntVec& k) {
  const Int g = gcd_all(k);
  require(g != 0, "normalize_generator: zero vector");
  Int content = g;
  for (const Int& ki : k) {
    if (ki != 0) {
      if (ki < 0) content = -content;
      break;
    }
  }
  IntVec prim(k.size());
  for (size_t i = 0; i < k.size(); ++i) prim[i] = k[i] / content;
  return {prim, content};
}

namespace {

// x*a + y*b = g for nonnegative a, b (iterative extended Euclid)
void ext_gcd(Int a, Int b, Int& g, Int& x, Int& y) {
  Int x0 = 1, y0 = 0, x1 = 0, y1 = 1;
  while (b != 0) {
    const Int q = a / b;
    Int t = a - q * b;
    a = b;
    b = t;
    t = x0 - q * x1;
    x0 = x1;
    x1 = t;
    t = y0 - q * y1;
    y0 = y1;
    y1 = t;
  }
  g = a;
  x = x0;
  y = y0;
}

}  // namespace

std::pair<Int, Int> bezout_min(const Int& a, const Int& b) {
  require(a != 0 || b != 0, "bezout_min: gcd(0,0) undefined");
  if (a == 0) return {Int(0), Int(b > 0 ? 1 : -1)};
  if (b == 0) return {Int(a > 0 ? 1 : -1), Int(0)};
  Int g, x, y;
  ext_gcd(boost::multiprecision::abs(a), boost::multiprecision::abs(b), g, x, y);
  if (a < 0) x = -x;
  if (b < 0) y = -y;
  // shift x along the solution line x + t*(b/g): pick the representative of
  // minimal absolute value, ties toward x >= 0
  const Int m = boost::multiprecision::abs(b) / g;
  Int r = x % m;
  if (r < 0) r += m;
  if (2 * r > m) r -= m;  // 2r == m keeps the positive representative
  x = r;
  y = (g - a * x) / b;
  return {x, y};
}

UnimodularCompletion bezout_complete(const IntVec& k) {
  const int n = static_cast<int>(k.size());
  require(n >= 1, "bezout_complete: empty vector");
  require(gcd_all(k) != 0, "bezout_complete: zero vector");

  if (n == 1) {
    IntMat A(1, 1);
    A.at(0, 0) = k[0];
    return {A};
  }

  const IntVec kbar(k.begin(), k.end() - 1);
  const Int kn = k.back();
  IntMat A(n, n);

  if (gcd_all(kbar) == 0) {
    // k = (0,...,0,kn): scaled identity block, sign chosen so det = |kn|
    A.at(0, 0) = kn > 0 ? 1 : -1;
    for (int i = 1; i + 1 < n; ++i) A.at(i, i) = 1;
    A.at(n - 1, n - 1) = kn;
    return {A};
  }

  const UnimodularCompletion inner = bezout_complete(kbar);
  const Int dbar = det(inner.A);  // +-gcd(kbar); sign matters below
  const auto [x, y] = bezout_min(dbar, kn);

  const int sn = (n % 2 == 0) ? 1 : -1;  // (-1)^n
  for (int j = 0; j + 1 < n; ++j) A.at(0, j) = sn * y * (kbar[j] / dbar);
  A.at(0, n - 1) = -sn * x;  // (-1)^(n+1) x
  for (int i = 1; i < n; ++i)
    for (int j = 0; j + 1 < n; ++j) A.at(i, j) = inner.A.at(i - 1, j);
  A.at(n - 1, n - 1) = kn;

  // det(A) = x*dbar + y*kn = gcd(k) by the border expansion; cheap to recheck
  require(det(A) == gcd_all(k), "bezout_complete: determinant check failed");
  return {A};
}

ResonanceFrame build_frame(const IntVec& k) {
  const int n = static_cast<int>(k.size());
  require(n >= 2, "build_frame: need dimension >= 2");
  require(is_primitive(k), "build_frame: primitive generator required");

  ResonanceFrame f;
  f.n = n;
  f.k = k;
  f.kappa = 0;
  for (const Int& ki : k) f.kappa += ki * ki;

  f.A = bezout_complete(k).A;
  const IntVec Ak = matvec(UnimodularCompletion{f.A}.hat_rows(), k);

  f.U = RatMat::identity(n);
  for (int j = 0; j + 1 < n; ++j) f.U.at(n - 1, j) = -Rat(Ak[j], f.kappa);

  f.L = to_rational(f.A.transposed()) * f.U;
  f.Linv = inverse(f.L);

  require(det(f.L) == 1, "build_frame: frame determinant must be 1");
  for (int i = 0; i < n; ++i)
    require(f.L.at(i, n - 1) == Rat(k[i]), "build_frame: last column must be k");

  f.Ld = to_double(f.L);
  f.Linvd = to_double(f.Linv);
  return f;
}

std::pair<Vec, double> ResonanceFrame::split(const Vec& y) const {
  const Vec J = kam::matvec(Linvd, y);
  return {Vec(J.begin(), J.end() - 1), J.back()};
}

Vec perp_project(const IntVec& k, const Vec& y) {
  require(k.size() == y.size(), "perp_project: size mismatch");
  double kap = 0, dot = 0;
  std::vector<double> kd(k.size());
  for (size_t i = 0; i < k.size(); ++i) {
    kd[i] = static_cast<double>(k[i]);
    kap += kd[i] * kd[i];
    dot += kd[i] * y[i];
  }
  require(kap > 0, "perp_project: zero vector");
  Vec r(y);
  for (size_t i = 0; i < y.size(); ++i) r[i] -= dot * kd[i] / kap;
  return r;
}

NormBoundReport verify_norm_bounds(const ResonanceFrame& f) {
  NormBoundReport rep;
  rep.fro2_L = 0;
  rep.fro2_Linv = 0;
  for (const Rat& v : f.L.a) rep.fro2_L += v * v;
  for (const Rat& v : f.Linv.a) rep.fro2_Linv += v * v;

  // ||L||_F^2 <= (1 + (n-1)^2) |k|^2: the first n-1 columns are orthogonal
  // projections of rows of A (each bounded by (n-1)|k|_inf^2 in square norm)
  // and the last column is k itself.
  const Int n1 = f.n - 1;
  const Rat c1sq = Rat(1 + n1 * n1);

  // ||Linv||_F^2 <= (n + (n-1)^2) n^2 (n-1)^(n-1) |k|^(2n-2): Hadamard bound
  // on the cofactors of A times the shear factor.
  Int c2sq = (Int(f.n) + n1 * n1) * f.n * f.n;
  for (int i = 0; i + 1 < f.n; ++i) c2sq *= n1;

  Rat kap_pow(1);
  for (int i = 0; i + 1 < f.n; ++i) kap_pow *= Rat(f.kappa);

  rep.ok_L = rep.fro2_L <= c1sq * Rat(f.kappa);
  rep.ok_Linv = rep.fro2_Linv <= Rat(c2sq) * kap_pow;
  return rep;
}

}  // namespace lattice
}  // namespace kam
