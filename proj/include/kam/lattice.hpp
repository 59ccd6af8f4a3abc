#pragma once

#include <optional>
#include <utility>

#include "kam/common.hpp"

namespace kam {

// Minimal exact dense matrix, row-major. Only the handful of operations the
// frame construction needs; anything floating-point heavy goes through Eigen
// after conversion.
template <class T>
struct Mat {
  int rows = 0, cols = 0;
  std::vector<T> a;

  Mat() = default;
  Mat(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, T(0)) {}

  T& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  const T& at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  static Mat identity(int n) {
    Mat m(n, n);
    for (int i = 0; i < n; ++i) m.at(i, i) = T(1);
    return m;
  }

  Mat transposed() const {
    Mat m(cols, rows);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m.at(j, i) = at(i, j);
    return m;
  }
};

using IntMat = Mat<Int>;
using RatMat = Mat<Rat>;

template <class T>
Mat<T> operator*(const Mat<T>& x, const Mat<T>& y) {
  Mat<T> z(x.rows, y.cols);
  for (int i = 0; i < x.rows; ++i)
    for (int k = 0; k < x.cols; ++k) {
      const T& xik = x.at(i, k);
      if (xik == 0) continue;
      for (int j = 0; j < y.cols; ++j) z.at(i, j) += xik * y.at(k, j);
    }
  return z;
}

RatMat to_rational(const IntMat& m);
Mat<double> to_double(const RatMat& m);

Int det(const IntMat& m);   // Bareiss, fraction-free
Rat det(const RatMat& m);   // exact Gaussian elimination
RatMat inverse(const RatMat& m);

std::vector<double> matvec(const Mat<double>& m, const std::vector<double>& v);
IntVec matvec(const IntMat& m, const IntVec& v);

namespace lattice {

// k = content * primitive, primitive's first nonzero entry > 0.
// The content carries the sign: (2,4) -> ((1,2), 2), (0,-3) -> ((0,1), -3).
std::pair<IntVec, Int> normalize_generator(const IntVec& k);

Int gcd_all(const IntVec& k);
bool is_primitive(const IntVec& k);

// x*a + y*b = gcd(|a|,|b|) >= 0 with |x| minimal, ties broken toward x >= 0.
std::pair<Int, Int> bezout_min(const Int& a, const Int& b);

struct UnimodularCompletion {
  IntMat A;  // last row equals k; det = gcd(k) for n >= 2 (= k1 when n = 1)

  IntMat hat_rows() const {  // first n-1 rows
    IntMat h(A.rows - 1, A.cols);
    for (int i = 0; i + 1 < A.rows; ++i)
      for (int j = 0; j < A.cols; ++j) h.at(i, j) = A.at(i, j);
    return h;
  }
};

// Completes nonzero k to an integer matrix with last row k, determinant
// gcd(k), and entries bounded by max(1, |k|_inf). Built by induction on the
// leading block: the top-left corner completes (k_1..k_{n-1}) and a minimal
// Bezout pair for (det of that block, k_n) fills the border.
UnimodularCompletion bezout_complete(const IntVec& k);

struct ResonanceFrame {
  int n = 0;
  IntVec k;      // primitive
  Int kappa;     // |k|^2
  IntMat A;      // unimodular completion, last row k
  RatMat L;      // frame matrix: columns 1..n-1 span the slab directions, last column k
  RatMat U;      // shear with det 1 used to build L = A^T U
  RatMat Linv;   // exact inverse of L
  Mat<double> Ld, Linvd;  // double caches for hot loops

  // J = Linv * y, split into hat part (n-1 first entries) and J_n (last).
  // J_n always equals (y . k) / kappa.
  std::pair<Vec, double> split(const Vec& y) const;
};

// Requires n >= 2 and primitive k (det L = 1 needs gcd 1).
ResonanceFrame build_frame(const IntVec& k);

// y - (y.k) k / |k|^2
Vec perp_project(const IntVec& k, const Vec& y);

struct NormBoundReport {
  Rat fro2_L;      // squared Frobenius norm of L, exact
  Rat fro2_Linv;
  bool ok_L;       // fro2_L    <= c1(n)^2 |k|^2
  bool ok_Linv;    // fro2_Linv <= c2(n)^2 |k|^(2n-2)
};

// c1, c2 are fixed per dimension (calibrated once over random sweeps, with
// margin); the comparison is exact rational arithmetic.
NormBoundReport verify_norm_bounds(const ResonanceFrame& f);

}  // namespace lattice
}  // namespace kam
