#pragma once

#include <map>
#include <optional>

#include "kam/common.hpp"

#include <nlohmann/json_fwd.hpp>

namespace kam {

// sign-normalized representatives (first nonzero entry > 0) of nonzero
// integer vectors with |k|_1 <= radius, lexicographic order; optionally only
// gcd-1 vectors
std::vector<IntVec> l1_ball_reps(int n, double radius, bool primitive_only);

double l1_norm(const IntVec& k);
double l2_norm(const IntVec& k);

namespace potential {

// Finite real trig series t -> mean + sum_{j>=1} 2 Re(c_j e^{ijt}).
struct TrigSeries {
  double mean = 0;
  std::map<int, Cplx> c;  // keys >= 1

  double eval(double t) const;
  Cplx eval(Cplx t) const;       // analytic continuation, real on the real line
  double d1(double t) const;
  double d2(double t) const;
  TrigSeries derivative() const;
  int max_mode() const;
  bool empty() const { return c.empty(); }
};

// max over the strip boundary |Im t| = s0 (maximum modulus makes the two
// boundary lines sufficient for finite series), 4096 samples per line
double strip_norm(const TrigSeries& F, double s0);

// Zero-mean real-analytic potential on the n-torus, finitely supported:
// f(x) = sum over stored representatives of 2 Re(f_k e^{i k.x}).
struct AnalyticPotential {
  int n = 0;
  double s = 0;               // analyticity width
  int support_radius = 0;     // declared |k|_1 support bound
  std::map<IntVec, Cplx> modes;  // keys sign-normalized, nonzero

  double eval(const Vec& x) const;
  Cplx eval(const CVec& x) const;
  Cplx coeff(const IntVec& k) const;  // 0 if absent; accepts either sign
};

// sup_k |f_k| e^{|k|_1 s} over the support
double sup_fourier_norm(const AnalyticPotential& f, double s);

struct LatticeProfile {
  IntVec k;            // primitive, sign-normalized
  TrigSeries F;        // F(t) = sum_j f_{jk} e^{ijt}
  double width = 0;    // |k|_1 * s
  double phase_shift = 0;  // translation making the first harmonic -2|f_k| cos t
};

LatticeProfile lattice_projection(const AnalyticPotential& f, const IntVec& k);

// K_s(delta) = c * max{1, 1/s, (1/s) log(1/(s delta))}
double genericity_threshold(double s, double delta, double c);

struct GenericityReport {
  double delta = 0;
  double K_threshold = 0;
  int checked_radius = 0;
  bool p1_pass = false, p2_pass = false, p3_pass = false;
  std::optional<IntVec> p1_witness, p2_witness, p3_witness;
  bool pass() const { return p1_pass && p2_pass && p3_pass; }
};

// Membership test for the generic class:
//  P1: low-amplitude floor |f_k| >= delta |k|_1^{-(n+3)/2} e^{-|k|_1 s} for
//      all primitive |k|_1 > K_s(delta) inside the declared support radius
//      (absent modes in that range fail);
//  P2: min over R of |F'| + |F''| strictly positive for every primitive
//      profile with |k|_1 <= K_s(delta) (an empty profile fails);
//  P3: critical values of each such profile pairwise distinct.
GenericityReport check_genericity(const AnalyticPotential& f, double delta, double c);

struct MorseData {
  int N = 0;                          // number of minima
  std::vector<double> critical_points;    // x_0 < x_1 < ... < x_{2N}, x_0 = x_{2N} - 2 pi
  std::vector<double> critical_energies;  // F(x_i)
  double beta = 0;   // min( min |F'|+|F''|, min distinct critical-value gap )
  double M = 0;      // strip norm at s0
  double gamma = 0;  // strip distance to -cos
  bool cosine_like = false;  // gamma <= min{1, s0^2}/4
};

struct degenerate_profile_error : std::runtime_error {
  double witness;  // location of the (near-)degenerate critical point
  explicit degenerate_profile_error(double t);
};

// Finds and orders all critical points in one period (minima at odd indices,
// maxima at even, the global maximum at the wrap index 0 = 2N), measures the
// non-degeneracy margin and the strip norms. Near-degenerate critical points
// (|F''| < 1e-8 at a root of F') raise degenerate_profile_error.
MorseData morse_analyze(const TrigSeries& F, double s0);
MorseData morse_analyze(const LatticeProfile& F, double s0);

// Full-lattice exponential-decay potential: f_k = delta e^{-|k|_1 s} on every
// primitive sign-normalized k with |k|_1 <= radius.
AnalyticPotential exp_decay_potential(int n, double s, double delta, int radius);

nlohmann::json to_json(const AnalyticPotential& f);
AnalyticPotential potential_from_json(const nlohmann::json& j);
AnalyticPotential load_potential(const std::string& path);
void save_potential(const AnalyticPotential& f, const std::string& path);

}  // namespace potential
}  // namespace kam
