#pragma once

// Lie-series normal forms for H = h(y) + f(y,x) on D_r x T^n_s.
//
// Coefficient functions of y live in the algebra spanned by
// c * prod_j (y.m_j)^{e_j} with integer vectors m_j and integer (possibly
// negative) exponents; the algebra is closed under products and directional
// derivatives along integer vectors, which is exactly what Poisson brackets
// with homological-equation generators produce. All Fourier/projection
// operators are coefficient-wise exact; only analytic sup-norms are sampled.

#include <complex>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/container/small_vector.hpp>

#include "kam/common.hpp"
#include "kam/potential.hpp"

namespace kam::nf {

// The algebra reuses a small set of integer direction vectors across millions
// of monomials, so they are interned once into a process-wide pool and carried
// as ids; comparisons and merges then run on plain integers. Pool order is
// first-use order, deterministic for a fixed execution.
using DirId = std::uint32_t;
DirId intern_direction(const IntVec& m);  // m primitive, sign-normalized
const IntVec& direction_vec(DirId id);

// One monomial c * prod (y.m)^e; keys are primitive sign-normalized vectors,
// content and sign are absorbed into c. pows is sorted by id with nonzero
// exponents.
struct CoefTerm {
  Cplx c{0.0, 0.0};
  boost::container::small_vector<std::pair<DirId, int>, 4> pows;
};

struct CoefFn {
  std::vector<CoefTerm> terms;

  bool empty() const { return terms.empty(); }
  Cplx eval(const CVec& y) const;
  Cplx eval(const Vec& y) const;

  // (dir . grad) applied once; exact in the algebra.
  CoefFn deriv(const IntVec& dir) const;

  // multiply by (y.m)^{-1}; exact (used by the homological equation).
  CoefFn divide_linear(const IntVec& m) const;

  CoefFn conjugated() const;  // conj of coefficients; equals conj f on real y

  void add_term(Cplx c, const std::map<IntVec, int>& pows);
  void simplify();  // merge equal monomials, drop zero coefficients

  static CoefFn constant(Cplx c);
  static CoefFn linear(const IntVec& m);  // y.m
};

CoefFn operator+(const CoefFn& a, const CoefFn& b);
CoefFn operator-(const CoefFn& a, const CoefFn& b);
CoefFn operator*(const CoefFn& a, const CoefFn& b);
CoefFn operator*(Cplx s, const CoefFn& a);

// Real base set for the action domain; the complex neighborhood D_r is
// sampled as balls of radius r around the base points.
struct Domain {
  std::vector<Vec> base;
};

// Ball of given center/radius: axis-extreme points plus deterministic
// interior samples, so polynomial sups on it are attained exactly.
Domain domain_ball(const Vec& center, double radius, int extra = 16);
Domain domain_points(std::vector<Vec> pts);

struct StateFunction {
  int n = 0;
  std::map<IntVec, CoefFn> modes;  // full signed Fourier support

  bool empty() const { return modes.empty(); }
  int max_mode_l1() const;
  Cplx eval(const CVec& y, const CVec& x) const;
  Cplx eval(const Vec& y, const Vec& x) const;
  // gradient evaluators for flows
  CVec grad_y(const Vec& y, const Vec& x) const;
  CVec grad_x(const Vec& y, const Vec& x) const;

  void add_mode(const IntVec& k, const CoefFn& fn);
  void simplify();
  std::size_t term_count() const;

  static StateFunction kinetic(int n);  // |y|^2 / 2
  static StateFunction from_potential(const potential::AnalyticPotential& P,
                                      double scale);
};

StateFunction operator+(const StateFunction& a, const StateFunction& b);
StateFunction operator-(const StateFunction& a, const StateFunction& b);
StateFunction operator*(double s, const StateFunction& a);

// Sublattice for projections: the trivial lattice {0} or Z k with k primitive.
struct Sublattice {
  std::optional<IntVec> generator;  // nullopt = {0}
  bool contains(const IntVec& m) const;
  static Sublattice trivial() { return {}; }
  static Sublattice line(const IntVec& k);
};

StateFunction project(const StateFunction& f, const Sublattice& L);       // P_L
StateFunction project_perp(const StateFunction& f, const Sublattice& L);  // P_L^perp
StateFunction truncate(const StateFunction& f, double N);        // T_N
StateFunction truncate_high(const StateFunction& f, double N);   // T_N^perp

// Poisson bracket {u,v} = sum_i u_{x_i} v_{y_i} - u_{y_i} v_{x_i}, exact.
StateFunction poisson_bracket(const StateFunction& u, const StateFunction& v);

// Weighted Fourier sup-norm sup_k (sup_{D_r} |f_k|) e^{|k|_1 s}. The inner
// sup is sampled (>= 64 boundary + 8 interior complex points per base point)
// and inflated by a fixed documented safety factor; both values are kept.
struct NormValue {
  double raw = 0;
  double certified = 0;  // raw * safety factor
};
inline constexpr double norm_safety = 1.05;

NormValue weighted_norm(const StateFunction& f, const Domain& D, double r,
                        double s);
// Plain sup-norm over sampled D_r x T^n_s (angles on a grid with |Im x| = s).
double plain_sup_norm(const StateFunction& f, const Domain& D, double r,
                      double s);

struct small_divisor_error : std::runtime_error {
  Vec witness_y;
  IntVec witness_m;
  small_divisor_error(const std::string& msg, Vec y, IntVec m)
      : std::runtime_error(msg), witness_y(std::move(y)), witness_m(std::move(m)) {}
};

struct step_too_large : std::runtime_error {
  double theta;
  explicit step_too_large(double th)
      : std::runtime_error("averaging step smallness violated"), theta(th) {}
};

/// Generator of one averaging step: phi_m = f_m / (i h'(y).m) over the modes
// of f^K = T_K P_L^perp f. Verifies |h'(y).m| >= alpha on the sampled
// complex domain (small_divisor_error with witness otherwise) and that the
// homological residual {h,phi} + f^K vanishes on a verification grid.
struct HomologicalSolution {
  StateFunction phi;
  double phi_norm = 0;        // certified |phi|_{r,s}
  double fK_norm = 0;         // certified |f^K|_{r,s}
  double residual = 0;        // grid sup of {h,phi} + f^K
  double residual_scale = 0;  // grid sup of f^K
};

HomologicalSolution solve_homological(const StateFunction& h,
                                      const StateFunction& f,
                                      const Sublattice& L, double K,
                                      double alpha, const Domain& D, double r,
                                      double s);

struct StepReport {
  double theta_check = 0;  // 2^5 n K^3 |f^K| / (alpha r s)
  double f_norm = 0;
  double fK_norm = 0;
  double phi_norm = 0;
  double f_star_norm = 0;   // certified |f_*| on the shrunk domain
  double f_star_bound = 0;  // 2 theta_check |f|
  int lie_orders = 0;
  double residual = 0;
  double r_next = 0, s_next = 0;
};

struct AveragingResult {
  StateFunction f_next;  // f^flat + f_*
  StateFunction f_star;
  StateFunction phi;
  StepReport report;
};

// One step of resonant averaging: kills T_K P_L^perp f, shrinks the domain
// to r(1-1/2K), s(1-1/K^2). Throws step_too_large when the smallness
// quantity exceeds 1.
AveragingResult averaging_step(const StateFunction& h, const StateFunction& f,
                               const Sublattice& L, double alpha, double K,
                               const Domain& D, double r, double s);

struct NormalFormReport {
  bool accepted = false;
  int n = 0;
  Sublattice lattice;
  Domain domain;
  double alpha = 0, K = 0;
  int steps = 0;  // ceil(K)
  double r = 0, s = 0, r_star = 0, s_star = 0;
  double f_norm = 0;       // certified |f|_{r,s}
  double theta_star = 0;   // 2^9 n K^3 |f| / (alpha r s)
  double theta = 0;        // theta_star * |f|: |g - P_L f| <= 2 theta
  StateFunction g;         // P_L of the transformed perturbation
  StateFunction f_star;    // remainder
  StateFunction f_flat;    // P_L f + T_K^perp P_L^perp f
  StateFunction f_star_star;  // transformed minus g (no modes in L)
  std::vector<StateFunction> generators;  // phi_i, outermost first
  std::vector<StepReport> step_reports;

  double f_star_norm = 0;        // certified |f_*|_{r_*,s_*}
  double f_star_bound = 0;       // 2 theta_star |f|
  double low_mode_norm = 0;      // certified |T_K P_L^perp f_*|_{r_*,s_*}
  double low_mode_log_bound = 0;  // K log(theta_star/2) + log |f|
  bool bounds_hold = false;

  bool strong_smallness = false;  // theta_star <= e^{-s}/2 and K >= 2
  double g_shift_norm = 0;      // certified |g - P_L f|_{r_*,s_*}
  double f_ss_norm = 0;         // certified |f_**|_{r_*,s/2}
  double f_ss_bound = 0;        // 2 e^{-Ks/2} |f|
};

// ceil(K) averaging steps along the fixed ladder r_i = r - i r/(2 ceil K),
// s_i = s - i s/(K ceil K), ending at r/2, s(1-1/K). Refuses (accepted =
// false, only the norm fields filled) when theta_star >= 1.
NormalFormReport normal_form_iterate(const StateFunction& h,
                                     const StateFunction& f,
                                     const Sublattice& L, double alpha,
                                     double K, const Domain& D, double r,
                                     double s);

// Time-1 Hamiltonian flow of phi from (y, x); RKF78 with tight tolerance.
void flow_time1(const StateFunction& phi, Vec& y, Vec& x);
// Complex-state variant (the flow is holomorphic in the initial datum, so
// complex-step derivatives of it are exact to machine precision).
void flow_time1(const StateFunction& phi, CVec& y, CVec& x);
// Full transform of the report: applies the generators innermost-last, so
// H(transform_point(p)) = (h + f_flat + f_star)(p).
void transform_point(const NormalFormReport& rep, Vec& y, Vec& x);

// Effective one-angle profile comparison for a Z k normal form, plus the
// cosine-residual decomposition G = 2|f_k| (-cos + R) after the phase
// translation that makes the first harmonic -2|f_k| cos.
struct ProfileComparison {
  double fk_abs = 0;     // |f_k|
  double delta_k = 0;    // 1 for |k| <= Ks(delta), else 2|f_k|
  double Ks = 0;
  double gf_norm = 0;    // certified |G - F|_{r_*, |k| s_*}
  double gf_bound = 0;   // 2 theta from the iterate
  double residual_norm = 0;   // measured |R|_{r_*, |k| s/3} (raw grid sup)
  double residual_bound = 0;  // assembled from certified pieces
  bool within = false;
};

ProfileComparison effective_profile(const NormalFormReport& rep,
                                    const potential::LatticeProfile& prof,
                                    double delta_gen);

// G^k as a one-angle series at a fixed real action point (for the pendulum).
potential::TrigSeries profile_at(const NormalFormReport& rep, const Vec& I);

// JSON serialization of the certified diagnostics.
std::string report_to_json(const NormalFormReport& rep);

}  // namespace kam::nf
