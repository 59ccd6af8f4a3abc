#pragma once

#include <functional>
#include <string>

#include "kam/common.hpp"
#include "kam/potential.hpp"

#include <nlohmann/json_fwd.hpp>

namespace kam::pendulum {

using potential::MorseData;
using potential::TrigSeries;

// Parameter block J-hat: representative sample points plus the analyticity
// width r0. A single empty sample means there is no parameter dependence.
struct ParamDomain {
  std::vector<Vec> samples{Vec{}};
  double r0 = 0.5;
};

// One-degree mechanical system with parameters:
//
//   H(J, psi) = (1 + b(Jhat, J_n, psi)) (J_n - Jn_star(Jhat))^2
//             + F0(psi) + G(Jhat, psi).
//
// Empty std::functions mean the corresponding piece vanishes identically.
// dG is the psi-derivative of G and must be supplied whenever G is.
struct PendulumSystem {
  TrigSeries F0;
  MorseData morse;  // critical structure of F0; global maximum at the wrap
  double s0 = 0.5;  // angle analyticity width
  double R0 = 0;    // action half-width; rotation energies live below R0^2 - M
  ParamDomain Dhat;
  double eta = 0;   // declared size of the (G, b, Jn_star) perturbation

  std::function<double(const Vec&, double)> G, dG;      // (Jhat, psi)
  std::function<double(const Vec&, double, double)> b;  // (Jhat, Jn, psi)
  std::function<double(const Vec&)> Jn_star;

  int N() const { return morse.N; }
  double F(const Vec& Jhat, double psi) const;
  double dF(const Vec& Jhat, double psi) const;
  double jn_star(const Vec& Jhat) const;
  double b_at(const Vec& Jhat, double Jn, double psi) const;
  double H(const Vec& Jhat, double Jn, double psi) const;

  // total energy cap for rotation windows
  double energy_cap() const { return R0 * R0 - morse.M; }
};

// unperturbed system J_n^2 + F0
PendulumSystem pure_system(const TrigSeries& F0, double s0, double R0,
                           const ParamDomain& Dhat = {});

struct continuation_error : std::runtime_error {
  Vec Jhat;
  continuation_error(const std::string& what, Vec witness);
};

// Critical points and energies of F(Jhat, .), continued from the unperturbed
// ones. Layout matches MorseData: x_0 < x_1 < ... < x_{2N} with
// x_0 = x_{2N} - 2 pi, minima at odd indices, global maximum at the wrap.
struct CriticalData {
  std::vector<double> x;
  std::vector<double> E;
  double beta = 0;  // separation margin measured at this Jhat
};

// Newton continuation from the unperturbed critical points; requires the
// perturbation to be small against the Morse margin and verifies that the
// continued energies keep half the unperturbed separation.
CriticalData critical_points(const PendulumSystem& sys, const Vec& Jhat);

// Energy window (E_-, E_+) of branch i at Jhat; hi is +infinity for the two
// rotation branches i = 0 and i = 2N (capped only when theta-windows or
// brackets need a finite energy).
struct Window {
  double lo = 0, hi = 0;
};

struct ActionBranch {
  const PendulumSystem* sys = nullptr;
  int i = 0;  // 0 .. 2N
  bool rotation() const;
  Window window(const Vec& Jhat) const;
};

ActionBranch branch(const PendulumSystem& sys, int i);

// Action P_n^{(i)}(E, Jhat): oscillation branches integrate between turning
// points, rotation branches over a full period; the level-set inversion of
// the (1+b)-weighted kinetic term enters through a pointwise fixed point.
// err_out, when given, receives a quadrature error estimate.
double action_of_energy(const ActionBranch& br, double E, const Vec& Jhat,
                        double* err_out = nullptr);

// Inverse of E -> P_n^{(i)}(E, Jhat) by bracketed bisection plus Newton.
double energy_of_action(const ActionBranch& br, double Pn, const Vec& Jhat);

// dP/dE by Richardson-extrapolated central differences, step adapted to the
// distance from the window edges.
double dPdE(const ActionBranch& br, double E, const Vec& Jhat);
std::vector<double> dPdE_profile(const ActionBranch& br, const Vec& Egrid,
                                 const Vec& Jhat);

// Action range of branch i after excluding a 2*theta energy collar from each
// critical edge (and the R0^2 - M cap on rotation branches).
struct ActionWindow {
  double lo = 0, hi = 0;
};
ActionWindow action_window(const ActionBranch& br, const Vec& Jhat,
                           double theta);

// Expansion of the action at a window edge: with zeta the distance from the
// edge (E_+ - zeta above, E_- + zeta below),
//
//   P(zeta) = phi(zeta) + zeta log zeta * chi(zeta),
//
// fitted by least squares in the basis {1, z, z^2, z log z, z^2 log z}. The
// lower edge of an oscillation well is elliptic: chi vanishes identically
// there and the fit uses the analytic basis only.
struct SeparatrixFit {
  int branch_index = 0;
  int side = +1;  // +1: upper edge, -1: lower edge
  Vec phi_coeffs;  // {1, z, z^2}
  Vec chi_coeffs;  // {z log z, z^2 log z}; empty on elliptic sides
  double fit_lo = 0, fit_hi = 0;
  double residual = 0;
  double sup_d2F = 0;        // strip norm of d^2F/dpsi^2 backing the bound
  bool chi_bound_ok = false; // |chi(0)| >= 1/(4 pi sqrt(sup_d2F))
  double chi0() const { return chi_coeffs.empty() ? 0.0 : chi_coeffs[0]; }
};

struct fit_error : std::runtime_error {
  double residual;
  fit_error(const std::string& what, double res);
};

SeparatrixFit separatrix_fit(const ActionBranch& br, int side, const Vec& Jhat,
                             double zeta_lo = 1e-6, double zeta_hi = 0.05);

// Perturbation G*(Yhat, y_n, x_n) with its exact partial derivatives in y_n
// and x_n; all three callables empty means G* = 0.
struct YnPerturbation {
  std::function<double(const Vec&, double, double)> value, dYn, dXn;
  double eta_star = 0;
};

// Result of casting H* = y_n^2 + F0(x_n) + G*(y, x_n) into the weighted
// square form above via the shear y_n = Y_n + a*(Yhat, X_n),
// xhat = Xhat + b*(Yhat, X_n).
struct CanonicalForm {
  PendulumSystem sys;
  std::function<double(const Vec&, double)> a_star;  // (Yhat, X_n)
  std::function<Vec(const Vec&, double)> b_star;     // gradient shift of xhat

  double sup_Jn_star = 0, sup_a_star = 0, sup_b_star = 0;  // measured
  double bound_Jn_star = 0, bound_a_star = 0, bound_b_star = 0;
  bool bounds_ok = false;
  double assembly_error = 0;  // max |H* o Psi - assembled| on the check grid

  // Psi: (Y, X) -> (y, x) with full (n-dim) vectors, pendulum angle last
  void apply(const Vec& Y, const Vec& X, Vec& y, Vec& x) const;
};

CanonicalForm canonical_pendulum_form(const TrigSeries& F0,
                                      const YnPerturbation& Gstar,
                                      const ParamDomain& Dhat, double s0,
                                      double R0);

// branch, Jhat..., E, Pn, dPdE, window flag rows over an energy grid
std::string action_profile_csv(const PendulumSystem& sys,
                               const std::vector<int>& branches,
                               const Vec& Jhat, int grid_points, double theta);

nlohmann::json fit_to_json(const SeparatrixFit& fit);

}  // namespace kam::pendulum
