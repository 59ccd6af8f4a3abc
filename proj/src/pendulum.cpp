#include "kam/pendulum.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <sstream>

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <nlohmann/json.hpp>

namespace kam::pendulum {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

double PendulumSystem::F(const Vec& Jhat, double psi) const {
  return F0.eval(psi) + (G ? G(Jhat, psi) : 0.0);
}

double PendulumSystem::dF(const Vec& Jhat, double psi) const {
  return F0.d1(psi) + (dG ? dG(Jhat, psi) : 0.0);
}

double PendulumSystem::jn_star(const Vec& Jhat) const {
  return Jn_star ? Jn_star(Jhat) : 0.0;
}

double PendulumSystem::b_at(const Vec& Jhat, double Jn, double psi) const {
  return b ? b(Jhat, Jn, psi) : 0.0;
}

double PendulumSystem::H(const Vec& Jhat, double Jn, double psi) const {
  const double w = Jn - jn_star(Jhat);
  return (1.0 + b_at(Jhat, Jn, psi)) * w * w + F(Jhat, psi);
}

PendulumSystem pure_system(const TrigSeries& F0, double s0, double R0,
                           const ParamDomain& Dhat) {
  PendulumSystem sys;
  sys.F0 = F0;
  sys.morse = potential::morse_analyze(F0, s0);
  sys.s0 = s0;
  sys.R0 = R0;
  sys.Dhat = Dhat;
  return sys;
}

continuation_error::continuation_error(const std::string& what, Vec witness)
    : std::runtime_error(what), Jhat(std::move(witness)) {}

fit_error::fit_error(const std::string& what, double res)
    : std::runtime_error(what), residual(res) {}

namespace {

// Level-set inversion: J with (1 + b(Jhat, J, psi)) (J - Jn*)^2 = z^2 on the
// branch signed like z, computed as the fixed point of
// J = Jn* + z / sqrt(1 + b(Jhat, J, psi)). Damped when a step grows.
double jn_of_z(const PendulumSystem& sys, const Vec& Jhat, double z,
               double psi) {
  const double Jstar = sys.jn_star(Jhat);
  if (!sys.b) return Jstar + z;
  double J = Jstar + z;
  double lambda = 1.0;
  double prev = kInf;
  for (int it = 0; it < 200; ++it) {
    const double w = 1.0 + sys.b_at(Jhat, J, psi);
    require(w > 0.25, "pendulum: weight 1 + b left the positive cone");
    const double target = Jstar + z / std::sqrt(w);
    const double step = target - J;
    if (std::abs(step) <= 1e-14 * std::max(1.0, std::abs(target)))
      return target;
    if (std::abs(step) > prev) lambda = std::max(0.1, 0.5 * lambda);
    J += lambda * step;
    prev = std::abs(step);
  }
  fail("pendulum: level-set inversion did not converge");
}

// half the action-gap between the upper and lower level-set branches
double half_width(const PendulumSystem& sys, const Vec& Jhat, double E,
                  double psi) {
  const double z = std::sqrt(std::max(0.0, E - sys.F(Jhat, psi)));
  if (!sys.b) return z;
  return 0.5 * (jn_of_z(sys, Jhat, z, psi) - jn_of_z(sys, Jhat, -z, psi));
}

double rot_level(const PendulumSystem& sys, const Vec& Jhat, double E,
                 int sign, double psi) {
  const double z = std::sqrt(std::max(0.0, E - sys.F(Jhat, psi)));
  return jn_of_z(sys, Jhat, sign * z, psi);
}

void check_contraction(const PendulumSystem& sys) {
  if (sys.b)
    require(8.0 * sys.eta / sys.Dhat.r0 <= 0.25 + 1e-12,
            "pendulum: perturbation too large for level-set inversion");
}

// root of F(Jhat, .) = E inside [a, b]; F - E must change sign
double turning_point(const PendulumSystem& sys, const Vec& Jhat, double E,
                     double a, double b) {
  double fa = sys.F(Jhat, a) - E;
  double fb = sys.F(Jhat, b) - E;
  if (fa == 0) return a;
  if (fb == 0) return b;
  require((fa > 0) != (fb > 0), "pendulum: turning point not bracketed");
  for (int it = 0; it < 200 && (b - a) > 1e-15; ++it) {
    const double m = 0.5 * (a + b);
    const double fm = sys.F(Jhat, m) - E;
    if (fm == 0) return m;
    if ((fm > 0) == (fa > 0)) {
      a = m;
      fa = fm;
    } else {
      b = m;
      fb = fm;
    }
  }
  return 0.5 * (a + b);
}

// indices of the maxima bounding the orbit component of branch i; for an
// interior maximum these are the nearest strictly higher maxima, and the
// global maximum at the wrap bounds every search
struct SlopePair {
  int left = 0, right = 0;
};

SlopePair bounding_maxima(const CriticalData& cd, int i) {
  const int twoN = static_cast<int>(cd.x.size()) - 1;
  if (i % 2 == 1) return {i - 1, i + 1};
  int l = i - 2;
  while (l > 0 && cd.E[l] <= cd.E[i]) l -= 2;
  int r = i + 2;
  while (r < twoN && cd.E[r] <= cd.E[i]) r += 2;
  return {l, r};
}

Window window_from(const CriticalData& cd, int i) {
  const int twoN = static_cast<int>(cd.x.size()) - 1;
  if (i == 0 || i == twoN) return {cd.E[twoN], kInf};
  const auto s = bounding_maxima(cd, i);
  return {cd.E[i], std::min(cd.E[s.left], cd.E[s.right])};
}

double integrate_piece(const std::function<double(double)>& f, double a,
                       double b, double* err_acc) {
  if (!(b > a)) return 0.0;
  static thread_local boost::math::quadrature::tanh_sinh<double> quad(12);
  double err = 0, l1 = 0;
  const double v = quad.integrate(f, a, b, 1e-11, &err, &l1);
  if (err_acc) *err_acc += err;
  return v;
}

}  // namespace

CriticalData critical_points(const PendulumSystem& sys, const Vec& Jhat) {
  const auto& md = sys.morse;
  const int twoN = 2 * md.N;
  if (sys.eta > md.beta / 8)
    throw continuation_error(
        "pendulum: perturbation exceeds an eighth of the Morse margin", Jhat);

  CriticalData cd;
  cd.x.resize(twoN + 1);
  cd.E.resize(twoN + 1);

  if (!sys.G) {
    cd.x = md.critical_points;
    cd.E = md.critical_energies;
    cd.beta = md.beta;
    return cd;
  }

  for (int i = 1; i <= twoN; ++i) {
    const double x0 = md.critical_points[i];
    const double left = md.critical_points[i - 1];
    const double right =
        (i == twoN) ? md.critical_points[1] + 2 * pi : md.critical_points[i + 1];
    const double basin = 0.25 * std::min(x0 - left, right - x0);

    double x = x0;
    int rejected = 0;
    bool done = false;
    for (int it = 0; it < 60; ++it) {
      const double g = sys.dF(Jhat, x);
      const double h = 1e-6;
      const double gp = (sys.dF(Jhat, x + h) - sys.dF(Jhat, x - h)) / (2 * h);
      if (std::abs(gp) < 1e-10) {
        ++rejected;
        break;
      }
      double step = -g / gp;
      if (std::abs(step) > basin) {
        if (++rejected >= 2) break;
        step = (step > 0 ? basin : -basin);
      }
      x += step;
      if (std::abs(step) <= 1e-13) {
        done = true;
        break;
      }
    }
    if (!done || rejected >= 2 || std::abs(x - x0) > 2 * basin)
      throw continuation_error(
          "pendulum: critical point continuation left its basin", Jhat);
    cd.x[i] = x;
  }
  cd.x[0] = cd.x[twoN] - 2 * pi;
  for (int i = 1; i < twoN; ++i)
    if (!(cd.x[i] < cd.x[i + 1]))
      throw continuation_error(
          "pendulum: continued critical points lost their ordering", Jhat);
  for (int i = 0; i <= twoN; ++i) cd.E[i] = sys.F(Jhat, cd.x[i]);

  // separation: continued energies must keep half the unperturbed margin
  double min_d2 = kInf, min_gap = kInf;
  for (int i = 1; i <= twoN; ++i) {
    const double h = 1e-5;
    const double d2 =
        (sys.dF(Jhat, cd.x[i] + h) - sys.dF(Jhat, cd.x[i] - h)) / (2 * h);
    min_d2 = std::min(min_d2, std::abs(d2));
    for (int j = i + 1; j <= twoN; ++j)
      min_gap = std::min(min_gap, std::abs(cd.E[i] - cd.E[j]));
  }
  if (min_gap < md.beta / 2)
    throw continuation_error(
        "pendulum: critical energies lost half their separation", Jhat);
  cd.beta = std::min(min_d2, min_gap);
  return cd;
}

bool ActionBranch::rotation() const {
  return i == 0 || i == 2 * sys->morse.N;
}

Window ActionBranch::window(const Vec& Jhat) const {
  return window_from(critical_points(*sys, Jhat), i);
}

ActionBranch branch(const PendulumSystem& sys, int i) {
  require(i >= 0 && i <= 2 * sys.morse.N, "pendulum: branch index out of range");
  return {&sys, i};
}

double action_of_energy(const ActionBranch& br, double E, const Vec& Jhat,
                        double* err_out) {
  const auto& sys = *br.sys;
  check_contraction(sys);
  const auto cd = critical_points(sys, Jhat);
  const int twoN = static_cast<int>(cd.x.size()) - 1;
  const Window W = window_from(cd, br.i);
  if (err_out) *err_out = 0;

  const double scale = std::max(1.0, std::abs(E));
  require(E >= W.lo - 1e-12 * scale, "pendulum: energy below the branch window");

  if (br.rotation()) {
    require(E <= sys.energy_cap() + 1e-12 * scale,
            "pendulum: energy above the rotation cap");
    const int sign = (br.i == 0) ? -1 : +1;
    auto f = [&](double psi) { return rot_level(sys, Jhat, E, sign, psi); };
    double sum = 0;
    for (int k = 0; k < twoN; ++k)
      sum += integrate_piece(f, cd.x[k], cd.x[k + 1], err_out);
    if (err_out) *err_out /= 2 * pi;
    return sum / (2 * pi);
  }

  require(E <= W.hi + 1e-12 * scale, "pendulum: energy above the branch window");
  const double Ec = std::clamp(E, W.lo, W.hi);  // round-off guard at the edges
  const auto s = bounding_maxima(cd, br.i);
  const double Xl =
      turning_point(sys, Jhat, Ec, cd.x[s.left], cd.x[s.left + 1]);
  const double Xr =
      turning_point(sys, Jhat, Ec, cd.x[s.right - 1], cd.x[s.right]);
  auto f = [&](double psi) { return half_width(sys, Jhat, Ec, psi); };
  double sum = 0;
  double a = Xl;
  for (int k = s.left + 1; k < s.right; ++k) {
    sum += integrate_piece(f, a, cd.x[k], err_out);
    a = cd.x[k];
  }
  sum += integrate_piece(f, a, Xr, err_out);
  if (err_out) *err_out /= pi;
  return sum / pi;
}

double energy_of_action(const ActionBranch& br, double Pn, const Vec& Jhat) {
  const auto& sys = *br.sys;
  const Window W = br.window(Jhat);
  double lo = W.lo;
  double hi = br.rotation() ? sys.energy_cap() : W.hi;
  require(hi > lo, "pendulum: empty branch window");

  // P is increasing in E on every branch except the lower rotation branch
  const double dir = (br.i == 0) ? -1.0 : 1.0;
  double Plo = dir * action_of_energy(br, lo, Jhat);
  double Phi = dir * action_of_energy(br, hi, Jhat);
  const double target = dir * Pn;
  const double slack = 1e-10 * std::max(1.0, std::abs(target));
  require(target >= Plo - slack && target <= Phi + slack,
          "pendulum: action outside the branch range");

  for (int it = 0; it < 200 && (hi - lo) > 1e-13 * std::max(1.0, std::abs(hi));
       ++it) {
    const double m = 0.5 * (lo + hi);
    const double Pm = dir * action_of_energy(br, m, Jhat);
    if (Pm < target)
      lo = m;
    else
      hi = m;
  }
  return 0.5 * (lo + hi);
}

double dPdE(const ActionBranch& br, double E, const Vec& Jhat) {
  const auto& sys = *br.sys;
  const Window W = br.window(Jhat);
  const double hi = br.rotation() ? sys.energy_cap() : W.hi;
  const double room = std::min(E - W.lo, hi - E);
  require(room > 0, "pendulum: energy too close to the window edge");
  const double h = std::min(1e-3 * std::max(1.0, std::abs(E)), 0.25 * room);
  auto D = [&](double step) {
    return (action_of_energy(br, E + step, Jhat) -
            action_of_energy(br, E - step, Jhat)) /
           (2 * step);
  };
  const double d1 = D(h);
  const double d2 = D(h / 2);
  return (4 * d2 - d1) / 3;
}

std::vector<double> dPdE_profile(const ActionBranch& br, const Vec& Egrid,
                                 const Vec& Jhat) {
  std::vector<double> out(Egrid.size());
  for (size_t k = 0; k < Egrid.size(); ++k) out[k] = dPdE(br, Egrid[k], Jhat);
  return out;
}

ActionWindow action_window(const ActionBranch& br, const Vec& Jhat,
                           double theta) {
  const auto& sys = *br.sys;
  const Window W = br.window(Jhat);
  if (br.rotation()) {
    const double lo = W.lo + 2 * theta;
    const double hi = sys.energy_cap() - 2 * theta;
    if (!(hi > lo)) return {0, 0};
    const double Pa = action_of_energy(br, lo, Jhat);
    const double Pb = action_of_energy(br, hi, Jhat);
    return {std::min(Pa, Pb), std::max(Pa, Pb)};
  }
  const double hi = W.hi - 2 * theta;
  if (br.i % 2 == 1) {
    if (!(hi > W.lo)) return {0, 0};
    return {0, action_of_energy(br, hi, Jhat)};
  }
  const double lo = W.lo + 2 * theta;
  if (!(hi > lo)) return {0, 0};
  return {action_of_energy(br, lo, Jhat), action_of_energy(br, hi, Jhat)};
}

namespace {

// strip norm of the second angle-derivative of F(Jhat, .); a perturbation G
// is re-expanded from samples of its derivative before differentiating again
double second_derivative_norm(const PendulumSystem& sys, const Vec& Jhat) {
  TrigSeries d2 = sys.F0.derivative().derivative();
  if (sys.dG) {
    const int m = 1024;
    std::vector<double> vals(m);
    double vmax = 0;
    for (int j = 0; j < m; ++j) {
      vals[j] = sys.dG(Jhat, 2 * pi * j / m);
      vmax = std::max(vmax, std::abs(vals[j]));
    }
    // stop once the modes sit in sampling noise: the strip norm would blow
    // round-off up by e^{k s0}
    int quiet = 0;
    for (int k = 1; k <= m / 4 && quiet < 4; ++k) {
      Cplx c = 0;
      for (int j = 0; j < m; ++j)
        c += vals[j] * std::exp(Cplx(0, -k * 2 * pi * j / m));
      c /= m;
      if (std::abs(c) < 1e-12 * std::max(1.0, vmax)) {
        ++quiet;
        continue;
      }
      quiet = 0;
      d2.c[k] += Cplx(0, k) * c;  // one more derivative of the dG series
    }
  }
  return potential::strip_norm(d2, sys.s0);
}

}  // namespace

SeparatrixFit separatrix_fit(const ActionBranch& br, int side, const Vec& Jhat,
                             double zeta_lo, double zeta_hi) {
  const auto& sys = *br.sys;
  require(side == +1 || side == -1, "pendulum: side must be +1 or -1");
  require(zeta_lo > 0 && zeta_hi > zeta_lo, "pendulum: bad fit range");
  const Window W = br.window(Jhat);
  if (br.rotation())
    require(side == -1, "pendulum: rotation branches have no upper edge");
  const double width =
      (br.rotation() ? sys.energy_cap() : W.hi) - W.lo;
  require(zeta_hi < width, "pendulum: fit range exceeds the branch window");

  // the bottom of a single well is elliptic: the expansion there is analytic
  const bool elliptic = (br.i % 2 == 1) && side == -1;
  const int ncol = elliptic ? 3 : 5;
  const int m = 48;

  Eigen::MatrixXd A(m, ncol);
  Eigen::VectorXd rhs(m);
  const double llo = std::log(zeta_lo), lhi = std::log(zeta_hi);
  for (int k = 0; k < m; ++k) {
    const double z = std::exp(llo + (lhi - llo) * k / (m - 1));
    const double E = (side > 0) ? W.hi - z : W.lo + z;
    rhs(k) = action_of_energy(br, E, Jhat);
    A(k, 0) = 1;
    A(k, 1) = z;
    A(k, 2) = z * z;
    if (!elliptic) {
      A(k, 3) = z * std::log(z);
      A(k, 4) = z * z * std::log(z);
    }
  }

  Eigen::VectorXd colscale(ncol);
  for (int j = 0; j < ncol; ++j) {
    colscale(j) = A.col(j).cwiseAbs().maxCoeff();
    A.col(j) /= colscale(j);
  }
  Eigen::VectorXd c = A.colPivHouseholderQr().solve(rhs);
  const double residual = (A * c - rhs).cwiseAbs().maxCoeff();
  for (int j = 0; j < ncol; ++j) c(j) /= colscale(j);

  SeparatrixFit fit;
  fit.branch_index = br.i;
  fit.side = side;
  fit.phi_coeffs = {c(0), c(1), c(2)};
  if (!elliptic) fit.chi_coeffs = {c(3), c(4)};
  fit.fit_lo = zeta_lo;
  fit.fit_hi = zeta_hi;
  fit.residual = residual;
  fit.sup_d2F = second_derivative_norm(sys, Jhat);
  fit.chi_bound_ok =
      elliptic ||
      std::abs(fit.chi0()) >= 1.0 / (4 * pi * std::sqrt(fit.sup_d2F)) - 1e-12;

  const double pscale = rhs.cwiseAbs().maxCoeff();
  if (residual > 1e-4 * std::max(1.0, pscale))
    throw fit_error("pendulum: edge expansion fit residual too large",
                    residual);
  return fit;
}

namespace {

// per parameter point: mean of the pointwise minimizer and the leading
// Fourier modes of its zero-mean part on a 256-point grid
struct StarEntry {
  double mean = 0;
  std::vector<Cplx> modes;  // modes[k-1] for k = 1 .. kmax
};

constexpr int kStarGrid = 256;
constexpr int kStarModes = 96;

}  // namespace

CanonicalForm canonical_pendulum_form(const TrigSeries& F0,
                                      const YnPerturbation& Gstar,
                                      const ParamDomain& Dhat, double s0,
                                      double R0) {
  const double r0 = Dhat.r0;
  const double eta = Gstar.eta_star;
  const bool have = static_cast<bool>(Gstar.value);
  require(have == static_cast<bool>(Gstar.dYn) &&
              have == static_cast<bool>(Gstar.dXn),
          "pendulum: perturbation needs value and both derivatives together");
  require(eta <= r0 * r0 / 16,
          "pendulum: perturbation exceeds the contraction threshold");

  CanonicalForm cf;
  cf.sys = pure_system(F0, s0, R0, Dhat);
  cf.sys.eta = eta;
  cf.bound_Jn_star = 2 * eta / r0;
  cf.bound_a_star = 4 * eta / r0;
  cf.bound_b_star = (16 * pi + 8) * eta / (r0 * r0);

  if (!have) {
    cf.bounds_ok = true;
    return cf;
  }

  // pointwise minimizer y(Yhat, X) of y^2 + G*(Yhat, y, X):
  // fixed point of y = -dG*/dy(Yhat, y, X) / 2
  auto solve_y = [dYn = Gstar.dYn](const Vec& Y, double X) {
    double y = 0, lambda = 1.0, prev = kInf;
    for (int it = 0; it < 300; ++it) {
      const double target = -0.5 * dYn(Y, y, X);
      const double step = target - y;
      if (std::abs(step) <= 1e-15 * std::max(1.0, std::abs(target)))
        return target;
      if (std::abs(step) > prev) lambda = std::max(0.1, 0.5 * lambda);
      y += lambda * step;
      prev = std::abs(step);
    }
    fail("pendulum: minimizer fixed point did not converge");
  };

  auto cache = std::make_shared<std::map<Vec, StarEntry>>();
  auto entry_of = [cache, solve_y](const Vec& Y) -> const StarEntry& {
    auto it = cache->find(Y);
    if (it != cache->end()) return it->second;
    StarEntry e;
    std::vector<double> vals(kStarGrid);
    for (int j = 0; j < kStarGrid; ++j) {
      vals[j] = solve_y(Y, 2 * pi * j / kStarGrid);
      e.mean += vals[j];
    }
    e.mean /= kStarGrid;
    e.modes.resize(kStarModes);
    for (int k = 1; k <= kStarModes; ++k) {
      Cplx c = 0;
      for (int j = 0; j < kStarGrid; ++j)
        c += (vals[j] - e.mean) * std::exp(Cplx(0, -k * 2 * pi * j / kStarGrid));
      e.modes[k - 1] = c / double(kStarGrid);
    }
    return cache->emplace(Y, std::move(e)).first->second;
  };

  auto Jn_star = [entry_of](const Vec& Y) { return entry_of(Y).mean; };
  auto a_star = [solve_y, entry_of](const Vec& Y, double X) {
    return solve_y(Y, X) - entry_of(Y).mean;
  };
  // zero-mean antiderivative of a*, from the Fourier modes
  auto phi = [entry_of](const Vec& Y, double X) {
    const auto& e = entry_of(Y);
    double s = 0;
    for (int k = 1; k <= kStarModes; ++k)
      s += 2 * std::real(e.modes[k - 1] / Cplx(0, k) * std::exp(Cplx(0, k * X)));
    return s;
  };
  auto b_star = [phi, r0](const Vec& Y, double X) {
    Vec out(Y.size());
    const double h = r0 / 8;
    for (size_t j = 0; j < Y.size(); ++j) {
      Vec Yp = Y, Ym = Y;
      Yp[j] += h;
      Ym[j] -= h;
      out[j] = -(phi(Yp, X) - phi(Ym, X)) / (2 * h);
    }
    return out;
  };

  // weight from the exact quotient; the minimizer annihilates the linear term
  auto b_fn = [solve_y, entry_of, G = Gstar.value,
               dYn = Gstar.dYn](const Vec& Y, double Jn, double X) {
    const double y = solve_y(Y, X);
    const double w = Jn - entry_of(Y).mean;
    const double scale = std::max(1.0, std::abs(y));
    if (std::abs(w) >= 1e-4 * scale)
      return (G(Y, y + w, X) - G(Y, y, X) + 2 * y * w) / (w * w);
    // remainder integral of the Taylor expansion around the minimizer
    auto d2G = [&](double t) {
      const double h = 1e-5 * scale;
      const double yt = y + t * w;
      return (1 - t) * (dYn(Y, yt + h, X) - dYn(Y, yt - h, X)) / (2 * h);
    };
    return boost::math::quadrature::gauss<double, 8>::integrate(d2G, 0.0, 1.0);
  };

  auto G_fn = [solve_y, G = Gstar.value](const Vec& Y, double psi) {
    const double y = solve_y(Y, psi);
    return G(Y, y, psi) + y * y;
  };
  auto dG_fn = [solve_y, dXn = Gstar.dXn](const Vec& Y, double psi) {
    return dXn(Y, solve_y(Y, psi), psi);
  };

  cf.sys.G = G_fn;
  cf.sys.dG = dG_fn;
  cf.sys.b = b_fn;
  cf.sys.Jn_star = Jn_star;
  cf.a_star = a_star;
  cf.b_star = b_star;

  // measured sups and the assembly identity on a check grid
  const int mX = 64;
  const std::vector<double> wset = {0.5 * r0,  0.25 * r0,  1e-5,
                                    -0.5 * r0, -0.25 * r0, -1e-5};
  for (const Vec& Y : Dhat.samples) {
    const double Js = Jn_star(Y);
    cf.sup_Jn_star = std::max(cf.sup_Jn_star, std::abs(Js));
    for (int j = 0; j < mX; ++j) {
      const double X = 2 * pi * j / mX;
      const double a = a_star(Y, X);
      cf.sup_a_star = std::max(cf.sup_a_star, std::abs(a));
      const Vec bs = b_star(Y, X);
      for (double v : bs) cf.sup_b_star = std::max(cf.sup_b_star, std::abs(v));
      for (double w : wset) {
        const double Yn = Js + w;
        const double yn = Yn + a;
        const double Hstar = yn * yn + F0.eval(X) + Gstar.value(Y, yn, X);
        const double assembled =
            (1.0 + b_fn(Y, Yn, X)) * w * w + F0.eval(X) + G_fn(Y, X);
        cf.assembly_error =
            std::max(cf.assembly_error, std::abs(Hstar - assembled));
      }
    }
  }
  const double tol = 1e-12;
  cf.bounds_ok = cf.sup_Jn_star <= cf.bound_Jn_star + tol &&
                 cf.sup_a_star <= cf.bound_a_star + tol &&
                 cf.sup_b_star <= cf.bound_b_star + tol;
  return cf;
}

void CanonicalForm::apply(const Vec& Y, const Vec& X, Vec& y, Vec& x) const {
  const size_t n = Y.size();
  require(n >= 1 && X.size() == n, "pendulum: dimension mismatch");
  y = Y;
  x = X;
  const Vec Yhat(Y.begin(), Y.end() - 1);
  if (a_star) y[n - 1] += a_star(Yhat, X[n - 1]);
  if (b_star && n > 1) {
    const Vec shift = b_star(Yhat, X[n - 1]);
    for (size_t j = 0; j + 1 < n; ++j) x[j] += shift[j];
  }
}

std::string action_profile_csv(const PendulumSystem& sys,
                               const std::vector<int>& branches,
                               const Vec& Jhat, int grid_points, double theta) {
  std::ostringstream os;
  os << "branch";
  for (size_t j = 0; j < Jhat.size(); ++j) os << ",Jhat" << j;
  os << ",E,Pn,dPdE,in_window\n";
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    os << ',' << buf;
  };
  for (int i : branches) {
    const ActionBranch br = branch(sys, i);
    const Window W = br.window(Jhat);
    const double hi = br.rotation() ? sys.energy_cap() : W.hi;
    const ActionWindow aw = action_window(br, Jhat, theta);
    for (int k = 0; k < grid_points; ++k) {
      const double E = W.lo + (hi - W.lo) * (k + 0.5) / grid_points;
      const double P = action_of_energy(br, E, Jhat);
      const double dP = dPdE(br, E, Jhat);
      os << i;
      for (double v : Jhat) put(v);
      put(E);
      put(P);
      put(dP);
      os << ',' << ((P >= aw.lo && P <= aw.hi && aw.hi > aw.lo) ? 1 : 0)
         << '\n';
    }
  }
  return os.str();
}

nlohmann::json fit_to_json(const SeparatrixFit& fit) {
  return nlohmann::json{{"branch", fit.branch_index},
                        {"side", fit.side},
                        {"phi", fit.phi_coeffs},
                        {"chi", fit.chi_coeffs},
                        {"fit_range", {fit.fit_lo, fit.fit_hi}},
                        {"residual", fit.residual},
                        {"sup_d2F", fit.sup_d2F},
                        {"chi0", fit.chi0()},
                        {"chi_bound_ok", fit.chi_bound_ok}};
}

}  // namespace kam::pendulum
