#include "kam/potential.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "kam/lattice.hpp"

namespace kam {

double l1_norm(const IntVec& k) {
  double s = 0;
  for (const Int& ki : k) s += std::fabs(static_cast<double>(ki));
  return s;
}

double l2_norm(const IntVec& k) {
  double s = 0;
  for (const Int& ki : k) s += sqr(static_cast<double>(ki));
  return std::sqrt(s);
}

std::vector<IntVec> l1_ball_reps(int n, double radius, bool primitive_only) {
  require(n >= 1, "l1_ball_reps: dimension >= 1 required");
  require(radius >= 0, "l1_ball_reps: radius >= 0 required");
  const long R = static_cast<long>(std::floor(radius));
  std::vector<IntVec> out;
  IntVec cur(n);
  auto rec = [&](auto&& self, int pos, long budget) -> void {
    if (pos == n) {
      bool nonzero = false, leading_pos = false;
      for (const Int& ci : cur) {
        if (ci != 0) {
          nonzero = true;
          leading_pos = ci > 0;
          break;
        }
      }
      if (!nonzero || !leading_pos) return;
      if (primitive_only && !lattice::is_primitive(cur)) return;
      out.push_back(cur);
      return;
    }
    for (long v = -budget; v <= budget; ++v) {
      cur[pos] = v;
      self(self, pos + 1, budget - std::labs(v));
    }
  };
  rec(rec, 0, R);
  std::sort(out.begin(), out.end());
  return out;
}

namespace potential {

double TrigSeries::eval(double t) const {
  double v = mean;
  for (const auto& [j, cj] : c) v += 2.0 * std::real(cj * std::polar(1.0, j * t));
  return v;
}

Cplx TrigSeries::eval(Cplx t) const {
  const Cplx I(0, 1);
  Cplx v = mean;
  for (const auto& [j, cj] : c)
    v += cj * std::exp(I * (static_cast<double>(j) * t)) +
         std::conj(cj) * std::exp(-I * (static_cast<double>(j) * t));
  return v;
}

double TrigSeries::d1(double t) const {
  double v = 0;
  for (const auto& [j, cj] : c) v += 2.0 * std::real(Cplx(0, j) * cj * std::polar(1.0, j * t));
  return v;
}

double TrigSeries::d2(double t) const {
  double v = 0;
  for (const auto& [j, cj] : c)
    v += 2.0 * std::real(-static_cast<double>(j) * j * cj * std::polar(1.0, j * t));
  return v;
}

TrigSeries TrigSeries::derivative() const {
  TrigSeries d;
  for (const auto& [j, cj] : c) d.c[j] = Cplx(0, j) * cj;
  return d;
}

int TrigSeries::max_mode() const { return c.empty() ? 0 : c.rbegin()->first; }

namespace {

// max of a smooth periodic function: dense scan + golden-section refinement
// around the best samples (makes the result grid-placement independent)
template <class Fn>
double periodic_max(const Fn& g, int grid) {
  const double h = 2 * pi / grid;
  std::vector<std::pair<double, double>> best;
  best.reserve(grid);
  for (int i = 0; i < grid; ++i) {
    const double t = i * h;
    best.emplace_back(-g(t), t);
  }
  const size_t keep = std::min<size_t>(4, best.size());
  std::partial_sort(best.begin(), best.begin() + keep, best.end());
  double m = -best.front().first;
  constexpr double gr = 0.6180339887498949;
  for (size_t b = 0; b < keep; ++b) {
    double lo = best[b].second - h, hi = best[b].second + h;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double g1 = g(x1), g2 = g(x2);
    while (hi - lo > 1e-13) {
      if (g1 > g2) {
        hi = x2;
        x2 = x1;
        g2 = g1;
        x1 = hi - gr * (hi - lo);
        g1 = g(x1);
      } else {
        lo = x1;
        x1 = x2;
        g1 = g2;
        x2 = lo + gr * (hi - lo);
        g2 = g(x2);
      }
    }
    m = std::max({m, g1, g2});
  }
  return m;
}

}  // namespace

double strip_norm(const TrigSeries& F, double s0) {
  require(s0 >= 0, "strip_norm: width >= 0 required");
  const int grid = std::max(4096, 8 * F.max_mode());
  const double top = periodic_max([&](double t) { return std::abs(F.eval(Cplx(t, s0))); }, grid);
  const double bot = periodic_max([&](double t) { return std::abs(F.eval(Cplx(t, -s0))); }, grid);
  return std::max(top, bot);
}

double AnalyticPotential::eval(const Vec& x) const {
  require(static_cast<int>(x.size()) == n, "eval: dimension mismatch");
  double v = 0;
  for (const auto& [k, ck] : modes) {
    double ph = 0;
    for (int i = 0; i < n; ++i) ph += static_cast<double>(k[i]) * x[i];
    v += 2.0 * std::real(ck * std::polar(1.0, ph));
  }
  return v;
}

Cplx AnalyticPotential::eval(const CVec& x) const {
  require(static_cast<int>(x.size()) == n, "eval: dimension mismatch");
  const Cplx I(0, 1);
  Cplx v = 0;
  for (const auto& [k, ck] : modes) {
    Cplx ph = 0;
    for (int i = 0; i < n; ++i) ph += static_cast<double>(k[i]) * x[i];
    v += ck * std::exp(I * ph) + std::conj(ck) * std::exp(-I * ph);
  }
  return v;
}

Cplx AnalyticPotential::coeff(const IntVec& k) const {
  for (const Int& ki : k) {
    if (ki == 0) continue;
    if (ki > 0) {
      auto it = modes.find(k);
      return it == modes.end() ? Cplx(0) : it->second;
    }
    IntVec neg(k.size());
    for (size_t i = 0; i < k.size(); ++i) neg[i] = -k[i];
    auto it = modes.find(neg);
    return it == modes.end() ? Cplx(0) : std::conj(it->second);
  }
  return Cplx(0);  // zero vector: zero-mean potential
}

double sup_fourier_norm(const AnalyticPotential& f, double s) {
  require(s > 0, "sup_fourier_norm: width > 0 required");
  double m = 0;
  for (const auto& [k, ck] : f.modes) m = std::max(m, std::abs(ck) * std::exp(l1_norm(k) * s));
  return m;
}

LatticeProfile lattice_projection(const AnalyticPotential& f, const IntVec& k_in) {
  require(static_cast<int>(k_in.size()) == f.n, "lattice_projection: dimension mismatch");
  require(lattice::is_primitive(k_in), "lattice_projection: primitive k required");
  // the lattice Zk is sign-invariant; work with the normalized representative
  const IntVec k = lattice::normalize_generator(k_in).first;

  LatticeProfile p;
  p.k = k;
  p.width = l1_norm(k) * f.s;
  const int jmax = static_cast<int>(f.support_radius / std::max(1.0, l1_norm(k)));
  for (int j = 1; j <= std::max(jmax, 1); ++j) {
    IntVec jk(k.size());
    for (size_t i = 0; i < k.size(); ++i) jk[i] = Int(j) * k[i];
    const Cplx cj = f.coeff(jk);
    if (cj != Cplx(0)) p.F.c[j] = cj;
  }
  const Cplx first = p.F.c.count(1) ? p.F.c.at(1) : Cplx(0);
  p.phase_shift = first == Cplx(0) ? 0.0 : pi - std::arg(first);
  return p;
}

double genericity_threshold(double s, double delta, double c) {
  require(delta > 0 && delta <= 1, "genericity_threshold: delta in (0,1] required");
  require(s > 0, "genericity_threshold: width > 0 required");
  require(c > 1, "genericity_threshold: constant > 1 required");
  return c * std::max({1.0, 1.0 / s, std::log(1.0 / (s * delta)) / s});
}

namespace {

// min over one period of |F'| + |F''|: dense scan plus golden-section
// refinement around the best brackets
double min_first_two_derivs(const TrigSeries& F) {
  const auto g = [&](double t) { return std::fabs(F.d1(t)) + std::fabs(F.d2(t)); };
  const int grid = std::max(4096, 8 * F.max_mode());
  const double h = 2 * pi / grid;

  std::vector<std::pair<double, double>> best;  // (value, t)
  for (int i = 0; i < grid; ++i) {
    const double t = -pi + i * h;
    best.emplace_back(g(t), t);
  }
  std::partial_sort(best.begin(), best.begin() + 8, best.end());

  double m = best.front().first;
  constexpr double gr = 0.6180339887498949;
  for (int b = 0; b < 8; ++b) {
    double lo = best[b].second - h, hi = best[b].second + h;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double g1 = g(x1), g2 = g(x2);
    while (hi - lo > 1e-12) {
      if (g1 < g2) {
        hi = x2;
        x2 = x1;
        g2 = g1;
        x1 = hi - gr * (hi - lo);
        g1 = g(x1);
      } else {
        lo = x1;
        x1 = x2;
        g1 = g2;
        x2 = lo + gr * (hi - lo);
        g2 = g(x2);
      }
    }
    m = std::min({m, g1, g2});
  }
  return m;
}

// roots of F' in (-pi, pi], refined to 1e-13. Brackets are taken cyclically
// over cached grid values so a root sitting exactly on the period seam is
// still caught.
std::vector<double> critical_points_raw(const TrigSeries& F) {
  const int grid = std::max(4096, 8 * F.max_mode());
  const double h = 2 * pi / grid;
  std::vector<double> val(grid);
  for (int i = 0; i < grid; ++i) val[i] = F.d1(-pi + i * h);

  std::vector<double> roots;
  for (int i = 0; i < grid; ++i) {
    const double a = -pi + i * h, b = a + h;
    const double fa = val[i], fb = val[(i + 1) % grid];
    if (fa == 0) {
      roots.push_back(a);
      continue;
    }
    if (!(fa * fb < 0)) continue;
    double lo = a, hi = b, flo = fa;
    for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
      double mid = 0.5 * (lo + hi);
      // Newton step when it stays inside the bracket, bisection otherwise
      const double d2 = F.d2(mid);
      if (d2 != 0) {
        const double nt = mid - F.d1(mid) / d2;
        if (nt > lo && nt < hi) mid = nt;
      }
      const double fm = F.d1(mid);
      if (fm == 0) {
        lo = hi = mid;
        break;
      }
      if ((fm > 0) == (flo > 0)) {
        lo = mid;
        flo = fm;
      } else {
        hi = mid;
      }
    }
    roots.push_back(0.5 * (lo + hi));
  }
  // wrap into (-pi, pi] and dedupe endpoints
  for (double& r : roots)
    if (r <= -pi) r += 2 * pi;
  std::sort(roots.begin(), roots.end());
  std::vector<double> out;
  for (double r : roots) {
    if (!out.empty() && r - out.back() < 1e-10) continue;
    if (!out.empty() && (r + 2 * pi) - out.back() < 1e-10) continue;
    out.push_back(r);
  }
  if (out.size() >= 2 && (out.front() + 2 * pi) - out.back() < 1e-10) out.pop_back();
  return out;
}

}  // namespace

degenerate_profile_error::degenerate_profile_error(double t)
    : std::runtime_error("degenerate critical point near t = " + std::to_string(t)),
      witness(t) {}

MorseData morse_analyze(const TrigSeries& F, double s0) {
  require(!F.empty(), "morse_analyze: nonconstant series required");

  const std::vector<double> raw = critical_points_raw(F);
  require(!raw.empty(), "morse_analyze: no critical points found");
  for (double r : raw)
    if (std::fabs(F.d2(r)) < 1e-8) throw degenerate_profile_error(r);
  require(raw.size() % 2 == 0, "morse_analyze: odd critical point count");

  // rotate so the global maximum is the wrap point x_0 = x_{2N} - 2 pi; the
  // rotation windows open exactly above its energy, and every interior
  // maximum then has a higher neighbor on both sides
  size_t gmax = raw.size();
  double gval = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < raw.size(); ++i)
    if (F.d2(raw[i]) < 0 && F.eval(raw[i]) > gval) {
      gval = F.eval(raw[i]);
      gmax = i;
    }
  require(gmax < raw.size(), "morse_analyze: no maximum found");
  const size_t first_min = (gmax + 1) % raw.size();

  const int N = static_cast<int>(raw.size() / 2);
  MorseData md;
  md.N = N;
  md.critical_points.resize(2 * N + 1);
  for (int i = 1; i <= 2 * N; ++i) {
    const size_t idx = (first_min + i - 1) % raw.size();
    double x = raw[idx];
    if (idx < first_min) x += 2 * pi;  // keep the cyclic order increasing
    md.critical_points[i] = x;
    const bool is_min = F.d2(x) > 0;
    require(is_min == (i % 2 == 1), "morse_analyze: critical points do not alternate");
  }
  md.critical_points[0] = md.critical_points[2 * N] - 2 * pi;
  md.critical_energies.resize(2 * N + 1);
  for (int i = 0; i <= 2 * N; ++i) md.critical_energies[i] = F.eval(md.critical_points[i]);

  double gap = std::numeric_limits<double>::infinity();
  for (int i = 1; i <= 2 * N; ++i)
    for (int j = i + 1; j <= 2 * N; ++j)
      gap = std::min(gap, std::fabs(md.critical_energies[i] - md.critical_energies[j]));
  md.beta = std::min(min_first_two_derivs(F), gap);

  md.M = strip_norm(F, s0);
  TrigSeries Fc = F;
  Fc.c[1] += 0.5;  // distance to -cos: add cos = (e^{it} + e^{-it})/2
  md.gamma = strip_norm(Fc, s0);
  md.cosine_like = md.gamma <= 0.25 * std::min(1.0, s0 * s0);
  if (md.cosine_like)
    require(N == 1, "morse_analyze: cosine-like profile must have exactly one minimum");
  return md;
}

MorseData morse_analyze(const LatticeProfile& F, double s0) { return morse_analyze(F.F, s0); }

GenericityReport check_genericity(const AnalyticPotential& f, double delta, double c) {
  GenericityReport rep;
  rep.delta = delta;
  rep.K_threshold = genericity_threshold(f.s, delta, c);
  rep.checked_radius = f.support_radius;
  rep.p1_pass = rep.p2_pass = rep.p3_pass = true;

  const auto reps = l1_ball_reps(f.n, f.support_radius, /*primitive_only=*/true);

  for (const IntVec& k : reps) {
    const double k1 = l1_norm(k);
    if (k1 <= rep.K_threshold) continue;
    const double floor_k =
        delta * std::pow(k1, -0.5 * (f.n + 3)) * std::exp(-k1 * f.s);
    if (std::abs(f.coeff(k)) < floor_k) {
      if (rep.p1_pass) rep.p1_witness = k;
      rep.p1_pass = false;
    }
  }

  for (const IntVec& k : reps) {
    if (l1_norm(k) > rep.K_threshold) continue;
    const LatticeProfile prof = lattice_projection(f, k);

    if (prof.F.empty()) {
      if (rep.p2_pass) rep.p2_witness = k;
      rep.p2_pass = false;
      if (rep.p3_pass) rep.p3_witness = k;
      rep.p3_pass = false;
      continue;
    }

    double scale = 1.0;
    for (const auto& [j, cj] : prof.F.c) scale = std::max(scale, 2.0 * std::abs(cj));
    if (min_first_two_derivs(prof.F) <= 1e-9 * scale) {
      if (rep.p2_pass) rep.p2_witness = k;
      rep.p2_pass = false;
    }

    bool p3_ok = true;
    try {
      const MorseData md = morse_analyze(prof.F, prof.width);
      double gap = std::numeric_limits<double>::infinity();
      for (int i = 1; i <= 2 * md.N; ++i)
        for (int j = i + 1; j <= 2 * md.N; ++j)
          gap = std::min(gap, std::fabs(md.critical_energies[i] - md.critical_energies[j]));
      p3_ok = gap > 1e-9 * scale;
    } catch (const degenerate_profile_error&) {
      p3_ok = false;  // critical values ill-defined
    }
    if (!p3_ok) {
      if (rep.p3_pass) rep.p3_witness = k;
      rep.p3_pass = false;
    }
  }
  return rep;
}

AnalyticPotential exp_decay_potential(int n, double s, double delta, int radius) {
  require(n >= 1 && s > 0 && delta > 0 && radius >= 1, "exp_decay_potential: bad parameters");
  AnalyticPotential f;
  f.n = n;
  f.s = s;
  f.support_radius = radius;
  for (const IntVec& k : l1_ball_reps(n, radius, /*primitive_only=*/true))
    f.modes[k] = Cplx(delta * std::exp(-l1_norm(k) * s), 0.0);
  return f;
}

nlohmann::json to_json(const AnalyticPotential& f) {
  nlohmann::json j;
  j["n"] = f.n;
  j["s"] = f.s;
  j["support_radius"] = f.support_radius;
  j["modes"] = nlohmann::json::array();
  for (const auto& [k, ck] : f.modes) {
    nlohmann::json m;
    m["k"] = nlohmann::json::array();
    for (const Int& ki : k) m["k"].push_back(static_cast<long>(ki));
    m["re"] = ck.real();
    m["im"] = ck.imag();
    j["modes"].push_back(m);
  }
  return j;
}

AnalyticPotential potential_from_json(const nlohmann::json& j) {
  AnalyticPotential f;
  f.n = j.at("n").get<int>();
  f.s = j.at("s").get<double>();
  f.support_radius = j.at("support_radius").get<int>();
  require(f.n >= 1, "potential: dimension >= 1 required");
  require(f.s > 0, "potential: width > 0 required");
  require(f.support_radius >= 0, "potential: support radius >= 0 required");
  for (const auto& m : j.at("modes")) {
    IntVec k;
    for (const auto& ki : m.at("k")) k.emplace_back(ki.get<long>());
    require(static_cast<int>(k.size()) == f.n, "potential: mode dimension mismatch");
    Cplx c(m.at("re").get<double>(), m.at("im").get<double>());
    bool nonzero = false;
    for (Int& ki : k)
      if (ki != 0) {
        nonzero = true;
        if (ki < 0) {  // store the sign-normalized representative
          for (Int& kj : k) kj = -kj;
          c = std::conj(c);
        }
        break;
      }
    require(nonzero, "potential: k = 0 mode violates zero mean");
    require(l1_norm(k) <= f.support_radius, "potential: mode outside declared support radius");
    require(!f.modes.count(k), "potential: duplicate mode (up to reality pairing)");
    f.modes[k] = c;
  }
  return f;
}

AnalyticPotential load_potential(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "load_potential: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return potential_from_json(j);
}

void save_potential(const AnalyticPotential& f, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "save_potential: cannot open " + path);
  out << to_json(f).dump(2) << "\n";
}

}  // namespace potential
}  // namespace kam
