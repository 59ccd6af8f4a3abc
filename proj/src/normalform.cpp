#include "kam/normalform.hpp"

#include <algorithm>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <nlohmann/json.hpp>

#include "kam/calibration.hpp"
#include "kam/lattice.hpp"

namespace kam::nf {

namespace {

Cplx ipow(Cplx z, int e) {
  if (e == 0) return {1.0, 0.0};
  if (e < 0) return 1.0 / ipow(z, -e);
  Cplx acc{1.0, 0.0};
  while (e) {
    if (e & 1) acc *= z;
    z *= z;
    e >>= 1;
  }
  return acc;
}

bool is_zero_vec(const IntVec& m) {
  return std::all_of(m.begin(), m.end(), [](const Int& v) { return v == 0; });
}

// Backing store for interned directions. Entries are primitive vectors with
// small components, so the cached int64 copies are exact; dot products in the
// hot paths then avoid arbitrary-precision arithmetic entirely.
struct DirPool {
  std::map<IntVec, DirId> index;
  std::vector<IntVec> vecs;
  std::vector<std::vector<long long>> ivecs;
  std::vector<Vec> dvecs;
};

DirPool& dir_pool() {
  static DirPool pool;
  return pool;
}

const std::vector<long long>& dir_i64(DirId id) { return dir_pool().ivecs[id]; }
const Vec& dir_dvec(DirId id) { return dir_pool().dvecs[id]; }

long long dot64(const std::vector<long long>& a,
                const std::vector<long long>& b) {
  long long s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<long long> to_i64(const IntVec& m) {
  std::vector<long long> out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    out[i] = static_cast<long long>(m[i]);
  return out;
}

template <class V>
Cplx dot_cv(const V& y, const IntVec& m) {
  Cplx s{0.0, 0.0};
  for (std::size_t i = 0; i < m.size(); ++i)
    s += y[i] * static_cast<double>(m[i]);
  return s;
}

// Grid evaluation flattens coefficient functions into table-driven terms:
// the distinct directions are collected once, every sample then builds one
// table of dot powers, and each term evaluation is a few lookups. Negative
// exponents cost one inversion per direction, keeping divisions out of the
// inner loops.
struct CompiledTerm {
  Cplx c;
  boost::container::small_vector<std::pair<std::uint32_t, int>, 4> keys;
};

struct CompiledMode {
  Vec kd;
  double l1 = 0;
  std::vector<CompiledTerm> terms;
};

struct CompiledFn {
  std::vector<CompiledMode> modes;
  std::vector<DirId> dirs;  // local index -> interned direction
  std::vector<int> emin, emax;
};

CompiledFn compile_modes(const StateFunction& f) {
  CompiledFn cf;
  std::map<DirId, std::uint32_t> local;
  cf.modes.reserve(f.modes.size());
  for (const auto& [k, fn] : f.modes) {
    CompiledMode cm;
    cm.kd.resize(k.size());
    for (std::size_t i = 0; i < k.size(); ++i)
      cm.kd[i] = static_cast<double>(k[i]);
    cm.l1 = l1_norm(k);
    cm.terms.reserve(fn.terms.size());
    for (const auto& t : fn.terms) {
      CompiledTerm ct;
      ct.c = t.c;
      for (const auto& [id, e] : t.pows) {
        auto [it, fresh] = local.emplace(id, std::uint32_t(cf.dirs.size()));
        if (fresh) {
          cf.dirs.push_back(id);
          cf.emin.push_back(0);
          cf.emax.push_back(0);
        }
        const std::uint32_t ix = it->second;
        cf.emin[ix] = std::min(cf.emin[ix], e);
        cf.emax[ix] = std::max(cf.emax[ix], e);
        ct.keys.push_back({ix, e});
      }
      cm.terms.push_back(std::move(ct));
    }
    cf.modes.push_back(std::move(cm));
  }
  return cf;
}

// Powers (y . dir)^e for e in [emin, emax] of every compiled direction at one
// action sample.
struct PowTable {
  std::vector<std::vector<Cplx>> pw;
  std::vector<int> base;

  template <class YVec>
  void build(const CompiledFn& cf, const YVec& y) {
    pw.resize(cf.dirs.size());
    base.resize(cf.dirs.size());
    for (std::size_t ix = 0; ix < cf.dirs.size(); ++ix) {
      const Vec& m = dir_dvec(cf.dirs[ix]);
      Cplx d{0.0, 0.0};
      for (std::size_t i = 0; i < m.size(); ++i) d += y[i] * m[i];
      const int lo = cf.emin[ix], hi = cf.emax[ix];
      base[ix] = -lo;
      auto& row = pw[ix];
      row.assign(std::size_t(hi - lo + 1), Cplx{1.0, 0.0});
      Cplx acc{1.0, 0.0};
      for (int e = 1; e <= hi; ++e) {
        acc *= d;
        row[std::size_t(e - lo)] = acc;
      }
      if (lo < 0) {
        const Cplx inv = 1.0 / d;
        acc = Cplx{1.0, 0.0};
        for (int e = -1; e >= lo; --e) {
          acc *= inv;
          row[std::size_t(e - lo)] = acc;
        }
      }
    }
  }

  Cplx eval(const CompiledTerm& t) const {
    Cplx v = t.c;
    for (const auto& [ix, e] : t.keys) v *= pw[ix][std::size_t(e + base[ix])];
    return v;
  }

  Cplx eval_terms(const std::vector<CompiledTerm>& ts) const {
    Cplx s{0.0, 0.0};
    for (const auto& t : ts) s += eval(t);
    return s;
  }
};

// Upsert (id, delta) into a sorted exponent list, dropping zero exponents.
void bump_pow(decltype(CoefTerm::pows)& pows, DirId id, int delta) {
  auto it = std::lower_bound(
      pows.begin(), pows.end(), id,
      [](const std::pair<DirId, int>& p, DirId v) { return p.first < v; });
  if (it != pows.end() && it->first == id) {
    it->second += delta;
    if (it->second == 0) pows.erase(it);
  } else if (delta != 0) {
    pows.insert(it, {id, delta});
  }
}

// Exponent lists are sorted by id, so equality and ordering are cheap
// integer comparisons.
bool pows_less(const CoefTerm& a, const CoefTerm& b) {
  return std::lexicographical_compare(a.pows.begin(), a.pows.end(),
                                      b.pows.begin(), b.pows.end());
}

// Union of two sorted exponent lists, summing shared ids.
void merge_pows(decltype(CoefTerm::pows)& out,
                const decltype(CoefTerm::pows)& a,
                const decltype(CoefTerm::pows)& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      out.push_back(a[i++]);
    } else if (b[j].first < a[i].first) {
      out.push_back(b[j++]);
    } else {
      const int e = a[i].second + b[j].second;
      if (e != 0) out.push_back({a[i].first, e});
      ++i;
      ++j;
    }
  }
  for (; i < a.size(); ++i) out.push_back(a[i]);
  for (; j < b.size(); ++j) out.push_back(b[j]);
}

}  // namespace

DirId intern_direction(const IntVec& m) {
  DirPool& p = dir_pool();
  auto it = p.index.find(m);
  if (it != p.index.end()) return it->second;
  const DirId id = static_cast<DirId>(p.vecs.size());
  p.index.emplace(m, id);
  p.vecs.push_back(m);
  p.ivecs.push_back(to_i64(m));
  Vec dv(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) dv[i] = static_cast<double>(m[i]);
  p.dvecs.push_back(std::move(dv));
  return id;
}

const IntVec& direction_vec(DirId id) { return dir_pool().vecs[id]; }

// ---------------------------------------------------------------- CoefFn

void CoefFn::add_term(Cplx c, const std::map<IntVec, int>& pows) {
  if (c == Cplx{0.0, 0.0}) return;
  CoefTerm t;
  t.c = c;
  for (const auto& [m, e] : pows) {
    if (e == 0) continue;
    require(!is_zero_vec(m), "CoefFn: zero vector in a monomial");
    auto [m0, g] = lattice::normalize_generator(m);
    t.c *= std::pow(static_cast<double>(g), e);
    bump_pow(t.pows, intern_direction(m0), e);
  }
  terms.push_back(std::move(t));
}

CoefFn CoefFn::constant(Cplx c) {
  CoefFn f;
  f.add_term(c, {});
  return f;
}

CoefFn CoefFn::linear(const IntVec& m) {
  CoefFn f;
  f.add_term({1.0, 0.0}, {{m, 1}});
  return f;
}

Cplx CoefFn::eval(const CVec& y) const {
  Cplx s{0.0, 0.0};
  for (const auto& t : terms) {
    Cplx v = t.c;
    for (const auto& [id, e] : t.pows) {
      const Vec& m = dir_dvec(id);
      Cplx d{0.0, 0.0};
      for (std::size_t i = 0; i < m.size(); ++i) d += y[i] * m[i];
      v *= ipow(d, e);
    }
    s += v;
  }
  return s;
}

Cplx CoefFn::eval(const Vec& y) const {
  CVec cy(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) cy[i] = y[i];
  return eval(cy);
}

namespace {

// Directional derivative along an int64 copy of dir, appended without
// simplification so callers can batch many contributions before merging.
void deriv_append(std::vector<CoefTerm>& out,
                  const std::vector<CoefTerm>& terms,
                  const std::vector<long long>& dir64, Cplx scale) {
  for (const auto& t : terms) {
    for (std::size_t j = 0; j < t.pows.size(); ++j) {
      const auto [id, e] = t.pows[j];
      const long long d = dot64(dir64, dir_i64(id));
      if (d == 0) continue;
      CoefTerm nt = t;
      nt.c *= scale * (double(e) * double(d));
      if (e == 1)
        nt.pows.erase(nt.pows.begin() + j);
      else
        nt.pows[j].second -= 1;
      out.push_back(std::move(nt));
    }
  }
}

}  // namespace

CoefFn CoefFn::deriv(const IntVec& dir) const {
  CoefFn out;
  deriv_append(out.terms, terms, to_i64(dir), Cplx{1.0, 0.0});
  out.simplify();
  return out;
}

CoefFn CoefFn::divide_linear(const IntVec& m) const {
  auto [m0, g] = lattice::normalize_generator(m);
  const DirId id = intern_direction(m0);
  CoefFn out;
  for (const auto& t : terms) {
    CoefTerm nt = t;
    nt.c /= static_cast<double>(g);
    bump_pow(nt.pows, id, -1);
    out.terms.push_back(std::move(nt));
  }
  return out;
}

CoefFn CoefFn::conjugated() const {
  CoefFn out = *this;
  for (auto& t : out.terms) t.c = std::conj(t.c);
  return out;
}

void CoefFn::simplify() {
  std::stable_sort(terms.begin(), terms.end(), pows_less);
  std::size_t w = 0;
  std::size_t i = 0;
  while (i < terms.size()) {
    std::size_t j = i + 1;
    Cplx c = terms[i].c;
    while (j < terms.size() && terms[i].pows == terms[j].pows)
      c += terms[j++].c;
    if (c != Cplx{0.0, 0.0}) {
      if (w != i) terms[w] = std::move(terms[i]);
      terms[w].c = c;
      ++w;
    }
    i = j;
  }
  terms.resize(w);
}

CoefFn operator+(const CoefFn& a, const CoefFn& b) {
  CoefFn out = a;
  out.terms.insert(out.terms.end(), b.terms.begin(), b.terms.end());
  out.simplify();
  return out;
}

CoefFn operator-(const CoefFn& a, const CoefFn& b) {
  return a + Cplx{-1.0, 0.0} * b;
}

CoefFn operator*(const CoefFn& a, const CoefFn& b) {
  CoefFn out;
  out.terms.reserve(a.terms.size() * b.terms.size());
  for (const auto& ta : a.terms)
    for (const auto& tb : b.terms) {
      CoefTerm t;
      t.c = ta.c * tb.c;
      merge_pows(t.pows, ta.pows, tb.pows);
      out.terms.push_back(std::move(t));
    }
  out.simplify();
  return out;
}

CoefFn operator*(Cplx s, const CoefFn& a) {
  CoefFn out = a;
  for (auto& t : out.terms) t.c *= s;
  out.simplify();
  return out;
}

// ---------------------------------------------------------------- Domain

Domain domain_ball(const Vec& center, double radius, int extra) {
  Domain D;
  D.base.push_back(center);
  const int n = int(center.size());
  for (int j = 0; j < n; ++j)
    for (double sg : {1.0, -1.0}) {
      Vec p = center;
      p[j] += sg * radius;
      D.base.push_back(p);
    }
  Rng rng(0xba11, 0);
  for (int i = 0; i < extra; ++i) {
    Vec u(n);
    double nrm = 0;
    for (auto& v : u) {
      v = rng.normal();
      nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    Vec p = center;
    for (int j = 0; j < n; ++j) p[j] += radius * u[j] / nrm;
    D.base.push_back(p);
  }
  return D;
}

Domain domain_points(std::vector<Vec> pts) {
  require(!pts.empty(), "domain_points: empty base set");
  return Domain{std::move(pts)};
}

// The complex sample cloud for D_r: per base point, the point itself, 8
// interior points and >= 64 + 4n boundary points (random complex directions
// plus the real and imaginary axis extremes, so polynomial sups along the
// axes are attained exactly).
namespace {

std::vector<CVec> complex_directions(int n) {
  std::vector<CVec> dirs;
  for (int j = 0; j < n; ++j)
    for (double sg : {1.0, -1.0}) {
      CVec u(n, Cplx{0, 0});
      u[j] = sg;
      dirs.push_back(u);
      CVec v(n, Cplx{0, 0});
      v[j] = Cplx{0, sg};
      dirs.push_back(v);
    }
  Rng rng(0x6b61, std::uint64_t(n));
  for (int i = 0; i < 64; ++i) {
    CVec u(n);
    double nrm = 0;
    for (auto& z : u) {
      const double a = rng.normal(), b = rng.normal();
      z = Cplx{a, b};
      nrm += a * a + b * b;
    }
    nrm = std::sqrt(nrm);
    for (auto& z : u) z /= nrm;
    dirs.push_back(u);
  }
  return dirs;
}

std::vector<CVec> domain_samples(const Domain& D, double r) {
  require(!D.base.empty(), "empty action domain");
  const int n = int(D.base.front().size());
  const auto dirs = complex_directions(n);
  std::vector<CVec> out;
  out.reserve(D.base.size() * (dirs.size() + 9));
  for (const auto& y0 : D.base) {
    CVec c(n);
    for (int j = 0; j < n; ++j) c[j] = y0[j];
    out.push_back(c);
    for (std::size_t d = 0; d < dirs.size(); ++d) {
      CVec p = c;
      for (int j = 0; j < n; ++j) p[j] += r * dirs[d][j];
      out.push_back(p);
      if (d < 4) {
        for (double t : {0.35, 0.7}) {
          CVec q = c;
          for (int j = 0; j < n; ++j) q[j] += t * r * dirs[d][j];
          out.push_back(q);
        }
      }
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------- StateFunction

void StateFunction::add_mode(const IntVec& k, const CoefFn& fn) {
  auto& slot = modes[k];
  slot.terms.insert(slot.terms.end(), fn.terms.begin(), fn.terms.end());
  slot.simplify();
  if (slot.empty()) modes.erase(k);
}

void StateFunction::simplify() {
  for (auto it = modes.begin(); it != modes.end();) {
    it->second.simplify();
    it = it->second.empty() ? modes.erase(it) : std::next(it);
  }
}

std::size_t StateFunction::term_count() const {
  std::size_t c = 0;
  for (const auto& [k, fn] : modes) c += fn.terms.size();
  return c;
}

int StateFunction::max_mode_l1() const {
  int m = 0;
  for (const auto& [k, fn] : modes) m = std::max(m, int(l1_norm(k)));
  return m;
}

Cplx StateFunction::eval(const CVec& y, const CVec& x) const {
  Cplx s{0.0, 0.0};
  for (const auto& [k, fn] : modes)
    s += fn.eval(y) * std::exp(Cplx{0.0, 1.0} * dot_cv(x, k));
  return s;
}

Cplx StateFunction::eval(const Vec& y, const Vec& x) const {
  CVec cy(y.size()), cx(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) cy[i] = y[i];
  for (std::size_t i = 0; i < x.size(); ++i) cx[i] = x[i];
  return eval(cy, cx);
}

namespace {

template <class V>
std::vector<Cplx> grad_y_impl(const StateFunction& f, const V& y, const V& x) {
  std::vector<Cplx> g(f.n, Cplx{0, 0});
  CVec cy(y.size()), cx(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) cy[i] = y[i];
  for (std::size_t i = 0; i < x.size(); ++i) cx[i] = x[i];
  for (const auto& [k, fn] : f.modes) {
    const Cplx ph = std::exp(Cplx{0.0, 1.0} * dot_cv(cx, k));
    for (int j = 0; j < f.n; ++j) {
      IntVec ej(f.n, 0);
      ej[j] = 1;
      const CoefFn d = fn.deriv(ej);
      if (!d.empty()) g[j] += d.eval(cy) * ph;
    }
  }
  return g;
}

template <class V>
std::vector<Cplx> grad_x_impl(const StateFunction& f, const V& y, const V& x) {
  std::vector<Cplx> g(f.n, Cplx{0, 0});
  CVec cy(y.size()), cx(x.size());
  for (std::size_t i = 0; i < y.size(); ++i) cy[i] = y[i];
  for (std::size_t i = 0; i < x.size(); ++i) cx[i] = x[i];
  for (const auto& [k, fn] : f.modes) {
    const Cplx v = fn.eval(cy) * std::exp(Cplx{0.0, 1.0} * dot_cv(cx, k));
    for (int j = 0; j < f.n; ++j)
      g[j] += Cplx{0.0, 1.0} * static_cast<double>(k[j]) * v;
  }
  return g;
}

}  // namespace

CVec StateFunction::grad_y(const Vec& y, const Vec& x) const {
  auto g = grad_y_impl(*this, y, x);
  return CVec(g.begin(), g.end());
}

CVec StateFunction::grad_x(const Vec& y, const Vec& x) const {
  auto g = grad_x_impl(*this, y, x);
  return CVec(g.begin(), g.end());
}

StateFunction StateFunction::kinetic(int n) {
  StateFunction h;
  h.n = n;
  CoefFn fn;
  for (int i = 0; i < n; ++i) {
    IntVec ei(n, 0);
    ei[i] = 1;
    fn.add_term({0.5, 0.0}, {{ei, 2}});
  }
  h.modes[IntVec(n, 0)] = fn;
  return h;
}

StateFunction StateFunction::from_potential(
    const potential::AnalyticPotential& P, double scale) {
  StateFunction f;
  f.n = P.n;
  for (const auto& [k, c] : P.modes) {
    IntVec mk(k.size());
    for (std::size_t i = 0; i < k.size(); ++i) mk[i] = -k[i];
    f.add_mode(k, CoefFn::constant(scale * c));
    f.add_mode(mk, CoefFn::constant(scale * std::conj(c)));
  }
  return f;
}

StateFunction operator+(const StateFunction& a, const StateFunction& b) {
  StateFunction out = a;
  if (out.n == 0) out.n = b.n;
  for (const auto& [k, fn] : b.modes) out.add_mode(k, fn);
  return out;
}

StateFunction operator-(const StateFunction& a, const StateFunction& b) {
  return a + (-1.0) * b;
}

StateFunction operator*(double s, const StateFunction& a) {
  StateFunction out = a;
  for (auto& [k, fn] : out.modes) fn = Cplx{s, 0.0} * fn;
  out.simplify();
  return out;
}

// ------------------------------------------------------------ Sublattice

Sublattice Sublattice::line(const IntVec& k) {
  require(lattice::is_primitive(k), "sublattice generator must be primitive");
  Sublattice L;
  L.generator = k;
  return L;
}

bool Sublattice::contains(const IntVec& m) const {
  if (is_zero_vec(m)) return true;
  if (!generator) return false;
  const IntVec& k = *generator;
  std::size_t i0 = 0;
  while (i0 < k.size() && k[i0] == 0) ++i0;
  // k is primitive, so k[i0] != 0; m in Z k iff m = (m[i0]/k[i0]) k
  if (m[i0] % k[i0] != 0) return false;
  const Int j = m[i0] / k[i0];
  for (std::size_t i = 0; i < k.size(); ++i)
    if (m[i] != j * k[i]) return false;
  return true;
}

StateFunction project(const StateFunction& f, const Sublattice& L) {
  StateFunction out;
  out.n = f.n;
  for (const auto& [k, fn] : f.modes)
    if (L.contains(k)) out.modes.emplace(k, fn);
  return out;
}

StateFunction project_perp(const StateFunction& f, const Sublattice& L) {
  StateFunction out;
  out.n = f.n;
  for (const auto& [k, fn] : f.modes)
    if (!L.contains(k)) out.modes.emplace(k, fn);
  return out;
}

StateFunction truncate(const StateFunction& f, double N) {
  StateFunction out;
  out.n = f.n;
  for (const auto& [k, fn] : f.modes)
    if (l1_norm(k) <= N) out.modes.emplace(k, fn);
  return out;
}

StateFunction truncate_high(const StateFunction& f, double N) {
  StateFunction out;
  out.n = f.n;
  for (const auto& [k, fn] : f.modes)
    if (l1_norm(k) > N) out.modes.emplace(k, fn);
  return out;
}

// -------------------------------------------------------- Poisson bracket

namespace {

// Iterated brackets accumulate terms whose contribution to any norm or
// evaluation over the working domain is far below round-off of the leading
// ones; they multiply under further brackets and dominate memory if kept.
// A term's significance is bounded by |c| sup_D |monomial| e^{|k|_1 s}, with
// the monomial sup bounded factorwise from per-direction extremes over the
// sample cloud. The bound is submultiplicative, so a product can be vetoed
// from the factors' significances alone.
struct SigBounds {
  std::vector<double> lmax, lmin;
  double s = 0;

  void build(const std::vector<CVec>& samples, double s_) {
    s = s_;
    const std::size_t ndir = dir_pool().vecs.size();
    lmax.assign(ndir, -1e300);
    lmin.assign(ndir, 1e300);
    for (std::size_t id = 0; id < ndir; ++id) {
      const Vec& m = dir_dvec(DirId(id));
      for (const auto& y : samples) {
        Cplx d{0.0, 0.0};
        for (std::size_t i = 0; i < m.size(); ++i) d += y[i] * m[i];
        const double lg = std::log(std::max(std::abs(d), 1e-300));
        lmax[id] = std::max(lmax[id], lg);
        lmin[id] = std::min(lmin[id], lg);
      }
    }
  }

  double log_sig(const CoefTerm& t, double kl1) const {
    double lg = std::log(std::max(std::abs(t.c), 1e-300)) + kl1 * s;
    for (const auto& [id, e] : t.pows)
      lg += e > 0 ? e * lmax[id] : e * lmin[id];
    return lg;
  }

  double top_of(const std::vector<CoefTerm>& ts, double kl1) const {
    double top = -1e300;
    for (const auto& t : ts) top = std::max(top, log_sig(t, kl1));
    return top;
  }

  void prune(std::vector<CoefTerm>& ts, double kl1, double cut) const {
    std::erase_if(ts,
                  [&](const CoefTerm& t) { return log_sig(t, kl1) < cut; });
  }
};

// Drop every term more than rel below the state's top significance; the
// removed mass is at most term_count * rel * scale, orders below the
// certification headroom carried by the norms.
void prune_insignificant(StateFunction& f, const SigBounds& sig, double rel) {
  if (f.modes.empty()) return;
  double top = -1e300;
  for (const auto& [k, fn] : f.modes)
    top = std::max(top, sig.top_of(fn.terms, l1_norm(k)));
  const double cut = top + std::log(rel);
  for (auto it = f.modes.begin(); it != f.modes.end();) {
    sig.prune(it->second.terms, l1_norm(it->first), cut);
    it = it->second.terms.empty() ? f.modes.erase(it) : std::next(it);
  }
}

void append_products(std::vector<CoefTerm>& out, const std::vector<CoefTerm>& a,
                     const std::vector<CoefTerm>& b) {
  for (const auto& ta : a)
    for (const auto& tb : b) {
      CoefTerm t;
      t.c = ta.c * tb.c;
      merge_pows(t.pows, ta.pows, tb.pows);
      out.push_back(std::move(t));
    }
}

// As append_products, but skips products whose significance bound falls
// below cut; asig/bsig carry the factors' log-significances.
void append_products_cut(std::vector<CoefTerm>& out,
                         const std::vector<CoefTerm>& a,
                         const std::vector<double>& asig,
                         const std::vector<CoefTerm>& b,
                         const std::vector<double>& bsig, double cut) {
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (asig[i] + bsig[j] < cut) continue;
      CoefTerm t;
      t.c = a[i].c * b[j].c;
      merge_pows(t.pows, a[i].pows, b[j].pows);
      out.push_back(std::move(t));
    }
  }
}

// {u,v} with all mode-pair products appended raw and merged per slot once the
// slot doubles past its last merged size; a full simplify runs at the end.
// With sig set, products certifiably below rel of the running top
// significance are never formed and slots are pruned when compacted.
StateFunction bracket_impl(const StateFunction& u, const StateFunction& v,
                           const SigBounds* sig, double rel) {
  require(u.n == v.n, "poisson_bracket: dimension mismatch");
  StateFunction out;
  out.n = u.n;
  const Cplx I{0.0, 1.0};
  struct MV {
    const IntVec* k;
    std::vector<long long> k64;
    double l1;
    const CoefFn* fn;
  };
  std::vector<MV> um, vm;
  um.reserve(u.modes.size());
  vm.reserve(v.modes.size());
  for (const auto& [k, fn] : u.modes)
    um.push_back({&k, to_i64(k), l1_norm(k), &fn});
  for (const auto& [l, fn] : v.modes)
    vm.push_back({&l, to_i64(l), l1_norm(l), &fn});
  const double lrel = sig ? std::log(rel) : 0.0;
  double top = -1e300;
  std::vector<CoefTerm> dv, du;
  std::vector<double> usig, vsig, dvsig, dusig;
  std::map<IntVec, std::size_t> mark;
  for (const auto& a : um) {
    if (sig) {
      usig.resize(a.fn->terms.size());
      for (std::size_t i = 0; i < usig.size(); ++i)
        usig[i] = sig->log_sig(a.fn->terms[i], a.l1);
    }
    for (const auto& b : vm) {
      // {u,v}_{k+l} += i ( u_k (k . grad) v_l - v_l (l . grad) u_k )
      dv.clear();
      du.clear();
      deriv_append(dv, b.fn->terms, a.k64, I);
      deriv_append(du, a.fn->terms, b.k64, -I);
      if (dv.empty() && du.empty()) continue;
      IntVec m(a.k->size());
      for (std::size_t i = 0; i < m.size(); ++i) m[i] = (*a.k)[i] + (*b.k)[i];
      auto& fn = out.modes[m];
      if (!sig) {
        append_products(fn.terms, a.fn->terms, dv);
        append_products(fn.terms, b.fn->terms, du);
      } else {
        vsig.resize(b.fn->terms.size());
        for (std::size_t i = 0; i < vsig.size(); ++i)
          vsig[i] = sig->log_sig(b.fn->terms[i], b.l1);
        dvsig.resize(dv.size());
        for (std::size_t i = 0; i < dv.size(); ++i)
          dvsig[i] = sig->log_sig(dv[i], b.l1);
        dusig.resize(du.size());
        for (std::size_t i = 0; i < du.size(); ++i)
          dusig[i] = sig->log_sig(du[i], a.l1);
        auto vmax = [](const std::vector<double>& v) {
          double m = -1e300;
          for (double x : v) m = std::max(m, x);
          return m;
        };
        if (!usig.empty() && !dvsig.empty())
          top = std::max(top, vmax(usig) + vmax(dvsig));
        if (!vsig.empty() && !dusig.empty())
          top = std::max(top, vmax(vsig) + vmax(dusig));
        append_products_cut(fn.terms, a.fn->terms, usig, dv, dvsig,
                            top + lrel);
        append_products_cut(fn.terms, b.fn->terms, vsig, du, dusig,
                            top + lrel);
      }
      auto& wm = mark[m];
      if (fn.terms.size() > 64 && fn.terms.size() > 2 * wm) {
        fn.simplify();
        if (sig) sig->prune(fn.terms, l1_norm(m), top + lrel);
        wm = fn.terms.size();
      }
    }
  }
  out.simplify();
  if (sig) prune_insignificant(out, *sig, rel);
  return out;
}

}  // namespace

StateFunction poisson_bracket(const StateFunction& u, const StateFunction& v) {
  return bracket_impl(u, v, nullptr, 0.0);
}

// ------------------------------------------------------------------ norms

NormValue weighted_norm(const StateFunction& f, const Domain& D, double r,
                        double s) {
  require(r >= 0 && s >= 0, "weighted_norm: negative widths");
  const auto samples = domain_samples(D, r);
  const auto cf = compile_modes(f);
  std::vector<double> sup(cf.modes.size(), 0.0);
  PowTable pt;
  for (const auto& y : samples) {
    pt.build(cf, y);
    for (std::size_t m = 0; m < cf.modes.size(); ++m)
      sup[m] = std::max(sup[m], std::abs(pt.eval_terms(cf.modes[m].terms)));
  }
  double best = 0;
  for (std::size_t m = 0; m < cf.modes.size(); ++m)
    best = std::max(best, sup[m] * std::exp(cf.modes[m].l1 * s));
  return {best, best * norm_safety};
}

double plain_sup_norm(const StateFunction& f, const Domain& D, double r,
                      double s) {
  const auto ysamples = domain_samples(D, r);
  const auto cf = compile_modes(f);
  const auto& modes = cf.modes;
  // coefficient values depend on the action only; tabulate them once
  std::vector<std::vector<Cplx>> coef(modes.size());
  for (std::size_t m = 0; m < modes.size(); ++m)
    coef[m].reserve(ysamples.size());
  {
    PowTable pt;
    for (const auto& y : ysamples) {
      pt.build(cf, y);
      for (std::size_t m = 0; m < modes.size(); ++m)
        coef[m].push_back(pt.eval_terms(modes[m].terms));
    }
  }
  const int g = std::max(32, 4 * f.max_mode_l1() + 1);
  double sup = 0;
  // angle grid with imaginary parts at the strip extremes, all sign patterns
  const int patterns = 1 << f.n;
  const std::size_t total = std::size_t(std::pow(double(g), f.n));
  std::vector<Cplx> phase(modes.size());
  for (std::size_t t = 0; t < total; ++t) {
    std::size_t acc = t;
    CVec x(f.n);
    for (int j = 0; j < f.n; ++j) {
      x[j] = 2.0 * pi * double(acc % g) / g;
      acc /= g;
    }
    for (int p = 0; p < patterns; ++p) {
      CVec xc = x;
      for (int j = 0; j < f.n; ++j)
        xc[j] += Cplx{0.0, (p >> j) & 1 ? s : -s};
      for (std::size_t m = 0; m < modes.size(); ++m) {
        Cplx kx{0.0, 0.0};
        for (int j = 0; j < f.n; ++j) kx += modes[m].kd[j] * xc[j];
        phase[m] = std::exp(Cplx{0.0, 1.0} * kx);
      }
      for (std::size_t yi = 0; yi < ysamples.size(); ++yi) {
        Cplx v{0.0, 0.0};
        for (std::size_t m = 0; m < modes.size(); ++m)
          v += coef[m][yi] * phase[m];
        sup = std::max(sup, std::abs(v));
      }
    }
  }
  return sup;
}

// --------------------------------------------------------- homological eq

namespace {

// Extract h'(y).m as a single integer linear form (works for kinetic and
// integer-quadratic h); fails loudly otherwise.
IntVec divisor_vector(const StateFunction& h, const IntVec& m) {
  require(h.modes.size() == 1 && h.modes.begin()->first == IntVec(h.n, 0),
          "homological equation needs an x-independent h");
  const CoefFn d = h.modes.begin()->second.deriv(m);
  Vec w(h.n, 0.0);
  for (const auto& t : d.terms) {
    require(t.pows.size() == 1 && t.pows.front().second == 1 &&
                t.c.imag() == 0.0,
            "h'(y).m is not a linear form in y");
    const IntVec& base = direction_vec(t.pows.front().first);
    for (int j = 0; j < h.n; ++j)
      w[j] += t.c.real() * static_cast<double>(base[j]);
  }
  IntVec wi(h.n);
  for (int j = 0; j < h.n; ++j) {
    wi[j] = std::llround(w[j]);
    require(static_cast<double>(wi[j]) == w[j],
            "h'(y).m is not an integer linear form");
  }
  require(!is_zero_vec(wi), "h'(y).m vanishes identically");
  return wi;
}

struct ResidualGrid {
  double residual = 0;
  double scale = 0;
};

// Sup of |{h,phi} + f^K| and |f^K| on the spec verification grid: the real
// bounding box of the base points (17 nodes per action dimension for n = 2,
// shrunk so the total action count stays near 289) and a 32-per-angle grid
// refined to 4x the maximal mode.
ResidualGrid residual_on_grid(const StateFunction& h, const StateFunction& phi,
                              const StateFunction& fK, const Domain& D) {
  const int n = h.n;
  StateFunction R = poisson_bracket(h, phi) + fK;
  Vec lo = D.base.front(), hi = D.base.front();
  for (const auto& p : D.base)
    for (int j = 0; j < n; ++j) {
      lo[j] = std::min(lo[j], p[j]);
      hi[j] = std::max(hi[j], p[j]);
    }
  const int ga = std::max(2, int(std::round(std::pow(289.0, 1.0 / n))));
  const int gx = std::max(32, 4 * std::max(R.max_mode_l1(), fK.max_mode_l1()) + 1);
  std::vector<Vec> ypts;
  const std::size_t ytotal = std::size_t(std::pow(double(ga), n));
  for (std::size_t t = 0; t < ytotal; ++t) {
    std::size_t acc = t;
    Vec y(n);
    for (int j = 0; j < n; ++j) {
      y[j] = lo[j] + (hi[j] - lo[j]) * double(acc % ga) / (ga - 1);
      acc /= ga;
    }
    ypts.push_back(y);
  }
  const auto Rcf = compile_modes(R);
  const auto fKcf = compile_modes(fK);
  const auto& Rm = Rcf.modes;
  const auto& fKm = fKcf.modes;
  std::vector<std::vector<Cplx>> Rcoef(Rm.size()), fKcoef(fKm.size());
  {
    PowTable pt;
    for (const auto& y : ypts) {
      pt.build(Rcf, y);
      for (std::size_t m = 0; m < Rm.size(); ++m)
        Rcoef[m].push_back(pt.eval_terms(Rm[m].terms));
      pt.build(fKcf, y);
      for (std::size_t m = 0; m < fKm.size(); ++m)
        fKcoef[m].push_back(pt.eval_terms(fKm[m].terms));
    }
  }

  ResidualGrid out;
  const std::size_t xtotal = std::size_t(std::pow(double(gx), n));
  std::vector<Cplx> Rphase(Rm.size()), fKphase(fKm.size());
  for (std::size_t t = 0; t < xtotal; ++t) {
    std::size_t acc = t;
    Vec x(n);
    for (int j = 0; j < n; ++j) {
      x[j] = 2.0 * pi * double(acc % gx) / gx;
      acc /= gx;
    }
    for (std::size_t m = 0; m < Rm.size(); ++m) {
      double kx = 0;
      for (int j = 0; j < n; ++j) kx += Rm[m].kd[j] * x[j];
      Rphase[m] = Cplx{std::cos(kx), std::sin(kx)};
    }
    for (std::size_t m = 0; m < fKm.size(); ++m) {
      double kx = 0;
      for (int j = 0; j < n; ++j) kx += fKm[m].kd[j] * x[j];
      fKphase[m] = Cplx{std::cos(kx), std::sin(kx)};
    }
    for (std::size_t yi = 0; yi < ypts.size(); ++yi) {
      Cplx rv{0.0, 0.0}, fv{0.0, 0.0};
      for (std::size_t m = 0; m < Rm.size(); ++m)
        rv += Rcoef[m][yi] * Rphase[m];
      for (std::size_t m = 0; m < fKm.size(); ++m)
        fv += fKcoef[m][yi] * fKphase[m];
      out.residual = std::max(out.residual, std::abs(rv));
      out.scale = std::max(out.scale, std::abs(fv));
    }
  }
  return out;
}

}  // namespace

HomologicalSolution solve_homological(const StateFunction& h,
                                      const StateFunction& f,
                                      const Sublattice& L, double K,
                                      double alpha, const Domain& D, double r,
                                      double s) {
  require(alpha > 0, "solve_homological: alpha must be positive");
  const StateFunction fK = truncate(project_perp(f, L), K);
  HomologicalSolution sol;
  sol.phi.n = f.n;
  const auto samples = domain_samples(D, r);
  for (const auto& [m, fm] : fK.modes) {
    const IntVec w = divisor_vector(h, m);
    const CoefFn wfn = CoefFn::linear(w);  // evaluates h'(y).m = y.w exactly
    for (const auto& y : samples) {
      if (std::abs(wfn.eval(y)) < alpha) {
        Vec yr(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) yr[i] = y[i].real();
        throw small_divisor_error("non-resonance violated on the sampled domain",
                                  yr, m);
      }
    }
    sol.phi.add_mode(m, Cplx{0.0, -1.0} * fm.divide_linear(w));
  }
  sol.phi.simplify();
  const auto grid = residual_on_grid(h, sol.phi, fK, D);
  sol.residual = grid.residual;
  sol.residual_scale = grid.scale;
  require(sol.residual <= 1e-12 * std::max(1.0, grid.scale),
          "homological residual exceeds tolerance");
  sol.phi_norm = weighted_norm(sol.phi, D, r, s).certified;
  sol.fK_norm = weighted_norm(fK, D, r, s).certified;
  return sol;
}

// ---------------------------------------------------------- averaging step

namespace {

struct LieResult {
  StateFunction f_star;
  int orders = 0;
};


// f_* = sum_{l>=1} ad^l_phi f / l! - ad^l_phi f^K / (l+1)!.  Truncation is
// certified either by the geometric tail of the bracket-chain ratio
// theta_hat = 16 n |phi| / (dr ds) when it contracts, or by two consecutive
// measured term norms below 1e-16 relative to |f|.
LieResult lie_remainder(const StateFunction& f, const StateFunction& fK,
                        const StateFunction& phi, const Domain& D,
                        double r_next, double s_next, double dr, double ds,
                        double phi_norm, double f_scale) {
  LieResult out;
  out.f_star.n = f.n;
  const double theta_hat = 16.0 * f.n * phi_norm / (dr * ds);
  const double floor = 1e-16 * std::max(f_scale, 1e-300);
  SigBounds sig;
  sig.build(domain_samples(D, r_next), s_next);
  StateFunction u = f, v = fK;
  double fact = 1.0;
  double major = 1.0;
  int small_streak = 0;
  for (int l = 1; l <= 60; ++l) {
    u = bracket_impl(u, phi, &sig, 1e-16);
    v = bracket_impl(v, phi, &sig, 1e-16);
    prune_insignificant(u, sig, 1e-14);
    prune_insignificant(v, sig, 1e-14);
    if (std::getenv("KAM_NF_TRACE")) {
      std::size_t tiny = 0, total = 0;
      double cmax = 0;
      for (const auto& [k, fn] : u.modes)
        for (const auto& t : fn.terms) cmax = std::max(cmax, std::abs(t.c));
      for (const auto& [k, fn] : u.modes) {
        double mmax = 0;
        for (const auto& t : fn.terms) mmax = std::max(mmax, std::abs(t.c));
        for (const auto& t : fn.terms) {
          ++total;
          if (std::abs(t.c) < 1e-10 * mmax) ++tiny;
        }
      }
      std::fprintf(stderr,
                   "l=%d u_terms=%zu u_modes=%zu tiny=%zu cmax=%.3e f*=%zu\n",
                   l, total, u.modes.size(), tiny, cmax,
                   out.f_star.term_count());
    }
    fact *= double(l);
    StateFunction term =
        (1.0 / fact) * u - (1.0 / (fact * double(l + 1))) * v;
    out.f_star = out.f_star + term;
    out.orders = l;
    major *= theta_hat;
    const double tn = weighted_norm(term, D, r_next, s_next).certified;
    small_streak = tn < floor ? small_streak + 1 : 0;
    const bool geometric_done =
        theta_hat < 0.9 && major * theta_hat / (1.0 - theta_hat) < 1e-16;
    if (l >= 2 && (geometric_done || small_streak >= 2)) return out;
  }
  fail("Lie series did not reach the truncation tolerance in 60 orders");
}

}  // namespace

AveragingResult averaging_step(const StateFunction& h, const StateFunction& f,
                               const Sublattice& L, double alpha, double K,
                               const Domain& D, double r, double s) {
  require(K >= 1, "averaging_step: K must be at least 1");
  AveragingResult res;
  auto& rep = res.report;
  rep.r_next = r * (1.0 - 1.0 / (2.0 * K));
  rep.s_next = s * (1.0 - 1.0 / (K * K));
  rep.f_norm = weighted_norm(f, D, r, s).certified;

  const StateFunction fK = truncate(project_perp(f, L), K);
  rep.fK_norm = weighted_norm(fK, D, r, s).certified;
  rep.theta_check =
      std::pow(2.0, 5) * f.n * K * K * K * rep.fK_norm / (alpha * r * s);
  if (rep.theta_check > 1.0) throw step_too_large(rep.theta_check);

  if (fK.empty()) {  // nothing to average: identity transformation
    res.f_next = f;
    res.phi.n = f.n;
    res.f_star.n = f.n;
    return res;
  }

  auto hom = solve_homological(h, f, L, K, alpha, D, r, s);
  rep.phi_norm = hom.phi_norm;
  rep.residual = hom.residual;

  auto lie = lie_remainder(f, fK, hom.phi, D, rep.r_next, rep.s_next,
                           r - rep.r_next, s - rep.s_next, hom.phi_norm,
                           rep.f_norm);
  rep.lie_orders = lie.orders;
  res.f_star = lie.f_star;
  res.phi = hom.phi;
  res.f_next = (f - fK) + lie.f_star;
  rep.f_star_norm = weighted_norm(res.f_star, D, rep.r_next, rep.s_next).certified;
  rep.f_star_bound = 2.0 * rep.theta_check * rep.f_norm;
  return res;
}

// ------------------------------------------------------------- iteration

NormalFormReport normal_form_iterate(const StateFunction& h,
                                     const StateFunction& f,
                                     const Sublattice& L, double alpha,
                                     double K, const Domain& D, double r,
                                     double s) {
  require(K >= 1, "normal_form_iterate: K must be at least 1");
  NormalFormReport rep;
  rep.n = f.n;
  rep.lattice = L;
  rep.domain = D;
  rep.alpha = alpha;
  rep.K = K;
  rep.r = r;
  rep.s = s;
  rep.r_star = r / 2.0;
  rep.s_star = s * (1.0 - 1.0 / K);
  const int Kb = int(std::ceil(K));
  rep.steps = Kb;
  rep.f_norm = weighted_norm(f, D, r, s).certified;
  rep.theta_star =
      std::pow(2.0, 9) * f.n * K * K * K * rep.f_norm / (alpha * r * s);
  rep.theta = rep.theta_star * rep.f_norm;
  if (rep.theta_star >= 1.0) return rep;  // refused; accepted stays false

  const double rho = r / (4.0 * Kb);
  const double sigma = s / (2.0 * K * Kb);
  const double delta = std::pow(2.0, 5) * f.n * K * K * K / (alpha * r * s);

  StateFunction cur = f;
  for (int i = 0; i < Kb; ++i) {
    const double ri = r - 2.0 * i * rho, si = s - 2.0 * i * sigma;
    const double ri1 = r - 2.0 * (i + 1) * rho, si1 = s - 2.0 * (i + 1) * sigma;
    StepReport srep;
    srep.r_next = ri1;
    srep.s_next = si1;
    srep.f_norm = weighted_norm(cur, D, ri, si).certified;
    const StateFunction fKi = truncate(project_perp(cur, L), K);
    srep.fK_norm = weighted_norm(fKi, D, ri, si).certified;
    srep.theta_check = delta * srep.fK_norm;
    require(srep.theta_check <= 1.0, "internal smallness lost during iteration");
    if (!fKi.empty()) {
      auto hom = solve_homological(h, cur, L, K, alpha, D, ri, si);
      srep.phi_norm = hom.phi_norm;
      srep.residual = hom.residual;
      auto lie = lie_remainder(cur, fKi, hom.phi, D, ri1, si1, ri - ri1,
                               si - si1, hom.phi_norm, srep.f_norm);
      srep.lie_orders = lie.orders;
      cur = (cur - fKi) + lie.f_star;
      srep.f_star_norm = weighted_norm(lie.f_star, D, ri1, si1).certified;
      srep.f_star_bound = 2.0 * srep.theta_check * srep.f_norm;
      rep.generators.push_back(hom.phi);
    } else {
      StateFunction id_phi;
      id_phi.n = f.n;
      rep.generators.push_back(id_phi);
    }
    rep.step_reports.push_back(srep);
  }

  rep.f_flat = (f - truncate(project_perp(f, L), K));
  rep.f_star = cur - rep.f_flat;
  rep.g = project(cur, L);
  rep.f_star_star = cur - rep.g;
  rep.accepted = true;

  rep.f_star_norm = weighted_norm(rep.f_star, D, rep.r_star, rep.s_star).certified;
  rep.f_star_bound = 2.0 * rep.theta_star * rep.f_norm;
  const StateFunction low = truncate(project_perp(rep.f_star, L), K);
  rep.low_mode_norm = weighted_norm(low, D, rep.r_star, rep.s_star).certified;
  rep.low_mode_log_bound =
      K * std::log(rep.theta_star / 2.0) + std::log(rep.f_norm);
  const bool first = rep.f_star_norm <= rep.f_star_bound;
  const bool second = rep.low_mode_norm == 0.0 ||
                      std::log(rep.low_mode_norm) <= rep.low_mode_log_bound;
  rep.bounds_hold = first && second;

  rep.strong_smallness = rep.theta_star <= std::exp(-s) / 2.0 && K >= 2.0;
  rep.g_shift_norm =
      weighted_norm(rep.g - project(f, L), D, rep.r_star, rep.s_star).certified;
  rep.f_ss_norm =
      weighted_norm(rep.f_star_star, D, rep.r_star, s / 2.0).certified;
  rep.f_ss_bound = 2.0 * std::exp(-K * s / 2.0) * rep.f_norm;
  return rep;
}

// ------------------------------------------------------------------ flows

// The holomorphic vector field (-phi_x, phi_y) is integrated on a real state
// of size 4n holding Re/Im parts, so the controlled stepper's error norm
// stays real-valued.
void flow_time1(const StateFunction& phi, CVec& y, CVec& x) {
  namespace od = boost::numeric::odeint;
  using state_t = std::vector<double>;
  const int n = phi.n;
  state_t st(4 * n);
  for (int j = 0; j < n; ++j) {
    st[j] = y[j].real();
    st[n + j] = y[j].imag();
    st[2 * n + j] = x[j].real();
    st[3 * n + j] = x[j].imag();
  }
  auto rhs = [&](const state_t& q, state_t& dq, double) {
    CVec yy(n), xx(n);
    for (int j = 0; j < n; ++j) {
      yy[j] = Cplx{q[j], q[n + j]};
      xx[j] = Cplx{q[2 * n + j], q[3 * n + j]};
    }
    const auto gy = grad_y_impl(phi, yy, xx);
    const auto gx = grad_x_impl(phi, yy, xx);
    for (int j = 0; j < n; ++j) {
      dq[j] = -gx[j].real();
      dq[n + j] = -gx[j].imag();
      dq[2 * n + j] = gy[j].real();
      dq[3 * n + j] = gy[j].imag();
    }
  };
  od::integrate_adaptive(
      od::make_controlled(1e-13, 1e-13,
                          od::runge_kutta_fehlberg78<state_t>()),
      rhs, st, 0.0, 1.0, 0.05);
  for (int j = 0; j < n; ++j) {
    y[j] = Cplx{st[j], st[n + j]};
    x[j] = Cplx{st[2 * n + j], st[3 * n + j]};
  }
}

// Real phase points stay real for real generators (coefficients conjugate
// under k -> -k); the imaginary parts are integrated anyway and dropped.
void flow_time1(const StateFunction& phi, Vec& y, Vec& x) {
  CVec cy(y.size()), cx(x.size());
  for (std::size_t j = 0; j < y.size(); ++j) cy[j] = y[j];
  for (std::size_t j = 0; j < x.size(); ++j) cx[j] = x[j];
  flow_time1(phi, cy, cx);
  for (std::size_t j = 0; j < y.size(); ++j) y[j] = cy[j].real();
  for (std::size_t j = 0; j < x.size(); ++j) x[j] = cx[j].real();
}

void transform_point(const NormalFormReport& rep, Vec& y, Vec& x) {
  for (auto it = rep.generators.rbegin(); it != rep.generators.rend(); ++it)
    if (!it->empty()) flow_time1(*it, y, x);
}

// ------------------------------------------------------ effective profile

namespace {

// Multiplies the jk mode by e^{i j sigma} (signed j), i.e. translates the
// angle variable t = k.x of a line-lattice function by sigma.
StateFunction translate_line(const StateFunction& f, const IntVec& k,
                             double sigma) {
  std::size_t i0 = 0;
  while (i0 < k.size() && k[i0] == 0) ++i0;
  StateFunction out;
  out.n = f.n;
  for (const auto& [m, fn] : f.modes) {
    if (is_zero_vec(m)) {
      out.modes.emplace(m, fn);
      continue;
    }
    const double j = static_cast<double>(m[i0]) / static_cast<double>(k[i0]);
    out.modes.emplace(m, std::exp(Cplx{0.0, 1.0} * (j * sigma)) * fn);
  }
  return out;
}

}  // namespace

ProfileComparison effective_profile(const NormalFormReport& rep,
                                    const potential::LatticeProfile& prof,
                                    double delta_gen) {
  require(rep.accepted, "effective_profile needs an accepted normal form");
  require(rep.lattice.generator.has_value(),
          "effective_profile needs a Z k normal form");
  const IntVec& k = *rep.lattice.generator;
  const double w1 = l1_norm(k);

  // profile harmonics after the phase translation making F_1 = -|f_1|
  auto harmonic = [&](int j) -> Cplx {
    auto it = prof.F.c.find(j);
    if (it == prof.F.c.end()) return {0.0, 0.0};
    return it->second;
  };
  auto translated = [&](int j) -> Cplx {
    return harmonic(j) *
           std::exp(Cplx{0.0, 1.0} * (double(j) * prof.phase_shift));
  };
  ProfileComparison out;
  out.fk_abs = std::abs(harmonic(1));
  require(out.fk_abs > 0, "effective_profile: empty first harmonic");
  require(std::abs(translated(1) + out.fk_abs) <= 1e-10 * out.fk_abs,
          "profile translation did not normalize the first harmonic");

  out.Ks = potential::genericity_threshold(rep.s, delta_gen, cal::genericity_c);
  out.delta_k = w1 <= out.Ks ? 1.0 : 2.0 * out.fk_abs;

  // P_L f reconstructed from the report; its jk harmonics must match the
  // profile (guards against a mismatched potential/profile pair).
  const StateFunction PLf = project(rep.f_flat, rep.lattice);
  int jmax = 0;
  for (const auto& [m, fn] : rep.g.modes)
    jmax = std::max(jmax, int(std::round(l1_norm(m) / w1)));
  std::size_t i0 = 0;
  while (i0 < k.size() && k[i0] == 0) ++i0;
  const double scale_eps = rep.f_norm > 0 ? rep.f_norm : 1.0;
  for (const auto& [m, fn] : PLf.modes) {
    if (is_zero_vec(m)) continue;
    const int aj = int(std::round(l1_norm(m) / w1));
    jmax = std::max(jmax, aj);
    require(fn.terms.size() == 1 && fn.terms.front().pows.empty(),
            "effective_profile: P_L f is not constant in y");
    // the stored mode is +-j k; match against the corresponding harmonic
    const bool positive = (m[i0] > 0) == (k[i0] > 0);
    const Cplx want = positive ? harmonic(aj) : std::conj(harmonic(aj));
    require(std::abs(fn.terms.front().c - want) <= 1e-9 * scale_eps,
            "effective_profile: profile does not match the normal form input");
  }

  out.gf_norm = rep.g_shift_norm;
  out.gf_bound = 2.0 * rep.theta;

  // R = G~/(2|f_k|) + cos in the translated angle, zero-mean part only
  // (the angle average moves into the integrable piece of the reduction).
  StateFunction R =
      (1.0 / (2.0 * out.fk_abs)) * translate_line(rep.g, k, prof.phase_shift);
  IntVec mk(k.size());
  for (std::size_t i = 0; i < k.size(); ++i) mk[i] = -k[i];
  R.add_mode(k, CoefFn::constant({0.5, 0.0}));
  R.add_mode(mk, CoefFn::constant({0.5, 0.0}));
  R.modes.erase(IntVec(k.size(), 0));
  R.simplify();
  // raw sup: the dominating modes of R carry constant coefficients, which
  // the sample cloud evaluates exactly; the certified inflation would
  // overshoot the bound in the G -> F limit where both sides coincide
  out.residual_norm =
      weighted_norm(R, rep.domain, rep.r_star, rep.s / 3.0).raw;

  // Certified pieces: the high profile harmonics are explicit, the G - F
  // deviation decays like e^{-|j| w1 s_*} from its weighted norm.
  double hi_F = 0;
  for (int j = 2; j <= jmax + 1; ++j)
    hi_F = std::max(hi_F, std::abs(harmonic(j)) * std::exp(w1 * rep.s / 3.0 * j));
  const double gap = rep.s_star - rep.s / 3.0;
  require(gap > 0, "effective_profile: angle width collapsed");
  out.residual_bound =
      (hi_F + out.gf_norm * (std::exp(-2.0 * w1 * gap) + std::exp(-w1 * gap))) /
      (2.0 * out.fk_abs);
  out.within = out.residual_norm <= out.residual_bound &&
               out.gf_norm <= out.gf_bound;
  return out;
}

potential::TrigSeries profile_at(const NormalFormReport& rep, const Vec& I) {
  require(rep.lattice.generator.has_value(), "profile_at needs a Z k normal form");
  const IntVec& k = *rep.lattice.generator;
  std::size_t i0 = 0;
  while (i0 < k.size() && k[i0] == 0) ++i0;
  potential::TrigSeries out;
  for (const auto& [m, fn] : rep.g.modes) {
    const Cplx v = fn.eval(I);
    if (is_zero_vec(m)) {
      out.mean = v.real();
      continue;
    }
    const Int j = m[i0] / k[i0];
    if (j > 0) out.c[static_cast<int>(j)] = v;
  }
  return out;
}

// ------------------------------------------------------------------- json

std::string report_to_json(const NormalFormReport& rep) {
  nlohmann::json j;
  j["accepted"] = rep.accepted;
  j["n"] = rep.n;
  j["steps"] = rep.steps;
  j["r"] = rep.r;
  j["s"] = rep.s;
  j["r_star"] = rep.r_star;
  j["s_star"] = rep.s_star;
  j["alpha"] = rep.alpha;
  j["K"] = rep.K;
  j["f_norm"] = rep.f_norm;
  j["theta_star"] = rep.theta_star;
  j["theta"] = rep.theta;
  j["f_star_norm"] = rep.f_star_norm;
  j["f_star_bound"] = rep.f_star_bound;
  j["low_mode_norm"] = rep.low_mode_norm;
  j["low_mode_log_bound"] = rep.low_mode_log_bound;
  j["bounds_hold"] = rep.bounds_hold;
  j["strong_smallness"] = rep.strong_smallness;
  j["g_shift_norm"] = rep.g_shift_norm;
  j["f_ss_norm"] = rep.f_ss_norm;
  j["f_ss_bound"] = rep.f_ss_bound;
  if (rep.lattice.generator) {
    std::vector<long long> gen;
    for (const Int& v : *rep.lattice.generator)
      gen.push_back(static_cast<long long>(v));
    j["lattice"] = gen;
  } else {
    j["lattice"] = "trivial";
  }
  auto& steps = j["step_reports"] = nlohmann::json::array();
  for (const auto& sr : rep.step_reports) {
    steps.push_back({{"theta_check", sr.theta_check},
                     {"f_norm", sr.f_norm},
                     {"fK_norm", sr.fK_norm},
                     {"phi_norm", sr.phi_norm},
                     {"f_star_norm", sr.f_star_norm},
                     {"f_star_bound", sr.f_star_bound},
                     {"lie_orders", sr.lie_orders},
                     {"residual", sr.residual},
                     {"r_next", sr.r_next},
                     {"s_next", sr.s_next}});
  }
  return j.dump(2);
}

}  // namespace kam::nf
