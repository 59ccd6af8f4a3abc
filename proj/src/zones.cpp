#include "kam/zones.hpp"

#include <algorithm>
#include <cmath>

#include "kam/calibration.hpp"
#include "kam/potential.hpp"

namespace kam::zones {

namespace {

constexpr double tie = 1e-14;  // boundary ties resolve toward the non-resonant side

double dot(const Vec& a, const Vec& b) {
  double s = 0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

}  // namespace

ZoneParams params_from_epsilon(int n, double epsilon, double nu) {
  require(n >= 2, "zone params: dimension >= 2 required");
  require(epsilon > 0 && epsilon < std::exp(-1.0), "zone params: epsilon in (0, 1/e) required");
  require(nu > n + 1, "zone params: nu > n+1 required");
  ZoneParams p;
  p.n = n;
  p.epsilon = epsilon;
  p.nu = nu;
  const double lg = std::log(1.0 / epsilon);
  p.K = lg * lg;
  require(p.K >= 2, "zone params: epsilon too large (cutoff below 2)");
  p.Kbig = p.K * p.K;
  p.ln_alpha = 0.5 * std::log(epsilon) + (nu + 1) * std::log(p.K);
  p.alpha = std::exp(p.ln_alpha);
  p.mode = ParamMode::paper_law;
  return p;
}

ZoneParams decoupled_params(int n, double K, double Kbig, double alpha, double nu) {
  require(n >= 2, "zone params: dimension >= 2 required");
  require(K >= 2, "zone params: K >= 2 required");
  require(Kbig >= K, "zone params: Kbig >= K required");
  require(alpha > 0, "zone params: alpha > 0 required");
  require(nu > n + 1, "zone params: nu > n+1 required");
  ZoneParams p;
  p.n = n;
  p.nu = nu;
  p.K = K;
  p.Kbig = Kbig;
  p.alpha = alpha;
  p.ln_alpha = std::log(alpha);
  p.mode = ParamMode::decoupled;
  return p;
}

ZoneContext build_context(const ZoneParams& params) {
  const double count = std::pow(2 * params.Kbig + 1, params.n);
  require(count <= 1e8,
          "infeasible parameters: enumeration of the secondary cutoff ball exceeds 1e8 "
          "entries; use decoupled parameters");

  ZoneContext ctx;
  ctx.params = params;
  const auto ks = l1_ball_reps(params.n, params.K, /*primitive_only=*/true);
  const auto ls = l1_ball_reps(params.n, params.Kbig, /*primitive_only=*/true);

  ctx.kdata.reserve(ks.size());
  for (const IntVec& k : ks) {
    ZoneContext::KData kd;
    kd.frame = lattice::build_frame(k);
    kd.kd.resize(params.n);
    for (int i = 0; i < params.n; ++i) kd.kd[i] = static_cast<double>(k[i]);
    kd.knorm = l2_norm(k);

    const auto hat = lattice::UnimodularCompletion{kd.frame.A}.hat_rows();
    for (const IntVec& l : ls) {
      if (l == k) continue;  // both sign-normalized primitive, so Zk cap = {k}
      Int lk = 0;
      for (int i = 0; i < params.n; ++i) lk += l[i] * k[i];
      IntVec v(params.n);
      for (int i = 0; i < params.n; ++i) v[i] = kd.frame.kappa * l[i] - lk * k[i];
      const IntVec w = matvec(hat, v);
      ZoneContext::NonResTest t;
      t.l = l;
      t.ld.resize(params.n);
      for (int i = 0; i < params.n; ++i) t.ld[i] = static_cast<double>(l[i]);
      t.w.resize(params.n - 1);
      for (int i = 0; i + 1 < params.n; ++i) t.w[i] = static_cast<double>(w[i]);
      t.lnorm = l2_norm(l);
      kd.tests.push_back(std::move(t));
    }
    ctx.kdata.push_back(std::move(kd));
  }
  return ctx;
}

namespace {

// Zhat membership for a precomputed frame: hat window plus every secondary
// non-resonance inequality, ties toward membership (the non-resonant side).
bool zhat_member_of(const ZoneContext& ctx, const ZoneContext::KData& kd, const Vec& Jhat,
                    double alpha) {
  const double window = std::pow(ctx.params.K, ctx.params.n);
  if (!(norm2(Jhat) <= window * (1 + tie))) return false;
  const double base = 3 * alpha * ctx.params.Kbig * kd.knorm;
  for (const auto& t : kd.tests) {
    const double lhs = std::fabs(dot(Jhat, t.w));
    if (lhs < base * t.lnorm * (1 - tie)) return false;
  }
  return true;
}

bool in_hat_window(const ZoneContext& ctx, const Vec& Jhat) {
  return norm2(Jhat) <= std::pow(ctx.params.K, ctx.params.n) * (1 + tie);
}

}  // namespace

ZoneVerdict classify_point(const Vec& y, const ZoneContext& ctx) {
  require(static_cast<int>(y.size()) == ctx.params.n, "classify_point: dimension mismatch");
  require(norm2(y) < 1, "classify_point: point outside the unit ball");

  ZoneVerdict v;
  v.y = y;
  double best = std::numeric_limits<double>::infinity();
  const ZoneContext::KData* bk = nullptr;
  for (const auto& kd : ctx.kdata) {
    const double r = std::fabs(dot(kd.kd, y));
    if (r < best) {
      best = r;
      bk = &kd;
    }
  }
  require(bk != nullptr, "classify_point: empty resonance list");
  v.min_resonance = best;

  const double alpha = ctx.params.alpha;
  if (best >= 0.5 * alpha * (1 - tie)) {
    v.in_omega0 = true;
    return v;
  }

  v.witness_k = bk->frame.k;
  const auto [Jhat, Jn] = bk->frame.split(y);
  (void)Jn;  // |J_n| = |y.k|/kappa < alpha/(2 kappa) holds by the branch above
  v.zhat_member = zhat_member_of(ctx, *bk, Jhat, alpha);
  if (v.zhat_member) {
    v.in_omega1 = true;
  } else if (in_hat_window(ctx, Jhat)) {
    v.in_omega2 = true;
  }
  return v;
}

bool in_omega2_exact(const Vec& y, const ZoneContext& ctx) {
  for (const auto& kd : ctx.kdata) {
    const double r = std::fabs(dot(kd.kd, y));
    if (r >= ctx.params.alpha * (1 - tie)) continue;  // outside the J_n window
    const auto [Jhat, Jn] = kd.frame.split(y);
    (void)Jn;
    if (!in_hat_window(ctx, Jhat)) continue;
    if (!zhat_member_of(ctx, kd, Jhat, ctx.params.alpha)) return true;
  }
  return false;
}

covering_failure::covering_failure(CoveringReport r)
    : std::runtime_error("covering check failed: " + std::to_string(r.violations) +
                         " violation(s) in " + std::to_string(r.samples) + " samples"),
      report(std::move(r)) {}

CoveringReport covering_check(const ZoneContext& ctx, long samples, std::uint64_t seed,
                              double verify_alpha_scale) {
  CoveringReport rep;
  rep.samples = samples;
  const int n = ctx.params.n;
  const double va = ctx.params.alpha * verify_alpha_scale;
  long c0 = 0, c1 = 0, c2 = 0;

  for (long i = 0; i < samples; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    Vec y = rng.ball(n, 1.0);
    if (norm2(y) >= 1.0) y.assign(n, 0.0);

    const ZoneVerdict v = classify_point(y, ctx);
    const auto violate = [&](const IntVec& vec) {
      ++rep.violations;
      if (!rep.first_violation) {
        rep.first_violation = y;
        rep.first_violation_vector = vec;
      }
    };

    if (v.in_omega0) {
      ++c0;
      // complete non-resonance at the verification scale
      for (const auto& kd : ctx.kdata)
        if (std::fabs(dot(kd.kd, y)) < 0.5 * va * (1 - tie)) {
          violate(kd.frame.k);
          break;
        }
    } else if (v.in_omega1) {
      ++c1;
      // non-resonance modulo the witness lattice at the verification scale
      const auto& kd = *std::find_if(ctx.kdata.begin(), ctx.kdata.end(), [&](const auto& e) {
        return e.frame.k == *v.witness_k;
      });
      const double floor_l = 2 * va * ctx.params.Kbig / kd.knorm;
      for (const auto& t : kd.tests)
        if (std::fabs(dot(t.ld, y)) < floor_l * (1 - tie)) {
          violate(t.l);
          break;
        }
    } else if (v.in_omega2) {
      ++c2;
      if (!(v.min_resonance < va * (1 + tie))) violate(*v.witness_k);
    } else {
      violate(v.witness_k ? *v.witness_k : IntVec{});
    }
  }

  if (samples > 0) {
    rep.frac0 = static_cast<double>(c0) / samples;
    rep.frac1 = static_cast<double>(c1) / samples;
    rep.frac2 = static_cast<double>(c2) / samples;
  }
  if (rep.violations > 0) throw covering_failure(rep);
  return rep;
}

MeasureReport omega2_measure(const ZoneContext& ctx, long samples, std::uint64_t seed) {
  MeasureReport rep;
  rep.samples = samples;
  const int n = ctx.params.n;
  for (long i = 0; i < samples; ++i) {
    Rng rng(seed, static_cast<std::uint64_t>(i));
    Vec y = rng.ball(n, 1.0);
    if (norm2(y) >= 1.0) y.assign(n, 0.0);
    if (in_omega2_exact(y, ctx)) ++rep.hits;
  }
  const double vol = unit_ball_volume(n);
  const double p = samples > 0 ? static_cast<double>(rep.hits) / samples : 0.0;
  rep.estimate = vol * p;
  rep.ci95 = samples > 0 ? vol * 1.96 * std::sqrt(p * (1 - p) / samples) : 0.0;
  rep.c_used = cal::omega2_c(n);
  rep.bound_raw = sqr(ctx.params.alpha) * std::pow(ctx.params.K, n * n - n - 1) *
                  std::pow(ctx.params.Kbig, n + 2);
  rep.bound = rep.c_used * rep.bound_raw;
  rep.within_bound = rep.estimate - rep.ci95 <= rep.bound;
  return rep;
}

}  // namespace kam::zones
