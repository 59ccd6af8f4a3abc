#pragma once

#include <optional>

#include "kam/common.hpp"
#include "kam/lattice.hpp"

namespace kam::zones {

enum class ParamMode { paper_law, decoupled };

struct ZoneParams {
  int n = 0;
  std::optional<double> epsilon;
  double nu = 0;
  double K = 0;      // resonance cutoff
  double Kbig = 0;   // second cutoff for the non-resonance tests
  double alpha = 0;  // resonance width scale
  double ln_alpha = 0;
  ParamMode mode = ParamMode::decoupled;
};

// K = log^2(1/eps), Kbig = K^2, alpha = sqrt(eps) K^{nu+1}; logs first so the
// law survives tiny eps. Requires eps < 1/e and small enough that K >= 2.
ZoneParams params_from_epsilon(int n, double epsilon, double nu);

ZoneParams decoupled_params(int n, double K, double Kbig, double alpha, double nu);

// Precomputed frames and non-resonance test vectors for a parameter set.
// Immutable after construction; membership tests share it freely.
struct ZoneContext {
  ZoneParams params;

  struct NonResTest {
    IntVec l;      // primitive representative, |l|_1 <= Kbig, l != k
    Vec ld;        // l as doubles
    Vec w;         // exact integer vector Ahat (|k|^2 l - (l.k) k), stored as doubles
    double lnorm;  // ||l||_2
  };
  struct KData {
    lattice::ResonanceFrame frame;
    Vec kd;
    double knorm;
    std::vector<NonResTest> tests;
  };
  std::vector<KData> kdata;  // one per k in the primitive 1-norm ball of radius K
};

// Throws infeasible-parameters when the (2 Kbig + 1)^n enumeration would
// exceed 1e8 entries (paper-law scales; use decoupled parameters instead).
ZoneContext build_context(const ZoneParams& params);

struct ZoneVerdict {
  Vec y;
  bool in_omega0 = false;  // min |y.k| >= alpha/2 over the resonance cutoff
  bool in_omega1 = false;  // simple-resonance zone of the witness
  bool in_omega2 = false;  // double-resonance zone of the witness
  std::optional<IntVec> witness_k;  // minimizing resonance when not omega0
  bool zhat_member = false;
  double min_resonance = 0;
};

// Procedural classification: omega0 by the resonance minimum, otherwise the
// minimizing k decides omega1/omega2 through the hat-domain window and the
// secondary non-resonance inequality. Boundary ties (1e-14 relative) resolve
// toward the non-resonant side.
ZoneVerdict classify_point(const Vec& y, const ZoneContext& ctx);

// Exact membership in the union of double-resonance zones over all k (the
// per-witness flag in ZoneVerdict only inspects the minimizing k).
bool in_omega2_exact(const Vec& y, const ZoneContext& ctx);

struct CoveringReport {
  long samples = 0;
  long violations = 0;
  double frac0 = 0, frac1 = 0, frac2 = 0;
  std::optional<Vec> first_violation;
  std::optional<IntVec> first_violation_vector;  // the k or l whose inequality failed
};

struct covering_failure : std::runtime_error {
  CoveringReport report;
  explicit covering_failure(CoveringReport r);
};

// Uniform samples in the unit ball; asserts every sample is covered, that
// omega0 samples satisfy the full non-resonance inequality and omega1 samples
// the secondary one. verify_alpha_scale != 1 re-checks the inequalities with
// a scaled alpha (negative control: scaling up must produce violations).
// Throws covering_failure when any violation is found.
CoveringReport covering_check(const ZoneContext& ctx, long samples, std::uint64_t seed,
                              double verify_alpha_scale = 1.0);

struct MeasureReport {
  long samples = 0, hits = 0;
  double estimate = 0;   // measure of the double-resonance union inside the ball
  double ci95 = 0;
  double bound = 0;      // calibrated analytic bound
  double bound_raw = 0;  // same formula with c = 1
  double c_used = 0;
  bool within_bound = false;  // estimate - ci95 <= bound
};

MeasureReport omega2_measure(const ZoneContext& ctx, long samples, std::uint64_t seed);

}  // namespace kam::zones
