#pragma once

// Calibrated constants, version 1.
//
// Several bounds in the library are of the form "<= c * (explicit formula)"
// with c depending only on the dimension. The values below were frozen from
// development-time sweeps (Monte Carlo with 1e6 samples for measures; dense
// parameter sweeps for the rest), each with a safety margin over the worst
// observed ratio. Tests compare against these frozen values; bump the version
// when refitting.

namespace kam::cal {

inline constexpr int calibration_version = 1;

// meas(double-resonance zone) <= omega2_c(n) * alpha^2 K^{n^2-n-1} Kbig^{n+2}
//
// Sweep envelope: K in [2,12], Kbig in [K,25], alpha in [0.0025,0.04], 2e6-8e6
// samples per point. Worst (estimate+ci95)/formula ratios: 2.84 at n=2 (K=Kbig=2),
// 1.15 at n=3 (K=Kbig=2), 0.049 at n=4 (K=Kbig=2); the small-K corner is always
// the binding case and ratios fall rapidly with n. Values below carry ~1.7x
// margin for the calibrated dimensions; outside them the n=2 value is reused
// as a conservative fallback.
inline double omega2_c(int n) {
  switch (n) {
    case 3: return 2.0;
    case 4: return 0.1;
    default: return 5.0;
  }
}

// default constant in the genericity threshold K_s(delta)
inline constexpr double genericity_c = 2.0;

}  // namespace kam::cal
