#pragma once

#include <cmath>
#include <limits>
#include <ostream>

namespace kam {

// Signed log-magnitude real: value = sign * exp(lnmag).
//
// The measure/threshold chains multiply quantities like eps^(|log eps|^3)
// whose magnitudes leave double range around eps ~ 1e-9, while their log
// magnitudes stay below ~1e12 for every eps the library accepts. All budget
// arithmetic therefore happens on (sign, lnmag) pairs and only the logs are
// ever reported.
class LogReal {
 public:
  LogReal() : sign_(0), lnmag_(-std::numeric_limits<double>::infinity()) {}

  static LogReal from_log(double lnmag, int sign = 1) {
    LogReal r;
    if (sign == 0) return r;
    r.sign_ = sign > 0 ? 1 : -1;
    r.lnmag_ = lnmag;
    return r;
  }

  static LogReal from_double(double x) {
    LogReal r;
    if (x == 0) return r;
    r.sign_ = x > 0 ? 1 : -1;
    r.lnmag_ = std::log(std::fabs(x));
    return r;
  }

  int sign() const { return sign_; }
  bool is_zero() const { return sign_ == 0; }
  // natural log of |value|; -inf for zero
  double lnmag() const { return lnmag_; }

  double to_double() const {
    if (sign_ == 0) return 0.0;
    return sign_ * std::exp(lnmag_);
  }

  LogReal operator-() const { return from_log(lnmag_, -sign_); }

  LogReal abs() const { return sign_ == 0 ? LogReal() : from_log(lnmag_, 1); }

  friend LogReal operator*(const LogReal& a, const LogReal& b) {
    if (a.sign_ == 0 || b.sign_ == 0) return LogReal();
    return from_log(a.lnmag_ + b.lnmag_, a.sign_ * b.sign_);
  }

  friend LogReal operator/(const LogReal& a, const LogReal& b) {
    if (b.sign_ == 0) throw std::domain_error("LogReal: division by zero");
    if (a.sign_ == 0) return LogReal();
    return from_log(a.lnmag_ - b.lnmag_, a.sign_ * b.sign_);
  }

  // |a|^p * sign rules only defined for positive base
  LogReal pow(double p) const {
    if (sign_ == 0) return p == 0 ? from_double(1.0) : LogReal();
    if (sign_ < 0) throw std::domain_error("LogReal: pow of negative value");
    return from_log(lnmag_ * p, 1);
  }

  friend LogReal operator+(const LogReal& a, const LogReal& b) {
    if (a.sign_ == 0) return b;
    if (b.sign_ == 0) return a;
    const LogReal &big = a.lnmag_ >= b.lnmag_ ? a : b;
    const LogReal &small = a.lnmag_ >= b.lnmag_ ? b : a;
    const double d = small.lnmag_ - big.lnmag_;  // <= 0
    if (a.sign_ == b.sign_) return from_log(big.lnmag_ + std::log1p(std::exp(d)), a.sign_);
    const double m = std::expm1(d);  // in (-1, 0]
    if (m == -1.0 || (d == 0.0))     // exact cancellation
      return LogReal();
    return from_log(big.lnmag_ + std::log(-m), big.sign_);
  }

  friend LogReal operator-(const LogReal& a, const LogReal& b) { return a + (-b); }

  friend bool operator<(const LogReal& a, const LogReal& b) {
    if (a.sign_ != b.sign_) return a.sign_ < b.sign_;
    if (a.sign_ == 0) return false;
    return a.sign_ > 0 ? a.lnmag_ < b.lnmag_ : a.lnmag_ > b.lnmag_;
  }
  friend bool operator>(const LogReal& a, const LogReal& b) { return b < a; }
  friend bool operator<=(const LogReal& a, const LogReal& b) { return !(b < a); }
  friend bool operator>=(const LogReal& a, const LogReal& b) { return !(a < b); }

  friend std::ostream& operator<<(std::ostream& os, const LogReal& x) {
    if (x.sign_ == 0) return os << "0";
    return os << (x.sign_ < 0 ? "-" : "") << "exp(" << x.lnmag_ << ")";
  }

 private:
  int sign_;
  double lnmag_;
};

inline LogReal log_min(const LogReal& a, const LogReal& b) { return a < b ? a : b; }
inline LogReal log_max(const LogReal& a, const LogReal& b) { return a < b ? b : a; }

}  // namespace kam
