#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qfeed {

namespace detail {

using u128 = unsigned __int128;
using i128 = __int128;

inline i128 gcd128(i128 a, i128 b) {
  if (a < 0) a = -a;
  if (b < 0) b = -b;
  while (b != 0) {
    i128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

struct U256 {
  u128 hi = 0;
  u128 lo = 0;
};

inline U256 mul_u128(u128 x, u128 y) {
  const std::uint64_t xl = static_cast<std::uint64_t>(x);
  const std::uint64_t xh = static_cast<std::uint64_t>(x >> 64);
  const std::uint64_t yl = static_cast<std::uint64_t>(y);
  const std::uint64_t yh = static_cast<std::uint64_t>(y >> 64);
  const u128 ll = static_cast<u128>(xl) * yl;
  const u128 lh = static_cast<u128>(xl) * yh;
  const u128 hl = static_cast<u128>(xh) * yl;
  const u128 hh = static_cast<u128>(xh) * yh;
  u128 mid = lh + hl;
  const bool mid_carry = mid < lh;
  U256 out;
  out.lo = ll + (mid << 64);
  const bool lo_carry = out.lo < ll;
  out.hi = hh + (mid >> 64) + (lo_carry ? 1 : 0);
  if (mid_carry) out.hi += static_cast<u128>(1) << 64;
  return out;
}

inline int cmp_u256(const U256& a, const U256& b) {
  if (a.hi != b.hi) return a.hi < b.hi ? -1 : 1;
  if (a.lo != b.lo) return a.lo < b.lo ? -1 : 1;
  return 0;
}

// sign of a*b - c*d for unsigned 128-bit operands
inline int cmp_prod(u128 a, u128 b, u128 c, u128 d) {
  return cmp_u256(mul_u128(a, b), mul_u128(c, d));
}

// Decomposes a finite double as m2 * 2^e2 with integer m2, |m2| < 2^53.
inline void split_double(double s, std::int64_t& m2, int& e2) {
  int e = 0;
  const double f = std::frexp(s, &e);
  m2 = static_cast<std::int64_t>(std::ldexp(f, 53));
  e2 = e - 53;
}

}  // namespace detail

// Exact rational with 64-bit numerator and denominator, always reduced,
// denominator > 0. Quantile levels and quantizer lattice levels are kept
// rational so cutoffs like floor(m*y) never drift across a float boundary.
class Rational {
 public:
  constexpr Rational() = default;

  Rational(std::int64_t num, std::int64_t den) {
    if (den == 0) throw std::invalid_argument("rational: zero denominator");
    if (den < 0) {
      num = -num;
      den = -den;
    }
    const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
    num_ = g != 0 ? num / g : 0;
    den_ = g != 0 ? den / g : 1;
  }

  static Rational from_int(std::int64_t v) { return Rational(v, 1); }

  // Best rational approximation with denominator <= max_den (continued
  // fractions with a semiconvergent check). Recovers intended rationals from
  // decimal float literals, e.g. from_double(0.3) == 3/10.
  static Rational from_double(double x, std::int64_t max_den = 1000000) {
    if (!std::isfinite(x)) throw std::invalid_argument("rational: non-finite value");
    if (max_den < 1) throw std::invalid_argument("rational: bad denominator cap");
    const bool neg = x < 0;
    long double ax = neg ? -static_cast<long double>(x) : static_cast<long double>(x);
    if (ax > 4.0e15L) throw std::invalid_argument("rational: magnitude too large");

    std::int64_t p0 = 1, q0 = 0;
    std::int64_t p1 = static_cast<std::int64_t>(std::floor(static_cast<double>(ax)));
    std::int64_t q1 = 1;
    long double frac = ax - static_cast<long double>(p1);
    while (frac > 0.0L) {
      const long double inv = 1.0L / frac;
      const long double af = std::floor(inv);
      if (af > 4.0e15L) break;
      const std::int64_t ai = static_cast<std::int64_t>(af);
      const detail::i128 q2 = static_cast<detail::i128>(ai) * q1 + q0;
      if (q2 > max_den) {
        const std::int64_t at = (max_den - q0) / q1;
        if (at >= 1) {
          const std::int64_t ps = at * p1 + p0;
          const std::int64_t qs = at * q1 + q0;
          const long double e_conv = std::fabs(ax - static_cast<long double>(p1) / q1);
          const long double e_semi = std::fabs(ax - static_cast<long double>(ps) / qs);
          if (e_semi < e_conv) {
            p1 = ps;
            q1 = qs;
          }
        }
        break;
      }
      const detail::i128 p2 = static_cast<detail::i128>(ai) * p1 + p0;
      if (p2 > std::numeric_limits<std::int64_t>::max()) break;
      p0 = p1;
      q0 = q1;
      p1 = static_cast<std::int64_t>(p2);
      q1 = static_cast<std::int64_t>(q2);
      frac = inv - af;
    }
    return Rational(neg ? -p1 : p1, q1);
  }

  // Accepts "p/q", integer, or decimal text. Decimals with at most six
  // fractional digits convert exactly; anything longer falls back to the
  // best approximation with denominator <= max_den.
  static Rational parse(std::string_view text, std::int64_t max_den = 1000000) {
    if (text.empty()) throw std::invalid_argument("rational: empty text");
    const auto slash = text.find('/');
    if (slash != std::string_view::npos) {
      const std::int64_t p = parse_int(text.substr(0, slash));
      const std::int64_t q = parse_int(text.substr(slash + 1));
      if (q <= 0) throw std::invalid_argument("rational: denominator must be positive");
      if (q > max_den) throw std::invalid_argument("rational: denominator exceeds cap");
      return Rational(p, q);
    }
    const auto dot = text.find('.');
    const bool has_exp = text.find_first_of("eE") != std::string_view::npos;
    if (!has_exp && dot != std::string_view::npos) {
      const std::string_view frac = text.substr(dot + 1);
      if (frac.size() <= 6) {
        std::string_view head = text.substr(0, dot);
        bool neg = false;
        if (!head.empty() && (head.front() == '-' || head.front() == '+')) {
          neg = head.front() == '-';
          head.remove_prefix(1);
        }
        const std::int64_t ip = head.empty() ? 0 : parse_int(head);
        std::int64_t den = 1;
        std::int64_t fp = 0;
        for (const char c : frac) {
          if (c < '0' || c > '9') throw std::invalid_argument("rational: bad decimal");
          fp = fp * 10 + (c - '0');
          den *= 10;
        }
        const std::int64_t num = ip * den + fp;
        return Rational(neg ? -num : num, den);
      }
    }
    if (!has_exp && dot == std::string_view::npos) return Rational(parse_int(text), 1);
    return from_double(std::stod(std::string(text)), max_den);
  }

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }
  bool is_zero() const { return num_ == 0; }

  bool in_unit_interval() const { return num_ >= 0 && num_ <= den_; }
  bool in_open_unit_interval() const { return num_ > 0 && num_ < den_; }

  // floor(scale * num/den), exact
  std::int64_t floor_scaled(std::int64_t scale) const {
    const detail::i128 t = static_cast<detail::i128>(scale) * num_;
    detail::i128 q = t / den_;
    if (t % den_ != 0 && t < 0) --q;
    return static_cast<std::int64_t>(q);
  }

  friend Rational operator+(const Rational& a, const Rational& b) {
    const detail::i128 n =
        static_cast<detail::i128>(a.num_) * b.den_ + static_cast<detail::i128>(b.num_) * a.den_;
    return reduce128(n, static_cast<detail::i128>(a.den_) * b.den_);
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    const detail::i128 n =
        static_cast<detail::i128>(a.num_) * b.den_ - static_cast<detail::i128>(b.num_) * a.den_;
    return reduce128(n, static_cast<detail::i128>(a.den_) * b.den_);
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return reduce128(static_cast<detail::i128>(a.num_) * b.num_,
                     static_cast<detail::i128>(a.den_) * b.den_);
  }
  Rational operator-() const {
    Rational r;
    r.num_ = -num_;
    r.den_ = den_;
    return r;
  }
  static Rational midpoint(const Rational& a, const Rational& b) {
    const detail::i128 n =
        static_cast<detail::i128>(a.num_) * b.den_ + static_cast<detail::i128>(b.num_) * a.den_;
    return reduce128(n, static_cast<detail::i128>(2) * a.den_ * b.den_);
  }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.num_ == b.num_ && a.den_ == b.den_;
  }
  friend bool operator<(const Rational& a, const Rational& b) {
    return static_cast<detail::i128>(a.num_) * b.den_ < static_cast<detail::i128>(b.num_) * a.den_;
  }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }

  // sign of (num/den - s), exact for every finite double s
  int compare_double(double s) const {
    if (std::isnan(s)) throw std::invalid_argument("rational: compare with NaN");
    if (std::isinf(s)) return s > 0 ? -1 : 1;
    if (s == 0.0) return num_ > 0 ? 1 : (num_ < 0 ? -1 : 0);
    if (num_ == 0) return s > 0 ? -1 : 1;
    const int sr = num_ > 0 ? 1 : -1;
    const int ss = s > 0 ? 1 : -1;
    if (sr != ss) return sr;

    std::int64_t m2 = 0;
    int e2 = 0;
    detail::split_double(s, m2, e2);
    const detail::u128 an = static_cast<detail::u128>(num_ < 0 ? -static_cast<detail::i128>(num_) : num_);
    const detail::u128 am = static_cast<detail::u128>(m2 < 0 ? -static_cast<detail::i128>(m2) : m2);
    const detail::u128 ad = static_cast<detail::u128>(den_);

    int cmp = 0;
    if (e2 >= 0) {
      // |num| vs |m2|*den*2^e2
      if (e2 >= 64) {
        cmp = -1;  // |s| >= 2^52 * 2^64, far beyond any int64 ratio
      } else {
        cmp = detail::cmp_prod(an, 1, am << e2, ad);
      }
    } else {
      const int sh = -e2;
      if (sh >= 127) {
        // |s| < 2^-74; nonzero int64 ratio magnitude is at least 2^-63
        cmp = 1;
      } else {
        cmp = detail::cmp_prod(an, static_cast<detail::u128>(1) << sh, am, ad);
      }
    }
    return sr > 0 ? cmp : -cmp;
  }

  std::string to_string() const {
    if (den_ == 1) return std::to_string(num_);
    return std::to_string(num_) + "/" + std::to_string(den_);
  }

 private:
  static Rational reduce128(detail::i128 n, detail::i128 d) {
    if (d == 0) throw std::invalid_argument("rational: zero denominator");
    if (d < 0) {
      n = -n;
      d = -d;
    }
    const detail::i128 g = detail::gcd128(n, d);
    if (g > 1) {
      n /= g;
      d /= g;
    }
    if (n > std::numeric_limits<std::int64_t>::max() || n < std::numeric_limits<std::int64_t>::min() ||
        d > std::numeric_limits<std::int64_t>::max()) {
      throw std::overflow_error("rational: overflow");
    }
    Rational r;
    r.num_ = static_cast<std::int64_t>(n);
    r.den_ = static_cast<std::int64_t>(d);
    return r;
  }

  static std::int64_t parse_int(std::string_view t) {
    if (t.empty()) throw std::invalid_argument("rational: bad integer");
    bool neg = false;
    std::size_t i = 0;
    if (t[0] == '-' || t[0] == '+') {
      neg = t[0] == '-';
      i = 1;
      if (t.size() == 1) throw std::invalid_argument("rational: bad integer");
    }
    std::int64_t v = 0;
    for (; i < t.size(); ++i) {
      const char c = t[i];
      if (c < '0' || c > '9') throw std::invalid_argument("rational: bad integer");
      if (v > (std::numeric_limits<std::int64_t>::max() - (c - '0')) / 10)
        throw std::overflow_error("rational: integer overflow");
      v = v * 10 + (c - '0');
    }
    return neg ? -v : v;
  }

  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

// floor(scale * (x - s)) computed exactly; s is an arbitrary finite double.
// Saturates to -1 below and to `scale` above, which is all callers need for
// the clamped binomial tail.
inline std::int64_t floor_scaled_diff(std::int64_t scale, const Rational& x, double s) {
  if (std::isnan(s)) throw std::invalid_argument("floor_scaled_diff: NaN breakpoint");
  if (s == 0.0 || std::isinf(s)) {
    if (std::isinf(s)) return s > 0 ? -1 : scale;
    return x.floor_scaled(scale);
  }
  if (std::fabs(s) >= 1.099511627776e12) {  // 2^40
    return s > 0 ? -1 : scale;
  }

  using detail::i128;
  using detail::u128;
  const i128 n1 = static_cast<i128>(scale) * x.num();
  const std::int64_t b = x.den();

  std::int64_t m2 = 0;
  int e2 = 0;
  detail::split_double(s, m2, e2);
  // strip trailing zero bits so tiny dyadics stay cheap
  while (m2 != 0 && (m2 & 1) == 0) {
    m2 >>= 1;
    ++e2;
  }
  const bool s_pos = m2 > 0;
  const u128 v = static_cast<u128>(s_pos ? static_cast<i128>(m2) : -static_cast<i128>(m2)) *
                 static_cast<u128>(scale);

  i128 qa = n1 / b;
  i128 ra = n1 % b;
  if (ra < 0) {
    ra += b;
    --qa;
  }

  if (e2 >= 0) {
    // scale*s is an exact integer; ra/b in [0,1) never moves the floor
    const i128 whole = static_cast<i128>(v) << e2;
    i128 out = s_pos ? qa - whole : qa + whole;
    if (out < -1) return -1;
    if (out > scale) return scale;
    return static_cast<std::int64_t>(out);
  }

  const int sh = -e2;
  u128 qb = 0;
  u128 rv = v;
  if (sh < 127) {
    qb = v >> sh;
    rv = v - (qb << sh);
  }

  const u128 rau = static_cast<u128>(ra);
  const u128 bu = static_cast<u128>(b);
  int frac_cmp;  // sign of (ra/b - rv/2^sh)
  if (sh >= 127) {
    // rv/2^sh < 2^-53 is below 1/b for any admissible denominator
    frac_cmp = ra > 0 ? 1 : (rv > 0 ? -1 : 0);
  } else {
    frac_cmp = detail::cmp_prod(rau, static_cast<u128>(1) << sh, rv, bu);
  }

  if (s_pos) {
    i128 out = qa - static_cast<i128>(qb);
    if (frac_cmp < 0) --out;
    if (out < -1) return -1;
    if (out > scale) return scale;
    return static_cast<std::int64_t>(out);
  }
  // s negative: value = qa + qb + ra/b + rv/2^sh, fractional sum in [0,2)
  i128 out = qa + static_cast<i128>(qb);
  bool carry = false;
  if (ra > 0 && rv > 0 && sh < 127) {
    // ra/b + rv/2^sh >= 1  <=>  ra*2^sh >= b*(2^sh - rv)
    const u128 comp = (static_cast<u128>(1) << sh) - rv;
    carry = detail::cmp_prod(rau, static_cast<u128>(1) << sh, bu, comp) >= 0;
  }
  if (carry) ++out;
  if (out < -1) return -1;
  if (out > scale) return scale;
  return static_cast<std::int64_t>(out);
}

}  // namespace qfeed
