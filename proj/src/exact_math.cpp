// SPDX-License-Identifier: Apache-2.0
#include "exact_math.hpp"

#include <bit>
#include <cmath>
#include <limits>

namespace toolr1::exact {

namespace mp = boost::multiprecision;

Rational from_double(double v) {
  int exp = 0;
  double frac = std::frexp(v, &exp);
  // frac * 2^53 is an exact integer.
  auto mant = static_cast<std::int64_t>(std::ldexp(frac, 53));
  exp -= 53;
  Int num = mant;
  Int den = 1;
  if (exp >= 0) {
    num <<= exp;
  } else {
    den <<= -exp;
  }
  return Rational(num, den);
}

double to_double(const Rational& q) {
  if (q == 0) return 0.0;
  bool negative = q < 0;
  Int num = mp::abs(mp::numerator(q));
  Int den = mp::denominator(q);

  // Scale so the truncated quotient carries at least 55 significant bits.
  long k = static_cast<long>(mp::msb(num)) - static_cast<long>(mp::msb(den));
  long s = 55 - k;
  if (s >= 0) {
    num <<= s;
  } else {
    den <<= -s;
  }
  Int quot, rem;
  mp::divide_qr(num, den, quot, rem);
  bool sticky = rem != 0;

  long lead = static_cast<long>(mp::msb(quot));
  long drop = lead + 1 - 53;
  long lead_exp = lead - s;
  constexpr long kMinExp = -1022;
  if (lead_exp < kMinExp) drop += kMinExp - lead_exp;
  if (drop > lead + 1) return negative ? -0.0 : 0.0;

  Int half = Int(1) << (drop - 1);
  Int discarded = quot & ((Int(1) << drop) - 1);
  Int kept = quot >> drop;
  if (discarded > half || (discarded == half && (sticky || mp::bit_test(kept, 0)))) ++kept;
  double result = std::ldexp(kept.convert_to<double>(), static_cast<int>(drop - s));
  return negative ? -result : result;
}

double sqrt_to_double(const Rational& q) {
  if (q <= 0) return 0.0;
  double y = std::sqrt(to_double(q));
  auto cmp_mid = [&](double lo, double hi) {
    Rational mid = (from_double(lo) + from_double(hi)) / 2;
    Rational sq = mid * mid;
    return q < sq ? -1 : (q > sq ? 1 : 0);
  };
  for (int iter = 0; iter < 8; ++iter) {
    double up = std::nextafter(y, std::numeric_limits<double>::infinity());
    int c = cmp_mid(y, up);
    if (c > 0) {
      y = up;
      continue;
    }
    double down = std::nextafter(y, 0.0);
    int d = cmp_mid(down, y);
    if (d < 0) {
      y = down;
      continue;
    }
    // Exact ties go to the even significand.
    if (c == 0 && (std::bit_cast<std::uint64_t>(y) & 1u)) y = up;
    if (d == 0 && (std::bit_cast<std::uint64_t>(y) & 1u)) y = down;
    break;
  }
  return y;
}

Int round_half_even(const Rational& q) {
  Int num = mp::numerator(q);
  Int den = mp::denominator(q);
  Int quot, rem;
  mp::divide_qr(num, den, quot, rem);
  // divide_qr truncates toward zero; make it floor.
  if (rem < 0) {
    quot -= 1;
    rem += den;
  }
  Int twice = rem * 2;
  if (twice > den || (twice == den && mp::bit_test(mp::abs(quot), 0))) quot += 1;
  return quot;
}

Rational mean(std::span<const Rational> data) {
  Rational total = 0;
  for (const auto& x : data) total += x;
  return total / static_cast<long>(data.size());
}

Rational sum_sq_dev(std::span<const Rational> data) {
  Rational mu = mean(data);
  Rational total = 0;
  for (const auto& x : data) {
    Rational d = x - mu;
    total += d * d;
  }
  return total;
}

}  // namespace toolr1::exact
