// SPDX-License-Identifier: Apache-2.0
// Exact rational helpers backing the interpreter's statistics and rounding.
#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cstdint>
#include <optional>
#include <span>

namespace toolr1::exact {

using Int = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

/// Exact value of a finite double.
Rational from_double(double v);

/// Correctly rounded (nearest, ties to even) conversion.
double to_double(const Rational& q);

/// Correctly rounded square root of a non-negative rational.
double sqrt_to_double(const Rational& q);

/// Round-half-even of a rational to an integer.
Int round_half_even(const Rational& q);

/// Population and sample variance of exact data, as rationals.
Rational mean(std::span<const Rational> data);
Rational sum_sq_dev(std::span<const Rational> data);

}  // namespace toolr1::exact
