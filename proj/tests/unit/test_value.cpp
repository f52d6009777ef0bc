// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include "toolr1/value.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

using namespace toolr1;

TEST_CASE("floats render as shortest round-trip decimals") {
  CHECK(format_float(17.056) == "17.056");
  CHECK(format_float(5.744047619047619) == "5.744047619047619");
  CHECK(format_float(5.0) == "5.0");
  CHECK(format_float(-0.0) == "-0.0");
  CHECK(format_float(1e-5) == "1e-05");
  CHECK(format_float(0.0001) == "0.0001");
  CHECK(format_float(1e16) == "1e+16");
  CHECK(format_float(1234567890123456.0) == "1234567890123456.0");
  CHECK(format_float(1.5e300) == "1.5e+300");
  CHECK(format_float(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_float(-std::numeric_limits<double>::infinity()) == "-inf");
  CHECK(format_float(std::nan("")) == "nan");
}

TEST_CASE("rendered floats parse back to the same double") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int i = 0; i < 20000; ++i) {
    std::uint64_t b = bits(rng);
    double d;
    std::memcpy(&d, &b, sizeof d);
    if (!std::isfinite(d)) continue;
    double back = std::strtod(format_float(d).c_str(), nullptr);
    REQUIRE(back == d);
  }
}

TEST_CASE("render_value covers every variant") {
  CHECK(render_value(Value(6)) == "6");
  CHECK(render_value(Value(true)) == "True");
  CHECK(render_value(Value(false)) == "False");
  CHECK(render_value(Value(NoneType{})) == "None");
  CHECK(render_value(Value("Berkshire")) == "Berkshire");
  CHECK(render_value(Value(List{Value(1), Value("a"), Value(2.5), Value(NoneType{})})) == "[1, 'a', 2.5, None]");
  CHECK(render_value(Value(List{})) == "[]");
  CHECK(render_value(Value(List{Value("it's")})) == "[\"it's\"]");
  CHECK(repr_value(Value("a\nb")) == "'a\\nb'");
}
