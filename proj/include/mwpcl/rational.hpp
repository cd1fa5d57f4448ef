#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>
#include <string_view>

namespace mwpcl {

using Rational = boost::multiprecision::cpp_rational;

// Accepts "12", "0.25", "-3.5", "157/50" and "1e3"-free plain decimals.
// Throws std::invalid_argument on malformed input.
Rational parse_rational(std::string_view text);

// "p" or "p/q"
std::string rational_to_string(const Rational& value);

// Exact terminating decimal ("0.25", "3.14"). Throws std::domain_error when
// the denominator has prime factors other than 2 and 5.
std::string rational_to_decimal(const Rational& value);

double rational_to_double(const Rational& value);

}  // namespace mwpcl
