#include "mwpcl/rational.hpp"

#include <algorithm>
#include <cctype>
#include <stdexcept>

namespace mwpcl {

namespace {

using boost::multiprecision::cpp_int;

bool all_digits(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

Rational parse_unsigned_decimal(std::string_view s, std::string_view whole) {
  auto dot = s.find('.');
  std::string_view int_part = dot == std::string_view::npos ? s : s.substr(0, dot);
  std::string_view frac_part = dot == std::string_view::npos ? std::string_view{} : s.substr(dot + 1);
  if (int_part.empty() && frac_part.empty()) {
    throw std::invalid_argument("malformed number: '" + std::string(whole) + "'");
  }
  if ((!int_part.empty() && !all_digits(int_part)) || (dot != std::string_view::npos && !frac_part.empty() && !all_digits(frac_part))) {
    throw std::invalid_argument("malformed number: '" + std::string(whole) + "'");
  }
  cpp_int numerator = 0;
  for (char c : int_part) numerator = numerator * 10 + (c - '0');
  cpp_int denominator = 1;
  for (char c : frac_part) {
    numerator = numerator * 10 + (c - '0');
    denominator *= 10;
  }
  return Rational(numerator, denominator);
}

}  // namespace

Rational parse_rational(std::string_view text) {
  std::string_view s = text;
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s.remove_prefix(1);
  }
  if (s.empty()) throw std::invalid_argument("malformed number: '" + std::string(text) + "'");

  Rational value;
  auto slash = s.find('/');
  if (slash != std::string_view::npos) {
    Rational num = parse_unsigned_decimal(s.substr(0, slash), text);
    Rational den = parse_unsigned_decimal(s.substr(slash + 1), text);
    if (den == 0) throw std::invalid_argument("zero denominator: '" + std::string(text) + "'");
    value = num / den;
  } else {
    value = parse_unsigned_decimal(s, text);
  }
  return negative ? Rational(-value) : value;
}

std::string rational_to_string(const Rational& value) {
  using boost::multiprecision::denominator;
  using boost::multiprecision::numerator;
  if (denominator(value) == 1) return numerator(value).str();
  return numerator(value).str() + "/" + denominator(value).str();
}

std::string rational_to_decimal(const Rational& value) {
  using boost::multiprecision::denominator;
  using boost::multiprecision::numerator;
  cpp_int den = denominator(value);
  int twos = 0;
  int fives = 0;
  while (den % 2 == 0) {
    den /= 2;
    ++twos;
  }
  while (den % 5 == 0) {
    den /= 5;
    ++fives;
  }
  if (den != 1) {
    throw std::domain_error("value " + rational_to_string(value) + " has no terminating decimal form");
  }
  const int places = std::max(twos, fives);
  cpp_int num = numerator(value);
  const bool negative = num < 0;
  if (negative) num = -num;
  cpp_int scale = 1;
  for (int i = 0; i < places; ++i) scale *= 10;
  cpp_int scaled = num * scale / denominator(value);
  std::string digits = scaled.str();
  if (places > 0) {
    if (static_cast<int>(digits.size()) <= places) {
      digits.insert(0, static_cast<std::size_t>(places + 1 - static_cast<int>(digits.size())), '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(places), ".");
  }
  return negative ? "-" + digits : digits;
}

double rational_to_double(const Rational& value) { return value.convert_to<double>(); }

}  // namespace mwpcl
