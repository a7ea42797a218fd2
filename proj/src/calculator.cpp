#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "incisor/analysis.hpp"
#include "incisor/error.hpp"

namespace incisor {

namespace {

using boost::multiprecision::cpp_int;

const std::map<std::string, Rational, std::less<>>& unit_table() {
  static const std::map<std::string, Rational, std::less<>> table = [] {
    std::map<std::string, Rational, std::less<>> t;
    cpp_int k10 = 1000;
    cpp_int k2 = 1024;
    t["B"] = 1;
    t["KB"] = Rational(k10);
    t["MB"] = Rational(k10 * k10);
    t["GB"] = Rational(k10 * k10 * k10);
    t["TB"] = Rational(k10 * k10 * k10 * k10);
    t["KiB"] = Rational(k2);
    t["MiB"] = Rational(k2 * k2);
    t["GiB"] = Rational(k2 * k2 * k2);
    t["TiB"] = Rational(k2 * k2 * k2 * k2);
    return t;
  }();
  return table;
}

// value is in bytes^dim
struct Quantity {
  Rational value;
  int dim = 0;
};

class Parser {
 public:
  explicit Parser(std::string_view src) : src_(src) {}

  CalcResult run() {
    Quantity q = expr();
    skip_ws();
    std::optional<std::string> target;
    if (keyword("in") || keyword("to")) {
      skip_ws();
      target = unit_word();
      if (!target) error("expected a unit after 'in'");
    }
    skip_ws();
    if (pos_ != src_.size()) error("unexpected '" + std::string(src_.substr(pos_)) + "'");

    if (q.dim != 0 && q.dim != 1) error("result has dimension bytes^" + std::to_string(q.dim));
    CalcResult r;
    if (target) {
      if (q.dim != 1) error("cannot convert a dimensionless value to " + *target);
      r.exact = q.value / unit_table().find(*target)->second;
      r.unit = *target;
    } else if (q.dim == 1 && units_.size() == 1) {
      // One unit throughout: answer in it.
      r.exact = q.value / unit_table().find(*units_.begin())->second;
      r.unit = *units_.begin();
    } else {
      r.exact = q.value;
      r.unit = q.dim == 1 ? "B" : "";
    }
    return r;
  }

 private:
  [[noreturn]] void error(const std::string& msg) const {
    fail(errc::parse_error, "calculator: " + msg + " (at offset " + std::to_string(pos_) + ")");
  }

  void skip_ws() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }

  bool peek(char c) {
    skip_ws();
    return pos_ < src_.size() && src_[pos_] == c;
  }

  bool accept(std::string_view tok) {
    skip_ws();
    if (src_.substr(pos_, tok.size()) == tok) {
      pos_ += tok.size();
      return true;
    }
    return false;
  }

  bool keyword(std::string_view kw) {
    skip_ws();
    if (src_.substr(pos_, kw.size()) != kw) return false;
    std::size_t end = pos_ + kw.size();
    if (end < src_.size() && std::isalnum(static_cast<unsigned char>(src_[end]))) return false;
    pos_ = end;
    return true;
  }

  // A unit word at the cursor, consumed only when it names a known unit.
  std::optional<std::string> unit_word() {
    skip_ws();
    std::size_t end = pos_;
    while (end < src_.size() && std::isalpha(static_cast<unsigned char>(src_[end]))) ++end;
    std::string_view w = src_.substr(pos_, end - pos_);
    if (w.empty() || !unit_table().count(w)) return std::nullopt;
    pos_ = end;
    units_.emplace(w);
    return std::string(w);
  }

  Quantity expr() {
    Quantity q = term();
    for (;;) {
      int sign = accept("+") ? 1 : (accept("-") ? -1 : 0);
      if (!sign) return q;
      Quantity r = term();
      if (r.dim != q.dim) error("cannot add quantities of different dimension");
      q.value += sign * r.value;
    }
  }

  Quantity term() {
    Quantity q = factor();
    for (;;) {
      skip_ws();
      if (src_.substr(pos_, 2) == "**") return q;  // belongs to power()
      if (accept("*")) {
        Quantity r = factor();
        q.value *= r.value;
        q.dim += r.dim;
      } else if (accept("/")) {
        Quantity r = factor();
        if (r.value == 0) fail(errc::division_by_zero, "calculator: division by zero");
        q.value /= r.value;
        q.dim -= r.dim;
      } else {
        return q;
      }
    }
  }

  // Unary sign, then a power, then an optional unit suffix applying to it.
  Quantity factor() {
    if (accept("-")) {
      Quantity q = factor();
      q.value = -q.value;
      return q;
    }
    if (accept("+")) return factor();
    Quantity q = power();
    if (auto u = unit_word()) {
      q.value *= unit_table().find(*u)->second;
      q.dim += 1;
    }
    return q;
  }

  Quantity power() {
    Quantity base = primary();
    if (!(accept("^") || accept("**"))) return base;
    Quantity e = exponent();
    if (e.dim != 0) error("exponent must be dimensionless");
    if (denominator(e.value) != 1) error("exponent must be an integer");
    cpp_int n = numerator(e.value);
    if (n > 1024 || n < -1024) error("exponent out of range");
    int k = n.convert_to<int>();
    if (k < 0 && base.value == 0) fail(errc::division_by_zero, "calculator: zero to a negative power");
    Rational result = 1;
    for (int i = 0; i < std::abs(k); ++i) result *= base.value;
    if (k < 0) result = 1 / result;
    return {result, base.dim * k};
  }

  // Right-associative: 2^3^2 = 2^9.
  Quantity exponent() {
    if (accept("-")) {
      Quantity q = exponent();
      q.value = -q.value;
      return q;
    }
    if (accept("+")) return exponent();
    return power();
  }

  Quantity primary() {
    skip_ws();
    if (accept("(")) {
      Quantity q = expr();
      if (!accept(")")) error("expected ')'");
      return q;
    }
    return {number(), 0};
  }

  Rational number() {
    skip_ws();
    std::size_t start = pos_;
    if (src_.substr(pos_, 2) == "0x" || src_.substr(pos_, 2) == "0X") {
      pos_ += 2;
      cpp_int v = 0;
      std::size_t digits = 0;
      while (pos_ < src_.size() && std::isxdigit(static_cast<unsigned char>(src_[pos_]))) {
        char c = static_cast<char>(std::tolower(static_cast<unsigned char>(src_[pos_++])));
        v = v * 16 + (c <= '9' ? c - '0' : c - 'a' + 10);
        ++digits;
      }
      if (!digits) error("malformed hex literal");
      return Rational(v);
    }
    cpp_int mant = 0;
    int scale = 0;
    std::size_t digits = 0;
    while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
      mant = mant * 10 + (src_[pos_++] - '0');
      ++digits;
    }
    if (pos_ < src_.size() && src_[pos_] == '.') {
      ++pos_;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
        mant = mant * 10 + (src_[pos_++] - '0');
        --scale;
        ++digits;
      }
    }
    if (!digits) {
      pos_ = start;
      error("expected a number");
    }
    if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
      std::size_t save = pos_++;
      int sign = 1;
      if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) sign = src_[pos_++] == '-' ? -1 : 1;
      int e = 0;
      std::size_t ed = 0;
      while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])) && e < 10000) {
        e = e * 10 + (src_[pos_++] - '0');
        ++ed;
      }
      if (!ed) {
        pos_ = save;  // not an exponent after all
      } else {
        if (e > 1024) error("exponent out of range");
        scale += sign * e;
      }
    }
    Rational r(mant);
    cpp_int ten = pow(cpp_int(10), std::abs(scale));
    if (scale > 0) r *= Rational(ten);
    if (scale < 0) r /= Rational(ten);
    return r;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::set<std::string> units_;
};

// Exact decimal when the denominator is 2^a 5^b and the expansion is short.
std::optional<std::string> exact_decimal(const Rational& r) {
  cpp_int num = numerator(r);
  cpp_int den = denominator(r);
  bool neg = num < 0;
  if (neg) num = -num;
  cpp_int d = den;
  int twos = 0;
  int fives = 0;
  while (d % 2 == 0) {
    d /= 2;
    ++twos;
  }
  while (d % 5 == 0) {
    d /= 5;
    ++fives;
  }
  if (d != 1) return std::nullopt;
  int places = std::max(twos, fives);
  if (places > 20) return std::nullopt;
  cpp_int scaled = num * pow(cpp_int(10), places) / den;
  std::string digits = scaled.str();
  if (places > 0) {
    if (static_cast<int>(digits.size()) <= places) digits.insert(0, places - digits.size() + 1, '0');
    digits.insert(digits.size() - places, ".");
  }
  return (neg ? "-" : "") + digits;
}

}  // namespace

std::string CalcResult::text() const {
  std::string num;
  if (auto d = exact_decimal(exact)) {
    num = *d;
  } else {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.15g", value());
    num = buf;
  }
  return unit.empty() ? num : num + " " + unit;
}

CalcResult calculate(std::string_view expression) {
  bool blank = true;
  for (char c : expression) blank = blank && std::isspace(static_cast<unsigned char>(c));
  if (blank) fail(errc::parse_error, "calculator: empty expression");
  return Parser(expression).run();
}

}  // namespace incisor
