#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "pje/errors.hpp"

namespace pje {

// Exact rational number in lowest terms with positive denominator.
class Rational {
 public:
  Rational() = default;
  Rational(long n) : v_(n) {}                           // NOLINT
  Rational(int n) : v_(static_cast<long>(n)) {}         // NOLINT
  Rational(long num, long den) {
    if (den == 0) throw ConfigError("rational with zero denominator");
    v_ = mpq_class(num, den);
    v_.canonicalize();
  }
  explicit Rational(mpq_class v) : v_(std::move(v)) { v_.canonicalize(); }

  // Accepts "a", "-a" or "a/b".
  static Rational parse(std::string_view text) {
    std::string s(text);
    mpq_class q;
    if (s.empty() || q.set_str(s, 10) != 0)
      throw ConfigError("cannot parse rational '" + s + "'");
    if (q.get_den() == 0) throw ConfigError("rational with zero denominator: " + s);
    q.canonicalize();
    return Rational(std::move(q));
  }

  const mpq_class& value() const { return v_; }
  mpz_class numerator() const { return v_.get_num(); }
  mpz_class denominator() const { return v_.get_den(); }

  double to_double() const { return v_.get_d(); }
  std::string str() const { return v_.get_str(); }
  // Always "num/den", used by the JSON schemas.
  std::string fraction_str() const {
    return v_.get_num().get_str() + "/" + v_.get_den().get_str();
  }

  bool is_integer() const { return v_.get_den() == 1; }
  int sign() const { return sgn(v_); }

  Rational& operator+=(const Rational& o) { v_ += o.v_; return *this; }
  Rational& operator-=(const Rational& o) { v_ -= o.v_; return *this; }
  Rational& operator*=(const Rational& o) { v_ *= o.v_; return *this; }
  Rational& operator/=(const Rational& o) {
    if (o.v_ == 0) throw NumericalError("rational division by zero");
    v_ /= o.v_;
    return *this;
  }

  void add_mul(const Rational& a, const Rational& b) {
    thread_local mpq_class tmp;
    mpq_mul(tmp.get_mpq_t(), a.v_.get_mpq_t(), b.v_.get_mpq_t());
    mpq_add(v_.get_mpq_t(), v_.get_mpq_t(), tmp.get_mpq_t());
  }

  // results of mpq arithmetic are already canonical
  friend Rational operator+(const Rational& a, const Rational& b) {
    Rational r;
    mpq_add(r.v_.get_mpq_t(), a.v_.get_mpq_t(), b.v_.get_mpq_t());
    return r;
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    Rational r;
    mpq_sub(r.v_.get_mpq_t(), a.v_.get_mpq_t(), b.v_.get_mpq_t());
    return r;
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    Rational r;
    mpq_mul(r.v_.get_mpq_t(), a.v_.get_mpq_t(), b.v_.get_mpq_t());
    return r;
  }
  friend Rational operator/(Rational a, const Rational& b) { return a /= b; }
  friend Rational operator-(const Rational& a) {
    Rational r;
    mpq_neg(r.v_.get_mpq_t(), a.v_.get_mpq_t());
    return r;
  }

  friend bool operator==(const Rational& a, const Rational& b) { return a.v_ == b.v_; }
  friend bool operator!=(const Rational& a, const Rational& b) { return a.v_ != b.v_; }
  friend bool operator<(const Rational& a, const Rational& b) { return a.v_ < b.v_; }
  friend bool operator<=(const Rational& a, const Rational& b) { return a.v_ <= b.v_; }
  friend bool operator>(const Rational& a, const Rational& b) { return a.v_ > b.v_; }
  friend bool operator>=(const Rational& a, const Rational& b) { return a.v_ >= b.v_; }

  friend std::ostream& operator<<(std::ostream& os, const Rational& q) { return os << q.str(); }

 private:
  mpq_class v_{0};
};

// acc += a * b without a heap temporary per call
inline void add_product(Rational& acc, const Rational& a, const Rational& b) { acc.add_mul(a, b); }
inline void add_product(double& acc, double a, double b) { acc += a * b; }

inline Rational abs(const Rational& q) { return q.sign() < 0 ? -q : q; }
inline Rational min(const Rational& a, const Rational& b) { return a < b ? a : b; }
inline Rational max(const Rational& a, const Rational& b) { return a < b ? b : a; }

inline Rational pow(Rational base, unsigned exp) {
  Rational out(1);
  while (exp) {
    if (exp & 1u) out *= base;
    base *= base;
    exp >>= 1u;
  }
  return out;
}

inline Rational floor_to_integer(const Rational& q) {
  mpz_class f;
  mpz_fdiv_q(f.get_mpz_t(), q.value().get_num_mpz_t(), q.value().get_den_mpz_t());
  return Rational(mpq_class(f));
}

using Point = std::vector<Rational>;

inline std::vector<double> to_doubles(const Point& p) {
  std::vector<double> out;
  out.reserve(p.size());
  for (const auto& c : p) out.push_back(c.to_double());
  return out;
}

}  // namespace pje
