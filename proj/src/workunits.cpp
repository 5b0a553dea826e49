#include "mge/workunits.hpp"

#include <stdexcept>

namespace mge {

Rational::Rational(BigInt num, BigInt den) : num_(std::move(num)), den_(std::move(den)) {
  if (den_ == 0) throw std::runtime_error("Rational: zero denominator");
  reduce();
}

void Rational::reduce() {
  if (den_ < 0) {
    num_ = -num_;
    den_ = -den_;
  }
  BigInt g = boost::multiprecision::gcd(num_ < 0 ? BigInt(-num_) : num_, den_);
  if (g > 1) {
    num_ /= g;
    den_ /= g;
  }
  if (num_ == 0) den_ = 1;
}

Rational Rational::operator+(const Rational& o) const {
  return Rational(num_ * o.den_ + o.num_ * den_, den_ * o.den_);
}

Rational Rational::operator-(const Rational& o) const {
  return Rational(num_ * o.den_ - o.num_ * den_, den_ * o.den_);
}

Rational Rational::operator*(const Rational& o) const {
  return Rational(num_ * o.num_, den_ * o.den_);
}

Rational& Rational::operator+=(const Rational& o) {
  *this = *this + o;
  return *this;
}

double Rational::to_double() const {
  return num_.convert_to<double>() / den_.convert_to<double>();
}

std::string Rational::str() const { return num_.str() + "/" + den_.str(); }

Rational level_weight(int level) {
  if (level < 1)
    throw std::runtime_error("level_weight: level " + std::to_string(level) +
                             " must be at least 1");
  BigInt den = 1;
  den <<= 2 * (level - 1);  // 4^(level-1)
  return Rational(1, den);
}

void WorkUnitLedger::charge(int level, long long images) {
  if (images < 0)
    throw std::runtime_error("WorkUnitLedger::charge: negative image count");
  if (images == 0) return;
  entries_.push_back({level, images});
  total_ += level_weight(level) * Rational(images);
}

void WorkUnitLedger::merge(const WorkUnitLedger& other) {
  for (const LedgerEntry& e : other.entries_) charge(e.level, e.images);
}

Rational WorkUnitLedger::recompute() const {
  Rational t;
  for (const LedgerEntry& e : entries_) t += level_weight(e.level) * Rational(e.images);
  return t;
}

}  // namespace mge
