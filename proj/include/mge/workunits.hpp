#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <string>
#include <vector>

namespace mge {

using BigInt = boost::multiprecision::cpp_int;

// Exact rational with an arbitrary-precision integer numerator and
// denominator, always reduced, denominator positive.
class Rational {
 public:
  Rational() : num_(0), den_(1) {}
  Rational(long long n) : num_(n), den_(1) {}  // NOLINT: implicit by design
  Rational(BigInt num, BigInt den);

  const BigInt& num() const { return num_; }
  const BigInt& den() const { return den_; }

  Rational operator+(const Rational& o) const;
  Rational operator-(const Rational& o) const;
  Rational operator*(const Rational& o) const;
  Rational& operator+=(const Rational& o);
  bool operator==(const Rational& o) const { return num_ == o.num_ && den_ == o.den_; }
  bool operator!=(const Rational& o) const { return !(*this == o); }
  bool operator<(const Rational& o) const { return num_ * o.den_ < o.num_ * den_; }

  double to_double() const;
  std::string str() const;  // "num/den"

 private:
  void reduce();
  BigInt num_, den_;
};

// One work unit is one model application to one image at the finest mesh;
// an application at level j costs 4^-(j-1) work units. Note that work units
// measure data touched, not wall-clock seconds.
Rational level_weight(int level);

struct LedgerEntry {
  int level = 1;
  long long images = 0;
};

// Append-only account of model applications. Forward evaluation is the unit
// of charging; a gradient step charges each image it touches once per
// resolution it is evaluated at.
class WorkUnitLedger {
 public:
  void charge(int level, long long images);
  void merge(const WorkUnitLedger& other);  // deterministic concatenation
  const std::vector<LedgerEntry>& entries() const { return entries_; }
  const Rational& total() const { return total_; }
  // Recomputes the total from entries; equals total() by construction.
  Rational recompute() const;

 private:
  std::vector<LedgerEntry> entries_;
  Rational total_;
};

}  // namespace mge
