#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>

using Rational = boost::multiprecision::cpp_rational;

// Exact value of a finite double.
inline Rational exact(double d) {
  int e = 0;
  const double m = std::frexp(d, &e);
  const auto mant = static_cast<long long>(std::ldexp(m, 53));
  Rational r(mant);
  e -= 53;
  if (e >= 0) r *= Rational(boost::multiprecision::cpp_int(1) << e);
  else r /= Rational(boost::multiprecision::cpp_int(1) << -e);
  return r;
}

// True when d is a nearest double to r.
inline bool nearest(double d, const Rational& r) {
  const Rational err = abs(exact(d) - r);
  return err <= abs(exact(std::nextafter(d, 0.0)) - r) && err <= abs(exact(std::nextafter(d, 2.0)) - r);
}
