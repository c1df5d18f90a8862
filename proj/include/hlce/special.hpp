#ifndef HLCE_SPECIAL_HPP
#define HLCE_SPECIAL_HPP

// Modified Bessel functions of the second kind and the Matérn covariance.

#include <cmath>
#include <numbers>

#include "hlce/common.hpp"

namespace hlce {

namespace detail {

// Modified Bessel I0, I1 (Abramowitz & Stegun 9.8.1-9.8.4); only needed for
// the small-argument K0/K1 expansions.
inline double bessel_i0(double x) {
  const double ax = std::abs(x);
  if (ax < 3.75) {
    const double y = (x / 3.75) * (x / 3.75);
    return 1.0 + y * (3.5156229 + y * (3.0899424 + y * (1.2067492 +
                 y * (0.2659732 + y * (0.0360768 + y * 0.0045813)))));
  }
  const double y = 3.75 / ax;
  return (std::exp(ax) / std::sqrt(ax)) *
         (0.39894228 + y * (0.01328592 + y * (0.00225319 + y * (-0.00157565 + y * (0.00916281 +
          y * (-0.02057706 + y * (0.02635537 + y * (-0.01647633 + y * 0.00392377))))))));
}

inline double bessel_i1(double x) {
  const double ax = std::abs(x);
  double ans;
  if (ax < 3.75) {
    const double y = (x / 3.75) * (x / 3.75);
    ans = ax * (0.5 + y * (0.87890594 + y * (0.51498869 + y * (0.15084934 +
          y * (0.02658733 + y * (0.00301532 + y * 0.00032411))))));
  } else {
    const double y = 3.75 / ax;
    ans = 0.02282967 + y * (-0.02895312 + y * (0.01787654 - y * 0.00420059));
    ans = 0.39894228 + y * (-0.03988024 + y * (-0.00362018 + y * (0.00163801 +
          y * (-0.01031555 + y * ans))));
    ans *= std::exp(ax) / std::sqrt(ax);
  }
  return x < 0.0 ? -ans : ans;
}

inline double bessel_k0(double x) {
  if (x <= 2.0) {
    const double y = x * x / 4.0;
    return (-std::log(x / 2.0) * bessel_i0(x)) +
           (-0.57721566 + y * (0.42278420 + y * (0.23069756 + y * (0.3488590e-1 +
            y * (0.262698e-2 + y * (0.10750e-3 + y * 0.74e-5))))));
  }
  const double y = 2.0 / x;
  return (std::exp(-x) / std::sqrt(x)) *
         (1.25331414 + y * (-0.7832358e-1 + y * (0.2189568e-1 + y * (-0.1062446e-1 +
          y * (0.587872e-2 + y * (-0.251540e-2 + y * 0.53208e-3))))));
}

inline double bessel_k1(double x) {
  if (x <= 2.0) {
    const double y = x * x / 4.0;
    return (std::log(x / 2.0) * bessel_i1(x)) +
           (1.0 / x) * (1.0 + y * (0.15443144 + y * (-0.67278579 + y * (-0.18156897 +
            y * (-0.1919402e-1 + y * (-0.110404e-2 + y * (-0.4686e-4)))))));
  }
  const double y = 2.0 / x;
  return (std::exp(-x) / std::sqrt(x)) *
         (1.25331414 + y * (0.23498619 + y * (-0.3655620e-1 + y * (0.1504268e-1 +
          y * (-0.780353e-2 + y * (0.325614e-2 + y * (-0.68245e-3)))))));
}

}  // namespace detail

// K_n(z) for integer n >= 0, z > 0: polynomial approximations for K0/K1 and
// upward recurrence K_{n+1} = K_{n-1} + (2n/z) K_n (stable for K).
inline double bessel_k(int order, double z) {
  if (order < 0) throw std::invalid_argument("bessel_k: order must be >= 0");
  if (!(z > 0.0)) throw std::invalid_argument("bessel_k: argument must be > 0");
  const double k0 = detail::bessel_k0(z);
  if (order == 0) return k0;
  double km = k0;
  double k = detail::bessel_k1(z);
  for (int n = 1; n < order; ++n) {
    const double kp = km + (2.0 * n / z) * k;
    km = k;
    k = kp;
  }
  return k;
}

// Unit-variance Matérn covariance at distance r. Half-integer smoothness uses
// the closed forms, integer smoothness uses bessel_k, anything else falls
// back to std::cyl_bessel_k.
inline double matern_kernel(double r, double length_scale, double nu) {
  if (r < 0.0) throw std::invalid_argument("matern_kernel: negative distance");
  if (!(length_scale > 0.0) || !(nu > 0.0)) {
    throw std::invalid_argument("matern_kernel: length scale and smoothness must be positive");
  }
  if (r == 0.0) return 1.0;
  const double z = std::sqrt(2.0 * nu) * r / length_scale;
  if (nu == 0.5) return std::exp(-z);
  if (nu == 1.5) return (1.0 + z) * std::exp(-z);
  if (nu == 2.5) return (1.0 + z + z * z / 3.0) * std::exp(-z);
  // Below this the ratio is 1 to double precision and K_nu over/underflows.
  if (z < 1e-8) return 1.0;
  if (z > 700.0) return 0.0;
  const double norm = std::exp((1.0 - nu) * std::numbers::ln2 - std::lgamma(nu));
  const double knu = (nu == std::floor(nu)) ? bessel_k(static_cast<int>(nu), z) : std::cyl_bessel_k(nu, z);
  return norm * std::pow(z, nu) * knu;
}

}  // namespace hlce

#endif  // HLCE_SPECIAL_HPP
