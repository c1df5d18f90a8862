#ifndef HLCE_METRICS_HPP
#define HLCE_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "hlce/common.hpp"

namespace hlce {

namespace detail {

inline void require_paired(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()) + ")");
  }
  if (a.size() == 0) throw std::invalid_argument(std::string(what) + ": empty input");
}

}  // namespace detail

// Root mean squared error between estimated and true effects.
inline double pehe(const Vector& tau_hat, const Vector& tau) {
  detail::require_paired(tau_hat, tau, "pehe");
  return std::sqrt((tau_hat - tau).squaredNorm() / static_cast<double>(tau.size()));
}

// |mean(tau) - mean(tau_hat)|; with `unnormalized`, the difference of sums.
inline double ate_error(const Vector& tau_hat, const Vector& tau, bool unnormalized = false) {
  detail::require_paired(tau_hat, tau, "ate_error");
  const double diff = tau.sum() - tau_hat.sum();
  return std::abs(unnormalized ? diff : diff / static_cast<double>(tau.size()));
}

// OLS slope of log(err) on log(n).
inline double rate_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw std::invalid_argument("rate_slope: need at least 3 points");
  std::vector<double> ns;
  for (const auto& [n, err] : points) {
    if (!(err > 0.0) || !std::isfinite(err)) throw std::invalid_argument("rate_slope: errors must be positive");
    if (!(n > 0.0)) throw std::invalid_argument("rate_slope: sizes must be positive");
    ns.push_back(n);
  }
  std::sort(ns.begin(), ns.end());
  if (std::adjacent_find(ns.begin(), ns.end()) != ns.end()) throw std::invalid_argument("rate_slope: sizes must be distinct");
  const double m = static_cast<double>(points.size());
  double mx = 0, my = 0;
  for (const auto& [n, err] : points) {
    mx += std::log(n);
    my += std::log(err);
  }
  mx /= m;
  my /= m;
  double sxy = 0, sxx = 0;
  for (const auto& [n, err] : points) {
    const double dx = std::log(n) - mx;
    sxy += dx * (std::log(err) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

// Average ranks, ties sharing the mean rank.
inline std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) throw std::invalid_argument("correlation: need paired samples, n >= 2");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  return pearson(ranks(a), ranks(b));
}

// Linear-interpolated quantile (type 7).
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

inline double median(std::vector<double> v) { return quantile(std::move(v), 0.5); }

}  // namespace hlce

#endif  // HLCE_METRICS_HPP
