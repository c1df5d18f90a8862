#ifndef HLCE_PSEUDO_HPP
#define HLCE_PSEUDO_HPP

// Naive plug-in effect and the three pseudo outcomes (reg, pro, mr).
// Every function is pure: one row and one set of nuisance values in, one real out.

#include <optional>
#include <string>

#include "hlce/dataset.hpp"
#include "hlce/nuisance.hpp"

namespace hlce {

enum class PseudoKind { reg, pro, mr };

inline const char* pseudo_name(PseudoKind k) {
  switch (k) {
    case PseudoKind::reg: return "reg";
    case PseudoKind::pro: return "pro";
    case PseudoKind::mr: return "mr";
  }
  return "?";
}

// (-1)^(1-a) / (1 - a + (-1)^(1-a) pi): 1/pi for a=1, -1/(1-pi) for a=0.
inline double signed_inverse_propensity(int a, double pi) { return a == 1 ? 1.0 / pi : -1.0 / (1.0 - pi); }

inline double arm_sign(int a) { return a == 1 ? 1.0 : -1.0; }

inline double tau_naive(const NuisanceValues& v) { return v.contrast(); }

inline double tau_naive(std::span<const double> x, const NuisanceSet& ns) { return ns(x).contrast(); }

namespace detail {

inline double require_y(const Observation& row) {
  if (!row.y) throw DataError("observational row without a long-term outcome");
  return *row.y;
}

}  // namespace detail

inline double pseudo_reg(const Observation& row, const NuisanceValues& v) {
  const int a = row.a;
  const double sgn = arm_sign(a);
  if (row.g == Group::observational) {
    const double y = detail::require_y(row);
    return sgn * (y - v.mu_y_o[1 - a] - row.s + v.mu_s_o[1 - a]) + v.mu_s_e[1] - v.mu_s_e[0];
  }
  return sgn * (row.s - v.mu_s_e[1 - a]) + v.mu_y_o[1] - v.mu_y_o[0] + v.mu_s_o[0] - v.mu_s_o[1];
}

inline double pseudo_pro(const Observation& row, const NuisanceValues& v, double p_o) {
  const int a = row.a;
  if (row.g == Group::experimental) {
    return signed_inverse_propensity(a, v.pi_e) / p_o * (1.0 / v.pi_g - 1.0) * row.s;
  }
  const double y = detail::require_y(row);
  return signed_inverse_propensity(a, v.pi_o) / p_o * (y - row.s);
}

// The two weighted residual terms of the mr pseudo outcome; at most one is
// non-zero on any row.
struct MrTerms {
  double experimental = 0.0;
  double observational = 0.0;
  double plug_in = 0.0;
  double total() const { return experimental + observational + plug_in; }
};

inline MrTerms mr_terms(const Observation& row, const NuisanceValues& v, double p_o) {
  MrTerms t;
  const int a = row.a;
  t.plug_in = v.contrast();
  if (row.g == Group::experimental) {
    t.experimental = signed_inverse_propensity(a, v.pi_e) / p_o * (row.s - v.mu_s_e[a]) * (1.0 / v.pi_g - 1.0);
  } else {
    const double y = detail::require_y(row);
    t.observational = signed_inverse_propensity(a, v.pi_o) / p_o * (y - v.mu_y_o[a] - row.s + v.mu_s_o[a]);
  }
  return t;
}

inline double pseudo_mr(const Observation& row, const NuisanceValues& v, double p_o) {
  return mr_terms(row, v, p_o).total();
}

inline double pseudo_outcome(PseudoKind k, const Observation& row, const NuisanceValues& v, double p_o) {
  switch (k) {
    case PseudoKind::reg: return pseudo_reg(row, v);
    case PseudoKind::pro: return pseudo_pro(row, v, p_o);
    case PseudoKind::mr: return pseudo_mr(row, v, p_o);
  }
  throw std::invalid_argument("unknown pseudo outcome kind");
}

inline double pseudo_outcome(PseudoKind k, const Observation& row, std::span<const double> x, const NuisanceSet& ns) {
  return pseudo_outcome(k, row, ns(x), ns.p_o());
}

// Pseudo outcomes for the listed rows (all rows when empty).
inline Vector pseudo_outcomes(PseudoKind k, const PanelDataset& data, const NuisanceSet& ns,
                              std::span<const Index> rows = {}) {
  const bool all = rows.empty();
  const Index m = all ? data.size() : static_cast<Index>(rows.size());
  Vector out(m);
  for (Index j = 0; j < m; ++j) {
    const Index i = all ? j : rows[static_cast<std::size_t>(j)];
    out[j] = pseudo_outcome(k, data.observation(i), data.covariates(i), ns);
  }
  return out;
}

}  // namespace hlce

#endif  // HLCE_PSEUDO_HPP
