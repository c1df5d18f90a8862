#ifndef HLCE_ESTIMATOR_HPP
#define HLCE_ESTIMATOR_HPP

// Two-stage effect estimators: fit nuisances, build pseudo outcomes, regress
// them on x. The naive estimator skips the second stage and returns the
// plug-in contrast.

#include <functional>
#include <memory>
#include <string>

#include "hlce/dataset.hpp"
#include "hlce/nuisance.hpp"
#include "hlce/pseudo.hpp"
#include "hlce/regress.hpp"

namespace hlce {

enum class EstimatorKind { naive, reg, pro, mr };
inline constexpr std::array<EstimatorKind, 4> kAllEstimators = {EstimatorKind::naive, EstimatorKind::reg,
                                                                EstimatorKind::pro, EstimatorKind::mr};

inline const char* estimator_name(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::naive: return "naive";
    case EstimatorKind::reg: return "reg";
    case EstimatorKind::pro: return "pro";
    case EstimatorKind::mr: return "mr";
  }
  return "?";
}

inline EstimatorKind parse_estimator(const std::string& s) {
  for (auto k : kAllEstimators) {
    if (s == estimator_name(k)) return k;
  }
  throw std::invalid_argument("unknown estimator '" + s + "' (naive, reg, pro, mr)");
}

inline PseudoKind pseudo_kind(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::reg: return PseudoKind::reg;
    case EstimatorKind::pro: return PseudoKind::pro;
    case EstimatorKind::mr: return PseudoKind::mr;
    case EstimatorKind::naive: break;
  }
  throw std::invalid_argument("naive estimator has no pseudo outcome");
}

enum class SplitMode { full, two_fold, cross_fit };

inline const char* split_name(SplitMode m) {
  switch (m) {
    case SplitMode::full: return "full";
    case SplitMode::two_fold: return "two-fold";
    case SplitMode::cross_fit: return "cross-fit";
  }
  return "?";
}

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::mr;
  NuisanceSpec nuisance;
  RegressorSpec stage2;
  SplitMode split = SplitMode::full;
  int folds = 5;
  std::uint64_t seed = 0;
};

struct Provenance {
  EstimatorKind kind = EstimatorKind::mr;
  SplitMode split = SplitMode::full;
  Index n_e = 0, n_o = 0;
  Index stage2_rows = 0;
  double p_o = 0.0;
  FitDiagnostics stage2;
};

class FittedHLCE {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  FittedHLCE(Fn fn, Index input_dim, Provenance prov)
      : fn_(std::make_shared<const Fn>(std::move(fn))), dim_(input_dim), prov_(std::move(prov)) {}

  double operator()(std::span<const double> x) const {
    if (static_cast<Index>(x.size()) != dim_) throw std::invalid_argument("effect model: dimension mismatch");
    return (*fn_)(x);
  }

  Vector predict(const Matrix& x) const {
    if (x.rows() > 0 && x.cols() != dim_) {
      throw std::invalid_argument("effect model expects " + std::to_string(dim_) + " columns, got " +
                                  std::to_string(x.cols()));
    }
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) out[i] = (*fn_)(row_span(x, i));
    return out;
  }

  double ate(const Matrix& x) const {
    if (x.rows() == 0) throw std::invalid_argument("ate over an empty covariate matrix");
    return predict(x).mean();
  }

  Index input_dim() const { return dim_; }
  const Provenance& provenance() const { return prov_; }

 private:
  std::shared_ptr<const Fn> fn_;
  Index dim_;
  Provenance prov_;
};

namespace detail {

inline Provenance base_provenance(const PanelDataset& data, EstimatorKind kind, SplitMode split) {
  Provenance p;
  p.kind = kind;
  p.split = split;
  p.n_e = data.count(Group::experimental);
  p.n_o = data.count(Group::observational);
  return p;
}

inline Matrix take_rows(const Matrix& x, std::span<const Index> rows) {
  Matrix out(static_cast<Index>(rows.size()), x.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = x.row(rows[k]);
  return out;
}

inline FittedHLCE naive_model(const NuisanceSet& ns, Index dim, Provenance prov) {
  prov.p_o = ns.p_o();
  return FittedHLCE([ns](std::span<const double> x) { return ns(x).contrast(); }, dim, std::move(prov));
}

inline FittedHLCE stage2_model(const Matrix& x, const Vector& pseudo, const RegressorSpec& spec, Provenance prov) {
  const FittedModel m = fit_regressor(spec, x, pseudo);
  prov.stage2 = m.diagnostics();
  prov.stage2_rows = x.rows();
  return FittedHLCE([m](std::span<const double> v) { return m(v); }, x.cols(), std::move(prov));
}

}  // namespace detail

// Second stage only, with nuisances supplied by the caller.
inline FittedHLCE fit_with_nuisances(const PanelDataset& data, EstimatorKind kind, const NuisanceSet& ns,
                                     const RegressorSpec& stage2) {
  auto prov = detail::base_provenance(data, kind, SplitMode::full);
  if (kind == EstimatorKind::naive) return detail::naive_model(ns, data.dim(), std::move(prov));
  prov.p_o = ns.p_o();
  return detail::stage2_model(data.x(), pseudo_outcomes(pseudo_kind(kind), data, ns), stage2, std::move(prov));
}

// Pseudo outcomes for every row under the configured splitting (cross-fit
// or full); useful for diagnostics.
inline Vector pseudo_outcomes(const PanelDataset& data, const EstimatorConfig& config) {
  const PseudoKind pk = pseudo_kind(config.kind);
  if (config.split != SplitMode::cross_fit) return pseudo_outcomes(pk, data, fit_nuisances(data, config.nuisance));
  const auto folds = stratified_folds(data, config.folds, config.seed);
  Vector out(data.size());
  for (const auto& fold : folds) {
    const PanelDataset train = data.subset(complement(data.size(), fold));
    const NuisanceSet ns = fit_nuisances(train, config.nuisance);
    const Vector part = pseudo_outcomes(pk, data, ns, fold);
    for (std::size_t k = 0; k < fold.size(); ++k) out[fold[k]] = part[static_cast<Index>(k)];
  }
  return out;
}

inline FittedHLCE fit_two_stage(const PanelDataset& data, const EstimatorConfig& config) {
  auto prov = detail::base_provenance(data, config.kind, config.split);
  // The plug-in has no second stage to decouple from, so it always uses every row.
  if (config.kind == EstimatorKind::naive) {
    return detail::naive_model(fit_nuisances(data, config.nuisance), data.dim(), std::move(prov));
  }
  const PseudoKind pk = pseudo_kind(config.kind);
  switch (config.split) {
    case SplitMode::full: {
      const NuisanceSet ns = fit_nuisances(data, config.nuisance);
      prov.p_o = ns.p_o();
      return detail::stage2_model(data.x(), pseudo_outcomes(pk, data, ns), config.stage2, std::move(prov));
    }
    case SplitMode::two_fold: {
      const auto halves = stratified_folds(data, 2, config.seed);
      const NuisanceSet ns = fit_nuisances(data.subset(halves[0]), config.nuisance);
      prov.p_o = ns.p_o();
      return detail::stage2_model(detail::take_rows(data.x(), halves[1]), pseudo_outcomes(pk, data, ns, halves[1]),
                                  config.stage2, std::move(prov));
    }
    case SplitMode::cross_fit: {
      if (config.folds < 2) throw std::invalid_argument("cross-fitting needs at least 2 folds");
      prov.p_o = config.nuisance.pinned_p_o.value_or(group_prior(data));
      return detail::stage2_model(data.x(), pseudo_outcomes(data, config), config.stage2, std::move(prov));
    }
  }
  throw std::invalid_argument("unknown split mode");
}

}  // namespace hlce

#endif  // HLCE_ESTIMATOR_HPP
