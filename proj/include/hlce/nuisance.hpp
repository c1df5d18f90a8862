#ifndef HLCE_NUISANCE_HPP
#define HLCE_NUISANCE_HPP

// The six nuisance functions behind the identification formula
//   tau(x) = mu_Y^O(1,x) - mu_Y^O(0,x) + mu_S^E(1,x) - mu_S^E(0,x) + mu_S^O(0,x) - mu_S^O(1,x)
// and the scalar prior p(G=O) used by the weighting estimators.

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "hlce/dataset.hpp"
#include "hlce/mlp.hpp"
#include "hlce/regress.hpp"

namespace hlce {

enum class Nuisance : int { mu_s_e, mu_s_o, mu_y_o, pi_e, pi_o, pi_g };
inline constexpr int kNuisanceCount = 6;
inline constexpr std::array<Nuisance, kNuisanceCount> kAllNuisances = {
    Nuisance::mu_s_e, Nuisance::mu_s_o, Nuisance::mu_y_o, Nuisance::pi_e, Nuisance::pi_o, Nuisance::pi_g};

inline const char* nuisance_name(Nuisance n) {
  switch (n) {
    case Nuisance::mu_s_e: return "mu_s_e";
    case Nuisance::mu_s_o: return "mu_s_o";
    case Nuisance::mu_y_o: return "mu_y_o";
    case Nuisance::pi_e: return "pi_e";
    case Nuisance::pi_o: return "pi_o";
    case Nuisance::pi_g: return "pi_g";
  }
  return "?";
}

using NuisanceMask = std::array<bool, kNuisanceCount>;

// All nuisance values at one covariate vector. Index [a] is the arm.
struct NuisanceValues {
  std::array<double, 2> mu_s_e{};
  std::array<double, 2> mu_s_o{};
  std::array<double, 2> mu_y_o{};
  double pi_e = 0.5;
  double pi_o = 0.5;
  double pi_g = 0.5;  // P(G=E | x)

  // The plug-in contrast.
  double contrast() const {
    return mu_y_o[1] - mu_y_o[0] + mu_s_e[1] - mu_s_e[0] + mu_s_o[0] - mu_s_o[1];
  }
};

inline void copy_component(Nuisance n, const NuisanceValues& from, NuisanceValues& to) {
  switch (n) {
    case Nuisance::mu_s_e: to.mu_s_e = from.mu_s_e; break;
    case Nuisance::mu_s_o: to.mu_s_o = from.mu_s_o; break;
    case Nuisance::mu_y_o: to.mu_y_o = from.mu_y_o; break;
    case Nuisance::pi_e: to.pi_e = from.pi_e; break;
    case Nuisance::pi_o: to.pi_o = from.pi_o; break;
    case Nuisance::pi_g: to.pi_g = from.pi_g; break;
  }
}

class NuisanceSet {
 public:
  using Eval = std::function<NuisanceValues(std::span<const double>)>;

  // input_dim < 0 accepts any width (analytic oracles use only x[0]).
  NuisanceSet(Eval eval, double p_o, double clip_eps = kDefaultClip, Index input_dim = -1)
      : eval_(std::make_shared<const Eval>(std::move(eval))), p_o_(p_o), clip_(clip_eps), dim_(input_dim) {
    if (!(p_o > 0.0 && p_o < 1.0)) throw std::invalid_argument("p_O must lie in (0, 1)");
    if (!(clip_eps >= 0.0 && clip_eps < 0.5)) throw std::invalid_argument("clip must lie in [0, 0.5)");
  }

  NuisanceValues operator()(std::span<const double> x) const {
    if (dim_ >= 0 && static_cast<Index>(x.size()) != dim_) {
      throw std::invalid_argument("nuisance set expects " + std::to_string(dim_) + " covariates, got " +
                                  std::to_string(x.size()));
    }
    NuisanceValues v = (*eval_)(x);
    v.pi_e = clip(v.pi_e, clip_);
    v.pi_o = clip(v.pi_o, clip_);
    v.pi_g = clip(v.pi_g, clip_);
    return v;
  }

  double p_o() const { return p_o_; }
  double clip_eps() const { return clip_; }
  Index input_dim() const { return dim_; }

  NuisanceSet with_p_o(double p_o) const {
    NuisanceSet out = *this;
    if (!(p_o > 0.0 && p_o < 1.0)) throw std::invalid_argument("p_O must lie in (0, 1)");
    out.p_o_ = p_o;
    return out;
  }

  // Components flagged in `take` come from `other`, the rest from this set.
  NuisanceSet combine(const NuisanceSet& other, const NuisanceMask& take) const {
    auto a = eval_;
    auto b = other.eval_;
    Eval fn = [a, b, take](std::span<const double> x) {
      NuisanceValues v = (*a)(x);
      const NuisanceValues w = (*b)(x);
      for (int k = 0; k < kNuisanceCount; ++k) {
        if (take[static_cast<std::size_t>(k)]) copy_component(static_cast<Nuisance>(k), w, v);
      }
      return v;
    };
    const Index dim = dim_ >= 0 ? dim_ : other.dim_;
    return NuisanceSet(std::move(fn), p_o_, clip_, dim);
  }

 private:
  std::shared_ptr<const Eval> eval_;
  double p_o_;
  double clip_;
  Index dim_;
};

// Per-arm model pairs and single probability models glued into a set.
struct NuisanceComponents {
  std::array<std::optional<FittedModel>, 2> mu_s_e, mu_s_o, mu_y_o;
  std::optional<FittedModel> pi_e, pi_o, pi_g;
};

inline NuisanceSet from_components(NuisanceComponents c, double p_o, double clip_eps, Index dim) {
  for (const auto* pair : {&c.mu_s_e, &c.mu_s_o, &c.mu_y_o}) {
    if (!(*pair)[0] || !(*pair)[1]) throw std::invalid_argument("missing mean component");
  }
  if (!c.pi_e || !c.pi_o || !c.pi_g) throw std::invalid_argument("missing propensity component");
  auto comps = std::make_shared<const NuisanceComponents>(std::move(c));
  return NuisanceSet(
      [comps](std::span<const double> x) {
        NuisanceValues v;
        for (int a = 0; a < 2; ++a) {
          v.mu_s_e[a] = (*comps->mu_s_e[a])(x);
          v.mu_s_o[a] = (*comps->mu_s_o[a])(x);
          v.mu_y_o[a] = (*comps->mu_y_o[a])(x);
        }
        v.pi_e = (*comps->pi_e)(x);
        v.pi_o = (*comps->pi_o)(x);
        v.pi_g = (*comps->pi_g)(x);
        return v;
      },
      p_o, clip_eps, dim);
}

// ---------------------------------------------------------------------------
// Analytic nuisances for Dataset 1
//
// E[U | X, A, G=E] = 0 and E[U | X, A, G=O] = 1/4 + (A - 1/2) X follow from the
// conditional Gaussian with means (2A-1)/2 resp. (1-2A)/2 and the stated
// covariances. The propensities are the Bayes log-odds of the two unit-variance
// class conditionals: x in E and -x in O.

inline NuisanceValues dataset1_nuisance_values(double x, double p_e) {
  NuisanceValues v;
  const double x2 = x * x;
  for (int a = 0; a < 2; ++a) {
    v.mu_s_e[a] = 1.0 + x + 0.5 * x2 + a * (1.0 + 2.0 * x + x2);
    v.mu_s_o[a] = 1.25 + 0.5 * x + 0.5 * x2 + a * (1.0 + 3.0 * x + x2);
    v.mu_y_o[a] = 1.25 - 0.5 * x + 0.5 * x2 + a * (2.0 + 3.0 * x + x2);
  }
  v.pi_e = sigmoid(x);
  v.pi_o = sigmoid(-x);
  v.pi_g = p_e;
  return v;
}

inline NuisanceSet oracle_nuisances_dataset1(double p_e = 0.4, double clip_eps = kDefaultClip) {
  if (!(p_e > 0.0 && p_e < 1.0)) throw std::invalid_argument("p_e must lie in (0, 1)");
  return NuisanceSet(
      [p_e](std::span<const double> x) {
        if (x.empty()) throw std::invalid_argument("oracle needs one covariate");
        return dataset1_nuisance_values(x[0], p_e);
      },
      1.0 - p_e, clip_eps, -1);
}

// ---------------------------------------------------------------------------
// Fitting

enum class Backend { correct_parametric, misspecified_parametric, kernel, mlp_shared, oracle };

inline const char* backend_name(Backend b) {
  switch (b) {
    case Backend::correct_parametric: return "correct";
    case Backend::misspecified_parametric: return "misspecified";
    case Backend::kernel: return "kernel";
    case Backend::mlp_shared: return "mlp";
    case Backend::oracle: return "oracle";
  }
  return "?";
}

struct NuisanceSpec {
  std::array<Backend, kNuisanceCount> backend{};
  double clip = kDefaultClip;
  // Replaces the empirical p(G=O) when set.
  std::optional<double> pinned_p_o;
  // Source for Backend::oracle; only generators with analytic forms supply one.
  std::optional<NuisanceSet> oracle;
  KernelSpec kernel;
  double kernel_lambda_per_row = 1e-3;
  MLPConfig mlp;

  static NuisanceSpec uniform(Backend b) {
    NuisanceSpec s;
    s.backend.fill(b);
    return s;
  }

  Backend& operator[](Nuisance n) { return backend[static_cast<std::size_t>(n)]; }
  Backend operator[](Nuisance n) const { return backend[static_cast<std::size_t>(n)]; }

  bool uses(Backend b) const {
    return std::find(backend.begin(), backend.end(), b) != backend.end();
  }
};

// Robustness sets: any one of them fit correctly keeps the mr estimator
// consistent.
inline constexpr std::array<NuisanceMask, 4> kRobustSets = {{
    {true, true, true, false, false, false},    // mu_S^O, mu_S^E, mu_Y^O
    {false, false, false, true, true, true},    // pi^E, pi^O, pi^G
    {true, false, false, false, true, false},   // mu_S^E, pi^O
    {false, true, true, true, false, true},     // pi^E, mu_S^O, mu_Y^O, pi^G
}};

// Correct on exactly the union of the listed sets, misspecified elsewhere.
inline NuisanceSpec misspecification_preset(const std::vector<int>& correct_sets) {
  NuisanceSpec s = NuisanceSpec::uniform(Backend::misspecified_parametric);
  for (int k : correct_sets) {
    if (k < 1 || k > 4) throw std::invalid_argument("robust set index must be 1..4");
    const auto& m = kRobustSets[static_cast<std::size_t>(k - 1)];
    for (int j = 0; j < kNuisanceCount; ++j) {
      if (m[static_cast<std::size_t>(j)]) s.backend[static_cast<std::size_t>(j)] = Backend::correct_parametric;
    }
  }
  return s;
}

namespace detail {

inline Vector labels_for_group(const PanelDataset& data, Group g) {
  Vector out(data.size());
  for (Index i = 0; i < data.size(); ++i) out[i] = data.group(i) == g ? 1.0 : 0.0;
  return out;
}

// Linear in (a, x) pooled over both arms of one group.
inline std::array<std::optional<FittedModel>, 2> pooled_linear(const PanelView& rows, const Vector& target) {
  const Matrix x = rows.x();
  const Vector a = rows.a();
  Matrix design(x.rows(), x.cols() + 1);
  design.col(0) = a;
  design.rightCols(x.cols()) = x;
  const FittedModel fit = fit_least_squares(design, target);
  std::array<std::optional<FittedModel>, 2> out;
  for (int arm = 0; arm < 2; ++arm) {
    out[arm] = FittedModel(
        [fit, arm](std::span<const double> v) {
          std::vector<double> row(v.size() + 1);
          row[0] = arm;
          std::copy(v.begin(), v.end(), row.begin() + 1);
          return fit(row);
        },
        x.cols(), false, fit.diagnostics(), fit.parameters());
  }
  return out;
}

}  // namespace detail

inline NuisanceSet fit_nuisances_shared(const PanelDataset& data, const MLPConfig& config, double clip_eps);

inline NuisanceSet fit_nuisances(const PanelDataset& data, const NuisanceSpec& spec) {
  const Index d = data.dim();
  const double p_o = spec.pinned_p_o.value_or(group_prior(data));
  if (spec.uses(Backend::oracle) && !spec.oracle) {
    throw std::invalid_argument("oracle nuisances requested but this generator exposes no analytic forms");
  }

  RegressorSpec poly = polynomial_spec(2);
  RegressorSpec kernel;
  kernel.kind = RegressorKind::kernel_ridge;
  kernel.kernel = spec.kernel;
  kernel.lambda_per_row = spec.kernel_lambda_per_row;

  NuisanceComponents c;
  // Means: per-(g, a) subgroup fits except the pooled misspecified form.
  auto fit_means = [&](Nuisance n, Group g, bool long_term, std::array<std::optional<FittedModel>, 2>& dst) {
    const Backend b = spec[n];
    if (b == Backend::oracle || b == Backend::mlp_shared) return;
    if (b == Backend::misspecified_parametric) {
      const PanelView rows = subgroup(data, g, std::nullopt);
      dst = detail::pooled_linear(rows, long_term ? rows.y() : rows.s());
      return;
    }
    const RegressorSpec& rs = b == Backend::kernel ? kernel : poly;
    for (int a = 0; a < 2; ++a) {
      const PanelView rows = subgroup(data, g, a);
      dst[a] = fit_regressor(rs, rows.x(), long_term ? rows.y() : rows.s());
    }
  };
  fit_means(Nuisance::mu_s_e, Group::experimental, false, c.mu_s_e);
  fit_means(Nuisance::mu_s_o, Group::observational, false, c.mu_s_o);
  fit_means(Nuisance::mu_y_o, Group::observational, true, c.mu_y_o);

  auto fit_within = [&](Nuisance n, Group g, std::optional<FittedModel>& dst) {
    const Backend b = spec[n];
    if (b == Backend::oracle || b == Backend::mlp_shared) return;
    const PanelView rows = subgroup(data, g, std::nullopt);
    ClassifierSpec cs;
    cs.clip = spec.clip;
    cs.kind = b == Backend::misspecified_parametric ? ClassifierKind::misspec_quadratic_logit
                                                    : ClassifierKind::logistic;
    dst = fit_classifier(cs, rows.x(), rows.a());
  };
  fit_within(Nuisance::pi_e, Group::experimental, c.pi_e);
  fit_within(Nuisance::pi_o, Group::observational, c.pi_o);

  switch (spec[Nuisance::pi_g]) {
    case Backend::correct_parametric:
      c.pi_g = fit_frequency(detail::labels_for_group(data, Group::experimental), d, spec.clip);
      break;
    case Backend::misspecified_parametric:
      // Deliberately the wrong group's frequency.
      c.pi_g = fit_frequency(detail::labels_for_group(data, Group::observational), d, spec.clip);
      break;
    case Backend::kernel: {
      LogisticOptions opt;
      opt.clip = spec.clip;
      c.pi_g = fit_logistic(data.x(), detail::labels_for_group(data, Group::experimental), opt);
      break;
    }
    default:
      break;
  }

  // Placeholders keep from_components total; they are overwritten below.
  NuisanceMask from_oracle{}, from_net{};
  FittedModel zero([](std::span<const double>) { return 0.0; }, d, false, {});
  FittedModel half([](std::span<const double>) { return 0.5; }, d, true, {});
  for (auto* pair : {&c.mu_s_e, &c.mu_s_o, &c.mu_y_o}) {
    for (auto& m : *pair) {
      if (!m) m = zero;
    }
  }
  for (auto* m : {&c.pi_e, &c.pi_o, &c.pi_g}) {
    if (!*m) *m = half;
  }
  for (int k = 0; k < kNuisanceCount; ++k) {
    from_oracle[static_cast<std::size_t>(k)] = spec.backend[static_cast<std::size_t>(k)] == Backend::oracle;
    from_net[static_cast<std::size_t>(k)] = spec.backend[static_cast<std::size_t>(k)] == Backend::mlp_shared;
  }

  NuisanceSet out = from_components(std::move(c), p_o, spec.clip, d);
  if (spec.uses(Backend::mlp_shared)) {
    out = out.combine(fit_nuisances_shared(data, spec.mlp, spec.clip), from_net);
  }
  if (spec.uses(Backend::oracle)) {
    out = out.combine(*spec.oracle, from_oracle);
  }
  return out.with_p_o(p_o);
}

// ---------------------------------------------------------------------------
// Shared-representation network as a nuisance backend

inline NuisanceSet fit_nuisances_shared(const PanelDataset& data, const MLPConfig& config, double clip_eps) {
  const Index n = data.size();
  const auto xs = Standardizer::fit(data.x());
  HeadBatch all;
  all.x = xs.apply(data.x());
  all.targets = BatchMatrix::Zero(n, kNetHeads);
  all.masks = BatchMatrix::Zero(n, kNetHeads);
  using H = NetHead;
  auto col = [](H h) { return static_cast<Index>(h); };
  for (Index i = 0; i < n; ++i) {
    const int a = data.treatment(i);
    const double s = data.short_term(i);
    if (data.group(i) == Group::experimental) {
      const Index m = col(a ? H::mu_s_e1 : H::mu_s_e0);
      all.targets(i, m) = s;
      all.masks(i, m) = 1.0;
      all.targets(i, col(H::pi_e)) = a;
      all.masks(i, col(H::pi_e)) = 1.0;
      all.targets(i, col(H::pi_g)) = 1.0;
    } else {
      const Index ms = col(a ? H::mu_s_o1 : H::mu_s_o0);
      const Index my = col(a ? H::mu_y_o1 : H::mu_y_o0);
      all.targets(i, ms) = s;
      all.masks(i, ms) = 1.0;
      all.targets(i, my) = *data.long_term(i);
      all.masks(i, my) = 1.0;
      all.targets(i, col(H::pi_o)) = a;
      all.masks(i, col(H::pi_o)) = 1.0;
      all.targets(i, col(H::pi_g)) = 0.0;
    }
    all.masks(i, col(H::pi_g)) = 1.0;
  }
  // Standardize each regression head over its supervised rows.
  std::array<double, kNetHeads> shift{}, scale{};
  scale.fill(1.0);
  for (int h = 0; h < static_cast<int>(H::pi_e); ++h) {
    const double m = all.masks.col(h).sum();
    if (m < 1.0) throw DataError(std::string("no supervised rows for head ") + std::to_string(h));
    const double mean = all.targets.col(h).cwiseProduct(all.masks.col(h)).sum() / m;
    double var = 0.0;
    for (Index i = 0; i < n; ++i) {
      if (all.masks(i, h) > 0) var += (all.targets(i, h) - mean) * (all.targets(i, h) - mean);
    }
    const double sd = std::sqrt(var / m);
    shift[static_cast<std::size_t>(h)] = mean;
    scale[static_cast<std::size_t>(h)] = sd > 1e-12 ? sd : 1.0;
    for (Index i = 0; i < n; ++i) {
      if (all.masks(i, h) > 0) all.targets(i, h) = (all.targets(i, h) - mean) / scale[static_cast<std::size_t>(h)];
    }
  }

  auto net = std::make_shared<SharedNuisanceNet>(static_cast<int>(data.dim()), config);
  train_shared(*net, all, unit_head_weights());

  auto eval = [net, xs, shift, scale, clip_eps, col](std::span<const double> v) {
    BatchMatrix row(1, static_cast<Index>(v.size()));
    xs.apply_row(v, row.data());
    const BatchMatrix o = net->forward(row, clip_eps);
    auto un = [&](H h) {
      const auto k = static_cast<std::size_t>(h);
      return shift[k] + scale[k] * o(0, static_cast<Index>(h));
    };
    NuisanceValues r;
    r.mu_s_e = {un(H::mu_s_e0), un(H::mu_s_e1)};
    r.mu_s_o = {un(H::mu_s_o0), un(H::mu_s_o1)};
    r.mu_y_o = {un(H::mu_y_o0), un(H::mu_y_o1)};
    r.pi_e = o(0, col(H::pi_e));
    r.pi_o = o(0, col(H::pi_o));
    r.pi_g = o(0, col(H::pi_g));
    return r;
  };
  return NuisanceSet(eval, group_prior(data), clip_eps, data.dim());
}

}  // namespace hlce

#endif  // HLCE_NUISANCE_HPP
