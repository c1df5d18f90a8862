#ifndef HLCE_SIMGEN_HPP
#define HLCE_SIMGEN_HPP

// Data-generating processes with ground truth.
//
// Dataset 1: closed-form structural equations with one latent confounder U.
// Dataset 2: as Dataset 1 but with GP-drawn baseline functions f0, f1.
// IHDP / News style: synthetic assignment and outcomes over a supplied
// covariate matrix, part of which is hidden as U.
//
// Noise draws are shared between the two potential outcomes of a row, so
// y1 - y0 equals tau(x) exactly wherever tau does not depend on U.

#include <Eigen/Cholesky>
#include <charconv>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "hlce/common.hpp"
#include "hlce/dataset.hpp"
#include "hlce/special.hpp"

namespace hlce {

struct GenOutput {
  PanelDataset dataset;
  GroundTruth truth;
};

struct NoiseScales {
  double s = 1.0;
  double y = 1.0;
};

inline double dataset1_tau(double x) { return 2.0 + 2.0 * x + x * x; }

namespace detail {

// Treatments with both arms present in each group (resampled otherwise).
inline std::vector<int> draw_arms(Index n, Rng& rng) {
  if (n < 2) throw std::invalid_argument("each group needs at least 2 rows");
  std::bernoulli_distribution coin(0.5);
  std::vector<int> a(static_cast<std::size_t>(n));
  for (;;) {
    int ones = 0;
    for (auto& v : a) {
      v = coin(rng) ? 1 : 0;
      ones += v;
    }
    if (ones > 0 && ones < n) return a;
  }
}

// Covariate and latent confounder for Dataset 1/2.
// E: (X, U) ~ N(((2A-1)/2, 0), I); O: mean ((1-2A)/2, 0), corr(X, U) = A - 1/2.
inline std::pair<double, double> draw_xu(Group g, int a, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  if (g == Group::experimental) {
    return {(2.0 * a - 1.0) / 2.0 + z(rng), z(rng)};
  }
  const double mx = (1.0 - 2.0 * a) / 2.0;
  const double c = a - 0.5;
  const double zx = z(rng);
  const double zu = z(rng);
  return {mx + zx, c * zx + std::sqrt(1.0 - c * c) * zu};
}

template <class Outcomes>
GenOutput assemble_toy(Index n_e, Index n_o, std::uint64_t seed, const NoiseScales& noise, Outcomes outcomes,
                       double (*tau)(double)) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  const Index n = n_e + n_o;
  std::vector<Group> g;
  std::vector<int> a;
  g.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n_e; ++i) g.push_back(Group::experimental);
  for (Index i = 0; i < n_o; ++i) g.push_back(Group::observational);
  {
    auto ae = draw_arms(n_e, rng);
    auto ao = draw_arms(n_o, rng);
    a = std::move(ae);
    a.insert(a.end(), ao.begin(), ao.end());
  }
  Matrix x(n, 1);
  Vector s(n);
  std::vector<std::optional<double>> y(static_cast<std::size_t>(n));
  GroundTruth truth{Vector(n), Vector(n), Vector(n), Vector(n), Vector(n)};
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto [xi, ui] = draw_xu(g[k], a[k], rng);
    const double es = noise.s * z(rng);
    const double ey = noise.y * z(rng);
    double pot[2][2];
    for (int arm = 0; arm < 2; ++arm) {
      const auto [sa, ya] = outcomes(arm, xi, ui, es, ey);
      pot[arm][0] = sa;
      pot[arm][1] = ya;
    }
    x(i, 0) = xi;
    s[i] = pot[a[k]][0];
    if (g[k] == Group::observational) y[k] = pot[a[k]][1];
    truth.tau[i] = tau(xi);
    truth.s0[i] = pot[0][0];
    truth.s1[i] = pot[1][0];
    truth.y0[i] = pot[0][1];
    truth.y1[i] = pot[1][1];
  }
  return {PanelDataset(std::move(g), std::move(a), std::move(x), std::move(s), std::move(y)), std::move(truth)};
}

}  // namespace detail

inline GenOutput sample_dataset1(Index n_e, Index n_o, std::uint64_t seed, const NoiseScales& noise = {}) {
  auto outcomes = [](int a, double x, double u, double es, double ey) {
    const double s = 1.0 + a + x + 2.0 * a * x + 0.5 * x * x + a * x * x + u + es;
    const double y = 2.0 + 3.0 * a + x + 4.0 * a * x + x * x + 2.0 * a * x * x + 2.0 * u - s + ey;
    return std::pair{s, y};
  };
  return detail::assemble_toy(n_e, n_o, seed, noise, outcomes, &dataset1_tau);
}

// ---------------------------------------------------------------------------
// Gaussian-process paths

// Piecewise-linear path through grid values, held constant outside the grid.
class GpPath {
 public:
  GpPath(std::vector<double> grid, Vector values) : grid_(std::move(grid)), values_(std::move(values)) {}

  double operator()(double x) const {
    if (x <= grid_.front()) return values_[0];
    if (x >= grid_.back()) return values_[static_cast<Index>(grid_.size()) - 1];
    const auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
    const auto hi = static_cast<std::size_t>(it - grid_.begin());
    const std::size_t lo = hi - 1;
    const double t = (x - grid_[lo]) / (grid_[hi] - grid_[lo]);
    return (1.0 - t) * values_[static_cast<Index>(lo)] + t * values_[static_cast<Index>(hi)];
  }

  const std::vector<double>& grid() const { return grid_; }
  const Vector& values() const { return values_; }

 private:
  std::vector<double> grid_;
  Vector values_;
};

inline std::vector<double> uniform_grid(double lo, double hi, int points) {
  if (points < 2) throw std::invalid_argument("grid needs at least 2 points");
  std::vector<double> g(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) g[static_cast<std::size_t>(i)] = lo + (hi - lo) * i / (points - 1);
  return g;
}

// Lower Cholesky factor of the Matern Gram matrix, with escalating jitter.
inline Eigen::MatrixXd matern_cholesky(const std::vector<double>& grid, double l, double nu) {
  if (grid.size() < 2) throw std::invalid_argument("grid needs at least 2 points");
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (!(grid[i] > grid[i - 1])) throw std::invalid_argument("grid must be strictly increasing");
  }
  const auto m = static_cast<Index>(grid.size());
  Eigen::MatrixXd k(m, m);
  for (Index i = 0; i < m; ++i) {
    k(i, i) = 1.0;
    for (Index j = 0; j < i; ++j) {
      k(i, j) = k(j, i) = matern_kernel(std::abs(grid[static_cast<std::size_t>(i)] - grid[static_cast<std::size_t>(j)]), l, nu);
    }
  }
  for (double jitter = 1e-10; jitter <= 1e-6 * 1.0001; jitter *= 10.0) {
    Eigen::LLT<Eigen::MatrixXd> llt(k + jitter * Eigen::MatrixXd::Identity(m, m));
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw NumericalError("Matern Gram matrix not positive definite even with jitter 1e-6");
}

inline GpPath sample_gp_path(const std::vector<double>& grid, const Eigen::MatrixXd& chol, Rng& rng) {
  std::normal_distribution<double> z(0.0, 1.0);
  Vector w(chol.rows());
  for (Index i = 0; i < w.size(); ++i) w[i] = z(rng);
  return GpPath(grid, chol * w);
}

inline GpPath sample_gp_path(const std::vector<double>& grid, double l, double nu, std::uint64_t seed) {
  Rng rng(seed);
  return sample_gp_path(grid, matern_cholesky(grid, l, nu), rng);
}

struct Dataset2Options {
  double length_scale = 1.0;
  double nu = 2.0;
  double grid_lo = -5.0;
  double grid_hi = 5.0;
  int grid_points = 501;
  NoiseScales noise;
};

namespace detail {

// The Gram factor depends only on the grid and kernel; cache the default one.
inline const Eigen::MatrixXd& cached_cholesky() {
  static const Dataset2Options defaults;
  static const Eigen::MatrixXd chol =
      matern_cholesky(uniform_grid(defaults.grid_lo, defaults.grid_hi, defaults.grid_points), defaults.length_scale,
                      defaults.nu);
  return chol;
}

}  // namespace detail

inline GenOutput sample_dataset2(Index n_e, Index n_o, std::uint64_t seed, const Dataset2Options& opt = {}) {
  const auto grid = uniform_grid(opt.grid_lo, opt.grid_hi, opt.grid_points);
  const bool is_default = opt.length_scale == 1.0 && opt.nu == 2.0 && opt.grid_lo == -5.0 && opt.grid_hi == 5.0 &&
                          opt.grid_points == 501;
  Eigen::MatrixXd own;
  if (!is_default) own = matern_cholesky(grid, opt.length_scale, opt.nu);
  const Eigen::MatrixXd& chol = is_default ? detail::cached_cholesky() : own;
  Rng path_rng(derive_seed(seed, 0x6770));
  const GpPath f0 = sample_gp_path(grid, chol, path_rng);
  const GpPath f1 = sample_gp_path(grid, chol, path_rng);
  auto outcomes = [&f0, &f1](int a, double x, double u, double es, double ey) {
    const double s = f0(x) + a + 2.0 * a * x + a * x * x + u + es;
    const double y = f1(x) + 3.0 * a + x + 4.0 * a * x + 2.0 * a * x * x + 2.0 * u - s + ey;
    return std::pair{s, y};
  };
  return detail::assemble_toy(n_e, n_o, seed, opt.noise, outcomes, &dataset1_tau);
}

// ---------------------------------------------------------------------------
// Semi-synthetic presets

enum class SemiSynthPreset { ihdp, news };

inline const char* preset_name(SemiSynthPreset p) { return p == SemiSynthPreset::ihdp ? "ihdp" : "news"; }

struct SemiSynthParams {
  SemiSynthPreset preset = SemiSynthPreset::ihdp;
  Matrix covariates;
  // Hidden columns. Empty: the preset's count, chosen at random from the
  // coefficient seed.
  std::vector<Index> unobserved;
  std::uint64_t coefficient_seed = 0;
  std::optional<double> offset_g, offset_e, offset_o;
  // Target share of experimental rows; default 1/3 (IHDP, E:O = 1:2) or 1/5 (News, 1:4).
  std::optional<double> target_e_share;
  double p_lo = 0.05;
  double p_hi = 0.95;
  NoiseScales noise;

  static constexpr Index expected_columns(SemiSynthPreset p) { return p == SemiSynthPreset::ihdp ? 25 : 498; }
  static constexpr Index expected_unobserved(SemiSynthPreset p) { return p == SemiSynthPreset::ihdp ? 8 : 166; }
  double e_share() const { return target_e_share.value_or(preset == SemiSynthPreset::ihdp ? 1.0 / 3.0 : 0.2); }
};

// Calibrated offsets and how many rows needed clipping.
struct SemiSynthDiagnostics {
  double offset_g = 0.0, offset_e = 0.0, offset_o = 0.0;
  double e_share = 0.0;
  Index clipped_e = 0, clipped_o = 0;
  std::vector<Index> unobserved;
  Vector p_g, p_e, p_o;
};

struct SemiSynthOutput {
  GenOutput gen;
  SemiSynthDiagnostics diagnostics;
};

namespace detail {

inline Vector gaussian_vector(Index d, double mean, Rng& rng) {
  std::normal_distribution<double> z(mean, 1.0);
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = z(rng);
  return v;
}

// Entries from {0, .1, .2, .3, .4} with probabilities (.6, .1, .1, .1, .1).
inline Vector sparse_coefficients(Index d, Rng& rng) {
  std::discrete_distribution<int> pick({0.6, 0.1, 0.1, 0.1, 0.1});
  Vector v(d);
  for (Index i = 0; i < d; ++i) v[i] = 0.1 * pick(rng);
  return v;
}

inline Vector mean_normalized(Index d, Rng& rng) {
  Vector v = gaussian_vector(d, 1.0, rng);
  const double m = v.mean();
  if (std::abs(m) < 1e-12) throw NumericalError("weight vector with zero mean");
  return v / m;
}

// p_i = sigmoid(lin_i - offset); offset chosen so that mean p = target.
inline double calibrate_share(const Vector& lin, double target) {
  if (!(target > 0.0 && target < 1.0)) throw std::invalid_argument("target share must lie in (0, 1)");
  auto share = [&](double off) {
    double acc = 0.0;
    for (Index i = 0; i < lin.size(); ++i) acc += sigmoid(lin[i] - off);
    return acc / static_cast<double>(lin.size());
  };
  double lo = lin.minCoeff() - 60.0;
  double hi = lin.maxCoeff() + 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (share(mid) > target ? lo : hi) = mid;
  }
  const double off = 0.5 * (lo + hi);
  const double got = share(off);
  if (std::abs(got - target) > 1e-3) {
    throw NumericalError("group-share calibration failed: target " + std::to_string(target) + ", achieved " +
                         std::to_string(got) + " over offsets [" + std::to_string(lin.minCoeff() - 60.0) + ", " +
                         std::to_string(lin.maxCoeff() + 60.0) + "]");
  }
  return off;
}

// Centre the linear predictor's range; returns probabilities clipped to [lo, hi].
inline Vector centred_probabilities(const Vector& lin, std::optional<double> fixed, double lo, double hi,
                                    double& offset, Index& clipped) {
  offset = fixed.value_or(0.5 * (lin.minCoeff() + lin.maxCoeff()));
  Vector p(lin.size());
  clipped = 0;
  for (Index i = 0; i < lin.size(); ++i) {
    const double raw = sigmoid(lin[i] - offset);
    p[i] = std::clamp(raw, lo, hi);
    if (p[i] != raw) ++clipped;
  }
  return p;
}

}  // namespace detail

inline SemiSynthOutput sample_semisynth(const SemiSynthParams& params, std::uint64_t seed) {
  const Matrix& cov = params.covariates;
  const Index n = cov.rows();
  const Index total = cov.cols();
  if (n < 8) throw std::invalid_argument("semi-synthetic generator needs at least 8 rows");
  if (!cov.allFinite()) throw DataError("covariate matrix has non-finite entries");

  Rng coef_rng(params.coefficient_seed);
  std::vector<Index> hidden = params.unobserved;
  if (hidden.empty()) {
    const Index want = SemiSynthParams::expected_unobserved(params.preset);
    if (total != SemiSynthParams::expected_columns(params.preset)) {
      throw DataError(std::string(preset_name(params.preset)) + " preset expects " +
                      std::to_string(SemiSynthParams::expected_columns(params.preset)) + " covariate columns, got " +
                      std::to_string(total) + "; pass the unobserved columns explicitly to override");
    }
    std::vector<Index> all(static_cast<std::size_t>(total));
    std::iota(all.begin(), all.end(), Index{0});
    std::shuffle(all.begin(), all.end(), coef_rng);
    hidden.assign(all.begin(), all.begin() + want);
  }
  std::sort(hidden.begin(), hidden.end());
  if (std::adjacent_find(hidden.begin(), hidden.end()) != hidden.end()) throw DataError("duplicate unobserved column");
  for (Index c : hidden) {
    if (c < 0 || c >= total) throw DataError("unobserved column index out of range");
  }
  if (static_cast<Index>(hidden.size()) >= total) throw DataError("at least one covariate must stay observed");
  std::vector<Index> shown;
  for (Index c = 0; c < total; ++c) {
    if (!std::binary_search(hidden.begin(), hidden.end(), c)) shown.push_back(c);
  }
  const auto dx = static_cast<Index>(shown.size());
  const auto du = static_cast<Index>(hidden.size());
  Matrix x(n, dx), u(n, du);
  for (Index j = 0; j < dx; ++j) x.col(j) = cov.col(shown[static_cast<std::size_t>(j)]);
  for (Index j = 0; j < du; ++j) u.col(j) = cov.col(hidden[static_cast<std::size_t>(j)]);

  SemiSynthDiagnostics diag;
  diag.unobserved = hidden;
  Vector lin_g, lin_e, lin_o, s1m, s0m, y1m, y0m, s_u, y_u;
  if (params.preset == SemiSynthPreset::ihdp) {
    const Vector wg = detail::gaussian_vector(dx, 0.0, coef_rng);
    const Vector we = detail::gaussian_vector(dx, 0.0, coef_rng);
    const Vector wox = detail::gaussian_vector(dx, 0.0, coef_rng);
    const Vector wou = detail::gaussian_vector(du, 0.0, coef_rng);
    const Vector ws1 = detail::sparse_coefficients(dx, coef_rng);
    const Vector ws0 = detail::sparse_coefficients(dx, coef_rng);
    const Vector wy1 = detail::sparse_coefficients(dx, coef_rng);
    const Vector wy0 = detail::sparse_coefficients(dx, coef_rng);
    const Vector wu = detail::sparse_coefficients(du, coef_rng);
    lin_g = x * wg;
    lin_e = x * we;
    lin_o = x * wox + 3.0 * (u * wou);
    s1m = (x * ws1).array() + 4.0;
    s0m = ((x * ws0).array() + 0.5 * ws0.sum()).exp();
    y1m = (x * wy1).array() + 8.0;
    y0m = ((x * wy0).array() + 0.5 * wy0.sum()).exp();
    s_u = u * wu;
    y_u = 2.0 * s_u;
  } else {
    const Vector v1 = detail::mean_normalized(dx, coef_rng);
    const Vector v2 = detail::mean_normalized(dx, coef_rng);
    const Vector v3 = detail::mean_normalized(dx, coef_rng);
    const Vector v4 = detail::mean_normalized(du, coef_rng);
    const Vector v5 = detail::gaussian_vector(dx, 1.0, coef_rng);
    const Vector v6 = detail::gaussian_vector(du, 1.0, coef_rng);
    const Vector v7 = detail::gaussian_vector(dx, 1.0, coef_rng);
    const Vector v8 = detail::gaussian_vector(dx, 1.0, coef_rng);
    const Vector v9 = detail::gaussian_vector(dx, 1.0, coef_rng);
    const Matrix x2 = x.array().square().matrix();
    // p = 1 / (1 + exp(l + off)) = sigmoid(-l - off)
    lin_g = -(x * v1);
    lin_e = -(x * v2);
    lin_o = -(x * v3 + u * v4);
    s1m = x * v5 + x2 * v5;
    s0m = 2.0 * (x * v7) + 3.0 * (x2 * v7);
    y1m = (x * v8 + x2 * v8).array() + 4.0;
    y0m = 2.0 * (x * v9) + 3.0 * (x2 * v9);
    s_u = u * v6;
    y_u = 2.0 * s_u;
  }

  diag.offset_g = params.offset_g ? *params.offset_g : detail::calibrate_share(lin_g, params.e_share());
  diag.p_g = lin_g.unaryExpr([&](double l) { return sigmoid(l - diag.offset_g); });
  diag.p_e = detail::centred_probabilities(lin_e, params.offset_e, params.p_lo, params.p_hi, diag.offset_e,
                                           diag.clipped_e);
  diag.p_o = detail::centred_probabilities(lin_o, params.offset_o, params.p_lo, params.p_hi, diag.offset_o,
                                           diag.clipped_o);

  Rng rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<Group> g(static_cast<std::size_t>(n));
  std::vector<int> a(static_cast<std::size_t>(n));
  Vector s(n);
  std::vector<std::optional<double>> y(static_cast<std::size_t>(n));
  GroundTruth truth{Vector(n), Vector(n), Vector(n), Vector(n), Vector(n)};
  Index n_e = 0;
  for (Index i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    g[k] = unif(rng) < diag.p_g[i] ? Group::experimental : Group::observational;
    const double pa = g[k] == Group::experimental ? diag.p_e[i] : diag.p_o[i];
    a[k] = unif(rng) < pa ? 1 : 0;
    const double es = params.noise.s * z(rng);
    const double ey = params.noise.y * z(rng);
    truth.s1[i] = s1m[i] + s_u[i] + es;
    truth.s0[i] = s0m[i] + s_u[i] + es;
    truth.y1[i] = y1m[i] + y_u[i] - truth.s1[i] + ey;
    truth.y0[i] = y0m[i] + y_u[i] - truth.s0[i] + ey;
    truth.tau[i] = (y1m[i] - s1m[i]) - (y0m[i] - s0m[i]);
    s[i] = a[k] ? truth.s1[i] : truth.s0[i];
    if (g[k] == Group::observational) y[k] = a[k] ? truth.y1[i] : truth.y0[i];
    n_e += g[k] == Group::experimental;
  }
  diag.e_share = static_cast<double>(n_e) / static_cast<double>(n);
  return {{PanelDataset(std::move(g), std::move(a), std::move(x), std::move(s), std::move(y)), std::move(truth)},
          std::move(diag)};
}

// ---------------------------------------------------------------------------
// Stand-in covariates (the real IHDP / News files are not bundled)

// 6 standardized continuous and 19 binary columns, like the IHDP release.
inline Matrix ihdp_like_covariates(Index n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.1, 0.9);
  Matrix x(n, 25);
  std::array<double, 19> rate{};
  for (auto& r : rate) r = unif(rng);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < 6; ++j) x(i, j) = z(rng);
    for (Index j = 0; j < 19; ++j) {
      x(i, 6 + j) = std::bernoulli_distribution(rate[static_cast<std::size_t>(j)])(rng) ? 1.0 : 0.0;
    }
  }
  return x;
}

// Sparse word counts: each document mixes a few topics with skewed word rates.
inline Matrix news_like_covariates(Index n, std::uint64_t seed, Index d = 498) {
  Rng rng(seed);
  constexpr int topics = 10;
  std::gamma_distribution<double> word_rate(0.3, 0.2);
  std::vector<std::vector<double>> rate(topics, std::vector<double>(static_cast<std::size_t>(d)));
  for (auto& t : rate) {
    for (auto& r : t) r = word_rate(rng);
  }
  std::uniform_int_distribution<int> pick(0, topics - 1);
  Matrix x(n, d);
  for (Index i = 0; i < n; ++i) {
    const auto& t1 = rate[static_cast<std::size_t>(pick(rng))];
    const auto& t2 = rate[static_cast<std::size_t>(pick(rng))];
    for (Index j = 0; j < d; ++j) {
      const double lam = 0.5 * (t1[static_cast<std::size_t>(j)] + t2[static_cast<std::size_t>(j)]);
      x(i, j) = static_cast<double>(std::poisson_distribution<int>(lam)(rng));
    }
  }
  return x;
}

// Numeric CSV, one unit per row; a non-numeric first line is taken as a header.
inline Matrix load_covariates_csv(const std::string& path) {
  const auto lines = detail::read_lines(path);
  std::vector<std::vector<double>> rows;
  std::size_t first = 0;
  if (!lines.empty()) {
    const auto fields = detail::split_fields(lines[0]);
    double tmp = 0.0;
    const auto f = detail::trim(fields.empty() ? std::string_view{} : fields[0]);
    const auto res = std::from_chars(f.data(), f.data() + f.size(), tmp);
    if (res.ec != std::errc() || res.ptr != f.data() + f.size()) first = 1;
  }
  for (std::size_t k = first; k < lines.size(); ++k) {
    if (detail::trim(lines[k]).empty()) continue;
    std::vector<double> row;
    for (auto f : detail::split_fields(lines[k])) {
      row.push_back(detail::parse_double(f, "covariate on line " + std::to_string(k + 1)));
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw DataError("line " + std::to_string(k + 1) + ": expected " + std::to_string(rows.front().size()) +
                      " fields, got " + std::to_string(row.size()));
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError("covariate file has no data rows: " + path);
  Matrix x(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) x(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return x;
}

}  // namespace hlce

#endif  // HLCE_SIMGEN_HPP
