#ifndef HLCE_REGRESS_HPP
#define HLCE_REGRESS_HPP

// Regression and probability-model primitives: (ridge) least squares,
// polynomial expansion, IRLS logistic regression, the one-parameter
// quadratic-logit propensity, constant frequency models and kernel ridge.

#include <cmath>
#include <numeric>
#include <optional>
#include <vector>

#include "hlce/common.hpp"
#include "hlce/mlp.hpp"
#include "hlce/model.hpp"
#include "hlce/special.hpp"

namespace hlce {

inline constexpr double kDefaultClip = 0.01;

// ---------------------------------------------------------------------------
// Least squares

struct LinearCoefficients {
  double intercept = 0.0;
  Vector slopes;
  double rss = 0.0;
};

// Minimizes sum (y - b0 - X b)^2 + lambda |b|^2 with the intercept left
// unpenalized (columns and response are centered first).
inline LinearCoefficients solve_least_squares(const Matrix& x, const Vector& y, double lambda) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (n < 1) throw std::invalid_argument("least squares needs at least one row");
  if (y.size() != n) throw std::invalid_argument("least squares: response length mismatch");
  if (lambda < 0.0) throw std::invalid_argument("ridge penalty must be >= 0");
  if (!x.allFinite() || !y.allFinite()) throw std::invalid_argument("least squares: non-finite input");
  const Eigen::RowVectorXd mean_x = x.colwise().mean();
  const double mean_y = y.mean();
  LinearCoefficients out;
  out.slopes = Vector::Zero(d);
  if (d > 0) {
    const Eigen::MatrixXd xc = x.rowwise() - mean_x;
    const Vector yc = y.array() - mean_y;
    if (lambda == 0.0) {
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
      if (qr.rank() < d) {
        throw NumericalError("rank-deficient design (rank " + std::to_string(qr.rank()) + " < " +
                             std::to_string(d) + "); use a ridge penalty lambda > 0");
      }
      out.slopes = qr.solve(yc);
    } else {
      Eigen::MatrixXd gram = xc.transpose() * xc;
      gram.diagonal().array() += lambda;
      Eigen::LLT<Eigen::MatrixXd> llt(gram);
      if (llt.info() != Eigen::Success) throw NumericalError("ridge normal equations not positive definite");
      out.slopes = llt.solve(xc.transpose() * yc);
    }
  }
  out.intercept = mean_y - mean_x.dot(out.slopes);
  out.rss = (y - ((x * out.slopes).array() + out.intercept).matrix()).squaredNorm();
  return out;
}

inline FittedModel fit_least_squares(const Matrix& x, const Vector& y, double lambda = 0.0) {
  auto c = solve_least_squares(x, y, lambda);
  Vector params(c.slopes.size() + 1);
  params << c.intercept, c.slopes;
  FitDiagnostics diag;
  diag.final_loss = c.rss;
  auto fn = [b0 = c.intercept, b = c.slopes](std::span<const double> v) {
    double acc = b0;
    for (std::size_t j = 0; j < v.size(); ++j) acc += b[static_cast<Index>(j)] * v[j];
    return acc;
  };
  return FittedModel(fn, x.cols(), false, diag, params);
}

// ---------------------------------------------------------------------------
// Polynomial features

// Monomial index tuples i1 <= ... <= ik of total degree 1..degree in graded
// lexicographic order, e.g. d=2, degree=2: (0) (1) (0,0) (0,1) (1,1).
inline std::vector<std::vector<int>> monomial_terms(Index d, int degree, Index max_columns = 100000) {
  if (degree < 1) throw std::invalid_argument("polynomial degree must be >= 1");
  std::vector<std::vector<int>> terms;
  for (int k = 1; k <= degree; ++k) {
    std::vector<int> idx(static_cast<std::size_t>(k), 0);
    while (true) {
      terms.push_back(idx);
      if (static_cast<Index>(terms.size()) > max_columns) {
        throw std::invalid_argument("polynomial expansion exceeds " + std::to_string(max_columns) + " columns");
      }
      int pos = k - 1;
      while (pos >= 0 && idx[static_cast<std::size_t>(pos)] == d - 1) --pos;
      if (pos < 0) break;
      const int v = idx[static_cast<std::size_t>(pos)] + 1;
      for (int q = pos; q < k; ++q) idx[static_cast<std::size_t>(q)] = v;
    }
  }
  return terms;
}

inline void expand_monomials(std::span<const double> x, const std::vector<std::vector<int>>& terms, double* out) {
  for (std::size_t c = 0; c < terms.size(); ++c) {
    double v = 1.0;
    for (int j : terms[c]) v *= x[static_cast<std::size_t>(j)];
    out[c] = v;
  }
}

// No intercept column; the fitter adds it.
inline Matrix polynomial_features(const Matrix& x, int degree, Index max_columns = 100000) {
  const auto terms = monomial_terms(x.cols(), degree, max_columns);
  Matrix out(x.rows(), static_cast<Index>(terms.size()));
  for (Index i = 0; i < x.rows(); ++i) expand_monomials(row_span(x, i), terms, out.row(i).data());
  return out;
}

inline FittedModel fit_polynomial(const Matrix& x, const Vector& y, int degree, double lambda = 0.0) {
  const auto terms = monomial_terms(x.cols(), degree);
  auto c = solve_least_squares(polynomial_features(x, degree), y, lambda);
  Vector params(c.slopes.size() + 1);
  params << c.intercept, c.slopes;
  FitDiagnostics diag;
  diag.final_loss = c.rss;
  auto fn = [terms, b0 = c.intercept, b = c.slopes](std::span<const double> v) {
    std::vector<double> f(terms.size());
    expand_monomials(v, terms, f.data());
    double acc = b0;
    for (std::size_t j = 0; j < f.size(); ++j) acc += b[static_cast<Index>(j)] * f[j];
    return acc;
  };
  return FittedModel(fn, x.cols(), false, diag, params);
}

// ---------------------------------------------------------------------------
// Classifiers

struct LogisticOptions {
  int max_iter = 100;
  double tol = 1e-8;
  double clip = kDefaultClip;
  // L2 penalty on slopes (not the intercept).
  double ridge = 0.0;
};

namespace detail {

inline void require_binary(const Vector& labels) {
  bool has0 = false;
  bool has1 = false;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels[i] == 0.0) {
      has0 = true;
    } else if (labels[i] == 1.0) {
      has1 = true;
    } else {
      throw std::invalid_argument("labels must be 0 or 1");
    }
  }
  if (!has0 || !has1) throw std::invalid_argument("classifier needs both classes present");
}

inline double bernoulli_loglik(const Vector& eta, const Vector& labels) {
  double ll = 0.0;
  for (Index i = 0; i < eta.size(); ++i) {
    // log sigma(eta) = -softplus(-eta)
    const double e = eta[i];
    const double sp = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += labels[i] * e - sp;
  }
  return ll;
}

}  // namespace detail

// Maximum likelihood for sigma(b0 + X b) by IRLS with step halving. Diverging
// coefficients (separation) set a warning flag rather than failing.
inline FittedModel fit_logistic(const Matrix& x, const Vector& labels, const LogisticOptions& opt = {}) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (labels.size() != n) throw std::invalid_argument("logistic: label length mismatch");
  detail::require_binary(labels);
  Eigen::MatrixXd design(n, d + 1);
  design.col(0).setOnes();
  design.rightCols(d) = x;
  Vector beta = Vector::Zero(d + 1);
  Eigen::MatrixXd penalty = Eigen::MatrixXd::Zero(d + 1, d + 1);
  penalty.diagonal().tail(d).setConstant(opt.ridge);
  auto objective = [&](const Vector& b) {
    return detail::bernoulli_loglik(design * b, labels) - 0.5 * opt.ridge * b.tail(d).squaredNorm();
  };
  double obj = objective(beta);
  FitDiagnostics diag;
  diag.converged = false;
  for (int it = 0; it < opt.max_iter; ++it) {
    const Vector eta = design * beta;
    Vector p(n), w(n);
    for (Index i = 0; i < n; ++i) {
      p[i] = sigmoid(eta[i]);
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
    }
    Eigen::MatrixXd h = design.transpose() * w.asDiagonal() * design + penalty;
    h.diagonal().array() += 1e-12;
    const Vector grad = design.transpose() * (labels - p) - penalty * beta;
    Vector step = h.ldlt().solve(grad);
    if (!step.allFinite()) break;
    double scale = 1.0;
    Vector candidate = beta + step;
    double cand_obj = objective(candidate);
    while (cand_obj < obj - 1e-12 && scale > 1e-6) {
      scale *= 0.5;
      candidate = beta + scale * step;
      cand_obj = objective(candidate);
    }
    const double change = (candidate - beta).lpNorm<Eigen::Infinity>();
    beta = candidate;
    obj = cand_obj;
    diag.iterations = it + 1;
    if (change < opt.tol) {
      diag.converged = true;
      break;
    }
  }
  // IRLS creeps up only logarithmically under separation, so a fit that never
  // settled but already reproduces every label counts as well.
  bool reproduces = !diag.converged;
  if (reproduces) {
    const Vector eta = design * beta;
    for (Index i = 0; i < n && reproduces; ++i) reproduces = std::abs(labels[i] - sigmoid(eta[i])) < 1e-6;
  }
  if (reproduces || (beta.tail(d).size() > 0 && beta.tail(d).lpNorm<Eigen::Infinity>() > 30.0)) {
    diag.separation_warning = true;
    diag.note = "coefficients diverging: likely complete separation";
  }
  if (!diag.converged && !diag.separation_warning) diag.note = "IRLS reached max_iter";
  diag.final_loss = -obj;
  auto fn = [beta, eps = opt.clip](std::span<const double> v) {
    double eta = beta[0];
    for (std::size_t j = 0; j < v.size(); ++j) eta += beta[static_cast<Index>(j) + 1] * v[j];
    return clip(sigmoid(eta), eps);
  };
  return FittedModel(fn, d, true, diag, beta);
}

// p(a=1|x) = 1 / (1 + exp(alpha x^2)), alpha by Newton on the (concave)
// scalar log-likelihood. parameters() holds alpha.
inline FittedModel fit_misspec_propensity(const Matrix& x, const Vector& labels, double eps = kDefaultClip) {
  if (x.cols() != 1) throw std::invalid_argument("quadratic-logit propensity needs a scalar covariate");
  if (labels.size() != x.rows()) throw std::invalid_argument("label length mismatch");
  detail::require_binary(labels);
  const Vector x2 = x.col(0).array().square();
  auto loglik = [&](double alpha) { return detail::bernoulli_loglik(-alpha * x2, labels); };
  double alpha = 0.0;
  double ll = loglik(alpha);
  FitDiagnostics diag;
  diag.converged = false;
  for (int it = 0; it < 100; ++it) {
    double score = 0.0;
    double info = 0.0;
    for (Index i = 0; i < x2.size(); ++i) {
      const double p = sigmoid(-alpha * x2[i]);
      score += x2[i] * (p - labels[i]);
      info += x2[i] * x2[i] * p * (1.0 - p);
    }
    if (info <= 0.0) break;
    double step = score / info;
    double cand = alpha + step;
    double cand_ll = loglik(cand);
    while (cand_ll < ll - 1e-12 && std::abs(step) > 1e-12) {
      step *= 0.5;
      cand = alpha + step;
      cand_ll = loglik(cand);
    }
    alpha = cand;
    ll = cand_ll;
    diag.iterations = it + 1;
    if (std::abs(step) < 1e-10) {
      diag.converged = true;
      break;
    }
  }
  diag.final_loss = -ll;
  Vector params(1);
  params << alpha;
  auto fn = [alpha, eps](std::span<const double> v) { return clip(sigmoid(-alpha * v[0] * v[0]), eps); };
  return FittedModel(fn, 1, true, diag, params);
}

// Constant model at the clipped label mean.
inline FittedModel fit_frequency(const Vector& labels, Index input_dim, double eps = kDefaultClip) {
  if (labels.size() < 1) throw std::invalid_argument("frequency model needs at least one label");
  const double p = clip(labels.mean(), eps);
  Vector params(1);
  params << p;
  return FittedModel([p](std::span<const double>) { return p; }, input_dim, true, FitDiagnostics{}, params);
}

// ---------------------------------------------------------------------------
// Kernel ridge

enum class KernelFamily { rbf, matern };

struct KernelSpec {
  KernelFamily family = KernelFamily::rbf;
  // <= 0 selects the median pairwise distance of the training inputs.
  double bandwidth = 0.0;
  double nu = 2.0;
  // Exact solve up to this many rows; Nystrom approximation beyond.
  Index exact_limit = 1000;
  Index landmarks = 200;
  std::uint64_t seed = 7;
};

namespace detail {

inline double kernel_value(const KernelSpec& spec, double bandwidth, double sq_dist) {
  if (spec.family == KernelFamily::rbf) return std::exp(-sq_dist / (2.0 * bandwidth * bandwidth));
  return matern_kernel(std::sqrt(std::max(sq_dist, 0.0)), bandwidth, spec.nu);
}

inline Eigen::MatrixXd kernel_matrix(const KernelSpec& spec, double h, const Matrix& a, const Matrix& b) {
  const Vector na = a.rowwise().squaredNorm();
  const Vector nb = b.rowwise().squaredNorm();
  Eigen::MatrixXd sq = -2.0 * (a * b.transpose());
  sq.colwise() += na;
  sq.rowwise() += nb.transpose();
  return sq.unaryExpr([&](double v) { return kernel_value(spec, h, std::max(v, 0.0)); });
}

// Evenly spaced row indices (deterministic subsample).
inline std::vector<Index> spaced_rows(Index n, Index m) {
  std::vector<Index> out;
  if (m >= n) {
    out.resize(static_cast<std::size_t>(n));
    std::iota(out.begin(), out.end(), Index{0});
    return out;
  }
  for (Index k = 0; k < m; ++k) out.push_back(k * n / m);
  return out;
}

}  // namespace detail

// Median pairwise Euclidean distance (on at most 500 evenly spaced rows).
inline double median_heuristic(const Matrix& x) {
  const auto rows = detail::spaced_rows(x.rows(), 500);
  std::vector<double> dists;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      dists.push_back((x.row(rows[i]) - x.row(rows[j])).norm());
    }
  }
  if (dists.empty()) return 1.0;
  auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  return *mid > 0.0 ? *mid : 1.0;
}

// Kernel ridge on the centered response (intercept unpenalized). Exact
// (K + lambda I) solve up to spec.exact_limit rows, otherwise the Nystrom
// solution on spec.landmarks random training rows.
inline FittedModel fit_kernel_ridge(const Matrix& x, const Vector& y, const KernelSpec& spec, double lambda) {
  const Index n = x.rows();
  if (n < 1) throw std::invalid_argument("kernel ridge needs at least one row");
  if (y.size() != n) throw std::invalid_argument("kernel ridge: response length mismatch");
  if (!(lambda > 0.0)) throw std::invalid_argument("kernel ridge penalty must be > 0");
  const double h = spec.bandwidth > 0.0 ? spec.bandwidth : median_heuristic(x);
  const double mean_y = y.mean();
  const Vector yc = y.array() - mean_y;
  Matrix centers;
  Vector alpha;
  FitDiagnostics diag;
  if (n <= spec.exact_limit) {
    centers = x;
    Eigen::MatrixXd k = detail::kernel_matrix(spec, h, x, x);
    k.diagonal().array() += lambda;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(k);
    if (ldlt.info() != Eigen::Success) throw NumericalError("kernel ridge factorization failed");
    alpha = ldlt.solve(yc);
    diag.note = "exact";
  } else {
    std::vector<Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    Rng rng(spec.seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    const Index m = std::min(spec.landmarks, n);
    centers.resize(m, x.cols());
    for (Index k = 0; k < m; ++k) centers.row(k) = x.row(rows[static_cast<std::size_t>(k)]);
    const Eigen::MatrixXd knm = detail::kernel_matrix(spec, h, x, centers);
    Eigen::MatrixXd kmm = detail::kernel_matrix(spec, h, centers, centers);
    Eigen::MatrixXd lhs = knm.transpose() * knm + lambda * kmm;
    lhs.diagonal().array() += 1e-10 * lhs.diagonal().mean();
    Eigen::LDLT<Eigen::MatrixXd> ldlt(lhs);
    if (ldlt.info() != Eigen::Success) throw NumericalError("Nystrom kernel ridge factorization failed");
    alpha = ldlt.solve(knm.transpose() * yc);
    diag.note = "nystrom";
  }
  if (!alpha.allFinite()) throw NumericalError("kernel ridge produced non-finite coefficients");
  auto fn = [spec, h, mean_y, centers = std::move(centers), alpha = std::move(alpha)](std::span<const double> v) {
    double acc = mean_y;
    for (Index c = 0; c < centers.rows(); ++c) {
      double sq = 0.0;
      for (Index j = 0; j < centers.cols(); ++j) {
        const double diff = centers(c, j) - v[static_cast<std::size_t>(j)];
        sq += diff * diff;
      }
      acc += alpha[c] * detail::kernel_value(spec, h, sq);
    }
    return acc;
  };
  return FittedModel(fn, x.cols(), false, diag);
}

// ---------------------------------------------------------------------------
// Specs and dispatch

enum class RegressorKind { ols, ridge, polynomial, kernel_ridge, mlp, misspec_linear };

struct RegressorSpec {
  RegressorKind kind = RegressorKind::kernel_ridge;
  int degree = 2;
  double lambda = 0.0;
  // Kernel ridge only: when set, lambda = lambda_per_row * n (default 1e-3 n).
  std::optional<double> lambda_per_row = 1e-3;
  KernelSpec kernel;
  MLPConfig mlp;
};

inline RegressorSpec polynomial_spec(int degree) {
  RegressorSpec s;
  s.kind = RegressorKind::polynomial;
  s.degree = degree;
  return s;
}

enum class ClassifierKind { logistic, frequency, misspec_quadratic_logit, mlp };

struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::logistic;
  double clip = kDefaultClip;
  LogisticOptions logistic;
  MLPConfig mlp;
};

inline FittedModel fit_regressor(const RegressorSpec& spec, const Matrix& x, const Vector& y) {
  switch (spec.kind) {
    case RegressorKind::ols:
    case RegressorKind::misspec_linear:
      return fit_least_squares(x, y, 0.0);
    case RegressorKind::ridge:
      return fit_least_squares(x, y, spec.lambda);
    case RegressorKind::polynomial:
      return fit_polynomial(x, y, spec.degree, spec.lambda);
    case RegressorKind::kernel_ridge: {
      const double lambda = spec.lambda_per_row ? *spec.lambda_per_row * static_cast<double>(x.rows()) : spec.lambda;
      return fit_kernel_ridge(x, y, spec.kernel, lambda);
    }
    case RegressorKind::mlp:
      return fit_mlp_regressor(x, y, spec.mlp);
  }
  throw std::invalid_argument("unknown regressor kind");
}

inline FittedModel fit_classifier(const ClassifierSpec& spec, const Matrix& x, const Vector& labels) {
  switch (spec.kind) {
    case ClassifierKind::logistic: {
      LogisticOptions opt = spec.logistic;
      opt.clip = spec.clip;
      return fit_logistic(x, labels, opt);
    }
    case ClassifierKind::frequency:
      return fit_frequency(labels, x.cols(), spec.clip);
    case ClassifierKind::misspec_quadratic_logit:
      return fit_misspec_propensity(x, labels, spec.clip);
    case ClassifierKind::mlp:
      return fit_mlp_classifier(x, labels, spec.mlp, spec.clip);
  }
  throw std::invalid_argument("unknown classifier kind");
}

}  // namespace hlce

#endif  // HLCE_REGRESS_HPP
