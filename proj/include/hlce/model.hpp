#ifndef HLCE_MODEL_HPP
#define HLCE_MODEL_HPP

#include <functional>
#include <memory>
#include <string>

#include "hlce/common.hpp"

namespace hlce {

struct FitDiagnostics {
  int iterations = 0;
  double final_loss = 0.0;
  bool converged = true;
  // Logistic fits flag diverging coefficients here instead of failing.
  bool separation_warning = false;
  std::string note;
};

// Immutable fitted map from a covariate vector to a real (regressor) or a
// clipped probability (classifier). Copies share the underlying closure.
class FittedModel {
 public:
  using Fn = std::function<double(std::span<const double>)>;

  FittedModel() = default;
  FittedModel(Fn fn, Index input_dim, bool probability, FitDiagnostics diag, Vector parameters = {})
      : fn_(std::make_shared<const Fn>(std::move(fn))),
        input_dim_(input_dim),
        probability_(probability),
        diag_(std::move(diag)),
        parameters_(std::move(parameters)) {}

  double operator()(std::span<const double> x) const {
    if (static_cast<Index>(x.size()) != input_dim_) {
      throw std::invalid_argument("dimension mismatch: model expects " + std::to_string(input_dim_) +
                                  " inputs, got " + std::to_string(x.size()));
    }
    return (*fn_)(x);
  }

  Vector predict(const Matrix& x) const {
    if (x.cols() != input_dim_ && x.rows() > 0) {
      throw std::invalid_argument("dimension mismatch in predict");
    }
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) out[i] = (*fn_)(row_span(x, i));
    return out;
  }

  Index input_dim() const { return input_dim_; }
  bool is_probability() const { return probability_; }
  const FitDiagnostics& diagnostics() const { return diag_; }
  // Intercept first, then slopes, for parametric fits; empty otherwise.
  const Vector& parameters() const { return parameters_; }

 private:
  std::shared_ptr<const Fn> fn_;
  Index input_dim_ = 0;
  bool probability_ = false;
  FitDiagnostics diag_;
  Vector parameters_;
};

}  // namespace hlce

#endif  // HLCE_MODEL_HPP
