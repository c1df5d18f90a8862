#ifndef HLCE_MLP_HPP
#define HLCE_MLP_HPP

// Small feedforward networks with hand-written reverse-mode gradients and an
// SGD(+momentum) optimizer. Includes the shared-representation nuisance
// network: a trunk shared by both data sources, one branch per group, and
// linear heads on top.
//
//   x -> trunk -> h --> pi_G head
//                  |--> E branch -> r_E -> mu_S^E(0), mu_S^E(1), pi^E
//                  '--> O branch -> r_O -> mu_S^O(0), mu_S^O(1),
//                                          mu_Y^O(0), mu_Y^O(1), pi^O

#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "hlce/common.hpp"
#include "hlce/model.hpp"

namespace hlce {

enum class Activation { relu, identity };

struct MLPConfig {
  std::vector<int> hidden = {32, 32};
  Activation activation = Activation::relu;
  double learning_rate = 1e-3;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int batch_size = 64;
  // Trunk layers only; disabled at inference.
  double dropout = 0.0;
  int epochs = 100;
  std::uint64_t seed = 1;

  void validate() const {
    for (int w : hidden) {
      if (w < 1) throw std::invalid_argument("layer widths must be >= 1");
    }
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be > 0");
    if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0, 1)");
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (epochs < 0) throw std::invalid_argument("epochs must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw std::invalid_argument("weight decay must be >= 0");
  }
};

using BatchMatrix = Eigen::MatrixXd;

// Views onto one parameter block and its gradient.
struct ParamRef {
  double* value;
  double* grad;
  double* velocity;
  Index size;
  bool decay;
};

struct Dense {
  Eigen::MatrixXd w;  // out x in
  Vector b;
  Eigen::MatrixXd gw, vw;
  Vector gb, vb;

  Dense() = default;
  Dense(int in, int out, Activation act, Rng& rng)
      : w(out, in), b(Vector::Zero(out)), gw(Eigen::MatrixXd::Zero(out, in)),
        vw(Eigen::MatrixXd::Zero(out, in)), gb(Vector::Zero(out)), vb(Vector::Zero(out)) {
    const double sd = std::sqrt((act == Activation::relu ? 2.0 : 1.0) / in);
    std::normal_distribution<double> normal(0.0, sd);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = normal(rng);
  }

  int in() const { return static_cast<int>(w.cols()); }
  int out() const { return static_cast<int>(w.rows()); }

  BatchMatrix forward(const BatchMatrix& x) const {
    BatchMatrix z = x * w.transpose();
    z.rowwise() += b.transpose();
    return z;
  }

  // Accumulates parameter gradients; returns d loss / d input.
  BatchMatrix backward(const BatchMatrix& input, const BatchMatrix& grad_z) {
    gw.noalias() += grad_z.transpose() * input;
    gb += grad_z.colwise().sum().transpose();
    return grad_z * w;
  }

  void params(std::vector<ParamRef>& out) {
    out.push_back({w.data(), gw.data(), vw.data(), w.size(), true});
    out.push_back({b.data(), gb.data(), vb.data(), b.size(), false});
  }
};

// Dense layers, each followed by the activation (and optional dropout).
class Stack {
 public:
  struct Cache {
    std::vector<BatchMatrix> inputs, pre, masks;
  };

  Stack() = default;
  Stack(int in, const std::vector<int>& widths, Activation act, Rng& rng) : act_(act) {
    int prev = in;
    for (int w : widths) {
      layers_.emplace_back(prev, w, act, rng);
      prev = w;
    }
    out_ = prev;
  }

  int out() const { return out_; }
  std::vector<Dense>& layers() { return layers_; }
  const std::vector<Dense>& layers() const { return layers_; }

  BatchMatrix forward(const BatchMatrix& x, Cache* cache, double dropout, Rng* rng) const {
    BatchMatrix h = x;
    if (cache) *cache = Cache{};
    for (const auto& layer : layers_) {
      BatchMatrix z = layer.forward(h);
      BatchMatrix a = act_ == Activation::relu ? BatchMatrix(z.cwiseMax(0.0)) : z;
      BatchMatrix mask;
      if (dropout > 0.0 && rng != nullptr) {
        std::bernoulli_distribution keep(1.0 - dropout);
        mask.resize(a.rows(), a.cols());
        for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*rng) ? 1.0 / (1.0 - dropout) : 0.0;
        a = a.cwiseProduct(mask);
      }
      if (cache) {
        cache->inputs.push_back(h);
        cache->pre.push_back(std::move(z));
        cache->masks.push_back(std::move(mask));
      }
      h = std::move(a);
    }
    return h;
  }

  BatchMatrix backward(const Cache& cache, BatchMatrix grad) {
    for (std::size_t k = layers_.size(); k-- > 0;) {
      if (cache.masks[k].size() > 0) grad = grad.cwiseProduct(cache.masks[k]);
      if (act_ == Activation::relu) {
        grad = grad.cwiseProduct((cache.pre[k].array() > 0.0).cast<double>().matrix());
      }
      grad = layers_[k].backward(cache.inputs[k], grad);
    }
    return grad;
  }

  void params(std::vector<ParamRef>& out) {
    for (auto& l : layers_) l.params(out);
  }

 private:
  std::vector<Dense> layers_;
  Activation act_ = Activation::relu;
  int out_ = 0;
};

inline void zero_grads(std::vector<ParamRef>& ps) {
  for (auto& p : ps) std::fill(p.grad, p.grad + p.size, 0.0);
}

inline double decay_penalty(const std::vector<ParamRef>& ps, double wd) {
  if (wd == 0.0) return 0.0;
  double acc = 0.0;
  for (const auto& p : ps) {
    if (!p.decay) continue;
    for (Index i = 0; i < p.size; ++i) acc += p.value[i] * p.value[i];
  }
  return 0.5 * wd * acc;
}

inline void add_decay_grads(std::vector<ParamRef>& ps, double wd) {
  if (wd == 0.0) return;
  for (auto& p : ps) {
    if (!p.decay) continue;
    for (Index i = 0; i < p.size; ++i) p.grad[i] += wd * p.value[i];
  }
}

inline void sgd_step(std::vector<ParamRef>& ps, double lr, double momentum) {
  for (auto& p : ps) {
    for (Index i = 0; i < p.size; ++i) {
      p.velocity[i] = momentum * p.velocity[i] - lr * p.grad[i];
      p.value[i] += p.velocity[i];
    }
  }
}

inline double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// ---------------------------------------------------------------------------
// Shared nuisance network

enum class NetHead : int { mu_s_e0, mu_s_e1, mu_s_o0, mu_s_o1, mu_y_o0, mu_y_o1, pi_e, pi_o, pi_g };
inline constexpr int kNetHeads = 9;

inline bool is_probability_head(int h) { return h >= static_cast<int>(NetHead::pi_e); }

// Rows carry a target and a 0/1 supervision mask for every head.
struct HeadBatch {
  BatchMatrix x;
  BatchMatrix targets;  // k x 9
  BatchMatrix masks;    // k x 9
};

using HeadWeights = std::array<double, kNetHeads>;

inline HeadWeights unit_head_weights() {
  HeadWeights w;
  w.fill(1.0);
  return w;
}

class SharedNuisanceNet {
 public:
  SharedNuisanceNet(int input_dim, const MLPConfig& config) : config_(config), input_dim_(input_dim) {
    config.validate();
    if (config.hidden.empty()) throw std::invalid_argument("shared network needs at least one trunk layer");
    Rng rng(config.seed);
    trunk_ = Stack(input_dim, config.hidden, config.activation, rng);
    const int w = trunk_.out();
    head_g_ = Dense(w, 1, Activation::identity, rng);
    branch_e_ = Stack(w, {w}, config.activation, rng);
    branch_o_ = Stack(w, {w}, config.activation, rng);
    heads_e_ = Dense(w, 3, Activation::identity, rng);
    heads_o_ = Dense(w, 5, Activation::identity, rng);
  }

  int input_dim() const { return input_dim_; }
  const MLPConfig& config() const { return config_; }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> ps;
    trunk_.params(ps);
    head_g_.params(ps);
    branch_e_.params(ps);
    branch_o_.params(ps);
    heads_e_.params(ps);
    heads_o_.params(ps);
    return ps;
  }

  // Raw outputs: regression heads as-is, probability heads as logits.
  BatchMatrix logits(const BatchMatrix& x) const { return forward_impl(x, nullptr, nullptr); }

  // Inference: probability heads through a sigmoid, clipped to [eps, 1-eps].
  BatchMatrix forward(const BatchMatrix& x, double eps) const {
    if (x.cols() != input_dim_) throw std::invalid_argument("shared network: input dimension mismatch");
    BatchMatrix out = logits(x);
    for (int h = static_cast<int>(NetHead::pi_e); h < kNetHeads; ++h) {
      for (Index i = 0; i < out.rows(); ++i) out(i, h) = clip(sigmoid(out(i, h)), eps);
    }
    return out;
  }

  // Masked multi-task loss (squared error / logistic cross-entropy per head,
  // each averaged over its supervised rows) plus weight decay.
  double loss(const HeadBatch& batch, const HeadWeights& weights) {
    const BatchMatrix out = logits(batch.x);
    return data_loss(out, batch, weights, nullptr) + decay_penalty(params(), config_.weight_decay);
  }

  // Fills parameter gradients for the loss above; returns the loss.
  double compute_gradients(const HeadBatch& batch, const HeadWeights& weights, Rng* dropout_rng) {
    auto ps = params();
    zero_grads(ps);
    Caches caches;
    const BatchMatrix out = forward_impl(batch.x, &caches, dropout_rng);
    BatchMatrix grad_out;
    const double l = data_loss(out, batch, weights, &grad_out) + decay_penalty(ps, config_.weight_decay);
    backward_impl(caches, grad_out);
    add_decay_grads(ps, config_.weight_decay);
    return l;
  }

  // One optimizer step on a minibatch. Non-finite loss aborts.
  double backward_and_step(const HeadBatch& batch, const HeadWeights& weights, Rng* dropout_rng) {
    const double l = compute_gradients(batch, weights, dropout_rng);
    if (!std::isfinite(l)) {
      throw NumericalError("non-finite training loss (batch of " + std::to_string(batch.x.rows()) +
                           " rows); lower the learning rate");
    }
    auto ps = params();
    sgd_step(ps, config_.learning_rate, config_.momentum);
    return l;
  }

 private:
  struct Caches {
    Stack::Cache trunk, e, o;
    BatchMatrix h, re, ro;
  };

  BatchMatrix forward_impl(const BatchMatrix& x, Caches* c, Rng* rng) const {
    const double p = rng ? config_.dropout : 0.0;
    BatchMatrix h = trunk_.forward(x, c ? &c->trunk : nullptr, p, rng);
    BatchMatrix re = branch_e_.forward(h, c ? &c->e : nullptr, 0.0, nullptr);
    BatchMatrix ro = branch_o_.forward(h, c ? &c->o : nullptr, 0.0, nullptr);
    BatchMatrix out(x.rows(), kNetHeads);
    const BatchMatrix ge = heads_e_.forward(re);
    const BatchMatrix go = heads_o_.forward(ro);
    const BatchMatrix gg = head_g_.forward(h);
    out.col(0) = ge.col(0);
    out.col(1) = ge.col(1);
    out.col(6) = ge.col(2);
    for (int k = 0; k < 4; ++k) out.col(2 + k) = go.col(k);
    out.col(7) = go.col(4);
    out.col(8) = gg.col(0);
    if (c) {
      c->h = std::move(h);
      c->re = std::move(re);
      c->ro = std::move(ro);
    }
    return out;
  }

  void backward_impl(const Caches& c, const BatchMatrix& g) {
    BatchMatrix ge(g.rows(), 3), go(g.rows(), 5), gg(g.rows(), 1);
    ge.col(0) = g.col(0);
    ge.col(1) = g.col(1);
    ge.col(2) = g.col(6);
    for (int k = 0; k < 4; ++k) go.col(k) = g.col(2 + k);
    go.col(4) = g.col(7);
    gg.col(0) = g.col(8);
    BatchMatrix dre = heads_e_.backward(c.re, ge);
    BatchMatrix dro = heads_o_.backward(c.ro, go);
    BatchMatrix dh = head_g_.backward(c.h, gg);
    dh += branch_e_.backward(c.e, dre);
    dh += branch_o_.backward(c.o, dro);
    trunk_.backward(c.trunk, dh);
  }

  static double data_loss(const BatchMatrix& out, const HeadBatch& batch, const HeadWeights& weights,
                          BatchMatrix* grad) {
    if (grad) grad->setZero(out.rows(), out.cols());
    double total = 0.0;
    for (int h = 0; h < kNetHeads; ++h) {
      const double m = batch.masks.col(h).sum();
      if (m <= 0.0 || weights[static_cast<std::size_t>(h)] == 0.0) continue;
      const double scale = weights[static_cast<std::size_t>(h)] / m;
      double acc = 0.0;
      for (Index i = 0; i < out.rows(); ++i) {
        const double mask = batch.masks(i, h);
        if (mask == 0.0) continue;
        const double o = out(i, h);
        const double t = batch.targets(i, h);
        if (is_probability_head(h)) {
          acc += mask * (softplus(o) - t * o);
          if (grad) (*grad)(i, h) = scale * mask * (sigmoid(o) - t);
        } else {
          acc += mask * (o - t) * (o - t);
          if (grad) (*grad)(i, h) = scale * mask * 2.0 * (o - t);
        }
      }
      total += scale * acc;
    }
    return total;
  }

  MLPConfig config_;
  int input_dim_;
  Stack trunk_, branch_e_, branch_o_;
  Dense head_g_, heads_e_, heads_o_;
};

struct TrainingReport {
  std::vector<double> epoch_losses;
  int steps = 0;
};

// Minibatch SGD over shuffled rows; epoch loss is the full-data loss after
// each epoch.
inline TrainingReport train_shared(SharedNuisanceNet& net, const HeadBatch& data, const HeadWeights& weights) {
  const auto& cfg = net.config();
  const Index n = data.x.rows();
  Rng rng(derive_seed(cfg.seed, 1));
  Rng drop_rng(derive_seed(cfg.seed, 2));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  TrainingReport report;
  HeadBatch mb;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index start = 0; start < n; start += cfg.batch_size) {
      const Index k = std::min<Index>(cfg.batch_size, n - start);
      mb.x.resize(k, data.x.cols());
      mb.targets.resize(k, kNetHeads);
      mb.masks.resize(k, kNetHeads);
      for (Index r = 0; r < k; ++r) {
        const Index i = order[static_cast<std::size_t>(start + r)];
        mb.x.row(r) = data.x.row(i);
        mb.targets.row(r) = data.targets.row(i);
        mb.masks.row(r) = data.masks.row(i);
      }
      net.backward_and_step(mb, weights, cfg.dropout > 0.0 ? &drop_rng : nullptr);
      ++report.steps;
    }
    report.epoch_losses.push_back(net.loss(data, weights));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Single-output networks (stage-2 learner and standalone nuisance fits)

class SingleOutputNet {
 public:
  SingleOutputNet(int input_dim, const MLPConfig& config) : config_(config), input_dim_(input_dim) {
    config.validate();
    Rng rng(config.seed);
    body_ = Stack(input_dim, config.hidden, config.activation, rng);
    out_ = Dense(body_.out(), 1, Activation::identity, rng);
  }

  const MLPConfig& config() const { return config_; }
  Dense& output_layer() { return out_; }
  Stack& body() { return body_; }

  std::vector<ParamRef> params() {
    std::vector<ParamRef> ps;
    body_.params(ps);
    out_.params(ps);
    return ps;
  }

  Vector raw(const BatchMatrix& x) const { return out_.forward(body_.forward(x, nullptr, 0.0, nullptr)).col(0); }

  // Squared error (binary=false) or logistic cross-entropy on logits.
  double loss(const BatchMatrix& x, const Vector& y, bool binary) {
    const Vector o = raw(x);
    return data_loss(o, y, binary, nullptr) + decay_penalty(params(), config_.weight_decay);
  }

  double compute_gradients(const BatchMatrix& x, const Vector& y, bool binary, Rng* drop_rng) {
    auto ps = params();
    zero_grads(ps);
    Stack::Cache cache;
    const BatchMatrix h = body_.forward(x, &cache, drop_rng ? config_.dropout : 0.0, drop_rng);
    const Vector o = out_.forward(h).col(0);
    Vector g;
    const double l = data_loss(o, y, binary, &g) + decay_penalty(ps, config_.weight_decay);
    BatchMatrix gm = g;
    body_.backward(cache, out_.backward(h, gm));
    add_decay_grads(ps, config_.weight_decay);
    return l;
  }

  TrainingReport train(const BatchMatrix& x, const Vector& y, bool binary) {
    const Index n = x.rows();
    Rng rng(derive_seed(config_.seed, 1));
    Rng drop_rng(derive_seed(config_.seed, 2));
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    TrainingReport report;
    BatchMatrix xb;
    Vector yb;
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (Index start = 0; start < n; start += config_.batch_size) {
        const Index k = std::min<Index>(config_.batch_size, n - start);
        xb.resize(k, x.cols());
        yb.resize(k);
        for (Index r = 0; r < k; ++r) {
          const Index i = order[static_cast<std::size_t>(start + r)];
          xb.row(r) = x.row(i);
          yb[r] = y[i];
        }
        const double l = compute_gradients(xb, yb, binary, config_.dropout > 0.0 ? &drop_rng : nullptr);
        if (!std::isfinite(l)) throw NumericalError("non-finite training loss; lower the learning rate");
        auto ps = params();
        sgd_step(ps, config_.learning_rate, config_.momentum);
        ++report.steps;
      }
      report.epoch_losses.push_back(loss(x, y, binary));
    }
    return report;
  }

 private:
  static double data_loss(const Vector& o, const Vector& y, bool binary, Vector* grad) {
    const double n = static_cast<double>(o.size());
    double acc = 0.0;
    if (grad) grad->resize(o.size());
    for (Index i = 0; i < o.size(); ++i) {
      if (binary) {
        acc += softplus(o[i]) - y[i] * o[i];
        if (grad) (*grad)[i] = (sigmoid(o[i]) - y[i]) / n;
      } else {
        acc += (o[i] - y[i]) * (o[i] - y[i]);
        if (grad) (*grad)[i] = 2.0 * (o[i] - y[i]) / n;
      }
    }
    return acc / n;
  }

  MLPConfig config_;
  int input_dim_;
  Stack body_;
  Dense out_;
};

// Column standardization captured at fit time.
struct Standardizer {
  Eigen::RowVectorXd mean, scale;

  static Standardizer fit(const Matrix& x) {
    Standardizer s;
    s.mean = x.colwise().mean();
    s.scale = ((x.rowwise() - s.mean).array().square().colwise().sum() / std::max<Index>(x.rows(), 1))
                  .sqrt()
                  .matrix();
    for (Index j = 0; j < s.scale.size(); ++j) {
      if (!(s.scale[j] > 1e-12)) s.scale[j] = 1.0;
    }
    return s;
  }

  BatchMatrix apply(const Matrix& x) const {
    return ((x.rowwise() - mean).array().rowwise() / scale.array()).matrix();
  }

  void apply_row(std::span<const double> v, double* out) const {
    for (std::size_t j = 0; j < v.size(); ++j) {
      out[j] = (v[j] - mean[static_cast<Index>(j)]) / scale[static_cast<Index>(j)];
    }
  }
};

namespace detail {

inline FittedModel wrap_single_net(std::shared_ptr<SingleOutputNet> net, Standardizer xs, double y_mean,
                                   double y_scale, bool binary, double eps, Index d, TrainingReport report) {
  FitDiagnostics diag;
  diag.iterations = report.steps;
  diag.final_loss = report.epoch_losses.empty() ? 0.0 : report.epoch_losses.back();
  auto fn = [net, xs, y_mean, y_scale, binary, eps](std::span<const double> v) {
    BatchMatrix row(1, static_cast<Index>(v.size()));
    xs.apply_row(v, row.data());
    const double o = net->raw(row)[0];
    return binary ? clip(sigmoid(o), eps) : y_mean + y_scale * o;
  };
  return FittedModel(fn, d, binary, diag);
}

}  // namespace detail

inline FittedModel fit_mlp_regressor(const Matrix& x, const Vector& y, const MLPConfig& config) {
  if (x.rows() < 1 || y.size() != x.rows()) throw std::invalid_argument("mlp regressor: bad shapes");
  const auto xs = Standardizer::fit(x);
  const double y_mean = y.mean();
  double y_scale = std::sqrt((y.array() - y_mean).square().mean());
  if (!(y_scale > 1e-12)) y_scale = 1.0;
  auto net = std::make_shared<SingleOutputNet>(static_cast<int>(x.cols()), config);
  const Vector yt = (y.array() - y_mean) / y_scale;
  auto report = net->train(xs.apply(x), yt, false);
  return detail::wrap_single_net(net, xs, y_mean, y_scale, false, 0.0, x.cols(), std::move(report));
}

inline FittedModel fit_mlp_classifier(const Matrix& x, const Vector& labels, const MLPConfig& config, double eps) {
  if (x.rows() < 1 || labels.size() != x.rows()) throw std::invalid_argument("mlp classifier: bad shapes");
  const auto xs = Standardizer::fit(x);
  auto net = std::make_shared<SingleOutputNet>(static_cast<int>(x.cols()), config);
  auto report = net->train(xs.apply(x), labels, true);
  return detail::wrap_single_net(net, xs, 0.0, 1.0, true, eps, x.cols(), std::move(report));
}

}  // namespace hlce

#endif  // HLCE_MLP_HPP
