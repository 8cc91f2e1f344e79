#include "protoflow/prototype.hpp"

#include <cmath>

#include "protoflow/error.hpp"

namespace protoflow {

namespace {

Tensor onehot_from(const std::vector<std::size_t>& labels, std::size_t n_way) {
  Tensor y = Tensor::zeros({labels.size(), n_way});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_way) throw ShapeError("label out of range");
    y.at(i, labels[i]) = 1.0;
  }
  return y;
}

Tensor masked_mean_nll(const Tensor& probs, const Tensor& onehot) {
  // -1/S * sum_i log probs[i, y_i], written with the mask so the whole
  // expression stays on the tape.
  const double inv = -1.0 / static_cast<double>(probs.rows());
  return scale(sum(mul(onehot, log(probs))), inv);
}

// Detached per-class norms |p_k| of the current prototype values.
std::vector<double> prototype_radii(const Tensor& p) {
  std::vector<double> r(p.rows());
  for (std::size_t k = 0; k < p.rows(); ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < p.cols(); ++j) s += p.at(k, j) * p.at(k, j);
    if (s == 0.0) throw NumericError("prototype has zero norm");
    r[k] = std::sqrt(s);
  }
  return r;
}

}  // namespace

PrototypeState init_prototypes(const Episode& ep) {
  const std::size_t n = ep.n_way, k = ep.k_shot, d = ep.dim;
  Tensor p = Tensor::zeros({n, d});
  for (std::size_t label = 0; label < n; ++label) {
    for (std::size_t s = 0; s < k; ++s)
      for (std::size_t j = 0; j < d; ++j)
        p.at(label, j) += ep.support.at(label * k + s, j);
    for (std::size_t j = 0; j < d; ++j)
      p.at(label, j) /= static_cast<double>(k);
  }
  return PrototypeState{std::move(p), 0.0};
}

Tensor classify_batch(const PrototypeState& state, const Tensor& X,
                      const ClassifierConfig& config) {
  Tensor xh = rows_normalize(X);
  Tensor ph = rows_normalize(state.prototypes);
  Tensor cosines = matmul(xh, transpose(ph));
  return softmax(scale(cosines, config.gamma), 1);
}

Tensor classify(const PrototypeState& state, const Tensor& x,
                const ClassifierConfig& config) {
  Tensor X = Tensor::zeros({1, x.numel()});
  X.data() = x.data();
  Tensor probs = classify_batch(state, X, config);
  Tensor out = Tensor::zeros({probs.cols()});
  out.data() = probs.data();
  return out;
}

Tensor cross_entropy(const PrototypeState& state, const Tensor& X,
                     const std::vector<std::size_t>& labels,
                     const ClassifierConfig& config) {
  if (labels.size() != X.rows())
    throw ShapeError("cross_entropy: label count mismatch");
  Tensor probs = classify_batch(state, X, config);
  return masked_mean_nll(probs, onehot_from(labels, probs.cols()));
}

Tensor euclid_classify_batch(const PrototypeState& state, const Tensor& X,
                             const ClassifierConfig& config) {
  const Tensor& p = state.prototypes;
  const auto radii = prototype_radii(p);
  const std::size_t n = p.rows();

  // z_ik = -gamma (r_k^2 - 2 r_k <x_hat_i, p_k> + |p_k|^2)
  //      = gamma (2 r_k <x_hat_i, p_k> - r_k^2 - |p_k|^2)
  // with r_k constant and |p_k|^2 differentiable.
  Tensor xh = rows_normalize(X);
  Tensor dots = matmul(xh, transpose(p));
  Tensor two_r = Tensor::zeros({n});
  Tensor r_sq = Tensor::zeros({n});
  for (std::size_t k = 0; k < n; ++k) {
    two_r.at(k) = 2.0 * radii[k];
    r_sq.at(k) = radii[k] * radii[k];
  }
  Tensor a = mul_rowvec(dots, two_r);
  Tensor sq = row_sqnorm(p);
  Tensor z = scale(sub(sub(a, broadcast_row(r_sq, X.rows())),
                       broadcast_row(sq, X.rows())),
                   config.gamma);
  return softmax(z, 1);
}

Tensor euclid_cross_entropy(const PrototypeState& state, const Tensor& X,
                            const std::vector<std::size_t>& labels,
                            const ClassifierConfig& config) {
  if (labels.size() != X.rows())
    throw ShapeError("euclid_cross_entropy: label count mismatch");
  Tensor probs = euclid_classify_batch(state, X, config);
  return masked_mean_nll(probs, onehot_from(labels, probs.cols()));
}

double euclid_from_cos(double c, double r) {
  if (std::fabs(c) > 1.0 + 1e-12)
    throw NumericError("euclid_from_cos: cosine outside [-1, 1]");
  c = std::min(1.0, std::max(-1.0, c));
  return r * std::sqrt(2.0 - 2.0 * c);
}

Tensor analytic_flow(const PrototypeState& state, const Tensor& X,
                     const Tensor& onehot, const ClassifierConfig& config,
                     FlowMode mode) {
  const Tensor& p = state.prototypes;
  const std::size_t n = p.rows(), d = p.cols(), batch = X.rows();
  if (onehot.rows() != batch || onehot.cols() != n)
    throw ShapeError("analytic_flow: one-hot shape mismatch");

  // Probabilities and per-sample features, per mode; everything is a plain
  // value computation (the analytic flow is the reference field, not a node).
  PrototypeState detached{p, state.time};
  detached.prototypes.set_node(-1);
  Tensor x_const = X;
  x_const.set_node(-1);
  Tensor probs = (mode == FlowMode::paper)
                     ? classify_batch(detached, x_const, config)
                     : euclid_classify_batch(detached, x_const, config);
  const double factor = (mode == FlowMode::paper) ? 1.0 : 2.0 * config.gamma;

  std::vector<double> radii;
  std::vector<double> xnorm(batch, 0.0);
  if (mode == FlowMode::exact_gradient) {
    radii = prototype_radii(p);
    for (std::size_t i = 0; i < batch; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += X.at(i, j) * X.at(i, j);
      if (s == 0.0) throw NumericError("analytic_flow: zero-norm feature");
      xnorm[i] = std::sqrt(s);
    }
  }

  Tensor flow = Tensor::zeros({n, d});
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < batch; ++i) {
      const double w = onehot.at(i, k) - probs.at(i, k);
      for (std::size_t j = 0; j < d; ++j) {
        const double f = (mode == FlowMode::paper)
                             ? X.at(i, j)
                             : radii[k] * X.at(i, j) / xnorm[i];
        flow.at(k, j) += w * (f - p.at(k, j));
      }
    }
  const double inv = factor / static_cast<double>(batch);
  for (double& v : flow.data()) v *= inv;
  return flow;
}

Tensor mean_gradient(const PrototypeState& state, const Episode& ep,
                     const ClassifierConfig& config, FlowMode mode) {
  return analytic_flow(state, ep.support, ep.support_onehot(), config, mode);
}

}  // namespace protoflow
