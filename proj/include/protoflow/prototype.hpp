#pragma once

#include <vector>

#include "protoflow/episode.hpp"
#include "protoflow/ops.hpp"

namespace protoflow {

struct ClassifierConfig {
  double gamma = 10.0;  // cosine logit scale
};

// Prototype matrix [N x d] plus the flow time it has been evolved to.
// Prototypes start as support means (time 0) and move under a flow field.
struct PrototypeState {
  Tensor prototypes;
  double time = 0.0;
};

PrototypeState init_prototypes(const Episode& ep);

// Cosine-form classifier: P(y=k|x) = softmax_k(gamma * cos(x, p_k)).
// The batch variant is the differentiable path (tracks through prototypes,
// and through X if X is tracked); the single-vector variant is a convenience
// that returns plain rank-1 probabilities.
Tensor classify_batch(const PrototypeState& state, const Tensor& X,
                      const ClassifierConfig& config);
Tensor classify(const PrototypeState& state, const Tensor& x,
                const ClassifierConfig& config);

// Mean negative log-likelihood of `labels` under the cosine classifier.
Tensor cross_entropy(const PrototypeState& state, const Tensor& X,
                     const std::vector<std::size_t>& labels,
                     const ClassifierConfig& config);

// Euclidean form of the same decision rule: features are rescaled onto the
// sphere of radius |p_k| per class (the radius treated as a constant), and
// logits are -gamma * |x_hat_k - p_k|^2. On the sphere this ranks classes
// exactly like the cosine rule.
Tensor euclid_classify_batch(const PrototypeState& state, const Tensor& X,
                             const ClassifierConfig& config);
Tensor euclid_cross_entropy(const PrototypeState& state, const Tensor& X,
                            const std::vector<std::size_t>& labels,
                            const ClassifierConfig& config);

// Chord length between two points on a sphere of radius r with cosine
// similarity c: sqrt(2 r^2 - 2 r^2 c). |c| may exceed 1 by at most 1e-12
// (rounding); anything further is a domain error.
double euclid_from_cos(double c, double r);

// paper: probabilities from the cosine classifier, raw features, unit scale.
// exact_gradient: probabilities from the Euclidean-form classifier on
// sphere-normalized features, scaled by 2*gamma; equals minus the tape
// gradient of euclid_cross_entropy w.r.t. the prototypes.
enum class FlowMode { paper, exact_gradient };

// dp_k/dt = c * (1/|B|) * sum_i (y_ik - P_ik) (f_ik - p_k) over the batch
// (X rows, one-hot rows Y). Plain computation; the result is a constant.
Tensor analytic_flow(const PrototypeState& state, const Tensor& X,
                     const Tensor& onehot, const ClassifierConfig& config,
                     FlowMode mode = FlowMode::paper);

// The few-shot estimate of the flow: same formula restricted to the support
// set. This is the biased estimator the learned flows try to improve on.
Tensor mean_gradient(const PrototypeState& state, const Episode& ep,
                     const ClassifierConfig& config,
                     FlowMode mode = FlowMode::paper);

}  // namespace protoflow
