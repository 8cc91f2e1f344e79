#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "protoflow/episode.hpp"
#include "protoflow/prototype.hpp"
#include "protoflow/tape.hpp"

namespace protoflow {

// Visible samples for one flow evaluation: support rows first (one-hot label
// rows), then any unlabeled rows (uniform 1/N pseudo-labels). `class_code`
// carries each class's identity encoding; permuting classes permutes its rows
// together with the prototype rows, which keeps both flows exactly
// permutation-equivariant in the class axis.
struct FlowInput {
  PrototypeState state;
  Tensor features;    // [S x d]
  Tensor labels;      // [S x N], rows sum to 1
  Tensor class_code;  // [N x N], identity by default
  std::size_t n_way = 0;
};

FlowInput make_flow_input(PrototypeState state, const Episode& ep,
                          EpisodeMode mode);
FlowInput make_flow_input(PrototypeState state, Tensor features, Tensor labels);

// Attention-ensemble flow network. Widths follow the reference layout: 512
// hidden units, 8 attention heads of 16 units, 128-wide head concat.
class GradNetParams {
 public:
  static constexpr std::size_t kHidden = 512;
  static constexpr std::size_t kHeads = 8;
  static constexpr std::size_t kHeadDim = 16;

  GradNetParams(std::size_t n_way, std::size_t dim, std::size_t modules = 4,
                std::uint64_t seed = 1);
  GradNetParams(const GradNetParams&) = delete;
  GradNetParams& operator=(const GradNetParams&) = delete;
  GradNetParams(GradNetParams&&) = default;
  GradNetParams& operator=(GradNetParams&&) = default;

  struct Module {
    Parameter scale_w1, scale_b1, scale_w2, scale_b2;  // 2d -> 512 -> d
    Parameter embed_w, embed_b;                        // 2N+3d -> 512
    std::array<Parameter, kHeads> wq, wk, wv;          // 512 -> 16, no bias
    Parameter out_w;                                   // 128 -> 1, no bias
  };

  std::size_t n_way() const { return n_way_; }
  std::size_t dim() const { return dim_; }
  std::size_t modules() const { return modules_.size(); }
  Module& module(std::size_t l) { return modules_[l]; }
  const Module& module(std::size_t l) const { return modules_[l]; }
  std::vector<Parameter*> parameters();

  double beta0 = 0.1;
  double xi = 0.1;
  double integral_time = 40.0;

 private:
  std::size_t n_way_, dim_;
  std::vector<Module> modules_;
};

// Per-(class, module) attention weights and module means, captured for
// inspection when a diagnostics pointer is passed to gradnet_flow.
struct GradNetDiag {
  // indexed [k * modules + l]
  std::vector<std::vector<double>> weights;  // per sample
  std::vector<std::vector<double>> means;    // per coordinate
};

Tensor gradnet_flow(GradNetParams& params, const FlowInput& input,
                    GradNetDiag* diag = nullptr);

// Residual flow network: a 2-layer MLP on the class-probability vector whose
// output replaces the true labels in the closed-form difference term.
// Freshly constructed weights are the identity surrogate, so an untrained
// network produces a zero flow and integration leaves the support means
// untouched.
class E2GradNetParams {
 public:
  explicit E2GradNetParams(std::size_t n_way, std::uint64_t seed = 1);
  static E2GradNetParams identity_surrogate(std::size_t n_way);

  E2GradNetParams(const E2GradNetParams&) = delete;
  E2GradNetParams& operator=(const E2GradNetParams&) = delete;
  E2GradNetParams(E2GradNetParams&&) = default;
  E2GradNetParams& operator=(E2GradNetParams&&) = default;

  std::size_t n_way() const { return n_way_; }
  std::vector<Parameter*> parameters();

  Parameter w1, b1, w2, b2;  // N -> N -> N, ELU between

 private:
  std::size_t n_way_;
};

Tensor e2gradnet_flow(E2GradNetParams& params, const FlowInput& input,
                      const ClassifierConfig& config);

// (1/S) sum_i part1[i,k] (x_i - p_k), the shared contraction behind the
// residual flow. part1 is any per-sample class discrepancy [S x N].
Tensor flow_from_discrepancy(const Tensor& part1, const Tensor& features,
                             const Tensor& prototypes);

enum class FlowKind { zero, meangrad, gradnet, e2gradnet };

struct ProbeStats {
  double median_seconds = 0.0;
  double min_seconds = 0.0;
  double max_seconds = 0.0;
  std::vector<double> samples;
};

// Median wall time of one flow evaluation at the given episode shape.
ProbeStats flow_complexity_probe(FlowKind kind, std::size_t n_way,
                                 std::size_t k_shot, std::size_t queries,
                                 std::size_t dim, std::size_t repeats,
                                 std::size_t modules = 4,
                                 std::uint64_t seed = 1234);

}  // namespace protoflow
