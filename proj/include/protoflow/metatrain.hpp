#pragma once

#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "protoflow/checkpoint.hpp"
#include "protoflow/dataset.hpp"
#include "protoflow/episode.hpp"
#include "protoflow/flow.hpp"
#include "protoflow/solver.hpp"

namespace protoflow {

// A flow network plus solver bundled with their hyperparameters; the unit
// that training updates, checkpoints capture, and evaluation consumes.
struct Model {
  FlowKind flow_kind = FlowKind::e2gradnet;
  SolverKind solver_kind = SolverKind::euler;
  std::size_t steps = 40;
  double integral_time = 40.0;
  ClassifierConfig classifier;
  std::size_t n_way = 5;
  std::size_t dim = 64;
  std::size_t modules = 4;

  std::unique_ptr<GradNetParams> gradnet;
  std::unique_ptr<E2GradNetParams> e2;
  std::unique_ptr<E2SolverParams> eta;  // present when solver_kind == e2

  static Model make(FlowKind flow_kind, SolverKind solver_kind,
                    std::size_t n_way, std::size_t dim, std::size_t steps = 40,
                    double integral_time = 40.0, std::size_t modules = 4,
                    std::uint64_t seed = 1);

  std::vector<Parameter*> parameters();
  SolverConfig solver();  // correction wired to eta when present

  // Flow field over one episode; the returned closure borrows `ep` and this
  // model, both must outlive it.
  FlowFn flow_for(const Episode& ep, EpisodeMode mode);

  Checkpoint to_checkpoint() const;
  static Model from_checkpoint(const Checkpoint& ck);
};

// Adam with decoupled weight decay (applied to the value before the moment
// update). Gradients are read from Parameter::grad and left untouched.
struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig config);
  void step();
  void zero_grad();
  double lr() const { return config_.lr; }
  void set_lr(double lr) { config_.lr = lr; }
  std::size_t steps_taken() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<Tensor> m_, v_;
  std::size_t t_ = 0;
};

struct MetaConfig {
  double lr = 1e-4;
  double weight_decay = 5e-4;
  std::size_t epochs = 50;
  std::size_t episodes_per_epoch = 100;
  std::vector<std::size_t> lr_decay_epochs = {15, 30, 40};  // 1-based
  double lr_decay_factor = 0.1;
  std::size_t batch_episodes = 8;
  std::uint64_t seed = 1;
  EpisodeConfig episode;
  std::size_t val_episodes = 100;
  // > 1 computes the episodes of each batch on worker threads. Episode
  // content stays seed-determined, but gradient contributions then sum in
  // completion order, so repeated runs can differ in the last few bits.
  std::size_t train_threads = 1;
};

struct EpochMetrics {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  Checkpoint best;
  double best_val_acc = -1.0;
  std::vector<EpochMetrics> metrics;
  std::vector<double> first_epoch_losses;  // per-episode, training order
  bool diverged = false;
};

struct EvalReport {
  double mean_accuracy = 0.0;
  double ci95 = 0.0;
  std::vector<double> per_episode;
  std::size_t episodes = 0;
};

// Query-set NLL after integrating the model's flow from the support means.
Tensor episode_loss(Model& model, const Episode& ep, EpisodeMode mode);

// The same NLL with prototypes left at the support means.
double baseline_query_nll(const Episode& ep, const ClassifierConfig& config);

// Episodic training; deterministic given config.seed when train_threads is
// 1 (the default). Divergence (non-finite loss or a failed integration)
// aborts and returns the best checkpoint seen so far with diverged=true.
TrainResult meta_train(const EmbeddingDataset& train,
                       const EmbeddingDataset& val, const MetaConfig& config,
                       Model& model);

// Mean episode accuracy with a 1.96 sigma / sqrt(n) half-width. Episode i is
// always drawn from Rng::derive(seed, i), so two evaluations with the same
// seed see bit-identical episodes regardless of thread count.
EvalReport evaluate(const EmbeddingDataset& ds, Model& model,
                    const EpisodeConfig& episode, std::size_t n_episodes = 600,
                    std::uint64_t seed = 1, std::size_t n_threads = 1);

// Cosine similarity of prototypes to the all-sample class means, before and
// after integration, averaged over episodes and classes.
std::pair<double, double> prototype_bias(const EmbeddingDataset& ds,
                                         Model& model,
                                         const EpisodeConfig& episode,
                                         std::size_t n_episodes,
                                         std::uint64_t seed = 1);

// Cosine similarity of (support-mean gradient, model flow at t=0) to the
// analytic flow over the episode classes' full populations.
std::pair<double, double> gradient_bias(const EmbeddingDataset& ds,
                                        Model& model,
                                        const EpisodeConfig& episode,
                                        std::size_t n_episodes,
                                        std::uint64_t seed = 1);

// Single-episode version of the above; the population is every dataset
// sample of the episode's classes.
std::pair<double, double> gradient_bias_episode(const EmbeddingDataset& ds,
                                                Model& model,
                                                const Episode& ep);

}  // namespace protoflow
