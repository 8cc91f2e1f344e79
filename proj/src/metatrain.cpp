#include "protoflow/metatrain.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <thread>

#include "protoflow/error.hpp"
#include "protoflow/ops.hpp"
#include "protoflow/prototype.hpp"

namespace protoflow {

namespace {

// fixed stream tags for Rng::derive so the different consumers of one seed
// never collide
constexpr std::uint64_t kTrainStream = 0x7261696e00000000ull;
constexpr std::uint64_t kValStream = 0x76616c0000000000ull;

double flat_cosine(const Tensor& a, const Tensor& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    dot += a.at(i) * b.at(i);
    na += a.at(i) * a.at(i);
    nb += b.at(i) * b.at(i);
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? dot / denom : 0.0;
}

double rows_cosine(const Tensor& p, const std::vector<double>& mean,
                   std::size_t k) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < p.cols(); ++j) {
    dot += p.at(k, j) * mean[j];
    na += p.at(k, j) * p.at(k, j);
    nb += mean[j] * mean[j];
  }
  const double denom = std::sqrt(na) * std::sqrt(nb);
  return denom > 0.0 ? dot / denom : 0.0;
}

// population of the episode's classes, class-major, with one-hot labels
void episode_population(const EmbeddingDataset& ds, const Episode& ep,
                        Tensor& features, Tensor& onehot) {
  std::size_t total = 0;
  for (std::uint32_t cid : ep.class_ids) total += ds.samples_of(cid).size();
  features = Tensor::zeros({total, ep.dim});
  onehot = Tensor::zeros({total, ep.n_way});
  std::size_t r = 0;
  for (std::size_t k = 0; k < ep.n_way; ++k) {
    for (const auto& v : ds.samples_of(ep.class_ids[k])) {
      for (std::size_t j = 0; j < ep.dim; ++j) features.at(r, j) = v[j];
      onehot.at(r, k) = 1.0;
      ++r;
    }
  }
}

double episode_accuracy(Model& model, const Episode& ep) {
  PrototypeState p0 = init_prototypes(ep);
  FlowFn flow = model.flow_for(ep, ep.mode);
  PrototypeState end = integrate(flow, p0, model.solver());
  Tensor probs = classify_batch(end, ep.query, model.classifier);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < probs.cols(); ++k)
      if (probs.at(i, k) > probs.at(i, best)) best = k;
    if (best == ep.query_labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(probs.rows());
}

void validate(const MetaConfig& cfg) {
  if (cfg.lr <= 0.0) throw ConfigError("meta_train: lr must be positive");
  if (cfg.batch_episodes < 1 || cfg.episodes_per_epoch < 1)
    throw ConfigError("meta_train: batch and episode counts must be >= 1");
  for (std::size_t i = 0; i < cfg.lr_decay_epochs.size(); ++i) {
    if (i > 0 && cfg.lr_decay_epochs[i] <= cfg.lr_decay_epochs[i - 1])
      throw ConfigError("meta_train: decay epochs must strictly increase");
    if (cfg.lr_decay_epochs[i] >= cfg.epochs && cfg.epochs > 0)
      throw ConfigError("meta_train: decay epoch beyond training length");
  }
}

}  // namespace

Model Model::make(FlowKind flow_kind, SolverKind solver_kind,
                  std::size_t n_way, std::size_t dim, std::size_t steps,
                  double integral_time, std::size_t modules,
                  std::uint64_t seed) {
  Model m;
  m.flow_kind = flow_kind;
  m.solver_kind = solver_kind;
  m.n_way = n_way;
  m.dim = dim;
  m.steps = steps;
  m.integral_time = integral_time;
  m.modules = modules;
  if (flow_kind == FlowKind::gradnet) {
    m.gradnet = std::make_unique<GradNetParams>(n_way, dim, modules, seed);
    m.gradnet->integral_time = integral_time;
  } else if (flow_kind == FlowKind::e2gradnet) {
    m.e2 = std::make_unique<E2GradNetParams>(n_way, seed);
  }
  if (solver_kind == SolverKind::e2)
    m.eta = std::make_unique<E2SolverParams>(dim, seed ^ 0x9e3779b97f4a7c15ull);
  return m;
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  if (gradnet)
    for (Parameter* p : gradnet->parameters()) out.push_back(p);
  if (e2)
    for (Parameter* p : e2->parameters()) out.push_back(p);
  if (eta)
    for (Parameter* p : eta->parameters()) out.push_back(p);
  return out;
}

SolverConfig Model::solver() {
  SolverConfig cfg;
  cfg.kind = solver_kind;
  cfg.integral_time = integral_time;
  cfg.steps = steps;
  cfg.correction = eta.get();
  return cfg;
}

FlowFn Model::flow_for(const Episode& ep, EpisodeMode mode) {
  switch (flow_kind) {
    case FlowKind::zero:
      return [](const PrototypeState& s) {
        return Tensor::zeros(s.prototypes.shape());
      };
    case FlowKind::meangrad:
      return [this, &ep](const PrototypeState& s) {
        return mean_gradient(s, ep, classifier);
      };
    case FlowKind::gradnet:
      return [this, &ep, mode](const PrototypeState& s) {
        FlowInput in = make_flow_input(s, ep, mode);
        return gradnet_flow(*gradnet, in);
      };
    case FlowKind::e2gradnet:
      return [this, &ep, mode](const PrototypeState& s) {
        FlowInput in = make_flow_input(s, ep, mode);
        return e2gradnet_flow(*e2, in, classifier);
      };
  }
  throw ConfigError("flow_for: unknown flow kind");
}

Checkpoint Model::to_checkpoint() const {
  Checkpoint ck;
  ck.flow_kind = flow_kind;
  ck.solver_kind = solver_kind;
  ck.steps = steps;
  ck.integral_time = integral_time;
  ck.gamma = classifier.gamma;
  ck.n_way = n_way;
  ck.dim = dim;
  ck.modules = modules;
  Model& self = const_cast<Model&>(*this);  // parameters() is logically const
  if (self.gradnet)
    for (Parameter* p : self.gradnet->parameters())
      ck.tensors.emplace_back("flow." + p->name(), p->value());
  if (self.e2)
    for (Parameter* p : self.e2->parameters())
      ck.tensors.emplace_back("flow." + p->name(), p->value());
  if (self.eta)
    for (Parameter* p : self.eta->parameters())
      ck.tensors.emplace_back("solver." + p->name(), p->value());
  return ck;
}

Model Model::from_checkpoint(const Checkpoint& ck) {
  Model m = make(ck.flow_kind, ck.solver_kind, ck.n_way, ck.dim, ck.steps,
                 ck.integral_time, ck.modules, 0);
  m.classifier.gamma = ck.gamma;
  std::map<std::string, const Tensor*> by_name;
  for (const auto& [name, t] : ck.tensors) by_name[name] = &t;
  auto restore = [&](const std::string& prefix, Parameter* p) {
    auto it = by_name.find(prefix + p->name());
    if (it == by_name.end())
      throw FormatError("checkpoint: missing tensor " + prefix + p->name());
    if (!it->second->same_shape(p->value()))
      throw FormatError("checkpoint: shape mismatch for " + prefix +
                        p->name());
    p->value() = *it->second;
  };
  if (m.gradnet)
    for (Parameter* p : m.gradnet->parameters()) restore("flow.", p);
  if (m.e2)
    for (Parameter* p : m.e2->parameters()) restore("flow.", p);
  if (m.eta)
    for (Parameter* p : m.eta->parameters()) restore("solver.", p);
  return m;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  for (Parameter* p : params_) {
    m_.push_back(Tensor::zeros(p->value().shape()));
    v_.push_back(Tensor::zeros(p->value().shape()));
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& value = params_[i]->value();
    const Tensor& grad = params_[i]->grad();
    if (grad.numel() != value.numel())
      throw ShapeError("adam: gradient missing for " + params_[i]->name());
    for (std::size_t c = 0; c < value.numel(); ++c) {
      // decoupled decay first, then the bias-corrected moment update
      value.at(c) -= config_.lr * config_.weight_decay * value.at(c);
      const double g = grad.at(c);
      m_[i].at(c) = config_.beta1 * m_[i].at(c) + (1.0 - config_.beta1) * g;
      v_[i].at(c) =
          config_.beta2 * v_[i].at(c) + (1.0 - config_.beta2) * g * g;
      const double mhat = m_[i].at(c) / bc1;
      const double vhat = v_[i].at(c) / bc2;
      value.at(c) -= config_.lr * mhat / (std::sqrt(vhat) + config_.eps);
    }
  }
}

Tensor episode_loss(Model& model, const Episode& ep, EpisodeMode mode) {
  PrototypeState p0 = init_prototypes(ep);
  FlowFn flow = model.flow_for(ep, mode);
  PrototypeState end = integrate(flow, p0, model.solver());
  return cross_entropy(end, ep.query, ep.query_labels, model.classifier);
}

double baseline_query_nll(const Episode& ep, const ClassifierConfig& config) {
  return cross_entropy(init_prototypes(ep), ep.query, ep.query_labels, config)
      .item();
}

TrainResult meta_train(const EmbeddingDataset& train,
                       const EmbeddingDataset& val, const MetaConfig& config,
                       Model& model) {
  validate(config);
  TrainResult result;
  result.best = model.to_checkpoint();

  AdamConfig acfg;
  acfg.lr = config.lr;
  acfg.weight_decay = config.weight_decay;
  Adam opt(model.parameters(), acfg);
  // Flows without learned parameters (zero, support-mean gradient) still run
  // the loop for their loss curves, but there is no graph to differentiate.
  const bool trainable = !model.parameters().empty();

  std::uint64_t episode_counter = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::size_t decayed = 0;
    for (std::size_t d : config.lr_decay_epochs)
      if (d <= epoch) ++decayed;
    opt.set_lr(config.lr *
               std::pow(config.lr_decay_factor, static_cast<double>(decayed)));

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < config.episodes_per_epoch;
         start += config.batch_episodes) {
      const std::size_t batch = std::min(config.batch_episodes,
                                         config.episodes_per_epoch - start);
      opt.zero_grad();

      // Forward + backward for one episode; gradients land in the shared
      // Parameter slots (scaled so the batch sums to a mean).
      auto run_episode = [&](std::uint64_t stream) {
        Rng erng = Rng::derive(config.seed, kTrainStream + stream);
        Episode ep = sample_episode(train, config.episode, erng);
        if (!trainable) {
          const double lv = episode_loss(model, ep, config.episode.mode).item();
          if (!std::isfinite(lv)) throw NumericError("non-finite loss");
          return lv;
        }
        Tape tape;
        TapeScope scope(tape);
        Tensor loss = episode_loss(model, ep, config.episode.mode);
        const double lv = loss.item();
        if (!std::isfinite(lv)) throw NumericError("non-finite loss");
        tape.backward(scale(loss, 1.0 / static_cast<double>(batch)));
        return lv;
      };

      std::vector<double> losses(batch, 0.0);
      const std::uint64_t base = episode_counter;
      episode_counter += batch;
      const std::size_t workers =
          std::max<std::size_t>(1, std::min(config.train_threads, batch));
      // NumericError / IntegrationError are how the numeric layer surfaces a
      // diverged trajectory (losses go non-finite by throwing, not by
      // returning NaN); anything else keeps propagating.
      if (workers == 1) {
        try {
          for (std::size_t b = 0; b < batch; ++b)
            losses[b] = run_episode(base + b);
        } catch (const NumericError&) {
          result.diverged = true;
          return result;
        } catch (const IntegrationError&) {
          result.diverged = true;
          return result;
        }
      } else {
        std::atomic<bool> failed(false);
        std::vector<std::thread> pool;
        const std::size_t chunk = (batch + workers - 1) / workers;
        for (std::size_t w = 0; w < workers; ++w) {
          const std::size_t lo = w * chunk;
          const std::size_t hi = std::min(batch, lo + chunk);
          if (lo >= hi) continue;
          pool.emplace_back([&, lo, hi] {
            try {
              for (std::size_t b = lo; b < hi; ++b)
                losses[b] = run_episode(base + b);
            } catch (const NumericError&) {
              failed = true;
            } catch (const IntegrationError&) {
              failed = true;
            }
          });
        }
        for (auto& t : pool) t.join();
        if (failed) {
          result.diverged = true;
          return result;
        }
      }

      for (std::size_t b = 0; b < batch; ++b) {
        loss_sum += losses[b];
        ++seen;
        if (epoch == 1) result.first_epoch_losses.push_back(losses[b]);
      }
      opt.step();
    }

    const double val_acc =
        evaluate(val, model, config.episode, config.val_episodes,
                 config.seed ^ kValStream, 1)
            .mean_accuracy;
    result.metrics.push_back(
        {epoch, loss_sum / static_cast<double>(seen), val_acc, opt.lr()});
    if (val_acc > result.best_val_acc) {
      result.best_val_acc = val_acc;
      result.best = model.to_checkpoint();
    }
  }
  return result;
}

EvalReport evaluate(const EmbeddingDataset& ds, Model& model,
                    const EpisodeConfig& episode, std::size_t n_episodes,
                    std::uint64_t seed, std::size_t n_threads) {
  EvalReport report;
  report.episodes = n_episodes;
  report.per_episode.assign(n_episodes, 0.0);
  if (n_episodes == 0) return report;

  auto run_range = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      Rng erng = Rng::derive(seed, i);
      Episode ep = sample_episode(ds, episode, erng);
      report.per_episode[i] = episode_accuracy(model, ep);
    }
  };

  const std::size_t workers =
      std::max<std::size_t>(1, std::min(n_threads, n_episodes));
  if (workers == 1) {
    run_range(0, n_episodes);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n_episodes + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      const std::size_t lo = w * chunk;
      const std::size_t hi = std::min(n_episodes, lo + chunk);
      if (lo < hi) pool.emplace_back(run_range, lo, hi);
    }
    for (auto& t : pool) t.join();
  }

  double mean = 0.0;
  for (double a : report.per_episode) mean += a;
  mean /= static_cast<double>(n_episodes);
  report.mean_accuracy = mean;
  if (n_episodes > 1) {
    double ss = 0.0;
    for (double a : report.per_episode) ss += (a - mean) * (a - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n_episodes - 1));
    report.ci95 = 1.96 * sd / std::sqrt(static_cast<double>(n_episodes));
  }
  return report;
}

std::pair<double, double> prototype_bias(const EmbeddingDataset& ds,
                                         Model& model,
                                         const EpisodeConfig& episode,
                                         std::size_t n_episodes,
                                         std::uint64_t seed) {
  double sim_init = 0.0, sim_final = 0.0;
  std::size_t terms = 0;
  for (std::size_t i = 0; i < n_episodes; ++i) {
    Rng erng = Rng::derive(seed, i);
    Episode ep = sample_episode(ds, episode, erng);
    PrototypeState p0 = init_prototypes(ep);
    FlowFn flow = model.flow_for(ep, ep.mode);
    PrototypeState end = integrate(flow, p0, model.solver());
    for (std::size_t k = 0; k < ep.n_way; ++k) {
      const std::vector<double> mean = ds.class_mean(ep.class_ids[k]);
      sim_init += rows_cosine(p0.prototypes, mean, k);
      sim_final += rows_cosine(end.prototypes, mean, k);
      ++terms;
    }
  }
  if (terms > 0) {
    sim_init /= static_cast<double>(terms);
    sim_final /= static_cast<double>(terms);
  }
  return {sim_init, sim_final};
}

std::pair<double, double> gradient_bias_episode(const EmbeddingDataset& ds,
                                                Model& model,
                                                const Episode& ep) {
  Tensor pop_x, pop_y;
  episode_population(ds, ep, pop_x, pop_y);
  PrototypeState p0 = init_prototypes(ep);
  Tensor real = analytic_flow(p0, pop_x, pop_y, model.classifier);
  Tensor mean_grad = mean_gradient(p0, ep, model.classifier);
  Tensor inferred = model.flow_for(ep, ep.mode)(p0);
  return {flat_cosine(mean_grad, real), flat_cosine(inferred, real)};
}

std::pair<double, double> gradient_bias(const EmbeddingDataset& ds,
                                        Model& model,
                                        const EpisodeConfig& episode,
                                        std::size_t n_episodes,
                                        std::uint64_t seed) {
  double sim_mean = 0.0, sim_inferred = 0.0;
  for (std::size_t i = 0; i < n_episodes; ++i) {
    Rng erng = Rng::derive(seed, i);
    Episode ep = sample_episode(ds, episode, erng);
    auto [m, f] = gradient_bias_episode(ds, model, ep);
    sim_mean += m;
    sim_inferred += f;
  }
  if (n_episodes > 0) {
    sim_mean /= static_cast<double>(n_episodes);
    sim_inferred /= static_cast<double>(n_episodes);
  }
  return {sim_mean, sim_inferred};
}

}  // namespace protoflow
