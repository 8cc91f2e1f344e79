#include "protoflow/flow.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "protoflow/error.hpp"
#include "protoflow/ops.hpp"

namespace protoflow {

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::uniform({fan_in, fan_out}, rng, -lim, lim);
}

Tensor identity_matrix(std::size_t n) {
  Tensor id = Tensor::zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) id.at(i, i) = 1.0;
  return id;
}

void validate_input(const FlowInput& in) {
  const Tensor& p = in.state.prototypes;
  if (p.ndim() != 2 || in.features.ndim() != 2)
    throw ShapeError("flow input: prototypes and features must be matrices");
  if (in.features.rows() == 0)
    throw ShapeError("flow input: at least one visible sample required");
  if (in.features.cols() != p.cols())
    throw ShapeError("flow input: feature dim does not match prototypes");
  if (in.labels.rows() != in.features.rows() || in.labels.cols() != p.rows())
    throw ShapeError("flow input: label matrix shape mismatch");
  if (in.class_code.rows() != p.rows() || in.class_code.cols() != p.rows())
    throw ShapeError("flow input: class code matrix must be N x N");
  if (in.n_way != p.rows())
    throw ShapeError("flow input: n_way does not match prototype count");
  for (std::size_t i = 0; i < in.labels.rows(); ++i) {
    double s = 0.0;
    for (std::size_t k = 0; k < in.labels.cols(); ++k)
      s += in.labels.at(i, k);
    if (std::fabs(s - 1.0) > 1e-9)
      throw NumericError("flow input: label row does not sum to 1");
  }
}

void check_finite(const Tensor& t, const char* stage, std::size_t module,
                  std::size_t cls) {
  for (std::size_t i = 0; i < t.numel(); ++i) {
    if (!std::isfinite(t.at(i))) {
      std::ostringstream msg;
      msg << "gradnet_flow: non-finite " << stage << " (module " << module
          << ", class " << cls << ", entry " << i << ")";
      throw NumericError(msg.str());
    }
  }
}

}  // namespace

FlowInput make_flow_input(PrototypeState state, Tensor features,
                          Tensor labels) {
  FlowInput in;
  in.n_way = state.prototypes.rows();
  in.state = std::move(state);
  in.features = std::move(features);
  in.labels = std::move(labels);
  in.class_code = identity_matrix(in.n_way);
  validate_input(in);
  return in;
}

FlowInput make_flow_input(PrototypeState state, const Episode& ep,
                          EpisodeMode mode) {
  const std::size_t n = ep.n_way, d = ep.dim;
  const std::size_t s_rows = ep.support.rows();
  const std::size_t q_rows =
      mode == EpisodeMode::transductive ? ep.query.rows() : 0;

  Tensor features = Tensor::zeros({s_rows + q_rows, d});
  std::copy(ep.support.data().begin(), ep.support.data().end(),
            features.data().begin());
  Tensor labels = Tensor::zeros({s_rows + q_rows, n});
  Tensor sup_y = ep.support_onehot();
  std::copy(sup_y.data().begin(), sup_y.data().end(), labels.data().begin());
  if (q_rows > 0) {
    std::copy(ep.query.data().begin(), ep.query.data().end(),
              features.data().begin() + s_rows * d);
    const double u = 1.0 / static_cast<double>(n);
    for (std::size_t i = s_rows; i < s_rows + q_rows; ++i)
      for (std::size_t k = 0; k < n; ++k) labels.at(i, k) = u;
  }
  return make_flow_input(std::move(state), std::move(features),
                         std::move(labels));
}

GradNetParams::GradNetParams(std::size_t n_way, std::size_t dim,
                             std::size_t modules, std::uint64_t seed)
    : n_way_(n_way), dim_(dim) {
  if (modules < 1) throw ConfigError("gradnet: modules must be >= 1");
  if (n_way < 1 || dim < 1) throw ConfigError("gradnet: bad n_way/dim");
  Rng rng(seed);
  const std::size_t embed_in = 2 * n_way + 3 * dim;
  modules_.resize(modules);
  for (std::size_t l = 0; l < modules; ++l) {
    Module& m = modules_[l];
    const std::string tag = "module" + std::to_string(l) + ".";
    m.scale_w1 = Parameter(tag + "scale.w1", glorot(2 * dim, kHidden, rng));
    m.scale_b1 = Parameter(tag + "scale.b1", Tensor::zeros({kHidden}));
    m.scale_w2 = Parameter(tag + "scale.w2", glorot(kHidden, dim, rng));
    m.scale_b2 = Parameter(tag + "scale.b2", Tensor::zeros({dim}));
    m.embed_w = Parameter(tag + "embed.w", glorot(embed_in, kHidden, rng));
    m.embed_b = Parameter(tag + "embed.b", Tensor::zeros({kHidden}));
    for (std::size_t a = 0; a < kHeads; ++a) {
      const std::string head = tag + "head" + std::to_string(a) + ".";
      m.wq[a] = Parameter(head + "wq", glorot(kHidden, kHeadDim, rng));
      m.wk[a] = Parameter(head + "wk", glorot(kHidden, kHeadDim, rng));
      m.wv[a] = Parameter(head + "wv", glorot(kHidden, kHeadDim, rng));
    }
    m.out_w = Parameter(tag + "out.w", glorot(kHeads * kHeadDim, 1, rng));
  }
}

std::vector<Parameter*> GradNetParams::parameters() {
  std::vector<Parameter*> out;
  for (Module& m : modules_) {
    out.push_back(&m.scale_w1);
    out.push_back(&m.scale_b1);
    out.push_back(&m.scale_w2);
    out.push_back(&m.scale_b2);
    out.push_back(&m.embed_w);
    out.push_back(&m.embed_b);
    for (std::size_t a = 0; a < kHeads; ++a) {
      out.push_back(&m.wq[a]);
      out.push_back(&m.wk[a]);
      out.push_back(&m.wv[a]);
    }
    out.push_back(&m.out_w);
  }
  return out;
}

Tensor gradnet_flow(GradNetParams& params, const FlowInput& input,
                    GradNetDiag* diag) {
  validate_input(input);
  const Tensor& p = input.state.prototypes;
  const std::size_t n = p.rows(), d = p.cols();
  const std::size_t s_count = input.features.rows();
  const std::size_t modules = params.modules();
  if (n != params.n_way() || d != params.dim())
    throw ConfigError("gradnet_flow: parameter shape does not match input");
  for (std::size_t k = 0; k < n; ++k) {
    double norm = 0.0;
    for (std::size_t j = 0; j < d; ++j) norm += p.at(k, j) * p.at(k, j);
    if (norm == 0.0) throw NumericError("gradnet_flow: zero prototype row");
  }
  if (params.beta0 <= 0.0 || params.xi <= 0.0)
    throw ConfigError("gradnet_flow: beta0 and xi must be positive");

  if (diag) {
    diag->weights.assign(n * modules, {});
    diag->means.assign(n * modules, {});
  }

  const Tensor& F = input.features;  // constant features
  Tensor ones = Tensor::full({s_count, 1}, 1.0);
  Tensor ylab = matmul(input.labels, input.class_code);  // [S x N]
  const double beta =
      params.beta0 *
      std::pow(params.xi, input.state.time / params.integral_time);
  const double attn_scale =
      1.0 / std::sqrt(static_cast<double>(GradNetParams::kHeadDim));

  std::vector<Tensor> class_rows;
  class_rows.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    Tensor pk = row(p, k);           // [1 x d]
    Tensor pk_rows = matmul(ones, pk);  // [S x d]
    Tensor kcode = matmul(ones, row(input.class_code, k));  // [S x N]
    Tensor scale_in = concat({F, pk_rows}, 1);              // [S x 2d]

    Tensor num, den, first_mean;
    for (std::size_t l = 0; l < modules; ++l) {
      auto& m = params.module(l);
      // displacement candidates: scale(f, p_k) .* f - p_k
      Tensor sh =
          elu(add_rowvec(matmul(scale_in, m.scale_w1.use()), m.scale_b1.use()));
      Tensor s_out = add_rowvec(matmul(sh, m.scale_w2.use()), m.scale_b2.use());
      Tensor dk = sub(mul(s_out, F), pk_rows);  // [S x d]

      // sample embedding: k' || p_k || y'_i || f_i || p_k .* f_i
      Tensor e_in = concat({kcode, pk_rows, ylab, F, mul(pk_rows, F)}, 1);
      Tensor h =
          elu(add_rowvec(matmul(e_in, m.embed_w.use()), m.embed_b.use()));

      std::vector<Tensor> heads;
      heads.reserve(GradNetParams::kHeads);
      for (std::size_t a = 0; a < GradNetParams::kHeads; ++a) {
        Tensor q = matmul(h, m.wq[a].use());
        Tensor key = matmul(h, m.wk[a].use());
        Tensor v = matmul(h, m.wv[a].use());
        Tensor attn = softmax(scale(matmul(q, transpose(key)), attn_scale), 1);
        heads.push_back(matmul(attn, v));
      }
      Tensor logits = matmul(concat(heads, 1), m.out_w.use());  // [S x 1]
      Tensor w = softmax(logits, 0);  // weights over samples
      check_finite(w, "attention weight", l, k);

      Tensor mu = matmul(transpose(w), dk);  // [1 x d]
      if (diag) {
        diag->weights[k * modules + l] = w.data();
        diag->means[k * modules + l] = mu.data();
      }
      if (modules == 1) {
        first_mean = mu;
        break;
      }
      Tensor dev = sub(dk, matmul(ones, mu));
      Tensor var = clamp_min(matmul(transpose(w), mul(dev, dev)), 1e-8);
      Tensor inv = divide(1.0, var);
      Tensor weighted = mul(inv, mu);
      num = (l == 0) ? weighted : add(num, weighted);
      den = (l == 0) ? inv : add(den, inv);
    }
    // single module: the inverse-variance combination is the identity
    Tensor combined = (modules == 1) ? first_mean : divide(num, den);
    check_finite(combined, "module combination", modules - 1, k);
    class_rows.push_back(combined);
  }
  Tensor flow = scale(concat(class_rows, 0), beta);
  check_finite(flow, "output", modules - 1, n - 1);
  return flow;
}

E2GradNetParams::E2GradNetParams(std::size_t n_way, std::uint64_t seed)
    : n_way_(n_way) {
  if (n_way < 1) throw ConfigError("e2gradnet: n_way must be >= 1");
  (void)seed;  // the identity start point is deterministic
  // Identity start: the estimate equals the class probabilities, the
  // discrepancy vanishes, and the initial flow is exactly zero. Training
  // then starts from support-mean behaviour instead of having to undo a
  // large drift first (a zero output layer makes the initial field
  // -P (f - p), which compounds over the integration horizon).
  w1 = Parameter("residual.w1", identity_matrix(n_way));
  b1 = Parameter("residual.b1", Tensor::zeros({n_way}));
  w2 = Parameter("residual.w2", identity_matrix(n_way));
  b2 = Parameter("residual.b2", Tensor::zeros({n_way}));
}

E2GradNetParams E2GradNetParams::identity_surrogate(std::size_t n_way) {
  E2GradNetParams p(n_way, 1);
  p.w1.value() = identity_matrix(n_way);
  p.w2.value() = identity_matrix(n_way);
  return p;
}

std::vector<Parameter*> E2GradNetParams::parameters() {
  return {&w1, &b1, &w2, &b2};
}

Tensor flow_from_discrepancy(const Tensor& part1, const Tensor& features,
                             const Tensor& prototypes) {
  if (part1.rows() != features.rows() || part1.cols() != prototypes.rows())
    throw ShapeError("flow_from_discrepancy: shape mismatch");
  Tensor moved = matmul(transpose(part1), features);          // [N x d]
  Tensor anchored = mul_colvec(prototypes, colsum(part1));    // [N x d]
  const double inv = 1.0 / static_cast<double>(features.rows());
  return scale(sub(moved, anchored), inv);
}

Tensor e2gradnet_flow(E2GradNetParams& params, const FlowInput& input,
                      const ClassifierConfig& config) {
  validate_input(input);
  if (params.n_way() != input.n_way)
    throw ConfigError("e2gradnet_flow: residual width does not match n_way");
  Tensor probs = classify_batch(input.state, input.features, config);
  Tensor h = elu(add_rowvec(matmul(probs, params.w1.use()), params.b1.use()));
  Tensor yhat = add_rowvec(matmul(h, params.w2.use()), params.b2.use());
  Tensor part1 = sub(yhat, probs);
  Tensor flow =
      flow_from_discrepancy(part1, input.features, input.state.prototypes);
  for (std::size_t i = 0; i < flow.numel(); ++i)
    if (!std::isfinite(flow.at(i)))
      throw NumericError("e2gradnet_flow: non-finite output");
  return flow;
}

ProbeStats flow_complexity_probe(FlowKind kind, std::size_t n_way,
                                 std::size_t k_shot, std::size_t queries,
                                 std::size_t dim, std::size_t repeats,
                                 std::size_t modules, std::uint64_t seed) {
  if (repeats < 3) throw ConfigError("flow_complexity_probe: repeats < 3");
  Rng rng(seed);
  const std::size_t s_rows = n_way * k_shot;
  const std::size_t q_rows = n_way * queries;

  PrototypeState state;
  state.prototypes = Tensor::randn({n_way, dim}, rng);
  Tensor features = Tensor::randn({s_rows + q_rows, dim}, rng);
  Tensor labels = Tensor::zeros({s_rows + q_rows, n_way});
  for (std::size_t i = 0; i < s_rows; ++i) labels.at(i, i / k_shot) = 1.0;
  for (std::size_t i = s_rows; i < s_rows + q_rows; ++i)
    for (std::size_t k = 0; k < n_way; ++k)
      labels.at(i, k) = 1.0 / static_cast<double>(n_way);
  FlowInput input = make_flow_input(state, features, labels);
  ClassifierConfig ccfg;

  // the mean-gradient flow only ever sees the labeled rows
  Tensor sup_features = Tensor::zeros({s_rows, dim});
  Tensor sup_labels = Tensor::zeros({s_rows, n_way});
  std::copy(features.data().begin(), features.data().begin() + s_rows * dim,
            sup_features.data().begin());
  std::copy(labels.data().begin(), labels.data().begin() + s_rows * n_way,
            sup_labels.data().begin());

  GradNetParams gp(kind == FlowKind::gradnet ? n_way : 1,
                   kind == FlowKind::gradnet ? dim : 1,
                   kind == FlowKind::gradnet ? modules : 1, seed + 1);
  E2GradNetParams ep(n_way, seed + 1);

  auto run_once = [&]() {
    switch (kind) {
      case FlowKind::zero:
        Tensor::zeros(state.prototypes.shape());
        break;
      case FlowKind::gradnet:
        gradnet_flow(gp, input);
        break;
      case FlowKind::e2gradnet:
        e2gradnet_flow(ep, input, ccfg);
        break;
      case FlowKind::meangrad:
        analytic_flow(input.state, sup_features, sup_labels, ccfg);
        break;
    }
  };

  run_once();  // warm caches before timing
  ProbeStats stats;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    run_once();
    const auto stop = std::chrono::steady_clock::now();
    stats.samples.push_back(
        std::chrono::duration<double>(stop - start).count());
  }
  std::vector<double> sorted = stats.samples;
  std::sort(sorted.begin(), sorted.end());
  stats.min_seconds = sorted.front();
  stats.max_seconds = sorted.back();
  const std::size_t mid = sorted.size() / 2;
  stats.median_seconds = sorted.size() % 2 == 1
                             ? sorted[mid]
                             : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return stats;
}

}  // namespace protoflow
