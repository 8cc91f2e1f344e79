#include "protoflow/solver.hpp"

#include <cmath>
#include <sstream>

#include "protoflow/error.hpp"
#include "protoflow/ops.hpp"
#include "protoflow/rng.hpp"

namespace protoflow {

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double lim = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  return Tensor::uniform({fan_in, fan_out}, rng, -lim, lim);
}

void check_step_finite(const Tensor& t, std::size_t step, const char* what) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << "integrate: non-finite " << what << " at step " << step;
      throw IntegrationError(msg.str());
    }
  }
}

Tensor eta_correction(E2SolverParams& params, const Tensor& p) {
  Tensor h = elu(add_rowvec(matmul(p, params.w1.use()), params.b1.use()));
  return add_rowvec(matmul(h, params.w2.use()), params.b2.use());
}

void validate(const SolverConfig& config) {
  if (config.steps < 1) throw ConfigError("integrate: steps must be >= 1");
  if (config.integral_time <= 0.0)
    throw ConfigError("integrate: integral_time must be positive");
  if (config.kind == SolverKind::e2 && config.correction == nullptr)
    throw ConfigError("integrate: e2 solver requires correction parameters");
}

// Shared fixed-step loop; h is passed explicitly so callers can pin it
// exactly (gda_equivalence needs h == lr bit for bit).
PrototypeState run_steps(const FlowFn& flow, PrototypeState state,
                         const SolverConfig& config, double h,
                         double final_time) {
  for (std::size_t s = 0; s < config.steps; ++s) {
    const double t = state.time;
    switch (config.kind) {
      case SolverKind::euler: {
        Tensor f = flow(state);
        check_step_finite(f, s, "flow");
        state.prototypes = add(state.prototypes, scale(f, h));
        break;
      }
      case SolverKind::rk4: {
        Tensor k1 = flow(state);
        PrototypeState mid1{add(state.prototypes, scale(k1, h / 2)),
                            t + h / 2};
        Tensor k2 = flow(mid1);
        PrototypeState mid2{add(state.prototypes, scale(k2, h / 2)),
                            t + h / 2};
        Tensor k3 = flow(mid2);
        PrototypeState end{add(state.prototypes, scale(k3, h)), t + h};
        Tensor k4 = flow(end);
        check_step_finite(k4, s, "flow");
        Tensor incr =
            add(add(k1, scale(add(k2, k3), 2.0)), k4);  // k1+2k2+2k3+k4
        state.prototypes = add(state.prototypes, scale(incr, h / 6));
        break;
      }
      case SolverKind::e2: {
        Tensor f = flow(state);
        check_step_finite(f, s, "flow");
        Tensor eta = eta_correction(*config.correction, state.prototypes);
        state.prototypes =
            add(add(state.prototypes, scale(f, h)), eta);
        break;
      }
    }
    check_step_finite(state.prototypes, s, "state");
    state.time = (s + 1 == config.steps) ? final_time : t + h;
  }
  return state;
}

}  // namespace

E2SolverParams::E2SolverParams(std::size_t dim, std::uint64_t seed)
    : dim_(dim) {
  if (dim < 1) throw ConfigError("e2 solver: dim must be >= 1");
  Rng rng(seed);
  w1 = Parameter("eta.w1", glorot(dim, dim, rng));
  b1 = Parameter("eta.b1", Tensor::zeros({dim}));
  // zero output layer: the initial correction is exactly 0, making the
  // untrained solver bit-identical to Euler.
  w2 = Parameter("eta.w2", Tensor::zeros({dim, dim}));
  b2 = Parameter("eta.b2", Tensor::zeros({dim}));
}

std::vector<Parameter*> E2SolverParams::parameters() {
  return {&w1, &b1, &w2, &b2};
}

PrototypeState integrate(const FlowFn& flow, const PrototypeState& p0,
                         const SolverConfig& config) {
  validate(config);
  if (p0.time != 0.0)
    throw IntegrationError("integrate: initial state must be at time 0");
  if (config.kind == SolverKind::e2 &&
      config.correction->dim() != p0.prototypes.cols())
    throw ConfigError("integrate: correction width does not match dim");
  const double h =
      config.integral_time / static_cast<double>(config.steps);
  return run_steps(flow, p0, config, h, config.integral_time);
}

bool gda_equivalence(const FlowFn& flow, const PrototypeState& p0, double lr,
                     std::size_t n_steps) {
  if (lr <= 0.0) throw ConfigError("gda_equivalence: lr must be positive");
  SolverConfig euler_cfg;
  euler_cfg.kind = SolverKind::euler;
  euler_cfg.steps = n_steps;
  PrototypeState euler = run_steps(flow, p0, euler_cfg, lr,
                                   lr * static_cast<double>(n_steps));

  PrototypeState gd = p0;
  for (std::size_t s = 0; s < n_steps; ++s) {
    Tensor grad = neg(flow(gd));  // flow = -grad(L)
    gd.prototypes = sub(gd.prototypes, scale(grad, lr));
    gd.time = lr * static_cast<double>(s + 1);
  }

  if (euler.prototypes.numel() != gd.prototypes.numel()) return false;
  for (std::size_t i = 0; i < gd.prototypes.numel(); ++i)
    if (euler.prototypes.at(i) != gd.prototypes.at(i)) return false;
  return true;
}

double empirical_order(SolverKind kind, const TestOde& ode,
                       const std::vector<std::size_t>& step_counts,
                       E2SolverParams* correction) {
  if (step_counts.size() < 3)
    throw ConfigError("empirical_order: need at least 3 step counts");
  for (std::size_t i = 1; i < step_counts.size(); ++i)
    if (step_counts[i] <= step_counts[i - 1])
      throw ConfigError("empirical_order: step counts must increase");

  std::vector<double> log_h, log_err;
  Tensor truth = ode.exact(ode.integral_time);
  for (std::size_t steps : step_counts) {
    SolverConfig cfg;
    cfg.kind = kind;
    cfg.steps = steps;
    cfg.integral_time = ode.integral_time;
    cfg.correction = correction;
    PrototypeState end = integrate(ode.flow, {ode.p0, 0.0}, cfg);
    double err = 0.0;
    for (std::size_t i = 0; i < truth.numel(); ++i)
      err = std::max(err,
                     std::fabs(end.prototypes.at(i) - truth.at(i)));
    if (err < 1e-13)
      throw IntegrationError(
          "empirical_order: global error underflow; reduce the step range");
    log_h.push_back(std::log(ode.integral_time / static_cast<double>(steps)));
    log_err.push_back(std::log(err));
  }

  const std::size_t n = log_h.size();
  double mh = 0.0, me = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mh += log_h[i];
    me += log_err[i];
  }
  mh /= n;
  me /= n;
  double cov = 0.0, var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (log_h[i] - mh) * (log_err[i] - me);
    var += (log_h[i] - mh) * (log_h[i] - mh);
  }
  return cov / var;
}

}  // namespace protoflow
