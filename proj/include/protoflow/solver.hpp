#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "protoflow/prototype.hpp"
#include "protoflow/tape.hpp"

namespace protoflow {

enum class SolverKind { euler, rk4, e2 };

// Learned per-step correction: a 2-layer MLP applied to each prototype row,
// added on top of the Euler update (not scaled by h, so trained corrections
// are tied to a step count).
class E2SolverParams {
 public:
  explicit E2SolverParams(std::size_t dim, std::uint64_t seed = 1);
  E2SolverParams(const E2SolverParams&) = delete;
  E2SolverParams& operator=(const E2SolverParams&) = delete;
  E2SolverParams(E2SolverParams&&) = default;
  E2SolverParams& operator=(E2SolverParams&&) = default;

  std::size_t dim() const { return dim_; }
  std::vector<Parameter*> parameters();

  Parameter w1, b1, w2, b2;  // d -> d -> d, ELU between, zero output init

 private:
  std::size_t dim_;
};

struct SolverConfig {
  SolverKind kind = SolverKind::euler;
  double integral_time = 40.0;
  std::size_t steps = 40;
  E2SolverParams* correction = nullptr;  // required when kind == e2
};

using FlowFn = std::function<Tensor(const PrototypeState&)>;

// Fixed-step integration from t=0 to t=integral_time. Differentiable: when a
// tape is active the whole unrolled trajectory is recorded.
PrototypeState integrate(const FlowFn& flow, const PrototypeState& p0,
                         const SolverConfig& config);

// True iff Euler with h=lr reproduces explicit descent p <- p - lr * grad
// bit for bit, where grad = -flow.
bool gda_equivalence(const FlowFn& flow, const PrototypeState& p0, double lr,
                     std::size_t n_steps);

// An initial-value problem with a known closed-form solution.
struct TestOde {
  FlowFn flow;
  std::function<Tensor(double)> exact;  // state at time t
  Tensor p0;
  double integral_time = 1.0;
};

// Least-squares slope of log(global error) vs log(h) over the step counts.
double empirical_order(SolverKind kind, const TestOde& ode,
                       const std::vector<std::size_t>& step_counts,
                       E2SolverParams* correction = nullptr);

}  // namespace protoflow
