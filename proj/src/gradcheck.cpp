#include "protoflow/gradcheck.hpp"

#include <cmath>

#include "protoflow/error.hpp"

namespace protoflow {

GradcheckReport gradcheck(const std::function<Tensor()>& build_loss,
                          const std::vector<Parameter*>& params, double h,
                          double scale_floor) {
  auto eval = [&]() { return build_loss().item(); };

  // Determinism probe: two plain evaluations must agree bit-for-bit.
  const double base0 = eval();
  const double base1 = eval();
  if (base0 != base1)
    throw NumericError("gradcheck: non-deterministic loss evaluation");

  // Analytic gradients via one taped evaluation.
  std::vector<Tensor> saved_grads;
  for (Parameter* p : params) {
    saved_grads.push_back(p->grad());
    p->zero_grad();
  }
  {
    Tape tape;
    TapeScope scope(tape);
    Tensor loss = build_loss();
    tape.backward(loss);
  }
  std::vector<Tensor> analytic;
  for (Parameter* p : params) analytic.push_back(p->grad());
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i]->grad() = saved_grads[i];

  GradcheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    Tensor fd = Tensor::zeros(p->value().shape());
    for (std::size_t i = 0; i < p->value().numel(); ++i) {
      const double orig = p->value().at(i);
      p->value().at(i) = orig + h;
      const double fplus = eval();
      p->value().at(i) = orig - h;
      const double fminus = eval();
      p->value().at(i) = orig;
      fd.at(i) = (fplus - fminus) / (2.0 * h);
    }
    double max_abs = 0.0, norm_a = 0.0, norm_f = 0.0;
    for (std::size_t i = 0; i < fd.numel(); ++i) {
      max_abs = std::max(max_abs, std::fabs(analytic[pi].at(i) - fd.at(i)));
      norm_a = std::max(norm_a, std::fabs(analytic[pi].at(i)));
      norm_f = std::max(norm_f, std::fabs(fd.at(i)));
    }
    GradcheckEntry entry;
    entry.name = p->name();
    entry.max_abs_err = max_abs;
    entry.rel_err = max_abs / std::max({norm_a, norm_f, scale_floor});
    report.max_rel_err = std::max(report.max_rel_err, entry.rel_err);
    report.per_parameter.push_back(std::move(entry));
  }
  return report;
}

}  // namespace protoflow
