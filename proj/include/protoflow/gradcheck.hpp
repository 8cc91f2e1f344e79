#pragma once

#include <functional>
#include <string>
#include <vector>

#include "protoflow/tape.hpp"

namespace protoflow {

struct GradcheckEntry {
  std::string name;
  double rel_err = 0.0;      // ||g_tape - g_fd||_inf scaled by gradient size
  double max_abs_err = 0.0;  // ||g_tape - g_fd||_inf
};

struct GradcheckReport {
  std::vector<GradcheckEntry> per_parameter;
  double max_rel_err = 0.0;
  bool pass(double tol) const { return max_rel_err <= tol; }
};

// Central-difference verification of tape gradients. `build_loss` must be a
// pure function of the parameter values: under an active tape it defines the
// graph, without one it just evaluates. The base point is evaluated twice and
// any bitwise difference raises NumericError (hidden state in the closure
// would invalidate the comparison). Relative error per parameter is
// ||g - g_fd||_inf / max(||g||_inf, ||g_fd||_inf, floor).
GradcheckReport gradcheck(const std::function<Tensor()>& build_loss,
                          const std::vector<Parameter*>& params,
                          double h = 1e-6, double scale_floor = 1e-6);

}  // namespace protoflow
