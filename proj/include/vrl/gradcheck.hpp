#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "vrl/nets.hpp"
#include "vrl/rng.hpp"
#include "vrl/tensor.hpp"

namespace vrl {

// Gradient verification runs in double precision with central differences.
// loss_fn(with_grad) must rebuild its graph from the current param values and,
// when with_grad is true, run backward so analytic grads land in param.grad.
using LossFn = std::function<double(bool with_grad)>;

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  int samples_per_tensor = 24;  // indices checked per tensor (all, if fewer)
  uint64_t sample_seed = 17;
  // Relative error denominator floor: central differences carry ~1e-10 of
  // roundoff noise for O(1) losses, so gradients far below this floor are
  // compared on that absolute scale instead of blowing up the ratio.
  double denom_floor = 1e-5;
};

struct GradCheckReport {
  struct Item {
    std::string name;
    double max_rel_err = 0.0;
    int64_t checked = 0;
  };
  std::vector<Item> items;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Fills param.grad via loss_fn(true) and returns a copy of the grads in
// param-list order. Throws on a non-finite loss.
std::vector<std::vector<double>> analytic_grads(const ParamList<double>& params, const LossFn& loss_fn);

// Central-difference comparison of the provided analytic grads.
GradCheckReport compare_with_fd(const ParamList<double>& params, const LossFn& loss_fn,
                                const std::vector<std::vector<double>>& grads,
                                const GradCheckOptions& opts);

GradCheckReport grad_check(const ParamList<double>& params, const LossFn& loss_fn,
                           const GradCheckOptions& opts = {});

// The per-layer-type suite plus the reduced 16x16 generator and policy nets;
// one line per check. Returns overall pass.
bool run_gradcheck_suite(std::ostream& os, double tolerance = 1e-4);

}  // namespace vrl
