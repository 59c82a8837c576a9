#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ecf/tensor.hpp"

namespace ecf {

struct GradcheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // 0 checks every element; otherwise a deterministic sample of this many
  // elements per leaf (useful for whole-model checks).
  int64_t max_checks_per_leaf = 0;
  uint64_t sample_seed = 7;
};

struct GradcheckResult {
  bool pass = true;
  double max_rel_error = 0.0;
  int64_t checked = 0;
  std::string worst;
};

// Builds the scalar loss under the given tape. Must be a pure function of the
// leaf values so it can be re-evaluated for finite differencing.
using ScalarFn = std::function<TensorPtr<double>(Tape<double>&)>;

// Compares tape gradients of `fn` against central finite differences on every
// leaf. Relative error uses max(|analytic|, |numeric|, 1e-3) as denominator
// so near-zero gradients are judged on an absolute scale.
GradcheckResult gradcheck(const ScalarFn& fn, const std::vector<TensorPtr<double>>& leaves,
                          const GradcheckOptions& opt = {});

}  // namespace ecf
