#pragma once

#include <string>
#include <vector>

#include "ecf/gradcheck.hpp"

namespace ecf {

struct GradSuiteCase {
  std::string name;
  double tol = 0.0;
  GradcheckResult result;
};

// Finite-difference checks for every differentiable operator at tight
// tolerance on small double-precision problems. Inputs are drawn away from
// the kinks of relu/abs and away from integer deformable offsets so the
// central difference is valid.
std::vector<GradSuiteCase> run_op_gradchecks();

// Whole-model check: gradients of the training loss on a 16x16 pair under a
// tiny config, sampling 10 elements from every parameter tensor, at 1e-3.
GradSuiteCase run_model_gradcheck();

}  // namespace ecf
