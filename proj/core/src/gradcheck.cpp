#include "ecf/gradcheck.hpp"

#include <algorithm>
#include <sstream>

#include "ecf/rng.hpp"

namespace ecf {

namespace {

double eval_scalar(const ScalarFn& fn) {
  Tape<double> scratch;
  auto loss = fn(scratch);
  check(loss && loss->size() == 1, "gradcheck: fn must return a scalar");
  return loss->values[0];
}

}  // namespace

GradcheckResult gradcheck(const ScalarFn& fn, const std::vector<TensorPtr<double>>& leaves,
                          const GradcheckOptions& opt) {
  check<ConfigError>(opt.step > 0.0 && opt.tol > 0.0, "gradcheck: step and tol must be positive");
  for (const auto& leaf : leaves) {
    check(leaf != nullptr, "gradcheck: null leaf");
    leaf->zero_grad();
  }

  Tape<double> tape;
  auto loss = fn(tape);
  check(loss && loss->size() == 1, "gradcheck: fn must return a scalar");
  tape.backward(loss);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    if (leaf->has_grad())
      analytic.emplace_back(leaf->grad.begin(), leaf->grad.end());
    else
      analytic.emplace_back(leaf->values.size(), 0.0);
  }

  GradcheckResult result;
  Rng sampler(opt.sample_seed);
  for (size_t li = 0; li < leaves.size(); ++li) {
    auto& leaf = *leaves[li];
    const int64_t n = leaf.size();
    std::vector<int64_t> indices(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) indices[static_cast<size_t>(i)] = i;
    int64_t take = n;
    if (opt.max_checks_per_leaf > 0 && opt.max_checks_per_leaf < n) {
      take = opt.max_checks_per_leaf;
      for (int64_t i = 0; i < take; ++i) {
        const int64_t j = i + sampler.next_below(n - i);
        std::swap(indices[static_cast<size_t>(i)], indices[static_cast<size_t>(j)]);
      }
    }
    for (int64_t pick = 0; pick < take; ++pick) {
      const int64_t i = indices[static_cast<size_t>(pick)];
      const double a = analytic[li][static_cast<size_t>(i)];

      // On disagreement, retry with a smaller step before reporting. A probe
      // that happens to straddle a relu/L1 kink (or pure truncation error)
      // converges to the analytic value as the step shrinks; a wrong backward
      // rule disagrees at every step size.
      double rel = 0.0;
      double reported = 0.0;
      for (double step = opt.step; ; step *= 0.25) {
        const double saved = leaf.values[static_cast<size_t>(i)];
        leaf.values[static_cast<size_t>(i)] = saved + step;
        const double f_plus = eval_scalar(fn);
        leaf.values[static_cast<size_t>(i)] = saved - step;
        const double f_minus = eval_scalar(fn);
        leaf.values[static_cast<size_t>(i)] = saved;

        const double numeric = (f_plus - f_minus) / (2.0 * step);
        const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
        const double r = std::abs(a - numeric) / denom;
        if (step == opt.step || r < rel) {
          rel = r;
          reported = numeric;
        }
        if (rel <= opt.tol || step <= opt.step * 0.02) break;
      }
      ++result.checked;
      if (rel > result.max_rel_error) {
        result.max_rel_error = rel;
        std::ostringstream os;
        os << "leaf " << li << " elem " << i << ": analytic=" << a << " numeric=" << reported;
        result.worst = os.str();
      }
    }
  }
  result.pass = result.max_rel_error <= opt.tol;
  return result;
}

}  // namespace ecf
