#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ecf/common.hpp"
#include "ecf/rng.hpp"

namespace ecf {

int64_t shape_numel(const std::vector<int64_t>& shape);

// Dense row-major tensor. The gradient buffer stays empty until something
// accumulates into it; an empty grad means "no gradient has reached this
// tensor yet", which the tape uses to skip dead branches during backward.
template <typename S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> values;
  std::vector<S> grad;
  bool requires_grad = false;

  int64_t size() const { return static_cast<int64_t>(values.size()); }

  int64_t dim(size_t i) const {
    check(i < shape.size(), "Tensor::dim index out of range for " + shape_str(shape));
    return shape[i];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool has_grad() const { return !grad.empty(); }

  void ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), S(0));
  }

  void zero_grad() { grad.clear(); }

  void accumulate_grad(const S* g, int64_t n) {
    check(n == size(), "gradient size mismatch");
    ensure_grad();
    for (int64_t i = 0; i < n; ++i) grad[static_cast<size_t>(i)] += g[i];
  }
};

template <typename S>
using TensorPtr = std::shared_ptr<Tensor<S>>;

template <typename S>
TensorPtr<S> make_tensor(std::vector<int64_t> shape, bool requires_grad = false) {
  auto t = std::make_shared<Tensor<S>>();
  const int64_t n = shape_numel(shape);
  t->shape = std::move(shape);
  t->values.assign(static_cast<size_t>(n), S(0));
  t->requires_grad = requires_grad;
  return t;
}

template <typename S>
TensorPtr<S> make_tensor(std::vector<int64_t> shape, std::vector<S> values,
                         bool requires_grad = false) {
  const int64_t n = shape_numel(shape);
  check(n == static_cast<int64_t>(values.size()),
        "value count does not match shape " + shape_str(shape));
  auto t = std::make_shared<Tensor<S>>();
  t->shape = std::move(shape);
  t->values = std::move(values);
  t->requires_grad = requires_grad;
  return t;
}

template <typename S>
TensorPtr<S> full(std::vector<int64_t> shape, S value, bool requires_grad = false) {
  auto t = make_tensor<S>(std::move(shape), requires_grad);
  std::fill(t->values.begin(), t->values.end(), value);
  return t;
}

template <typename S>
TensorPtr<S> random_uniform(std::vector<int64_t> shape, S lo, S hi, Rng& rng,
                            bool requires_grad = false) {
  auto t = make_tensor<S>(std::move(shape), requires_grad);
  for (auto& v : t->values) v = static_cast<S>(rng.uniform(static_cast<double>(lo), static_cast<double>(hi)));
  return t;
}

template <typename S>
TensorPtr<S> random_normal(std::vector<int64_t> shape, S mean, S stddev, Rng& rng,
                           bool requires_grad = false) {
  auto t = make_tensor<S>(std::move(shape), requires_grad);
  for (auto& v : t->values)
    v = static_cast<S>(static_cast<double>(mean) + static_cast<double>(stddev) * rng.normal());
  return t;
}

// Converts element type, dropping autodiff state.
template <typename D, typename Src>
TensorPtr<D> cast_tensor(const TensorPtr<Src>& x) {
  auto out = make_tensor<D>(x->shape);
  for (int64_t i = 0; i < x->size(); ++i)
    out->values[static_cast<size_t>(i)] = static_cast<D>(x->values[static_cast<size_t>(i)]);
  return out;
}

// Records one backward rule per forward op, in execution order. backward()
// replays the list in reverse exactly once. Rules read output->grad and
// accumulate into input grads; nodes whose output never received a gradient
// are skipped, which both saves work and keeps unused branches at zero.
template <typename S>
class Tape {
 public:
  struct Node {
    std::string label;
    std::vector<TensorPtr<S>> inputs;
    TensorPtr<S> output;
    std::function<void()> rule;
  };

  void record(std::string label, std::vector<TensorPtr<S>> inputs, TensorPtr<S> output,
              std::function<void()> rule) {
    check<ConfigError>(!used_, "Tape already consumed by backward(); build a new tape");
    nodes_.push_back(Node{std::move(label), std::move(inputs), std::move(output), std::move(rule)});
  }

  // Seeds d(loss)/d(loss) = 1 and replays all rules in reverse order.
  // The loss must be a scalar produced under this tape.
  void backward(const TensorPtr<S>& loss) {
    check<ConfigError>(!used_, "Tape::backward may only run once");
    check(loss && loss->size() == 1, "backward expects a scalar loss");
    used_ = true;
    loss->ensure_grad();
    loss->grad[0] += S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (!it->output->has_grad()) continue;
      it->rule();
    }
  }

  bool used() const { return used_; }
  size_t node_count() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Label of the first recorded node whose output holds a non-finite value,
  // or an empty string. Used by training to report where a blow-up started.
  std::string first_non_finite() const {
    for (const auto& node : nodes_) {
      for (const S v : node.output->values) {
        if (!std::isfinite(static_cast<double>(v))) return node.label;
      }
    }
    return {};
  }

 private:
  std::vector<Node> nodes_;
  bool used_ = false;
};

extern template struct Tensor<float>;
extern template struct Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace ecf
