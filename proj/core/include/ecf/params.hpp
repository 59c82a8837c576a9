#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "ecf/ops.hpp"
#include "ecf/rng.hpp"
#include "ecf/tensor.hpp"

namespace ecf {

// fan_in_uniform draws from U(-b, b) with b = sqrt(3/fan_in), which keeps
// activation variance roughly constant through a conv. residual_scaled
// shrinks that bound by 8x; it goes on the last conv of every additive
// branch (and the output heads) so a freshly initialized network stays close
// to its skip connections instead of compounding variance at every add. The
// network is deep enough that unscaled branches blow activations up by
// several orders of magnitude at init.
enum class Init { zeros, fan_in_uniform, residual_scaled };

// Named registry of trainable tensors. Creation order is the canonical
// parameter order used by the optimizer and the checkpoint format. Each
// parameter draws its initial values from an RNG substream derived from the
// store seed and its own name, so a submodule shared between two model
// variants initializes identically in both.
template <typename S>
class ParamStore {
 public:
  explicit ParamStore(uint64_t init_seed) : seed_(init_seed) {}

  TensorPtr<S> create(const std::string& name, std::vector<int64_t> shape, Init init,
                      int64_t fan_in = 0) {
    check<ConfigError>(!by_name_.count(name), "duplicate parameter name: " + name);
    TensorPtr<S> t;
    if (init == Init::zeros) {
      t = make_tensor<S>(std::move(shape), true);
    } else {
      check<ConfigError>(fan_in > 0, "weight init needs fan_in for " + name);
      double bound = std::sqrt(3.0 / static_cast<double>(fan_in));
      if (init == Init::residual_scaled) bound /= 8.0;
      Rng rng = Rng(seed_).substream("init:" + name);
      t = random_uniform<S>(std::move(shape), static_cast<S>(-bound), static_cast<S>(bound), rng,
                            true);
    }
    order_.push_back(name);
    by_name_.emplace(name, t);
    return t;
  }

  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  TensorPtr<S> get(const std::string& name) const {
    auto it = by_name_.find(name);
    check<ConfigError>(it != by_name_.end(), "unknown parameter: " + name);
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }

  int64_t total_count() const {
    int64_t n = 0;
    for (const auto& name : order_) n += by_name_.at(name)->size();
    return n;
  }

  void zero_grads() {
    for (const auto& name : order_) by_name_.at(name)->zero_grad();
  }

  uint64_t init_seed() const { return seed_; }

 private:
  uint64_t seed_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, TensorPtr<S>> by_name_;
};

// --- layer handles -----------------------------------------------------------

template <typename S>
struct Conv2dLayer {
  TensorPtr<S> w;
  TensorPtr<S> b;  // null when the layer has no bias
  int stride = 1;
  int pad_h = 0;
  int pad_w = 0;
  bool depthwise = false;

  TensorPtr<S> operator()(const TensorPtr<S>& x, Tape<S>* tape) const {
    return depthwise ? conv2d_depthwise(x, w, b, stride, pad_h, tape)
                     : conv2d_pad_hw(x, w, b, stride, pad_h, pad_w, tape);
  }
};

template <typename S>
Conv2dLayer<S> make_conv(ParamStore<S>& ps, const std::string& name, int64_t cout, int64_t cin,
                         int64_t kh, int64_t kw, int stride, int padding,
                         Init winit = Init::fan_in_uniform, bool bias = true) {
  Conv2dLayer<S> layer;
  layer.w = ps.create(name + ".weight", {cout, cin, kh, kw}, winit, cin * kh * kw);
  if (bias) layer.b = ps.create(name + ".bias", {cout}, Init::zeros);
  layer.stride = stride;
  layer.pad_h = padding;
  layer.pad_w = padding;
  return layer;
}

template <typename S>
Conv2dLayer<S> make_conv_depthwise(ParamStore<S>& ps, const std::string& name, int64_t channels,
                                   int64_t kh, int64_t kw, int padding, bool bias = true) {
  Conv2dLayer<S> layer;
  layer.w = ps.create(name + ".weight", {channels, 1, kh, kw}, Init::fan_in_uniform, kh * kw);
  if (bias) layer.b = ps.create(name + ".bias", {channels}, Init::zeros);
  layer.stride = 1;
  layer.pad_h = padding;
  layer.pad_w = padding;
  layer.depthwise = true;
  return layer;
}

// conv3x3 -> relu -> conv3x3 with a skip connection.
template <typename S>
struct ResBlock {
  Conv2dLayer<S> c1, c2;

  TensorPtr<S> operator()(const TensorPtr<S>& x, Tape<S>* tape) const {
    return add(x, c2(relu(c1(x, tape), tape), tape), tape);
  }
};

template <typename S>
ResBlock<S> make_resblock(ParamStore<S>& ps, const std::string& prefix, int64_t channels) {
  ResBlock<S> block;
  block.c1 = make_conv(ps, prefix + ".conv1", channels, channels, 3, 3, 1, 1);
  block.c2 =
      make_conv(ps, prefix + ".conv2", channels, channels, 3, 3, 1, 1, Init::residual_scaled);
  return block;
}

}  // namespace ecf
