#include "ecf/gradsuite.hpp"

#include <cmath>
#include <memory>
#include <utility>

#include "ecf/model.hpp"
#include "ecf/operators.hpp"
#include "ecf/ops.hpp"

namespace ecf {
namespace {

using T = TensorPtr<double>;
using Build = std::function<T(Tape<double>&)>;

// Values with |v| in [lo, hi]: keeps relu/abs inputs and deformable offsets
// away from their kinks by more than the finite-difference step.
T signed_uniform(std::vector<int64_t> shape, double lo, double hi, Rng& rng, bool rg) {
  auto t = make_tensor<double>(std::move(shape), rg);
  for (auto& v : t->values) {
    const double mag = rng.uniform(lo, hi);
    v = rng.uniform(0.0, 1.0) < 0.5 ? -mag : mag;
  }
  return t;
}

// Reduces an arbitrary-shape output to a scalar through a fixed random
// weighting, so the check exercises distinct upstream gradients per element.
// The weight tensor is created on the first evaluation and reused by every
// finite-difference probe.
ScalarFn weighted(Build build, uint64_t weight_seed) {
  auto cache = std::make_shared<T>();
  return [build = std::move(build), cache, weight_seed](Tape<double>& tape) -> T {
    auto out = build(tape);
    if (!*cache) {
      Rng wr(weight_seed);
      *cache = random_uniform<double>(out->shape, -1.0, 1.0, wr, false);
    }
    return sum_all(mul(out, *cache, &tape), &tape);
  };
}

std::vector<T> store_leaves(const ParamStore<double>& ps) {
  std::vector<T> leaves;
  for (const auto& name : ps.names()) leaves.push_back(ps.get(name));
  return leaves;
}

struct CaseDef {
  std::string name;
  ScalarFn fn;
  std::vector<T> leaves;
};

void run_case(std::vector<GradSuiteCase>& rows, const CaseDef& c, const GradcheckOptions& opt) {
  GradSuiteCase row;
  row.name = c.name;
  row.tol = opt.tol;
  row.result = gradcheck(c.fn, c.leaves, opt);
  rows.push_back(std::move(row));
}

}  // namespace

std::vector<GradSuiteCase> run_op_gradchecks() {
  std::vector<GradSuiteCase> rows;
  GradcheckOptions opt;  // step 1e-5, tol 1e-4, every element checked
  Rng rng(20240901);

  {
    auto x = random_uniform<double>({2, 3, 6, 5}, -1.0, 1.0, rng, true);
    auto w = random_uniform<double>({4, 3, 3, 3}, -0.5, 0.5, rng, true);
    auto b = random_uniform<double>({4}, -0.2, 0.2, rng, true);
    run_case(rows,
             {"conv2d",
              weighted([=](Tape<double>& t) { return conv2d(x, w, b, 2, 1, &t); }, 101),
              {x, w, b}},
             opt);
  }
  {
    auto x = random_uniform<double>({1, 4, 5, 5}, -1.0, 1.0, rng, true);
    auto w = random_uniform<double>({4, 1, 3, 3}, -0.5, 0.5, rng, true);
    auto b = random_uniform<double>({4}, -0.2, 0.2, rng, true);
    run_case(rows,
             {"conv2d_depthwise",
              weighted([=](Tape<double>& t) { return conv2d_depthwise(x, w, b, 1, 1, &t); }, 102),
              {x, w, b}},
             opt);
  }
  {
    auto x = random_uniform<double>({1, 2, 5, 5}, -1.0, 1.0, rng, true);
    auto w = random_uniform<double>({3, 2, 3, 1}, -0.5, 0.5, rng, true);
    auto b = random_uniform<double>({3}, -0.2, 0.2, rng, true);
    run_case(rows,
             {"conv2d_pad_hw",
              weighted([=](Tape<double>& t) { return conv2d_pad_hw(x, w, b, 1, 1, 0, &t); }, 103),
              {x, w, b}},
             opt);
  }
  {
    auto a = random_uniform<double>({3, 4}, -1.0, 1.0, rng, true);
    auto b = random_uniform<double>({4, 5}, -1.0, 1.0, rng, true);
    run_case(
        rows,
        {"matmul", weighted([=](Tape<double>& t) { return matmul(a, b, &t); }, 104), {a, b}},
        opt);
  }
  {
    auto a = random_uniform<double>({2, 3, 4}, -1.0, 1.0, rng, true);
    auto b = random_uniform<double>({2, 4, 5}, -1.0, 1.0, rng, true);
    run_case(rows,
             {"matmul_batched",
              weighted([=](Tape<double>& t) { return matmul(a, b, &t); }, 105),
              {a, b}},
             opt);
  }
  {
    auto a = random_uniform<double>({2, 3, 4}, -1.0, 1.0, rng, true);
    auto b = random_uniform<double>({2, 3, 4}, -1.0, 1.0, rng, true);
    run_case(rows,
             {"elementwise",
              weighted(
                  [=](Tape<double>& t) {
                    auto p = mul(a, b, &t);
                    auto q = mul_scalar(sub(a, b, &t), 0.7, &t);
                    return add(add(p, q, &t), add_scalar(sigmoid(a, &t), 0.3, &t), &t);
                  },
                  106),
              {a, b}},
             opt);
  }
  {
    auto x = signed_uniform({2, 3, 4, 4}, 0.1, 1.0, rng, true);
    run_case(rows, {"relu", weighted([=](Tape<double>& t) { return relu(x, &t); }, 107), {x}},
             opt);
  }
  {
    auto x = signed_uniform({2, 3, 4, 4}, 0.1, 1.0, rng, true);
    run_case(rows,
             {"abs", weighted([=](Tape<double>& t) { return abs_val(x, &t); }, 108), {x}}, opt);
  }
  {
    auto x = random_uniform<double>({3, 5}, -2.0, 2.0, rng, true);
    run_case(rows,
             {"reductions",
              weighted([=](Tape<double>& t) { return add_scalar(mean_all(x, &t), 0.25, &t); },
                       109),
              {x}},
             opt);
  }
  {
    auto a = random_uniform<double>({1, 2, 3, 3}, -1.0, 1.0, rng, true);
    auto b = random_uniform<double>({1, 3, 3, 3}, -1.0, 1.0, rng, true);
    run_case(rows,
             {"concat_channels",
              weighted([=](Tape<double>& t) { return concat_channels<double>({a, b}, &t); }, 110),
              {a, b}},
             opt);
  }
  {
    auto x = random_uniform<double>({2, 3, 3, 4}, -1.0, 1.0, rng, true);
    run_case(rows,
             {"token_layout",
              weighted(
                  [=](Tape<double>& t) {
                    return tokens_to_nchw(nchw_to_tokens(x, &t), 3, 4, &t);
                  },
                  111),
              {x}},
             opt);
  }
  {
    auto x = random_uniform<double>({3, 7}, -2.0, 2.0, rng, true);
    run_case(rows,
             {"softmax", weighted([=](Tape<double>& t) { return softmax(x, -1, &t); }, 112), {x}},
             opt);
  }
  {
    auto x = random_uniform<double>({2, 4, 3}, -2.0, 2.0, rng, true);
    run_case(
        rows,
        {"softmax_axis1", weighted([=](Tape<double>& t) { return softmax(x, 1, &t); }, 113), {x}},
        opt);
  }
  {
    auto x = random_uniform<double>({2, 3, 4, 5}, -1.0, 1.0, rng, true);
    run_case(rows,
             {"instance_norm",
              weighted([=](Tape<double>& t) { return instance_norm(x, 1e-5, &t); }, 114),
              {x}},
             opt);
  }
  {
    auto x = random_uniform<double>({2, 3, 4, 4}, -1.0, 1.0, rng, true);
    run_case(rows,
             {"pool_mean",
              weighted([=](Tape<double>& t) { return pool_global(x, PoolMode::mean, &t); }, 115),
              {x}},
             opt);
  }
  {
    auto x = random_uniform<double>({2, 3, 4, 4}, -1.0, 1.0, rng, true);
    auto s = random_uniform<double>({2, 3, 1, 1}, -1.0, 1.0, rng, true);
    run_case(rows,
             {"scale_channels",
              weighted([=](Tape<double>& t) { return scale_channels(x, s, &t); }, 116),
              {x, s}},
             opt);
  }
  {
    auto x = random_uniform<double>({1, 3, 3, 4}, -1.0, 1.0, rng, true);
    run_case(rows,
             {"upsample_nearest",
              weighted(
                  [=](Tape<double>& t) { return upsample2x(x, UpsampleMode::nearest, &t); }, 117),
              {x}},
             opt);
  }
  {
    auto x = random_uniform<double>({2, 2, 3, 4}, -1.0, 1.0, rng, true);
    run_case(
        rows,
        {"upsample_bilinear",
         weighted([=](Tape<double>& t) { return upsample2x(x, UpsampleMode::bilinear, &t); }, 118),
         {x}},
        opt);
  }
  {
    auto q = random_uniform<double>({2, 5, 6}, -1.0, 1.0, rng, true);
    auto k = random_uniform<double>({2, 7, 6}, -1.0, 1.0, rng, true);
    auto v = random_uniform<double>({2, 7, 6}, -1.0, 1.0, rng, true);
    run_case(rows,
             {"multihead_attention",
              weighted([=](Tape<double>& t) { return multihead_attention(q, k, v, 2, &t); }, 119),
              {q, k, v}},
             opt);
  }
  {
    auto x = random_uniform<double>({1, 3, 6, 6}, -1.0, 1.0, rng, true);
    auto off = signed_uniform({1, 18, 6, 6}, 0.1, 0.7, rng, true);
    auto w = random_uniform<double>({2, 3, 3, 3}, -0.5, 0.5, rng, true);
    run_case(rows,
             {"deformable_conv",
              weighted([=](Tape<double>& t) { return deformable_conv(x, off, w, &t); }, 120),
              {x, off, w}},
             opt);
  }
  {
    auto ps = std::make_shared<ParamStore<double>>(31);
    auto p = make_channel_align(*ps, "ca", 6, 2);
    auto x = random_uniform<double>({2, 6, 4, 4}, -1.0, 1.0, rng, true);
    auto leaves = store_leaves(*ps);
    leaves.push_back(x);
    run_case(rows,
             {"channel_align",
              weighted([=](Tape<double>& t) { return channel_align(x, p, &t); }, 121),
              leaves},
             opt);
  }
  {
    auto ps = std::make_shared<ParamStore<double>>(32);
    auto p = make_cross_attention(*ps, "attn", 4, 2);
    auto x = random_uniform<double>({1, 4, 4, 4}, -1.0, 1.0, rng, true);
    auto ref = random_uniform<double>({1, 4, 4, 4}, -1.0, 1.0, rng, true);
    auto leaves = store_leaves(*ps);
    leaves.push_back(x);
    leaves.push_back(ref);
    run_case(rows,
             {"dual_cross_attention",
              weighted([=](Tape<double>& t) { return dual_cross_attention(x, ref, p, &t); }, 122),
              leaves},
             opt);
  }
  {
    auto ps = std::make_shared<ParamStore<double>>(33);
    auto p = make_texture_transfer(*ps, "ttm", 4, 1e-5, false);
    auto texture = random_uniform<double>({1, 4, 5, 5}, -1.0, 1.0, rng, true);
    auto target = random_uniform<double>({1, 4, 5, 5}, -1.0, 1.0, rng, true);
    auto leaves = store_leaves(*ps);
    leaves.push_back(texture);
    leaves.push_back(target);
    run_case(rows,
             {"texture_transfer",
              weighted(
                  [=](Tape<double>& t) { return texture_transfer(texture, target, p, &t); }, 123),
              leaves},
             opt);
  }
  {
    auto ps = std::make_shared<ParamStore<double>>(34);
    auto p = make_texture_transfer(*ps, "ttm", 4, 1e-5, true);
    auto texture = random_uniform<double>({1, 4, 5, 5}, -1.0, 1.0, rng, true);
    auto target = random_uniform<double>({1, 4, 5, 5}, -1.0, 1.0, rng, true);
    auto leaves = store_leaves(*ps);
    leaves.push_back(texture);
    leaves.push_back(target);
    run_case(rows,
             {"texture_transfer_alt",
              weighted(
                  [=](Tape<double>& t) { return texture_transfer(texture, target, p, &t); }, 124),
              leaves},
             opt);
  }
  {
    auto ps = std::make_shared<ParamStore<double>>(35);
    auto p = make_structure_fuse(*ps, "sicm", 4, 2);
    auto x = random_uniform<double>({1, 4, 5, 5}, -1.0, 1.0, rng, true);
    auto edge = random_uniform<double>({1, 4, 5, 5}, 0.0, 1.0, rng, true);
    auto leaves = store_leaves(*ps);
    leaves.push_back(x);
    leaves.push_back(edge);
    run_case(rows,
             {"sicm_fuse",
              weighted([=](Tape<double>& t) { return sicm_fuse(x, edge, p, &t); }, 125),
              leaves},
             opt);
  }
  {
    // Training loss through the real model method. The prediction leaves sit
    // a safe distance from the targets so the L1 kinks stay out of reach of
    // the finite-difference probes.
    ModelConfig mc;
    mc.base_channels = 4;
    mc.scale = 2;
    mc.heads = 2;
    mc.residual_blocks = 1;
    mc.reduction = 4;
    auto net = std::make_shared<ECFNet<double>>(mc, 3);
    auto hr = random_uniform<double>({1, 1, 12, 12}, 0.1, 0.9, rng, false);
    auto sr = make_tensor<double>({1, 1, 12, 12}, true);
    for (int64_t i = 0; i < sr->size(); ++i) {
      const double d = rng.uniform(0.05, 0.3);
      sr->values[i] = hr->values[i] + (rng.uniform(0.0, 1.0) < 0.5 ? -d : d);
    }
    auto st = random_uniform<double>({1, 1, 12, 12}, 1.1, 1.5, rng, true);
    ScalarFn fn = [=](Tape<double>& t) -> T {
      ForwardOut<double> out;
      out.sr = sr;
      out.structure = st;
      return net->loss(out, hr, &t);
    };
    run_case(rows, {"loss", fn, {sr, st}}, opt);
  }

  return rows;
}

GradSuiteCase run_model_gradcheck() {
  ModelConfig mc;
  mc.base_channels = 4;
  mc.scale = 2;
  mc.heads = 2;
  mc.residual_blocks = 1;
  mc.edge_residual_blocks = 1;
  mc.reduction = 4;

  auto net = std::make_shared<ECFNet<double>>(mc, 5);
  Rng rng(77);

  // The offset convs are zero-initialized, which parks every deformable
  // sampling point exactly on a bilinear interpolation kink where central
  // differences are invalid. Move the biases to a generic point: constant
  // per-tap offsets a safe distance from any integer.
  for (int k = 1; k < kStages; ++k) {
    auto bias = net->params.get("cffm.s" + std::to_string(k) + ".deform.offset.bias");
    for (auto& v : bias->values) {
      const double mag = rng.uniform(0.15, 0.45);
      v = rng.uniform(0.0, 1.0) < 0.5 ? -mag : mag;
    }
  }

  auto lr = random_uniform<double>({1, 1, 8, 8}, 0.0, 1.0, rng, false);
  auto ref = random_uniform<double>({1, 1, 16, 16}, 0.0, 1.0, rng, false);

  // Both loss terms are L1, so a target pixel that happens to land within a
  // probe's reach of the prediction turns the central difference into a kink
  // average. Plant hr a fixed distance from the initial sr, and redraw until
  // its edge map also clears the initial structure output everywhere.
  const auto out0 = net->forward(lr, ref, nullptr);
  TensorPtr<double> hr;
  for (int attempt = 0; attempt < 64 && !hr; ++attempt) {
    auto cand = make_tensor<double>({1, 1, 16, 16});
    for (int64_t i = 0; i < cand->size(); ++i) {
      const double d = rng.uniform(0.05, 0.3);
      cand->values[i] = out0.sr->values[i] + (rng.uniform(0.0, 1.0) < 0.5 ? -d : d);
    }
    const auto edge_t = sobel_edge_map(cand);
    double margin = 1.0;
    for (int64_t i = 0; i < edge_t->size(); ++i)
      margin = std::min(margin, std::fabs(out0.structure->values[i] - edge_t->values[i]));
    if (margin >= 2e-3) hr = cand;
  }
  check<NumericError>(hr != nullptr, "model gradcheck: could not plant kink-free targets");

  ScalarFn fn = [=](Tape<double>& t) -> TensorPtr<double> {
    auto out = net->forward(lr, ref, &t);
    return net->loss(out, hr, &t);
  };

  std::vector<TensorPtr<double>> leaves;
  for (const auto& name : net->params.names()) leaves.push_back(net->params.get(name));

  GradcheckOptions opt;
  opt.tol = 1e-3;
  opt.max_checks_per_leaf = 10;

  GradSuiteCase row;
  row.name = "model_loss";
  row.tol = opt.tol;
  row.result = gradcheck(fn, leaves, opt);
  return row;
}

}  // namespace ecf
