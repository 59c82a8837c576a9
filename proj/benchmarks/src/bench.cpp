#include <benchmark/benchmark.h>

#include "ecf/data.hpp"
#include "ecf/model.hpp"
#include "ecf/operators.hpp"
#include "ecf/ops.hpp"

namespace {

using namespace ecf;

TensorPtr<float> rand_image(std::vector<int64_t> shape, uint64_t seed, bool rg = false) {
  Rng rng(seed);
  return random_uniform<float>(std::move(shape), 0.0f, 1.0f, rng, rg);
}

void BM_Conv2d3x3(benchmark::State& state) {
  const int64_t c = state.range(0);
  auto x = rand_image({1, c, 64, 64}, 1);
  Rng rng(2);
  auto w = random_uniform<float>({c, c, 3, 3}, -0.1f, 0.1f, rng);
  auto b = random_uniform<float>({c}, -0.1f, 0.1f, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv2d3x3)->Arg(16)->Arg(32);

void BM_DeformableConv(benchmark::State& state) {
  const int64_t c = state.range(0);
  auto x = rand_image({1, c, 32, 32}, 3);
  Rng rng(4);
  auto off = random_uniform<float>({1, 18, 32, 32}, -1.0f, 1.0f, rng);
  auto w = random_uniform<float>({c, c, 3, 3}, -0.1f, 0.1f, rng);
  for (auto _ : state) benchmark::DoNotOptimize(deformable_conv(x, off, w, static_cast<Tape<float>*>(nullptr)));
}
BENCHMARK(BM_DeformableConv)->Arg(16)->Arg(32);

void BM_DualCrossAttention(benchmark::State& state) {
  const int64_t side = state.range(0);
  ParamStore<float> ps(5);
  auto p = make_cross_attention(ps, "attn", 32, 4);
  auto x = rand_image({1, 32, side, side}, 6);
  auto ref = rand_image({1, 32, side, side}, 7);
  for (auto _ : state) benchmark::DoNotOptimize(dual_cross_attention(x, ref, p, static_cast<Tape<float>*>(nullptr)));
}
BENCHMARK(BM_DualCrossAttention)->Arg(16)->Arg(32);

void BM_KspaceTruncate(benchmark::State& state) {
  const int64_t side = state.range(0);
  auto x = rand_image({1, 1, side, side}, 8);
  for (auto _ : state) benchmark::DoNotOptimize(kspace_truncate(x, 4));
}
BENCHMARK(BM_KspaceTruncate)->Arg(64)->Arg(256);

void BM_ModelForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.base_channels = static_cast<int>(state.range(0));
  ECFNet<float> net(cfg, 9);
  auto lr = rand_image({1, 1, 16, 16}, 10);
  auto ref = rand_image({1, 1, 64, 64}, 11);
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(lr, ref, nullptr));
}
BENCHMARK(BM_ModelForward)->Arg(8)->Arg(16);

void BM_ModelTrainStep(benchmark::State& state) {
  ModelConfig cfg;
  cfg.base_channels = 8;
  ECFNet<float> net(cfg, 12);
  auto lr = rand_image({1, 1, 16, 16}, 13);
  auto ref = rand_image({1, 1, 64, 64}, 14);
  auto hr = rand_image({1, 1, 64, 64}, 15);
  for (auto _ : state) {
    Tape<float> tape;
    auto out = net.forward(lr, ref, &tape);
    auto l = net.loss(out, hr, &tape);
    tape.backward(l);
    net.params.zero_grads();
    benchmark::DoNotOptimize(l->values[0]);
  }
}
BENCHMARK(BM_ModelTrainStep);

}  // namespace

BENCHMARK_MAIN();
