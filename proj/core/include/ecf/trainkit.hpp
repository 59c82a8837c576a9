#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "ecf/data.hpp"
#include "ecf/metrics.hpp"
#include "ecf/model.hpp"

namespace ecf {

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// First and second moment buffers aligned with ParamStore creation order.
template <typename S>
struct AdamState {
  int64_t t = 0;
  std::vector<std::vector<S>> m, v;

  void init(const ParamStore<S>& ps);
  bool initialized() const { return !m.empty(); }
};

// One bias-corrected Adam update over every parameter in the store. All
// parameters must carry gradient buffers (zeroed counts, missing does not).
// Elementwise arithmetic runs in double and is stored back in S.
template <typename S>
void adam_step(ParamStore<S>& ps, AdamState<S>& state, const AdamConfig& cfg);

struct TrainConfig {
  AdamConfig adam;
  int epochs = 50;
  int batch_size = 10;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // steps between periodic checkpoints; 0 = final only
  int holdout = 2;           // trailing pairs excluded from training, used for eval
  std::string out_dir;       // checkpoint directory; empty disables file output

  void validate() const;
};

struct LossPoint {
  int64_t step = 0;  // 1-based, equals the optimizer step count
  int epoch = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
};

// Deterministic epoch shuffle: a pure function of (seed, epoch), so resuming
// mid-run replays the identical batch order without replaying history.
std::vector<int64_t> epoch_permutation(int64_t n, uint64_t seed, int epoch);

struct TrainResult {
  std::vector<LossPoint> curve;
  int64_t final_step = 0;
};

using StepHook = std::function<void(const LossPoint&)>;

// Runs (epochs * ceil(n/batch)) - start_step optimizer steps over the
// training slice of `pairs` (holdout pairs are never touched). `state` may be
// fresh (initialized here) or restored from a checkpoint together with
// start_step. Aborts with NumericError naming the first non-finite tensor if
// the loss stops being finite. The hook fires after every step.
TrainResult train(ECFNet<float>& model, const std::vector<ImagePair>& pairs,
                  const TrainConfig& cfg, AdamState<float>& state, int64_t start_step = 0,
                  const StepHook& hook = nullptr);

// Forward pass without gradients, clamped to [0,1], scored against hr.
std::vector<MetricRecord> evaluate(const ECFNet<float>& model,
                                   const std::vector<ImagePair>& pairs,
                                   const std::string& config_hash);

// --- checkpoints -----------------------------------------------------------------

// Container: magic "ECFCKPT1", u64 little-endian header length, JSON header
// (model config, optimizer scalars, step/epoch, rng words, tensor directory
// sorted by name with byte offsets, payload CRC32), then three equally laid
// out little-endian float32 blocks: parameter values, Adam m, Adam v.
struct Checkpoint {
  ModelConfig config;
  AdamConfig adam;
  int64_t step = 0;
  int epoch = 0;
  std::array<uint64_t, 4> rng_state{};
  std::vector<std::string> names;  // sorted
  std::vector<std::vector<int64_t>> shapes;
  std::vector<std::vector<float>> values, m, v;  // aligned with names
};

Checkpoint snapshot(const ECFNet<float>& model, const AdamState<float>& state,
                    const AdamConfig& adam, std::array<uint64_t, 4> rng_state, int64_t step,
                    int epoch);
void save_checkpoint(const std::string& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::string& path);

// Copies parameters and optimizer state back into a live model. The model
// must have been built with the exact config stored in the checkpoint.
void restore_checkpoint(const Checkpoint& c, ECFNet<float>& model, AdamState<float>& state);

// --- ablation ---------------------------------------------------------------------

struct AblationRow {
  std::string variant;
  bool alignment = true;
  bool texture = true;
  bool structure = true;
  int64_t param_total = 0;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
};

// Trains the three single-switch-off variants plus the full model under one
// seed and budget, then scores each on the held-out slice (cfg.holdout >= 1).
std::vector<AblationRow> run_ablation(const std::vector<ImagePair>& pairs,
                                      const ModelConfig& base, const TrainConfig& cfg);

extern template struct AdamState<float>;
extern template struct AdamState<double>;
extern template void adam_step(ParamStore<float>&, AdamState<float>&, const AdamConfig&);
extern template void adam_step(ParamStore<double>&, AdamState<double>&, const AdamConfig&);

}  // namespace ecf
