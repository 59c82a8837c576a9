#pragma once

#include <array>
#include <optional>

#include "ecf/operators.hpp"

namespace ecf {

// Four-stage pyramid; stage k runs at 1/2^(k-1) resolution with
// base_channels * 2^(k-1) channels.
inline constexpr int kStages = 4;

struct ModelConfig {
  int base_channels = 32;
  int scale = 4;  // 2 or 4
  int heads = 4;
  int residual_blocks = 2;
  int edge_residual_blocks = 1;
  int reduction = 16;  // channel-gate bottleneck divisor
  double norm_eps = 1e-5;
  bool use_alignment = true;         // cross-scale deformable alignment in the fusion stages
  bool use_texture_transfer = true;  // texture re-modulation in the decoder
  bool use_structure_branch = true;  // edge encoder + structure fusion + structure head
  bool ttm_alternative_binding = false;

  void validate() const;
  int64_t stage_channels(int k) const;  // k in 1..4

  bool operator==(const ModelConfig&) const = default;
};

template <typename S>
struct ForwardOut {
  TensorPtr<S> sr;         // raw network output (no clamping)
  TensorPtr<S> structure;  // null when the structure branch is disabled
  TensorPtr<S> lr_up;
  TensorPtr<S> edge;
};

template <typename S>
struct ECFNet {
  ModelConfig cfg;
  ParamStore<S> params;

  ECFNet(const ModelConfig& config, uint64_t init_seed);

  // Bicubic-upsamples the low-res input to reference resolution and extracts
  // its edge map. Pure data transforms: no gradients flow into them.
  static std::pair<TensorPtr<S>, TensorPtr<S>> preprocess(const TensorPtr<S>& lr, int scale);

  // Stage features 1..4 for one encoder tower. `which` selects the tower:
  // 0 = main, 1 = reference, 2 = edge.
  std::array<TensorPtr<S>, kStages> encode(const TensorPtr<S>& x, int which, Tape<S>* tape) const;

  // Cross-scale fusion: coarse-to-fine deformable alignment of the fused
  // pyramid plus cross-attention against the reference features.
  std::array<TensorPtr<S>, kStages> cffm_forward(const std::array<TensorPtr<S>, kStages>& f_main,
                                                 const std::array<TensorPtr<S>, kStages>& f_ref,
                                                 Tape<S>* tape) const;

  // Decoder from stage 4 down to stage 1, applying texture transfer and
  // structure fusion at each upsampling step.
  TensorPtr<S> decode(const std::array<TensorPtr<S>, kStages>& fused,
                      const std::array<TensorPtr<S>, kStages>& edge_feats, Tape<S>* tape) const;

  ForwardOut<S> forward(const TensorPtr<S>& lr, const TensorPtr<S>& ref, Tape<S>* tape) const;

  // L1 reconstruction loss plus, when the structure branch is active, an L1
  // term between the predicted structure map and the edge map of hr.
  TensorPtr<S> loss(const ForwardOut<S>& out, const TensorPtr<S>& hr, Tape<S>* tape) const;

  // --- building blocks (public so tests can probe them directly) ---
  struct EncoderStage {
    Conv2dLayer<S> down;  // stride-2, only for k >= 2
    std::vector<ResBlock<S>> blocks;
  };
  struct Encoder {
    Conv2dLayer<S> stem;
    std::array<EncoderStage, kStages> stages;
  };
  struct FusionStage {
    // Cross-scale path, stages 1..3. up_proj and reduce stay in every
    // configuration; the deformable sampler and the channel gate are the
    // parts removed by the alignment ablation.
    Conv2dLayer<S> up_proj;  // 1x1, 2c -> c, after nearest 2x upsample
    DeformAlignParams<S> deform;
    ChannelAlignParams<S> chan;  // gate over the 2c concat
    Conv2dLayer<S> reduce;       // 1x1, 2c -> c
    // Always present:
    CrossAttentionParams<S> attn;
    std::vector<ResBlock<S>> blocks;
  };
  struct DecoderStage {
    Conv2dLayer<S> up;  // 3x3, 2c -> c, after nearest 2x upsample (stages 1..3)
    std::optional<TextureTransferParams<S>> ttm;
    Conv2dLayer<S> fuse_only;  // 1x1, 2c -> c, texture injection with ttm disabled
    std::optional<StructureFuseParams<S>> sicm;
  };

  Encoder enc_main, enc_ref, enc_edge;  // enc_edge unused when branch disabled
  std::array<FusionStage, kStages> fusion;
  std::array<DecoderStage, kStages> decoder;
  Conv2dLayer<S> sr_head;  // single 3x3 conv; output rides the global skip
  Conv2dLayer<S> struct_head;
  bool has_edge_tower = false;
};

// Total trainable scalar count for a configuration.
int64_t param_count(const ModelConfig& cfg);

extern template struct ECFNet<float>;
extern template struct ECFNet<double>;

}  // namespace ecf
