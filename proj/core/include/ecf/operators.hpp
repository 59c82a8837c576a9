#pragma once

#include "ecf/params.hpp"

namespace ecf {

// --- edge extraction ----------------------------------------------------------

// Sobel gradient magnitude with replicate padding, normalized by 4*sqrt(2) so
// inputs in [0,1] map to [0,1]. Constant images map to exactly zero. Runs on
// the data path only, so it records no gradients.
template <typename S>
TensorPtr<S> sobel_edge_map(const TensorPtr<S>& img);

// --- offset-guided feature alignment -------------------------------------------

// A 3x3 deformable sampling stage: a zero-initialized conv predicts one
// (dy, dx) pair per kernel tap from the concatenated current-scale and
// upsampled coarser-scale features, and the deformable conv resamples the
// upsampled feature with those offsets.
template <typename S>
struct DeformAlignParams {
  Conv2dLayer<S> offset_conv;  // 2C -> 18, zero-initialized
  TensorPtr<S> weight;         // [C, C, 3, 3], no bias
};

template <typename S>
DeformAlignParams<S> make_deform_align(ParamStore<S>& ps, const std::string& prefix,
                                       int64_t channels);

// Offset layout: channel 2*t is dy and 2*t+1 is dx for tap t, taps ordered
// row-major over the 3x3 grid (dh, dw in {-1, 0, 1}).
template <typename S>
TensorPtr<S> compute_offsets(const TensorPtr<S>& f_cur, const TensorPtr<S>& f_up,
                             const DeformAlignParams<S>& p, Tape<S>* tape);

// Deformable 3x3 convolution: each tap samples x at
// (h + dh + dy, w + dw + dx) by bilinear interpolation; reads outside the
// image contribute zero. With all offsets zero this equals conv2d with
// padding 1 and no bias.
template <typename S>
TensorPtr<S> deformable_conv(const TensorPtr<S>& x, const TensorPtr<S>& offsets,
                             const TensorPtr<S>& weight, Tape<S>* tape);

// --- channel re-weighting --------------------------------------------------------

// Squeeze (global average pool) -> bottleneck MLP -> sigmoid gate phi,
// output x * 2*phi. The gate spans (0, 2) and sits at exactly 1 when the MLP
// outputs zero, so an untrained gate passes features through unchanged.
template <typename S>
struct ChannelAlignParams {
  Conv2dLayer<S> fc1, fc2;  // 1x1 convs, C -> mid -> C
};

template <typename S>
ChannelAlignParams<S> make_channel_align(ParamStore<S>& ps, const std::string& prefix,
                                         int64_t channels, int64_t reduction);

template <typename S>
TensorPtr<S> channel_align(const TensorPtr<S>& x, const ChannelAlignParams<S>& p, Tape<S>* tape);

// --- dual cross-attention ----------------------------------------------------------

// Two attention branches over the same feature pair. The spatial branch
// treats pixels as tokens (multi-head, scaled by 1/sqrt(C/heads)); the
// channel branch treats channels as tokens with the full spatial map as the
// feature vector (single head, scaled by 1/sqrt(H*W)). Queries come from the
// primary stream, keys and values from the reference stream. Branch outputs
// are concatenated, mixed by depthwise + pointwise convs, and added back to
// the primary stream.
template <typename S>
struct CrossAttentionParams {
  Conv2dLayer<S> q_spatial, k_spatial, v_spatial;
  Conv2dLayer<S> q_channel, k_channel, v_channel;
  Conv2dLayer<S> mix_depthwise;  // 3x3 depthwise over the concatenated branches
  Conv2dLayer<S> mix_pointwise;  // 1x1, 2C -> C
  int heads = 1;
};

template <typename S>
CrossAttentionParams<S> make_cross_attention(ParamStore<S>& ps, const std::string& prefix,
                                             int64_t channels, int heads);

template <typename S>
TensorPtr<S> dual_cross_attention(const TensorPtr<S>& f_primary, const TensorPtr<S>& f_ref,
                                  const CrossAttentionParams<S>& p, Tape<S>* tape);

// --- texture transfer ----------------------------------------------------------------

// Instance-normalizes the texture stream and re-modulates it with an affine
// field (scale beta, shift gamma) predicted from the target stream, then
// fuses the modulated texture back into the target through a 1x1 conv and a
// residual block. `alternative_binding` swaps the roles: the target stream
// is normalized and the affine field is predicted from the texture stream.
template <typename S>
struct TextureTransferParams {
  Conv2dLayer<S> beta1, beta2;    // conv3x3 -> relu -> conv3x3
  Conv2dLayer<S> gamma1, gamma2;  // conv3x3 -> relu -> conv3x3
  Conv2dLayer<S> fuse;            // 1x1, 2C -> C
  ResBlock<S> res;
  double norm_eps = 1e-5;
  bool alternative_binding = false;
};

template <typename S>
TextureTransferParams<S> make_texture_transfer(ParamStore<S>& ps, const std::string& prefix,
                                               int64_t channels, double norm_eps,
                                               bool alternative_binding);

template <typename S>
TensorPtr<S> texture_transfer(const TensorPtr<S>& texture, const TensorPtr<S>& target,
                              const TextureTransferParams<S>& p, Tape<S>* tape);

// --- structure-aware fusion -------------------------------------------------------------

// Injects an edge-branch feature into the main feature. Directional 3x1 and
// 1x3 convs of (x + edge) are mixed into an edge descriptor, concatenated
// with x, channel-reweighted, and reduced back to C through a small conv
// stack that ends in a skip from x. With all weights zero the block is an
// exact identity on x.
template <typename S>
struct StructureFuseParams {
  Conv2dLayer<S> vert;  // 3x1
  Conv2dLayer<S> horz;  // 1x3
  Conv2dLayer<S> mix;   // 1x1, 2C -> C
  ChannelAlignParams<S> align;
  Conv2dLayer<S> reduce1;  // 3x3, 2C -> C
  Conv2dLayer<S> reduce2;  // 3x3, C -> C
};

template <typename S>
StructureFuseParams<S> make_structure_fuse(ParamStore<S>& ps, const std::string& prefix,
                                           int64_t channels, int64_t reduction);

template <typename S>
TensorPtr<S> sicm_fuse(const TensorPtr<S>& x, const TensorPtr<S>& edge_feat,
                       const StructureFuseParams<S>& p, Tape<S>* tape);

}  // namespace ecf
