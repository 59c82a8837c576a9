#pragma once

#include "ecf/tensor.hpp"

namespace ecf {

// All operators allocate a fresh output tensor. When `tape` is non-null and
// any input participates in autodiff, a backward rule is recorded. Passing a
// null tape gives a plain inference op.
//
// Accumulation orders are fixed and independent of thread count, so repeated
// runs produce bit-identical values.

enum class PoolMode { mean, max };
enum class UpsampleMode { nearest, bilinear };

// --- element-wise ---------------------------------------------------------

template <typename S>
TensorPtr<S> add(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr);
template <typename S>
TensorPtr<S> sub(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr);
template <typename S>
TensorPtr<S> mul(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr);
template <typename S>
TensorPtr<S> add_scalar(const TensorPtr<S>& a, S c, Tape<S>* tape = nullptr);
template <typename S>
TensorPtr<S> mul_scalar(const TensorPtr<S>& a, S c, Tape<S>* tape = nullptr);
template <typename S>
TensorPtr<S> relu(const TensorPtr<S>& x, Tape<S>* tape = nullptr);
template <typename S>
TensorPtr<S> sigmoid(const TensorPtr<S>& x, Tape<S>* tape = nullptr);
template <typename S>
TensorPtr<S> abs_val(const TensorPtr<S>& x, Tape<S>* tape = nullptr);

// --- reductions -----------------------------------------------------------

template <typename S>
TensorPtr<S> sum_all(const TensorPtr<S>& x, Tape<S>* tape = nullptr);
template <typename S>
TensorPtr<S> mean_all(const TensorPtr<S>& x, Tape<S>* tape = nullptr);

// --- shape ops --------------------------------------------------------------

// Concatenates [N,C_i,H,W] tensors along the channel axis.
template <typename S>
TensorPtr<S> concat_channels(const std::vector<TensorPtr<S>>& xs, Tape<S>* tape = nullptr);

// [N,C,H,W] -> [N, H*W, C] token layout and back.
template <typename S>
TensorPtr<S> nchw_to_tokens(const TensorPtr<S>& x, Tape<S>* tape = nullptr);
template <typename S>
TensorPtr<S> tokens_to_nchw(const TensorPtr<S>& x, int64_t h, int64_t w, Tape<S>* tape = nullptr);

// Same data, new shape (copies; identity backward).
template <typename S>
TensorPtr<S> reshape(const TensorPtr<S>& x, std::vector<int64_t> shape, Tape<S>* tape = nullptr);

// --- linear algebra ---------------------------------------------------------

// [M,K]x[K,N] or batched [B,M,K]x[B,K,N]. Per output element the inner
// products accumulate in index order k = 0..K-1.
template <typename S>
TensorPtr<S> matmul(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape = nullptr);

// --- conv -------------------------------------------------------------------

// Cross-correlation. x [N,Cin,H,W], w [Cout,Cin,Kh,Kw], bias [Cout] or null.
// Zero padding. Per output element: acc starts at the bias and gathers taps
// in (cin, kh, kw) order.
template <typename S>
TensorPtr<S> conv2d(const TensorPtr<S>& x, const TensorPtr<S>& w, const TensorPtr<S>& bias,
                    int stride, int padding, Tape<S>* tape = nullptr);

// Depthwise variant: w [C,1,Kh,Kw], each channel filtered independently.
template <typename S>
TensorPtr<S> conv2d_depthwise(const TensorPtr<S>& x, const TensorPtr<S>& w,
                              const TensorPtr<S>& bias, int stride, int padding,
                              Tape<S>* tape = nullptr);

// Asymmetric padding variant, used by directional 3x1 / 1x3 kernels.
template <typename S>
TensorPtr<S> conv2d_pad_hw(const TensorPtr<S>& x, const TensorPtr<S>& w, const TensorPtr<S>& bias,
                           int stride, int pad_h, int pad_w, Tape<S>* tape = nullptr);

// --- normalization / activation blocks --------------------------------------

// Per-sample, per-channel normalization over spatial positions with biased
// variance: (x - mean) / sqrt(var + eps). No learned affine here.
template <typename S>
TensorPtr<S> instance_norm(const TensorPtr<S>& x, double eps, Tape<S>* tape = nullptr);

// Softmax along `axis` (negative counts from the back), max-subtracted.
template <typename S>
TensorPtr<S> softmax(const TensorPtr<S>& x, int axis, Tape<S>* tape = nullptr);

// [N,C,H,W] -> [N,C,1,1].
template <typename S>
TensorPtr<S> pool_global(const TensorPtr<S>& x, PoolMode mode, Tape<S>* tape = nullptr);

// Doubles both spatial dims. Bilinear uses the half-pixel mapping
// src = (dst + 0.5) / 2 - 0.5 with edge clamping.
template <typename S>
TensorPtr<S> upsample2x(const TensorPtr<S>& x, UpsampleMode mode, Tape<S>* tape = nullptr);

// y[n,c,h,w] = x[n,c,h,w] * s[n,c,0,0]; s has shape [N,C,1,1].
template <typename S>
TensorPtr<S> scale_channels(const TensorPtr<S>& x, const TensorPtr<S>& s, Tape<S>* tape = nullptr);

// --- attention ---------------------------------------------------------------

// Scaled dot-product attention, softmax(q k^T / sqrt(d_head)) v, with inputs
// in token layout [B,Tq,D], [B,Tk,D], [B,Tk,D]. Scores are produced in query
// blocks and never materialized whole; backward recomputes them. `heads`
// must divide D.
template <typename S>
TensorPtr<S> multihead_attention(const TensorPtr<S>& q, const TensorPtr<S>& k,
                                 const TensorPtr<S>& v, int heads, Tape<S>* tape = nullptr);

// --- tape-free image helpers -------------------------------------------------

// Keys bicubic (a = -0.5), half-pixel mapping, replicate border. Resampling
// sits on the data path, so it carries no backward rule.
template <typename S>
TensorPtr<S> resize_bicubic(const TensorPtr<S>& x, int64_t out_h, int64_t out_w);

template <typename S>
TensorPtr<S> clamp01(const TensorPtr<S>& x);

}  // namespace ecf
