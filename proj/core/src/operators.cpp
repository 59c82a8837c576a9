#include "ecf/operators.hpp"

#include <cmath>

namespace ecf {

// --- sobel -----------------------------------------------------------------

template <typename S>
TensorPtr<S> sobel_edge_map(const TensorPtr<S>& img) {
  check(img->shape.size() == 4, "sobel_edge_map expects [N,C,H,W]");
  const int64_t n = img->shape[0], c = img->shape[1], h = img->shape[2], w = img->shape[3];
  auto out = make_tensor<S>(img->shape);
  const double norm = 1.0 / (4.0 * std::sqrt(2.0));
  parallel_for(n * c, [&](int64_t lo, int64_t hi) {
    for (int64_t idx = lo; idx < hi; ++idx) {
      const S* p = img->values.data() + idx * h * w;
      S* o = out->values.data() + idx * h * w;
      auto at = [&](int64_t i, int64_t j) {
        i = std::clamp<int64_t>(i, 0, h - 1);
        j = std::clamp<int64_t>(j, 0, w - 1);
        return static_cast<double>(p[i * w + j]);
      };
      for (int64_t i = 0; i < h; ++i) {
        for (int64_t j = 0; j < w; ++j) {
          // Each derivative is a difference of two identically shaped tap
          // sums, so a constant image cancels to exactly zero.
          const double gx = (at(i - 1, j + 1) + 2.0 * at(i, j + 1) + at(i + 1, j + 1)) -
                            (at(i - 1, j - 1) + 2.0 * at(i, j - 1) + at(i + 1, j - 1));
          const double gy = (at(i + 1, j - 1) + 2.0 * at(i + 1, j) + at(i + 1, j + 1)) -
                            (at(i - 1, j - 1) + 2.0 * at(i - 1, j) + at(i - 1, j + 1));
          o[i * w + j] = static_cast<S>(std::sqrt(gx * gx + gy * gy) * norm);
        }
      }
    }
  });
  return out;
}

// --- deformable alignment -----------------------------------------------------

template <typename S>
DeformAlignParams<S> make_deform_align(ParamStore<S>& ps, const std::string& prefix,
                                       int64_t channels) {
  DeformAlignParams<S> p;
  p.offset_conv =
      make_conv(ps, prefix + ".offset", 18, 2 * channels, 3, 3, 1, 1, Init::zeros, true);
  p.weight = ps.create(prefix + ".weight", {channels, channels, 3, 3}, Init::fan_in_uniform,
                       channels * 9);
  return p;
}

template <typename S>
TensorPtr<S> compute_offsets(const TensorPtr<S>& f_cur, const TensorPtr<S>& f_up,
                             const DeformAlignParams<S>& p, Tape<S>* tape) {
  check(f_cur->same_shape(*f_up), "compute_offsets: feature shapes must match, got " +
                                      shape_str(f_cur->shape) + " vs " + shape_str(f_up->shape));
  auto cat = concat_channels<S>({f_cur, f_up}, tape);
  return p.offset_conv(cat, tape);
}

namespace {

struct BilinearTap {
  int64_t i00, i01, i10, i11;  // -1 marks an out-of-bounds neighbor
  double w00, w01, w10, w11;
  double fy, fx;
  int64_t h0, w0;
};

BilinearTap bilinear_tap(double py, double px, int64_t h, int64_t w) {
  BilinearTap t{};
  const double fy = std::floor(py);
  const double fx = std::floor(px);
  t.h0 = static_cast<int64_t>(fy);
  t.w0 = static_cast<int64_t>(fx);
  t.fy = py - fy;
  t.fx = px - fx;
  auto idx = [&](int64_t i, int64_t j) -> int64_t {
    if (i < 0 || i >= h || j < 0 || j >= w) return -1;
    return i * w + j;
  };
  t.i00 = idx(t.h0, t.w0);
  t.i01 = idx(t.h0, t.w0 + 1);
  t.i10 = idx(t.h0 + 1, t.w0);
  t.i11 = idx(t.h0 + 1, t.w0 + 1);
  t.w00 = (1.0 - t.fy) * (1.0 - t.fx);
  t.w01 = (1.0 - t.fy) * t.fx;
  t.w10 = t.fy * (1.0 - t.fx);
  t.w11 = t.fy * t.fx;
  return t;
}

template <typename S>
double sample_tap(const S* plane, const BilinearTap& t) {
  double acc = 0.0;
  if (t.i00 >= 0) acc += t.w00 * static_cast<double>(plane[t.i00]);
  if (t.i01 >= 0) acc += t.w01 * static_cast<double>(plane[t.i01]);
  if (t.i10 >= 0) acc += t.w10 * static_cast<double>(plane[t.i10]);
  if (t.i11 >= 0) acc += t.w11 * static_cast<double>(plane[t.i11]);
  return acc;
}

}  // namespace

template <typename S>
TensorPtr<S> deformable_conv(const TensorPtr<S>& x, const TensorPtr<S>& offsets,
                             const TensorPtr<S>& weight, Tape<S>* tape) {
  check(x->shape.size() == 4, "deformable_conv expects [N,C,H,W]");
  check(weight->shape.size() == 4 && weight->shape[2] == 3 && weight->shape[3] == 3,
        "deformable_conv expects a 3x3 weight");
  check(weight->shape[1] == x->shape[1], "deformable_conv: channel mismatch");
  const int64_t n = x->shape[0], ci = x->shape[1], h = x->shape[2], w = x->shape[3];
  const int64_t co = weight->shape[0];
  check(offsets->shape.size() == 4 && offsets->shape[0] == n && offsets->shape[1] == 18 &&
            offsets->shape[2] == h && offsets->shape[3] == w,
        "deformable_conv: offsets must be [N,18,H,W]");

  auto out = make_tensor<S>({n, co, h, w});
  const int64_t plane = h * w;

  // One tap at a time: build the resampled feature plane for every input
  // channel, then accumulate it into all output channels with that tap's
  // weight column. Offsets are shared across channels.
  parallel_for(n, [&](int64_t lo, int64_t hi) {
    std::vector<double> sampled(static_cast<size_t>(ci * plane));
    for (int64_t b = lo; b < hi; ++b) {
      for (int64_t tap = 0; tap < 9; ++tap) {
        const int64_t dh = tap / 3 - 1;
        const int64_t dw = tap % 3 - 1;
        const S* offy = offsets->values.data() + (b * 18 + 2 * tap) * plane;
        const S* offx = offsets->values.data() + (b * 18 + 2 * tap + 1) * plane;
        for (int64_t i = 0; i < h; ++i) {
          for (int64_t j = 0; j < w; ++j) {
            const int64_t pos = i * w + j;
            const double py = static_cast<double>(i + dh) + static_cast<double>(offy[pos]);
            const double px = static_cast<double>(j + dw) + static_cast<double>(offx[pos]);
            const BilinearTap t = bilinear_tap(py, px, h, w);
            for (int64_t c = 0; c < ci; ++c)
              sampled[static_cast<size_t>(c * plane + pos)] =
                  sample_tap(x->values.data() + (b * ci + c) * plane, t);
          }
        }
        for (int64_t oc = 0; oc < co; ++oc) {
          S* op = out->values.data() + (b * co + oc) * plane;
          for (int64_t c = 0; c < ci; ++c) {
            const S wv = weight->values[(oc * ci + c) * 9 + tap];
            const double* sp = sampled.data() + c * plane;
            for (int64_t pos = 0; pos < plane; ++pos)
              op[pos] += static_cast<S>(static_cast<double>(wv) * sp[pos]);
          }
        }
      }
    }
  });

  const bool wants = tape && (x->requires_grad || offsets->requires_grad || weight->requires_grad);
  if (wants) {
    out->requires_grad = true;
    tape->record("deformable_conv", {x, offsets, weight}, out,
                 [x, offsets, weight, out, n, ci, co, h, w, plane] {
      if (x->requires_grad) x->ensure_grad();
      if (offsets->requires_grad) offsets->ensure_grad();
      if (weight->requires_grad) weight->ensure_grad();
      parallel_for(n, [&](int64_t lo, int64_t hi) {
        std::vector<double> sampled(static_cast<size_t>(ci * plane));
        std::vector<double> dsampled(static_cast<size_t>(ci * plane));
        for (int64_t b = lo; b < hi; ++b) {
          for (int64_t tap = 0; tap < 9; ++tap) {
            const int64_t dh = tap / 3 - 1;
            const int64_t dw = tap % 3 - 1;
            const S* offy = offsets->values.data() + (b * 18 + 2 * tap) * plane;
            const S* offx = offsets->values.data() + (b * 18 + 2 * tap + 1) * plane;
            std::vector<BilinearTap> taps(static_cast<size_t>(plane));
            for (int64_t i = 0; i < h; ++i) {
              for (int64_t j = 0; j < w; ++j) {
                const int64_t pos = i * w + j;
                const double py = static_cast<double>(i + dh) + static_cast<double>(offy[pos]);
                const double px = static_cast<double>(j + dw) + static_cast<double>(offx[pos]);
                taps[static_cast<size_t>(pos)] = bilinear_tap(py, px, h, w);
              }
            }
            const bool need_sampled = weight->requires_grad;
            if (need_sampled) {
              for (int64_t c = 0; c < ci; ++c) {
                const S* plane_ptr = x->values.data() + (b * ci + c) * plane;
                for (int64_t pos = 0; pos < plane; ++pos)
                  sampled[static_cast<size_t>(c * plane + pos)] =
                      sample_tap(plane_ptr, taps[static_cast<size_t>(pos)]);
              }
            }
            // dsampled[c] = sum_oc w[oc,c,tap] * g[oc]; dw gathers g . sampled.
            std::fill(dsampled.begin(), dsampled.end(), 0.0);
            for (int64_t oc = 0; oc < co; ++oc) {
              const S* gp = out->grad.data() + (b * co + oc) * plane;
              for (int64_t c = 0; c < ci; ++c) {
                const S wv = weight->values[(oc * ci + c) * 9 + tap];
                double* dsp = dsampled.data() + c * plane;
                for (int64_t pos = 0; pos < plane; ++pos)
                  dsp[pos] += static_cast<double>(wv) * static_cast<double>(gp[pos]);
                if (weight->requires_grad) {
                  const double* sp = sampled.data() + c * plane;
                  double acc = 0.0;
                  for (int64_t pos = 0; pos < plane; ++pos)
                    acc += static_cast<double>(gp[pos]) * sp[pos];
                  weight->grad[(oc * ci + c) * 9 + tap] += static_cast<S>(acc);
                }
              }
            }
            S* doffy = offsets->requires_grad ? offsets->grad.data() + (b * 18 + 2 * tap) * plane
                                              : nullptr;
            S* doffx = offsets->requires_grad
                           ? offsets->grad.data() + (b * 18 + 2 * tap + 1) * plane
                           : nullptr;
            for (int64_t pos = 0; pos < plane; ++pos) {
              const BilinearTap& t = taps[static_cast<size_t>(pos)];
              double gy = 0.0, gx = 0.0;
              for (int64_t c = 0; c < ci; ++c) {
                const double ds = dsampled[static_cast<size_t>(c * plane + pos)];
                if (ds == 0.0) continue;
                const S* plane_ptr = x->values.data() + (b * ci + c) * plane;
                const double v00 = t.i00 >= 0 ? static_cast<double>(plane_ptr[t.i00]) : 0.0;
                const double v01 = t.i01 >= 0 ? static_cast<double>(plane_ptr[t.i01]) : 0.0;
                const double v10 = t.i10 >= 0 ? static_cast<double>(plane_ptr[t.i10]) : 0.0;
                const double v11 = t.i11 >= 0 ? static_cast<double>(plane_ptr[t.i11]) : 0.0;
                if (x->requires_grad) {
                  S* dxp = x->grad.data() + (b * ci + c) * plane;
                  if (t.i00 >= 0) dxp[t.i00] += static_cast<S>(ds * t.w00);
                  if (t.i01 >= 0) dxp[t.i01] += static_cast<S>(ds * t.w01);
                  if (t.i10 >= 0) dxp[t.i10] += static_cast<S>(ds * t.w10);
                  if (t.i11 >= 0) dxp[t.i11] += static_cast<S>(ds * t.w11);
                }
                if (doffy) {
                  gy += ds * ((v10 - v00) * (1.0 - t.fx) + (v11 - v01) * t.fx);
                  gx += ds * ((v01 - v00) * (1.0 - t.fy) + (v11 - v10) * t.fy);
                }
              }
              if (doffy) {
                doffy[pos] += static_cast<S>(gy);
                doffx[pos] += static_cast<S>(gx);
              }
            }
          }
        }
      });
    });
  }
  return out;
}

// --- channel re-weighting -------------------------------------------------------

template <typename S>
ChannelAlignParams<S> make_channel_align(ParamStore<S>& ps, const std::string& prefix,
                                         int64_t channels, int64_t reduction) {
  check<ConfigError>(reduction >= 1, "channel_align: reduction must be >= 1");
  const int64_t mid = std::max<int64_t>(channels / reduction, 1);
  ChannelAlignParams<S> p;
  p.fc1 = make_conv(ps, prefix + ".fc1", mid, channels, 1, 1, 1, 0);
  p.fc2 = make_conv(ps, prefix + ".fc2", channels, mid, 1, 1, 1, 0);
  return p;
}

template <typename S>
TensorPtr<S> channel_align(const TensorPtr<S>& x, const ChannelAlignParams<S>& p, Tape<S>* tape) {
  auto pooled = pool_global(x, PoolMode::mean, tape);
  auto gate = sigmoid(p.fc2(relu(p.fc1(pooled, tape), tape), tape), tape);
  return scale_channels(x, mul_scalar(gate, S(2), tape), tape);
}

// --- dual cross-attention ----------------------------------------------------------

template <typename S>
CrossAttentionParams<S> make_cross_attention(ParamStore<S>& ps, const std::string& prefix,
                                             int64_t channels, int heads) {
  check<ConfigError>(heads >= 1 && channels % heads == 0,
                     "cross_attention: heads must divide channels");
  CrossAttentionParams<S> p;
  p.q_spatial = make_conv(ps, prefix + ".q_spatial", channels, channels, 1, 1, 1, 0);
  p.k_spatial = make_conv(ps, prefix + ".k_spatial", channels, channels, 1, 1, 1, 0);
  p.v_spatial = make_conv(ps, prefix + ".v_spatial", channels, channels, 1, 1, 1, 0);
  p.q_channel = make_conv(ps, prefix + ".q_channel", channels, channels, 1, 1, 1, 0);
  p.k_channel = make_conv(ps, prefix + ".k_channel", channels, channels, 1, 1, 1, 0);
  p.v_channel = make_conv(ps, prefix + ".v_channel", channels, channels, 1, 1, 1, 0);
  p.mix_depthwise = make_conv_depthwise(ps, prefix + ".mix_dw", 2 * channels, 3, 3, 1);
  p.mix_pointwise = make_conv(ps, prefix + ".mix_pw", channels, 2 * channels, 1, 1, 1, 0,
                              Init::residual_scaled);
  p.heads = heads;
  return p;
}

template <typename S>
TensorPtr<S> dual_cross_attention(const TensorPtr<S>& f_primary, const TensorPtr<S>& f_ref,
                                  const CrossAttentionParams<S>& p, Tape<S>* tape) {
  check(f_primary->same_shape(*f_ref), "dual_cross_attention: stream shapes must match");
  const int64_t h = f_primary->shape[2], w = f_primary->shape[3];
  const int64_t c = f_primary->shape[1];

  // Spatial branch: pixels are tokens.
  auto qs = nchw_to_tokens(p.q_spatial(f_primary, tape), tape);
  auto ks = nchw_to_tokens(p.k_spatial(f_ref, tape), tape);
  auto vs = nchw_to_tokens(p.v_spatial(f_ref, tape), tape);
  auto spatial = tokens_to_nchw(multihead_attention(qs, ks, vs, p.heads, tape), h, w, tape);

  // Channel branch: channels are tokens, the flattened plane is the feature.
  auto qc = reshape(p.q_channel(f_primary, tape), {f_primary->shape[0], c, h * w}, tape);
  auto kc = reshape(p.k_channel(f_ref, tape), {f_primary->shape[0], c, h * w}, tape);
  auto vc = reshape(p.v_channel(f_ref, tape), {f_primary->shape[0], c, h * w}, tape);
  auto channel = reshape(multihead_attention(qc, kc, vc, 1, tape),
                         {f_primary->shape[0], c, h, w}, tape);

  auto mixed = p.mix_pointwise(
      p.mix_depthwise(concat_channels<S>({spatial, channel}, tape), tape), tape);
  return add(f_primary, mixed, tape);
}

// --- texture transfer -----------------------------------------------------------------

template <typename S>
TextureTransferParams<S> make_texture_transfer(ParamStore<S>& ps, const std::string& prefix,
                                               int64_t channels, double norm_eps,
                                               bool alternative_binding) {
  TextureTransferParams<S> p;
  p.beta1 = make_conv(ps, prefix + ".beta1", channels, channels, 3, 3, 1, 1);
  p.beta2 = make_conv(ps, prefix + ".beta2", channels, channels, 3, 3, 1, 1);
  p.gamma1 = make_conv(ps, prefix + ".gamma1", channels, channels, 3, 3, 1, 1);
  p.gamma2 = make_conv(ps, prefix + ".gamma2", channels, channels, 3, 3, 1, 1);
  p.fuse = make_conv(ps, prefix + ".fuse", channels, 2 * channels, 1, 1, 1, 0, Init::residual_scaled);
  p.res = make_resblock(ps, prefix + ".res", channels);
  p.norm_eps = norm_eps;
  p.alternative_binding = alternative_binding;
  return p;
}

template <typename S>
TensorPtr<S> texture_transfer(const TensorPtr<S>& texture, const TensorPtr<S>& target,
                              const TextureTransferParams<S>& p, Tape<S>* tape) {
  check(texture->same_shape(*target), "texture_transfer: stream shapes must match");
  const auto& norm_src = p.alternative_binding ? target : texture;
  const auto& affine_src = p.alternative_binding ? texture : target;
  auto normed = instance_norm(norm_src, p.norm_eps, tape);
  auto beta = p.beta2(relu(p.beta1(affine_src, tape), tape), tape);
  auto gamma = p.gamma2(relu(p.gamma1(affine_src, tape), tape), tape);
  auto modulated = add(mul(normed, beta, tape), gamma, tape);
  auto fused = p.fuse(concat_channels<S>({modulated, target}, tape), tape);
  return p.res(add(fused, target, tape), tape);
}

// --- structure-aware fusion ----------------------------------------------------------------

template <typename S>
StructureFuseParams<S> make_structure_fuse(ParamStore<S>& ps, const std::string& prefix,
                                           int64_t channels, int64_t reduction) {
  StructureFuseParams<S> p;
  // Directional convs keep spatial size: 3x1 pads rows only, 1x3 columns only.
  p.vert = make_conv(ps, prefix + ".vert", channels, channels, 3, 1, 1, 0);
  p.vert.pad_h = 1;
  p.horz = make_conv(ps, prefix + ".horz", channels, channels, 1, 3, 1, 0);
  p.horz.pad_w = 1;
  p.mix = make_conv(ps, prefix + ".mix", channels, 2 * channels, 1, 1, 1, 0);
  p.align = make_channel_align(ps, prefix + ".align", 2 * channels, reduction);
  p.reduce1 = make_conv(ps, prefix + ".reduce1", channels, 2 * channels, 3, 3, 1, 1);
  p.reduce2 =
      make_conv(ps, prefix + ".reduce2", channels, channels, 3, 3, 1, 1, Init::residual_scaled);
  return p;
}

template <typename S>
TensorPtr<S> sicm_fuse(const TensorPtr<S>& x, const TensorPtr<S>& edge_feat,
                       const StructureFuseParams<S>& p, Tape<S>* tape) {
  check(x->same_shape(*edge_feat), "sicm_fuse: feature shapes must match");
  auto s = add(x, edge_feat, tape);
  auto edge_desc = p.mix(concat_channels<S>({p.vert(s, tape), p.horz(s, tape)}, tape), tape);
  auto aligned = channel_align(concat_channels<S>({edge_desc, x}, tape), p.align, tape);
  auto reduced = p.reduce2(relu(p.reduce1(aligned, tape), tape), tape);
  return add(reduced, x, tape);
}

// --- instantiations --------------------------------------------------------------------

#define ECF_INSTANTIATE_OPERATORS(S)                                                             \
  template TensorPtr<S> sobel_edge_map(const TensorPtr<S>&);                                     \
  template DeformAlignParams<S> make_deform_align(ParamStore<S>&, const std::string&, int64_t);  \
  template TensorPtr<S> compute_offsets(const TensorPtr<S>&, const TensorPtr<S>&,                \
                                        const DeformAlignParams<S>&, Tape<S>*);                  \
  template TensorPtr<S> deformable_conv(const TensorPtr<S>&, const TensorPtr<S>&,                \
                                        const TensorPtr<S>&, Tape<S>*);                          \
  template ChannelAlignParams<S> make_channel_align(ParamStore<S>&, const std::string&, int64_t, \
                                                    int64_t);                                    \
  template TensorPtr<S> channel_align(const TensorPtr<S>&, const ChannelAlignParams<S>&,         \
                                      Tape<S>*);                                                 \
  template CrossAttentionParams<S> make_cross_attention(ParamStore<S>&, const std::string&,      \
                                                        int64_t, int);                           \
  template TensorPtr<S> dual_cross_attention(const TensorPtr<S>&, const TensorPtr<S>&,           \
                                             const CrossAttentionParams<S>&, Tape<S>*);          \
  template TextureTransferParams<S> make_texture_transfer(ParamStore<S>&, const std::string&,    \
                                                          int64_t, double, bool);                \
  template TensorPtr<S> texture_transfer(const TensorPtr<S>&, const TensorPtr<S>&,               \
                                         const TextureTransferParams<S>&, Tape<S>*);             \
  template StructureFuseParams<S> make_structure_fuse(ParamStore<S>&, const std::string&,        \
                                                      int64_t, int64_t);                         \
  template TensorPtr<S> sicm_fuse(const TensorPtr<S>&, const TensorPtr<S>&,                      \
                                  const StructureFuseParams<S>&, Tape<S>*);

ECF_INSTANTIATE_OPERATORS(float)
ECF_INSTANTIATE_OPERATORS(double)

#undef ECF_INSTANTIATE_OPERATORS

}  // namespace ecf
