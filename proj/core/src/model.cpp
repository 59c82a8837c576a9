#include "ecf/model.hpp"

#include <sstream>

namespace ecf {

void ModelConfig::validate() const {
  check<ConfigError>(scale == 2 || scale == 4, "model.scale must be 2 or 4");
  check<ConfigError>(base_channels >= 1, "model.base_channels must be positive");
  check<ConfigError>(heads >= 1, "model.heads must be positive");
  check<ConfigError>(base_channels % heads == 0, "model.heads must divide model.base_channels");
  check<ConfigError>(residual_blocks >= 1, "model.residual_blocks must be positive");
  check<ConfigError>(edge_residual_blocks >= 1, "model.edge_residual_blocks must be positive");
  check<ConfigError>(reduction >= 1, "model.reduction must be positive");
  check<ConfigError>(norm_eps > 0.0, "model.norm_eps must be positive");
}

int64_t ModelConfig::stage_channels(int k) const {
  check<ConfigError>(k >= 1 && k <= kStages, "stage index out of range");
  return static_cast<int64_t>(base_channels) << (k - 1);
}

namespace {

template <typename S>
typename ECFNet<S>::Encoder build_encoder(ParamStore<S>& ps, const ModelConfig& cfg,
                                          const std::string& prefix, int res_blocks) {
  typename ECFNet<S>::Encoder enc;
  enc.stem = make_conv(ps, prefix + ".stem", cfg.stage_channels(1), 1, 3, 3, 1, 1);
  for (int k = 1; k <= kStages; ++k) {
    auto& stage = enc.stages[static_cast<size_t>(k - 1)];
    const int64_t c = cfg.stage_channels(k);
    std::ostringstream sp;
    sp << prefix << ".s" << k;
    if (k >= 2)
      stage.down = make_conv(ps, sp.str() + ".down", c, cfg.stage_channels(k - 1), 3, 3, 2, 1);
    for (int r = 0; r < res_blocks; ++r) {
      std::ostringstream rp;
      rp << sp.str() << ".res" << r;
      stage.blocks.push_back(make_resblock(ps, rp.str(), c));
    }
  }
  return enc;
}

}  // namespace

template <typename S>
ECFNet<S>::ECFNet(const ModelConfig& config, uint64_t init_seed) : cfg(config), params(init_seed) {
  cfg.validate();
  enc_main = build_encoder(params, cfg, "enc_main", cfg.residual_blocks);
  enc_ref = build_encoder(params, cfg, "enc_ref", cfg.residual_blocks);
  if (cfg.use_structure_branch) {
    enc_edge = build_encoder(params, cfg, "enc_edge", cfg.edge_residual_blocks);
    has_edge_tower = true;
  }

  for (int k = 1; k <= kStages; ++k) {
    auto& st = fusion[static_cast<size_t>(k - 1)];
    const int64_t c = cfg.stage_channels(k);
    std::ostringstream sp;
    sp << "cffm.s" << k;
    if (k < kStages) {
      st.up_proj = make_conv(params, sp.str() + ".up_proj", c, cfg.stage_channels(k + 1), 1, 1, 1, 0);
      st.reduce = make_conv(params, sp.str() + ".reduce", c, 2 * c, 1, 1, 1, 0);
      if (cfg.use_alignment) {
        st.deform = make_deform_align(params, sp.str() + ".deform", c);
        st.chan = make_channel_align(params, sp.str() + ".chan", 2 * c, cfg.reduction);
      }
    }
    st.attn = make_cross_attention(params, sp.str() + ".attn", c, cfg.heads);
    for (int r = 0; r < cfg.residual_blocks; ++r) {
      std::ostringstream rp;
      rp << sp.str() << ".res" << r;
      st.blocks.push_back(make_resblock(params, rp.str(), c));
    }
  }

  for (int k = kStages; k >= 1; --k) {
    auto& st = decoder[static_cast<size_t>(k - 1)];
    const int64_t c = cfg.stage_channels(k);
    std::ostringstream sp;
    sp << "dec.s" << k;
    if (k < kStages)
      st.up = make_conv(params, sp.str() + ".up", c, cfg.stage_channels(k + 1), 3, 3, 1, 1);
    if (cfg.use_texture_transfer)
      st.ttm = make_texture_transfer(params, sp.str() + ".ttm", c, cfg.norm_eps,
                                     cfg.ttm_alternative_binding);
    else
      st.fuse_only = make_conv(params, sp.str() + ".ttm.fuse", c, 2 * c, 1, 1, 1, 0);
    if (cfg.use_structure_branch)
      st.sicm = make_structure_fuse(params, sp.str() + ".sicm", c, cfg.reduction);
  }

  const int64_t c1 = cfg.stage_channels(1);
  sr_head = make_conv(params, "head.sr", 1, c1, 3, 3, 1, 1, Init::residual_scaled);
  if (cfg.use_structure_branch)
    struct_head = make_conv(params, "head.structure", 1, c1, 3, 3, 1, 1, Init::residual_scaled);
}

template <typename S>
std::pair<TensorPtr<S>, TensorPtr<S>> ECFNet<S>::preprocess(const TensorPtr<S>& lr, int scale) {
  check(lr->shape.size() == 4 && lr->shape[1] == 1, "preprocess expects [N,1,h,w]");
  auto lr_up = resize_bicubic(lr, lr->shape[2] * scale, lr->shape[3] * scale);
  auto edge = sobel_edge_map(lr_up);
  return {lr_up, edge};
}

template <typename S>
std::array<TensorPtr<S>, kStages> ECFNet<S>::encode(const TensorPtr<S>& x, int which,
                                                    Tape<S>* tape) const {
  check<ConfigError>(which >= 0 && which <= 2, "encode: tower selector must be 0, 1, or 2");
  check<ConfigError>(which != 2 || has_edge_tower, "encode: edge tower is disabled");
  const Encoder& enc = which == 0 ? enc_main : which == 1 ? enc_ref : enc_edge;
  std::array<TensorPtr<S>, kStages> feats;
  auto cur = enc.stem(x, tape);
  for (int k = 1; k <= kStages; ++k) {
    const auto& stage = enc.stages[static_cast<size_t>(k - 1)];
    if (k >= 2) cur = stage.down(cur, tape);
    for (const auto& block : stage.blocks) cur = block(cur, tape);
    feats[static_cast<size_t>(k - 1)] = cur;
  }
  return feats;
}

template <typename S>
std::array<TensorPtr<S>, kStages> ECFNet<S>::cffm_forward(
    const std::array<TensorPtr<S>, kStages>& f_main,
    const std::array<TensorPtr<S>, kStages>& f_ref, Tape<S>* tape) const {
  std::array<TensorPtr<S>, kStages> out;
  for (int k = kStages; k >= 1; --k) {
    const auto& st = fusion[static_cast<size_t>(k - 1)];
    TensorPtr<S> base = f_main[static_cast<size_t>(k - 1)];
    if (k < kStages) {
      auto up = st.up_proj(upsample2x(out[static_cast<size_t>(k)], UpsampleMode::nearest, tape), tape);
      TensorPtr<S> merged;
      if (cfg.use_alignment) {
        auto offsets = compute_offsets(base, up, st.deform, tape);
        auto aligned = deformable_conv(up, offsets, st.deform.weight, tape);
        merged = channel_align(concat_channels<S>({base, aligned}, tape), st.chan, tape);
      } else {
        merged = concat_channels<S>({base, up}, tape);
      }
      base = st.reduce(merged, tape);
    }
    auto att = dual_cross_attention(base, f_ref[static_cast<size_t>(k - 1)], st.attn, tape);
    for (const auto& block : st.blocks) att = block(att, tape);
    out[static_cast<size_t>(k - 1)] = att;
  }
  return out;
}

template <typename S>
TensorPtr<S> ECFNet<S>::decode(const std::array<TensorPtr<S>, kStages>& fused,
                               const std::array<TensorPtr<S>, kStages>& edge_feats,
                               Tape<S>* tape) const {
  TensorPtr<S> cur = fused[kStages - 1];
  for (int k = kStages; k >= 1; --k) {
    const auto& st = decoder[static_cast<size_t>(k - 1)];
    if (k < kStages) cur = st.up(upsample2x(cur, UpsampleMode::nearest, tape), tape);
    const auto& texture = fused[static_cast<size_t>(k - 1)];
    if (st.ttm)
      cur = texture_transfer(texture, cur, *st.ttm, tape);
    else
      cur = st.fuse_only(concat_channels<S>({texture, cur}, tape), tape);
    if (st.sicm) cur = sicm_fuse(cur, edge_feats[static_cast<size_t>(k - 1)], *st.sicm, tape);
  }
  return cur;
}

template <typename S>
ForwardOut<S> ECFNet<S>::forward(const TensorPtr<S>& lr, const TensorPtr<S>& ref,
                                 Tape<S>* tape) const {
  check(lr->shape.size() == 4 && lr->shape[1] == 1, "forward expects lr [N,1,h,w]");
  check(ref->shape.size() == 4 && ref->shape[1] == 1, "forward expects ref [N,1,H,W]");
  check(ref->shape[0] == lr->shape[0], "forward: batch mismatch");
  check(ref->shape[2] == lr->shape[2] * cfg.scale && ref->shape[3] == lr->shape[3] * cfg.scale,
        "forward: ref resolution must be scale times the lr resolution");
  check(ref->shape[2] % 8 == 0 && ref->shape[3] % 8 == 0,
        "forward: full resolution must be divisible by 8");

  auto [lr_up, edge] = preprocess(lr, cfg.scale);

  auto f_main = encode(lr_up, 0, tape);
  auto f_ref = encode(ref, 1, tape);
  std::array<TensorPtr<S>, kStages> f_edge{};
  if (has_edge_tower) f_edge = encode(edge, 2, tape);

  auto fused = cffm_forward(f_main, f_ref, tape);
  auto dec = decode(fused, f_edge, tape);

  ForwardOut<S> out;
  out.lr_up = lr_up;
  out.edge = edge;
  out.sr = add(sr_head(dec, tape), lr_up, tape);
  if (cfg.use_structure_branch) out.structure = struct_head(dec, tape);
  return out;
}

template <typename S>
TensorPtr<S> ECFNet<S>::loss(const ForwardOut<S>& out, const TensorPtr<S>& hr,
                             Tape<S>* tape) const {
  check(out.sr->same_shape(*hr), "loss: prediction and target shapes differ");
  auto rec = mean_all(abs_val(sub(out.sr, hr, tape), tape), tape);
  if (!out.structure) return rec;
  auto target_edge = sobel_edge_map(hr);
  auto struct_term = mean_all(abs_val(sub(out.structure, target_edge, tape), tape), tape);
  return add(rec, struct_term, tape);
}

int64_t param_count(const ModelConfig& cfg) {
  ECFNet<float> probe(cfg, 0);
  return probe.params.total_count();
}

template struct ECFNet<float>;
template struct ECFNet<double>;

}  // namespace ecf
