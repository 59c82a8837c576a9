#include "ecf/trainkit.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace ecf {

template <typename S>
void AdamState<S>::init(const ParamStore<S>& ps) {
  t = 0;
  m.clear();
  v.clear();
  for (const auto& name : ps.names()) {
    const auto p = ps.get(name);
    m.emplace_back(static_cast<size_t>(p->size()), S(0));
    v.emplace_back(static_cast<size_t>(p->size()), S(0));
  }
}

template <typename S>
void adam_step(ParamStore<S>& ps, AdamState<S>& state, const AdamConfig& cfg) {
  const auto& names = ps.names();
  check(state.m.size() == names.size() && state.v.size() == names.size(),
        "adam_step: optimizer state does not match the parameter store");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (size_t i = 0; i < names.size(); ++i) {
    const auto p = ps.get(names[i]);
    check(!p->grad.empty(), "adam_step: missing gradient for " + names[i]);
    auto& mi = state.m[i];
    auto& vi = state.v[i];
    check(static_cast<int64_t>(mi.size()) == p->size(),
          "adam_step: state shape drifted for " + names[i]);
    for (size_t j = 0; j < mi.size(); ++j) {
      const double g = static_cast<double>(p->grad[j]);
      const double md = cfg.beta1 * static_cast<double>(mi[j]) + (1.0 - cfg.beta1) * g;
      const double vd = cfg.beta2 * static_cast<double>(vi[j]) + (1.0 - cfg.beta2) * g * g;
      mi[j] = static_cast<S>(md);
      vi[j] = static_cast<S>(vd);
      const double update = cfg.lr * (md / bc1) / (std::sqrt(vd / bc2) + cfg.eps);
      p->values[j] = static_cast<S>(static_cast<double>(p->values[j]) - update);
    }
  }
}

template struct AdamState<float>;
template struct AdamState<double>;
template void adam_step(ParamStore<float>&, AdamState<float>&, const AdamConfig&);
template void adam_step(ParamStore<double>&, AdamState<double>&, const AdamConfig&);

void TrainConfig::validate() const {
  check<ConfigError>(adam.lr >= 0.0, "train.lr must not be negative");
  check<ConfigError>(adam.beta1 >= 0.0 && adam.beta1 < 1.0, "train.beta1 must lie in [0,1)");
  check<ConfigError>(adam.beta2 >= 0.0 && adam.beta2 < 1.0, "train.beta2 must lie in [0,1)");
  check<ConfigError>(adam.eps > 0.0, "train.eps must be positive");
  check<ConfigError>(epochs >= 1, "train.epochs must be positive");
  check<ConfigError>(batch_size >= 1, "train.batch_size must be positive");
  check<ConfigError>(checkpoint_every >= 0, "train.checkpoint_every must not be negative");
  check<ConfigError>(holdout >= 0, "train.holdout must not be negative");
}

std::vector<int64_t> epoch_permutation(int64_t n, uint64_t seed, int epoch) {
  std::vector<int64_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
  Rng rng = Rng(seed).substream("shuffle:" + std::to_string(epoch));
  for (int64_t i = n - 1; i > 0; --i) {
    const uint64_t j = rng.next_below(static_cast<uint64_t>(i) + 1);
    std::swap(perm[static_cast<size_t>(i)], perm[static_cast<size_t>(j)]);
  }
  return perm;
}

namespace {

TensorPtr<float> stack_images(const std::vector<ImagePair>& pairs,
                              const std::vector<int64_t>& idx, size_t lo, size_t hi,
                              TensorPtr<float> ImagePair::*member) {
  const auto& first = (pairs[static_cast<size_t>(idx[lo])].*member);
  const int64_t h = first->shape[2], w = first->shape[3];
  const int64_t b = static_cast<int64_t>(hi - lo);
  auto out = make_tensor<float>({b, 1, h, w});
  for (size_t k = lo; k < hi; ++k) {
    const auto& img = pairs[static_cast<size_t>(idx[k])].*member;
    std::copy(img->values.begin(), img->values.end(),
              out->values.begin() + static_cast<int64_t>(k - lo) * h * w);
  }
  return out;
}

std::string step_checkpoint_path(const std::string& dir, int64_t step) {
  std::ostringstream os;
  os << dir << "/ckpt_step" << std::setw(6) << std::setfill('0') << step << ".ckpt";
  return os.str();
}

}  // namespace

TrainResult train(ECFNet<float>& model, const std::vector<ImagePair>& pairs,
                  const TrainConfig& cfg, AdamState<float>& state, int64_t start_step,
                  const StepHook& hook) {
  cfg.validate();
  const int64_t n = static_cast<int64_t>(pairs.size()) - cfg.holdout;
  check<ConfigError>(n >= 1, "train: no pairs left after the holdout split");
  for (int64_t i = 1; i < n; ++i) {
    check(pairs[static_cast<size_t>(i)].hr->same_shape(*pairs[0].hr) &&
              pairs[static_cast<size_t>(i)].ref->same_shape(*pairs[0].ref) &&
              pairs[static_cast<size_t>(i)].lr->same_shape(*pairs[0].lr),
          "train: all training pairs must share one image size");
  }
  check<ConfigError>(pairs[0].hr->shape[2] == pairs[0].lr->shape[2] * model.cfg.scale,
                     "train: dataset scale does not match the model scale");

  if (!state.initialized()) state.init(model.params);
  const int64_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  const int64_t total_steps = steps_per_epoch * cfg.epochs;
  check<ConfigError>(start_step >= 0 && start_step <= total_steps,
                     "train: resume step lies outside the configured schedule");
  check(state.t == start_step, "train: optimizer step count disagrees with the resume step");

  if (!cfg.out_dir.empty()) std::filesystem::create_directories(cfg.out_dir);

  TrainResult result;
  for (int64_t step = start_step; step < total_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const int epoch = static_cast<int>(step / steps_per_epoch);
    const int64_t pos = step % steps_per_epoch;
    const auto perm = epoch_permutation(n, cfg.seed, epoch);
    const size_t lo = static_cast<size_t>(pos * cfg.batch_size);
    const size_t hi = std::min(static_cast<size_t>(n), lo + static_cast<size_t>(cfg.batch_size));

    auto lr_in = stack_images(pairs, perm, lo, hi, &ImagePair::lr);
    auto ref_in = stack_images(pairs, perm, lo, hi, &ImagePair::ref);
    auto hr_in = stack_images(pairs, perm, lo, hi, &ImagePair::hr);

    Tape<float> tape;
    auto out = model.forward(lr_in, ref_in, &tape);
    auto loss = model.loss(out, hr_in, &tape);
    const double loss_value = static_cast<double>(loss->values[0]);
    if (!std::isfinite(loss_value)) {
      const std::string where = tape.first_non_finite();
      throw NumericError("training aborted at step " + std::to_string(step + 1) +
                         ": non-finite values first appeared in '" +
                         (where.empty() ? std::string("loss") : where) + "'");
    }
    tape.backward(loss);
    adam_step(model.params, state, cfg.adam);
    model.params.zero_grads();

    const auto t1 = std::chrono::steady_clock::now();
    LossPoint point;
    point.step = step + 1;
    point.epoch = epoch;
    point.loss = loss_value;
    point.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    result.curve.push_back(point);
    if (hook) hook(point);

    if (cfg.checkpoint_every > 0 && (step + 1) % cfg.checkpoint_every == 0 &&
        !cfg.out_dir.empty()) {
      const auto c = snapshot(model, state, cfg.adam, Rng(cfg.seed).state(), step + 1, epoch);
      save_checkpoint(step_checkpoint_path(cfg.out_dir, step + 1), c);
    }
  }
  result.final_step = total_steps;

  if (!cfg.out_dir.empty()) {
    const auto c = snapshot(model, state, cfg.adam, Rng(cfg.seed).state(), total_steps,
                            cfg.epochs - 1);
    save_checkpoint(cfg.out_dir + "/ckpt_final.ckpt", c);
  }
  return result;
}

std::vector<MetricRecord> evaluate(const ECFNet<float>& model,
                                   const std::vector<ImagePair>& pairs,
                                   const std::string& config_hash) {
  std::vector<MetricRecord> records;
  records.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto& pair = pairs[i];
    auto out = model.forward(pair.lr, pair.ref, nullptr);
    auto sr = clamp01(out.sr);
    MetricRecord r;
    std::ostringstream id;
    id << "pair_" << std::setw(3) << std::setfill('0') << i;
    r.image_id = id.str();
    r.scale = pair.scale;
    r.psnr_db = psnr(sr, pair.hr);
    r.ssim_val = ssim(sr, pair.hr);
    r.config_hash = config_hash;
    records.push_back(std::move(r));
  }
  return records;
}

// --- checkpoints -----------------------------------------------------------------

namespace {

nlohmann::json config_to_json(const ModelConfig& c) {
  return {{"base_channels", c.base_channels},
          {"scale", c.scale},
          {"heads", c.heads},
          {"residual_blocks", c.residual_blocks},
          {"edge_residual_blocks", c.edge_residual_blocks},
          {"reduction", c.reduction},
          {"norm_eps", c.norm_eps},
          {"use_alignment", c.use_alignment},
          {"use_texture_transfer", c.use_texture_transfer},
          {"use_structure_branch", c.use_structure_branch},
          {"ttm_alternative_binding", c.ttm_alternative_binding}};
}

ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.base_channels = j.at("base_channels").get<int>();
  c.scale = j.at("scale").get<int>();
  c.heads = j.at("heads").get<int>();
  c.residual_blocks = j.at("residual_blocks").get<int>();
  c.edge_residual_blocks = j.at("edge_residual_blocks").get<int>();
  c.reduction = j.at("reduction").get<int>();
  c.norm_eps = j.at("norm_eps").get<double>();
  c.use_alignment = j.at("use_alignment").get<bool>();
  c.use_texture_transfer = j.at("use_texture_transfer").get<bool>();
  c.use_structure_branch = j.at("use_structure_branch").get<bool>();
  c.ttm_alternative_binding = j.at("ttm_alternative_binding").get<bool>();
  return c;
}

void put_u64(std::ofstream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

constexpr char kCkptMagic[8] = {'E', 'C', 'F', 'C', 'K', 'P', 'T', '1'};

void append_floats(std::vector<unsigned char>& buf, const std::vector<float>& xs) {
  static_assert(sizeof(float) == 4);
  const size_t at = buf.size();
  buf.resize(at + xs.size() * 4);
  std::memcpy(buf.data() + at, xs.data(), xs.size() * 4);
}

}  // namespace

Checkpoint snapshot(const ECFNet<float>& model, const AdamState<float>& state,
                    const AdamConfig& adam, std::array<uint64_t, 4> rng_state, int64_t step,
                    int epoch) {
  const auto& names = model.params.names();
  check(state.m.size() == names.size(), "snapshot: optimizer state does not match the model");
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < names.size(); ++i) index.emplace(names[i], i);

  Checkpoint c;
  c.config = model.cfg;
  c.adam = adam;
  c.step = step;
  c.epoch = epoch;
  c.rng_state = rng_state;
  for (const auto& [name, i] : index) {
    const auto p = model.params.get(name);
    c.names.push_back(name);
    c.shapes.push_back(p->shape);
    c.values.push_back(p->values);
    c.m.push_back(state.m[i]);
    c.v.push_back(state.v[i]);
  }
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
  check(c.names.size() == c.shapes.size() && c.names.size() == c.values.size() &&
            c.names.size() == c.m.size() && c.names.size() == c.v.size(),
        "save_checkpoint: inconsistent tensor directory");

  nlohmann::json dir = nlohmann::json::array();
  uint64_t offset = 0;
  for (size_t i = 0; i < c.names.size(); ++i) {
    const uint64_t count = shape_numel(c.shapes[i]);
    check(count == c.values[i].size() && count == c.m[i].size() && count == c.v[i].size(),
          "save_checkpoint: shape does not match the stored values for " + c.names[i]);
    dir.push_back({{"name", c.names[i]}, {"shape", c.shapes[i]}, {"offset", offset}});
    offset += count * 4;
  }
  const uint64_t block_bytes = offset;

  std::vector<unsigned char> payload;
  payload.reserve(3 * block_bytes);
  for (const auto& xs : c.values) append_floats(payload, xs);
  for (const auto& xs : c.m) append_floats(payload, xs);
  for (const auto& xs : c.v) append_floats(payload, xs);

  nlohmann::json header;
  header["format_version"] = 1;
  header["config"] = config_to_json(c.config);
  header["adam"] = {{"lr", c.adam.lr},
                    {"beta1", c.adam.beta1},
                    {"beta2", c.adam.beta2},
                    {"eps", c.adam.eps},
                    {"t", c.step}};
  header["step"] = c.step;
  header["epoch"] = c.epoch;
  header["rng"] = c.rng_state;
  header["params"] = dir;
  header["block_bytes"] = block_bytes;
  header["m_block_offset"] = block_bytes;
  header["v_block_offset"] = 2 * block_bytes;
  header["payload_bytes"] = static_cast<uint64_t>(payload.size());
  header["payload_crc32"] = crc32(payload.data(), payload.size());

  const std::string text = header.dump();
  std::ofstream os(path, std::ios::binary);
  check<IoError>(os.good(), "cannot open for writing: " + path);
  os.write(kCkptMagic, 8);
  put_u64(os, text.size());
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size()));
  check<IoError>(os.good(), "short write: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check<IoError>(is.good(), "cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  check<IoError>(is.good() && std::memcmp(magic, kCkptMagic, 8) == 0,
                 "not a checkpoint file: " + path);
  unsigned char lenb[8];
  is.read(reinterpret_cast<char*>(lenb), 8);
  check<IoError>(is.good(), "truncated checkpoint header: " + path);
  uint64_t header_len = 0;
  for (int i = 0; i < 8; ++i) header_len |= static_cast<uint64_t>(lenb[i]) << (8 * i);
  check<IoError>(header_len > 0 && header_len <= (1u << 26), "implausible header size in " + path);

  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  check<IoError>(is.good(), "truncated checkpoint header: " + path);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid checkpoint header in " + path + ": " + e.what());
  }

  Checkpoint c;
  try {
    check<IoError>(header.at("format_version").get<int>() == 1,
                   "unsupported checkpoint version in " + path);
    c.config = config_from_json(header.at("config"));
    const auto& a = header.at("adam");
    c.adam.lr = a.at("lr").get<double>();
    c.adam.beta1 = a.at("beta1").get<double>();
    c.adam.beta2 = a.at("beta2").get<double>();
    c.adam.eps = a.at("eps").get<double>();
    c.step = header.at("step").get<int64_t>();
    c.epoch = header.at("epoch").get<int>();
    const auto rng = header.at("rng").get<std::vector<uint64_t>>();
    check<IoError>(rng.size() == 4, "bad rng state in " + path);
    std::copy(rng.begin(), rng.end(), c.rng_state.begin());

    const uint64_t payload_bytes = header.at("payload_bytes").get<uint64_t>();
    const uint64_t block_bytes = header.at("block_bytes").get<uint64_t>();
    check<IoError>(payload_bytes == 3 * block_bytes, "inconsistent payload size in " + path);
    std::vector<unsigned char> payload(payload_bytes);
    is.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload_bytes));
    check<IoError>(is.good(), "truncated checkpoint payload: " + path);
    check<IoError>(crc32(payload.data(), payload.size()) ==
                       header.at("payload_crc32").get<uint32_t>(),
                   "checkpoint payload checksum mismatch: " + path);

    for (const auto& e : header.at("params")) {
      const auto name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<std::vector<int64_t>>();
      const uint64_t off = e.at("offset").get<uint64_t>();
      const uint64_t count = shape_numel(shape);
      check<IoError>(off + count * 4 <= block_bytes, "tensor overruns its block: " + name);
      auto read_block = [&](uint64_t base) {
        std::vector<float> xs(count);
        std::memcpy(xs.data(), payload.data() + base + off, count * 4);
        return xs;
      };
      c.names.push_back(name);
      c.shapes.push_back(shape);
      c.values.push_back(read_block(0));
      c.m.push_back(read_block(block_bytes));
      c.v.push_back(read_block(2 * block_bytes));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("checkpoint header missing fields in " + path + ": " + e.what());
  }
  return c;
}

void restore_checkpoint(const Checkpoint& c, ECFNet<float>& model, AdamState<float>& state) {
  check<ConfigError>(c.config == model.cfg,
                     "checkpoint was written for a different model configuration");
  const auto& names = model.params.names();
  check<ConfigError>(c.names.size() == names.size(),
                     "checkpoint parameter directory does not match the model");
  std::map<std::string, size_t> index;
  for (size_t i = 0; i < names.size(); ++i) index.emplace(names[i], i);

  state.init(model.params);
  state.t = c.step;
  for (size_t i = 0; i < c.names.size(); ++i) {
    const auto it = index.find(c.names[i]);
    check<ConfigError>(it != index.end(), "checkpoint tensor has no home: " + c.names[i]);
    const auto p = model.params.get(c.names[i]);
    check<ConfigError>(p->shape == c.shapes[i], "checkpoint shape mismatch for " + c.names[i]);
    std::copy(c.values[i].begin(), c.values[i].end(), p->values.begin());
    state.m[it->second] = c.m[i];
    state.v[it->second] = c.v[i];
  }
}

// --- ablation ---------------------------------------------------------------------

std::vector<AblationRow> run_ablation(const std::vector<ImagePair>& pairs,
                                      const ModelConfig& base, const TrainConfig& cfg) {
  check<ConfigError>(cfg.holdout >= 1, "ablation needs a held-out split (train.holdout >= 1)");
  check<ConfigError>(static_cast<int>(pairs.size()) > cfg.holdout,
                     "ablation: holdout leaves no training pairs");

  struct Variant {
    const char* name;
    const char* slug;
    bool alignment, texture, structure;
  };
  const Variant variants[] = {
      {"w/o multi-scale feature alignment", "no_alignment", false, true, true},
      {"w/o texture transfer", "no_texture", true, false, true},
      {"w/o structure branch", "no_structure", true, true, false},
      {"full", "full", true, true, true},
  };

  std::vector<ImagePair> eval_pairs(pairs.end() - cfg.holdout, pairs.end());
  std::vector<AblationRow> rows;
  for (const auto& variant : variants) {
    ModelConfig mc = base;
    mc.use_alignment = variant.alignment;
    mc.use_texture_transfer = variant.texture;
    mc.use_structure_branch = variant.structure;

    ECFNet<float> model(mc, cfg.seed);
    AdamState<float> state;
    TrainConfig vc = cfg;
    if (!cfg.out_dir.empty()) vc.out_dir = cfg.out_dir + "/" + variant.slug;
    train(model, pairs, vc, state);

    const auto records = evaluate(model, eval_pairs, "");
    AblationRow row;
    row.variant = variant.name;
    row.alignment = variant.alignment;
    row.texture = variant.texture;
    row.structure = variant.structure;
    row.param_total = model.params.total_count();
    for (const auto& r : records) {
      row.mean_psnr += r.psnr_db;
      row.mean_ssim += r.ssim_val;
    }
    row.mean_psnr /= static_cast<double>(records.size());
    row.mean_ssim /= static_cast<double>(records.size());
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace ecf
