#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ecf/data.hpp"
#include "ecf/gradsuite.hpp"
#include "ecf/metrics.hpp"
#include "ecf/model.hpp"
#include "ecf/runconfig.hpp"
#include "ecf/trainkit.hpp"

namespace fs = std::filesystem;
using namespace ecf;

namespace {

// Exit codes: 0 ok, 1 failed check, 2 usage or config, 3 I/O, 4 numerical.

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;        // --set key=value, applied in order
  std::vector<std::string> sugar_sets;  // named flags, applied after --set
};

void add_common(CLI::App* cmd, CommonOpts& co) {
  cmd->add_option("--config", co.config_path, "key=value config file");
  cmd->add_option("--set", co.sets, "override one config key (key=value, repeatable)")
      ->take_all();
}

// Registers a flag that forwards its value into a config key.
void add_sugar(CLI::App* cmd, CommonOpts& co, const std::string& flag, const std::string& key,
               const std::string& desc) {
  cmd->add_option_function<std::string>(
      flag, [&co, key](const std::string& v) { co.sugar_sets.push_back(key + "=" + v); }, desc);
}

RunConfig assemble(const CommonOpts& co) {
  RunConfig cfg = co.config_path.empty() ? RunConfig{} : load_config_file(co.config_path);
  for (const auto& s : co.sets) apply_override(cfg, s);
  for (const auto& s : co.sugar_sets) apply_override(cfg, s);
  cfg.model.validate();
  cfg.train.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check<IoError>(out.good(), "cannot open for writing: " + path.string());
  out << text;
  out.flush();
  check<IoError>(out.good(), "write failed: " + path.string());
}

// Canonical config + hash next to every command's outputs, so any artifact
// directory identifies the exact configuration that produced it.
std::string stamp_config(const RunConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  write_text(dir / "config.txt", canonical_config(cfg));
  return config_hash(cfg);
}

std::string pair_id(size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "pair_%03zu", i);
  return buf;
}

// --- synth ----------------------------------------------------------------

int cmd_synth(const CommonOpts& co, bool png_previews) {
  RunConfig cfg = assemble(co);
  check<ConfigError>(cfg.data_count >= 1, "data.count must be at least 1");

  const fs::path manifest_path = cfg.data_manifest;
  const fs::path dir = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
  fs::create_directories(dir);

  auto pairs = make_dataset(cfg.data_count, cfg.phantom, cfg.model.scale);

  DatasetManifest m;
  m.scale = cfg.model.scale;
  m.size = cfg.phantom.size;
  m.phantom = cfg.phantom;
  double baseline_sum = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const std::string id = pair_id(i);
    ManifestEntry e;
    e.hr_path = id + "_hr.raw";
    e.ref_path = id + "_ref.raw";
    e.seed = pairs[i].seed;
    write_image_raw((dir / e.hr_path).string(), pairs[i].hr);
    write_image_raw((dir / e.ref_path).string(), pairs[i].ref);
    write_image_raw((dir / (id + "_lr.raw")).string(), pairs[i].lr);
    if (png_previews) {
      write_image_png16((dir / (id + "_hr.png")).string(), pairs[i].hr);
      write_image_png16((dir / (id + "_ref.png")).string(), pairs[i].ref);
      write_image_png16((dir / (id + "_lr.png")).string(), pairs[i].lr);
    }
    const double b = bicubic_baseline_psnr(pairs[i].hr, pairs[i].lr);
    m.entries.push_back(e);
    m.baseline_psnr.push_back(b);
    baseline_sum += b;
    std::printf("%s  seed %" PRIu64 "  bicubic %.4f dB\n", id.c_str(), pairs[i].seed, b);
  }
  m.baseline_psnr_mean = baseline_sum / static_cast<double>(pairs.size());
  save_manifest(manifest_path.string(), m);

  const std::string hash = stamp_config(cfg, dir);
  std::printf("wrote %zu pairs to %s (scale x%d, %dx%d)\n", pairs.size(), dir.string().c_str(),
              m.scale, m.size, m.size);
  std::printf("bicubic baseline mean %.4f dB\n", m.baseline_psnr_mean);
  std::printf("config %s\n", hash.c_str());
  return 0;
}

// --- train ----------------------------------------------------------------

// Rewrites the curve file so it ends exactly at start_step, then returns an
// open stream positioned for appending. A fresh run truncates to the header.
std::ofstream open_loss_curve(const fs::path& path, int64_t start_step) {
  const std::string header = "step,epoch,loss,wall_ms\n";
  std::vector<std::string> keep;
  if (start_step > 0 && fs::exists(path)) {
    std::ifstream in(path);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        continue;
      }
      if (line.empty()) continue;
      const int64_t step = std::strtoll(line.c_str(), nullptr, 10);
      if (step >= 1 && step <= start_step) keep.push_back(line);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check<IoError>(out.good(), "cannot open for writing: " + path.string());
  out << header;
  for (const auto& line : keep) out << line << '\n';
  out.flush();
  return out;
}

void append_loss_point(std::ofstream& out, const LossPoint& p) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%lld,%d,%.17g,%.3f\n", static_cast<long long>(p.step), p.epoch,
                p.loss, p.wall_ms);
  out << buf;
  out.flush();
}

int cmd_train(const CommonOpts& co, const std::string& resume_path) {
  RunConfig cfg = assemble(co);
  const std::string hash = config_hash(cfg);

  const auto manifest = load_manifest(cfg.data_manifest);
  check<ConfigError>(manifest.scale == cfg.model.scale,
                     "dataset scale does not match model.scale");
  auto pairs = load_pairs(manifest, cfg.data_manifest);

  ECFNet<float> model(cfg.model, cfg.seed());
  AdamState<float> state;
  TrainConfig tc = cfg.train;
  tc.out_dir = cfg.out_dir;
  fs::create_directories(cfg.out_dir);

  int64_t start_step = 0;
  if (!resume_path.empty()) {
    const Checkpoint c = load_checkpoint(resume_path);
    check<ConfigError>(c.adam.lr == tc.adam.lr && c.adam.beta1 == tc.adam.beta1 &&
                           c.adam.beta2 == tc.adam.beta2 && c.adam.eps == tc.adam.eps,
                       "checkpoint optimizer hyperparameters do not match the config");
    restore_checkpoint(c, model, state);
    start_step = c.step;
    std::printf("resumed from %s at step %lld\n", resume_path.c_str(),
                static_cast<long long>(start_step));
  }

  std::printf("model: %lld parameters, scale x%d, %zu train pairs (+%d held out)\n",
              static_cast<long long>(model.params.total_count()), cfg.model.scale,
              pairs.size() - static_cast<size_t>(tc.holdout), tc.holdout);

  auto curve = open_loss_curve(fs::path(cfg.out_dir) / "loss_curve.csv", start_step);
  double last_loss = 0.0;
  const auto result = train(model, pairs, tc, state, start_step,
                            [&](const LossPoint& p) {
                              append_loss_point(curve, p);
                              last_loss = p.loss;
                            });

  std::vector<ImagePair> eval_pairs =
      tc.holdout > 0 ? std::vector<ImagePair>(pairs.end() - tc.holdout, pairs.end()) : pairs;
  const auto records = evaluate(model, eval_pairs, hash);
  write_metric_csv((fs::path(cfg.out_dir) / "metrics.csv").string(), records);
  write_metric_json((fs::path(cfg.out_dir) / "metrics.json").string(), records);
  stamp_config(cfg, cfg.out_dir);

  double mp = 0.0, ms = 0.0;
  for (const auto& r : records) {
    mp += r.psnr_db;
    ms += r.ssim_val;
  }
  mp /= static_cast<double>(records.size());
  ms /= static_cast<double>(records.size());
  std::printf("trained to step %lld, final loss %.6g\n",
              static_cast<long long>(result.final_step), last_loss);
  std::printf("%s set: mean PSNR %.4f dB, mean SSIM %.6f (bicubic baseline %.4f dB)\n",
              tc.holdout > 0 ? "held-out" : "training", mp, ms, manifest.baseline_psnr_mean);
  std::printf("config %s\n", hash.c_str());
  return 0;
}

// --- eval -----------------------------------------------------------------

int cmd_eval(const CommonOpts& co, const std::string& ckpt_path, bool emit_maps) {
  RunConfig cfg = assemble(co);
  const Checkpoint c = load_checkpoint(ckpt_path);
  cfg.model = c.config;  // artifacts are stamped with the evaluated model
  const std::string hash = config_hash(cfg);

  const auto manifest = load_manifest(cfg.data_manifest);
  check<ConfigError>(manifest.scale == cfg.model.scale,
                     "dataset scale does not match the checkpoint's model");
  auto pairs = load_pairs(manifest, cfg.data_manifest);

  ECFNet<float> model(cfg.model, cfg.seed());
  AdamState<float> state;
  restore_checkpoint(c, model, state);

  const fs::path out_dir = cfg.out_dir;
  fs::create_directories(out_dir);

  std::vector<MetricRecord> records;
  double mp = 0.0, ms = 0.0;
  for (size_t i = 0; i < pairs.size(); ++i) {
    const auto out = model.forward(pairs[i].lr, pairs[i].ref, nullptr);
    const auto sr = clamp01(out.sr);
    MetricRecord r;
    r.image_id = pair_id(i);
    r.scale = pairs[i].scale;
    r.psnr_db = psnr(sr, pairs[i].hr);
    r.ssim_val = ssim(sr, pairs[i].hr);
    r.config_hash = hash;
    const double base = i < manifest.baseline_psnr.size() ? manifest.baseline_psnr[i] : 0.0;
    std::printf("%s  PSNR %.4f dB (bicubic %.4f)  SSIM %.6f\n", r.image_id.c_str(), r.psnr_db,
                base, r.ssim_val);
    mp += r.psnr_db;
    ms += r.ssim_val;
    if (emit_maps) {
      write_image_png16((out_dir / (r.image_id + "_sr.png")).string(), sr);
      write_image_png16((out_dir / (r.image_id + "_err.png")).string(),
                        error_map(sr, pairs[i].hr));
      if (out.structure)
        write_image_png16((out_dir / (r.image_id + "_struct.png")).string(),
                          clamp01(out.structure));
    }
    records.push_back(std::move(r));
  }
  write_metric_csv((out_dir / "metrics.csv").string(), records);
  write_metric_json((out_dir / "metrics.json").string(), records);
  stamp_config(cfg, out_dir);

  const auto n = static_cast<double>(pairs.size());
  std::printf("mean PSNR %.4f dB (bicubic baseline %.4f), mean SSIM %.6f\n", mp / n,
              manifest.baseline_psnr_mean, ms / n);
  std::printf("config %s\n", hash.c_str());
  return 0;
}

// --- ablate ---------------------------------------------------------------

int cmd_ablate(const CommonOpts& co) {
  RunConfig cfg = assemble(co);
  const auto manifest = load_manifest(cfg.data_manifest);
  check<ConfigError>(manifest.scale == cfg.model.scale,
                     "dataset scale does not match model.scale");
  auto pairs = load_pairs(manifest, cfg.data_manifest);

  TrainConfig tc = cfg.train;
  tc.out_dir = cfg.out_dir;
  fs::create_directories(cfg.out_dir);

  const auto rows = run_ablation(pairs, cfg.model, tc);

  // Per-variant hash: the base config with the matching switches applied.
  auto variant_hash = [&](const AblationRow& r) {
    RunConfig vc = cfg;
    vc.model.use_alignment = r.alignment;
    vc.model.use_texture_transfer = r.texture;
    vc.model.use_structure_branch = r.structure;
    return config_hash(vc);
  };

  std::ostringstream csv;
  csv << "variant,alignment,texture_transfer,structure_branch,params,mean_psnr_db,mean_ssim,"
         "config_hash\n";
  std::printf("%-36s %5s %4s %6s %9s %10s %9s\n", "variant", "align", "ttm", "struct", "params",
              "psnr_db", "ssim");
  for (const auto& r : rows) {
    const std::string h = variant_hash(r);
    char line[256];
    std::snprintf(line, sizeof(line), "%s,%d,%d,%d,%lld,%.6f,%.6f,%s\n", r.variant.c_str(),
                  r.alignment ? 1 : 0, r.texture ? 1 : 0, r.structure ? 1 : 0,
                  static_cast<long long>(r.param_total), r.mean_psnr, r.mean_ssim, h.c_str());
    csv << line;
    std::printf("%-36s %5s %4s %6s %9lld %10.4f %9.6f\n", r.variant.c_str(),
                r.alignment ? "yes" : "no", r.texture ? "yes" : "no", r.structure ? "yes" : "no",
                static_cast<long long>(r.param_total), r.mean_psnr, r.mean_ssim);
  }
  write_text(fs::path(cfg.out_dir) / "ablation.csv", csv.str());
  const std::string hash = stamp_config(cfg, cfg.out_dir);
  std::printf("wrote %s\n", (fs::path(cfg.out_dir) / "ablation.csv").string().c_str());
  std::printf("config %s\n", hash.c_str());
  return 0;
}

// --- gradcheck --------------------------------------------------------------

int cmd_gradcheck(bool ops_only, bool e2e_only) {
  const bool run_ops = !e2e_only;
  const bool run_e2e = !ops_only;
  bool all_pass = true;

  auto report = [&](const GradSuiteCase& c) {
    all_pass = all_pass && c.result.pass;
    std::printf("%-24s %-4s  max rel err %.3e  (tol %.0e, %lld checks)\n", c.name.c_str(),
                c.result.pass ? "ok" : "FAIL", c.result.max_rel_error, c.tol,
                static_cast<long long>(c.result.checked));
    if (!c.result.pass) std::printf("  worst: %s\n", c.result.worst.c_str());
  };

  if (run_ops)
    for (const auto& c : run_op_gradchecks()) report(c);
  if (run_e2e) report(run_model_gradcheck());

  std::printf(all_pass ? "all gradient checks passed\n" : "gradient checks FAILED\n");
  return all_pass ? 0 : 1;
}

int run_guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "shape error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "io error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-contrast MRI super-resolution kit"};
  app.require_subcommand(1);

  CommonOpts synth_co, train_co, eval_co, ablate_co;

  auto* synth = app.add_subcommand("synth", "generate a phantom dataset with a manifest");
  add_common(synth, synth_co);
  bool synth_png = false;
  add_sugar(synth, synth_co, "--n", "data.count", "number of pairs");
  add_sugar(synth, synth_co, "--size", "data.size", "image side length");
  add_sugar(synth, synth_co, "--scale", "model.scale", "super-resolution factor (2 or 4)");
  add_sugar(synth, synth_co, "--seed", "seed", "root seed");
  add_sugar(synth, synth_co, "--ellipses", "data.ellipses", "ellipses per phantom");
  synth->add_option_function<std::string>(
      "--out",
      [&](const std::string& v) { synth_co.sugar_sets.push_back("data.manifest=" + v + "/manifest.json"); },
      "dataset directory");
  synth->add_flag("--png", synth_png, "also write 16-bit PNG previews");

  auto* traincmd = app.add_subcommand("train", "train a model on a synthesized dataset");
  add_common(traincmd, train_co);
  std::string resume_path;
  add_sugar(traincmd, train_co, "--epochs", "train.epochs", "training epochs");
  add_sugar(traincmd, train_co, "--lr", "train.lr", "Adam learning rate");
  add_sugar(traincmd, train_co, "--seed", "seed", "root seed");
  add_sugar(traincmd, train_co, "--manifest", "data.manifest", "dataset manifest path");
  add_sugar(traincmd, train_co, "--out", "out.dir", "output directory");
  traincmd->add_option("--resume", resume_path, "checkpoint to continue from");

  auto* evalcmd = app.add_subcommand("eval", "score a checkpoint against a dataset");
  add_common(evalcmd, eval_co);
  std::string ckpt_path;
  bool emit_maps = false;
  evalcmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  add_sugar(evalcmd, eval_co, "--manifest", "data.manifest", "dataset manifest path");
  add_sugar(evalcmd, eval_co, "--out", "out.dir", "output directory");
  evalcmd->add_flag("--emit-maps", emit_maps, "write SR, error, and structure maps as PNGs");

  auto* ablatecmd =
      app.add_subcommand("ablate", "train and score the module-ablation variants");
  add_common(ablatecmd, ablate_co);
  add_sugar(ablatecmd, ablate_co, "--epochs", "train.epochs", "training epochs per variant");
  add_sugar(ablatecmd, ablate_co, "--seed", "seed", "root seed");
  add_sugar(ablatecmd, ablate_co, "--manifest", "data.manifest", "dataset manifest path");
  add_sugar(ablatecmd, ablate_co, "--out", "out.dir", "output directory");
  add_sugar(ablatecmd, ablate_co, "--holdout", "train.holdout", "held-out pair count");

  auto* gradcmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  bool ops_only = false, e2e_only = false;
  gradcmd->add_flag("--ops", ops_only, "operator checks only");
  gradcmd->add_flag("--e2e", e2e_only, "whole-model check only");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (synth->parsed()) return run_guarded([&] { return cmd_synth(synth_co, synth_png); });
  if (traincmd->parsed()) return run_guarded([&] { return cmd_train(train_co, resume_path); });
  if (evalcmd->parsed()) return run_guarded([&] { return cmd_eval(eval_co, ckpt_path, emit_maps); });
  if (ablatecmd->parsed()) return run_guarded([&] { return cmd_ablate(ablate_co); });
  if (gradcmd->parsed()) return run_guarded([&] { return cmd_gradcheck(ops_only, e2e_only); });
  return 2;
}
