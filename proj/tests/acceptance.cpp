// Acceptance gate: one check per release criterion, one [PASS]/[FAIL] line
// each. Run with no arguments for the full gate or with criterion numbers
// (1..7) to run a subset. Exit code 0 only if every requested check passes.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ecf/gradsuite.hpp"
#include "ecf/metrics.hpp"
#include "ecf/operators.hpp"
#include "ecf/ops.hpp"
#include "ecf/runconfig.hpp"
#include "ecf/trainkit.hpp"

using namespace ecf;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.base_channels = 4;
  cfg.scale = 2;
  cfg.heads = 2;
  cfg.residual_blocks = 1;
  cfg.edge_residual_blocks = 1;
  cfg.reduction = 4;
  return cfg;
}

std::filesystem::path scratch_dir() {
  auto p = std::filesystem::temp_directory_path() / "ecf_acceptance";
  std::filesystem::create_directories(p);
  return p;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// --- 1: gradient suite -------------------------------------------------------

bool criterion_gradients(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();
  auto cases = run_op_gradchecks();
  auto model_case = run_model_gradcheck();
  const double elapsed = seconds_since(t0);

  const char* required[] = {"conv2d",          "matmul",        "softmax",
                            "instance_norm",   "upsample",      "deformable_conv",
                            "channel_align",   "dual_cross_attention",
                            "texture_transfer", "sicm_fuse",    "loss"};
  bool ok = true;
  double worst_op = 0.0;
  std::string first_fail;
  for (const auto& c : cases) {
    worst_op = std::max(worst_op, c.result.max_rel_error);
    if (!c.result.pass || c.result.max_rel_error > c.tol) {
      ok = false;
      if (first_fail.empty()) first_fail = c.name + " (" + c.result.worst + ")";
    }
  }
  for (const char* need : required) {
    const bool found = std::any_of(cases.begin(), cases.end(), [&](const GradSuiteCase& c) {
      return c.name.find(need) != std::string::npos;
    });
    if (!found) {
      ok = false;
      if (first_fail.empty()) first_fail = std::string("missing case for ") + need;
    }
  }
  if (!model_case.result.pass || model_case.result.max_rel_error > model_case.tol) {
    ok = false;
    if (first_fail.empty()) first_fail = model_case.name + " (" + model_case.result.worst + ")";
  }
  if (elapsed > 300.0) {
    ok = false;
    if (first_fail.empty()) first_fail = "exceeded the 5 minute budget";
  }

  std::ostringstream os;
  os << cases.size() << " operator cases max rel " << worst_op << " (tol 1e-4), end-to-end rel "
     << model_case.result.max_rel_error << " (tol 1e-3), " << elapsed << " s";
  if (!first_fail.empty()) os << "; first failure: " << first_fail;
  detail = os.str();
  return ok;
}

// --- 2: degenerate identities --------------------------------------------------

bool criterion_identities(std::string& detail) {
  bool ok = true;
  std::ostringstream os;

  Rng rng(201);
  auto x = random_uniform<double>({2, 3, 8, 8}, -1.0, 1.0, rng);
  auto w = random_uniform<double>({3, 3, 3, 3}, -1.0, 1.0, rng);
  auto off = make_tensor<double>({2, 18, 8, 8});
  Tape<double>* nt = nullptr;
  auto got = deformable_conv(x, off, w, nt);
  auto want = conv2d(x, w, TensorPtr<double>(), 1, 1);
  double deform_diff = 0.0;
  for (int64_t i = 0; i < got->size(); ++i)
    deform_diff = std::max(deform_diff, std::abs(got->values[i] - want->values[i]));
  ok &= deform_diff <= 1e-12;
  os << "deform-vs-conv max diff " << deform_diff;

  ParamStore<double> ps(202);
  auto fuse = make_structure_fuse(ps, "s", 4, 2);
  for (const auto& name : ps.names()) {
    auto t = ps.get(name);
    std::fill(t->values.begin(), t->values.end(), 0.0);
  }
  auto fx = random_uniform<double>({1, 4, 6, 6}, -1.0, 1.0, rng);
  auto fe = random_uniform<double>({1, 4, 6, 6}, -1.0, 1.0, rng);
  auto fy = sicm_fuse(fx, fe, fuse, nt);
  bool sicm_exact = true;
  for (int64_t i = 0; i < fx->size(); ++i) sicm_exact &= fy->values[i] == fx->values[i];
  ok &= sicm_exact;
  os << ", sicm zero-weight identity " << (sicm_exact ? "exact" : "BROKEN");

  ECFNet<double> net(tiny_config(), 203);
  for (const auto& name : net.params.names()) {
    auto t = net.params.get(name);
    std::fill(t->values.begin(), t->values.end(), 0.0);
  }
  auto lr = random_uniform<double>({1, 1, 8, 8}, 0.0, 1.0, rng);
  auto ref = random_uniform<double>({1, 1, 16, 16}, 0.0, 1.0, rng);
  auto out = net.forward(lr, ref, nullptr);
  bool skip_exact = true;
  for (int64_t i = 0; i < out.sr->size(); ++i)
    skip_exact &= out.sr->values[i] == out.lr_up->values[i];
  ok &= skip_exact;
  os << ", zero-weight net == bicubic " << (skip_exact ? "exact" : "BROKEN");

  bool sobel_zero = true;
  for (double level : {0.0, 0.37, 1.0}) {
    auto e = sobel_edge_map(full<double>({1, 1, 9, 9}, level));
    for (double v : e->values) sobel_zero &= v == 0.0;
  }
  ok &= sobel_zero;
  os << ", constant sobel " << (sobel_zero ? "all zero" : "BROKEN");

  detail = os.str();
  return ok;
}

// --- 3: degradation oracle ------------------------------------------------------

// Naive extended-precision DFT restricted to the retained band, with the
// documented Nyquist averaging, then an inverse DFT on the coarse grid
// normalized by the fine grid size.
TensorPtr<double> truncate_oracle(const TensorPtr<double>& x, int s) {
  const int64_t H = x->dim(2), W = x->dim(3);
  const int64_t h = H / s, w = W / s;
  using C = std::complex<long double>;
  const long double pi = std::numbers::pi_v<long double>;

  auto big_bin = [&](int64_t fy, int64_t fx) {
    C acc(0.0L, 0.0L);
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        const long double ph = -2.0L * pi * (static_cast<long double>(fy * i) / H +
                                             static_cast<long double>(fx * j) / W);
        acc += static_cast<long double>(x->values[i * W + j]) * C(std::cos(ph), std::sin(ph));
      }
    return acc;
  };

  auto freq_terms = [](int64_t m, int64_t n) {
    // Coarse-grid bin m of an n-point axis: one fine-grid frequency for
    // interior bins, the +/- pair at half weight for the Nyquist bin.
    std::vector<std::pair<int64_t, long double>> terms;
    const int64_t f = m <= n / 2 ? m : m - n;
    if (m == n / 2)
      terms = {{n / 2, 0.5L}, {-n / 2, 0.5L}};
    else
      terms = {{f, 1.0L}};
    return terms;
  };

  std::vector<C> small(static_cast<size_t>(h * w));
  for (int64_t my = 0; my < h; ++my)
    for (int64_t mx = 0; mx < w; ++mx) {
      C acc(0.0L, 0.0L);
      for (const auto& [fy, wy] : freq_terms(my, h))
        for (const auto& [fx, wx] : freq_terms(mx, w)) acc += wy * wx * big_bin(fy, fx);
      small[static_cast<size_t>(my * w + mx)] = acc;
    }

  auto out = make_tensor<double>({1, 1, h, w});
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < w; ++j) {
      C acc(0.0L, 0.0L);
      for (int64_t my = 0; my < h; ++my)
        for (int64_t mx = 0; mx < w; ++mx) {
          const long double ph = 2.0L * pi * (static_cast<long double>(my * i) / h +
                                              static_cast<long double>(mx * j) / w);
          acc += small[static_cast<size_t>(my * w + mx)] * C(std::cos(ph), std::sin(ph));
        }
      out->values[i * w + j] = static_cast<double>(acc.real() / static_cast<long double>(H * W));
    }
  return out;
}

bool criterion_degradation(std::string& detail) {
  bool ok = true;
  std::ostringstream os;

  bool const_exact = true;
  for (double level : {0.0, 0.37, 1.0}) {
    auto lr = kspace_truncate(full<double>({1, 1, 32, 32}, level), 4);
    for (double v : lr->values) const_exact &= v == level;
  }
  ok &= const_exact;
  os << "constants " << (const_exact ? "exact" : "BROKEN");

  const double pi = std::numbers::pi;
  const int H = 32, s = 2, h = H / s;
  auto in_band = make_tensor<double>({1, 1, H, H});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < H; ++j)
      in_band->values[i * H + j] =
          0.5 + 0.4 * std::cos(2.0 * pi * 3 * i / H) + 0.2 * std::cos(2.0 * pi * 5 * j / H);
  auto lr_in = kspace_truncate(in_band, s);
  double in_err = 0.0;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < h; ++j) {
      const double want =
          0.5 + 0.4 * std::cos(2.0 * pi * 3 * i / h) + 0.2 * std::cos(2.0 * pi * 5 * j / h);
      in_err = std::max(in_err, std::abs(lr_in->values[i * h + j] - want));
    }
  ok &= in_err <= 1e-9;
  os << ", in-band err " << in_err;

  auto out_band = make_tensor<double>({1, 1, H, H});
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < H; ++j)
      out_band->values[i * H + j] = 0.25 * std::cos(2.0 * pi * 11 * j / H);
  auto lr_out = kspace_truncate(out_band, s);
  double out_err = 0.0;
  for (double v : lr_out->values) out_err = std::max(out_err, std::abs(v));
  ok &= out_err <= 1e-9;
  os << ", out-of-band leak " << out_err;

  Rng rng(301);
  auto a = random_uniform<double>({1, 1, 24, 16}, 0.0, 1.0, rng);
  auto b = random_uniform<double>({1, 1, 24, 16}, 0.0, 1.0, rng);
  auto mixed = make_tensor<double>({1, 1, 24, 16});
  for (int64_t i = 0; i < mixed->size(); ++i)
    mixed->values[i] = 0.7 * a->values[i] - 1.3 * b->values[i];
  auto ta = kspace_truncate(a, 2);
  auto tb = kspace_truncate(b, 2);
  auto tm = kspace_truncate(mixed, 2);
  double lin_err = 0.0;
  for (int64_t i = 0; i < tm->size(); ++i)
    lin_err = std::max(lin_err,
                       std::abs(tm->values[i] - (0.7 * ta->values[i] - 1.3 * tb->values[i])));
  ok &= lin_err <= 1e-9;
  os << ", linearity err " << lin_err;

  auto oracle = truncate_oracle(a, 2);
  double dft_err = 0.0;
  for (int64_t i = 0; i < ta->size(); ++i)
    dft_err = std::max(dft_err, std::abs(ta->values[i] - oracle->values[i]));
  ok &= dft_err <= 1e-9;
  os << ", vs long-double DFT " << dft_err;

  detail = os.str();
  return ok;
}

// --- 4: metric oracle ---------------------------------------------------------

double ssim_reference(const TensorPtr<float>& a, const TensorPtr<float>& b, double range) {
  const int64_t h = a->shape[2], w = a->shape[3];
  const int k = 11, r = 5;
  double kernel[11][11];
  double ksum = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double di = i - r, dj = j - r;
      kernel[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * 1.5 * 1.5));
      ksum += kernel[i][j];
    }
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) kernel[i][j] /= ksum;
  const double c1 = 0.01 * range * 0.01 * range;
  const double c2 = 0.03 * range * 0.03 * range;
  double acc = 0.0;
  int64_t windows = 0;
  for (int64_t y = 0; y + k <= h; ++y)
    for (int64_t x = 0; x + k <= w; ++x) {
      double ma = 0, mb = 0, maa = 0, mbb = 0, mab = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double va = a->values[(y + i) * w + (x + j)];
          const double vb = b->values[(y + i) * w + (x + j)];
          ma += kernel[i][j] * va;
          mb += kernel[i][j] * vb;
          maa += kernel[i][j] * va * va;
          mbb += kernel[i][j] * vb * vb;
          mab += kernel[i][j] * va * vb;
        }
      const double va = maa - ma * ma, vb = mbb - mb * mb, cov = mab - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  return acc / double(windows);
}

bool criterion_metrics(std::string& detail) {
  bool ok = true;
  std::ostringstream os;

  Rng rng(401);
  auto base = random_uniform<double>({1, 1, 16, 16}, 0.2, 0.8, rng);
  const double off_err = std::abs(psnr(base, add_scalar(base, 0.1)) - 20.0);
  ok &= off_err <= 1e-9;
  os << "20 dB case err " << off_err;

  auto fa = random_uniform<float>({1, 1, 16, 16}, 0.0f, 1.0f, rng);
  auto da = random_uniform<double>({1, 1, 20, 13}, -1.0, 3.0, rng);
  const bool self_one = ssim(fa, fa) == 1.0 && ssim(da, da, 4.0) == 1.0;
  ok &= self_one;
  os << ", ssim self " << (self_one ? "exactly 1" : "BROKEN");

  double ssim_err = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int64_t h = 16 + (trial % 3) * 4;
    const int64_t w = 16 + (trial % 2) * 7;
    auto p = random_uniform<float>({1, 1, h, w}, 0.0f, 1.0f, rng);
    TensorPtr<float> q;
    if (trial % 2) {
      q = random_uniform<float>({1, 1, h, w}, 0.0f, 1.0f, rng);
    } else {
      q = clamp01(add(p, random_uniform<float>({1, 1, h, w}, -0.1f, 0.1f, rng)));
    }
    const double range = trial % 3 ? 1.0 : 2.0;
    ssim_err = std::max(ssim_err, std::abs(ssim(p, q, range) - ssim_reference(p, q, range)));
  }
  ok &= ssim_err <= 1e-6;
  os << ", 20-pair ssim max err " << ssim_err;

  detail = os.str();
  return ok;
}

// --- 5: training overfit check ---------------------------------------------------

bool criterion_overfit(std::string& detail) {
  const auto t0 = std::chrono::steady_clock::now();

  PhantomSpec spec;
  spec.size = 64;
  spec.seed = 1;
  auto pairs = make_dataset(10, spec, 4);

  double baseline = 0.0;
  for (const auto& p : pairs) baseline += bicubic_baseline_psnr(p.hr, p.lr);
  baseline /= double(pairs.size());

  ModelConfig mc;
  mc.base_channels = 8;
  mc.scale = 4;
  ECFNet<float> model(mc, 1);

  TrainConfig cfg;
  cfg.adam.lr = 2e-4;
  cfg.epochs = 30;
  cfg.batch_size = 10;
  cfg.holdout = 0;
  cfg.seed = 1;
  AdamState<float> state;
  auto result = train(model, pairs, cfg, state);

  auto records = evaluate(model, pairs, config_hash(RunConfig{}));
  double mean_psnr = 0.0;
  for (const auto& r : records) mean_psnr += r.psnr_db;
  mean_psnr /= double(records.size());

  const double elapsed = seconds_since(t0);
  const double gain = mean_psnr - baseline;
  const bool ok = result.final_step <= 2000 && gain >= 1.0 && elapsed <= 1800.0;

  std::ostringstream os;
  os << "mean training PSNR " << mean_psnr << " dB vs bicubic " << baseline << " dB (+" << gain
     << " dB, threshold +1.0), " << result.final_step << " steps, " << elapsed / 60.0 << " min";
  detail = os.str();
  return ok;
}

// --- 6: ablation harness ----------------------------------------------------------

bool criterion_ablation(std::string& detail) {
  PhantomSpec spec;
  spec.size = 16;
  spec.seed = 300;
  auto pairs = make_dataset(6, spec, 2);

  ModelConfig base = tiny_config();
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 10;
  cfg.holdout = 2;
  cfg.seed = 9;

  auto rows = run_ablation(pairs, base, cfg);
  auto rerun = run_ablation(pairs, base, cfg);

  bool ok = rows.size() == 4;
  std::ostringstream os;
  const char* want_names[] = {"w/o multi-scale feature alignment", "w/o texture transfer",
                              "w/o structure branch", "full"};
  const bool want_flags[4][3] = {
      {false, true, true}, {true, false, true}, {true, true, false}, {true, true, true}};
  for (size_t i = 0; ok && i < rows.size(); ++i) {
    ok &= rows[i].variant == want_names[i];
    ok &= rows[i].alignment == want_flags[i][0];
    ok &= rows[i].texture == want_flags[i][1];
    ok &= rows[i].structure == want_flags[i][2];
    ModelConfig mc = base;
    mc.use_alignment = rows[i].alignment;
    mc.use_texture_transfer = rows[i].texture;
    mc.use_structure_branch = rows[i].structure;
    ok &= rows[i].param_total == param_count(mc);
    ok &= std::isfinite(rows[i].mean_psnr) && rows[i].mean_psnr > 0.0;
    ok &= rows[i].mean_psnr == rerun[i].mean_psnr;
    ok &= rows[i].mean_ssim == rerun[i].mean_ssim;
  }
  if (ok) {
    for (size_t i = 0; i + 1 < rows.size(); ++i)
      ok &= rows[3].param_total > rows[i].param_total;
  }

  os << "4 variants, bookkeeping and param counts exact, re-run bit-identical; held-out PSNR:";
  for (const auto& r : rows) os << " " << (r.variant == "full" ? "full" : r.variant.substr(4))
                                << "=" << r.mean_psnr << " dB";
  os << " (full-vs-ablation ordering reported, not asserted: expected to favor "
        "full only at converged training scale)";
  detail = os.str();
  return ok;
}

// --- 7: determinism and persistence --------------------------------------------------

bool criterion_persistence(std::string& detail) {
  PhantomSpec spec;
  spec.size = 16;
  spec.seed = 500;
  auto pairs = make_dataset(2, spec, 2);

  TrainConfig cfg;
  cfg.adam.lr = 5e-4;
  cfg.epochs = 4;
  cfg.batch_size = 1;
  cfg.holdout = 0;
  cfg.seed = 7;

  bool ok = true;
  std::ostringstream os;

  ECFNet<float> a(tiny_config(), 7), b(tiny_config(), 7);
  AdamState<float> sa, sb;
  auto ra = train(a, pairs, cfg, sa);
  auto rb = train(b, pairs, cfg, sb);
  bool replay = ra.curve.size() == rb.curve.size();
  for (size_t i = 0; replay && i < ra.curve.size(); ++i)
    replay &= ra.curve[i].loss == rb.curve[i].loss && ra.curve[i].step == rb.curve[i].step;
  for (const auto& name : a.params.names()) {
    auto ta = a.params.get(name), tb = b.params.get(name);
    for (int64_t i = 0; replay && i < ta->size(); ++i) replay &= ta->values[i] == tb->values[i];
  }
  ok &= replay;
  os << "same-seed replay " << (replay ? "bit-identical" : "DIVERGED");

  ECFNet<float> half(tiny_config(), 7);
  AdamState<float> sh;
  TrainConfig half_cfg = cfg;
  half_cfg.epochs = 2;
  train(half, pairs, half_cfg, sh);
  auto snap = snapshot(half, sh, cfg.adam, {1, 2, 3, 4}, 4, 2);
  ECFNet<float> resumed(snap.config, 7);
  AdamState<float> sr;
  restore_checkpoint(snap, resumed, sr);
  auto tail = train(resumed, pairs, cfg, sr, 4);
  bool resume_ok = tail.curve.size() == 4 && ra.curve.size() == 8;
  for (size_t i = 0; resume_ok && i < 4; ++i)
    resume_ok &= tail.curve[i].loss == ra.curve[i + 4].loss;
  for (const auto& name : a.params.names()) {
    auto ta = a.params.get(name), tr = resumed.params.get(name);
    for (int64_t i = 0; resume_ok && i < ta->size(); ++i)
      resume_ok &= ta->values[i] == tr->values[i];
  }
  ok &= resume_ok;
  os << ", checkpoint resume " << (resume_ok ? "bit-identical" : "DIVERGED");

  auto dir = scratch_dir();
  const std::string p1 = (dir / "gate_a.ckpt").string();
  const std::string p2 = (dir / "gate_b.ckpt").string();
  save_checkpoint(p1, snap);
  save_checkpoint(p2, load_checkpoint(p1));
  const bool bytes_equal = slurp(p1) == slurp(p2) && !slurp(p1).empty();
  ok &= bytes_equal;
  os << ", save/load/save " << (bytes_equal ? "byte-identical" : "DIVERGED");

  detail = os.str();
  return ok;
}

struct Criterion {
  int id;
  const char* name;
  bool (*run)(std::string&);
};

const Criterion kCriteria[] = {
    {1, "gradient suite", criterion_gradients},
    {2, "degenerate identities", criterion_identities},
    {3, "degradation oracle", criterion_degradation},
    {4, "metric oracle", criterion_metrics},
    {5, "training overfit", criterion_overfit},
    {6, "ablation harness", criterion_ablation},
    {7, "determinism and persistence", criterion_persistence},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> which;
  for (int i = 1; i < argc; ++i) which.push_back(std::atoi(argv[i]));
  if (which.empty())
    for (const auto& c : kCriteria) which.push_back(c.id);

  bool all_ok = true;
  for (int id : which) {
    const Criterion* found = nullptr;
    for (const auto& c : kCriteria)
      if (c.id == id) found = &c;
    if (!found) {
      std::printf("[FAIL] criterion %d: unknown criterion id\n", id);
      all_ok = false;
      continue;
    }
    std::string det;
    bool ok = false;
    try {
      ok = found->run(det);
    } catch (const std::exception& e) {
      det = std::string("exception: ") + e.what();
    }
    std::printf("[%s] criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", found->id, found->name,
                det.c_str());
    std::fflush(stdout);
    all_ok &= ok;
  }
  return all_ok ? 0 : 1;
}
