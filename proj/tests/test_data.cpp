#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <vector>

#include "ecf/data.hpp"
#include "ecf/operators.hpp"

using namespace ecf;

namespace {

std::filesystem::path scratch_dir() {
  auto p = std::filesystem::temp_directory_path() / "ecf_data_tests";
  std::filesystem::create_directories(p);
  return p;
}

double pearson(const std::vector<float>& a, const std::vector<float>& b) {
  const size_t n = a.size();
  double ma = 0, mb = 0;
  for (size_t i = 0; i < n; ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= double(n);
  mb /= double(n);
  double num = 0, va = 0, vb = 0;
  for (size_t i = 0; i < n; ++i) {
    num += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return num / std::sqrt(va * vb);
}

// Band-limited test image: constant plus separable cosines below the
// retained band edge, so truncation and zero-padded upsampling must act as
// exact decimation / interpolation on it.
TensorPtr<double> bandlimited_image(int h, int w, int s) {
  auto x = make_tensor<double>({1, 1, h, w});
  const int kmax_y = h / (2 * s) - 1;
  const int kmax_x = w / (2 * s) - 1;
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double ti = 2.0 * std::numbers::pi * i / h;
      const double tj = 2.0 * std::numbers::pi * j / w;
      x->values[i * w + j] = 0.5 + 0.21 * std::cos(kmax_y * ti) * std::cos(tj) +
                             0.13 * std::sin(2.0 * tj * kmax_x / 2) + 0.07 * std::cos(ti);
    }
  return x;
}

}  // namespace

TEST_SUITE("data") {
  TEST_CASE("phantoms are deterministic in the seed and live in the unit range") {
    PhantomSpec spec;
    spec.size = 32;
    spec.seed = 5;
    auto [hr1, ref1] = generate_phantom(spec);
    auto [hr2, ref2] = generate_phantom(spec);
    CHECK(hr1->shape == std::vector<int64_t>{1, 1, 32, 32});
    for (int64_t i = 0; i < hr1->size(); ++i) {
      CHECK(hr1->values[i] == hr2->values[i]);
      CHECK(ref1->values[i] == ref2->values[i]);
      CHECK(hr1->values[i] >= 0.0f);
      CHECK(hr1->values[i] <= 1.0f);
      CHECK(ref1->values[i] >= 0.0f);
      CHECK(ref1->values[i] <= 1.0f);
    }
    spec.seed = 6;
    auto [hr3, ref3] = generate_phantom(spec);
    double diff = 0;
    for (int64_t i = 0; i < hr1->size(); ++i) diff += std::abs(hr1->values[i] - hr3->values[i]);
    CHECK(diff > 0.1);
  }

  TEST_CASE("the two contrasts share geometry but not intensities") {
    PhantomSpec spec;
    spec.size = 48;
    spec.seed = 11;
    auto [hr, ref] = generate_phantom(spec);
    double diff = 0;
    for (int64_t i = 0; i < hr->size(); ++i) diff += std::abs(hr->values[i] - ref->values[i]);
    CHECK(diff / double(hr->size()) > 0.02);
    auto eh = sobel_edge_map(hr);
    auto er = sobel_edge_map(ref);
    CHECK(pearson(eh->values, er->values) > 0.25);
  }

  TEST_CASE("k-space truncation keeps constants exactly constant") {
    for (double level : {0.0, 0.37, 1.0}) {
      auto img = full<double>({1, 1, 32, 32}, level);
      auto lr = kspace_truncate(img, 4);
      CHECK(lr->shape == std::vector<int64_t>{1, 1, 8, 8});
      for (double v : lr->values) CHECK(v == level);
    }
  }

  TEST_CASE("in-band cosines decimate exactly, out-of-band cosines vanish") {
    const int H = 32, s = 2, h = H / s;
    const double pi = std::numbers::pi;
    // k = 3 < h/2 = 8: survives as the same cosine on the coarse grid.
    auto in_band = make_tensor<double>({1, 1, H, H});
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < H; ++j)
        in_band->values[i * H + j] = 0.5 + 0.4 * std::cos(2.0 * pi * 3 * i / H);
    auto lr = kspace_truncate(in_band, s);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < h; ++j)
        CHECK(lr->values[i * h + j] ==
              doctest::Approx(0.5 + 0.4 * std::cos(2.0 * pi * 3 * i / h)).epsilon(1e-9));
    // k = 11 lies between the retained band edge (8) and input Nyquist (16):
    // truncation must remove it entirely.
    auto out_band = make_tensor<double>({1, 1, H, H});
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < H; ++j)
        out_band->values[i * H + j] = 0.25 * std::cos(2.0 * pi * 11 * j / H);
    auto gone = kspace_truncate(out_band, s);
    for (double v : gone->values) CHECK(std::abs(v) < 1e-9);
  }

  TEST_CASE("k-space truncation is linear") {
    Rng rng(81);
    auto x = random_uniform<double>({1, 1, 24, 16}, 0.0, 1.0, rng);
    auto y = random_uniform<double>({1, 1, 24, 16}, 0.0, 1.0, rng);
    const double a = 0.7, b = -1.3;
    auto mixed = make_tensor<double>({1, 1, 24, 16});
    for (int64_t i = 0; i < mixed->size(); ++i)
      mixed->values[i] = a * x->values[i] + b * y->values[i];
    auto tm = kspace_truncate(mixed, 2);
    auto tx = kspace_truncate(x, 2);
    auto ty = kspace_truncate(y, 2);
    for (int64_t i = 0; i < tm->size(); ++i)
      CHECK(tm->values[i] ==
            doctest::Approx(a * tx->values[i] + b * ty->values[i]).epsilon(1e-9));
  }

  TEST_CASE("band-limited images round-trip through truncate and upsample") {
    const int H = 32, s = 2;
    auto x = bandlimited_image(H, H, s);
    auto small = kspace_truncate(x, s);
    auto back = kspace_zeropad_upsample(small, s);
    REQUIRE(back->shape == x->shape);
    for (int64_t i = 0; i < x->size(); ++i)
      CHECK(back->values[i] == doctest::Approx(x->values[i]).epsilon(1e-9));
    // The decimated image must equal the analytic samples on the coarse grid.
    const int h = H / s;
    const int kmax = H / (2 * s) - 1;
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < h; ++j) {
        const double ti = 2.0 * std::numbers::pi * i / h;
        const double tj = 2.0 * std::numbers::pi * j / h;
        const double want = 0.5 + 0.21 * std::cos(kmax * ti) * std::cos(tj) +
                            0.13 * std::sin(2.0 * tj * kmax / 2) + 0.07 * std::cos(ti);
        CHECK(small->values[i * h + j] == doctest::Approx(want).epsilon(1e-9));
      }
  }

  TEST_CASE("make_dataset wires seeds and recomputes lr from hr") {
    PhantomSpec spec;
    spec.size = 32;
    spec.seed = 100;
    auto ds = make_dataset(3, spec, 2);
    REQUIRE(ds.size() == 3);
    for (int i = 0; i < 3; ++i) {
      CHECK(ds[i].seed == 100 + uint64_t(i));
      CHECK(ds[i].scale == 2);
      CHECK(ds[i].hr->shape == std::vector<int64_t>{1, 1, 32, 32});
      CHECK(ds[i].lr->shape == std::vector<int64_t>{1, 1, 16, 16});
      auto want_lr = kspace_truncate(ds[i].hr, 2);
      for (int64_t k = 0; k < want_lr->size(); ++k)
        CHECK(ds[i].lr->values[k] == want_lr->values[k]);
      PhantomSpec si = spec;
      si.seed = spec.seed + uint64_t(i);
      auto [hr, ref] = generate_phantom(si);
      for (int64_t k = 0; k < hr->size(); ++k) {
        CHECK(ds[i].hr->values[k] == hr->values[k]);
        CHECK(ds[i].ref->values[k] == ref->values[k]);
      }
    }
  }

  TEST_CASE("raw image files round-trip bit for bit") {
    auto dir = scratch_dir();
    Rng rng(82);
    auto img = random_uniform<float>({1, 1, 9, 13}, -2.0f, 2.0f, rng);
    const std::string path = (dir / "roundtrip.raw").string();
    write_image_raw(path, img);
    auto back = read_image_raw(path);
    REQUIRE(back->shape == img->shape);
    for (int64_t i = 0; i < img->size(); ++i) CHECK(back->values[i] == img->values[i]);
    CHECK_THROWS_AS(read_image_raw((dir / "missing.raw").string()), IoError);
    const std::string bad = (dir / "bad.raw").string();
    std::FILE* f = std::fopen(bad.c_str(), "wb");
    std::fputs("NOTECF__", f);
    std::fclose(f);
    CHECK_THROWS_AS(read_image_raw(bad), IoError);
  }

  TEST_CASE("png16 files quantize to at most half a step") {
    auto dir = scratch_dir();
    Rng rng(83);
    auto img = random_uniform<float>({1, 1, 16, 16}, 0.0f, 1.0f, rng);
    const std::string path = (dir / "img.png").string();
    write_image_png16(path, img);
    auto back = read_image_png16(path);
    REQUIRE(back->shape == img->shape);
    for (int64_t i = 0; i < img->size(); ++i)
      CHECK(std::abs(back->values[i] - img->values[i]) <= 0.5f / 65535.0f + 1e-7f);
    auto wild = make_tensor<float>({1, 1, 2, 2}, {-0.5f, 0.0f, 1.0f, 1.5f});
    write_image_png16(path, wild);
    auto clamped = read_image_png16(path);
    CHECK(clamped->values[0] == 0.0f);
    CHECK(clamped->values[3] == 1.0f);
  }

  TEST_CASE("manifests round-trip every field") {
    auto dir = scratch_dir();
    DatasetManifest m;
    m.scale = 2;
    m.size = 32;
    m.phantom.size = 32;
    m.phantom.ellipses = 5;
    m.phantom.blur_sigma = 0.9;
    m.phantom.noise_sigma = 0.01;
    m.phantom.seed = 42;
    m.entries = {{"pair_000_hr.raw", "pair_000_ref.raw", 42},
                 {"pair_001_hr.raw", "pair_001_ref.raw", 43}};
    m.baseline_psnr = {21.5, 22.25};
    m.baseline_psnr_mean = 21.875;
    const std::string path = (dir / "manifest.json").string();
    save_manifest(path, m);
    auto got = load_manifest(path);
    CHECK(got.scale == m.scale);
    CHECK(got.size == m.size);
    CHECK(got.phantom.ellipses == m.phantom.ellipses);
    CHECK(got.phantom.blur_sigma == m.phantom.blur_sigma);
    CHECK(got.phantom.noise_sigma == m.phantom.noise_sigma);
    CHECK(got.phantom.seed == m.phantom.seed);
    REQUIRE(got.entries.size() == 2);
    CHECK(got.entries[1].hr_path == "pair_001_hr.raw");
    CHECK(got.entries[1].ref_path == "pair_001_ref.raw");
    CHECK(got.entries[1].seed == 43);
    REQUIRE(got.baseline_psnr.size() == 2);
    CHECK(got.baseline_psnr[0] == m.baseline_psnr[0]);
    CHECK(got.baseline_psnr_mean == m.baseline_psnr_mean);
  }

  TEST_CASE("load_pairs resolves paths and rebuilds lr by truncation") {
    auto dir = scratch_dir() / "set";
    std::filesystem::create_directories(dir);
    PhantomSpec spec;
    spec.size = 32;
    spec.seed = 7;
    auto ds = make_dataset(2, spec, 2);
    DatasetManifest m;
    m.scale = 2;
    m.size = 32;
    m.phantom = spec;
    for (int i = 0; i < 2; ++i) {
      const std::string hr = "p" + std::to_string(i) + "_hr.raw";
      const std::string ref = "p" + std::to_string(i) + "_ref.raw";
      write_image_raw((dir / hr).string(), ds[i].hr);
      write_image_raw((dir / ref).string(), ds[i].ref);
      m.entries.push_back({hr, ref, ds[i].seed});
    }
    const std::string path = (dir / "manifest.json").string();
    save_manifest(path, m);
    auto loaded = load_pairs(load_manifest(path), path);
    REQUIRE(loaded.size() == 2);
    for (int i = 0; i < 2; ++i) {
      for (int64_t k = 0; k < ds[i].hr->size(); ++k) {
        CHECK(loaded[i].hr->values[k] == ds[i].hr->values[k]);
        CHECK(loaded[i].ref->values[k] == ds[i].ref->values[k]);
      }
      for (int64_t k = 0; k < ds[i].lr->size(); ++k)
        CHECK(loaded[i].lr->values[k] == ds[i].lr->values[k]);
    }
  }
}
