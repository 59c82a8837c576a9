#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <vector>

#include "ecf/metrics.hpp"
#include "ecf/ops.hpp"

using namespace ecf;

namespace {

std::filesystem::path scratch_dir() {
  auto p = std::filesystem::temp_directory_path() / "ecf_metric_tests";
  std::filesystem::create_directories(p);
  return p;
}

double psnr_oracle(const std::vector<double>& a, const std::vector<double>& b, double range) {
  long double acc = 0.0L;
  for (size_t i = 0; i < a.size(); ++i) {
    const long double d = static_cast<long double>(a[i]) - static_cast<long double>(b[i]);
    acc += d * d;
  }
  const double mse = static_cast<double>(acc / static_cast<long double>(a.size()));
  if (mse == 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(range * range / mse));
}

// Direct 2-D weighted-window SSIM, no separability tricks, kept deliberately
// independent of the library implementation.
double ssim_oracle(const TensorPtr<float>& a, const TensorPtr<float>& b, double range) {
  const int64_t h = a->shape[2], w = a->shape[3];
  const int k = 11, r = 5;
  const double sigma = 1.5;
  double kernel[11][11];
  double ksum = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double di = i - r, dj = j - r;
      kernel[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
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
          const double wt = kernel[i][j];
          ma += wt * va;
          mb += wt * vb;
          maa += wt * va * va;
          mbb += wt * vb * vb;
          mab += wt * va * vb;
        }
      const double va = maa - ma * ma, vb = mbb - mb * mb, cov = mab - ma * mb;
      acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++windows;
    }
  return acc / double(windows);
}

}  // namespace

TEST_SUITE("metrics") {
  TEST_CASE("a uniform 0.1 offset gives exactly 20 dB") {
    Rng rng(91);
    auto a = random_uniform<double>({1, 1, 16, 16}, 0.2, 0.8, rng);
    auto b = add_scalar(a, 0.1);
    CHECK(std::abs(psnr(a, b) - 20.0) <= 1e-9);
  }

  TEST_CASE("psnr matches an extended-precision oracle on random pairs") {
    Rng rng(92);
    for (int trial = 0; trial < 10; ++trial) {
      auto a = random_uniform<double>({1, 1, 12, 9}, 0.0, 1.0, rng);
      auto b = random_uniform<double>({1, 1, 12, 9}, 0.0, 1.0, rng);
      const double range = trial % 2 ? 2.0 : 1.0;
      CHECK(psnr(a, b, range) ==
            doctest::Approx(psnr_oracle(a->values, b->values, range)).epsilon(1e-12));
      CHECK(psnr(a, b, range) == psnr(b, a, range));
    }
  }

  TEST_CASE("identical and near-identical images hit the 100 dB cap") {
    Rng rng(93);
    auto a = random_uniform<float>({1, 1, 8, 8}, 0.0, 1.0, rng);
    CHECK(psnr(a, a) == 100.0);
    auto d = random_uniform<double>({1, 1, 8, 8}, 0.0, 1.0, rng);
    auto d2 = make_tensor<double>(d->shape, d->values);
    d2->values[5] += 1e-40;
    CHECK(psnr(d, d2) == 100.0);
  }

  TEST_CASE("ssim of an image with itself is exactly one") {
    Rng rng(94);
    auto a = random_uniform<float>({1, 1, 16, 16}, 0.0, 1.0, rng);
    CHECK(ssim(a, a) == 1.0);
    auto d = random_uniform<double>({1, 1, 20, 13}, -1.0, 3.0, rng);
    CHECK(ssim(d, d, 4.0) == 1.0);
  }

  TEST_CASE("ssim agrees with an independent windowed reference") {
    Rng rng(95);
    for (int trial = 0; trial < 20; ++trial) {
      const int64_t h = 16 + (trial % 3) * 4;
      const int64_t w = 16 + (trial % 2) * 7;
      auto a = random_uniform<float>({1, 1, h, w}, 0.0f, 1.0f, rng);
      TensorPtr<float> b;
      if (trial % 2) {
        b = random_uniform<float>({1, 1, h, w}, 0.0f, 1.0f, rng);
      } else {
        auto noise = random_uniform<float>({1, 1, h, w}, -0.1f, 0.1f, rng);
        b = clamp01(add(a, noise));
      }
      const double range = trial % 3 ? 1.0 : 2.0;
      CHECK(std::abs(ssim(a, b, range) - ssim_oracle(a, b, range)) <= 1e-6);
      CHECK(ssim(a, b, range) == ssim(b, a, range));
    }
  }

  TEST_CASE("ssim penalizes luminance shifts and rejects bad shapes") {
    Rng rng(96);
    auto a = random_uniform<float>({1, 1, 16, 16}, 0.2f, 0.6f, rng);
    auto shifted = add_scalar(a, 0.3f);
    const double s = ssim(a, shifted);
    CHECK(s < 1.0);
    CHECK(s > 0.0);
    CHECK_THROWS_AS(ssim(a, random_uniform<float>({1, 1, 16, 15}, 0.0f, 1.0f, rng)), ShapeError);
    auto tiny = full<float>({1, 1, 8, 8}, 0.5f);
    CHECK_THROWS_AS(ssim(tiny, tiny), ShapeError);
    auto batch = full<float>({2, 1, 16, 16}, 0.5f);
    CHECK_THROWS_AS(ssim(batch, batch), ShapeError);
  }

  TEST_CASE("error maps rescale the absolute difference against a fixed cap") {
    auto hr = make_tensor<float>({1, 1, 2, 2}, {0.5f, 0.5f, 0.5f, 0.5f});
    auto sr = make_tensor<float>({1, 1, 2, 2}, {0.5f, 0.6f, 0.7f, 1.0f});
    auto m = error_map(sr, hr);
    CHECK(m->values[0] == doctest::Approx(0.0));
    CHECK(m->values[1] == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(m->values[2] == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(m->values[3] == 1.0f);
    auto wide = error_map(sr, hr, 0.5);
    CHECK(wide->values[3] == doctest::Approx(1.0));
    CHECK(wide->values[1] == doctest::Approx(0.2).epsilon(1e-6));
    CHECK_THROWS_AS(error_map(sr, hr, 0.0), ConfigError);
  }

  TEST_CASE("the bicubic baseline is the psnr of the clamped bicubic upsample") {
    Rng rng(97);
    auto hr = random_uniform<float>({1, 1, 16, 16}, 0.0f, 1.0f, rng);
    auto lr = random_uniform<float>({1, 1, 8, 8}, 0.0f, 1.0f, rng);
    const double got = bicubic_baseline_psnr(hr, lr);
    const double want = psnr(clamp01(resize_bicubic(lr, 16, 16)), hr);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }

  TEST_CASE("metric tables round-trip through csv and json") {
    auto dir = scratch_dir();
    std::vector<MetricRecord> recs = {{"pair_000", 4, 21.5, 0.8125, "abcd1234abcd1234"},
                                      {"pair_001", 4, 23.5, 0.9375, "abcd1234abcd1234"}};
    const std::string csv = (dir / "metrics.csv").string();
    write_metric_csv(csv, recs);
    std::ifstream in(csv);
    std::string header, row0, row1, mean_row;
    std::getline(in, header);
    std::getline(in, row0);
    std::getline(in, row1);
    std::getline(in, mean_row);
    CHECK(header == "image_id,scale,psnr_db,ssim,config_hash");
    CHECK(row0.rfind("pair_000,4,", 0) == 0);
    CHECK(row1.rfind("pair_001,4,", 0) == 0);
    CHECK(mean_row.rfind("mean,", 0) == 0);
    CHECK(mean_row.find("22.5") != std::string::npos);
    CHECK(mean_row.find("0.875") != std::string::npos);

    const std::string js = (dir / "metrics.json").string();
    write_metric_json(js, recs);
    std::ifstream jin(js);
    nlohmann::json j = nlohmann::json::parse(jin);
    REQUIRE(j.contains("records"));
    REQUIRE(j["records"].size() == 2);
    CHECK(j["records"][0]["image_id"] == "pair_000");
    CHECK(j["records"][1]["psnr_db"].get<double>() == doctest::Approx(23.5));
    CHECK(j["mean_psnr_db"].get<double>() == doctest::Approx(22.5));
    CHECK(j["mean_ssim"].get<double>() == doctest::Approx(0.875));
  }
}
