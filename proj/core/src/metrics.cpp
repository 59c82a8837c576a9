#include "ecf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

#include "ecf/common.hpp"
#include "ecf/ops.hpp"

namespace ecf {

template <typename S>
double psnr(const TensorPtr<S>& a, const TensorPtr<S>& b, double data_range) {
  check(a->same_shape(*b), "psnr: shapes differ, " + shape_str(a->shape) + " vs " +
                               shape_str(b->shape));
  check<ConfigError>(data_range > 0.0, "psnr: data_range must be positive");
  double acc = 0.0;
  for (int64_t i = 0; i < a->size(); ++i) {
    const double d = static_cast<double>(a->values[static_cast<size_t>(i)]) -
                     static_cast<double>(b->values[static_cast<size_t>(i)]);
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a->size());
  if (mse <= 0.0) return 100.0;
  return std::min(100.0, 10.0 * std::log10(data_range * data_range / mse));
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

// Valid-mode separable Gaussian filter; `img` is H*W row-major.
std::vector<double> gaussian_valid(const std::vector<double>& img, int64_t h, int64_t w) {
  double kernel[kWindow];
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - (kWindow - 1) / 2;
    kernel[i] = std::exp(-0.5 * x * x / (kSigma * kSigma));
    sum += kernel[i];
  }
  for (double& v : kernel) v /= sum;

  const int64_t vw = w - kWindow + 1;
  const int64_t vh = h - kWindow + 1;
  std::vector<double> rows(static_cast<size_t>(h * vw));
  for (int64_t i = 0; i < h; ++i)
    for (int64_t j = 0; j < vw; ++j) {
      double acc = 0.0;
      for (int t = 0; t < kWindow; ++t) acc += kernel[t] * img[static_cast<size_t>(i * w + j + t)];
      rows[static_cast<size_t>(i * vw + j)] = acc;
    }
  std::vector<double> out(static_cast<size_t>(vh * vw));
  for (int64_t i = 0; i < vh; ++i)
    for (int64_t j = 0; j < vw; ++j) {
      double acc = 0.0;
      for (int t = 0; t < kWindow; ++t) acc += kernel[t] * rows[static_cast<size_t>((i + t) * vw + j)];
      out[static_cast<size_t>(i * vw + j)] = acc;
    }
  return out;
}

}  // namespace

template <typename S>
double ssim(const TensorPtr<S>& a, const TensorPtr<S>& b, double data_range) {
  check(a->shape.size() == 4 && a->shape[0] == 1 && a->shape[1] == 1,
        "ssim expects a [1,1,H,W] image");
  check(a->same_shape(*b), "ssim: shapes differ, " + shape_str(a->shape) + " vs " +
                               shape_str(b->shape));
  check<ConfigError>(data_range > 0.0, "ssim: data_range must be positive");
  const int64_t h = a->shape[2], w = a->shape[3];
  check(h >= kWindow && w >= kWindow, "ssim needs images of at least 11x11");

  const size_t n = static_cast<size_t>(h * w);
  std::vector<double> xa(n), xb(n), xaa(n), xbb(n), xab(n);
  for (size_t i = 0; i < n; ++i) {
    const double va = static_cast<double>(a->values[i]);
    const double vb = static_cast<double>(b->values[i]);
    xa[i] = va;
    xb[i] = vb;
    xaa[i] = va * va;
    xbb[i] = vb * vb;
    xab[i] = va * vb;
  }
  const auto mu_a = gaussian_valid(xa, h, w);
  const auto mu_b = gaussian_valid(xb, h, w);
  const auto m_aa = gaussian_valid(xaa, h, w);
  const auto m_bb = gaussian_valid(xbb, h, w);
  const auto m_ab = gaussian_valid(xab, h, w);

  const double c1 = (0.01 * data_range) * (0.01 * data_range);
  const double c2 = (0.03 * data_range) * (0.03 * data_range);
  double acc = 0.0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = m_aa[i] - ma * ma;
    const double vb = m_bb[i] - mb * mb;
    const double cov = m_ab[i] - ma * mb;
    const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
    const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
    acc += num / den;
  }
  return acc / static_cast<double>(mu_a.size());
}

template double psnr(const TensorPtr<float>&, const TensorPtr<float>&, double);
template double psnr(const TensorPtr<double>&, const TensorPtr<double>&, double);
template double ssim(const TensorPtr<float>&, const TensorPtr<float>&, double);
template double ssim(const TensorPtr<double>&, const TensorPtr<double>&, double);

TensorPtr<float> error_map(const TensorPtr<float>& sr, const TensorPtr<float>& hr, double cap) {
  check(sr->same_shape(*hr), "error_map: shapes differ");
  check<ConfigError>(cap > 0.0, "error_map: cap must be positive");
  auto out = make_tensor<float>(sr->shape);
  for (int64_t i = 0; i < sr->size(); ++i) {
    const double d = std::abs(static_cast<double>(sr->values[static_cast<size_t>(i)]) -
                              static_cast<double>(hr->values[static_cast<size_t>(i)]));
    out->values[static_cast<size_t>(i)] = static_cast<float>(std::min(d / cap, 1.0));
  }
  return out;
}

double bicubic_baseline_psnr(const TensorPtr<float>& hr, const TensorPtr<float>& lr) {
  check(hr->shape.size() == 4 && lr->shape.size() == 4, "bicubic_baseline_psnr expects [N,C,H,W]");
  check(hr->shape[2] % lr->shape[2] == 0 && hr->shape[3] % lr->shape[3] == 0 &&
            hr->shape[2] / lr->shape[2] == hr->shape[3] / lr->shape[3],
        "bicubic_baseline_psnr: hr size must be an integer multiple of lr size");
  auto up = clamp01(resize_bicubic(lr, hr->shape[2], hr->shape[3]));
  return psnr(up, hr);
}

namespace {

std::string fmt_metric(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void mean_over(const std::vector<MetricRecord>& records, double& psnr_out, double& ssim_out) {
  double ps = 0.0, ss = 0.0;
  for (const auto& r : records) {
    ps += r.psnr_db;
    ss += r.ssim_val;
  }
  const double n = records.empty() ? 1.0 : static_cast<double>(records.size());
  psnr_out = ps / n;
  ssim_out = ss / n;
}

}  // namespace

void write_metric_csv(const std::string& path, const std::vector<MetricRecord>& records) {
  std::ofstream os(path);
  check<IoError>(os.good(), "cannot open for writing: " + path);
  os << "image_id,scale,psnr_db,ssim,config_hash\n";
  for (const auto& r : records)
    os << r.image_id << "," << r.scale << "," << fmt_metric(r.psnr_db) << ","
       << fmt_metric(r.ssim_val) << "," << r.config_hash << "\n";
  if (!records.empty()) {
    double mp = 0.0, ms = 0.0;
    mean_over(records, mp, ms);
    os << "mean," << records.front().scale << "," << fmt_metric(mp) << "," << fmt_metric(ms) << ","
       << records.front().config_hash << "\n";
  }
  check<IoError>(os.good(), "short write: " + path);
}

void write_metric_json(const std::string& path, const std::vector<MetricRecord>& records) {
  nlohmann::json j;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records)
    rows.push_back({{"image_id", r.image_id},
                    {"scale", r.scale},
                    {"psnr_db", r.psnr_db},
                    {"ssim", r.ssim_val},
                    {"config_hash", r.config_hash}});
  j["records"] = rows;
  double mp = 0.0, ms = 0.0;
  mean_over(records, mp, ms);
  j["mean_psnr_db"] = mp;
  j["mean_ssim"] = ms;
  if (!records.empty()) j["config_hash"] = records.front().config_hash;
  std::ofstream os(path);
  check<IoError>(os.good(), "cannot open for writing: " + path);
  os << j.dump(2) << "\n";
  check<IoError>(os.good(), "short write: " + path);
}

}  // namespace ecf
