#pragma once

#include <string>
#include <vector>

#include "ecf/tensor.hpp"

namespace ecf {

// Peak signal-to-noise ratio in dB, 10*log10(range^2 / MSE), accumulated in
// double regardless of the tensor scalar type. Identical images (MSE = 0)
// report the 100 dB cap; everything is capped there so the value stays
// finite in CSV/JSON output.
template <typename S>
double psnr(const TensorPtr<S>& a, const TensorPtr<S>& b, double data_range = 1.0);

// Mean structural similarity over valid 11x11 windows with a Gaussian
// weighting of sigma 1.5 and stabilizers C1 = (0.01*range)^2,
// C2 = (0.03*range)^2. Inputs must be single images [1,1,H,W] with H,W >= 11.
template <typename S>
double ssim(const TensorPtr<S>& a, const TensorPtr<S>& b, double data_range = 1.0);

// Pixelwise |sr - hr| rescaled so `cap` maps to white: clamp(|d|/cap, 0, 1).
// The fixed cap keeps maps comparable across images.
TensorPtr<float> error_map(const TensorPtr<float>& sr, const TensorPtr<float>& hr,
                           double cap = 0.2);

// PSNR of the clamped bicubic upsampling of lr against hr; the scale is
// inferred from the shapes. This is the reference point super-resolution has
// to beat.
double bicubic_baseline_psnr(const TensorPtr<float>& hr, const TensorPtr<float>& lr);

struct MetricRecord {
  std::string image_id;
  int scale = 0;
  double psnr_db = 0.0;
  double ssim_val = 0.0;
  std::string config_hash;
};

// CSV with header image_id,scale,psnr_db,ssim,config_hash; a final "mean"
// row averages psnr and ssim over the given records.
void write_metric_csv(const std::string& path, const std::vector<MetricRecord>& records);

// JSON object with the per-image records plus mean_psnr_db / mean_ssim.
void write_metric_json(const std::string& path, const std::vector<MetricRecord>& records);

}  // namespace ecf
