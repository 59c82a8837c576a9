#pragma once

#include <string>
#include <vector>

#include "ecf/rng.hpp"
#include "ecf/tensor.hpp"

namespace ecf {

// Random layered-ellipse phantom rendered in two contrasts that share
// geometry but draw independent per-region intensities.
struct PhantomSpec {
  int size = 64;  // square output
  int ellipses = 8;
  double blur_sigma = 0.8;
  double noise_sigma = 0.0;
  uint64_t seed = 0;
};

// Returns {target_contrast, reference_contrast}, both [1,1,size,size] in [0,1].
std::pair<TensorPtr<float>, TensorPtr<float>> generate_phantom(const PhantomSpec& spec);

// Simulated acquisition at reduced resolution: centered 2-D DFT, retention of
// the central (H/s x W/s) frequency block, inverse DFT normalized by
// 1/(H*W). A constant image stays exactly constant. Output Nyquist rows and
// columns average the +/- input Nyquist frequencies with weight 1/2 each
// (1/4 at the shared corner), which keeps real inputs exactly real.
template <typename S>
TensorPtr<S> kspace_truncate(const TensorPtr<S>& x, int s);

// Adjoint-style inverse of the truncation: forward DFT at the small size,
// zero-padded embedding into the s-times-larger frequency grid (Nyquist bins
// split half/half onto +/- frequencies), inverse DFT normalized by
// 1/(H*W) of the small grid. Signals whose spectrum lies strictly inside the
// retained band round-trip through kspace_truncate followed by this exactly
// (up to double-precision FFT error).
template <typename S>
TensorPtr<S> kspace_zeropad_upsample(const TensorPtr<S>& x, int s);

struct ImagePair {
  TensorPtr<float> hr;   // target contrast, full resolution
  TensorPtr<float> lr;   // k-space truncated target contrast
  TensorPtr<float> ref;  // reference contrast, full resolution
  int scale = 4;
  uint64_t seed = 0;
};

// Generates `count` pairs; pair i uses spec.seed + i.
std::vector<ImagePair> make_dataset(int count, const PhantomSpec& spec, int scale);

// --- image files ---------------------------------------------------------------

// Raw float image: magic "ECF1", u32 height, u32 width (little-endian),
// then height*width float32 little-endian row-major samples.
void write_image_raw(const std::string& path, const TensorPtr<float>& img);
TensorPtr<float> read_image_raw(const std::string& path);

// 16-bit grayscale PNG; values are clamped to [0,1] and quantized.
void write_image_png16(const std::string& path, const TensorPtr<float>& img);
TensorPtr<float> read_image_png16(const std::string& path);

// --- dataset manifest -------------------------------------------------------------

// One dataset pair. Paths are relative to the manifest file and may point at
// "ECF1" raw floats or 16-bit grayscale PNGs (selected by extension), so
// externally prepared registered pairs can be fed through the same loader.
// The low-res input is always recomputed as kspace_truncate(hr, scale).
struct ManifestEntry {
  std::string hr_path, ref_path;
  uint64_t seed = 0;
};

struct DatasetManifest {
  int scale = 4;
  int size = 64;
  PhantomSpec phantom;
  std::vector<ManifestEntry> entries;
  std::vector<double> baseline_psnr;  // bicubic baseline per pair
  double baseline_psnr_mean = 0.0;
};

void save_manifest(const std::string& path, const DatasetManifest& m);
DatasetManifest load_manifest(const std::string& path);

// Loads the raw images referenced by a manifest (paths resolved against the
// manifest's directory).
std::vector<ImagePair> load_pairs(const DatasetManifest& m, const std::string& manifest_path);

}  // namespace ecf
