#include "ecf/data.hpp"

#include <fftw3.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>

#include <nlohmann/json.hpp>

#include "ecf/common.hpp"

namespace ecf {

namespace {

void gaussian_blur_inplace(std::vector<double>& img, int size, double sigma) {
  if (sigma <= 0.0) return;
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * (i * i) / (sigma * sigma));
    kernel[static_cast<size_t>(i + radius)] = v;
    sum += v;
  }
  for (auto& v : kernel) v /= sum;

  std::vector<double> tmp(img.size());
  auto clampi = [size](int v) { return std::clamp(v, 0, size - 1); };
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t)
        acc += kernel[static_cast<size_t>(t + radius)] * img[static_cast<size_t>(i * size + clampi(j + t))];
      tmp[static_cast<size_t>(i * size + j)] = acc;
    }
  }
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      double acc = 0.0;
      for (int t = -radius; t <= radius; ++t)
        acc += kernel[static_cast<size_t>(t + radius)] * tmp[static_cast<size_t>(clampi(i + t) * size + j)];
      img[static_cast<size_t>(i * size + j)] = acc;
    }
  }
}

}  // namespace

namespace {

struct Ellipse {
  double cx, cy, ax, ay, theta;
  double it, ir;  // tissue intensity in the target and reference contrast
};

// The reference contrast must stay informative rather than a recolored copy:
// some pair of tissues has to flip its brightness ordering between the two
// contrasts. Random draws almost always satisfy this; the repair below makes
// it a guarantee without disturbing the draw sequence.
void ensure_discordant_pair(std::vector<Ellipse>& es) {
  if (es.size() < 2) return;
  auto discordant = [&es]() {
    for (size_t a = 0; a < es.size(); ++a)
      for (size_t b = a + 1; b < es.size(); ++b) {
        const double dt = es[a].it - es[b].it;
        const double dr = es[a].ir - es[b].ir;
        if ((dt < 0 && dr > 0) || (dt > 0 && dr < 0)) return true;
      }
    return false;
  };
  if (discordant()) return;
  size_t lo = 0, hi = 0;
  for (size_t e = 1; e < es.size(); ++e) {
    if (es[e].it < es[lo].it) lo = e;
    if (es[e].it > es[hi].it) hi = e;
  }
  std::swap(es[lo].ir, es[hi].ir);
  if (discordant()) return;
  es[lo].it = 0.2;
  es[lo].ir = 0.8;
  es[hi].it = 0.8;
  es[hi].ir = 0.2;
}

}  // namespace

std::pair<TensorPtr<float>, TensorPtr<float>> generate_phantom(const PhantomSpec& spec) {
  check<ConfigError>(spec.size >= 8, "phantom size must be at least 8");
  check<ConfigError>(spec.ellipses >= 1, "phantom needs at least one ellipse");
  Rng rng = Rng(spec.seed).substream("phantom");

  const int n = spec.size;
  std::vector<double> target(static_cast<size_t>(n * n));
  std::vector<double> reference(static_cast<size_t>(n * n));
  const double bg_t = rng.uniform(0.02, 0.12);
  const double bg_r = rng.uniform(0.02, 0.12);
  std::fill(target.begin(), target.end(), bg_t);
  std::fill(reference.begin(), reference.end(), bg_r);

  std::vector<Ellipse> ellipses(static_cast<size_t>(spec.ellipses));
  for (auto& e : ellipses) {
    e.cx = rng.uniform(0.25, 0.75);
    e.cy = rng.uniform(0.25, 0.75);
    e.ax = rng.uniform(0.08, 0.35);
    e.ay = rng.uniform(0.08, 0.35);
    e.theta = rng.uniform(0.0, 3.14159265358979323846);
    e.it = rng.uniform(0.15, 0.95);
    e.ir = rng.uniform(0.15, 0.95);
  }
  ensure_discordant_pair(ellipses);

  for (const auto& e : ellipses) {
    const double ct = std::cos(e.theta), st = std::sin(e.theta);
    for (int i = 0; i < n; ++i) {
      const double y = (i + 0.5) / n - e.cy;
      for (int j = 0; j < n; ++j) {
        const double x = (j + 0.5) / n - e.cx;
        const double u = (x * ct + y * st) / e.ax;
        const double v = (-x * st + y * ct) / e.ay;
        if (u * u + v * v <= 1.0) {
          target[static_cast<size_t>(i * n + j)] = e.it;
          reference[static_cast<size_t>(i * n + j)] = e.ir;
        }
      }
    }
  }

  gaussian_blur_inplace(target, n, spec.blur_sigma);
  gaussian_blur_inplace(reference, n, spec.blur_sigma);

  if (spec.noise_sigma > 0.0) {
    for (auto& v : target) v += spec.noise_sigma * rng.normal();
    for (auto& v : reference) v += spec.noise_sigma * rng.normal();
  }

  auto to_tensor = [n](const std::vector<double>& src) {
    auto t = make_tensor<float>({1, 1, n, n});
    for (size_t i = 0; i < src.size(); ++i)
      t->values[i] = static_cast<float>(std::clamp(src[i], 0.0, 1.0));
    return t;
  };
  return {to_tensor(target), to_tensor(reference)};
}

// --- k-space truncation ---------------------------------------------------

namespace {

std::mutex fftw_mutex;

// Per-axis mapping from an output-grid frequency bin to weighted input bins.
// The output Nyquist bin (only present for even lengths) blends the +/-
// input Nyquist frequencies half and half.
struct FreqTap {
  int64_t src[2];
  double w[2];
  int count;
};

std::vector<FreqTap> freq_taps(int64_t out_len, int64_t in_len) {
  std::vector<FreqTap> taps(static_cast<size_t>(out_len));
  for (int64_t p = 0; p < out_len; ++p) {
    FreqTap t{};
    const int64_t signed_f = p < (out_len + 1) / 2 ? p : p - out_len;
    if (out_len % 2 == 0 && p == out_len / 2) {
      t.count = 2;
      t.src[0] = out_len / 2;               // +Nyquist in the input grid
      t.src[1] = in_len - out_len / 2;      // -Nyquist
      t.w[0] = 0.5;
      t.w[1] = 0.5;
    } else {
      t.count = 1;
      t.src[0] = signed_f >= 0 ? signed_f : in_len + signed_f;
      t.w[0] = 1.0;
    }
    taps[static_cast<size_t>(p)] = t;
  }
  return taps;
}

}  // namespace

template <typename S>
TensorPtr<S> kspace_truncate(const TensorPtr<S>& x, int s) {
  check(x->shape.size() == 4, "kspace_truncate expects [N,C,H,W]");
  check<ConfigError>(s >= 1, "kspace_truncate: scale must be >= 1");
  const int64_t n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
  check(h % s == 0 && w % s == 0, "kspace_truncate: dimensions must be divisible by the scale");
  const int64_t lh = h / s, lw = w / s;
  auto out = make_tensor<S>({n, c, lh, lw});
  if (s == 1) {
    for (int64_t i = 0; i < x->size(); ++i) out->values[i] = x->values[i];
    return out;
  }

  const auto row_taps = freq_taps(lh, h);
  const auto col_taps = freq_taps(lw, w);

  std::vector<std::complex<double>> big(static_cast<size_t>(h * w));
  std::vector<std::complex<double>> small(static_cast<size_t>(lh * lw));

  fftw_plan fwd, bwd;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex);
    fwd = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w),
                           reinterpret_cast<fftw_complex*>(big.data()),
                           reinterpret_cast<fftw_complex*>(big.data()), FFTW_FORWARD,
                           FFTW_ESTIMATE);
    bwd = fftw_plan_dft_2d(static_cast<int>(lh), static_cast<int>(lw),
                           reinterpret_cast<fftw_complex*>(small.data()),
                           reinterpret_cast<fftw_complex*>(small.data()), FFTW_BACKWARD,
                           FFTW_ESTIMATE);
  }

  // The plane mean rides around the transform: the DFT of the zero-mean
  // residual is taken, truncated, and inverted, then the mean is added back.
  // The truncation keeps the DC bin anyway, so this changes nothing
  // analytically, but it makes constant images map to the same constant
  // exactly: the residual of a constant plane is exactly zero (k*c and
  // (k*c)/k are exact in double for float-precision c), and the FFT of zeros
  // is zeros.
  const double norm = 1.0 / (static_cast<double>(h) * static_cast<double>(w));
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const S* src = x->values.data() + plane * h * w;
    double total = 0.0;
    for (int64_t i = 0; i < h * w; ++i) total += static_cast<double>(src[i]);
    const double mean = total / static_cast<double>(h * w);
    for (int64_t i = 0; i < h * w; ++i)
      big[static_cast<size_t>(i)] = {static_cast<double>(src[i]) - mean, 0.0};
    fftw_execute(fwd);

    for (int64_t p = 0; p < lh; ++p) {
      const FreqTap& rt = row_taps[static_cast<size_t>(p)];
      for (int64_t q = 0; q < lw; ++q) {
        const FreqTap& ct = col_taps[static_cast<size_t>(q)];
        std::complex<double> acc{0.0, 0.0};
        for (int a = 0; a < rt.count; ++a)
          for (int b = 0; b < ct.count; ++b)
            acc += rt.w[a] * ct.w[b] * big[static_cast<size_t>(rt.src[a] * w + ct.src[b])];
        small[static_cast<size_t>(p * lw + q)] = acc;
      }
    }
    fftw_execute(bwd);

    S* dst = out->values.data() + plane * lh * lw;
    for (int64_t i = 0; i < lh * lw; ++i)
      dst[i] = static_cast<S>(mean + small[static_cast<size_t>(i)].real() * norm);
  }

  {
    std::lock_guard<std::mutex> lock(fftw_mutex);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  return out;
}

template TensorPtr<float> kspace_truncate(const TensorPtr<float>&, int);
template TensorPtr<double> kspace_truncate(const TensorPtr<double>&, int);

template <typename S>
TensorPtr<S> kspace_zeropad_upsample(const TensorPtr<S>& x, int s) {
  check(x->shape.size() == 4, "kspace_zeropad_upsample expects [N,C,H,W]");
  check<ConfigError>(s >= 1, "kspace_zeropad_upsample: scale must be >= 1");
  const int64_t n = x->shape[0], c = x->shape[1], lh = x->shape[2], lw = x->shape[3];
  const int64_t h = lh * s, w = lw * s;
  auto out = make_tensor<S>({n, c, h, w});
  if (s == 1) {
    for (int64_t i = 0; i < x->size(); ++i) out->values[i] = x->values[i];
    return out;
  }

  // Transpose of the truncation taps: the source Nyquist bin splits half and
  // half onto the +/- Nyquist bins of the larger grid, so real stays real.
  const auto row_taps = freq_taps(lh, h);
  const auto col_taps = freq_taps(lw, w);

  std::vector<std::complex<double>> small(static_cast<size_t>(lh * lw));
  std::vector<std::complex<double>> big(static_cast<size_t>(h * w));

  fftw_plan fwd, bwd;
  {
    std::lock_guard<std::mutex> lock(fftw_mutex);
    fwd = fftw_plan_dft_2d(static_cast<int>(lh), static_cast<int>(lw),
                           reinterpret_cast<fftw_complex*>(small.data()),
                           reinterpret_cast<fftw_complex*>(small.data()), FFTW_FORWARD,
                           FFTW_ESTIMATE);
    bwd = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w),
                           reinterpret_cast<fftw_complex*>(big.data()),
                           reinterpret_cast<fftw_complex*>(big.data()), FFTW_BACKWARD,
                           FFTW_ESTIMATE);
  }

  const double norm = 1.0 / (static_cast<double>(lh) * static_cast<double>(lw));
  for (int64_t plane = 0; plane < n * c; ++plane) {
    const S* src = x->values.data() + plane * lh * lw;
    double total = 0.0;
    for (int64_t i = 0; i < lh * lw; ++i) total += static_cast<double>(src[i]);
    const double mean = total / static_cast<double>(lh * lw);
    for (int64_t i = 0; i < lh * lw; ++i)
      small[static_cast<size_t>(i)] = {static_cast<double>(src[i]) - mean, 0.0};
    fftw_execute(fwd);

    std::fill(big.begin(), big.end(), std::complex<double>{0.0, 0.0});
    for (int64_t p = 0; p < lh; ++p) {
      const FreqTap& rt = row_taps[static_cast<size_t>(p)];
      for (int64_t q = 0; q < lw; ++q) {
        const FreqTap& ct = col_taps[static_cast<size_t>(q)];
        const std::complex<double> v = small[static_cast<size_t>(p * lw + q)];
        for (int a = 0; a < rt.count; ++a)
          for (int b = 0; b < ct.count; ++b)
            big[static_cast<size_t>(rt.src[a] * w + ct.src[b])] += rt.w[a] * ct.w[b] * v;
      }
    }
    fftw_execute(bwd);

    S* dst = out->values.data() + plane * h * w;
    for (int64_t i = 0; i < h * w; ++i)
      dst[i] = static_cast<S>(mean + big[static_cast<size_t>(i)].real() * norm);
  }

  {
    std::lock_guard<std::mutex> lock(fftw_mutex);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }
  return out;
}

template TensorPtr<float> kspace_zeropad_upsample(const TensorPtr<float>&, int);
template TensorPtr<double> kspace_zeropad_upsample(const TensorPtr<double>&, int);

std::vector<ImagePair> make_dataset(int count, const PhantomSpec& spec, int scale) {
  check<ConfigError>(count >= 1, "make_dataset: count must be positive");
  check<ConfigError>(scale == 2 || scale == 4, "make_dataset: scale must be 2 or 4");
  check<ConfigError>(spec.size % (2 * scale) == 0,
                     "make_dataset: size must be divisible by 2*scale");
  std::vector<ImagePair> pairs;
  pairs.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) {
    PhantomSpec s = spec;
    s.seed = spec.seed + static_cast<uint64_t>(i);
    auto [hr, ref] = generate_phantom(s);
    ImagePair pair;
    pair.hr = hr;
    pair.ref = ref;
    pair.lr = kspace_truncate(hr, scale);
    pair.scale = scale;
    pair.seed = s.seed;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

// --- raw image io -----------------------------------------------------------

namespace {

void check_single_image(const TensorPtr<float>& img, const char* what) {
  check(img && img->shape.size() == 4 && img->shape[0] == 1 && img->shape[1] == 1,
        std::string(what) + " expects a [1,1,H,W] image");
}

void put_u32(std::ofstream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::ifstream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
         static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
}

}  // namespace

void write_image_raw(const std::string& path, const TensorPtr<float>& img) {
  check_single_image(img, "write_image_raw");
  std::ofstream os(path, std::ios::binary);
  check<IoError>(os.good(), "cannot open for writing: " + path);
  os.write("ECF1", 4);
  put_u32(os, static_cast<uint32_t>(img->shape[2]));
  put_u32(os, static_cast<uint32_t>(img->shape[3]));
  static_assert(sizeof(float) == 4);
  os.write(reinterpret_cast<const char*>(img->values.data()),
           static_cast<std::streamsize>(img->values.size() * 4));
  check<IoError>(os.good(), "short write: " + path);
}

TensorPtr<float> read_image_raw(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  check<IoError>(is.good(), "cannot open: " + path);
  char magic[4];
  is.read(magic, 4);
  check<IoError>(is.good() && std::memcmp(magic, "ECF1", 4) == 0, "bad magic in " + path);
  const uint32_t h = get_u32(is);
  const uint32_t w = get_u32(is);
  check<IoError>(is.good() && h > 0 && w > 0 && h <= 1u << 20 && w <= 1u << 20,
                 "bad dimensions in " + path);
  auto img = make_tensor<float>({1, 1, h, w});
  is.read(reinterpret_cast<char*>(img->values.data()),
          static_cast<std::streamsize>(img->values.size() * 4));
  check<IoError>(is.good(), "short read: " + path);
  return img;
}

// --- png io ------------------------------------------------------------------

void write_image_png16(const std::string& path, const TensorPtr<float>& img) {
  check_single_image(img, "write_image_png16");
  const int64_t h = img->shape[2], w = img->shape[3];
  FILE* fp = std::fopen(path.c_str(), "wb");
  check<IoError>(fp != nullptr, "cannot open for writing: " + path);
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    std::fclose(fp);
    throw IoError("png write failed: " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  std::vector<unsigned char> row(static_cast<size_t>(w) * 2);
  for (int64_t i = 0; i < h; ++i) {
    for (int64_t j = 0; j < w; ++j) {
      const float v = std::clamp(img->values[static_cast<size_t>(i * w + j)], 0.0f, 1.0f);
      const uint16_t q = static_cast<uint16_t>(std::lround(v * 65535.0));
      row[static_cast<size_t>(2 * j)] = static_cast<unsigned char>(q >> 8);
      row[static_cast<size_t>(2 * j + 1)] = static_cast<unsigned char>(q & 0xff);
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

TensorPtr<float> read_image_png16(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  check<IoError>(fp != nullptr, "cannot open: " + path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    std::fclose(fp);
    throw IoError("png read failed: " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int bit_depth = png_get_bit_depth(png, info);
  const int color_type = png_get_color_type(png, info);
  if (bit_depth != 16 || color_type != PNG_COLOR_TYPE_GRAY) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    throw IoError("expected 16-bit grayscale png: " + path);
  }
  auto img = make_tensor<float>({1, 1, static_cast<int64_t>(h), static_cast<int64_t>(w)});
  std::vector<unsigned char> row(static_cast<size_t>(w) * 2);
  for (png_uint_32 i = 0; i < h; ++i) {
    png_read_row(png, row.data(), nullptr);
    for (png_uint_32 j = 0; j < w; ++j) {
      const uint16_t q = static_cast<uint16_t>((row[2 * j] << 8) | row[2 * j + 1]);
      img->values[static_cast<size_t>(i) * w + j] = static_cast<float>(q) / 65535.0f;
    }
  }
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return img;
}

// --- manifest -------------------------------------------------------------------

void save_manifest(const std::string& path, const DatasetManifest& m) {
  nlohmann::json j;
  j["scale"] = m.scale;
  j["size"] = m.size;
  j["phantom"] = {{"size", m.phantom.size},
                  {"ellipses", m.phantom.ellipses},
                  {"blur_sigma", m.phantom.blur_sigma},
                  {"noise_sigma", m.phantom.noise_sigma},
                  {"seed", m.phantom.seed}};
  j["baseline_psnr"] = m.baseline_psnr;
  j["baseline_psnr_mean"] = m.baseline_psnr_mean;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries)
    entries.push_back(
        {{"hr_path", e.hr_path}, {"ref_path", e.ref_path}, {"scale", m.scale}, {"seed", e.seed}});
  j["pairs"] = entries;
  std::ofstream os(path);
  check<IoError>(os.good(), "cannot open for writing: " + path);
  os << j.dump(2) << "\n";
  check<IoError>(os.good(), "short write: " + path);
}

DatasetManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  check<IoError>(is.good(), "cannot open: " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid manifest json in " + path + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.scale = j.at("scale").get<int>();
    m.size = j.at("size").get<int>();
    const auto& p = j.at("phantom");
    m.phantom.size = p.at("size").get<int>();
    m.phantom.ellipses = p.at("ellipses").get<int>();
    m.phantom.blur_sigma = p.at("blur_sigma").get<double>();
    m.phantom.noise_sigma = p.at("noise_sigma").get<double>();
    m.phantom.seed = p.at("seed").get<uint64_t>();
    if (j.contains("baseline_psnr")) m.baseline_psnr = j.at("baseline_psnr").get<std::vector<double>>();
    if (j.contains("baseline_psnr_mean")) m.baseline_psnr_mean = j.at("baseline_psnr_mean").get<double>();
    for (const auto& e : j.at("pairs")) {
      ManifestEntry entry;
      entry.hr_path = e.at("hr_path").get<std::string>();
      entry.ref_path = e.at("ref_path").get<std::string>();
      if (e.contains("scale"))
        check<IoError>(e.at("scale").get<int>() == m.scale,
                       "manifest entry scale disagrees with the dataset scale");
      if (e.contains("seed")) entry.seed = e.at("seed").get<uint64_t>();
      m.entries.push_back(std::move(entry));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest missing fields in " + path + ": " + e.what());
  }
  return m;
}

namespace {

TensorPtr<float> read_image_any(const std::string& path) {
  const auto ext = std::filesystem::path(path).extension().string();
  return ext == ".png" ? read_image_png16(path) : read_image_raw(path);
}

}  // namespace

std::vector<ImagePair> load_pairs(const DatasetManifest& m, const std::string& manifest_path) {
  const auto base = std::filesystem::path(manifest_path).parent_path();
  std::vector<ImagePair> pairs;
  pairs.reserve(m.entries.size());
  for (const auto& e : m.entries) {
    ImagePair p;
    p.hr = read_image_any((base / e.hr_path).string());
    p.ref = read_image_any((base / e.ref_path).string());
    p.scale = m.scale;
    p.seed = e.seed;
    check(p.hr->shape == p.ref->shape, "manifest pair has mismatched hr/ref sizes");
    check(p.hr->shape[2] % m.scale == 0 && p.hr->shape[3] % m.scale == 0,
          "manifest pair size is not divisible by the dataset scale");
    p.lr = kspace_truncate(p.hr, m.scale);
    pairs.push_back(std::move(p));
  }
  return pairs;
}

}  // namespace ecf
