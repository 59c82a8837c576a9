#include "ecf/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ecf/common.hpp"

namespace ecf {

namespace {

template <typename S>
bool taped(Tape<S>* tape, std::initializer_list<TensorPtr<S>> inputs) {
  if (!tape) return false;
  for (const auto& t : inputs)
    if (t && t->requires_grad) return true;
  return false;
}

void check_4d(const std::vector<int64_t>& shape, const char* what) {
  check(shape.size() == 4, std::string(what) + " expects a 4-D tensor, got " + shape_str(shape));
}

// Floor/ceil division for signed numerators and positive denominators.
int64_t div_floor(int64_t a, int64_t b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
int64_t div_ceil(int64_t a, int64_t b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }

}  // namespace

// --- element-wise -----------------------------------------------------------

template <typename S>
static TensorPtr<S> binary_op(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape,
                              const char* label, S (*fwd)(S, S), void (*bwd)(const Tensor<S>&, Tensor<S>&, Tensor<S>&)) {
  check(a->same_shape(*b), std::string(label) + ": shape mismatch " + shape_str(a->shape) +
                               " vs " + shape_str(b->shape));
  auto out = make_tensor<S>(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->values[i] = fwd(a->values[i], b->values[i]);
  if (taped(tape, {a, b})) {
    out->requires_grad = true;
    tape->record(label, {a, b}, out, [a, b, out, bwd] { bwd(*out, *a, *b); });
  }
  return out;
}

template <typename S>
TensorPtr<S> add(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape) {
  return binary_op<S>(a, b, tape, "add", [](S x, S y) { return x + y; },
                      [](const Tensor<S>& out, Tensor<S>& ta, Tensor<S>& tb) {
                        const int64_t n = out.size();
                        if (ta.requires_grad) ta.accumulate_grad(out.grad.data(), n);
                        if (tb.requires_grad) tb.accumulate_grad(out.grad.data(), n);
                      });
}

template <typename S>
TensorPtr<S> sub(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape) {
  return binary_op<S>(a, b, tape, "sub", [](S x, S y) { return x - y; },
                      [](const Tensor<S>& out, Tensor<S>& ta, Tensor<S>& tb) {
                        const int64_t n = out.size();
                        if (ta.requires_grad) ta.accumulate_grad(out.grad.data(), n);
                        if (tb.requires_grad) {
                          tb.ensure_grad();
                          for (int64_t i = 0; i < n; ++i) tb.grad[i] -= out.grad[i];
                        }
                      });
}

template <typename S>
TensorPtr<S> mul(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape) {
  check(a->same_shape(*b), "mul: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto out = make_tensor<S>(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] * b->values[i];
  if (taped(tape, {a, b})) {
    out->requires_grad = true;
    tape->record("mul", {a, b}, out, [a, b, out] {
      const int64_t m = out->size();
      if (a->requires_grad) {
        a->ensure_grad();
        for (int64_t i = 0; i < m; ++i) a->grad[i] += out->grad[i] * b->values[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int64_t i = 0; i < m; ++i) b->grad[i] += out->grad[i] * a->values[i];
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> add_scalar(const TensorPtr<S>& a, S c, Tape<S>* tape) {
  auto out = make_tensor<S>(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] + c;
  if (taped(tape, {a})) {
    out->requires_grad = true;
    tape->record("add_scalar", {a}, out, [a, out] {
      if (a->requires_grad) a->accumulate_grad(out->grad.data(), out->size());
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> mul_scalar(const TensorPtr<S>& a, S c, Tape<S>* tape) {
  auto out = make_tensor<S>(a->shape);
  const int64_t n = a->size();
  for (int64_t i = 0; i < n; ++i) out->values[i] = a->values[i] * c;
  if (taped(tape, {a})) {
    out->requires_grad = true;
    tape->record("mul_scalar", {a}, out, [a, out, c] {
      if (!a->requires_grad) return;
      a->ensure_grad();
      const int64_t m = out->size();
      for (int64_t i = 0; i < m; ++i) a->grad[i] += out->grad[i] * c;
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> relu(const TensorPtr<S>& x, Tape<S>* tape) {
  auto out = make_tensor<S>(x->shape);
  const int64_t n = x->size();
  for (int64_t i = 0; i < n; ++i) out->values[i] = x->values[i] > S(0) ? x->values[i] : S(0);
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("relu", {x}, out, [x, out] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      const int64_t m = out->size();
      for (int64_t i = 0; i < m; ++i)
        if (x->values[i] > S(0)) x->grad[i] += out->grad[i];
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> sigmoid(const TensorPtr<S>& x, Tape<S>* tape) {
  auto out = make_tensor<S>(x->shape);
  const int64_t n = x->size();
  for (int64_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(x->values[i]);
    out->values[i] = static_cast<S>(1.0 / (1.0 + std::exp(-v)));
  }
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("sigmoid", {x}, out, [x, out] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      const int64_t m = out->size();
      for (int64_t i = 0; i < m; ++i) {
        const S y = out->values[i];
        x->grad[i] += out->grad[i] * y * (S(1) - y);
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> abs_val(const TensorPtr<S>& x, Tape<S>* tape) {
  auto out = make_tensor<S>(x->shape);
  const int64_t n = x->size();
  for (int64_t i = 0; i < n; ++i) out->values[i] = std::abs(x->values[i]);
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("abs", {x}, out, [x, out] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      const int64_t m = out->size();
      for (int64_t i = 0; i < m; ++i) {
        if (x->values[i] > S(0))
          x->grad[i] += out->grad[i];
        else if (x->values[i] < S(0))
          x->grad[i] -= out->grad[i];
      }
    });
  }
  return out;
}

// --- reductions --------------------------------------------------------------

template <typename S>
TensorPtr<S> sum_all(const TensorPtr<S>& x, Tape<S>* tape) {
  auto out = make_tensor<S>({1});
  S acc = S(0);
  const int64_t n = x->size();
  for (int64_t i = 0; i < n; ++i) acc += x->values[i];
  out->values[0] = acc;
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("sum_all", {x}, out, [x, out] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      const S g = out->grad[0];
      const int64_t m = x->size();
      for (int64_t i = 0; i < m; ++i) x->grad[i] += g;
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> mean_all(const TensorPtr<S>& x, Tape<S>* tape) {
  auto out = make_tensor<S>({1});
  S acc = S(0);
  const int64_t n = x->size();
  for (int64_t i = 0; i < n; ++i) acc += x->values[i];
  out->values[0] = acc / static_cast<S>(n);
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("mean_all", {x}, out, [x, out] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      const S g = out->grad[0] / static_cast<S>(x->size());
      const int64_t m = x->size();
      for (int64_t i = 0; i < m; ++i) x->grad[i] += g;
    });
  }
  return out;
}

// --- shape ops ----------------------------------------------------------------

template <typename S>
TensorPtr<S> concat_channels(const std::vector<TensorPtr<S>>& xs, Tape<S>* tape) {
  check(!xs.empty(), "concat_channels needs at least one input");
  check_4d(xs[0]->shape, "concat_channels");
  const int64_t n = xs[0]->shape[0], h = xs[0]->shape[2], w = xs[0]->shape[3];
  int64_t ctot = 0;
  for (const auto& x : xs) {
    check_4d(x->shape, "concat_channels");
    check(x->shape[0] == n && x->shape[2] == h && x->shape[3] == w,
          "concat_channels: incompatible shapes");
    ctot += x->shape[1];
  }
  auto out = make_tensor<S>({n, ctot, h, w});
  const int64_t plane = h * w;
  for (int64_t b = 0; b < n; ++b) {
    int64_t coff = 0;
    for (const auto& x : xs) {
      const int64_t c = x->shape[1];
      std::memcpy(out->values.data() + (b * ctot + coff) * plane,
                  x->values.data() + b * c * plane, sizeof(S) * static_cast<size_t>(c * plane));
      coff += c;
    }
  }
  bool any = false;
  for (const auto& x : xs) any = any || x->requires_grad;
  if (tape && any) {
    out->requires_grad = true;
    tape->record("concat_channels", xs, out, [xs, out, n, ctot, plane] {
      for (int64_t b = 0; b < n; ++b) {
        int64_t coff = 0;
        for (const auto& x : xs) {
          const int64_t c = x->shape[1];
          if (x->requires_grad) {
            x->ensure_grad();
            const S* g = out->grad.data() + (b * ctot + coff) * plane;
            S* dst = x->grad.data() + b * c * plane;
            for (int64_t i = 0; i < c * plane; ++i) dst[i] += g[i];
          }
          coff += c;
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> nchw_to_tokens(const TensorPtr<S>& x, Tape<S>* tape) {
  check_4d(x->shape, "nchw_to_tokens");
  const int64_t n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
  const int64_t t = h * w;
  auto out = make_tensor<S>({n, t, c});
  for (int64_t b = 0; b < n; ++b) {
    const S* src = x->values.data() + b * c * t;
    S* dst = out->values.data() + b * t * c;
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t p = 0; p < t; ++p) dst[p * c + ch] = src[ch * t + p];
  }
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("nchw_to_tokens", {x}, out, [x, out, n, c, t] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (int64_t b = 0; b < n; ++b) {
        const S* g = out->grad.data() + b * t * c;
        S* dst = x->grad.data() + b * c * t;
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t p = 0; p < t; ++p) dst[ch * t + p] += g[p * c + ch];
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> tokens_to_nchw(const TensorPtr<S>& x, int64_t h, int64_t w, Tape<S>* tape) {
  check(x->shape.size() == 3, "tokens_to_nchw expects [B,T,C], got " + shape_str(x->shape));
  const int64_t n = x->shape[0], t = x->shape[1], c = x->shape[2];
  check(t == h * w, "tokens_to_nchw: token count does not match h*w");
  auto out = make_tensor<S>({n, c, h, w});
  for (int64_t b = 0; b < n; ++b) {
    const S* src = x->values.data() + b * t * c;
    S* dst = out->values.data() + b * c * t;
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t p = 0; p < t; ++p) dst[ch * t + p] = src[p * c + ch];
  }
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("tokens_to_nchw", {x}, out, [x, out, n, c, t] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (int64_t b = 0; b < n; ++b) {
        const S* g = out->grad.data() + b * c * t;
        S* dst = x->grad.data() + b * t * c;
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t p = 0; p < t; ++p) dst[p * c + ch] += g[ch * t + p];
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> reshape(const TensorPtr<S>& x, std::vector<int64_t> shape, Tape<S>* tape) {
  check(shape_numel(shape) == x->size(),
        "reshape: element count mismatch " + shape_str(x->shape) + " -> " + shape_str(shape));
  auto out = make_tensor<S>(std::move(shape));
  out->values = x->values;
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("reshape", {x}, out, [x, out] {
      if (x->requires_grad) x->accumulate_grad(out->grad.data(), out->size());
    });
  }
  return out;
}

// --- matmul --------------------------------------------------------------------

namespace {

// C[M,N] += A[M,K] * B[K,N]; per element the K contributions arrive in order.
template <typename S>
void gemm_acc(const S* a, const S* b, S* c, int64_t m, int64_t k, int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    S* crow = c + i * n;
    for (int64_t kk = 0; kk < k; ++kk) {
      const S av = arow[kk];
      const S* brow = b + kk * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// dA[M,K] += G[M,N] * B^T, computed as row dot products (j-ordered).
template <typename S>
void gemm_nt_acc(const S* g, const S* b, S* da, int64_t m, int64_t n, int64_t k) {
  for (int64_t i = 0; i < m; ++i) {
    const S* grow = g + i * n;
    S* darow = da + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const S* brow = b + kk * n;
      S acc = S(0);
      for (int64_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
      darow[kk] += acc;
    }
  }
}

// dB[K,N] += A^T * G, single writer per row of dB (i-ordered accumulation).
template <typename S>
void gemm_tn_acc(const S* a, const S* g, S* db, int64_t m, int64_t k, int64_t n) {
  for (int64_t kk = 0; kk < k; ++kk) {
    S* dbrow = db + kk * n;
    for (int64_t i = 0; i < m; ++i) {
      const S av = a[i * k + kk];
      const S* grow = g + i * n;
      for (int64_t j = 0; j < n; ++j) dbrow[j] += av * grow[j];
    }
  }
}

}  // namespace

template <typename S>
TensorPtr<S> matmul(const TensorPtr<S>& a, const TensorPtr<S>& b, Tape<S>* tape) {
  const bool batched = a->shape.size() == 3;
  check((a->shape.size() == 2 && b->shape.size() == 2) ||
            (a->shape.size() == 3 && b->shape.size() == 3),
        "matmul expects 2-D x 2-D or 3-D x 3-D, got " + shape_str(a->shape) + " x " +
            shape_str(b->shape));
  const int64_t nb = batched ? a->shape[0] : 1;
  const int64_t m = a->shape[batched ? 1 : 0];
  const int64_t k = a->shape[batched ? 2 : 1];
  const int64_t kb = b->shape[batched ? 1 : 0];
  const int64_t n = b->shape[batched ? 2 : 1];
  check(k == kb && (!batched || b->shape[0] == nb),
        "matmul: inner dimensions mismatch " + shape_str(a->shape) + " x " + shape_str(b->shape));

  auto out = batched ? make_tensor<S>({nb, m, n}) : make_tensor<S>({m, n});
  parallel_for(nb, [&](int64_t lo, int64_t hi) {
    for (int64_t bb = lo; bb < hi; ++bb)
      gemm_acc(a->values.data() + bb * m * k, b->values.data() + bb * k * n,
               out->values.data() + bb * m * n, m, k, n);
  });

  if (taped(tape, {a, b})) {
    out->requires_grad = true;
    tape->record("matmul", {a, b}, out, [a, b, out, nb, m, k, n] {
      if (a->requires_grad) a->ensure_grad();
      if (b->requires_grad) b->ensure_grad();
      for (int64_t bb = 0; bb < nb; ++bb) {
        const S* g = out->grad.data() + bb * m * n;
        if (a->requires_grad)
          gemm_nt_acc(g, b->values.data() + bb * k * n, a->grad.data() + bb * m * k, m, n, k);
        if (b->requires_grad)
          gemm_tn_acc(a->values.data() + bb * m * k, g, b->grad.data() + bb * k * n, m, k, n);
      }
    });
  }
  return out;
}

// --- conv ------------------------------------------------------------------------

namespace {

template <typename S>
void conv2d_check(const TensorPtr<S>& x, const TensorPtr<S>& w, const TensorPtr<S>& bias,
                  int stride, int padding, bool depthwise) {
  check_4d(x->shape, "conv2d input");
  check_4d(w->shape, "conv2d weight");
  check<ConfigError>(stride >= 1, "conv2d: stride must be >= 1");
  check<ConfigError>(padding >= 0, "conv2d: padding must be >= 0");
  if (depthwise) {
    check(w->shape[1] == 1, "depthwise conv weight must be [C,1,Kh,Kw]");
    check(w->shape[0] == x->shape[1], "depthwise conv channel mismatch");
  } else {
    check(w->shape[1] == x->shape[1], "conv2d: input channels mismatch " + shape_str(x->shape) +
                                          " vs weight " + shape_str(w->shape));
  }
  if (bias) {
    check(bias->shape.size() == 1 && bias->shape[0] == w->shape[0],
          "conv2d: bias must be [Cout]");
  }
}

struct ConvDims {
  int64_t n, ci, h, w, co, kh, kw, ho, wo;
  int64_t s, ph, pw;
};

ConvDims conv_dims(const std::vector<int64_t>& xs, const std::vector<int64_t>& ws, int stride,
                   int pad_h, int pad_w) {
  ConvDims d{};
  d.n = xs[0];
  d.ci = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.co = ws[0];
  d.kh = ws[2];
  d.kw = ws[3];
  d.s = stride;
  d.ph = pad_h;
  d.pw = pad_w;
  d.ho = (d.h + 2 * d.ph - d.kh) / d.s + 1;
  d.wo = (d.w + 2 * d.pw - d.kw) / d.s + 1;
  check(d.ho >= 1 && d.wo >= 1, "conv2d: kernel larger than padded input");
  return d;
}

// One (n, co) output plane. Contributions per element arrive in
// (ci, kh, kw) order; `ci_lo/ci_hi` select the input channel range so the
// same kernel serves grouped (depthwise) convolution.
template <typename S>
void conv_plane_forward(const S* x, const S* w, S bias_v, S* o, const ConvDims& d, int64_t n,
                        int64_t ci_lo, int64_t ci_hi) {
  std::fill(o, o + d.ho * d.wo, bias_v);
  for (int64_t ci = ci_lo; ci < ci_hi; ++ci) {
    const S* xc = x + (n * d.ci + ci) * d.h * d.w;
    for (int64_t kh = 0; kh < d.kh; ++kh) {
      for (int64_t kw = 0; kw < d.kw; ++kw) {
        const S wv = w[(ci - ci_lo) * d.kh * d.kw + kh * d.kw + kw];
        if (wv == S(0)) continue;
        const int64_t wo_lo = std::max<int64_t>(0, div_ceil(d.pw - kw, d.s));
        const int64_t wo_hi = std::min<int64_t>(d.wo - 1, div_floor(d.w - 1 + d.pw - kw, d.s));
        for (int64_t ho = 0; ho < d.ho; ++ho) {
          const int64_t hi = ho * d.s + kh - d.ph;
          if (hi < 0 || hi >= d.h) continue;
          const S* xrow = xc + hi * d.w + (kw - d.pw);
          S* orow = o + ho * d.wo;
          if (d.s == 1) {
            for (int64_t woi = wo_lo; woi <= wo_hi; ++woi) orow[woi] += wv * xrow[woi];
          } else {
            for (int64_t woi = wo_lo; woi <= wo_hi; ++woi) orow[woi] += wv * xrow[woi * d.s];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename S>
static TensorPtr<S> conv2d_impl(const TensorPtr<S>& x, const TensorPtr<S>& w,
                                const TensorPtr<S>& bias, int stride, int pad_h, int pad_w,
                                Tape<S>* tape, bool depthwise) {
  conv2d_check(x, w, bias, stride, std::min(pad_h, pad_w), depthwise);
  const ConvDims d = conv_dims(x->shape, w->shape, stride, pad_h, pad_w);
  auto out = make_tensor<S>({d.n, d.co, d.ho, d.wo});

  const int64_t kelems = d.kh * d.kw;
  parallel_for(d.n * d.co, [&](int64_t lo, int64_t hi) {
    for (int64_t idx = lo; idx < hi; ++idx) {
      const int64_t n = idx / d.co;
      const int64_t co = idx % d.co;
      const S bv = bias ? bias->values[co] : S(0);
      S* o = out->values.data() + (n * d.co + co) * d.ho * d.wo;
      const int64_t ci_lo = depthwise ? co : 0;
      const int64_t ci_hi = depthwise ? co + 1 : d.ci;
      conv_plane_forward(x->values.data(), w->values.data() + co * (ci_hi - ci_lo) * kelems, bv,
                         o, d, n, ci_lo, ci_hi);
    }
  });

  if (taped(tape, {x, w, bias})) {
    out->requires_grad = true;
    tape->record(depthwise ? "conv2d_depthwise" : "conv2d", {x, w, bias}, out,
                 [x, w, bias, out, d, depthwise, kelems] {
      const S* g = out->grad.data();
      // dx: scatter per (n, ci) slice, fixed (co, kh, kw, ho, wo) order.
      if (x->requires_grad) {
        x->ensure_grad();
        parallel_for(d.n * d.ci, [&](int64_t lo, int64_t hi) {
          for (int64_t idx = lo; idx < hi; ++idx) {
            const int64_t n = idx / d.ci;
            const int64_t ci = idx % d.ci;
            S* dx = x->grad.data() + (n * d.ci + ci) * d.h * d.w;
            const int64_t co_lo = depthwise ? ci : 0;
            const int64_t co_hi = depthwise ? ci + 1 : d.co;
            for (int64_t co = co_lo; co < co_hi; ++co) {
              const S* gp = g + (n * d.co + co) * d.ho * d.wo;
              const S* wp = w->values.data() + (co * (depthwise ? 1 : d.ci) + (depthwise ? 0 : ci)) * kelems;
              for (int64_t kh = 0; kh < d.kh; ++kh) {
                for (int64_t kw = 0; kw < d.kw; ++kw) {
                  const S wv = wp[kh * d.kw + kw];
                  if (wv == S(0)) continue;
                  const int64_t wo_lo = std::max<int64_t>(0, div_ceil(d.pw - kw, d.s));
                  const int64_t wo_hi = std::min<int64_t>(d.wo - 1, div_floor(d.w - 1 + d.pw - kw, d.s));
                  for (int64_t ho = 0; ho < d.ho; ++ho) {
                    const int64_t hi2 = ho * d.s + kh - d.ph;
                    if (hi2 < 0 || hi2 >= d.h) continue;
                    S* dxrow = dx + hi2 * d.w + (kw - d.pw);
                    const S* grow = gp + ho * d.wo;
                    if (d.s == 1) {
                      for (int64_t woi = wo_lo; woi <= wo_hi; ++woi) dxrow[woi] += wv * grow[woi];
                    } else {
                      for (int64_t woi = wo_lo; woi <= wo_hi; ++woi) dxrow[woi * d.s] += wv * grow[woi];
                    }
                  }
                }
              }
            }
          }
        });
      }
      // dw: gather per (co, ci) filter slice, fixed (n, ho, wo) order.
      if (w->requires_grad) {
        w->ensure_grad();
        const int64_t groups = depthwise ? 1 : d.ci;
        parallel_for(d.co * groups, [&](int64_t lo, int64_t hi) {
          for (int64_t idx = lo; idx < hi; ++idx) {
            const int64_t co = idx / groups;
            const int64_t ci = depthwise ? co : idx % groups;
            S* dwp = w->grad.data() + idx * kelems;
            for (int64_t kh = 0; kh < d.kh; ++kh) {
              for (int64_t kw = 0; kw < d.kw; ++kw) {
                S acc = S(0);
                for (int64_t n = 0; n < d.n; ++n) {
                  const S* gp = g + (n * d.co + co) * d.ho * d.wo;
                  const S* xc = x->values.data() + (n * d.ci + ci) * d.h * d.w;
                  const int64_t wo_lo = std::max<int64_t>(0, div_ceil(d.pw - kw, d.s));
                  const int64_t wo_hi = std::min<int64_t>(d.wo - 1, div_floor(d.w - 1 + d.pw - kw, d.s));
                  for (int64_t ho = 0; ho < d.ho; ++ho) {
                    const int64_t hi2 = ho * d.s + kh - d.ph;
                    if (hi2 < 0 || hi2 >= d.h) continue;
                    const S* xrow = xc + hi2 * d.w + (kw - d.pw);
                    const S* grow = gp + ho * d.wo;
                    if (d.s == 1) {
                      for (int64_t woi = wo_lo; woi <= wo_hi; ++woi) acc += grow[woi] * xrow[woi];
                    } else {
                      for (int64_t woi = wo_lo; woi <= wo_hi; ++woi) acc += grow[woi] * xrow[woi * d.s];
                    }
                  }
                }
                dwp[kh * d.kw + kw] += acc;
              }
            }
          }
        });
      }
      if (bias && bias->requires_grad) {
        bias->ensure_grad();
        for (int64_t co = 0; co < d.co; ++co) {
          S acc = S(0);
          for (int64_t n = 0; n < d.n; ++n) {
            const S* gp = g + (n * d.co + co) * d.ho * d.wo;
            for (int64_t i = 0; i < d.ho * d.wo; ++i) acc += gp[i];
          }
          bias->grad[co] += acc;
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> conv2d(const TensorPtr<S>& x, const TensorPtr<S>& w, const TensorPtr<S>& bias,
                    int stride, int padding, Tape<S>* tape) {
  return conv2d_impl(x, w, bias, stride, padding, padding, tape, false);
}

template <typename S>
TensorPtr<S> conv2d_depthwise(const TensorPtr<S>& x, const TensorPtr<S>& w,
                              const TensorPtr<S>& bias, int stride, int padding, Tape<S>* tape) {
  return conv2d_impl(x, w, bias, stride, padding, padding, tape, true);
}

template <typename S>
TensorPtr<S> conv2d_pad_hw(const TensorPtr<S>& x, const TensorPtr<S>& w, const TensorPtr<S>& bias,
                           int stride, int pad_h, int pad_w, Tape<S>* tape) {
  return conv2d_impl(x, w, bias, stride, pad_h, pad_w, tape, false);
}

// --- normalization -----------------------------------------------------------------

template <typename S>
TensorPtr<S> instance_norm(const TensorPtr<S>& x, double eps, Tape<S>* tape) {
  check_4d(x->shape, "instance_norm");
  check<ConfigError>(eps > 0.0, "instance_norm: eps must be positive");
  const int64_t n = x->shape[0], c = x->shape[1], m = x->shape[2] * x->shape[3];
  auto out = make_tensor<S>(x->shape);
  auto inv_std = std::make_shared<std::vector<S>>(static_cast<size_t>(n * c));
  parallel_for(n * c, [&](int64_t lo, int64_t hi) {
    for (int64_t idx = lo; idx < hi; ++idx) {
      const S* xp = x->values.data() + idx * m;
      S* op = out->values.data() + idx * m;
      S mean = S(0);
      for (int64_t i = 0; i < m; ++i) mean += xp[i];
      mean /= static_cast<S>(m);
      S var = S(0);
      for (int64_t i = 0; i < m; ++i) {
        const S dv = xp[i] - mean;
        var += dv * dv;
      }
      var /= static_cast<S>(m);
      const S is = static_cast<S>(1.0 / std::sqrt(static_cast<double>(var) + eps));
      (*inv_std)[static_cast<size_t>(idx)] = is;
      for (int64_t i = 0; i < m; ++i) op[i] = (xp[i] - mean) * is;
    }
  });
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("instance_norm", {x}, out, [x, out, inv_std, n, c, m] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      parallel_for(n * c, [&](int64_t lo, int64_t hi) {
        for (int64_t idx = lo; idx < hi; ++idx) {
          const S* g = out->grad.data() + idx * m;
          const S* y = out->values.data() + idx * m;
          S* dx = x->grad.data() + idx * m;
          const S is = (*inv_std)[static_cast<size_t>(idx)];
          S mg = S(0), mgy = S(0);
          for (int64_t i = 0; i < m; ++i) {
            mg += g[i];
            mgy += g[i] * y[i];
          }
          mg /= static_cast<S>(m);
          mgy /= static_cast<S>(m);
          for (int64_t i = 0; i < m; ++i) dx[i] += (g[i] - mg - y[i] * mgy) * is;
        }
      });
    });
  }
  return out;
}

// --- softmax -------------------------------------------------------------------------

template <typename S>
TensorPtr<S> softmax(const TensorPtr<S>& x, int axis, Tape<S>* tape) {
  const int rank = static_cast<int>(x->shape.size());
  if (axis < 0) axis += rank;
  check<ConfigError>(axis >= 0 && axis < rank, "softmax: axis out of range");
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= x->shape[i];
  for (int i = axis + 1; i < rank; ++i) inner *= x->shape[i];
  const int64_t len = x->shape[axis];

  auto out = make_tensor<S>(x->shape);
  parallel_for(outer, [&](int64_t lo, int64_t hi) {
    for (int64_t o = lo; o < hi; ++o) {
      for (int64_t in = 0; in < inner; ++in) {
        const S* xp = x->values.data() + o * len * inner + in;
        S* op = out->values.data() + o * len * inner + in;
        S mx = xp[0];
        for (int64_t i = 1; i < len; ++i) mx = std::max(mx, xp[i * inner]);
        S sum = S(0);
        for (int64_t i = 0; i < len; ++i) {
          const S e = static_cast<S>(std::exp(static_cast<double>(xp[i * inner] - mx)));
          op[i * inner] = e;
          sum += e;
        }
        const S inv = S(1) / sum;
        for (int64_t i = 0; i < len; ++i) op[i * inner] *= inv;
      }
    }
  });
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("softmax", {x}, out, [x, out, outer, inner, len] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      parallel_for(outer, [&](int64_t lo, int64_t hi) {
        for (int64_t o = lo; o < hi; ++o) {
          for (int64_t in = 0; in < inner; ++in) {
            const S* g = out->grad.data() + o * len * inner + in;
            const S* y = out->values.data() + o * len * inner + in;
            S* dx = x->grad.data() + o * len * inner + in;
            S dot = S(0);
            for (int64_t i = 0; i < len; ++i) dot += g[i * inner] * y[i * inner];
            for (int64_t i = 0; i < len; ++i)
              dx[i * inner] += y[i * inner] * (g[i * inner] - dot);
          }
        }
      });
    });
  }
  return out;
}

// --- pooling / upsampling -----------------------------------------------------------

template <typename S>
TensorPtr<S> pool_global(const TensorPtr<S>& x, PoolMode mode, Tape<S>* tape) {
  check_4d(x->shape, "pool_global");
  const int64_t n = x->shape[0], c = x->shape[1], m = x->shape[2] * x->shape[3];
  auto out = make_tensor<S>({n, c, 1, 1});
  auto argmax = std::make_shared<std::vector<int64_t>>();
  if (mode == PoolMode::max) argmax->assign(static_cast<size_t>(n * c), 0);
  for (int64_t idx = 0; idx < n * c; ++idx) {
    const S* xp = x->values.data() + idx * m;
    if (mode == PoolMode::mean) {
      S acc = S(0);
      for (int64_t i = 0; i < m; ++i) acc += xp[i];
      out->values[idx] = acc / static_cast<S>(m);
    } else {
      int64_t best = 0;
      for (int64_t i = 1; i < m; ++i)
        if (xp[i] > xp[best]) best = i;
      (*argmax)[static_cast<size_t>(idx)] = best;
      out->values[idx] = xp[best];
    }
  }
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("pool_global", {x}, out, [x, out, argmax, n, c, m, mode] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (int64_t idx = 0; idx < n * c; ++idx) {
        const S g = out->grad[idx];
        S* dx = x->grad.data() + idx * m;
        if (mode == PoolMode::mean) {
          const S gm = g / static_cast<S>(m);
          for (int64_t i = 0; i < m; ++i) dx[i] += gm;
        } else {
          dx[(*argmax)[static_cast<size_t>(idx)]] += g;
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> upsample2x(const TensorPtr<S>& x, UpsampleMode mode, Tape<S>* tape) {
  check_4d(x->shape, "upsample2x");
  const int64_t n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
  const int64_t oh = 2 * h, ow = 2 * w;
  auto out = make_tensor<S>({n, c, oh, ow});

  if (mode == UpsampleMode::nearest) {
    parallel_for(n * c, [&](int64_t lo, int64_t hi) {
      for (int64_t idx = lo; idx < hi; ++idx) {
        const S* xp = x->values.data() + idx * h * w;
        S* op = out->values.data() + idx * oh * ow;
        for (int64_t i = 0; i < h; ++i) {
          for (int64_t j = 0; j < w; ++j) {
            const S v = xp[i * w + j];
            op[(2 * i) * ow + 2 * j] = v;
            op[(2 * i) * ow + 2 * j + 1] = v;
            op[(2 * i + 1) * ow + 2 * j] = v;
            op[(2 * i + 1) * ow + 2 * j + 1] = v;
          }
        }
      }
    });
    if (taped(tape, {x})) {
      out->requires_grad = true;
      tape->record("upsample2x_nearest", {x}, out, [x, out, n, c, h, w, oh, ow] {
        if (!x->requires_grad) return;
        x->ensure_grad();
        for (int64_t idx = 0; idx < n * c; ++idx) {
          S* dx = x->grad.data() + idx * h * w;
          const S* g = out->grad.data() + idx * oh * ow;
          for (int64_t i = 0; i < h; ++i)
            for (int64_t j = 0; j < w; ++j)
              dx[i * w + j] += g[(2 * i) * ow + 2 * j] + g[(2 * i) * ow + 2 * j + 1] +
                               g[(2 * i + 1) * ow + 2 * j] + g[(2 * i + 1) * ow + 2 * j + 1];
        }
      });
    }
    return out;
  }

  // Bilinear, half-pixel mapping: src = (dst + 0.5) / 2 - 0.5, edges clamped.
  struct Tap {
    int64_t i0, i1;
    S w0, w1;
  };
  auto make_taps = [](int64_t in_len, int64_t out_len) {
    std::vector<Tap> taps(static_cast<size_t>(out_len));
    for (int64_t d = 0; d < out_len; ++d) {
      const double src = (static_cast<double>(d) + 0.5) / 2.0 - 0.5;
      double f = std::floor(src);
      int64_t i0 = static_cast<int64_t>(f);
      const double frac = src - f;
      int64_t i1 = i0 + 1;
      i0 = std::clamp<int64_t>(i0, 0, in_len - 1);
      i1 = std::clamp<int64_t>(i1, 0, in_len - 1);
      taps[static_cast<size_t>(d)] = Tap{i0, i1, static_cast<S>(1.0 - frac), static_cast<S>(frac)};
    }
    return taps;
  };
  const auto htaps = make_taps(h, oh);
  const auto wtaps = make_taps(w, ow);

  parallel_for(n * c, [&](int64_t lo, int64_t hi) {
    for (int64_t idx = lo; idx < hi; ++idx) {
      const S* xp = x->values.data() + idx * h * w;
      S* op = out->values.data() + idx * oh * ow;
      for (int64_t i = 0; i < oh; ++i) {
        const Tap& th = htaps[static_cast<size_t>(i)];
        for (int64_t j = 0; j < ow; ++j) {
          const Tap& tw = wtaps[static_cast<size_t>(j)];
          op[i * ow + j] = th.w0 * (tw.w0 * xp[th.i0 * w + tw.i0] + tw.w1 * xp[th.i0 * w + tw.i1]) +
                           th.w1 * (tw.w0 * xp[th.i1 * w + tw.i0] + tw.w1 * xp[th.i1 * w + tw.i1]);
        }
      }
    }
  });
  if (taped(tape, {x})) {
    out->requires_grad = true;
    tape->record("upsample2x_bilinear", {x}, out, [x, out, htaps, wtaps, n, c, h, w, oh, ow] {
      if (!x->requires_grad) return;
      x->ensure_grad();
      for (int64_t idx = 0; idx < n * c; ++idx) {
        S* dx = x->grad.data() + idx * h * w;
        const S* g = out->grad.data() + idx * oh * ow;
        for (int64_t i = 0; i < oh; ++i) {
          const Tap& th = htaps[static_cast<size_t>(i)];
          for (int64_t j = 0; j < ow; ++j) {
            const Tap& tw = wtaps[static_cast<size_t>(j)];
            const S gv = g[i * ow + j];
            dx[th.i0 * w + tw.i0] += th.w0 * tw.w0 * gv;
            dx[th.i0 * w + tw.i1] += th.w0 * tw.w1 * gv;
            dx[th.i1 * w + tw.i0] += th.w1 * tw.w0 * gv;
            dx[th.i1 * w + tw.i1] += th.w1 * tw.w1 * gv;
          }
        }
      }
    });
  }
  return out;
}

template <typename S>
TensorPtr<S> scale_channels(const TensorPtr<S>& x, const TensorPtr<S>& s, Tape<S>* tape) {
  check_4d(x->shape, "scale_channels");
  check(s->shape.size() == 4 && s->shape[0] == x->shape[0] && s->shape[1] == x->shape[1] &&
            s->shape[2] == 1 && s->shape[3] == 1,
        "scale_channels: scale must be [N,C,1,1] matching input");
  const int64_t n = x->shape[0], c = x->shape[1], m = x->shape[2] * x->shape[3];
  auto out = make_tensor<S>(x->shape);
  for (int64_t idx = 0; idx < n * c; ++idx) {
    const S sv = s->values[idx];
    const S* xp = x->values.data() + idx * m;
    S* op = out->values.data() + idx * m;
    for (int64_t i = 0; i < m; ++i) op[i] = xp[i] * sv;
  }
  if (taped(tape, {x, s})) {
    out->requires_grad = true;
    tape->record("scale_channels", {x, s}, out, [x, s, out, n, c, m] {
      if (x->requires_grad) x->ensure_grad();
      if (s->requires_grad) s->ensure_grad();
      for (int64_t idx = 0; idx < n * c; ++idx) {
        const S* g = out->grad.data() + idx * m;
        if (x->requires_grad) {
          const S sv = s->values[idx];
          S* dx = x->grad.data() + idx * m;
          for (int64_t i = 0; i < m; ++i) dx[i] += g[i] * sv;
        }
        if (s->requires_grad) {
          const S* xp = x->values.data() + idx * m;
          S acc = S(0);
          for (int64_t i = 0; i < m; ++i) acc += g[i] * xp[i];
          s->grad[idx] += acc;
        }
      }
    });
  }
  return out;
}

// --- attention ------------------------------------------------------------------------

namespace {

constexpr int64_t kQueryBlock = 48;

// Computes softmax(q k^T * scale) for one query block, row by row.
template <typename S>
void attention_probs(const S* q, const S* k, S* probs, int64_t qb, int64_t tk, int64_t dh,
                     int64_t dstride, S scale) {
  for (int64_t i = 0; i < qb; ++i) {
    const S* qi = q + i * dstride;
    S* row = probs + i * tk;
    for (int64_t t = 0; t < tk; ++t) {
      const S* kt = k + t * dstride;
      S acc = S(0);
      for (int64_t dd = 0; dd < dh; ++dd) acc += qi[dd] * kt[dd];
      row[t] = acc * scale;
    }
    S mx = row[0];
    for (int64_t t = 1; t < tk; ++t) mx = std::max(mx, row[t]);
    S sum = S(0);
    for (int64_t t = 0; t < tk; ++t) {
      const S e = static_cast<S>(std::exp(static_cast<double>(row[t] - mx)));
      row[t] = e;
      sum += e;
    }
    const S inv = S(1) / sum;
    for (int64_t t = 0; t < tk; ++t) row[t] *= inv;
  }
}

}  // namespace

template <typename S>
TensorPtr<S> multihead_attention(const TensorPtr<S>& q, const TensorPtr<S>& k,
                                 const TensorPtr<S>& v, int heads, Tape<S>* tape) {
  check(q->shape.size() == 3 && k->shape.size() == 3 && v->shape.size() == 3,
        "attention expects token tensors [B,T,D]");
  const int64_t b = q->shape[0], tq = q->shape[1], dmodel = q->shape[2];
  const int64_t tk = k->shape[1];
  check(k->shape[0] == b && v->shape[0] == b, "attention: batch mismatch");
  check(k->shape[2] == dmodel && v->shape[2] == dmodel, "attention: feature dim mismatch");
  check(v->shape[1] == tk, "attention: key/value token count mismatch");
  check<ConfigError>(heads >= 1 && dmodel % heads == 0,
                     "attention: heads must divide the feature dimension");
  const int64_t dh = dmodel / heads;
  const S scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));

  auto out = make_tensor<S>({b, tq, dmodel});
  auto run_block = [&](const S* qv, const S* kv, const S* vv, S* ov, int64_t bb, int64_t hd,
                       std::vector<S>& probs) {
    const S* qbase = qv + bb * tq * dmodel + hd * dh;
    const S* kbase = kv + bb * tk * dmodel + hd * dh;
    const S* vbase = vv + bb * tk * dmodel + hd * dh;
    S* obase = ov + bb * tq * dmodel + hd * dh;
    for (int64_t q0 = 0; q0 < tq; q0 += kQueryBlock) {
      const int64_t qb = std::min<int64_t>(kQueryBlock, tq - q0);
      attention_probs(qbase + q0 * dmodel, kbase, probs.data(), qb, tk, dh, dmodel, scale);
      for (int64_t i = 0; i < qb; ++i) {
        S* orow = obase + (q0 + i) * dmodel;
        std::fill(orow, orow + dh, S(0));
        const S* prow = probs.data() + i * tk;
        for (int64_t t = 0; t < tk; ++t) {
          const S p = prow[t];
          const S* vrow = vbase + t * dmodel;
          for (int64_t dd = 0; dd < dh; ++dd) orow[dd] += p * vrow[dd];
        }
      }
    }
  };

  parallel_for(b * heads, [&](int64_t lo, int64_t hi) {
    std::vector<S> probs(static_cast<size_t>(kQueryBlock * tk));
    for (int64_t idx = lo; idx < hi; ++idx)
      run_block(q->values.data(), k->values.data(), v->values.data(), out->values.data(),
                idx / heads, idx % heads, probs);
  });

  if (taped(tape, {q, k, v})) {
    out->requires_grad = true;
    tape->record("multihead_attention", {q, k, v}, out,
                 [q, k, v, out, b, tq, tk, dmodel, dh, heads, scale] {
      if (q->requires_grad) q->ensure_grad();
      if (k->requires_grad) k->ensure_grad();
      if (v->requires_grad) v->ensure_grad();
      // Heads write disjoint feature slices, so (batch, head) tasks are
      // independent single-writer units.
      parallel_for(b * heads, [&](int64_t lo, int64_t hi) {
        std::vector<S> probs(static_cast<size_t>(kQueryBlock * tk));
        std::vector<S> dp(static_cast<size_t>(tk));
        for (int64_t idx = lo; idx < hi; ++idx) {
          const int64_t bb = idx / heads;
          const int64_t hd = idx % heads;
          const S* qbase = q->values.data() + bb * tq * dmodel + hd * dh;
          const S* kbase = k->values.data() + bb * tk * dmodel + hd * dh;
          const S* vbase = v->values.data() + bb * tk * dmodel + hd * dh;
          const S* gbase = out->grad.data() + bb * tq * dmodel + hd * dh;
          S* dqbase = q->requires_grad ? q->grad.data() + bb * tq * dmodel + hd * dh : nullptr;
          S* dkbase = k->requires_grad ? k->grad.data() + bb * tk * dmodel + hd * dh : nullptr;
          S* dvbase = v->requires_grad ? v->grad.data() + bb * tk * dmodel + hd * dh : nullptr;
          for (int64_t q0 = 0; q0 < tq; q0 += kQueryBlock) {
            const int64_t qb = std::min<int64_t>(kQueryBlock, tq - q0);
            attention_probs(qbase + q0 * dmodel, kbase, probs.data(), qb, tk, dh, dmodel, scale);
            for (int64_t i = 0; i < qb; ++i) {
              const S* prow = probs.data() + i * tk;
              const S* grow = gbase + (q0 + i) * dmodel;
              // dP[t] = g . v_t, then dS = P * (dP - (dP . P)).
              S rowdot = S(0);
              for (int64_t t = 0; t < tk; ++t) {
                const S* vrow = vbase + t * dmodel;
                S acc = S(0);
                for (int64_t dd = 0; dd < dh; ++dd) acc += grow[dd] * vrow[dd];
                dp[static_cast<size_t>(t)] = acc;
                rowdot += acc * prow[t];
              }
              const S* qrow = qbase + (q0 + i) * dmodel;
              S* dqrow = dqbase ? dqbase + (q0 + i) * dmodel : nullptr;
              for (int64_t t = 0; t < tk; ++t) {
                const S p = prow[t];
                const S ds = p * (dp[static_cast<size_t>(t)] - rowdot) * scale;
                const S* krow = kbase + t * dmodel;
                if (dqrow)
                  for (int64_t dd = 0; dd < dh; ++dd) dqrow[dd] += ds * krow[dd];
                if (dkbase) {
                  S* dkrow = dkbase + t * dmodel;
                  for (int64_t dd = 0; dd < dh; ++dd) dkrow[dd] += ds * qrow[dd];
                }
                if (dvbase) {
                  S* dvrow = dvbase + t * dmodel;
                  for (int64_t dd = 0; dd < dh; ++dd) dvrow[dd] += p * grow[dd];
                }
              }
            }
          }
        }
      });
    });
  }
  return out;
}

// --- tape-free image helpers --------------------------------------------------------

namespace {

double cubic_weight(double t) {
  constexpr double a = -0.5;
  const double at = std::abs(t);
  if (at <= 1.0) return (a + 2.0) * at * at * at - (a + 3.0) * at * at + 1.0;
  if (at < 2.0) return a * at * at * at - 5.0 * a * at * at + 8.0 * a * at - 4.0 * a;
  return 0.0;
}

struct CubicTap {
  int64_t idx[4];
  double w[4];
};

std::vector<CubicTap> cubic_taps(int64_t in_len, int64_t out_len) {
  std::vector<CubicTap> taps(static_cast<size_t>(out_len));
  const double scale = static_cast<double>(in_len) / static_cast<double>(out_len);
  for (int64_t d = 0; d < out_len; ++d) {
    const double src = (static_cast<double>(d) + 0.5) * scale - 0.5;
    const int64_t i1 = static_cast<int64_t>(std::floor(src));
    const double frac = src - static_cast<double>(i1);
    CubicTap tap{};
    for (int j = 0; j < 4; ++j) {
      const int64_t ii = i1 - 1 + j;
      tap.idx[j] = std::clamp<int64_t>(ii, 0, in_len - 1);
      tap.w[j] = cubic_weight(static_cast<double>(j - 1) - frac);
    }
    taps[static_cast<size_t>(d)] = tap;
  }
  return taps;
}

}  // namespace

template <typename S>
TensorPtr<S> resize_bicubic(const TensorPtr<S>& x, int64_t out_h, int64_t out_w) {
  check_4d(x->shape, "resize_bicubic");
  check<ConfigError>(out_h >= 1 && out_w >= 1, "resize_bicubic: output dims must be positive");
  const int64_t n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
  const auto htaps = cubic_taps(h, out_h);
  const auto wtaps = cubic_taps(w, out_w);
  auto out = make_tensor<S>({n, c, out_h, out_w});
  // Separable: horizontal pass into a temp strip, then vertical pass.
  parallel_for(n * c, [&](int64_t lo, int64_t hi) {
    std::vector<double> tmp(static_cast<size_t>(h * out_w));
    for (int64_t idx = lo; idx < hi; ++idx) {
      const S* xp = x->values.data() + idx * h * w;
      for (int64_t i = 0; i < h; ++i) {
        const S* row = xp + i * w;
        double* trow = tmp.data() + i * out_w;
        for (int64_t j = 0; j < out_w; ++j) {
          const CubicTap& tap = wtaps[static_cast<size_t>(j)];
          trow[j] = tap.w[0] * row[tap.idx[0]] + tap.w[1] * row[tap.idx[1]] +
                    tap.w[2] * row[tap.idx[2]] + tap.w[3] * row[tap.idx[3]];
        }
      }
      S* op = out->values.data() + idx * out_h * out_w;
      for (int64_t i = 0; i < out_h; ++i) {
        const CubicTap& tap = htaps[static_cast<size_t>(i)];
        S* orow = op + i * out_w;
        for (int64_t j = 0; j < out_w; ++j) {
          orow[j] = static_cast<S>(tap.w[0] * tmp[tap.idx[0] * out_w + j] +
                                   tap.w[1] * tmp[tap.idx[1] * out_w + j] +
                                   tap.w[2] * tmp[tap.idx[2] * out_w + j] +
                                   tap.w[3] * tmp[tap.idx[3] * out_w + j]);
        }
      }
    }
  });
  return out;
}

template <typename S>
TensorPtr<S> clamp01(const TensorPtr<S>& x) {
  auto out = make_tensor<S>(x->shape);
  const int64_t n = x->size();
  for (int64_t i = 0; i < n; ++i) out->values[i] = std::clamp(x->values[i], S(0), S(1));
  return out;
}

// --- instantiations ------------------------------------------------------------------

#define ECF_INSTANTIATE_OPS(S)                                                                   \
  template TensorPtr<S> add(const TensorPtr<S>&, const TensorPtr<S>&, Tape<S>*);                 \
  template TensorPtr<S> sub(const TensorPtr<S>&, const TensorPtr<S>&, Tape<S>*);                 \
  template TensorPtr<S> mul(const TensorPtr<S>&, const TensorPtr<S>&, Tape<S>*);                 \
  template TensorPtr<S> add_scalar(const TensorPtr<S>&, S, Tape<S>*);                            \
  template TensorPtr<S> mul_scalar(const TensorPtr<S>&, S, Tape<S>*);                            \
  template TensorPtr<S> relu(const TensorPtr<S>&, Tape<S>*);                                     \
  template TensorPtr<S> sigmoid(const TensorPtr<S>&, Tape<S>*);                                  \
  template TensorPtr<S> abs_val(const TensorPtr<S>&, Tape<S>*);                                  \
  template TensorPtr<S> sum_all(const TensorPtr<S>&, Tape<S>*);                                  \
  template TensorPtr<S> mean_all(const TensorPtr<S>&, Tape<S>*);                                 \
  template TensorPtr<S> concat_channels(const std::vector<TensorPtr<S>>&, Tape<S>*);             \
  template TensorPtr<S> nchw_to_tokens(const TensorPtr<S>&, Tape<S>*);                           \
  template TensorPtr<S> tokens_to_nchw(const TensorPtr<S>&, int64_t, int64_t, Tape<S>*);         \
  template TensorPtr<S> reshape(const TensorPtr<S>&, std::vector<int64_t>, Tape<S>*);            \
  template TensorPtr<S> matmul(const TensorPtr<S>&, const TensorPtr<S>&, Tape<S>*);              \
  template TensorPtr<S> conv2d(const TensorPtr<S>&, const TensorPtr<S>&, const TensorPtr<S>&,    \
                               int, int, Tape<S>*);                                              \
  template TensorPtr<S> conv2d_depthwise(const TensorPtr<S>&, const TensorPtr<S>&,               \
                                         const TensorPtr<S>&, int, int, Tape<S>*);               \
  template TensorPtr<S> conv2d_pad_hw(const TensorPtr<S>&, const TensorPtr<S>&,                  \
                                      const TensorPtr<S>&, int, int, int, Tape<S>*);             \
  template TensorPtr<S> instance_norm(const TensorPtr<S>&, double, Tape<S>*);                    \
  template TensorPtr<S> softmax(const TensorPtr<S>&, int, Tape<S>*);                             \
  template TensorPtr<S> pool_global(const TensorPtr<S>&, PoolMode, Tape<S>*);                    \
  template TensorPtr<S> upsample2x(const TensorPtr<S>&, UpsampleMode, Tape<S>*);                 \
  template TensorPtr<S> scale_channels(const TensorPtr<S>&, const TensorPtr<S>&, Tape<S>*);      \
  template TensorPtr<S> multihead_attention(const TensorPtr<S>&, const TensorPtr<S>&,            \
                                            const TensorPtr<S>&, int, Tape<S>*);                 \
  template TensorPtr<S> resize_bicubic(const TensorPtr<S>&, int64_t, int64_t);                   \
  template TensorPtr<S> clamp01(const TensorPtr<S>&);

ECF_INSTANTIATE_OPS(float)
ECF_INSTANTIATE_OPS(double)

#undef ECF_INSTANTIATE_OPS

}  // namespace ecf
