#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "cephmark/tensor.hpp"

// Forward/backward primitives. Every forward runs eagerly; when a Tape is
// supplied and some input requires a gradient, the matching adjoint closure
// is recorded. Reductions accumulate in a fixed order, so outputs are
// bitwise deterministic for a given build, independent of the thread count.

namespace cephmark::ag {

namespace detail {

template <typename T>
inline void ensure_finite(const Tensor<T>& t, const char* op) {
  if (!t.all_finite())
    throw NumericError(std::string(op) + ": non-finite value in tensor of shape " + shape_str(t.shape()));
}

// cols layout: [C_in*k*k, P] with P = out_h*out_w, row-major.
template <typename T>
inline void im2col(const T* src, int channels, int height, int width, int k, int stride,
                   int padding, int out_h, int out_w, T* cols) {
  const int64_t patch = static_cast<int64_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* dst = cols + ((static_cast<int64_t>(c) * k + ky) * k + kx) * patch;
        for (int oy = 0; oy < out_h; ++oy) {
          int iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= height) {
            std::fill(dst, dst + out_w, T{});
            dst += out_w;
            continue;
          }
          const T* row = src + (static_cast<int64_t>(c) * height + iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            int ix = ox * stride + kx - padding;
            *dst++ = (ix >= 0 && ix < width) ? row[ix] : T{};
          }
        }
      }
    }
  }
}

template <typename T>
inline void col2im_add(const T* cols, int channels, int height, int width, int k, int stride,
                       int padding, int out_h, int out_w, T* dst) {
  const int64_t patch = static_cast<int64_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* src = cols + ((static_cast<int64_t>(c) * k + ky) * k + kx) * patch;
        for (int oy = 0; oy < out_h; ++oy) {
          int iy = oy * stride + ky - padding;
          if (iy < 0 || iy >= height) {
            src += out_w;
            continue;
          }
          T* row = dst + (static_cast<int64_t>(c) * height + iy) * width;
          for (int ox = 0; ox < out_w; ++ox) {
            int ix = ox * stride + kx - padding;
            if (ix >= 0 && ix < width) row[ix] += src[ox];
          }
          src += out_w;
        }
      }
    }
  }
}

// threading pays off only past this many multiply-adds per call
constexpr int64_t kParallelFlopThreshold = 1 << 21;

inline void maybe_parallel_for(int64_t n, int64_t flops,
                               const std::function<void(int64_t, int64_t)>& body) {
  if (flops < kParallelFlopThreshold) {
    body(0, n);
    return;
  }
  parallel_for(n, body);
}

// out[m, :] = init[m] broadcast; out += A[m, k] * B[k, :]. Row-parallel.
template <typename T>
inline void matmul_rows(const T* a, const T* b, T* out, int64_t m, int64_t kdim, int64_t n,
                        const T* row_init) {
  maybe_parallel_for(m, m * kdim * n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      T* orow = out + i * n;
      T init = row_init ? row_init[i] : T{};
      for (int64_t j = 0; j < n; ++j) orow[j] = init;
      const T* arow = a + i * kdim;
      for (int64_t kk = 0; kk < kdim; ++kk) {
        T av = arow[kk];
        if (av == T{}) continue;
        const T* brow = b + kk * n;
        for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });
}

// out[m, k] += sum_j A[m, j] * B[k, j]  (A: [m, n], B: [kdim, n])
template <typename T>
inline void matmul_nt_add(const T* a, const T* b, T* out, int64_t m, int64_t kdim, int64_t n) {
  maybe_parallel_for(m, m * kdim * n, [&](int64_t lo, int64_t hi) {
    for (int64_t i = lo; i < hi; ++i) {
      const T* arow = a + i * n;
      T* orow = out + i * kdim;
      for (int64_t kk = 0; kk < kdim; ++kk) {
        const T* brow = b + kk * n;
        T acc{};
        for (int64_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
        orow[kk] += acc;
      }
    }
  });
}

// out[k, :] += sum_m A[m, k] * B[m, :]  (A: [m, kdim], B: [m, n])
template <typename T>
inline void matmul_tn(const T* a, const T* b, T* out, int64_t m, int64_t kdim, int64_t n) {
  maybe_parallel_for(kdim, m * kdim * n, [&](int64_t lo, int64_t hi) {
    for (int64_t kk = lo; kk < hi; ++kk) {
      T* orow = out + kk * n;
      for (int64_t j = 0; j < n; ++j) orow[j] = T{};
      for (int64_t i = 0; i < m; ++i) {
        T av = a[i * kdim + kk];
        if (av == T{}) continue;
        const T* brow = b + i * n;
        for (int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });
}

}  // namespace detail

// Cross-correlation (no kernel flip) with zero padding.
// input [C_in,H,W], kernels [C_out,C_in,k,k], bias [C_out] -> [C_out,H',W']
template <typename T>
Tensor<T> conv2d(Tape<T>* tape, const Tensor<T>& input, const Tensor<T>& kernels,
                 const Tensor<T>& bias, int stride = 1, int padding = 0) {
  if (input.ndim() != 3)
    throw ShapeError("conv2d: input must be [C,H,W], got " + shape_str(input.shape()));
  if (kernels.ndim() != 4)
    throw ShapeError("conv2d: kernels must be [C_out,C_in,k,k], got " + shape_str(kernels.shape()));
  if (kernels.dim(2) != kernels.dim(3))
    throw ShapeError("conv2d: only square kernels supported, got " + shape_str(kernels.shape()));
  const int c_in = input.dim(0), height = input.dim(1), width = input.dim(2);
  const int c_out = kernels.dim(0), k = kernels.dim(2);
  if (kernels.dim(1) != c_in)
    throw ShapeError("conv2d: kernel channels " + shape_str(kernels.shape()) +
                     " do not match input " + shape_str(input.shape()));
  if (bias.ndim() != 1 || bias.dim(0) != c_out)
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match kernels " +
                     shape_str(kernels.shape()));
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  if (padding < 0) throw ShapeError("conv2d: padding must be >= 0");
  if (k > height + 2 * padding || k > width + 2 * padding)
    throw ShapeError("conv2d: kernel size " + std::to_string(k) + " exceeds padded input " +
                     shape_str(input.shape()) + " with padding " + std::to_string(padding));

  const int out_h = (height + 2 * padding - k) / stride + 1;
  const int out_w = (width + 2 * padding - k) / stride + 1;
  const int64_t patch = static_cast<int64_t>(out_h) * out_w;
  const int64_t ckk = static_cast<int64_t>(c_in) * k * k;

  auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(ckk * patch));
  detail::im2col(input.values().data(), c_in, height, width, k, stride, padding, out_h, out_w,
                 cols->data());

  Tensor<T> out = Tensor<T>::zeros({c_out, out_h, out_w});
  detail::matmul_rows(kernels.values().data(), cols->data(), out.values().data(), c_out, ckk,
                      patch, bias.values().data());
  detail::ensure_finite(out, "conv2d");

  bool rg = detail::wants_grad(tape, {&input, &kernels, &bias});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto in_s = input;
    auto k_s = kernels;
    auto b_s = bias;
    auto out_s = out;
    tape->record([in_s, k_s, b_s, out_s, cols, c_in, height, width, k, stride, padding, out_h,
                  out_w, ckk, patch]() mutable {
      const T* gout = out_s.grad().data();
      const int c_out = k_s.dim(0);
      if (b_s.requires_grad()) {
        T* gb = b_s.grad().data();
        for (int co = 0; co < c_out; ++co) {
          T acc{};
          const T* row = gout + co * patch;
          for (int64_t p = 0; p < patch; ++p) acc += row[p];
          gb[co] += acc;
        }
      }
      if (k_s.requires_grad())
        detail::matmul_nt_add(gout, cols->data(), k_s.grad().data(), c_out, ckk, patch);
      if (in_s.requires_grad()) {
        std::vector<T> gcols(static_cast<size_t>(ckk * patch));
        detail::matmul_tn(k_s.values().data(), gout, gcols.data(), c_out, ckk, patch);
        detail::col2im_add(gcols.data(), c_in, height, width, k, stride, padding, out_h, out_w,
                           in_s.grad().data());
      }
    });
  }
  return out;
}

// Max over non-overlapping k x k windows; H and W must be divisible by k.
// Gradient routes to the argmax cell, first occurrence in row-major order.
template <typename T>
Tensor<T> maxpool2d(Tape<T>* tape, const Tensor<T>& input, int k) {
  if (input.ndim() != 3)
    throw ShapeError("maxpool2d: input must be [C,H,W], got " + shape_str(input.shape()));
  if (k < 1) throw ShapeError("maxpool2d: window must be >= 1");
  const int channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  if (height % k != 0 || width % k != 0)
    throw ShapeError("maxpool2d: input " + shape_str(input.shape()) + " not divisible by window " +
                     std::to_string(k));
  const int out_h = height / k, out_w = width / k;

  Tensor<T> out = Tensor<T>::zeros({channels, out_h, out_w});
  auto argmax = std::make_shared<std::vector<int32_t>>(out.numel());
  const T* src = input.values().data();
  T* dst = out.values().data();
  int64_t oi = 0;
  for (int c = 0; c < channels; ++c) {
    const T* plane = src + static_cast<int64_t>(c) * height * width;
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox, ++oi) {
        T best{};
        int32_t best_at = -1;
        for (int dy = 0; dy < k; ++dy) {
          const T* row = plane + static_cast<int64_t>(oy * k + dy) * width + ox * k;
          for (int dx = 0; dx < k; ++dx) {
            if (best_at < 0 || row[dx] > best) {
              best = row[dx];
              best_at = static_cast<int32_t>((oy * k + dy) * width + ox * k + dx);
            }
          }
        }
        dst[oi] = best;
        (*argmax)[oi] = best_at;
      }
    }
  }

  bool rg = detail::wants_grad(tape, {&input});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto in_s = input;
    auto out_s = out;
    int64_t plane_in = static_cast<int64_t>(height) * width;
    int64_t plane_out = static_cast<int64_t>(out_h) * out_w;
    tape->record([in_s, out_s, argmax, channels, plane_in, plane_out]() mutable {
      const T* gout = out_s.grad().data();
      T* gin = in_s.grad().data();
      for (int c = 0; c < channels; ++c)
        for (int64_t p = 0; p < plane_out; ++p)
          gin[c * plane_in + (*argmax)[c * plane_out + p]] += gout[c * plane_out + p];
    });
  }
  return out;
}

// Nearest-neighbor replication by factor k; adjoint sums each k x k block.
template <typename T>
Tensor<T> upsample2d(Tape<T>* tape, const Tensor<T>& input, int k) {
  if (input.ndim() != 3)
    throw ShapeError("upsample2d: input must be [C,H,W], got " + shape_str(input.shape()));
  if (k < 1) throw ShapeError("upsample2d: factor must be >= 1");
  const int channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  const int out_h = height * k, out_w = width * k;

  Tensor<T> out = Tensor<T>::zeros({channels, out_h, out_w});
  const T* src = input.values().data();
  T* dst = out.values().data();
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        T v = src[(static_cast<int64_t>(c) * height + y) * width + x];
        for (int dy = 0; dy < k; ++dy) {
          T* row = dst + (static_cast<int64_t>(c) * out_h + y * k + dy) * out_w + x * k;
          for (int dx = 0; dx < k; ++dx) row[dx] = v;
        }
      }
    }
  }

  bool rg = detail::wants_grad(tape, {&input});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto in_s = input;
    auto out_s = out;
    tape->record([in_s, out_s, channels, height, width, k, out_h, out_w]() mutable {
      const T* gout = out_s.grad().data();
      T* gin = in_s.grad().data();
      for (int c = 0; c < channels; ++c)
        for (int y = 0; y < height; ++y)
          for (int x = 0; x < width; ++x) {
            T acc{};
            for (int dy = 0; dy < k; ++dy) {
              const T* row = gout + (static_cast<int64_t>(c) * out_h + y * k + dy) * out_w + x * k;
              for (int dx = 0; dx < k; ++dx) acc += row[dx];
            }
            gin[(static_cast<int64_t>(c) * height + y) * width + x] += acc;
          }
    });
  }
  return out;
}

// Softmax across channels at every pixel, computed with max subtraction.
template <typename T>
Tensor<T> channel_softmax(Tape<T>* tape, const Tensor<T>& input) {
  if (input.ndim() != 3)
    throw ShapeError("channel_softmax: input must be [C,H,W], got " + shape_str(input.shape()));
  const int channels = input.dim(0);
  if (channels < 2) throw ShapeError("channel_softmax: needs at least 2 channels");
  detail::ensure_finite(input, "channel_softmax");
  const int64_t plane = static_cast<int64_t>(input.dim(1)) * input.dim(2);

  Tensor<T> out = Tensor<T>::zeros(input.shape());
  const T* src = input.values().data();
  T* dst = out.values().data();
  detail::maybe_parallel_for(plane, plane * channels * 4, [&](int64_t lo, int64_t hi) {
    for (int64_t p = lo; p < hi; ++p) {
      T mx = src[p];
      for (int c = 1; c < channels; ++c) mx = std::max(mx, src[c * plane + p]);
      T denom{};
      for (int c = 0; c < channels; ++c) {
        T e = std::exp(src[c * plane + p] - mx);
        dst[c * plane + p] = e;
        denom += e;
      }
      for (int c = 0; c < channels; ++c) dst[c * plane + p] /= denom;
    }
  });

  bool rg = detail::wants_grad(tape, {&input});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto in_s = input;
    auto out_s = out;
    tape->record([in_s, out_s, channels, plane]() mutable {
      const T* y = out_s.values().data();
      const T* gout = out_s.grad().data();
      T* gin = in_s.grad().data();
      detail::maybe_parallel_for(plane, plane * channels * 4, [&](int64_t lo, int64_t hi) {
        for (int64_t p = lo; p < hi; ++p) {
          T dot{};
          for (int c = 0; c < channels; ++c) dot += gout[c * plane + p] * y[c * plane + p];
          for (int c = 0; c < channels; ++c)
            gin[c * plane + p] += y[c * plane + p] * (gout[c * plane + p] - dot);
        }
      });
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>* tape, const Tensor<T>& input) {
  Tensor<T> out = Tensor<T>::zeros(input.shape());
  const T* src = input.values().data();
  T* dst = out.values().data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) dst[i] = src[i] > T{} ? src[i] : T{};

  bool rg = detail::wants_grad(tape, {&input});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto in_s = input;
    auto out_s = out;
    tape->record([in_s, out_s, n]() mutable {
      const T* x = in_s.values().data();
      const T* gout = out_s.grad().data();
      T* gin = in_s.grad().data();
      for (int64_t i = 0; i < n; ++i)
        if (x[i] > T{}) gin[i] += gout[i];
    });
  }
  return out;
}

// [Ca,H,W] + [Cb,H,W] -> [Ca+Cb,H,W]
template <typename T>
Tensor<T> concat_channels(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.ndim() != 3 || b.ndim() != 3 || a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw ShapeError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  Tensor<T> out = Tensor<T>::zeros({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.values().begin(), a.values().end(), out.values().begin());
  std::copy(b.values().begin(), b.values().end(), out.values().begin() + a.numel());

  bool rg = detail::wants_grad(tape, {&a, &b});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto a_s = a;
    auto b_s = b;
    auto out_s = out;
    tape->record([a_s, b_s, out_s]() mutable {
      const T* gout = out_s.grad().data();
      if (a_s.requires_grad()) {
        T* ga = a_s.grad().data();
        for (int64_t i = 0; i < a_s.numel(); ++i) ga[i] += gout[i];
      }
      if (b_s.requires_grad()) {
        T* gb = b_s.grad().data();
        const T* src = gout + a_s.numel();
        for (int64_t i = 0; i < b_s.numel(); ++i) gb[i] += src[i];
      }
    });
  }
  return out;
}

// Spatial window [y0, y0+h) x [x0, x0+w) of a [C,H,W] tensor.
template <typename T>
Tensor<T> crop_spatial(Tape<T>* tape, const Tensor<T>& input, int y0, int x0, int h, int w) {
  if (input.ndim() != 3)
    throw ShapeError("crop_spatial: input must be [C,H,W], got " + shape_str(input.shape()));
  const int channels = input.dim(0), height = input.dim(1), width = input.dim(2);
  if (y0 < 0 || x0 < 0 || h < 1 || w < 1 || y0 + h > height || x0 + w > width)
    throw ShapeError("crop_spatial: window (" + std::to_string(y0) + "," + std::to_string(x0) +
                     "," + std::to_string(h) + "," + std::to_string(w) + ") outside " +
                     shape_str(input.shape()));
  Tensor<T> out = Tensor<T>::zeros({channels, h, w});
  const T* src = input.values().data();
  T* dst = out.values().data();
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < h; ++y)
      std::copy_n(src + (static_cast<int64_t>(c) * height + y0 + y) * width + x0, w,
                  dst + (static_cast<int64_t>(c) * h + y) * w);

  bool rg = detail::wants_grad(tape, {&input});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto in_s = input;
    auto out_s = out;
    tape->record([in_s, out_s, channels, height, width, y0, x0, h, w]() mutable {
      const T* gout = out_s.grad().data();
      T* gin = in_s.grad().data();
      for (int c = 0; c < channels; ++c)
        for (int y = 0; y < h; ++y) {
          const T* srow = gout + (static_cast<int64_t>(c) * h + y) * w;
          T* drow = gin + (static_cast<int64_t>(c) * height + y0 + y) * width + x0;
          for (int x = 0; x < w; ++x) drow[x] += srow[x];
        }
    });
  }
  return out;
}

namespace detail {

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_elementwise(Tape<T>* tape, const Tensor<T>& input, Fwd fwd, Bwd bwd) {
  Tensor<T> out = Tensor<T>::zeros(input.shape());
  const T* src = input.values().data();
  T* dst = out.values().data();
  const int64_t n = input.numel();
  for (int64_t i = 0; i < n; ++i) dst[i] = fwd(src[i]);

  bool rg = wants_grad(tape, {&input});
  mark_output(tape, out, rg);
  if (rg) {
    auto in_s = input;
    auto out_s = out;
    tape->record([in_s, out_s, bwd, n]() mutable {
      const T* x = in_s.values().data();
      const T* y = out_s.values().data();
      const T* gout = out_s.grad().data();
      T* gin = in_s.grad().data();
      for (int64_t i = 0; i < n; ++i) gin[i] += gout[i] * bwd(x[i], y[i]);
    });
  }
  return out;
}

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

}  // namespace detail

template <typename T>
Tensor<T> add(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "add");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] + b.values()[i];
  bool rg = detail::wants_grad(tape, {&a, &b});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto a_s = a;
    auto b_s = b;
    auto out_s = out;
    tape->record([a_s, b_s, out_s, n]() mutable {
      const T* gout = out_s.grad().data();
      if (a_s.requires_grad()) {
        T* ga = a_s.grad().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += gout[i];
      }
      if (b_s.requires_grad()) {
        T* gb = b_s.grad().data();
        for (int64_t i = 0; i < n; ++i) gb[i] += gout[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sub(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "sub");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] - b.values()[i];
  bool rg = detail::wants_grad(tape, {&a, &b});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto a_s = a;
    auto b_s = b;
    auto out_s = out;
    tape->record([a_s, b_s, out_s, n]() mutable {
      const T* gout = out_s.grad().data();
      if (a_s.requires_grad()) {
        T* ga = a_s.grad().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += gout[i];
      }
      if (b_s.requires_grad()) {
        T* gb = b_s.grad().data();
        for (int64_t i = 0; i < n; ++i) gb[i] -= gout[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mul(Tape<T>* tape, const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape(a, b, "mul");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.values()[i] = a.values()[i] * b.values()[i];
  bool rg = detail::wants_grad(tape, {&a, &b});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto a_s = a;
    auto b_s = b;
    auto out_s = out;
    tape->record([a_s, b_s, out_s, n]() mutable {
      const T* gout = out_s.grad().data();
      if (a_s.requires_grad()) {
        T* ga = a_s.grad().data();
        const T* bv = b_s.values().data();
        for (int64_t i = 0; i < n; ++i) ga[i] += gout[i] * bv[i];
      }
      if (b_s.requires_grad()) {
        T* gb = b_s.grad().data();
        const T* av = a_s.values().data();
        for (int64_t i = 0; i < n; ++i) gb[i] += gout[i] * av[i];
      }
    });
  }
  return out;
}

// y = scale * x + shift, elementwise with scalar constants
template <typename T>
Tensor<T> affine(Tape<T>* tape, const Tensor<T>& input, T scale, T shift) {
  return detail::unary_elementwise(
      tape, input, [scale, shift](T x) { return scale * x + shift; },
      [scale](T, T) { return scale; });
}

// natural log; domain x > 0 (clamp first when inputs may saturate)
template <typename T>
Tensor<T> log(Tape<T>* tape, const Tensor<T>& input) {
  for (T v : input.values())
    if (!(v > T{}))
      throw NumericError("log: non-positive input " + std::to_string(static_cast<double>(v)));
  return detail::unary_elementwise(
      tape, input, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}

template <typename T>
Tensor<T> exp(Tape<T>* tape, const Tensor<T>& input) {
  return detail::unary_elementwise(
      tape, input, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

// elementwise x^e with a scalar exponent
template <typename T>
Tensor<T> pow(Tape<T>* tape, const Tensor<T>& input, T exponent) {
  Tensor<T> out;
  if (exponent == T{2})
    out = detail::unary_elementwise(
        tape, input, [](T x) { return x * x; }, [](T x, T) { return T{2} * x; });
  else if (exponent == T{1})
    out = detail::unary_elementwise(
        tape, input, [](T x) { return x; }, [](T, T) { return T{1}; });
  else
    out = detail::unary_elementwise(
        tape, input, [exponent](T x) { return std::pow(x, exponent); },
        [exponent](T x, T) { return exponent * std::pow(x, exponent - T{1}); });
  detail::ensure_finite(out, "pow");
  return out;
}

// Values outside [lo, hi] are pinned; gradient passes where lo <= x <= hi.
template <typename T>
Tensor<T> clamp(Tape<T>* tape, const Tensor<T>& input, T lo, T hi) {
  if (!(lo <= hi)) throw ShapeError("clamp: lo must be <= hi");
  return detail::unary_elementwise(
      tape, input, [lo, hi](T x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T{1} : T{}; });
}

// Sum of all elements, in flat index order, to a scalar tensor.
template <typename T>
Tensor<T> sum(Tape<T>* tape, const Tensor<T>& input) {
  T acc{};
  for (T v : input.values()) acc += v;
  Tensor<T> out = Tensor<T>::scalar(acc);
  bool rg = detail::wants_grad(tape, {&input});
  detail::mark_output(tape, out, rg);
  if (rg) {
    auto in_s = input;
    auto out_s = out;
    tape->record([in_s, out_s]() mutable {
      T g = out_s.grad()[0];
      T* gin = in_s.grad().data();
      for (int64_t i = 0; i < in_s.numel(); ++i) gin[i] += g;
    });
  }
  return out;
}

}  // namespace cephmark::ag
