#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

#include "s2i/blas.hpp"
#include "s2i/common.hpp"
#include "s2i/rng.hpp"
#include "s2i/tensor.hpp"

namespace s2i {

// Convolution geometry. Dilation is fixed at 1.
struct ConvSpec {
  int64_t in_channels = 0;
  int64_t out_channels = 0;
  int64_t kernel_size = 0;
  int64_t stride = 1;
  int64_t padding = 0;

  int64_t out_extent(int64_t in) const {
    return (in + 2 * padding - kernel_size) / stride + 1;
  }
};

namespace detail {

inline int64_t pooled_extent(int64_t in, int64_t kernel, int64_t stride,
                             int64_t padding, const char* what) {
  int64_t span = in + 2 * padding - kernel;
  if (span < 0)
    fail("shape", std::string(what) + ": output extent < 1 for input extent " +
                      std::to_string(in));
  return span / stride + 1;
}

template <class T>
void im2col_1d(const T* x, int64_t C, int64_t L, int64_t K, int64_t S,
               int64_t P, int64_t OL, T* cols) {
  for (int64_t ic = 0; ic < C; ++ic) {
    for (int64_t k = 0; k < K; ++k) {
      T* dst = cols + (ic * K + k) * OL;
      if (S == 1) {
        int64_t lo = std::max<int64_t>(0, P - k);
        int64_t hi = std::min<int64_t>(OL, L + P - k);
        std::fill(dst, dst + std::min(lo, OL), T(0));
        if (hi > lo)
          std::memcpy(dst + lo, x + ic * L + (lo + k - P),
                      static_cast<size_t>(hi - lo) * sizeof(T));
        std::fill(dst + std::max(hi, int64_t{0}), dst + OL, T(0));
        continue;
      }
      for (int64_t o = 0; o < OL; ++o) {
        int64_t i = o * S + k - P;
        dst[o] = (i >= 0 && i < L) ? x[ic * L + i] : T(0);
      }
    }
  }
}

template <class T>
void col2im_1d(const T* cols, int64_t C, int64_t L, int64_t K, int64_t S,
               int64_t P, int64_t OL, T* x) {
  for (int64_t ic = 0; ic < C; ++ic) {
    for (int64_t k = 0; k < K; ++k) {
      const T* src = cols + (ic * K + k) * OL;
      if (S == 1) {
        int64_t lo = std::max<int64_t>(0, P - k);
        int64_t hi = std::min<int64_t>(OL, L + P - k);
        T* dst = x + ic * L + (lo + k - P);
        for (int64_t o = lo; o < hi; ++o) dst[o - lo] += src[o];
        continue;
      }
      for (int64_t o = 0; o < OL; ++o) {
        int64_t i = o * S + k - P;
        if (i >= 0 && i < L) x[ic * L + i] += src[o];
      }
    }
  }
}

template <class T>
void im2col_2d(const T* x, int64_t C, int64_t H, int64_t W, int64_t K,
               int64_t S, int64_t P, int64_t OH, int64_t OW, T* cols) {
  for (int64_t ic = 0; ic < C; ++ic) {
    for (int64_t kh = 0; kh < K; ++kh) {
      for (int64_t kw = 0; kw < K; ++kw) {
        T* dst = cols + ((ic * K + kh) * K + kw) * (OH * OW);
        int64_t lo = 0, hi = 0;
        if (S == 1) {
          lo = std::max<int64_t>(0, P - kw);
          hi = std::min<int64_t>(OW, W + P - kw);
        }
        for (int64_t oh = 0; oh < OH; ++oh) {
          int64_t ih = oh * S + kh - P;
          if (ih < 0 || ih >= H) {
            std::fill(dst, dst + OW, T(0));
            dst += OW;
            continue;
          }
          const T* row = x + (ic * H + ih) * W;
          if (S == 1) {
            std::fill(dst, dst + std::min(lo, OW), T(0));
            if (hi > lo)
              std::memcpy(dst + lo, row + (lo + kw - P),
                          static_cast<size_t>(hi - lo) * sizeof(T));
            std::fill(dst + std::max(hi, int64_t{0}), dst + OW, T(0));
          } else {
            for (int64_t ow = 0; ow < OW; ++ow) {
              int64_t iw = ow * S + kw - P;
              dst[ow] = (iw >= 0 && iw < W) ? row[iw] : T(0);
            }
          }
          dst += OW;
        }
      }
    }
  }
}

template <class T>
void col2im_2d(const T* cols, int64_t C, int64_t H, int64_t W, int64_t K,
               int64_t S, int64_t P, int64_t OH, int64_t OW, T* x) {
  for (int64_t ic = 0; ic < C; ++ic) {
    for (int64_t kh = 0; kh < K; ++kh) {
      for (int64_t kw = 0; kw < K; ++kw) {
        const T* src = cols + ((ic * K + kh) * K + kw) * (OH * OW);
        int64_t lo = 0, hi = 0;
        if (S == 1) {
          lo = std::max<int64_t>(0, P - kw);
          hi = std::min<int64_t>(OW, W + P - kw);
        }
        for (int64_t oh = 0; oh < OH; ++oh) {
          int64_t ih = oh * S + kh - P;
          if (ih < 0 || ih >= H) {
            src += OW;
            continue;
          }
          T* row = x + (ic * H + ih) * W;
          if (S == 1) {
            T* dst = row + (lo + kw - P);
            for (int64_t ow = lo; ow < hi; ++ow) dst[ow - lo] += src[ow];
          } else {
            for (int64_t ow = 0; ow < OW; ++ow) {
              int64_t iw = ow * S + kw - P;
              if (iw >= 0 && iw < W) row[iw] += src[ow];
            }
          }
          src += OW;
        }
      }
    }
  }
}

// ---- direct stride-1 kernels ----
// For unit stride and cache-resident input planes the lowering through
// im2col is pure memory traffic; these kernels stream shifted rows instead.
// Inner loops are unit-stride on both sides, so they vectorize.

inline constexpr int64_t kDirectConvMaxPlaneElems = 4096;

// One sample, 2D: out[oc] = bias[oc] + sum_{ic,kh,kw} w * shift(in).
template <class T>
void direct_conv2d_fwd(const T* x, int64_t C, int64_t H, int64_t W, const T* w,
                       int64_t OC, int64_t K, int64_t P, int64_t OH, int64_t OW,
                       const T* bias, T* out, int64_t oc_begin, int64_t oc_end) {
  for (int64_t oc = oc_begin; oc < oc_end; ++oc) {
    T* plane = out + oc * OH * OW;
    std::fill(plane, plane + OH * OW, bias ? bias[oc] : T(0));
    for (int64_t ic = 0; ic < C; ++ic) {
      for (int64_t kh = 0; kh < K; ++kh) {
        for (int64_t kw = 0; kw < K; ++kw) {
          T wv = w[((oc * C + ic) * K + kh) * K + kw];
          int64_t ow_lo = std::max<int64_t>(0, P - kw);
          int64_t ow_hi = std::min<int64_t>(OW, W + P - kw);
          if (ow_lo >= ow_hi) continue;
          for (int64_t oh = 0; oh < OH; ++oh) {
            int64_t ih = oh + kh - P;
            if (ih < 0 || ih >= H) continue;
            const T* src = x + (ic * H + ih) * W + (ow_lo + kw - P);
            T* dst = plane + oh * OW + ow_lo;
            int64_t len = ow_hi - ow_lo;
            for (int64_t i = 0; i < len; ++i) dst[i] += wv * src[i];
          }
        }
      }
    }
  }
}

template <class T>
void direct_conv1d_fwd(const T* x, int64_t C, int64_t L, const T* w, int64_t OC,
                       int64_t K, int64_t P, int64_t OL, const T* bias, T* out,
                       int64_t oc_begin, int64_t oc_end) {
  for (int64_t oc = oc_begin; oc < oc_end; ++oc) {
    T* row = out + oc * OL;
    std::fill(row, row + OL, bias ? bias[oc] : T(0));
    for (int64_t ic = 0; ic < C; ++ic) {
      for (int64_t k = 0; k < K; ++k) {
        T wv = w[(oc * C + ic) * K + k];
        int64_t lo = std::max<int64_t>(0, P - k);
        int64_t hi = std::min<int64_t>(OL, L + P - k);
        const T* src = x + ic * L + (lo + k - P);
        for (int64_t i = lo; i < hi; ++i) row[i] += wv * src[i - lo];
      }
    }
  }
}

// Input gradient, one sample: transposed correlation, scatter-free saxpy.
template <class T>
void direct_conv2d_dx(const T* go, const T* w, int64_t C, int64_t H, int64_t W,
                      int64_t OC, int64_t K, int64_t P, int64_t OH, int64_t OW,
                      T* gx, int64_t ic_begin, int64_t ic_end) {
  for (int64_t ic = ic_begin; ic < ic_end; ++ic) {
    for (int64_t oc = 0; oc < OC; ++oc) {
      for (int64_t kh = 0; kh < K; ++kh) {
        for (int64_t kw = 0; kw < K; ++kw) {
          T wv = w[((oc * C + ic) * K + kh) * K + kw];
          int64_t ow_lo = std::max<int64_t>(0, P - kw);
          int64_t ow_hi = std::min<int64_t>(OW, W + P - kw);
          if (ow_lo >= ow_hi) continue;
          for (int64_t oh = 0; oh < OH; ++oh) {
            int64_t ih = oh + kh - P;
            if (ih < 0 || ih >= H) continue;
            const T* src = go + oc * OH * OW + oh * OW + ow_lo;
            T* dst = gx + (ic * H + ih) * W + (ow_lo + kw - P);
            int64_t len = ow_hi - ow_lo;
            for (int64_t i = 0; i < len; ++i) dst[i] += wv * src[i];
          }
        }
      }
    }
  }
}

template <class T>
void direct_conv1d_dx(const T* go, const T* w, int64_t C, int64_t L, int64_t OC,
                      int64_t K, int64_t P, int64_t OL, T* gx, int64_t ic_begin,
                      int64_t ic_end) {
  for (int64_t ic = ic_begin; ic < ic_end; ++ic) {
    for (int64_t oc = 0; oc < OC; ++oc) {
      for (int64_t k = 0; k < K; ++k) {
        T wv = w[(oc * C + ic) * K + k];
        int64_t lo = std::max<int64_t>(0, P - k);
        int64_t hi = std::min<int64_t>(OL, L + P - k);
        const T* src = go + oc * OL + lo;
        T* dst = gx + ic * L + (lo + k - P);
        for (int64_t i = 0; i < hi - lo; ++i) dst[i] += wv * src[i];
      }
    }
  }
}

// Weight gradient, one sample: shifted-row dot products. The reduction order
// is fixed by the code, so results are reproducible.
template <class T>
void direct_conv2d_dw(const T* x, const T* go, int64_t C, int64_t H, int64_t W,
                      int64_t K, int64_t P, int64_t OH, int64_t OW, T* gw,
                      int64_t oc_begin, int64_t oc_end, int64_t OC) {
  (void)OC;
  for (int64_t oc = oc_begin; oc < oc_end; ++oc) {
    for (int64_t ic = 0; ic < C; ++ic) {
      for (int64_t kh = 0; kh < K; ++kh) {
        for (int64_t kw = 0; kw < K; ++kw) {
          int64_t ow_lo = std::max<int64_t>(0, P - kw);
          int64_t ow_hi = std::min<int64_t>(OW, W + P - kw);
          if (ow_lo >= ow_hi) continue;
          T acc = T(0);
          for (int64_t oh = 0; oh < OH; ++oh) {
            int64_t ih = oh + kh - P;
            if (ih < 0 || ih >= H) continue;
            const T* grow = go + oc * OH * OW + oh * OW + ow_lo;
            const T* xrow = x + (ic * H + ih) * W + (ow_lo + kw - P);
            int64_t len = ow_hi - ow_lo;
            T dot = T(0);
#pragma omp simd reduction(+ : dot)
            for (int64_t i = 0; i < len; ++i) dot += grow[i] * xrow[i];
            acc += dot;
          }
          gw[((oc * C + ic) * K + kh) * K + kw] += acc;
        }
      }
    }
  }
}

template <class T>
void direct_conv1d_dw(const T* x, const T* go, int64_t C, int64_t L, int64_t K,
                      int64_t P, int64_t OL, T* gw, int64_t oc_begin,
                      int64_t oc_end) {
  for (int64_t oc = oc_begin; oc < oc_end; ++oc) {
    for (int64_t ic = 0; ic < C; ++ic) {
      for (int64_t k = 0; k < K; ++k) {
        int64_t lo = std::max<int64_t>(0, P - k);
        int64_t hi = std::min<int64_t>(OL, L + P - k);
        if (lo >= hi) continue;
        const T* grow = go + oc * OL + lo;
        const T* xrow = x + ic * L + (lo + k - P);
        T dot = T(0);
#pragma omp simd reduction(+ : dot)
        for (int64_t i = 0; i < hi - lo; ++i) dot += grow[i] * xrow[i];
        gw[(oc * C + ic) * K + k] += dot;
      }
    }
  }
}

}  // namespace detail

// Cross-correlation (no kernel flip) with zero padding. Input is
// [N, C, L] or [N, C, H, W]; the weight rank selects the spatial rank.
// Lowered to GEMM through im2col; gradients flow to input, weight and bias.
template <class T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
               int64_t stride = 1, int64_t padding = 0) {
  check_shape(x.dim() == 3 || x.dim() == 4,
              "conv: input must be [N,C,L] or [N,C,H,W], got " +
                  shape_str(x.shape()));
  int64_t spatial = x.dim() - 2;
  check_shape(w.dim() == spatial + 2,
              "conv: weight rank does not match input rank");
  if (stride < 1) fail("shape", "conv: stride must be positive");
  if (padding < 0) fail("shape", "conv: padding must be non-negative");

  int64_t n = x.extent(0), c_in = x.extent(1);
  int64_t oc = w.extent(0);
  check_shape(w.extent(1) == c_in, "conv: weight expects " +
                                       std::to_string(w.extent(1)) +
                                       " input channels, got " +
                                       std::to_string(c_in));
  int64_t k = w.extent(2);
  if (spatial == 2)
    check_shape(w.extent(3) == k, "conv: only square kernels are supported");

  bool has_bias = b.defined();
  if (has_bias)
    check_shape(b.dim() == 1 && b.extent(0) == oc,
                "conv: bias shape must be [out_channels]");

  int64_t ck = c_in * k * (spatial == 2 ? k : 1);
  Shape out_shape;
  int64_t out_plane = 1;  // product of output spatial extents
  int64_t h = 0, wd = 0, oh = 0, ow = 0;
  if (spatial == 1) {
    h = x.extent(2);
    oh = detail::pooled_extent(h, k, stride, padding, "conv");
    out_shape = {n, oc, oh};
    out_plane = oh;
  } else {
    h = x.extent(2);
    wd = x.extent(3);
    oh = detail::pooled_extent(h, k, stride, padding, "conv");
    ow = detail::pooled_extent(wd, k, stride, padding, "conv");
    out_shape = {n, oc, oh, ow};
    out_plane = oh * ow;
  }

  int64_t in_plane_all = c_in * ((spatial == 1) ? h : h * wd);
  bool direct = stride == 1 && in_plane_all <= detail::kDirectConvMaxPlaneElems;

  Tensor<T> out = Tensor<T>::zeros(out_shape);
  {
    const T* xd = x.data().data();
    const T* wd_ptr = w.data().data();
    const T* bd = has_bias ? b.data().data() : nullptr;
    T* od = out.mutable_data().data();
    int64_t in_plane = (spatial == 1) ? h : h * wd;
    if (direct) {
      parallel_for(n * oc, [&](int64_t begin, int64_t end) {
        for (int64_t t = begin; t < end; ++t) {
          int64_t i = t / oc, o = t % oc;
          const T* xi_ptr = xd + i * c_in * in_plane;
          T* oi_ptr = od + i * oc * out_plane;
          if (spatial == 1)
            detail::direct_conv1d_fwd(xi_ptr, c_in, h, wd_ptr, oc, k, padding,
                                      oh, bd, oi_ptr, o, o + 1);
          else
            detail::direct_conv2d_fwd(xi_ptr, c_in, h, wd, wd_ptr, oc, k,
                                      padding, oh, ow, bd, oi_ptr, o, o + 1);
        }
      });
    } else {
      std::vector<T> cols(static_cast<size_t>(ck * out_plane));
      for (int64_t i = 0; i < n; ++i) {
        if (spatial == 1)
          detail::im2col_1d(xd + i * c_in * in_plane, c_in, h, k, stride,
                            padding, oh, cols.data());
        else
          detail::im2col_2d(xd + i * c_in * in_plane, c_in, h, wd, k, stride,
                            padding, oh, ow, cols.data());
        detail::gemm(false, false, oc, out_plane, ck, T(1), wd_ptr, ck,
                     cols.data(), out_plane, T(0), od + i * oc * out_plane,
                     out_plane);
      }
      if (has_bias) {
        for (int64_t i = 0; i < n; ++i)
          for (int64_t o = 0; o < oc; ++o) {
            T* row = od + (i * oc + o) * out_plane;
            T bias_val = bd[o];
            for (int64_t p = 0; p < out_plane; ++p) row[p] += bias_val;
          }
      }
    }
  }

  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = has_bias ? b.impl() : nullptr;
  auto oi = out.impl().get();
  int64_t sp = spatial;
  std::vector<Tensor<T>> inputs = {x, w};
  if (has_bias) inputs.push_back(b);
  Tensor<T>::attach(out, inputs, [=]() {
    const std::vector<T>& gout = oi->grad;
    const T* xd = xi->data.data();
    int64_t in_plane = (sp == 1) ? h : h * wd;
    bool want_x = detail::wants_grad(xi);
    bool want_w = detail::wants_grad(wi);
    bool want_b = bi && detail::wants_grad(bi);
    if (want_x) xi->ensure_grad();
    if (want_w) wi->ensure_grad();
    if (want_b) bi->ensure_grad();

    if (direct) {
      const T* wd_ptr = wi->data.data();
      if (want_x) {
        // one worker per (sample, input channel); fixed oc/k scan order
        parallel_for(n * c_in, [&](int64_t begin, int64_t end) {
          for (int64_t t = begin; t < end; ++t) {
            int64_t i = t / c_in, ic = t % c_in;
            const T* go = gout.data() + i * oc * out_plane;
            T* gx = xi->grad.data() + i * c_in * in_plane;
            if (sp == 1)
              detail::direct_conv1d_dx(go, wd_ptr, c_in, h, oc, k, padding, oh,
                                       gx, ic, ic + 1);
            else
              detail::direct_conv2d_dx(go, wd_ptr, c_in, h, wd, oc, k, padding,
                                       oh, ow, gx, ic, ic + 1);
          }
        });
      }
      if (want_w) {
        // one worker per output channel; samples accumulate in fixed order
        parallel_for(oc, [&](int64_t begin, int64_t end) {
          for (int64_t i = 0; i < n; ++i) {
            const T* go = gout.data() + i * oc * out_plane;
            const T* xp = xd + i * c_in * in_plane;
            if (sp == 1)
              detail::direct_conv1d_dw(xp, go, c_in, h, k, padding, oh,
                                       wi->grad.data(), begin, end);
            else
              detail::direct_conv2d_dw(xp, go, c_in, h, wd, k, padding, oh, ow,
                                       wi->grad.data(), begin, end, oc);
          }
        });
      }
    } else {
      std::vector<T> cols(static_cast<size_t>(ck * out_plane));
      std::vector<T> col_grad;
      if (want_x) col_grad.resize(static_cast<size_t>(ck * out_plane));
      for (int64_t i = 0; i < n; ++i) {
        const T* go = gout.data() + i * oc * out_plane;
        if (want_w) {
          if (sp == 1)
            detail::im2col_1d(xd + i * c_in * in_plane, c_in, h, k, stride,
                              padding, oh, cols.data());
          else
            detail::im2col_2d(xd + i * c_in * in_plane, c_in, h, wd, k, stride,
                              padding, oh, ow, cols.data());
          detail::gemm(false, true, oc, ck, out_plane, T(1), go, out_plane,
                       cols.data(), out_plane, T(1), wi->grad.data(), ck);
        }
        if (want_x) {
          detail::gemm(true, false, ck, out_plane, oc, T(1), wi->data.data(),
                       ck, go, out_plane, T(0), col_grad.data(), out_plane);
          T* gx = xi->grad.data() + i * c_in * in_plane;
          if (sp == 1)
            detail::col2im_1d(col_grad.data(), c_in, h, k, stride, padding, oh,
                              gx);
          else
            detail::col2im_2d(col_grad.data(), c_in, h, wd, k, stride, padding,
                              oh, ow, gx);
        }
      }
    }
    if (want_b) {
      for (int64_t i = 0; i < n; ++i) {
        const T* go = gout.data() + i * oc * out_plane;
        for (int64_t o = 0; o < oc; ++o) {
          T acc = T(0);
          const T* row = go + o * out_plane;
          for (int64_t p = 0; p < out_plane; ++p) acc += row[p];
          bi->grad[static_cast<size_t>(o)] += acc;
        }
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
               const ConvSpec& spec) {
  return conv(x, w, b, spec.stride, spec.padding);
}

// Per-window maximum. Gradient is routed to the first (lowest-index) maximal
// element of each window. Padding positions never win a window.
template <class T>
Tensor<T> maxpool(const Tensor<T>& x, int64_t kernel, int64_t stride,
                  int64_t padding = 0) {
  check_shape(x.dim() == 3 || x.dim() == 4,
              "maxpool: input must be [N,C,L] or [N,C,H,W]");
  if (padding * 2 > kernel)
    fail("shape", "maxpool: padding may not exceed half the kernel");
  int64_t spatial = x.dim() - 2;
  int64_t n = x.extent(0), c = x.extent(1);
  int64_t planes = n * c;

  Shape out_shape;
  int64_t h = 0, w = 0, oh = 0, ow = 0;
  if (spatial == 1) {
    h = x.extent(2);
    oh = detail::pooled_extent(h, kernel, stride, padding, "maxpool");
    out_shape = {n, c, oh};
  } else {
    h = x.extent(2);
    w = x.extent(3);
    oh = detail::pooled_extent(h, kernel, stride, padding, "maxpool");
    ow = detail::pooled_extent(w, kernel, stride, padding, "maxpool");
    out_shape = {n, c, oh, ow};
  }
  int64_t in_plane = (spatial == 1) ? h : h * w;
  int64_t out_plane = (spatial == 1) ? oh : oh * ow;

  Tensor<T> out = Tensor<T>::zeros(out_shape);
  auto argmax = std::make_shared<std::vector<int64_t>>(
      static_cast<size_t>(planes * out_plane));
  {
    const T* xd = x.data().data();
    T* od = out.mutable_data().data();
    int64_t* am = argmax->data();
    parallel_for(planes, [&](int64_t begin, int64_t end) {
      for (int64_t pl = begin; pl < end; ++pl) {
        const T* in = xd + pl * in_plane;
        T* o = od + pl * out_plane;
        int64_t* a = am + pl * out_plane;
        if (spatial == 1) {
          for (int64_t i = 0; i < oh; ++i) {
            int64_t lo = std::max<int64_t>(i * stride - padding, 0);
            int64_t hi = std::min<int64_t>(i * stride - padding + kernel, h);
            T best = in[lo];
            int64_t best_idx = lo;
            for (int64_t j = lo + 1; j < hi; ++j)
              if (in[j] > best) {
                best = in[j];
                best_idx = j;
              }
            o[i] = best;
            a[i] = best_idx;
          }
        } else {
          for (int64_t i = 0; i < oh; ++i) {
            for (int64_t j = 0; j < ow; ++j) {
              int64_t r0 = std::max<int64_t>(i * stride - padding, 0);
              int64_t r1 = std::min<int64_t>(i * stride - padding + kernel, h);
              int64_t c0 = std::max<int64_t>(j * stride - padding, 0);
              int64_t c1 = std::min<int64_t>(j * stride - padding + kernel, w);
              T best = in[r0 * w + c0];
              int64_t best_idx = r0 * w + c0;
              for (int64_t r = r0; r < r1; ++r)
                for (int64_t cc = c0; cc < c1; ++cc) {
                  int64_t idx = r * w + cc;
                  if (in[idx] > best) {
                    best = in[idx];
                    best_idx = idx;
                  }
                }
              o[i * ow + j] = best;
              a[i * ow + j] = best_idx;
            }
          }
        }
      }
    });
  }

  auto xi = x.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    const std::vector<T>& gout = oi->grad;
    T* gx = xi->grad.data();
    const int64_t* am = argmax->data();
    parallel_for(planes, [&](int64_t begin, int64_t end) {
      for (int64_t pl = begin; pl < end; ++pl) {
        const T* go = gout.data() + pl * out_plane;
        T* g = gx + pl * in_plane;
        const int64_t* a = am + pl * out_plane;
        for (int64_t i = 0; i < out_plane; ++i) g[a[i]] += go[i];
      }
    });
  });
  return out;
}

// Per-window mean with zero padding disallowed (transition layers only need
// exact windows).
template <class T>
Tensor<T> avgpool(const Tensor<T>& x, int64_t kernel, int64_t stride) {
  check_shape(x.dim() == 3 || x.dim() == 4,
              "avgpool: input must be [N,C,L] or [N,C,H,W]");
  int64_t spatial = x.dim() - 2;
  int64_t n = x.extent(0), c = x.extent(1);
  int64_t planes = n * c;
  int64_t h = x.extent(2);
  int64_t w = (spatial == 2) ? x.extent(3) : 1;
  int64_t oh = detail::pooled_extent(h, kernel, stride, 0, "avgpool");
  int64_t ow = (spatial == 2)
                   ? detail::pooled_extent(w, kernel, stride, 0, "avgpool")
                   : 1;
  Shape out_shape = (spatial == 1) ? Shape{n, c, oh} : Shape{n, c, oh, ow};
  int64_t in_plane = h * w;
  int64_t out_plane = oh * ow;
  T inv = T(1) / static_cast<T>(spatial == 1 ? kernel : kernel * kernel);

  Tensor<T> out = Tensor<T>::zeros(out_shape);
  {
    const T* xd = x.data().data();
    T* od = out.mutable_data().data();
    parallel_for(planes, [&](int64_t begin, int64_t end) {
      for (int64_t pl = begin; pl < end; ++pl) {
        const T* in = xd + pl * in_plane;
        T* o = od + pl * out_plane;
        for (int64_t i = 0; i < oh; ++i)
          for (int64_t j = 0; j < ow; ++j) {
            T acc = T(0);
            for (int64_t r = 0; r < kernel; ++r) {
              if (spatial == 1) {
                acc += in[i * stride + r];
              } else {
                const T* row = in + (i * stride + r) * w + j * stride;
                for (int64_t cc = 0; cc < kernel; ++cc) acc += row[cc];
              }
            }
            o[i * ow + j] = acc * inv;
          }
      }
    });
  }

  auto xi = x.impl();
  auto oi = out.impl().get();
  int64_t sp = spatial;
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    const std::vector<T>& gout = oi->grad;
    T* gx = xi->grad.data();
    parallel_for(planes, [&](int64_t begin, int64_t end) {
      for (int64_t pl = begin; pl < end; ++pl) {
        const T* go = gout.data() + pl * out_plane;
        T* g = gx + pl * in_plane;
        for (int64_t i = 0; i < oh; ++i)
          for (int64_t j = 0; j < ow; ++j) {
            T v = go[i * ow + j] * inv;
            for (int64_t r = 0; r < kernel; ++r) {
              if (sp == 1) {
                g[i * stride + r] += v;
              } else {
                T* row = g + (i * stride + r) * w + j * stride;
                for (int64_t cc = 0; cc < kernel; ++cc) row[cc] += v;
              }
            }
          }
      }
    });
  });
  return out;
}

// Output cell i averages the input window [floor(i*L/T), ceil((i+1)*L/T)).
template <class T>
Tensor<T> adaptive_avg_pool(const Tensor<T>& x, int64_t target) {
  check_shape(x.dim() == 3 || x.dim() == 4,
              "adaptive_avg_pool: input must be [N,C,L] or [N,C,H,W]");
  if (target < 1) fail("shape", "adaptive_avg_pool: target must be >= 1");
  int64_t spatial = x.dim() - 2;
  int64_t n = x.extent(0), c = x.extent(1);
  int64_t planes = n * c;
  int64_t h = x.extent(2);
  int64_t w = (spatial == 2) ? x.extent(3) : 1;
  int64_t oh = target;
  int64_t ow = (spatial == 2) ? target : 1;
  Shape out_shape = (spatial == 1) ? Shape{n, c, oh} : Shape{n, c, oh, ow};
  int64_t in_plane = h * w;
  int64_t out_plane = oh * ow;

  auto window = [](int64_t i, int64_t in, int64_t t, int64_t& lo, int64_t& hi) {
    lo = (i * in) / t;
    hi = ((i + 1) * in + t - 1) / t;  // ceil
  };

  Tensor<T> out = Tensor<T>::zeros(out_shape);
  {
    const T* xd = x.data().data();
    T* od = out.mutable_data().data();
    parallel_for(planes, [&](int64_t begin, int64_t end) {
      for (int64_t pl = begin; pl < end; ++pl) {
        const T* in = xd + pl * in_plane;
        T* o = od + pl * out_plane;
        for (int64_t i = 0; i < oh; ++i) {
          int64_t r0, r1;
          window(i, h, oh, r0, r1);
          for (int64_t j = 0; j < ow; ++j) {
            int64_t c0 = 0, c1 = 1;
            if (spatial == 2) window(j, w, ow, c0, c1);
            T acc = T(0);
            for (int64_t r = r0; r < r1; ++r)
              for (int64_t cc = c0; cc < c1; ++cc) acc += in[r * w + cc];
            o[i * ow + j] = acc / static_cast<T>((r1 - r0) * (c1 - c0));
          }
        }
      }
    });
  }

  auto xi = x.impl();
  auto oi = out.impl().get();
  int64_t sp = spatial;
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    const std::vector<T>& gout = oi->grad;
    T* gx = xi->grad.data();
    parallel_for(planes, [&](int64_t begin, int64_t end) {
      for (int64_t pl = begin; pl < end; ++pl) {
        const T* go = gout.data() + pl * out_plane;
        T* g = gx + pl * in_plane;
        for (int64_t i = 0; i < oh; ++i) {
          int64_t r0 = (i * h) / oh;
          int64_t r1 = ((i + 1) * h + oh - 1) / oh;
          for (int64_t j = 0; j < ow; ++j) {
            int64_t c0 = 0, c1 = 1;
            if (sp == 2) {
              c0 = (j * w) / ow;
              c1 = ((j + 1) * w + ow - 1) / ow;
            }
            T v = go[i * ow + j] / static_cast<T>((r1 - r0) * (c1 - c0));
            for (int64_t r = r0; r < r1; ++r)
              for (int64_t cc = c0; cc < c1; ++cc) g[r * w + cc] += v;
          }
        }
      }
    });
  });
  return out;
}

// Batch normalization over the channel axis (axis 1). Training mode uses
// biased batch variance for normalization and folds the unbiased variance
// into the running estimate; eval mode normalizes by the running statistics.
// running_mean / running_var are buffers and are updated in place.
template <class T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, Tensor<T>& running_mean,
                    Tensor<T>& running_var, bool training,
                    T momentum = T(0.1), T eps = T(1e-5)) {
  check_shape(x.dim() >= 2, "batchnorm: input must have a channel axis");
  int64_t n = x.extent(0), c = x.extent(1);
  if (c < 1) fail("shape", "batchnorm: zero channels");
  int64_t plane = x.numel() / (n * c);
  check_shape(gamma.numel() == c && beta.numel() == c &&
                  running_mean.numel() == c && running_var.numel() == c,
              "batchnorm: per-channel parameter shapes must match channels");
  int64_t m = n * plane;  // elements per channel

  auto mean = std::make_shared<std::vector<T>>(static_cast<size_t>(c));
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<size_t>(c));
  auto xhat = std::make_shared<std::vector<T>>(x.data().size());

  const T* xd = x.data().data();
  const T* gd = gamma.data().data();
  const T* bd = beta.data().data();

  if (training) {
    T* rm = running_mean.mutable_data().data();
    T* rv = running_var.mutable_data().data();
    parallel_for(c, [&](int64_t begin, int64_t end) {
      for (int64_t ch = begin; ch < end; ++ch) {
        T sum = T(0);
        for (int64_t i = 0; i < n; ++i) {
          const T* p = xd + (i * c + ch) * plane;
          for (int64_t j = 0; j < plane; ++j) sum += p[j];
        }
        T mu = sum / static_cast<T>(m);
        T var_sum = T(0);
        for (int64_t i = 0; i < n; ++i) {
          const T* p = xd + (i * c + ch) * plane;
          for (int64_t j = 0; j < plane; ++j) {
            T d = p[j] - mu;
            var_sum += d * d;
          }
        }
        T var = var_sum / static_cast<T>(m);  // biased
        (*mean)[ch] = mu;
        (*inv_std)[ch] = T(1) / std::sqrt(var + eps);
        T unbiased = (m > 1) ? var_sum / static_cast<T>(m - 1) : var;
        rm[ch] = (T(1) - momentum) * rm[ch] + momentum * mu;
        rv[ch] = (T(1) - momentum) * rv[ch] + momentum * unbiased;
      }
    });
  } else {
    const T* rm = running_mean.data().data();
    const T* rv = running_var.data().data();
    for (int64_t ch = 0; ch < c; ++ch) {
      (*mean)[ch] = rm[ch];
      (*inv_std)[ch] = T(1) / std::sqrt(rv[ch] + eps);
    }
  }

  Tensor<T> out = Tensor<T>::zeros(x.shape());
  {
    T* od = out.mutable_data().data();
    T* xh = xhat->data();
    parallel_for(n * c, [&](int64_t begin, int64_t end) {
      for (int64_t pl = begin; pl < end; ++pl) {
        int64_t ch = pl % c;
        T mu = (*mean)[ch], is = (*inv_std)[ch];
        T g = gd[ch], b = bd[ch];
        const T* p = xd + pl * plane;
        T* o = od + pl * plane;
        T* xhp = xh + pl * plane;
        for (int64_t j = 0; j < plane; ++j) {
          T v = (p[j] - mu) * is;
          xhp[j] = v;
          o[j] = g * v + b;
        }
      }
    });
  }

  auto xi = x.impl();
  auto gi = gamma.impl();
  auto bi = beta.impl();
  auto oi = out.impl().get();
  bool train_mode = training;
  Tensor<T>::attach(out, {x, gamma, beta}, [=]() {
    const std::vector<T>& gout = oi->grad;
    const T* xh = xhat->data();
    bool want_x = detail::wants_grad(xi);
    bool want_g = detail::wants_grad(gi);
    bool want_b = detail::wants_grad(bi);
    if (want_x) xi->ensure_grad();
    if (want_g) gi->ensure_grad();
    if (want_b) bi->ensure_grad();
    parallel_for(c, [&](int64_t begin, int64_t end) {
      for (int64_t ch = begin; ch < end; ++ch) {
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (int64_t i = 0; i < n; ++i) {
          int64_t base = (i * c + ch) * plane;
          for (int64_t j = 0; j < plane; ++j) {
            sum_dy += gout[base + j];
            sum_dy_xhat += gout[base + j] * xh[base + j];
          }
        }
        if (want_g) gi->grad[static_cast<size_t>(ch)] += sum_dy_xhat;
        if (want_b) bi->grad[static_cast<size_t>(ch)] += sum_dy;
        if (want_x) {
          T g = gi->data[static_cast<size_t>(ch)];
          T is = (*inv_std)[ch];
          if (train_mode) {
            T inv_m = T(1) / static_cast<T>(m);
            for (int64_t i = 0; i < n; ++i) {
              int64_t base = (i * c + ch) * plane;
              for (int64_t j = 0; j < plane; ++j) {
                T dxhat = gout[base + j] * g;
                xi->grad[base + j] +=
                    is * (dxhat - inv_m * g * sum_dy -
                          inv_m * g * sum_dy_xhat * xh[base + j]);
              }
            }
          } else {
            for (int64_t i = 0; i < n; ++i) {
              int64_t base = (i * c + ch) * plane;
              for (int64_t j = 0; j < plane; ++j)
                xi->grad[base + j] += gout[base + j] * g * is;
            }
          }
        }
      }
    });
  });
  return out;
}

// Affine map out = x . W^T + b for x [N,K], w [O,K], b [O].
template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check_shape(x.dim() == 2 && w.dim() == 2, "linear: x and w must be rank 2");
  int64_t n = x.extent(0), k = x.extent(1), o = w.extent(0);
  check_shape(w.extent(1) == k,
              "linear: inner dimensions disagree: x " + shape_str(x.shape()) +
                  " vs w " + shape_str(w.shape()));
  bool has_bias = b.defined();
  if (has_bias)
    check_shape(b.dim() == 1 && b.extent(0) == o, "linear: bias must be [O]");

  Tensor<T> out = Tensor<T>::zeros({n, o});
  detail::gemm(false, true, n, o, k, T(1), x.data().data(), k, w.data().data(),
               k, T(0), out.mutable_data().data(), o);
  if (has_bias) {
    T* od = out.mutable_data().data();
    const T* bd = b.data().data();
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < o; ++j) od[i * o + j] += bd[j];
  }

  auto xi = x.impl();
  auto wi = w.impl();
  auto bi = has_bias ? b.impl() : nullptr;
  auto oi = out.impl().get();
  std::vector<Tensor<T>> inputs = {x, w};
  if (has_bias) inputs.push_back(b);
  Tensor<T>::attach(out, inputs, [=]() {
    const std::vector<T>& gout = oi->grad;
    if (detail::wants_grad(xi)) {
      xi->ensure_grad();
      detail::gemm(false, false, n, k, o, T(1), gout.data(), o,
                   wi->data.data(), k, T(1), xi->grad.data(), k);
    }
    if (detail::wants_grad(wi)) {
      wi->ensure_grad();
      detail::gemm(true, false, o, k, n, T(1), gout.data(), o, xi->data.data(),
                   k, T(1), wi->grad.data(), k);
    }
    if (bi && detail::wants_grad(bi)) {
      bi->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < o; ++j) bi->grad[static_cast<size_t>(j)] += gout[i * o + j];
    }
  });
  return out;
}

// max(x, 0); the subgradient at exactly 0 is 0.
template <class T>
Tensor<T> relu(const Tensor<T>& x) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xd = x.data().data();
  T* od = out.mutable_data().data();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = xd[i] > T(0) ? xd[i] : T(0);

  auto xi = x.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    const T* go = oi->grad.data();
    const T* xd_ = xi->data.data();
    T* g = xi->grad.data();
    for (int64_t i = 0; i < n; ++i) g[i] += xd_[i] > T(0) ? go[i] : T(0);
  });
  return out;
}

// Train mode zeroes each element with probability p and scales survivors by
// 1/(1-p); the mask is drawn sequentially from the given generator. Eval mode
// (or p == 0) is the identity.
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double p, bool training, Rng& rng) {
  if (p < 0.0 || p >= 1.0)
    fail("config", "dropout probability must be in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return x;

  int64_t n = x.numel();
  // mask holds 0 or the survivor scale, so apply steps are pure multiplies
  auto mask = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
  T scale = static_cast<T>(1.0 / (1.0 - p));
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xd = x.data().data();
  T* od = out.mutable_data().data();
  T* m = mask->data();
  for (int64_t i = 0; i < n; ++i) {
    m[i] = rng.uniform() >= p ? scale : T(0);
    od[i] = xd[i] * m[i];
  }

  auto xi = x.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    const T* go = oi->grad.data();
    const T* mp = mask->data();
    T* g = xi->grad.data();
    for (int64_t i = 0; i < n; ++i) g[i] += go[i] * mp[i];
  });
  return out;
}

// Concatenation along an axis; all other extents must agree.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& tensors, int64_t axis) {
  check_shape(!tensors.empty(), "concat: need at least one tensor");
  const Shape& first = tensors[0].shape();
  int64_t rank = static_cast<int64_t>(first.size());
  check_shape(axis >= 0 && axis < rank, "concat: axis out of range");
  int64_t axis_total = 0;
  for (const auto& t : tensors) {
    check_shape(t.dim() == rank, "concat: rank mismatch");
    for (int64_t a = 0; a < rank; ++a)
      if (a != axis)
        check_shape(t.extent(a) == first[static_cast<size_t>(a)],
                    "concat: extents differ off the concat axis");
    axis_total += t.extent(axis);
  }
  Shape out_shape = first;
  out_shape[static_cast<size_t>(axis)] = axis_total;

  int64_t outer = 1, inner = 1;
  for (int64_t a = 0; a < axis; ++a) outer *= first[static_cast<size_t>(a)];
  for (int64_t a = axis + 1; a < rank; ++a) inner *= first[static_cast<size_t>(a)];

  Tensor<T> out = Tensor<T>::zeros(out_shape);
  {
    T* od = out.mutable_data().data();
    int64_t out_stride = axis_total * inner;
    int64_t offset = 0;
    for (const auto& t : tensors) {
      int64_t ext = t.extent(axis);
      const T* td = t.data().data();
      for (int64_t ou = 0; ou < outer; ++ou)
        std::memcpy(od + ou * out_stride + offset * inner,
                    td + ou * ext * inner,
                    static_cast<size_t>(ext * inner) * sizeof(T));
      offset += ext;
    }
  }

  std::vector<std::shared_ptr<detail::TensorImpl<T>>> impls;
  std::vector<int64_t> extents;
  for (const auto& t : tensors) {
    impls.push_back(t.impl());
    extents.push_back(t.extent(axis));
  }
  auto oi = out.impl().get();
  Tensor<T>::attach(out, tensors, [=]() {
    const std::vector<T>& gout = oi->grad;
    int64_t out_stride = axis_total * inner;
    int64_t offset = 0;
    for (size_t idx = 0; idx < impls.size(); ++idx) {
      int64_t ext = extents[idx];
      auto& impl = impls[idx];
      if (detail::wants_grad(impl)) {
        impl->ensure_grad();
        for (int64_t ou = 0; ou < outer; ++ou) {
          const T* src = gout.data() + ou * out_stride + offset * inner;
          T* dst = impl->grad.data() + ou * ext * inner;
          for (int64_t i = 0; i < ext * inner; ++i) dst[i] += src[i];
        }
      }
      offset += ext;
    }
  });
  return out;
}

template <class T>
Tensor<T> concat(std::initializer_list<Tensor<T>> tensors, int64_t axis) {
  return concat(std::vector<Tensor<T>>(tensors), axis);
}

// Bilinear resampling of the last two axes with half-pixel centers:
// src = (dst + 0.5) * in / out - 0.5, clamped to [0, in-1].
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  check_shape(x.dim() >= 2, "bilinear_resize: input rank must be >= 2");
  if (out_h < 1 || out_w < 1)
    fail("shape", "bilinear_resize: target size must be positive");
  int64_t rank = x.dim();
  int64_t h = x.extent(rank - 2), w = x.extent(rank - 1);
  int64_t planes = x.numel() / (h * w);

  struct Axis {
    std::vector<int64_t> lo, hi;
    std::vector<T> frac;
  };
  auto make_axis = [](int64_t in, int64_t out) {
    Axis ax;
    ax.lo.resize(static_cast<size_t>(out));
    ax.hi.resize(static_cast<size_t>(out));
    ax.frac.resize(static_cast<size_t>(out));
    for (int64_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * static_cast<double>(in) /
                       static_cast<double>(out) -
                   0.5;
      src = std::min(std::max(src, 0.0), static_cast<double>(in - 1));
      int64_t lo = static_cast<int64_t>(std::floor(src));
      ax.lo[static_cast<size_t>(i)] = lo;
      ax.hi[static_cast<size_t>(i)] = std::min(lo + 1, in - 1);
      ax.frac[static_cast<size_t>(i)] = static_cast<T>(src - static_cast<double>(lo));
    }
    return ax;
  };
  auto ay = std::make_shared<Axis>(make_axis(h, out_h));
  auto ax_ = std::make_shared<Axis>(make_axis(w, out_w));

  Shape out_shape = x.shape();
  out_shape[static_cast<size_t>(rank - 2)] = out_h;
  out_shape[static_cast<size_t>(rank - 1)] = out_w;
  Tensor<T> out = Tensor<T>::zeros(out_shape);
  {
    const T* xd = x.data().data();
    T* od = out.mutable_data().data();
    parallel_for(planes, [&](int64_t begin, int64_t end) {
      for (int64_t pl = begin; pl < end; ++pl) {
        const T* in = xd + pl * h * w;
        T* o = od + pl * out_h * out_w;
        for (int64_t i = 0; i < out_h; ++i) {
          int64_t y0 = ay->lo[i], y1 = ay->hi[i];
          T fy = ay->frac[i];
          for (int64_t j = 0; j < out_w; ++j) {
            int64_t x0 = ax_->lo[j], x1 = ax_->hi[j];
            T fx = ax_->frac[j];
            T top = (T(1) - fx) * in[y0 * w + x0] + fx * in[y0 * w + x1];
            T bot = (T(1) - fx) * in[y1 * w + x0] + fx * in[y1 * w + x1];
            o[i * out_w + j] = (T(1) - fy) * top + fy * bot;
          }
        }
      }
    });
  }

  auto xi = x.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    const std::vector<T>& gout = oi->grad;
    T* gx = xi->grad.data();
    parallel_for(planes, [&](int64_t begin, int64_t end) {
      for (int64_t pl = begin; pl < end; ++pl) {
        const T* go = gout.data() + pl * out_h * out_w;
        T* g = gx + pl * h * w;
        for (int64_t i = 0; i < out_h; ++i) {
          int64_t y0 = ay->lo[i], y1 = ay->hi[i];
          T fy = ay->frac[i];
          for (int64_t j = 0; j < out_w; ++j) {
            int64_t x0 = ax_->lo[j], x1 = ax_->hi[j];
            T fx = ax_->frac[j];
            T v = go[i * out_w + j];
            g[y0 * w + x0] += (T(1) - fy) * (T(1) - fx) * v;
            g[y0 * w + x1] += (T(1) - fy) * fx * v;
            g[y1 * w + x0] += fy * (T(1) - fx) * v;
            g[y1 * w + x1] += fy * fx * v;
          }
        }
      }
    });
  });
  return out;
}

// Row-wise softmax with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& x) {
  check_shape(x.dim() == 2, "softmax: input must be [N,C]");
  int64_t n = x.extent(0), c = x.extent(1);
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xd = x.data().data();
  T* od = out.mutable_data().data();
  for (int64_t i = 0; i < n; ++i) {
    const T* row = xd + i * c;
    T* orow = od + i * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int64_t j = 0; j < c; ++j) {
      orow[j] = std::exp(row[j] - mx);
      sum += orow[j];
    }
    for (int64_t j = 0; j < c; ++j) orow[j] /= sum;
  }

  auto xi = x.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    const std::vector<T>& gout = oi->grad;
    const std::vector<T>& p = oi->data;
    for (int64_t i = 0; i < n; ++i) {
      T dot = T(0);
      for (int64_t j = 0; j < c; ++j) dot += gout[i * c + j] * p[i * c + j];
      for (int64_t j = 0; j < c; ++j)
        xi->grad[i * c + j] += p[i * c + j] * (gout[i * c + j] - dot);
    }
  });
  return out;
}

// Mean of -log softmax(logits)[label] over the batch, stabilized by row-max
// subtraction. Gradient is (softmax - onehot) / N.
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits,
                        const std::vector<int64_t>& labels) {
  check_shape(logits.dim() == 2, "cross_entropy: logits must be [N,C]");
  int64_t n = logits.extent(0), c = logits.extent(1);
  check_shape(static_cast<int64_t>(labels.size()) == n,
              "cross_entropy: label count mismatch");
  for (int64_t lbl : labels)
    if (lbl < 0 || lbl >= c)
      fail("data", "cross_entropy: label " + std::to_string(lbl) +
                       " outside [0," + std::to_string(c) + ")");

  auto probs = std::make_shared<std::vector<T>>(logits.data().size());
  const T* xd = logits.data().data();
  T loss_acc = T(0);
  for (int64_t i = 0; i < n; ++i) {
    const T* row = xd + i * c;
    T* prow = probs->data() + i * c;
    T mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    T sum = T(0);
    for (int64_t j = 0; j < c; ++j) {
      prow[j] = std::exp(row[j] - mx);
      sum += prow[j];
    }
    for (int64_t j = 0; j < c; ++j) prow[j] /= sum;
    T logp = (row[labels[static_cast<size_t>(i)]] - mx) - std::log(sum);
    loss_acc -= logp;
  }
  Tensor<T> out = Tensor<T>::from({1}, {loss_acc / static_cast<T>(n)});

  auto xi = logits.impl();
  auto oi = out.impl().get();
  auto labels_copy = std::make_shared<std::vector<int64_t>>(labels);
  Tensor<T>::attach(out, {logits}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    T go = oi->grad[0];
    T inv_n = T(1) / static_cast<T>(n);
    for (int64_t i = 0; i < n; ++i) {
      int64_t lbl = (*labels_copy)[static_cast<size_t>(i)];
      for (int64_t j = 0; j < c; ++j) {
        T p = (*probs)[i * c + j];
        T onehot = (j == lbl) ? T(1) : T(0);
        xi->grad[i * c + j] += go * (p - onehot) * inv_n;
      }
    }
  });
  return out;
}

// ---- small structural ops ----

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  check_shape(numel(shape) == x.numel(),
              "reshape: element count mismatch " + shape_str(x.shape()) +
                  " -> " + shape_str(shape));
  Tensor<T> out = Tensor<T>::make(std::move(shape), x.data());
  auto xi = x.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    detail::accumulate_grad(xi, oi->grad);
  });
  return out;
}

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check_shape(a.shape() == b.shape(), "add: shape mismatch");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  T* od = out.mutable_data().data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = ad[i] + bd[i];
  auto ai = a.impl();
  auto bi = b.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {a, b}, [=]() {
    detail::accumulate_grad(ai, oi->grad);
    detail::accumulate_grad(bi, oi->grad);
  });
  return out;
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check_shape(a.shape() == b.shape(), "mul: shape mismatch");
  Tensor<T> out = Tensor<T>::zeros(a.shape());
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  T* od = out.mutable_data().data();
  int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = ad[i] * bd[i];
  auto ai = a.impl();
  auto bi = b.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {a, b}, [=]() {
    const std::vector<T>& gout = oi->grad;
    if (detail::wants_grad(ai)) {
      ai->ensure_grad();
      for (int64_t i = 0; i < n; ++i) ai->grad[i] += gout[i] * bi->data[i];
    }
    if (detail::wants_grad(bi)) {
      bi->ensure_grad();
      for (int64_t i = 0; i < n; ++i) bi->grad[i] += gout[i] * ai->data[i];
    }
  });
  return out;
}

template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  Tensor<T> out = Tensor<T>::zeros(x.shape());
  const T* xd = x.data().data();
  T* od = out.mutable_data().data();
  int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) od[i] = xd[i] * factor;
  auto xi = x.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    for (int64_t i = 0; i < n; ++i) xi->grad[i] += oi->grad[i] * factor;
  });
  return out;
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = T(0);
  for (T v : x.data()) acc += v;
  Tensor<T> out = Tensor<T>::from({1}, {acc});
  auto xi = x.impl();
  auto oi = out.impl().get();
  Tensor<T>::attach(out, {x}, [=]() {
    if (!detail::wants_grad(xi)) return;
    xi->ensure_grad();
    T go = oi->grad[0];
    for (auto& g : xi->grad) g += go;
  });
  return out;
}

// [H,W] -> [copies,H,W]: identical channel copies sharing one source image.
template <class T>
Tensor<T> stack_channels(const Tensor<T>& img, int64_t copies = 3) {
  check_shape(img.dim() == 2, "stack_channels: input must be [H,W]");
  Tensor<T> as_chw = reshape(img, {1, img.extent(0), img.extent(1)});
  std::vector<Tensor<T>> reps(static_cast<size_t>(copies), as_chw);
  return concat(reps, 0);
}

// Batched variant: [N,1,H,W] -> [N,copies,H,W].
template <class T>
Tensor<T> stack_channels_batch(const Tensor<T>& x, int64_t copies = 3) {
  check_shape(x.dim() == 4 && x.extent(1) == 1,
              "stack_channels_batch: input must be [N,1,H,W]");
  std::vector<Tensor<T>> reps(static_cast<size_t>(copies), x);
  return concat(reps, 1);
}

}  // namespace s2i
