// Naive reference implementations used as independent oracles. Everything
// here is direct loop evaluation of the defining formulas; none of it shares
// code with the library kernels.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

namespace oracle {

// Direct cross-correlation, 2D: six nested loops.
inline std::vector<double> conv2d_naive(const std::vector<double>& x, int64_t n,
                                        int64_t c_in, int64_t h, int64_t w,
                                        const std::vector<double>& weight,
                                        int64_t c_out, int64_t k,
                                        const std::vector<double>& bias,
                                        int64_t stride, int64_t pad) {
  int64_t oh = (h + 2 * pad - k) / stride + 1;
  int64_t ow = (w + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<size_t>(n * c_out * oh * ow), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t oc = 0; oc < c_out; ++oc)
      for (int64_t y = 0; y < oh; ++y)
        for (int64_t xo = 0; xo < ow; ++xo) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(oc)];
          for (int64_t ic = 0; ic < c_in; ++ic)
            for (int64_t ky = 0; ky < k; ++ky)
              for (int64_t kx = 0; kx < k; ++kx) {
                int64_t iy = y * stride + ky - pad;
                int64_t ix = xo * stride + kx - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += x[static_cast<size_t>(((i * c_in + ic) * h + iy) * w + ix)] *
                       weight[static_cast<size_t>(((oc * c_in + ic) * k + ky) * k + kx)];
              }
          out[static_cast<size_t>(((i * c_out + oc) * oh + y) * ow + xo)] = acc;
        }
  return out;
}

inline std::vector<double> conv1d_naive(const std::vector<double>& x, int64_t n,
                                        int64_t c_in, int64_t len,
                                        const std::vector<double>& weight,
                                        int64_t c_out, int64_t k,
                                        const std::vector<double>& bias,
                                        int64_t stride, int64_t pad) {
  int64_t ol = (len + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<size_t>(n * c_out * ol), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t oc = 0; oc < c_out; ++oc)
      for (int64_t o = 0; o < ol; ++o) {
        double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(oc)];
        for (int64_t ic = 0; ic < c_in; ++ic)
          for (int64_t kk = 0; kk < k; ++kk) {
            int64_t ii = o * stride + kk - pad;
            if (ii < 0 || ii >= len) continue;
            acc += x[static_cast<size_t>((i * c_in + ic) * len + ii)] *
                   weight[static_cast<size_t>((oc * c_in + ic) * k + kk)];
          }
        out[static_cast<size_t>((i * c_out + oc) * ol + o)] = acc;
      }
  return out;
}

// Window enumeration maxima over [N*C] planes (2D).
inline std::vector<double> maxpool2d_naive(const std::vector<double>& x,
                                           int64_t planes, int64_t h, int64_t w,
                                           int64_t k, int64_t stride,
                                           int64_t pad) {
  int64_t oh = (h + 2 * pad - k) / stride + 1;
  int64_t ow = (w + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<size_t>(planes * oh * ow));
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t y = 0; y < oh; ++y)
      for (int64_t xo = 0; xo < ow; ++xo) {
        double best = -std::numeric_limits<double>::infinity();
        for (int64_t ky = 0; ky < k; ++ky)
          for (int64_t kx = 0; kx < k; ++kx) {
            int64_t iy = y * stride + ky - pad;
            int64_t ix = xo * stride + kx - pad;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            best = std::max(best, x[static_cast<size_t>((p * h + iy) * w + ix)]);
          }
        out[static_cast<size_t>((p * oh + y) * ow + xo)] = best;
      }
  return out;
}

inline std::vector<double> maxpool1d_naive(const std::vector<double>& x,
                                           int64_t planes, int64_t len,
                                           int64_t k, int64_t stride,
                                           int64_t pad) {
  int64_t ol = (len + 2 * pad - k) / stride + 1;
  std::vector<double> out(static_cast<size_t>(planes * ol));
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t o = 0; o < ol; ++o) {
      double best = -std::numeric_limits<double>::infinity();
      for (int64_t kk = 0; kk < k; ++kk) {
        int64_t i = o * stride + kk - pad;
        if (i < 0 || i >= len) continue;
        best = std::max(best, x[static_cast<size_t>(p * len + i)]);
      }
      out[static_cast<size_t>(p * ol + o)] = best;
    }
  return out;
}

// Adaptive average pooling via the window formula
// [floor(i*L/T), ceil((i+1)*L/T)).
inline std::vector<double> adaptive_avgpool2d_naive(const std::vector<double>& x,
                                                    int64_t planes, int64_t h,
                                                    int64_t w, int64_t t) {
  std::vector<double> out(static_cast<size_t>(planes * t * t));
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t i = 0; i < t; ++i)
      for (int64_t j = 0; j < t; ++j) {
        int64_t r0 = static_cast<int64_t>(std::floor(double(i) * h / t));
        int64_t r1 = static_cast<int64_t>(std::ceil(double(i + 1) * h / t));
        int64_t c0 = static_cast<int64_t>(std::floor(double(j) * w / t));
        int64_t c1 = static_cast<int64_t>(std::ceil(double(j + 1) * w / t));
        double acc = 0.0;
        for (int64_t r = r0; r < r1; ++r)
          for (int64_t c = c0; c < c1; ++c)
            acc += x[static_cast<size_t>((p * h + r) * w + c)];
        out[static_cast<size_t>((p * t + i) * t + j)] =
            acc / double((r1 - r0) * (c1 - c0));
      }
  return out;
}

inline std::vector<double> adaptive_avgpool1d_naive(const std::vector<double>& x,
                                                    int64_t planes, int64_t len,
                                                    int64_t t) {
  std::vector<double> out(static_cast<size_t>(planes * t));
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t i = 0; i < t; ++i) {
      int64_t lo = static_cast<int64_t>(std::floor(double(i) * len / t));
      int64_t hi = static_cast<int64_t>(std::ceil(double(i + 1) * len / t));
      double acc = 0.0;
      for (int64_t r = lo; r < hi; ++r) acc += x[static_cast<size_t>(p * len + r)];
      out[static_cast<size_t>(p * t + i)] = acc / double(hi - lo);
    }
  return out;
}

// Triple-loop matmul for out = x . W^T + b.
inline std::vector<double> linear_naive(const std::vector<double>& x, int64_t n,
                                        int64_t k, const std::vector<double>& w,
                                        int64_t o, const std::vector<double>& b) {
  std::vector<double> out(static_cast<size_t>(n * o), 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < o; ++j) {
      double acc = b.empty() ? 0.0 : b[static_cast<size_t>(j)];
      for (int64_t kk = 0; kk < k; ++kk)
        acc += x[static_cast<size_t>(i * k + kk)] * w[static_cast<size_t>(j * k + kk)];
      out[static_cast<size_t>(i * o + j)] = acc;
    }
  return out;
}

// Direct evaluation of the half-pixel-center coordinate formula per output
// pixel.
inline std::vector<double> bilinear_naive(const std::vector<double>& img,
                                          int64_t planes, int64_t h, int64_t w,
                                          int64_t oh, int64_t ow) {
  std::vector<double> out(static_cast<size_t>(planes * oh * ow));
  for (int64_t p = 0; p < planes; ++p)
    for (int64_t i = 0; i < oh; ++i)
      for (int64_t j = 0; j < ow; ++j) {
        double sy = (i + 0.5) * double(h) / double(oh) - 0.5;
        double sx = (j + 0.5) * double(w) / double(ow) - 0.5;
        sy = std::clamp(sy, 0.0, double(h - 1));
        sx = std::clamp(sx, 0.0, double(w - 1));
        int64_t y0 = static_cast<int64_t>(std::floor(sy));
        int64_t x0 = static_cast<int64_t>(std::floor(sx));
        int64_t y1 = std::min(y0 + 1, h - 1);
        int64_t x1 = std::min(x0 + 1, w - 1);
        double fy = sy - y0, fx = sx - x0;
        auto px = [&](int64_t y, int64_t x) {
          return img[static_cast<size_t>((p * h + y) * w + x)];
        };
        out[static_cast<size_t>((p * oh + i) * ow + j)] =
            (1 - fy) * ((1 - fx) * px(y0, x0) + fx * px(y0, x1)) +
            fy * ((1 - fx) * px(y1, x0) + fx * px(y1, x1));
      }
  return out;
}

// Full zero-padded direct DFT power spectral density of one windowed segment
// sequence: segment length 8, hop 4, nfft 64, one-sided, constant detrend.
inline std::vector<double> spectrogram_psd_naive(const std::vector<double>& signal,
                                                 const std::vector<double>& window,
                                                 double fs) {
  const int64_t nperseg = 8, hop = 4, nfft = 64;
  const int64_t n = static_cast<int64_t>(signal.size());
  const int64_t segments = (n - nperseg) / hop + 1;
  const int64_t bins = nfft / 2 + 1;
  double win_pow = 0.0;
  for (double v : window) win_pow += v * v;
  std::vector<double> out(static_cast<size_t>(bins * segments));
  for (int64_t s = 0; s < segments; ++s) {
    std::vector<double> seg(static_cast<size_t>(nfft), 0.0);
    double mean = 0.0;
    for (int64_t i = 0; i < nperseg; ++i) mean += signal[static_cast<size_t>(s * hop + i)];
    mean /= double(nperseg);
    for (int64_t i = 0; i < nperseg; ++i)
      seg[static_cast<size_t>(i)] =
          (signal[static_cast<size_t>(s * hop + i)] - mean) * window[static_cast<size_t>(i)];
    for (int64_t k = 0; k < bins; ++k) {
      std::complex<double> acc(0.0, 0.0);
      for (int64_t t = 0; t < nfft; ++t) {
        double angle = -2.0 * M_PI * double(k) * double(t) / double(nfft);
        acc += seg[static_cast<size_t>(t)] * std::complex<double>(std::cos(angle), std::sin(angle));
      }
      double psd = std::norm(acc) / (fs * win_pow);
      if (k != 0 && k != nfft / 2) psd *= 2.0;
      out[static_cast<size_t>(k * segments + s)] = psd;
    }
  }
  return out;
}

// Pixel-set enumeration for the amplitude rasterization: normalize to
// [1,178], round half away from zero, invert the y axis.
inline std::vector<double> rasterize_naive(const std::vector<double>& signal) {
  const int64_t n = static_cast<int64_t>(signal.size());
  std::vector<double> img(static_cast<size_t>(n * n), 0.0);
  double lo = signal[0], hi = signal[0];
  for (double v : signal) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (int64_t t = 0; t < n; ++t) {
    int64_t row;
    if (hi == lo) {
      row = n / 2;  // midline
    } else {
      double norm = 1.0 + (signal[static_cast<size_t>(t)] - lo) * double(n - 1) / (hi - lo);
      double rounded = std::floor(norm + 0.5);  // half away from zero (values > 0)
      row = n - static_cast<int64_t>(rounded);
    }
    img[static_cast<size_t>(row * n + t)] = 255.0;
  }
  return img;
}

// Piecewise closed form of the symmetric cosine-tapered window.
inline std::vector<double> tukey_naive(int64_t len, double alpha) {
  std::vector<double> w(static_cast<size_t>(len));
  if (len == 1) {
    w[0] = 1.0;
    return w;
  }
  for (int64_t i = 0; i < len; ++i) {
    double x = double(i) / double(len - 1);
    double v;
    if (alpha <= 0.0) {
      v = 1.0;
    } else if (x < alpha / 2) {
      v = 0.5 * (1 + std::cos(M_PI * (2 * x / alpha - 1)));
    } else if (x <= 1 - alpha / 2) {
      v = 1.0;
    } else {
      v = 0.5 * (1 + std::cos(M_PI * (2 * x / alpha - 2 / alpha + 1)));
    }
    w[static_cast<size_t>(i)] = v;
  }
  return w;
}

}  // namespace oracle
