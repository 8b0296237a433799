#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "s2i/nn.hpp"
#include "s2i/ops.hpp"
#include "s2i/tensor.hpp"

namespace s2i {

inline constexpr int64_t kSignalLength = 178;
inline constexpr int64_t kImageSize = 178;

// One fixed-length amplitude trace (microvolts, integer-valued in the source
// data but stored as floating point).
class Signal {
 public:
  explicit Signal(std::vector<double> samples) : samples_(std::move(samples)) {
    if (static_cast<int64_t>(samples_.size()) != kSignalLength)
      fail("data", "signal must have exactly " + std::to_string(kSignalLength) +
                       " samples, got " + std::to_string(samples_.size()));
    for (double v : samples_)
      if (!std::isfinite(v)) fail("data", "signal contains a non-finite sample");
  }

  const std::vector<double>& samples() const { return samples_; }
  double operator[](int64_t i) const { return samples_[static_cast<size_t>(i)]; }

 private:
  std::vector<double> samples_;
};

enum class S2IKind { kNone, kSignalAsImage, kSpectrogram, kCnn1, kCnn2 };

inline std::string to_string(S2IKind kind) {
  switch (kind) {
    case S2IKind::kNone: return "none";
    case S2IKind::kSignalAsImage: return "signal-as-image";
    case S2IKind::kSpectrogram: return "spectrogram";
    case S2IKind::kCnn1: return "cnn1";
    case S2IKind::kCnn2: return "cnn2";
  }
  fail("config", "unknown s2i kind");
}

inline S2IKind parse_s2i_kind(const std::string& name) {
  for (S2IKind k : {S2IKind::kNone, S2IKind::kSignalAsImage, S2IKind::kSpectrogram,
                    S2IKind::kCnn1, S2IKind::kCnn2})
    if (to_string(k) == name) return k;
  fail("config", "unknown s2i kind '" + name + "'");
}

inline bool is_trainable(S2IKind kind) {
  return kind == S2IKind::kCnn1 || kind == S2IKind::kCnn2;
}

// 'none' pairs with 1D base models only; image transforms pair with 2D.
inline void validate_pairing(S2IKind kind, int64_t dim) {
  if (kind == S2IKind::kNone && dim != 1)
    fail("config", "s2i 'none' is only legal with 1D base models (m is omitted)");
  if (kind != S2IKind::kNone && dim != 2)
    fail("config", "s2i '" + to_string(kind) + "' requires a 2D base model");
}

// Symmetric cosine-tapered window; alpha is the tapered fraction (0 gives a
// rectangular window, 1 a Hann window). Computed over the first taper, the
// flat middle, and mirrored.
inline std::vector<double> tukey_window(int64_t length, double alpha) {
  if (length < 1) fail("config", "tukey_window: length must be >= 1");
  if (alpha < 0.0 || alpha > 1.0)
    fail("config", "tukey_window: alpha must lie in [0,1]");
  std::vector<double> w(static_cast<size_t>(length), 1.0);
  if (length == 1 || alpha == 0.0) return w;
  // Taper spans alpha*(N-1)/2 samples on each side.
  double edge = alpha * static_cast<double>(length - 1) / 2.0;
  for (int64_t i = 0; i < length; ++i) {
    double n = static_cast<double>(i);
    if (n < edge) {
      w[static_cast<size_t>(i)] =
          0.5 * (1.0 - std::cos(M_PI * n / edge));
      // mirror fills the right taper
      w[static_cast<size_t>(length - 1 - i)] = w[static_cast<size_t>(i)];
    }
  }
  return w;
}

// Windowed-segment power spectral density estimation parameters.
struct SpectrogramSpec {
  int64_t segment_length = 8;
  int64_t overlap = 4;
  int64_t fft_length = 64;
  double tukey_alpha = 0.25;
  double sample_rate = 178.0;

  int64_t hop() const { return segment_length - overlap; }
  int64_t segments(int64_t n) const { return (n - segment_length) / hop() + 1; }
  int64_t bins() const { return fft_length / 2 + 1; }

  void validate() const {
    if (!(overlap < segment_length && segment_length <= fft_length))
      fail("config", "spectrogram: need overlap < segment length <= fft length");
    if (sample_rate <= 0) fail("config", "spectrogram: sample rate must be positive");
  }
};

// One-sided PSD spectrogram, [bins x segments] = [33 x 43] for a 178-sample
// signal. Each segment is mean-subtracted, Tukey-windowed, zero-padded to the
// FFT length and transformed; PSD = |X[k]|^2 / (fs * sum w^2) with interior
// bins doubled (DC and Nyquist are not).
template <class T>
Tensor<T> spectrogram_psd(const Signal& signal, const SpectrogramSpec& spec = {}) {
  spec.validate();
  const int64_t n = kSignalLength;
  if (n < spec.segment_length)
    fail("data", "spectrogram: signal shorter than segment length");
  const int64_t seg_len = spec.segment_length;
  const int64_t hop = spec.hop();
  const int64_t nfft = spec.fft_length;
  const int64_t segments = spec.segments(n);
  const int64_t bins = spec.bins();

  std::vector<double> window = tukey_window(seg_len, spec.tukey_alpha);
  double win_pow = 0.0;
  for (double v : window) win_pow += v * v;
  const double scale = 1.0 / (spec.sample_rate * win_pow);

  // DFT coefficients for the seg_len non-zero positions of the padded frame.
  std::vector<double> cos_tab(static_cast<size_t>(bins * seg_len));
  std::vector<double> sin_tab(static_cast<size_t>(bins * seg_len));
  for (int64_t k = 0; k < bins; ++k)
    for (int64_t t = 0; t < seg_len; ++t) {
      double angle = -2.0 * M_PI * static_cast<double>(k * t) / static_cast<double>(nfft);
      cos_tab[static_cast<size_t>(k * seg_len + t)] = std::cos(angle);
      sin_tab[static_cast<size_t>(k * seg_len + t)] = std::sin(angle);
    }

  std::vector<T> out(static_cast<size_t>(bins * segments));
  std::vector<double> frame(static_cast<size_t>(seg_len));
  for (int64_t s = 0; s < segments; ++s) {
    double mean = 0.0;
    for (int64_t i = 0; i < seg_len; ++i) mean += signal[s * hop + i];
    mean /= static_cast<double>(seg_len);
    for (int64_t i = 0; i < seg_len; ++i)
      frame[static_cast<size_t>(i)] = (signal[s * hop + i] - mean) * window[static_cast<size_t>(i)];
    for (int64_t k = 0; k < bins; ++k) {
      double re = 0.0, im = 0.0;
      const double* ct = cos_tab.data() + k * seg_len;
      const double* st = sin_tab.data() + k * seg_len;
      for (int64_t t = 0; t < seg_len; ++t) {
        re += frame[static_cast<size_t>(t)] * ct[t];
        im += frame[static_cast<size_t>(t)] * st[t];
      }
      double psd = (re * re + im * im) * scale;
      if (k != 0 && k != nfft / 2) psd *= 2.0;
      out[static_cast<size_t>(k * segments + s)] = static_cast<T>(psd);
    }
  }
  return Tensor<T>::from({bins, segments}, std::move(out));
}

// Amplitude rasterization: values are affinely mapped so min -> 1 and
// max -> 178, rounded half away from zero, y-inverted, and plotted as
// 255-valued pixels on a zero image (one pixel per column). A constant signal
// maps every column to the midline row.
template <class T>
Tensor<T> signal_as_image(const Signal& signal) {
  const int64_t n = kSignalLength;
  std::vector<T> img(static_cast<size_t>(n * n), T(0));
  double lo = signal[0], hi = signal[0];
  for (int64_t i = 1; i < n; ++i) {
    lo = std::min(lo, signal[i]);
    hi = std::max(hi, signal[i]);
  }
  for (int64_t t = 0; t < n; ++t) {
    int64_t row;
    if (hi == lo) {
      row = n / 2;
    } else {
      double norm = 1.0 + (signal[t] - lo) * static_cast<double>(n - 1) / (hi - lo);
      row = n - static_cast<int64_t>(std::floor(norm + 0.5));
    }
    img[static_cast<size_t>(row * n + t)] = T(255);
  }
  return Tensor<T>::from({n, n}, std::move(img));
}

// PSD spectrogram upsampled to the 178x178 canvas; raw values are preserved
// (rendering normalizes separately).
template <class T>
Tensor<T> spectrogram_image(const Signal& signal, const SpectrogramSpec& spec = {}) {
  Tensor<T> psd = spectrogram_psd<T>(signal, spec);
  return bilinear_resize(psd, kImageSize, kImageSize);
}

// Trainable signal-to-image module: one or two 1D conv layers whose feature
// maps are stacked as image rows (ascending channel order) and bilinearly
// resized to 178x178. Operates on batches [N,1,178] -> [N,1,178,178].
template <class T>
class CnnS2I : public nn::Module<T> {
 public:
  CnnS2I(int64_t layers) : layers_(layers) {
    if (layers != 1 && layers != 2) fail("config", "cnn s2i supports 1 or 2 layers");
    convs_.push_back(std::make_shared<nn::Conv<T>>(1, 1, 8, 3, 1, 1));
    if (layers == 2)
      convs_.push_back(std::make_shared<nn::Conv<T>>(1, 8, 16, 3, 1, 1));
  }

  // [N,1,178] -> [N,1,178,178]
  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode, Rng* rng) override {
    check_shape(x.dim() == 3 && x.extent(1) == 1,
                "cnn s2i expects [N,1,L] input, got " + shape_str(x.shape()));
    int64_t n = x.extent(0);
    Tensor<T> h = convs_[0]->forward(x, mode, rng);  // [N,8,178]
    if (layers_ == 2) {
      h = relu(h);
      h = maxpool(h, 2, 2);                          // [N,8,89]
      h = convs_[1]->forward(h, mode, rng);          // [N,16,89]
    }
    // Channels become image rows: [N,C,L] viewed as [N,1,C,L].
    Tensor<T> rows = reshape(h, {n, 1, h.extent(1), h.extent(2)});
    return bilinear_resize(rows, kImageSize, kImageSize);
  }

  void collect(const std::string& prefix, std::vector<nn::ParamEntry<T>>& out) override {
    for (size_t i = 0; i < convs_.size(); ++i)
      convs_[i]->collect(nn::detail::join(prefix, "conv" + std::to_string(i + 1)), out);
  }

  void init_params(nn::InitStyle, Rng& rng) override {
    for (auto& c : convs_) c->init_params(nn::InitStyle::kKaimingUniformFanIn, rng);
  }

 private:
  int64_t layers_;
  std::vector<std::shared_ptr<nn::Conv<T>>> convs_;
};

// Uniform front end for all five kinds: maps a signal batch [N,1,178] to the
// base-model input ([N,1,178] unchanged for 'none', [N,3,178,178] otherwise).
template <class T>
class S2IModule {
 public:
  explicit S2IModule(S2IKind kind) : kind_(kind) {
    if (is_trainable(kind))
      cnn_ = std::make_shared<CnnS2I<T>>(kind == S2IKind::kCnn1 ? 1 : 2);
  }

  S2IKind kind() const { return kind_; }
  bool trainable() const { return cnn_ != nullptr; }
  std::shared_ptr<CnnS2I<T>> cnn() { return cnn_; }

  void init_params(Rng& rng) {
    if (cnn_) cnn_->init_params(nn::InitStyle::kKaimingUniformFanIn, rng);
  }

  std::vector<nn::ParamEntry<T>> named_entries() {
    std::vector<nn::ParamEntry<T>> out;
    if (cnn_) cnn_->collect("", out);
    return out;
  }

  // signals: the raw batch [N,1,178]. For non-trainable kinds the per-sample
  // images are computed outside the graph; for cnn kinds gradients flow into
  // the conv parameters.
  Tensor<T> forward(const Tensor<T>& signals, nn::Mode mode, Rng* rng) {
    if (kind_ == S2IKind::kNone) return signals;
    check_shape(signals.dim() == 3 && signals.extent(1) == 1,
                "s2i expects [N,1,178] signal batches");
    int64_t n = signals.extent(0);
    if (cnn_) {
      Tensor<T> img = cnn_->forward(signals, mode, rng);  // [N,1,178,178]
      return stack_channels_batch(img, 3);
    }
    std::vector<T> out(static_cast<size_t>(n * kImageSize * kImageSize));
    const T* src = signals.data().data();
    for (int64_t i = 0; i < n; ++i) {
      std::vector<double> samples(static_cast<size_t>(kSignalLength));
      for (int64_t j = 0; j < kSignalLength; ++j)
        samples[static_cast<size_t>(j)] = static_cast<double>(src[i * kSignalLength + j]);
      Signal sig(std::move(samples));
      Tensor<T> img = (kind_ == S2IKind::kSignalAsImage)
                          ? signal_as_image<T>(sig)
                          : spectrogram_image<T>(sig);
      std::copy(img.data().begin(), img.data().end(),
                out.begin() + i * kImageSize * kImageSize);
    }
    Tensor<T> batch = Tensor<T>::from({n, 1, kImageSize, kImageSize}, std::move(out));
    return stack_channels_batch(batch, 3);
  }

 private:
  S2IKind kind_;
  std::shared_ptr<CnnS2I<T>> cnn_;
};

}  // namespace s2i
