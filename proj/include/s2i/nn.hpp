#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "s2i/ops.hpp"
#include "s2i/rng.hpp"
#include "s2i/tensor.hpp"

namespace s2i::nn {

enum class Mode { kTrain, kEval };

// Weight-initialization family. Linear layers always draw U(-1/sqrt(k),
// 1/sqrt(k)) regardless of the style; the style selects the conv rule.
enum class InitStyle {
  kUniformFanIn,        // conv weight and bias ~ U(+-1/sqrt(fan_in))
  kKaimingUniformFanIn, // conv weight ~ U(+-sqrt(6/fan_in)), bias fan-in uniform
  kKaimingNormalFanOut, // conv weight ~ N(0, 2/fan_out), bias zeroed
};

template <class T>
struct ParamEntry {
  std::string name;
  Tensor<T> tensor;
  bool is_buffer;  // buffers (running stats) are saved but never optimized
};

template <class T>
class Module {
 public:
  virtual ~Module() = default;
  virtual Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamEntry<T>>& out) {}
  virtual void init_params(InitStyle /*style*/, Rng& /*rng*/) {}

  std::vector<ParamEntry<T>> named_entries() {
    std::vector<ParamEntry<T>> out;
    collect("", out);
    return out;
  }

  std::vector<Tensor<T>> parameters() {
    std::vector<Tensor<T>> out;
    for (auto& e : named_entries())
      if (!e.is_buffer) out.push_back(e.tensor);
    return out;
  }
};

template <class T>
int64_t count_parameters(Module<T>& m) {
  int64_t total = 0;
  std::vector<ParamEntry<T>> entries;
  m.collect("", entries);
  for (auto& e : entries)
    if (!e.is_buffer) total += e.tensor.numel();
  return total;
}

namespace detail {
inline std::string join(const std::string& prefix, const std::string& name) {
  return prefix.empty() ? name : prefix + "." + name;
}

template <class T>
void fill_uniform(Tensor<T>& t, double bound, Rng& rng) {
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.uniform(-bound, bound));
}

template <class T>
void fill_normal(Tensor<T>& t, double stddev, Rng& rng) {
  for (auto& v : t.mutable_data()) v = static_cast<T>(rng.normal() * stddev);
}
}  // namespace detail

template <class T>
class Conv : public Module<T> {
 public:
  Conv(int64_t dim, int64_t in_ch, int64_t out_ch, int64_t kernel,
       int64_t stride = 1, int64_t padding = 0, bool bias = true)
      : dim_(dim), has_bias_(bias) {
    spec_.in_channels = in_ch;
    spec_.out_channels = out_ch;
    spec_.kernel_size = kernel;
    spec_.stride = stride;
    spec_.padding = padding;
    Shape wshape = (dim == 1) ? Shape{out_ch, in_ch, kernel}
                              : Shape{out_ch, in_ch, kernel, kernel};
    weight_ = Tensor<T>::zeros(wshape);
    weight_.set_requires_grad(true);
    if (has_bias_) {
      bias_ = Tensor<T>::zeros({out_ch});
      bias_.set_requires_grad(true);
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, Rng*) override {
    return conv(x, weight_, bias_, spec_.stride, spec_.padding);
  }

  void collect(const std::string& prefix, std::vector<ParamEntry<T>>& out) override {
    out.push_back({detail::join(prefix, "weight"), weight_, false});
    if (has_bias_) out.push_back({detail::join(prefix, "bias"), bias_, false});
  }

  void init_params(InitStyle style, Rng& rng) override {
    int64_t kernel_elems = spec_.kernel_size;
    if (dim_ == 2) kernel_elems *= spec_.kernel_size;
    double fan_in = static_cast<double>(spec_.in_channels * kernel_elems);
    double fan_out = static_cast<double>(spec_.out_channels * kernel_elems);
    switch (style) {
      case InitStyle::kUniformFanIn:
        detail::fill_uniform(weight_, 1.0 / std::sqrt(fan_in), rng);
        if (has_bias_) detail::fill_uniform(bias_, 1.0 / std::sqrt(fan_in), rng);
        break;
      case InitStyle::kKaimingUniformFanIn:
        detail::fill_uniform(weight_, std::sqrt(6.0 / fan_in), rng);
        if (has_bias_) detail::fill_uniform(bias_, 1.0 / std::sqrt(fan_in), rng);
        break;
      case InitStyle::kKaimingNormalFanOut:
        detail::fill_normal(weight_, std::sqrt(2.0 / fan_out), rng);
        if (has_bias_)
          std::fill(bias_.mutable_data().begin(), bias_.mutable_data().end(), T(0));
        break;
    }
  }

  const ConvSpec& spec() const { return spec_; }
  Tensor<T>& weight() { return weight_; }
  Tensor<T>& bias() { return bias_; }

 private:
  ConvSpec spec_;
  int64_t dim_;
  bool has_bias_;
  Tensor<T> weight_, bias_;
};

template <class T>
class BatchNorm : public Module<T> {
 public:
  explicit BatchNorm(int64_t channels) : channels_(channels) {
    gamma_ = Tensor<T>::full({channels}, T(1));
    beta_ = Tensor<T>::zeros({channels});
    gamma_.set_requires_grad(true);
    beta_.set_requires_grad(true);
    running_mean_ = Tensor<T>::zeros({channels});
    running_var_ = Tensor<T>::full({channels}, T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng*) override {
    return batchnorm(x, gamma_, beta_, running_mean_, running_var_,
                     mode == Mode::kTrain);
  }

  void collect(const std::string& prefix, std::vector<ParamEntry<T>>& out) override {
    out.push_back({detail::join(prefix, "weight"), gamma_, false});
    out.push_back({detail::join(prefix, "bias"), beta_, false});
    out.push_back({detail::join(prefix, "running_mean"), running_mean_, true});
    out.push_back({detail::join(prefix, "running_var"), running_var_, true});
  }

  void init_params(InitStyle, Rng&) override {
    std::fill(gamma_.mutable_data().begin(), gamma_.mutable_data().end(), T(1));
    std::fill(beta_.mutable_data().begin(), beta_.mutable_data().end(), T(0));
    std::fill(running_mean_.mutable_data().begin(), running_mean_.mutable_data().end(), T(0));
    std::fill(running_var_.mutable_data().begin(), running_var_.mutable_data().end(), T(1));
  }

 private:
  int64_t channels_;
  Tensor<T> gamma_, beta_, running_mean_, running_var_;
};

template <class T>
class ReLU : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng*) override { return relu(x); }
};

template <class T>
class MaxPool : public Module<T> {
 public:
  MaxPool(int64_t kernel, int64_t stride, int64_t padding = 0)
      : kernel_(kernel), stride_(stride), padding_(padding) {}
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng*) override {
    return maxpool(x, kernel_, stride_, padding_);
  }

 private:
  int64_t kernel_, stride_, padding_;
};

template <class T>
class AvgPool : public Module<T> {
 public:
  AvgPool(int64_t kernel, int64_t stride) : kernel_(kernel), stride_(stride) {}
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng*) override {
    return avgpool(x, kernel_, stride_);
  }

 private:
  int64_t kernel_, stride_;
};

template <class T>
class AdaptiveAvgPool : public Module<T> {
 public:
  explicit AdaptiveAvgPool(int64_t target) : target_(target) {}
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng*) override {
    return adaptive_avg_pool(x, target_);
  }

 private:
  int64_t target_;
};

template <class T>
class Linear : public Module<T> {
 public:
  Linear(int64_t in_features, int64_t out_features)
      : in_features_(in_features) {
    weight_ = Tensor<T>::zeros({out_features, in_features});
    bias_ = Tensor<T>::zeros({out_features});
    weight_.set_requires_grad(true);
    bias_.set_requires_grad(true);
  }

  Tensor<T> forward(const Tensor<T>& x, Mode, Rng*) override {
    return linear(x, weight_, bias_);
  }

  void collect(const std::string& prefix, std::vector<ParamEntry<T>>& out) override {
    out.push_back({detail::join(prefix, "weight"), weight_, false});
    out.push_back({detail::join(prefix, "bias"), bias_, false});
  }

  void init_params(InitStyle, Rng& rng) override {
    double bound = 1.0 / std::sqrt(static_cast<double>(in_features_));
    detail::fill_uniform(weight_, bound, rng);
    detail::fill_uniform(bias_, bound, rng);
  }

 private:
  int64_t in_features_;
  Tensor<T> weight_, bias_;
};

template <class T>
class Dropout : public Module<T> {
 public:
  explicit Dropout(double p) : p_(p) {}
  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override {
    bool training = mode == Mode::kTrain;
    if (training && rng == nullptr)
      fail("config", "dropout in train mode requires a generator");
    static Rng unused(0);
    return dropout(x, p_, training, training ? *rng : unused);
  }

 private:
  double p_;
};

template <class T>
class Flatten : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode, Rng*) override {
    int64_t n = x.extent(0);
    return reshape(x, {n, x.numel() / n});
  }
};

template <class T>
class Sequential : public Module<T> {
 public:
  Sequential() = default;

  template <class M>
  Sequential& add(const std::string& name, M module) {
    children_.emplace_back(name, std::make_shared<M>(std::move(module)));
    return *this;
  }

  Sequential& add_shared(const std::string& name, std::shared_ptr<Module<T>> module) {
    children_.emplace_back(name, std::move(module));
    return *this;
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override {
    Tensor<T> h = x;
    for (auto& [name, child] : children_) h = child->forward(h, mode, rng);
    return h;
  }

  void collect(const std::string& prefix, std::vector<ParamEntry<T>>& out) override {
    for (auto& [name, child] : children_)
      child->collect(detail::join(prefix, name), out);
  }

  void init_params(InitStyle style, Rng& rng) override {
    for (auto& [name, child] : children_) child->init_params(style, rng);
  }

  size_t size() const { return children_.size(); }

 private:
  std::vector<std::pair<std::string, std::shared_ptr<Module<T>>>> children_;
};

}  // namespace s2i::nn
