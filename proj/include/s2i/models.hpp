#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "s2i/nn.hpp"

namespace s2i {

enum class ModelKind {
  kLeNet,
  kAlexNet,
  kVgg11,
  kVgg13,
  kVgg16,
  kVgg19,
  kResNet18,
  kResNet34,
  kResNet50,
  kResNet101,
  kResNet152,
  kDenseNet121,
  kDenseNet161,
  kDenseNet169,
  kDenseNet201,
};

enum class ModelFamily { kLeNet, kAlexNet, kVgg, kResNet, kDenseNet };

inline const std::vector<ModelKind>& all_model_kinds() {
  static const std::vector<ModelKind> kinds = {
      ModelKind::kLeNet,       ModelKind::kAlexNet,     ModelKind::kVgg11,
      ModelKind::kVgg13,       ModelKind::kVgg16,       ModelKind::kVgg19,
      ModelKind::kResNet18,    ModelKind::kResNet34,    ModelKind::kResNet50,
      ModelKind::kResNet101,   ModelKind::kResNet152,   ModelKind::kDenseNet121,
      ModelKind::kDenseNet161, ModelKind::kDenseNet169, ModelKind::kDenseNet201,
  };
  return kinds;
}

inline std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLeNet: return "lenet";
    case ModelKind::kAlexNet: return "alexnet";
    case ModelKind::kVgg11: return "vgg11";
    case ModelKind::kVgg13: return "vgg13";
    case ModelKind::kVgg16: return "vgg16";
    case ModelKind::kVgg19: return "vgg19";
    case ModelKind::kResNet18: return "resnet18";
    case ModelKind::kResNet34: return "resnet34";
    case ModelKind::kResNet50: return "resnet50";
    case ModelKind::kResNet101: return "resnet101";
    case ModelKind::kResNet152: return "resnet152";
    case ModelKind::kDenseNet121: return "densenet121";
    case ModelKind::kDenseNet161: return "densenet161";
    case ModelKind::kDenseNet169: return "densenet169";
    case ModelKind::kDenseNet201: return "densenet201";
  }
  fail("config", "unknown model kind");
}

inline ModelKind parse_model_kind(const std::string& name) {
  for (ModelKind k : all_model_kinds())
    if (to_string(k) == name) return k;
  fail("config", "unknown model kind '" + name + "'");
}

inline ModelFamily family_of(ModelKind kind) {
  switch (kind) {
    case ModelKind::kLeNet: return ModelFamily::kLeNet;
    case ModelKind::kAlexNet: return ModelFamily::kAlexNet;
    case ModelKind::kVgg11:
    case ModelKind::kVgg13:
    case ModelKind::kVgg16:
    case ModelKind::kVgg19: return ModelFamily::kVgg;
    case ModelKind::kResNet18:
    case ModelKind::kResNet34:
    case ModelKind::kResNet50:
    case ModelKind::kResNet101:
    case ModelKind::kResNet152: return ModelFamily::kResNet;
    default: return ModelFamily::kDenseNet;
  }
}

inline constexpr int64_t kNumClasses = 5;

namespace nn {

// Residual block with two 3x3 convolutions.
template <class T>
class BasicBlock : public Module<T> {
 public:
  static constexpr int64_t kExpansion = 1;

  BasicBlock(int64_t dim, int64_t in_planes, int64_t planes, int64_t stride)
      : conv1_(dim, in_planes, planes, 3, stride, 1, false),
        bn1_(planes),
        conv2_(dim, planes, planes, 3, 1, 1, false),
        bn2_(planes) {
    if (stride != 1 || in_planes != planes) {
      downsample_ = std::make_shared<Sequential<T>>();
      downsample_->add("0", Conv<T>(dim, in_planes, planes, 1, stride, 0, false));
      downsample_->add("1", BatchNorm<T>(planes));
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override {
    Tensor<T> out = relu(bn1_.forward(conv1_.forward(x, mode, rng), mode, rng));
    out = bn2_.forward(conv2_.forward(out, mode, rng), mode, rng);
    Tensor<T> identity = downsample_ ? downsample_->forward(x, mode, rng) : x;
    return relu(add(out, identity));
  }

  void collect(const std::string& prefix, std::vector<ParamEntry<T>>& out) override {
    conv1_.collect(detail::join(prefix, "conv1"), out);
    bn1_.collect(detail::join(prefix, "bn1"), out);
    conv2_.collect(detail::join(prefix, "conv2"), out);
    bn2_.collect(detail::join(prefix, "bn2"), out);
    if (downsample_) downsample_->collect(detail::join(prefix, "downsample"), out);
  }

  void init_params(InitStyle style, Rng& rng) override {
    conv1_.init_params(style, rng);
    bn1_.init_params(style, rng);
    conv2_.init_params(style, rng);
    bn2_.init_params(style, rng);
    if (downsample_) downsample_->init_params(style, rng);
  }

 private:
  Conv<T> conv1_;
  BatchNorm<T> bn1_;
  Conv<T> conv2_;
  BatchNorm<T> bn2_;
  std::shared_ptr<Sequential<T>> downsample_;
};

// Residual block with a 1x1 / 3x3 / 1x1 squeeze-expand structure.
template <class T>
class Bottleneck : public Module<T> {
 public:
  static constexpr int64_t kExpansion = 4;

  Bottleneck(int64_t dim, int64_t in_planes, int64_t planes, int64_t stride)
      : conv1_(dim, in_planes, planes, 1, 1, 0, false),
        bn1_(planes),
        conv2_(dim, planes, planes, 3, stride, 1, false),
        bn2_(planes),
        conv3_(dim, planes, planes * kExpansion, 1, 1, 0, false),
        bn3_(planes * kExpansion) {
    if (stride != 1 || in_planes != planes * kExpansion) {
      downsample_ = std::make_shared<Sequential<T>>();
      downsample_->add("0", Conv<T>(dim, in_planes, planes * kExpansion, 1, stride, 0, false));
      downsample_->add("1", BatchNorm<T>(planes * kExpansion));
    }
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override {
    Tensor<T> out = relu(bn1_.forward(conv1_.forward(x, mode, rng), mode, rng));
    out = relu(bn2_.forward(conv2_.forward(out, mode, rng), mode, rng));
    out = bn3_.forward(conv3_.forward(out, mode, rng), mode, rng);
    Tensor<T> identity = downsample_ ? downsample_->forward(x, mode, rng) : x;
    return relu(add(out, identity));
  }

  void collect(const std::string& prefix, std::vector<ParamEntry<T>>& out) override {
    conv1_.collect(detail::join(prefix, "conv1"), out);
    bn1_.collect(detail::join(prefix, "bn1"), out);
    conv2_.collect(detail::join(prefix, "conv2"), out);
    bn2_.collect(detail::join(prefix, "bn2"), out);
    conv3_.collect(detail::join(prefix, "conv3"), out);
    bn3_.collect(detail::join(prefix, "bn3"), out);
    if (downsample_) downsample_->collect(detail::join(prefix, "downsample"), out);
  }

  void init_params(InitStyle style, Rng& rng) override {
    conv1_.init_params(style, rng);
    bn1_.init_params(style, rng);
    conv2_.init_params(style, rng);
    bn2_.init_params(style, rng);
    conv3_.init_params(style, rng);
    bn3_.init_params(style, rng);
    if (downsample_) downsample_->init_params(style, rng);
  }

 private:
  Conv<T> conv1_;
  BatchNorm<T> bn1_;
  Conv<T> conv2_;
  BatchNorm<T> bn2_;
  Conv<T> conv3_;
  BatchNorm<T> bn3_;
  std::shared_ptr<Sequential<T>> downsample_;
};

// norm-relu-conv1x1-norm-relu-conv3x3 producing `growth` new channels.
template <class T>
class DenseLayer : public Module<T> {
 public:
  DenseLayer(int64_t dim, int64_t in_features, int64_t growth)
      : norm1_(in_features),
        conv1_(dim, in_features, 4 * growth, 1, 1, 0, false),
        norm2_(4 * growth),
        conv2_(dim, 4 * growth, growth, 3, 1, 1, false) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override {
    Tensor<T> h = conv1_.forward(relu(norm1_.forward(x, mode, rng)), mode, rng);
    return conv2_.forward(relu(norm2_.forward(h, mode, rng)), mode, rng);
  }

  void collect(const std::string& prefix, std::vector<ParamEntry<T>>& out) override {
    norm1_.collect(detail::join(prefix, "norm1"), out);
    conv1_.collect(detail::join(prefix, "conv1"), out);
    norm2_.collect(detail::join(prefix, "norm2"), out);
    conv2_.collect(detail::join(prefix, "conv2"), out);
  }

  void init_params(InitStyle style, Rng& rng) override {
    norm1_.init_params(style, rng);
    conv1_.init_params(style, rng);
    norm2_.init_params(style, rng);
    conv2_.init_params(style, rng);
  }

 private:
  BatchNorm<T> norm1_;
  Conv<T> conv1_;
  BatchNorm<T> norm2_;
  Conv<T> conv2_;
};

template <class T>
class DenseBlock : public Module<T> {
 public:
  DenseBlock(int64_t dim, int64_t in_features, int64_t layers, int64_t growth) {
    for (int64_t i = 0; i < layers; ++i)
      layers_.push_back(std::make_shared<DenseLayer<T>>(dim, in_features + i * growth, growth));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Rng* rng) override {
    Tensor<T> features = x;
    for (auto& layer : layers_) {
      Tensor<T> fresh = layer->forward(features, mode, rng);
      features = concat({features, fresh}, 1);
    }
    return features;
  }

  void collect(const std::string& prefix, std::vector<ParamEntry<T>>& out) override {
    for (size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->collect(detail::join(prefix, "denselayer" + std::to_string(i + 1)), out);
  }

  void init_params(InitStyle style, Rng& rng) override {
    for (auto& layer : layers_) layer->init_params(style, rng);
  }

 private:
  std::vector<std::shared_ptr<DenseLayer<T>>> layers_;
};

}  // namespace nn

// A constructed base model: the layer graph plus its identity.
template <class T>
struct BaseModel {
  ModelKind kind;
  int64_t dim = 0;
  std::shared_ptr<nn::Sequential<T>> net;

  Tensor<T> forward(const Tensor<T>& x, nn::Mode mode, Rng* rng = nullptr) const {
    int64_t want_channels = (dim == 1) ? 1 : 3;
    check_shape(x.dim() == dim + 2,
                "model expects rank " + std::to_string(dim + 2) + " input, got " +
                    shape_str(x.shape()));
    check_shape(x.extent(1) == want_channels,
                "model expects " + std::to_string(want_channels) +
                    " input channels, got " + std::to_string(x.extent(1)));
    // Finite inputs stay finite through every op, so scanning the graph's two
    // ends is enough to catch NaN activations.
    if (x.has_nonfinite())
      fail("numeric", "NaN detected in activations of " + to_string(kind));
    Tensor<T> logits = net->forward(x, mode, rng);
    if (logits.has_nonfinite())
      fail("numeric", "NaN detected in activations of " + to_string(kind));
    return logits;
  }

  std::vector<nn::ParamEntry<T>> named_entries() const { return net->named_entries(); }
  int64_t parameter_count() const { return nn::count_parameters(*net); }
};

namespace detail_models {

template <class T>
std::shared_ptr<nn::Sequential<T>> build_lenet(int64_t dim) {
  using namespace nn;
  int64_t in_ch = (dim == 1) ? 1 : 3;
  auto features = std::make_shared<Sequential<T>>();
  features->add("conv1", Conv<T>(dim, in_ch, 6, 5));
  features->add("relu1", ReLU<T>());
  features->add("pool1", MaxPool<T>(2, 2));
  features->add("conv2", Conv<T>(dim, 6, 16, 5));
  features->add("relu2", ReLU<T>());
  features->add("pool2", MaxPool<T>(2, 2));

  int64_t feat = 16 * ((dim == 1) ? 5 : 25);
  auto classifier = std::make_shared<Sequential<T>>();
  classifier->add("flatten", Flatten<T>());
  classifier->add("fc1", Linear<T>(feat, 120));
  classifier->add("relu1", ReLU<T>());
  classifier->add("fc2", Linear<T>(120, 84));
  classifier->add("relu2", ReLU<T>());
  classifier->add("fc3", Linear<T>(84, kNumClasses));

  auto net = std::make_shared<Sequential<T>>();
  net->add_shared("features", features);
  net->add("avgpool", AdaptiveAvgPool<T>(5));
  net->add_shared("classifier", classifier);
  return net;
}

template <class T>
std::shared_ptr<nn::Sequential<T>> build_alexnet(int64_t dim) {
  using namespace nn;
  int64_t in_ch = (dim == 1) ? 1 : 3;
  auto features = std::make_shared<Sequential<T>>();
  features->add("conv1", Conv<T>(dim, in_ch, 64, 11, 4, 2));
  features->add("relu1", ReLU<T>());
  features->add("pool1", MaxPool<T>(3, 2));
  features->add("conv2", Conv<T>(dim, 64, 192, 5, 1, 2));
  features->add("relu2", ReLU<T>());
  features->add("pool2", MaxPool<T>(3, 2));
  features->add("conv3", Conv<T>(dim, 192, 384, 3, 1, 1));
  features->add("relu3", ReLU<T>());
  features->add("conv4", Conv<T>(dim, 384, 256, 3, 1, 1));
  features->add("relu4", ReLU<T>());
  features->add("conv5", Conv<T>(dim, 256, 256, 3, 1, 1));
  features->add("relu5", ReLU<T>());
  features->add("pool3", MaxPool<T>(3, 2));

  int64_t feat = 256 * ((dim == 1) ? 6 : 36);
  auto classifier = std::make_shared<Sequential<T>>();
  classifier->add("flatten", Flatten<T>());
  classifier->add("drop1", Dropout<T>(0.5));
  classifier->add("fc1", Linear<T>(feat, 4096));
  classifier->add("relu1", ReLU<T>());
  classifier->add("drop2", Dropout<T>(0.5));
  classifier->add("fc2", Linear<T>(4096, 4096));
  classifier->add("relu2", ReLU<T>());
  classifier->add("fc3", Linear<T>(4096, kNumClasses));

  auto net = std::make_shared<Sequential<T>>();
  net->add_shared("features", features);
  net->add("avgpool", AdaptiveAvgPool<T>(6));
  net->add_shared("classifier", classifier);
  return net;
}

inline const std::vector<int>& vgg_config(ModelKind kind) {
  static const std::vector<int> cfg11 = {64, -1, 128, -1, 256, 256, -1, 512, 512, -1, 512, 512, -1};
  static const std::vector<int> cfg13 = {64, 64, -1, 128, 128, -1, 256, 256, -1, 512, 512, -1, 512, 512, -1};
  static const std::vector<int> cfg16 = {64, 64, -1, 128, 128, -1, 256, 256, 256, -1, 512, 512, 512, -1, 512, 512, 512, -1};
  static const std::vector<int> cfg19 = {64, 64, -1, 128, 128, -1, 256, 256, 256, 256, -1, 512, 512, 512, 512, -1, 512, 512, 512, 512, -1};
  switch (kind) {
    case ModelKind::kVgg11: return cfg11;
    case ModelKind::kVgg13: return cfg13;
    case ModelKind::kVgg16: return cfg16;
    default: return cfg19;
  }
}

template <class T>
std::shared_ptr<nn::Sequential<T>> build_vgg(ModelKind kind, int64_t dim) {
  using namespace nn;
  int64_t in_ch = (dim == 1) ? 1 : 3;
  auto features = std::make_shared<Sequential<T>>();
  int conv_idx = 1, pool_idx = 1;
  int64_t ch = in_ch;
  for (int entry : vgg_config(kind)) {
    if (entry < 0) {
      features->add("pool" + std::to_string(pool_idx++), MaxPool<T>(2, 2));
    } else {
      std::string suffix = std::to_string(conv_idx++);
      features->add("conv" + suffix, Conv<T>(dim, ch, entry, 3, 1, 1));
      features->add("relu" + suffix, ReLU<T>());
      ch = entry;
    }
  }

  int64_t feat = 512 * ((dim == 1) ? 7 : 49);
  auto classifier = std::make_shared<Sequential<T>>();
  classifier->add("flatten", Flatten<T>());
  classifier->add("fc1", Linear<T>(feat, 4096));
  classifier->add("relu1", ReLU<T>());
  classifier->add("drop1", Dropout<T>(0.5));
  classifier->add("fc2", Linear<T>(4096, 4096));
  classifier->add("relu2", ReLU<T>());
  classifier->add("drop2", Dropout<T>(0.5));
  classifier->add("fc3", Linear<T>(4096, kNumClasses));

  auto net = std::make_shared<Sequential<T>>();
  net->add_shared("features", features);
  net->add("avgpool", AdaptiveAvgPool<T>(7));
  net->add_shared("classifier", classifier);
  return net;
}

template <class T, class Block>
std::shared_ptr<nn::Sequential<T>> build_resnet(int64_t dim,
                                                const std::array<int, 4>& blocks) {
  using namespace nn;
  int64_t in_ch = (dim == 1) ? 1 : 3;
  auto net = std::make_shared<Sequential<T>>();
  net->add("conv1", Conv<T>(dim, in_ch, 64, 7, 2, 3, false));
  net->add("bn1", BatchNorm<T>(64));
  net->add("relu", ReLU<T>());
  net->add("maxpool", MaxPool<T>(3, 2, 1));

  int64_t in_planes = 64;
  const int64_t planes_per_stage[4] = {64, 128, 256, 512};
  for (int stage = 0; stage < 4; ++stage) {
    auto layer = std::make_shared<Sequential<T>>();
    int64_t planes = planes_per_stage[stage];
    int64_t stride = (stage == 0) ? 1 : 2;
    for (int b = 0; b < blocks[static_cast<size_t>(stage)]; ++b) {
      layer->add(std::to_string(b),
                 Block(dim, in_planes, planes, b == 0 ? stride : 1));
      in_planes = planes * Block::kExpansion;
    }
    net->add_shared("layer" + std::to_string(stage + 1), layer);
  }

  net->add("avgpool", AdaptiveAvgPool<T>(1));
  net->add("flatten", Flatten<T>());
  net->add("fc", Linear<T>(in_planes, kNumClasses));
  return net;
}

template <class T>
std::shared_ptr<nn::Sequential<T>> build_densenet(int64_t dim, int64_t growth,
                                                  const std::array<int, 4>& blocks,
                                                  int64_t init_features) {
  using namespace nn;
  int64_t in_ch = (dim == 1) ? 1 : 3;
  auto features = std::make_shared<Sequential<T>>();
  features->add("conv0", Conv<T>(dim, in_ch, init_features, 7, 2, 3, false));
  features->add("norm0", BatchNorm<T>(init_features));
  features->add("relu0", ReLU<T>());
  features->add("pool0", MaxPool<T>(3, 2, 1));

  int64_t ch = init_features;
  for (int i = 0; i < 4; ++i) {
    features->add("denseblock" + std::to_string(i + 1),
                  DenseBlock<T>(dim, ch, blocks[static_cast<size_t>(i)], growth));
    ch += blocks[static_cast<size_t>(i)] * growth;
    if (i < 3) {
      auto trans = std::make_shared<Sequential<T>>();
      trans->add("norm", BatchNorm<T>(ch));
      trans->add("relu", ReLU<T>());
      trans->add("conv", Conv<T>(dim, ch, ch / 2, 1, 1, 0, false));
      trans->add("pool", AvgPool<T>(2, 2));
      features->add_shared("transition" + std::to_string(i + 1), trans);
      ch = ch / 2;
    }
  }
  features->add("norm5", BatchNorm<T>(ch));
  features->add("relu5", ReLU<T>());

  auto net = std::make_shared<Sequential<T>>();
  net->add_shared("features", features);
  net->add("avgpool", AdaptiveAvgPool<T>(1));
  net->add("flatten", Flatten<T>());
  net->add("classifier", Linear<T>(ch, kNumClasses));
  return net;
}

}  // namespace detail_models

// Builds one of the fifteen architectures with d-dimensional layers and
// initializes its parameters family-by-family; deterministic given the rng.
template <class T>
BaseModel<T> build_model(ModelKind kind, int64_t dim, Rng& rng) {
  if (dim != 1 && dim != 2) fail("config", "model dim must be 1 or 2");
  using detail_models::build_alexnet;
  using detail_models::build_densenet;
  using detail_models::build_lenet;
  using detail_models::build_resnet;
  using detail_models::build_vgg;

  std::shared_ptr<nn::Sequential<T>> net;
  switch (kind) {
    case ModelKind::kLeNet: net = build_lenet<T>(dim); break;
    case ModelKind::kAlexNet: net = build_alexnet<T>(dim); break;
    case ModelKind::kVgg11:
    case ModelKind::kVgg13:
    case ModelKind::kVgg16:
    case ModelKind::kVgg19: net = build_vgg<T>(kind, dim); break;
    case ModelKind::kResNet18:
      net = build_resnet<T, nn::BasicBlock<T>>(dim, {2, 2, 2, 2});
      break;
    case ModelKind::kResNet34:
      net = build_resnet<T, nn::BasicBlock<T>>(dim, {3, 4, 6, 3});
      break;
    case ModelKind::kResNet50:
      net = build_resnet<T, nn::Bottleneck<T>>(dim, {3, 4, 6, 3});
      break;
    case ModelKind::kResNet101:
      net = build_resnet<T, nn::Bottleneck<T>>(dim, {3, 4, 23, 3});
      break;
    case ModelKind::kResNet152:
      net = build_resnet<T, nn::Bottleneck<T>>(dim, {3, 8, 36, 3});
      break;
    case ModelKind::kDenseNet121:
      net = build_densenet<T>(dim, 32, {6, 12, 24, 16}, 64);
      break;
    case ModelKind::kDenseNet161:
      net = build_densenet<T>(dim, 48, {6, 12, 36, 24}, 96);
      break;
    case ModelKind::kDenseNet169:
      net = build_densenet<T>(dim, 32, {6, 12, 32, 32}, 64);
      break;
    case ModelKind::kDenseNet201:
      net = build_densenet<T>(dim, 32, {6, 12, 48, 32}, 64);
      break;
  }

  ModelFamily fam = family_of(kind);
  nn::InitStyle style = (fam == ModelFamily::kResNet || fam == ModelFamily::kDenseNet)
                            ? nn::InitStyle::kKaimingNormalFanOut
                            : nn::InitStyle::kUniformFanIn;
  net->init_params(style, rng);
  return BaseModel<T>{kind, dim, net};
}

}  // namespace s2i
