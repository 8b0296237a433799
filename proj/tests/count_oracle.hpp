// Closed-form per-layer parameter counting, computed from the architecture
// tables alone. Used as the independent route against Module-based counting.
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace oracle {

inline int64_t conv_params(int64_t cin, int64_t cout, int64_t k, int64_t dim,
                           bool bias) {
  int64_t kernel = (dim == 2) ? k * k : k;
  return cout * cin * kernel + (bias ? cout : 0);
}

inline int64_t bn_params(int64_t c) { return 2 * c; }

inline int64_t linear_params(int64_t in, int64_t out) { return out * in + out; }

inline int64_t count_lenet(int64_t dim) {
  int64_t in_ch = dim == 1 ? 1 : 3;
  int64_t feat = 16 * (dim == 1 ? 5 : 25);
  return conv_params(in_ch, 6, 5, dim, true) + conv_params(6, 16, 5, dim, true) +
         linear_params(feat, 120) + linear_params(120, 84) + linear_params(84, 5);
}

inline int64_t count_alexnet(int64_t dim) {
  int64_t in_ch = dim == 1 ? 1 : 3;
  int64_t feat = 256 * (dim == 1 ? 6 : 36);
  return conv_params(in_ch, 64, 11, dim, true) +
         conv_params(64, 192, 5, dim, true) +
         conv_params(192, 384, 3, dim, true) +
         conv_params(384, 256, 3, dim, true) +
         conv_params(256, 256, 3, dim, true) + linear_params(feat, 4096) +
         linear_params(4096, 4096) + linear_params(4096, 5);
}

inline int64_t count_vgg(const std::vector<int>& cfg, int64_t dim) {
  int64_t in_ch = dim == 1 ? 1 : 3;
  int64_t total = 0;
  int64_t ch = in_ch;
  for (int entry : cfg) {
    if (entry < 0) continue;
    total += conv_params(ch, entry, 3, dim, true);
    ch = entry;
  }
  int64_t feat = 512 * (dim == 1 ? 7 : 49);
  total += linear_params(feat, 4096) + linear_params(4096, 4096) +
           linear_params(4096, 5);
  return total;
}

inline int64_t count_resnet(const std::array<int, 4>& blocks, bool bottleneck,
                            int64_t dim) {
  int64_t in_ch = dim == 1 ? 1 : 3;
  int64_t total = conv_params(in_ch, 64, 7, dim, false) + bn_params(64);
  int64_t expansion = bottleneck ? 4 : 1;
  int64_t inp = 64;
  for (int stage = 0; stage < 4; ++stage) {
    int64_t planes = 64 << stage;
    for (int b = 0; b < blocks[static_cast<size_t>(stage)]; ++b) {
      int64_t stride = (stage > 0 && b == 0) ? 2 : 1;
      int64_t out = planes * expansion;
      if (bottleneck) {
        total += conv_params(inp, planes, 1, dim, false) + bn_params(planes) +
                 conv_params(planes, planes, 3, dim, false) + bn_params(planes) +
                 conv_params(planes, out, 1, dim, false) + bn_params(out);
      } else {
        total += conv_params(inp, planes, 3, dim, false) + bn_params(planes) +
                 conv_params(planes, planes, 3, dim, false) + bn_params(planes);
      }
      if (stride != 1 || inp != out)
        total += conv_params(inp, out, 1, dim, false) + bn_params(out);
      inp = out;
    }
  }
  total += linear_params(inp, 5);
  return total;
}

inline int64_t count_densenet(int64_t growth, const std::array<int, 4>& blocks,
                              int64_t init_features, int64_t dim) {
  int64_t in_ch = dim == 1 ? 1 : 3;
  int64_t total = conv_params(in_ch, init_features, 7, dim, false) +
                  bn_params(init_features);
  int64_t ch = init_features;
  for (int i = 0; i < 4; ++i) {
    for (int l = 0; l < blocks[static_cast<size_t>(i)]; ++l) {
      int64_t in_feat = ch + l * growth;
      total += bn_params(in_feat) + conv_params(in_feat, 4 * growth, 1, dim, false) +
               bn_params(4 * growth) + conv_params(4 * growth, growth, 3, dim, false);
    }
    ch += blocks[static_cast<size_t>(i)] * growth;
    if (i < 3) {
      total += bn_params(ch) + conv_params(ch, ch / 2, 1, dim, false);
      ch /= 2;
    }
  }
  total += bn_params(ch) + linear_params(ch, 5);
  return total;
}

}  // namespace oracle
