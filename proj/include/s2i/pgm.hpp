#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "s2i/common.hpp"
#include "s2i/tensor.hpp"

namespace s2i {

// Binary 8-bit P5 portable graymap: bit-exact, dependency-free output format
// for rendered images.
inline void write_pgm(const std::string& path, const std::vector<uint8_t>& pixels,
                      int64_t width, int64_t height) {
  if (static_cast<int64_t>(pixels.size()) != width * height)
    fail("shape", "pgm pixel count does not match dimensions");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail("io", "cannot write image '" + path + "'");
  out << "P5\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) fail("io", "failed writing image '" + path + "'");
}

struct PgmImage {
  int64_t width = 0;
  int64_t height = 0;
  std::vector<uint8_t> pixels;
};

inline PgmImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("io", "cannot open image '" + path + "'");
  std::string magic;
  in >> magic;
  if (magic != "P5") fail("parse", "'" + path + "' is not a binary P5 graymap");
  PgmImage img;
  int maxval = 0;
  in >> img.width >> img.height >> maxval;
  if (maxval != 255) fail("parse", "unsupported maxval in '" + path + "'");
  in.get();  // single whitespace after the header
  img.pixels.resize(static_cast<size_t>(img.width * img.height));
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!in) fail("parse", "truncated image data in '" + path + "'");
  return img;
}

// Values already in [0,255] (rasterized images) pass through unchanged.
template <class T>
std::vector<uint8_t> to_bytes_direct(const Tensor<T>& img) {
  std::vector<uint8_t> out(img.data().size());
  for (size_t i = 0; i < out.size(); ++i) {
    double v = static_cast<double>(img.data()[i]);
    v = std::min(std::max(v, 0.0), 255.0);
    out[i] = static_cast<uint8_t>(std::lround(v));
  }
  return out;
}

// Per-image min-max normalization to [0,255]; a constant image maps to zeros.
template <class T>
std::vector<uint8_t> to_bytes_minmax(const Tensor<T>& img) {
  double lo = static_cast<double>(img.data()[0]);
  double hi = lo;
  for (auto v : img.data()) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  std::vector<uint8_t> out(img.data().size(), 0);
  if (hi == lo) return out;
  for (size_t i = 0; i < out.size(); ++i) {
    double v = (static_cast<double>(img.data()[i]) - lo) / (hi - lo) * 255.0;
    out[i] = static_cast<uint8_t>(std::lround(v));
  }
  return out;
}

}  // namespace s2i
