#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2i/nn.hpp"

namespace s2i {

// Checkpoint format: a JSON manifest (tensor name, shape, element width, byte
// offset, byte length) next to a single raw little-endian blob. Round trips
// are bit-exact.
//
// save_checkpoint(entries, base) writes base + ".json" and base + ".bin".

template <class T>
void save_checkpoint(const std::vector<nn::ParamEntry<T>>& entries,
                     const std::string& base) {
  nlohmann::json manifest;
  manifest["format"] = "s2i-checkpoint";
  manifest["element_width"] = static_cast<int>(sizeof(T) * 8);
  nlohmann::json tensors = nlohmann::json::array();

  std::ofstream blob(base + ".bin", std::ios::binary);
  if (!blob) fail("io", "cannot write checkpoint blob '" + base + ".bin'");
  int64_t offset = 0;
  for (const auto& e : entries) {
    int64_t bytes = e.tensor.numel() * static_cast<int64_t>(sizeof(T));
    nlohmann::json t;
    t["name"] = e.name;
    t["shape"] = e.tensor.shape();
    t["byte_offset"] = offset;
    t["byte_length"] = bytes;
    tensors.push_back(std::move(t));
    blob.write(reinterpret_cast<const char*>(e.tensor.data().data()),
               static_cast<std::streamsize>(bytes));
    offset += bytes;
  }
  manifest["tensors"] = std::move(tensors);
  manifest["total_bytes"] = offset;
  blob.close();
  if (!blob) fail("io", "failed writing checkpoint blob '" + base + ".bin'");

  std::ofstream mf(base + ".json");
  if (!mf) fail("io", "cannot write checkpoint manifest '" + base + ".json'");
  mf << manifest.dump(2) << "\n";
}

// Loads a checkpoint into already-built entries. Every entry must be present
// with an identical shape and element width; blob length is validated against
// the manifest.
template <class T>
void load_checkpoint(std::vector<nn::ParamEntry<T>>& entries,
                     const std::string& base) {
  std::ifstream mf(base + ".json");
  if (!mf) fail("io", "cannot open checkpoint manifest '" + base + ".json'");
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    fail("checkpoint", std::string("manifest parse error: ") + e.what());
  }
  if (manifest.value("format", "") != "s2i-checkpoint")
    fail("checkpoint", "unrecognized manifest format");
  int width = manifest.value("element_width", 0);
  if (width != static_cast<int>(sizeof(T) * 8))
    fail("checkpoint", "element width " + std::to_string(width) +
                           " does not match requested " +
                           std::to_string(sizeof(T) * 8));

  std::ifstream blob(base + ".bin", std::ios::binary | std::ios::ate);
  if (!blob) fail("io", "cannot open checkpoint blob '" + base + ".bin'");
  int64_t blob_size = static_cast<int64_t>(blob.tellg());
  int64_t expect = manifest.value("total_bytes", int64_t{-1});
  if (blob_size != expect)
    fail("checkpoint", "blob length " + std::to_string(blob_size) +
                           " does not match manifest total " +
                           std::to_string(expect));

  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != entries.size())
    fail("checkpoint", "manifest lists " + std::to_string(tensors.size()) +
                           " tensors, model has " + std::to_string(entries.size()));
  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& t = tensors.at(i);
    auto& e = entries[i];
    if (t.at("name").get<std::string>() != e.name)
      fail("checkpoint", "tensor " + std::to_string(i) + " is '" +
                             t.at("name").get<std::string>() + "', expected '" +
                             e.name + "'");
    Shape shape = t.at("shape").get<Shape>();
    if (shape != e.tensor.shape())
      fail("checkpoint", "tensor '" + e.name + "' shape " + shape_str(shape) +
                             " does not match model shape " +
                             shape_str(e.tensor.shape()));
    int64_t offset = t.at("byte_offset").get<int64_t>();
    int64_t bytes = t.at("byte_length").get<int64_t>();
    if (bytes != e.tensor.numel() * static_cast<int64_t>(sizeof(T)) ||
        offset < 0 || offset + bytes > blob_size)
      fail("checkpoint", "tensor '" + e.name + "' has inconsistent byte range");
    blob.seekg(offset);
    blob.read(reinterpret_cast<char*>(e.tensor.mutable_data().data()),
              static_cast<std::streamsize>(bytes));
    if (!blob) fail("checkpoint", "truncated blob while reading '" + e.name + "'");
  }
}

}  // namespace s2i
