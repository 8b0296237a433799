#pragma once

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2i/rng.hpp"
#include "s2i/signal_image.hpp"
#include "s2i/tensor.hpp"

namespace s2i {

inline constexpr int64_t kNumClassesData = 5;

inline const std::vector<std::string>& class_names() {
  static const std::vector<std::string> names = {"Open", "Closed", "Healthy",
                                                 "Tumor", "Epilepsy"};
  return names;
}

struct LabeledSignal {
  std::vector<double> samples;  // length 178
  int label = 0;                // class in 1..5

  int label_index() const { return label - 1; }
};

enum class Split { kTrain = 0, kVal = 1, kTest = 2 };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  fail("config", "unknown split '" + name + "'");
}

struct SplitFractions {
  double train = 0.76;
  double val = 0.12;
  double test = 0.12;
};

class Dataset {
 public:
  std::vector<LabeledSignal> examples;
  uint64_t split_seed = 0;
  SplitFractions fractions;
  std::vector<int64_t> split_index[3];  // train/val/test membership

  int64_t size() const { return static_cast<int64_t>(examples.size()); }
  bool is_split() const {
    return !split_index[0].empty() || !split_index[1].empty() ||
           !split_index[2].empty();
  }
  const std::vector<int64_t>& indices(Split s) const {
    return split_index[static_cast<int>(s)];
  }

  std::vector<int64_t> class_histogram() const {
    std::vector<int64_t> hist(kNumClassesData, 0);
    for (const auto& ex : examples) ++hist[static_cast<size_t>(ex.label_index())];
    return hist;
  }
};

namespace detail_data {

inline bool parse_double(const std::string& field, double& out) {
  if (field.empty()) return false;
  const char* begin = field.c_str();
  char* end = nullptr;
  out = std::strtod(begin, &end);
  return end == begin + field.size();
}

inline std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace detail_data

// Parses the chunked 178-samples-per-row CSV variant. Tolerates an optional
// header row and an optional leading non-numeric row-identifier column.
// Amplitudes are stored as-is; no preprocessing.
inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open dataset file '" + path + "'");

  Dataset ds;
  std::string line;
  int64_t line_no = 0;
  bool first_data_row = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto fields = detail_data::split_fields(line);

    size_t begin = 0;
    double probe;
    if (!detail_data::parse_double(fields[0], probe)) {
      // Non-numeric first field: either a header row or a row identifier.
      bool all_tail_numeric = fields.size() >= 2;
      for (size_t i = 1; i < fields.size() && all_tail_numeric; ++i)
        all_tail_numeric = detail_data::parse_double(fields[i], probe);
      if (first_data_row && !all_tail_numeric) continue;  // header
      begin = 1;
    }

    size_t want = static_cast<size_t>(kSignalLength) + 1;
    if (fields.size() - begin != want)
      fail("parse", "line " + std::to_string(line_no) + ": expected " +
                        std::to_string(kSignalLength) +
                        " amplitudes plus a label, got " +
                        std::to_string(fields.size() - begin) + " fields");

    LabeledSignal ex;
    ex.samples.resize(static_cast<size_t>(kSignalLength));
    for (int64_t i = 0; i < kSignalLength; ++i) {
      double v;
      if (!detail_data::parse_double(fields[begin + static_cast<size_t>(i)], v))
        fail("parse", "line " + std::to_string(line_no) + ": non-numeric amplitude '" +
                          fields[begin + static_cast<size_t>(i)] + "'");
      ex.samples[static_cast<size_t>(i)] = v;
    }
    double label_val;
    if (!detail_data::parse_double(fields[begin + static_cast<size_t>(kSignalLength)], label_val) ||
        label_val != static_cast<int>(label_val))
      fail("parse", "line " + std::to_string(line_no) + ": non-integer label");
    int label = static_cast<int>(label_val);
    if (label < 1 || label > kNumClassesData)
      fail("parse", "line " + std::to_string(line_no) + ": label " +
                        std::to_string(label) + " outside 1.." +
                        std::to_string(kNumClassesData));
    ex.label = label;
    ds.examples.push_back(std::move(ex));
    first_data_row = false;
  }
  if (ds.examples.empty()) fail("parse", "dataset file contains no examples");
  return ds;
}

// Stratified split: per-class seeded shuffle, then proportional assignment.
// Sizes per class: val and test get floor(n*f), train takes the remainder.
inline void split_dataset(Dataset& ds, const SplitFractions& fractions,
                          uint64_t seed) {
  double total = fractions.train + fractions.val + fractions.test;
  if (std::abs(total - 1.0) > 1e-9)
    fail("config", "split fractions must sum to 1, got " + std::to_string(total));

  for (auto& v : ds.split_index) v.clear();
  ds.split_seed = seed;
  ds.fractions = fractions;

  Rng rng(seed);
  for (int cls = 1; cls <= kNumClassesData; ++cls) {
    std::vector<int64_t> members;
    for (int64_t i = 0; i < ds.size(); ++i)
      if (ds.examples[static_cast<size_t>(i)].label == cls) members.push_back(i);
    rng.shuffle(members.begin(), members.end());
    int64_t n = static_cast<int64_t>(members.size());
    int64_t n_val = static_cast<int64_t>(std::floor(static_cast<double>(n) * fractions.val));
    int64_t n_test = static_cast<int64_t>(std::floor(static_cast<double>(n) * fractions.test));
    int64_t n_train = n - n_val - n_test;
    for (int64_t i = 0; i < n; ++i) {
      Split s = (i < n_train) ? Split::kTrain
                              : (i < n_train + n_val ? Split::kVal : Split::kTest);
      ds.split_index[static_cast<int>(s)].push_back(members[static_cast<size_t>(i)]);
    }
  }
}

// Batch index sequence for one epoch. Training shuffles from the given
// generator; val/test keep stored order. The final batch may be partial.
inline std::vector<std::vector<int64_t>> epoch_batches(const Dataset& ds, Split split,
                                                       int64_t batch_size, bool shuffle,
                                                       Rng& rng) {
  const auto& idx = ds.indices(split);
  if (idx.empty()) fail("data", std::string("split '") + split_name(split) + "' is empty");
  if (batch_size < 1) fail("config", "batch size must be >= 1");
  std::vector<int64_t> order = idx;
  if (shuffle) rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<int64_t>> batches;
  for (size_t i = 0; i < order.size(); i += static_cast<size_t>(batch_size)) {
    size_t end = std::min(order.size(), i + static_cast<size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<int64_t>(i),
                         order.begin() + static_cast<int64_t>(end));
  }
  return batches;
}

// Materializes a batch as a [B,1,178] tensor plus zero-based labels.
template <class T>
std::pair<Tensor<T>, std::vector<int64_t>> assemble_batch(
    const Dataset& ds, const std::vector<int64_t>& indices) {
  int64_t b = static_cast<int64_t>(indices.size());
  std::vector<T> data(static_cast<size_t>(b * kSignalLength));
  std::vector<int64_t> labels(static_cast<size_t>(b));
  for (int64_t i = 0; i < b; ++i) {
    const auto& ex = ds.examples[static_cast<size_t>(indices[static_cast<size_t>(i)])];
    for (int64_t j = 0; j < kSignalLength; ++j)
      data[static_cast<size_t>(i * kSignalLength + j)] = static_cast<T>(ex.samples[static_cast<size_t>(j)]);
    labels[static_cast<size_t>(i)] = ex.label_index();
  }
  return {Tensor<T>::from({b, 1, kSignalLength}, std::move(data)), std::move(labels)};
}

// ---- split manifest (seed, fractions, index lists) ----

inline void save_split_manifest(const Dataset& ds, const std::string& path) {
  nlohmann::json j;
  j["seed"] = ds.split_seed;
  j["fractions"] = {ds.fractions.train, ds.fractions.val, ds.fractions.test};
  j["train"] = ds.indices(Split::kTrain);
  j["val"] = ds.indices(Split::kVal);
  j["test"] = ds.indices(Split::kTest);
  std::ofstream out(path);
  if (!out) fail("io", "cannot write split manifest '" + path + "'");
  out << j.dump(2) << "\n";
}

inline void load_split_manifest(Dataset& ds, const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("io", "cannot open split manifest '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    fail("parse", std::string("split manifest: ") + e.what());
  }
  ds.split_seed = j.at("seed").get<uint64_t>();
  auto fr = j.at("fractions");
  ds.fractions = {fr.at(0).get<double>(), fr.at(1).get<double>(), fr.at(2).get<double>()};
  ds.split_index[0] = j.at("train").get<std::vector<int64_t>>();
  ds.split_index[1] = j.at("val").get<std::vector<int64_t>>();
  ds.split_index[2] = j.at("test").get<std::vector<int64_t>>();
  int64_t total = 0;
  for (const auto& list : ds.split_index) {
    for (int64_t i : list)
      if (i < 0 || i >= ds.size())
        fail("parse", "split manifest index " + std::to_string(i) + " out of range");
    total += static_cast<int64_t>(list.size());
  }
  if (total != ds.size())
    fail("parse", "split manifest covers " + std::to_string(total) +
                      " examples, dataset has " + std::to_string(ds.size()));
}

}  // namespace s2i
