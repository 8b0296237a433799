#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "s2i/data.hpp"
#include "s2i/rng.hpp"

namespace s2i {

// Deterministic generator of EEG-like surrogate recordings in the same
// schema as the chunked public dataset: 178 integer amplitude samples plus a
// class label in 1..5. Classes are separable but overlapping; two of them
// share a frequency band and differ mainly by absolute amplitude, which
// per-signal normalization discards.
//
// Class recipes (rhythm band Hz, rhythm amplitude uV, noise sigma, waveform
// sharpness):
//   1 Open     - broadband noise with a faint fast ripple
//   2 Closed   - moderate 8-13 Hz rhythm
//   3 Healthy  - strong rhythm in the same band as Closed
//   4 Tumor    - slow sharp delta-range waves
//   5 Epilepsy - very large sharp spike-wave discharges
inline LabeledSignal synth_signal(int cls, Rng& rng) {
  struct Recipe {
    double f_lo, f_hi;
    double amp_lo, amp_hi;
    double noise;
    double sharpness;  // exponent < 1 sharpens the oscillation peaks
  };
  static const Recipe recipes[5] = {
      {14.0, 25.0, 10.0, 25.0, 40.0, 1.0},
      {8.0, 13.0, 40.0, 90.0, 25.0, 1.0},
      {7.0, 12.0, 120.0, 220.0, 35.0, 1.0},
      {1.5, 4.5, 80.0, 160.0, 40.0, 0.6},
      {2.5, 5.5, 300.0, 700.0, 70.0, 0.25},
  };
  const Recipe& r = recipes[cls - 1];
  const double fs = 178.0;

  double freq = rng.uniform(r.f_lo, r.f_hi);
  double amp = rng.uniform(r.amp_lo, r.amp_hi);
  double phase = rng.uniform(0.0, 2.0 * M_PI);
  double drift = rng.uniform(-20.0, 20.0);
  double harmonic = rng.uniform(0.15, 0.45);

  LabeledSignal ex;
  ex.label = cls;
  ex.samples.resize(static_cast<size_t>(kSignalLength));
  for (int64_t t = 0; t < kSignalLength; ++t) {
    double arg = 2.0 * M_PI * freq * static_cast<double>(t) / fs + phase;
    double s = std::sin(arg);
    double wave = std::copysign(std::pow(std::abs(s), r.sharpness), s);
    double v = drift + amp * wave +
               harmonic * amp * std::sin(2.0 * arg + 1.0) +
               r.noise * rng.normal();
    ex.samples[static_cast<size_t>(t)] = std::floor(v + 0.5);
  }
  return ex;
}

inline Dataset generate_synthetic_dataset(int64_t per_class, uint64_t seed) {
  Dataset ds;
  Rng rng(seed, /*stream=*/0xda7a);
  for (int cls = 1; cls <= kNumClassesData; ++cls)
    for (int64_t i = 0; i < per_class; ++i)
      ds.examples.push_back(synth_signal(cls, rng));
  // Interleave classes in file order.
  std::vector<int64_t> order(ds.examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int64_t>(i);
  rng.shuffle(order.begin(), order.end());
  std::vector<LabeledSignal> shuffled;
  shuffled.reserve(ds.examples.size());
  for (int64_t i : order) shuffled.push_back(std::move(ds.examples[static_cast<size_t>(i)]));
  ds.examples = std::move(shuffled);
  return ds;
}

inline void write_csv(const Dataset& ds, const std::string& path,
                      bool header = true, bool id_column = true) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write dataset file '" + path + "'");
  if (header) {
    if (id_column) out << "id";
    for (int64_t i = 1; i <= kSignalLength; ++i) out << (i == 1 && !id_column ? "" : ",") << "X" << i;
    out << ",y\n";
  }
  for (size_t row = 0; row < ds.examples.size(); ++row) {
    const auto& ex = ds.examples[row];
    if (id_column) out << "E" << row + 1 << ".S" << ex.label;
    for (int64_t i = 0; i < kSignalLength; ++i) {
      if (i != 0 || id_column) out << ',';
      out << static_cast<long long>(ex.samples[static_cast<size_t>(i)]);
    }
    out << ',' << ex.label << '\n';
  }
}

}  // namespace s2i
