#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "s2i/checkpoint.hpp"
#include "s2i/data.hpp"
#include "s2i/models.hpp"
#include "s2i/signal_image.hpp"

namespace s2i {

// Kaiming-uniform bound c = sqrt(6 / ((1 + a^2) k)) with negative slope a and
// layer input size k.
struct InitSpec {
  double negative_slope = 0.0;
  int64_t fan_in = 1;

  double bound() const {
    return std::sqrt(6.0 / ((1.0 + negative_slope * negative_slope) *
                            static_cast<double>(fan_in)));
  }
};

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // no weight decay
};

// Standard bias-corrected Adam over a fixed parameter list.
template <class T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, const AdamConfig& cfg = {})
      : cfg_(cfg), params_(std::move(params)) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p.data().size(), T(0));
      v_.emplace_back(p.data().size(), T(0));
    }
  }

  int64_t step_count() const { return t_; }

  void step() {
    ++t_;
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T bc1 = T(1) - static_cast<T>(std::pow(cfg_.beta1, static_cast<double>(t_)));
    const T bc2 = T(1) - static_cast<T>(std::pow(cfg_.beta2, static_cast<double>(t_)));
    const T lr = static_cast<T>(cfg_.lr);
    const T eps = static_cast<T>(cfg_.eps);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p.grad().empty())
        fail("train", "missing gradient for a parameter in Adam::step");
      const std::vector<T>& g = p.grad();
      std::vector<T>& data = p.mutable_data();
      std::vector<T>& m = m_[i];
      std::vector<T>& v = v_[i];
      for (size_t j = 0; j < data.size(); ++j) {
        m[j] = b1 * m[j] + (T(1) - b1) * g[j];
        v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
        T mhat = m[j] / bc1;
        T vhat = v[j] / bc2;
        data[j] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<T>> m_, v_;
};

// One experiment configuration; defaults mirror the training protocol
// (100 epochs, batch 20, Adam lr 0.001).
struct RunConfig {
  std::string data_path;
  std::string split_manifest;  // optional; empty = split internally
  S2IKind s2i = S2IKind::kNone;
  ModelKind model = ModelKind::kLeNet;
  int64_t dim = 1;
  uint64_t seed = 0;
  uint64_t split_seed = 0;
  int64_t epochs = 100;
  int64_t batch_size = 20;
  AdamConfig adam;
  int element_width = 32;  // 32 or 64
  std::string out_dir;

  void validate() const {
    validate_pairing(s2i, dim);
    if (epochs < 0) fail("config", "epochs must be >= 0");
    if (batch_size < 1) fail("config", "batch size must be >= 1");
    if (element_width != 32 && element_width != 64)
      fail("config", "element width must be 32 or 64");
  }
};

inline void to_json(nlohmann::json& j, const RunConfig& c) {
  j = nlohmann::json{{"data", c.data_path},
                     {"split_manifest", c.split_manifest},
                     {"s2i", to_string(c.s2i)},
                     {"model", to_string(c.model)},
                     {"dim", c.dim},
                     {"seed", c.seed},
                     {"split_seed", c.split_seed},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lr", c.adam.lr},
                     {"beta1", c.adam.beta1},
                     {"beta2", c.adam.beta2},
                     {"epsilon", c.adam.eps},
                     {"element_width", c.element_width},
                     {"out_dir", c.out_dir}};
}

inline void from_json(const nlohmann::json& j, RunConfig& c) {
  c.data_path = j.value("data", c.data_path);
  c.split_manifest = j.value("split_manifest", c.split_manifest);
  if (j.contains("s2i")) c.s2i = parse_s2i_kind(j.at("s2i").get<std::string>());
  if (j.contains("model")) c.model = parse_model_kind(j.at("model").get<std::string>());
  c.dim = j.value("dim", c.dim);
  c.seed = j.value("seed", c.seed);
  c.split_seed = j.value("split_seed", c.split_seed);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.adam.lr = j.value("lr", c.adam.lr);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("epsilon", c.adam.eps);
  c.element_width = j.value("element_width", c.element_width);
  c.out_dir = j.value("out_dir", c.out_dir);
}

// Signal-to-image module composed with a base model.
template <class T>
struct CombinedModel {
  S2IModule<T> s2i;
  BaseModel<T> base;

  CombinedModel(S2IKind kind, ModelKind model_kind, int64_t dim, Rng& init_rng)
      : s2i(kind), base(build_model<T>(model_kind, dim, init_rng)) {
    validate_pairing(kind, dim);
    s2i.init_params(init_rng);
  }

  Tensor<T> forward(const Tensor<T>& signals, nn::Mode mode, Rng* rng) {
    Tensor<T> input = s2i.forward(signals, mode, rng);
    return base.forward(input, mode, rng);
  }

  std::vector<nn::ParamEntry<T>> named_entries() {
    std::vector<nn::ParamEntry<T>> out;
    if (s2i.trainable()) s2i.cnn()->collect("s2i", out);
    base.net->collect("model", out);
    return out;
  }

  std::vector<Tensor<T>> trainable_parameters() {
    std::vector<Tensor<T>> out;
    for (auto& e : named_entries())
      if (!e.is_buffer) out.push_back(e.tensor);
    return out;
  }
};

struct EvalResult {
  double accuracy = 0.0;
  std::array<double, 5> per_class{};
  std::array<std::array<int64_t, 5>, 5> confusion{};  // [true][predicted]
};

template <class T>
EvalResult evaluate(CombinedModel<T>& model, const Dataset& ds, Split split,
                    int64_t batch_size = 20) {
  NoGradGuard ng;
  EvalResult res;
  Rng unused(0);
  auto batches = epoch_batches(ds, split, batch_size, /*shuffle=*/false, unused);
  int64_t correct = 0, total = 0;
  for (const auto& batch : batches) {
    auto [signals, labels] = assemble_batch<T>(ds, batch);
    Tensor<T> logits = model.forward(signals, nn::Mode::kEval, nullptr);
    int64_t b = logits.extent(0);
    for (int64_t i = 0; i < b; ++i) {
      int64_t pred = 0;
      T best = logits.at({i, 0});
      for (int64_t c = 1; c < kNumClasses; ++c)
        if (logits.at({i, c}) > best) {  // ties resolve to the lowest index
          best = logits.at({i, c});
          pred = c;
        }
      int64_t truth = labels[static_cast<size_t>(i)];
      res.confusion[static_cast<size_t>(truth)][static_cast<size_t>(pred)]++;
      correct += (pred == truth);
      ++total;
    }
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(total);
  for (int c = 0; c < 5; ++c) {
    int64_t row_total = 0;
    for (int p = 0; p < 5; ++p) row_total += res.confusion[static_cast<size_t>(c)][static_cast<size_t>(p)];
    res.per_class[static_cast<size_t>(c)] =
        row_total ? static_cast<double>(res.confusion[static_cast<size_t>(c)][static_cast<size_t>(c)]) /
                        static_cast<double>(row_total)
                  : 0.0;
  }
  return res;
}

struct EpochRecord {
  int64_t epoch;
  double train_loss;
  double train_acc;
  double val_acc;
  double seconds;
};

struct TrainResult {
  std::vector<EpochRecord> epochs;
  int64_t best_epoch = 0;  // 0 = untrained initial model
  double best_val_acc = 0.0;
  double test_acc = 0.0;
  int64_t parameter_count = 0;
  std::string checkpoint_base;
};

namespace detail_train {

inline std::string format_metric(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline void write_metrics_csv(const std::vector<EpochRecord>& records,
                              const std::string& path) {
  std::ofstream out(path);
  if (!out) fail("io", "cannot write metrics file '" + path + "'");
  out << "epoch,train_loss,train_acc,val_acc,seconds\n";
  for (const auto& r : records)
    out << r.epoch << ',' << format_metric(r.train_loss) << ','
        << format_metric(r.train_acc) << ',' << format_metric(r.val_acc) << ','
        << format_metric(r.seconds) << "\n";
}

}  // namespace detail_train

// The full training protocol: per epoch one pass over shuffled train batches
// (forward through the signal-to-image module and base model, cross-entropy,
// backward, Adam), then eval-mode validation accuracy. The checkpoint with
// the best validation accuracy (ties keep the earlier epoch) is saved and
// test accuracy is reported from it. All randomness flows from config.seed.
template <class T>
TrainResult train_run(const RunConfig& config, Dataset& ds,
                      bool log_progress = false) {
  config.validate();
  if (!ds.is_split()) fail("data", "train_run requires a split dataset");
  namespace fs = std::filesystem;
  if (config.out_dir.empty()) fail("config", "train_run requires an output directory");
  fs::create_directories(config.out_dir);

  Rng init_rng(config.seed, 1);
  Rng run_rng(config.seed, 2);  // epoch shuffles and dropout masks

  CombinedModel<T> model(config.s2i, config.model, config.dim, init_rng);
  Adam<T> opt(model.trainable_parameters(), config.adam);

  TrainResult result;
  result.parameter_count = nn::count_parameters(*model.base.net) +
                           (model.s2i.trainable()
                                ? nn::count_parameters(*model.s2i.cnn())
                                : 0);
  result.checkpoint_base = (fs::path(config.out_dir) / "checkpoint").string();

  auto save_best = [&]() {
    auto entries = model.named_entries();
    save_checkpoint(entries, result.checkpoint_base);
  };
  save_best();  // epochs == 0 evaluates the untrained initial model

  for (int64_t epoch = 1; epoch <= config.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    auto batches = epoch_batches(ds, Split::kTrain, config.batch_size,
                                 /*shuffle=*/true, run_rng);
    double loss_sum = 0.0;
    int64_t correct = 0, seen = 0;
    for (size_t b = 0; b < batches.size(); ++b) {
      auto [signals, labels] = assemble_batch<T>(ds, batches[b]);
      Tensor<T> logits = model.forward(signals, nn::Mode::kTrain, &run_rng);
      Tensor<T> loss = cross_entropy(logits, labels);
      double loss_val = static_cast<double>(loss.item());
      if (!std::isfinite(loss_val))
        fail("numeric", "NaN loss at epoch " + std::to_string(epoch) +
                            " batch " + std::to_string(b));
      loss_sum += loss_val;
      int64_t bs = logits.extent(0);
      for (int64_t i = 0; i < bs; ++i) {
        int64_t pred = 0;
        T best = logits.at({i, 0});
        for (int64_t c = 1; c < kNumClasses; ++c)
          if (logits.at({i, c}) > best) {
            best = logits.at({i, c});
            pred = c;
          }
        correct += (pred == labels[static_cast<size_t>(i)]);
        ++seen;
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
    }

    double val_acc = evaluate(model, ds, Split::kVal, config.batch_size).accuracy;
    double seconds = std::chrono::duration<double>(
                         std::chrono::steady_clock::now() - t0)
                         .count();
    EpochRecord rec{epoch, loss_sum / static_cast<double>(batches.size()),
                    static_cast<double>(correct) / static_cast<double>(seen),
                    val_acc, seconds};
    result.epochs.push_back(rec);
    if (log_progress)
      std::fprintf(stderr, "epoch %lld: loss %.4f train %.4f val %.4f (%.1fs)\n",
                   static_cast<long long>(epoch), rec.train_loss, rec.train_acc,
                   rec.val_acc, rec.seconds);

    if (val_acc > result.best_val_acc || result.best_epoch == 0) {
      result.best_val_acc = val_acc;
      result.best_epoch = epoch;
      save_best();
    }
  }

  // Reload the best checkpoint and report its test accuracy.
  auto entries = model.named_entries();
  load_checkpoint(entries, result.checkpoint_base);
  result.test_acc = evaluate(model, ds, Split::kTest, config.batch_size).accuracy;
  if (config.epochs == 0)
    result.best_val_acc = evaluate(model, ds, Split::kVal, config.batch_size).accuracy;

  detail_train::write_metrics_csv(result.epochs,
                                  (fs::path(config.out_dir) / "metrics.csv").string());
  {
    nlohmann::json summary;
    summary["config"] = config;
    summary["best_epoch"] = result.best_epoch;
    summary["best_val_acc"] = result.best_val_acc;
    summary["test_acc"] = result.test_acc;
    summary["parameter_count"] = result.parameter_count;
    std::ofstream out(fs::path(config.out_dir) / "summary.json");
    if (!out) fail("io", "cannot write summary.json");
    out << summary.dump(2) << "\n";
  }
  {
    nlohmann::json snapshot = config;
    std::ofstream out(fs::path(config.out_dir) / "config.json");
    if (!out) fail("io", "cannot write config.json");
    out << snapshot.dump(2) << "\n";
  }
  return result;
}

}  // namespace s2i
