// Command-line entry point: dataset preparation, training, evaluation,
// image rendering and benchmarking for the signal-to-image experiment
// harness.
#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "s2i/data.hpp"
#include "s2i/pgm.hpp"
#include "s2i/synth.hpp"
#include "s2i/train.hpp"

namespace fs = std::filesystem;

namespace {

s2i::Dataset load_and_split(const s2i::RunConfig& config) {
  s2i::Dataset ds = s2i::load_csv(config.data_path);
  if (!config.split_manifest.empty())
    s2i::load_split_manifest(ds, config.split_manifest);
  else
    s2i::split_dataset(ds, {}, config.split_seed);
  return ds;
}

template <class T>
int run_train(const s2i::RunConfig& config, bool progress, bool benchmark) {
  s2i::Dataset ds = load_and_split(config);
  auto result = s2i::train_run<T>(config, ds, progress);
  if (benchmark) {
    double total_seconds = 0.0;
    for (const auto& r : result.epochs) total_seconds += r.seconds;
    double per_epoch = result.epochs.empty()
                           ? 0.0
                           : total_seconds / static_cast<double>(result.epochs.size());
    double train_examples =
        static_cast<double>(ds.indices(s2i::Split::kTrain).size());
    std::printf("parameters: %lld\n", static_cast<long long>(result.parameter_count));
    std::printf("seconds/epoch: %.3f\n", per_epoch);
    std::printf("examples/second: %.1f\n",
                per_epoch > 0 ? train_examples / per_epoch : 0.0);
  } else {
    std::printf("best_epoch: %lld\n", static_cast<long long>(result.best_epoch));
    std::printf("best_val_acc: %.6f\n", result.best_val_acc);
    std::printf("test_acc: %.6f\n", result.test_acc);
    std::printf("run_dir: %s\n", config.out_dir.c_str());
  }
  return 0;
}

template <class T>
int run_eval(const s2i::RunConfig& config, const std::string& run_dir,
             s2i::Split split, const std::string& confusion_path) {
  s2i::Dataset ds = load_and_split(config);
  s2i::Rng init_rng(config.seed, 1);
  s2i::CombinedModel<T> model(config.s2i, config.model, config.dim, init_rng);
  auto entries = model.named_entries();
  s2i::load_checkpoint(entries, (fs::path(run_dir) / "checkpoint").string());
  auto res = s2i::evaluate(model, ds, split, config.batch_size);

  std::printf("split: %s\n", s2i::split_name(split));
  std::printf("accuracy: %.6f\n", res.accuracy);
  for (int c = 0; c < 5; ++c)
    std::printf("  %-8s %.6f\n", s2i::class_names()[static_cast<size_t>(c)].c_str(),
                res.per_class[static_cast<size_t>(c)]);

  std::ofstream out(confusion_path);
  if (!out) s2i::fail("io", "cannot write confusion matrix '" + confusion_path + "'");
  out << "true\\pred";
  for (int p = 0; p < 5; ++p) out << ',' << s2i::class_names()[static_cast<size_t>(p)];
  out << '\n';
  for (int c = 0; c < 5; ++c) {
    out << s2i::class_names()[static_cast<size_t>(c)];
    for (int p = 0; p < 5; ++p)
      out << ',' << res.confusion[static_cast<size_t>(c)][static_cast<size_t>(p)];
    out << '\n';
  }
  return 0;
}

template <class T>
int run_render(const std::string& data_path, int64_t index, s2i::S2IKind kind,
               const std::string& checkpoint_dir, const std::string& out_dir) {
  if (kind == s2i::S2IKind::kNone)
    s2i::fail("config", "s2i 'none' produces no image to render");
  s2i::Dataset ds = s2i::load_csv(data_path);
  if (index < 0 || index >= ds.size())
    s2i::fail("config", "example index " + std::to_string(index) +
                            " out of range [0," + std::to_string(ds.size()) + ")");
  const auto& ex = ds.examples[static_cast<size_t>(index)];
  s2i::Signal signal(ex.samples);
  fs::create_directories(out_dir);

  s2i::Tensor<T> img;
  bool direct_bytes = false;
  if (kind == s2i::S2IKind::kSignalAsImage) {
    img = s2i::signal_as_image<T>(signal);
    direct_bytes = true;  // already 0/255
  } else if (kind == s2i::S2IKind::kSpectrogram) {
    img = s2i::spectrogram_image<T>(signal);
  } else {
    if (checkpoint_dir.empty())
      s2i::fail("config", "rendering a trainable s2i requires --checkpoint");
    std::ifstream cfg_in(fs::path(checkpoint_dir) / "config.json");
    if (!cfg_in)
      s2i::fail("io", "cannot open run config in '" + checkpoint_dir + "'");
    nlohmann::json j;
    cfg_in >> j;
    s2i::RunConfig run_cfg = j.get<s2i::RunConfig>();
    if (run_cfg.s2i != kind)
      s2i::fail("config", "checkpoint was trained with s2i '" +
                              s2i::to_string(run_cfg.s2i) + "', not '" +
                              s2i::to_string(kind) + "'");
    s2i::Rng init_rng(run_cfg.seed, 1);
    s2i::CombinedModel<T> model(run_cfg.s2i, run_cfg.model, run_cfg.dim, init_rng);
    auto entries = model.named_entries();
    s2i::load_checkpoint(entries, (fs::path(checkpoint_dir) / "checkpoint").string());
    std::vector<T> batch_data(s2i::kSignalLength);
    for (int64_t i = 0; i < s2i::kSignalLength; ++i)
      batch_data[static_cast<size_t>(i)] = static_cast<T>(signal[i]);
    auto batch = s2i::Tensor<T>::from({1, 1, s2i::kSignalLength}, std::move(batch_data));
    s2i::NoGradGuard ng;
    auto out4 = model.s2i.cnn()->forward(batch, s2i::nn::Mode::kEval, nullptr);
    img = s2i::reshape(out4, {s2i::kImageSize, s2i::kImageSize});
  }

  std::string kind_name = s2i::to_string(kind);
  std::string img_path =
      (fs::path(out_dir) / (kind_name + "_" + std::to_string(index) + ".pgm")).string();
  auto bytes = direct_bytes ? s2i::to_bytes_direct(img) : s2i::to_bytes_minmax(img);
  s2i::write_pgm(img_path, bytes, s2i::kImageSize, s2i::kImageSize);

  std::string csv_path =
      (fs::path(out_dir) / ("signal_" + std::to_string(index) + ".csv")).string();
  std::ofstream csv(csv_path);
  if (!csv) s2i::fail("io", "cannot write signal csv '" + csv_path + "'");
  for (double v : ex.samples) csv << v << '\n';

  std::printf("wrote %s\n", img_path.c_str());
  std::printf("wrote %s\n", csv_path.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Signal-to-image EEG classification harness"};
  app.require_subcommand(1);

  // ---- synth ----
  auto* synth = app.add_subcommand("synth", "Generate a surrogate dataset CSV");
  std::string synth_out;
  int64_t synth_per_class = 2300;
  uint64_t synth_seed = 0;
  bool synth_no_header = false, synth_no_id = false;
  synth->add_option("--out", synth_out, "Output CSV path")->required();
  synth->add_option("--per-class", synth_per_class, "Examples per class");
  synth->add_option("--seed", synth_seed, "Generator seed");
  synth->add_flag("--no-header", synth_no_header, "Omit the header row");
  synth->add_flag("--no-id-column", synth_no_id, "Omit the row-identifier column");

  // ---- split ----
  auto* split_cmd = app.add_subcommand("split", "Write a train/val/test split manifest");
  std::string split_data, split_out;
  uint64_t split_seed = 0;
  split_cmd->add_option("--data", split_data, "Dataset CSV")->required();
  split_cmd->add_option("--seed", split_seed, "Split seed");
  split_cmd->add_option("--out", split_out, "Output directory")->required();

  // ---- train / benchmark (shared options) ----
  s2i::RunConfig cli_cfg;
  std::string cfg_file;
  std::string s2i_name = "none", model_name = "lenet";
  bool progress = false;
  auto add_train_options = [&](CLI::App* cmd) {
    cmd->add_option("--config", cfg_file, "JSON config file (flags override)");
    cmd->add_option("--data", cli_cfg.data_path, "Dataset CSV");
    cmd->add_option("--split-manifest", cli_cfg.split_manifest, "Split manifest JSON");
    cmd->add_option("--s2i", s2i_name, "none|signal-as-image|spectrogram|cnn1|cnn2");
    cmd->add_option("--model", model_name, "Base model kind (lenet..densenet201)");
    cmd->add_option("--dim", cli_cfg.dim, "Base model dimensionality (1 or 2)");
    cmd->add_option("--seed", cli_cfg.seed, "Run seed");
    cmd->add_option("--split-seed", cli_cfg.split_seed, "Split seed");
    cmd->add_option("--epochs", cli_cfg.epochs, "Epoch budget");
    cmd->add_option("--batch-size", cli_cfg.batch_size, "Batch size");
    cmd->add_option("--lr", cli_cfg.adam.lr, "Adam learning rate");
    cmd->add_option("--beta1", cli_cfg.adam.beta1, "Adam beta1");
    cmd->add_option("--beta2", cli_cfg.adam.beta2, "Adam beta2");
    cmd->add_option("--epsilon", cli_cfg.adam.eps, "Adam epsilon");
    cmd->add_option("--precision", cli_cfg.element_width, "Element width: 32 or 64");
    cmd->add_option("--out", cli_cfg.out_dir, "Run directory");
    cmd->add_flag("--progress", progress, "Log per-epoch progress to stderr");
  };
  auto* train_cmd = app.add_subcommand("train", "Train one combined model");
  add_train_options(train_cmd);
  auto* bench_cmd = app.add_subcommand("benchmark", "Time a short training run");
  add_train_options(bench_cmd);

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a finished run");
  std::string eval_run, eval_split = "test", eval_data_override;
  eval_cmd->add_option("--run", eval_run, "Run directory")->required();
  eval_cmd->add_option("--split", eval_split, "train|val|test");
  eval_cmd->add_option("--data", eval_data_override, "Override dataset CSV path");

  // ---- render ----
  auto* render_cmd = app.add_subcommand("render", "Render one s2i output as PGM");
  std::string render_data, render_s2i, render_ckpt, render_out;
  int64_t render_index = 0;
  render_cmd->add_option("--data", render_data, "Dataset CSV")->required();
  render_cmd->add_option("--index", render_index, "Example index")->required();
  render_cmd->add_option("--s2i", render_s2i, "signal-as-image|spectrogram|cnn1|cnn2")->required();
  render_cmd->add_option("--checkpoint", render_ckpt, "Run directory (cnn kinds)");
  render_cmd->add_option("--out", render_out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(synth)) {
      auto ds = s2i::generate_synthetic_dataset(synth_per_class, synth_seed);
      s2i::write_csv(ds, synth_out, !synth_no_header, !synth_no_id);
      std::printf("wrote %s (%lld examples, %lld per class)\n", synth_out.c_str(),
                  static_cast<long long>(ds.size()),
                  static_cast<long long>(synth_per_class));
      return 0;
    }

    if (app.got_subcommand(split_cmd)) {
      s2i::Dataset ds = s2i::load_csv(split_data);
      s2i::split_dataset(ds, {}, split_seed);
      fs::create_directories(split_out);
      std::string manifest = (fs::path(split_out) / "split_manifest.json").string();
      s2i::save_split_manifest(ds, manifest);
      std::printf("train: %lld\nval: %lld\ntest: %lld\n",
                  static_cast<long long>(ds.indices(s2i::Split::kTrain).size()),
                  static_cast<long long>(ds.indices(s2i::Split::kVal).size()),
                  static_cast<long long>(ds.indices(s2i::Split::kTest).size()));
      std::printf("wrote %s\n", manifest.c_str());
      return 0;
    }

    if (app.got_subcommand(train_cmd) || app.got_subcommand(bench_cmd)) {
      CLI::App* cmd = app.got_subcommand(train_cmd) ? train_cmd : bench_cmd;
      bool is_benchmark = cmd == bench_cmd;
      s2i::RunConfig config;
      if (!cfg_file.empty()) {
        std::ifstream in(cfg_file);
        if (!in) s2i::fail("io", "cannot open config file '" + cfg_file + "'");
        nlohmann::json j;
        try {
          in >> j;
        } catch (const std::exception& e) {
          s2i::fail("parse", std::string("config file: ") + e.what());
        }
        config = j.get<s2i::RunConfig>();
      }
      // Explicit flags override file values.
      auto given = [&](const std::string& name) { return cmd->count(name) > 0; };
      if (given("--data")) config.data_path = cli_cfg.data_path;
      if (given("--split-manifest")) config.split_manifest = cli_cfg.split_manifest;
      if (given("--s2i")) config.s2i = s2i::parse_s2i_kind(s2i_name);
      if (given("--model")) config.model = s2i::parse_model_kind(model_name);
      if (given("--dim")) config.dim = cli_cfg.dim;
      if (given("--seed")) config.seed = cli_cfg.seed;
      if (given("--split-seed")) config.split_seed = cli_cfg.split_seed;
      if (given("--epochs")) config.epochs = cli_cfg.epochs;
      if (given("--batch-size")) config.batch_size = cli_cfg.batch_size;
      if (given("--lr")) config.adam.lr = cli_cfg.adam.lr;
      if (given("--beta1")) config.adam.beta1 = cli_cfg.adam.beta1;
      if (given("--beta2")) config.adam.beta2 = cli_cfg.adam.beta2;
      if (given("--epsilon")) config.adam.eps = cli_cfg.adam.eps;
      if (given("--precision")) config.element_width = cli_cfg.element_width;
      if (given("--out")) config.out_dir = cli_cfg.out_dir;

      if (is_benchmark && !given("--epochs") && !cfg_file.empty()) {
        // benchmark defaults to a single timed epoch unless told otherwise
      }
      if (is_benchmark && config.epochs == 100 && !given("--epochs"))
        config.epochs = 1;
      if (config.data_path.empty()) s2i::fail("config", "--data is required");
      if (config.out_dir.empty()) {
        if (!is_benchmark) s2i::fail("config", "--out is required");
        config.out_dir = (fs::temp_directory_path() / "s2i-benchmark").string();
      }
      config.validate();
      if (config.element_width == 64)
        return run_train<double>(config, progress, is_benchmark);
      return run_train<float>(config, progress, is_benchmark);
    }

    if (app.got_subcommand(eval_cmd)) {
      std::ifstream in(fs::path(eval_run) / "config.json");
      if (!in) s2i::fail("io", "cannot open run config in '" + eval_run + "'");
      nlohmann::json j;
      try {
        in >> j;
      } catch (const std::exception& e) {
        s2i::fail("parse", std::string("run config: ") + e.what());
      }
      s2i::RunConfig config = j.get<s2i::RunConfig>();
      if (!eval_data_override.empty()) config.data_path = eval_data_override;
      s2i::Split split = s2i::parse_split(eval_split);
      std::string confusion =
          (fs::path(eval_run) / ("confusion_" + eval_split + ".csv")).string();
      if (config.element_width == 64)
        return run_eval<double>(config, eval_run, split, confusion);
      return run_eval<float>(config, eval_run, split, confusion);
    }

    if (app.got_subcommand(render_cmd)) {
      s2i::S2IKind kind = s2i::parse_s2i_kind(render_s2i);
      return run_render<float>(render_data, render_index, kind, render_ckpt,
                               render_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
