// Copyright 2026 The cvse Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "cvse/data.hpp"
#include "cvse/error.hpp"
#include "cvse/eval.hpp"
#include "cvse/train.hpp"

namespace {

namespace fs = std::filesystem;

// Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
constexpr int kConfigExit = 2;
constexpr int kDataExit = 3;
constexpr int kNumericExit = 4;

std::string trim(const std::string& text) {
  auto begin = text.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  auto end = text.find_last_not_of(" \t\r");
  return text.substr(begin, end - begin + 1);
}

std::string unquote(const std::string& text) {
  if (text.size() >= 2 && text.front() == '"' && text.back() == '"') {
    return text.substr(1, text.size() - 2);
  }
  return text;
}

template <typename T>
T parse_config_value(const std::string& key, const std::string& raw) {
  try {
    if constexpr (std::is_same_v<T, std::string>) {
      return raw;
    } else if constexpr (std::is_same_v<T, bool>) {
      if (raw == "true" || raw == "1") return true;
      if (raw == "false" || raw == "0") return false;
      throw std::invalid_argument("not a bool");
    } else if constexpr (std::is_same_v<T, std::vector<double>>) {
      std::vector<double> values;
      std::stringstream parts(raw);
      std::string part;
      while (std::getline(parts, part, ',')) values.push_back(std::stod(trim(part)));
      return values;
    } else if constexpr (std::is_floating_point_v<T>) {
      std::size_t used = 0;
      double value = std::stod(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("trailing text");
      return static_cast<T>(value);
    } else if constexpr (std::is_unsigned_v<T>) {
      std::size_t used = 0;
      unsigned long long value = std::stoull(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("trailing text");
      return static_cast<T>(value);
    } else {
      std::size_t used = 0;
      long long value = std::stoll(raw, &used);
      if (used != raw.size()) throw std::invalid_argument("trailing text");
      return static_cast<T>(value);
    }
  } catch (const std::exception&) {
    throw cvse::ConfigError("config file: key '" + key + "' has invalid value '" + raw + "'");
  }
}

// Flat key=value config files applied after parsing, since CLI11 does not
// process config files scoped to a subcommand. Explicit flags win.
class FlatConfig {
 public:
  void attach(CLI::App* cmd) {
    cmd_ = cmd;
    cmd->add_option("--config", path_, "flat key=value config file; command-line flags win");
  }

  template <typename T>
  CLI::Option* option(const std::string& key, T& target, const std::string& help) {
    bind(key, target);
    return cmd_->add_option("--" + key, target, help);
  }

  CLI::Option* flag(const std::string& key, bool& target, const std::string& help) {
    bind(key, target);
    return cmd_->add_flag("--" + key, target, help);
  }

  void apply() const {
    if (path_.empty()) return;
    std::ifstream in(path_);
    if (!in) throw cvse::ConfigError("config file '" + path_ + "' is not readable");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      std::string entry = trim(line);
      if (entry.empty() || entry[0] == '#') continue;
      auto eq = entry.find('=');
      if (eq == std::string::npos) {
        throw cvse::ConfigError("config file: line " + std::to_string(lineno) +
                                " is not key=value");
      }
      std::string key = trim(entry.substr(0, eq));
      std::string value = unquote(trim(entry.substr(eq + 1)));
      auto setter = setters_.find(key);
      if (setter == setters_.end()) {
        throw cvse::ConfigError("config file: unknown key '" + key + "' on line " +
                                std::to_string(lineno));
      }
      if (cmd_->count("--" + key) == 0) setter->second(value);
    }
  }

 private:
  template <typename T>
  void bind(const std::string& key, T& target) {
    setters_[key] = [&target, key](const std::string& raw) {
      target = parse_config_value<T>(key, raw);
    };
  }

  CLI::App* cmd_ = nullptr;
  std::string path_;
  std::map<std::string, std::function<void(const std::string&)>> setters_;
};

void require_set(const std::string& value, const char* flag) {
  if (value.empty()) throw cvse::ConfigError(std::string("missing ") + flag);
}

std::string quoted(const std::string& value) { return '"' + value + '"'; }

std::string number(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", value);
  return buf;
}

struct DataOptions {
  std::string data_dir;
  std::string images, captions, pairing, splits;
};

void add_data_options(FlatConfig& cfg, DataOptions& opts) {
  cfg.option("data", opts.data_dir, "dataset directory with the standard file names");
  cfg.option("images", opts.images, "image feature file");
  cfg.option("captions", opts.captions, "caption feature file");
  cfg.option("pairing", opts.pairing, "caption-to-image pairing file");
  cfg.option("splits", opts.splits, "image split assignment file");
}

std::string data_echo(const DataOptions& opts) {
  std::ostringstream out;
  out << "data=" << quoted(opts.data_dir) << "\n";
  out << "images=" << quoted(opts.images) << "\n";
  out << "captions=" << quoted(opts.captions) << "\n";
  out << "pairing=" << quoted(opts.pairing) << "\n";
  out << "splits=" << quoted(opts.splits) << "\n";
  return out.str();
}

cvse::PairedDataset load_data(const DataOptions& opts) {
  DataOptions resolved = opts;
  if (!resolved.data_dir.empty()) {
    cvse::DatasetPaths defaults = cvse::dataset_paths(resolved.data_dir);
    if (resolved.images.empty()) resolved.images = defaults.images.string();
    if (resolved.captions.empty()) resolved.captions = defaults.captions.string();
    if (resolved.pairing.empty()) resolved.pairing = defaults.pairing.string();
    if (resolved.splits.empty()) resolved.splits = defaults.split.string();
  }
  for (const auto& [value, flag] :
       {std::pair{&resolved.images, "--images"}, std::pair{&resolved.captions, "--captions"},
        std::pair{&resolved.pairing, "--pairing"}, std::pair{&resolved.splits, "--splits"}}) {
    if (value->empty()) {
      throw cvse::ConfigError(std::string("missing ") + flag + " (or --data)");
    }
  }
  return cvse::load_dataset(resolved.images, resolved.captions, resolved.pairing, resolved.splits);
}

struct TrainOptions {
  DataOptions data;
  std::string run_dir;
  std::string loss;
  std::string optimizer = "adam";
  double alpha = 0.2;
  double tau = 0.1;
  long long dim = 1024;
  long long head_hidden = 2048;
  long long batch = 0;  // stage default filled in
  int epochs = 30;
  std::uint64_t seed = 42;
  bool freeze_base = false;
  bool mask_shared_images = false;
  std::string base_checkpoint;  // contrastive stage only
};

void add_train_options(CLI::App* cmd, FlatConfig& cfg, TrainOptions& opts, bool contrastive) {
  cfg.attach(cmd);
  add_data_options(cfg, opts.data);
  cfg.option("run-dir", opts.run_dir, "output directory for this run");
  cfg.option("loss", opts.loss, contrastive ? "csn, cmn, cmn_tilde, or mvn" : "sh or mh");
  cfg.option("alpha", opts.alpha, "hinge margin");
  cfg.option("tau", opts.tau, "softmax temperature");
  cfg.option("dim", opts.dim, "embedding dimension");
  cfg.option("batch", opts.batch, "mini-batch size");
  cfg.option("epochs", opts.epochs, "training epochs");
  cfg.option("seed", opts.seed, "run seed");
  cfg.option("optimizer", opts.optimizer, "adam or sgd");
  cfg.flag("mask-shared-images", opts.mask_shared_images,
           "exclude same-image pairs from each other's negatives");
  if (contrastive) {
    cfg.option("base-checkpoint", opts.base_checkpoint, "stage-one checkpoint");
    cfg.option("head-hidden", opts.head_hidden, "projection head hidden width");
    cfg.flag("freeze-base", opts.freeze_base, "train only the projection heads");
  }
}

cvse::TrainConfig to_train_config(const TrainOptions& opts, bool contrastive) {
  if (opts.optimizer != "adam" && opts.optimizer != "sgd") {
    throw cvse::ConfigError("--optimizer must be adam or sgd, got '" + opts.optimizer + "'");
  }
  cvse::TrainConfig cfg;
  cfg.loss.kind = cvse::loss_kind_from_name(opts.loss);
  cfg.loss.margin = opts.alpha;
  cfg.loss.temperature = opts.tau;
  cfg.joint_dim = opts.dim;
  cfg.head_hidden_dim = opts.head_hidden;
  cfg.batch_size = opts.batch;
  cfg.epochs = opts.epochs;
  cfg.lr = contrastive ? cvse::contrastive_stage_schedule() : cvse::base_stage_schedule();
  cfg.seed = opts.seed;
  cfg.freeze_base = opts.freeze_base;
  cfg.mask_shared_images = opts.mask_shared_images;
  cfg.optimizer =
      opts.optimizer == "sgd" ? cvse::OptimizerKind::kSgd : cvse::OptimizerKind::kAdam;
  return cfg;
}

std::string train_echo(const TrainOptions& opts, bool contrastive) {
  std::ostringstream out;
  out << data_echo(opts.data);
  out << "run-dir=" << quoted(opts.run_dir) << "\n";
  out << "loss=" << quoted(opts.loss) << "\n";
  out << "alpha=" << number(opts.alpha) << "\n";
  out << "tau=" << number(opts.tau) << "\n";
  out << "dim=" << opts.dim << "\n";
  out << "batch=" << opts.batch << "\n";
  out << "epochs=" << opts.epochs << "\n";
  out << "seed=" << opts.seed << "\n";
  out << "optimizer=" << quoted(opts.optimizer) << "\n";
  out << "mask-shared-images=" << (opts.mask_shared_images ? "true" : "false") << "\n";
  if (contrastive) {
    out << "base-checkpoint=" << quoted(opts.base_checkpoint) << "\n";
    out << "head-hidden=" << opts.head_hidden << "\n";
    out << "freeze-base=" << (opts.freeze_base ? "true" : "false") << "\n";
  }
  return out.str();
}

void finish_run(const std::string& run_dir, const std::string& echo,
                const cvse::TrainResult& result) {
  cvse::write_run_dir(run_dir, echo, result);
  std::vector<cvse::RetrievalReport> reports{result.best_val};
  std::vector<std::string> labels{"val"};
  std::cout << cvse::format_report_table(reports, labels);
  std::cout << "best epoch: " << result.meta.epoch << "\n";
  std::cout << "run dir: " << run_dir << "\n";
}

struct GenSynthOptions {
  std::string out;
  cvse::SynthConfig synth;
};

struct EvalOptions {
  DataOptions data;
  std::string checkpoint;
  std::string split = "test";
  int folds = 0;
  long long fold_size = 1000;
  std::string out;
};

struct SweepOptions {
  TrainOptions train;
  std::string param;
  std::vector<double> values;
  std::string base_loss = "mh";
  long long batch_base = 128;
  int threads = 1;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"two-stage contrastive visual-semantic embedding trainer"};
  app.require_subcommand(1);

  GenSynthOptions gen;
  FlatConfig gen_cfg;
  CLI::App* gen_cmd = app.add_subcommand("gen-synth", "write a synthetic paired dataset");
  gen_cfg.attach(gen_cmd);
  gen_cfg.option("out", gen.out, "output directory");
  gen_cfg.option("images", gen.synth.images, "number of images");
  gen_cfg.option("captions-per-image", gen.synth.captions_per_image, "captions per image");
  gen_cfg.option("latent-dim", gen.synth.latent_dim, "shared latent dimension");
  gen_cfg.option("image-dim", gen.synth.image_dim, "image feature dimension");
  gen_cfg.option("text-dim", gen.synth.text_dim, "caption feature dimension");
  gen_cfg.option("sigma", gen.synth.noise_sigma, "feature noise level");
  gen_cfg.option("seed", gen.synth.seed, "generator seed");
  gen_cmd->callback([&]() {
    gen_cfg.apply();
    require_set(gen.out, "--out");
    cvse::PairedDataset ds = cvse::synth_generate(gen.synth);
    cvse::write_dataset(gen.out, ds);
    std::cout << "wrote " << ds.images.rows() << " images / " << ds.captions.rows()
              << " captions to " << gen.out << "\n";
  });

  TrainOptions base_opts;
  base_opts.loss = "mh";
  base_opts.batch = 128;
  FlatConfig base_cfgfile;
  CLI::App* base_cmd = app.add_subcommand("train-base", "stage one: hinge-trained linear bases");
  add_train_options(base_cmd, base_cfgfile, base_opts, /*contrastive=*/false);
  base_cmd->callback([&]() {
    base_cfgfile.apply();
    require_set(base_opts.run_dir, "--run-dir");
    cvse::TrainConfig cfg = to_train_config(base_opts, false);
    cvse::PairedDataset ds = load_data(base_opts.data);
    cvse::TrainResult result = cvse::train_base(ds, cfg);
    finish_run(base_opts.run_dir, train_echo(base_opts, false), result);
  });

  TrainOptions con_opts;
  con_opts.loss = "cmn";
  con_opts.batch = 256;
  FlatConfig con_cfgfile;
  CLI::App* con_cmd =
      app.add_subcommand("train-contrastive", "stage two: NCE-trained projection heads");
  add_train_options(con_cmd, con_cfgfile, con_opts, /*contrastive=*/true);
  con_cmd->callback([&]() {
    con_cfgfile.apply();
    require_set(con_opts.run_dir, "--run-dir");
    require_set(con_opts.base_checkpoint, "--base-checkpoint");
    cvse::TrainConfig cfg = to_train_config(con_opts, true);
    cvse::PairedDataset ds = load_data(con_opts.data);
    cvse::LoadedCheckpoint base = cvse::load_checkpoint(con_opts.base_checkpoint);
    cvse::TrainResult result = cvse::train_contrastive(ds, base.network, cfg);
    finish_run(con_opts.run_dir, train_echo(con_opts, true), result);
  });

  EvalOptions eval_opts;
  FlatConfig eval_cfg;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score retrieval for a checkpoint");
  eval_cfg.attach(eval_cmd);
  add_data_options(eval_cfg, eval_opts.data);
  eval_cfg.option("checkpoint", eval_opts.checkpoint, "checkpoint to score");
  eval_cfg.option("split", eval_opts.split, "train, val, or test");
  eval_cfg.option("folds", eval_opts.folds, "number of fixed-size gallery folds");
  eval_cfg.option("fold-size", eval_opts.fold_size, "images per fold");
  eval_cfg.option("out", eval_opts.out, "directory for report files");
  eval_cmd->callback([&]() {
    eval_cfg.apply();
    require_set(eval_opts.checkpoint, "--checkpoint");
    cvse::PairedDataset ds = load_data(eval_opts.data);
    cvse::LoadedCheckpoint loaded = cvse::load_checkpoint(eval_opts.checkpoint);
    cvse::Split split = cvse::split_from_name(eval_opts.split);
    if (eval_opts.folds < 0) throw cvse::ConfigError("--folds must be >= 0");

    std::vector<cvse::RetrievalReport> reports;
    std::vector<std::string> labels;
    cvse::RetrievalReport final_report;
    if (eval_opts.folds > 0) {
      std::vector<cvse::RetrievalReport> folds = cvse::evaluate_folds(
          loaded.network, ds, split, eval_opts.folds, eval_opts.fold_size);
      for (std::size_t f = 0; f < folds.size(); ++f) {
        reports.push_back(folds[f]);
        labels.push_back("fold" + std::to_string(f + 1));
      }
      final_report = cvse::fold_average(folds);
      reports.push_back(final_report);
      labels.push_back("mean");
    } else {
      final_report = cvse::evaluate(loaded.network, ds, split);
      reports.push_back(final_report);
      labels.push_back(eval_opts.split);
    }
    std::cout << cvse::format_report_table(reports, labels);
    if (!eval_opts.out.empty()) {
      fs::create_directories(eval_opts.out);
      std::ofstream table(fs::path(eval_opts.out) / "report.txt", std::ios::trunc);
      table << cvse::format_report_table(reports, labels);
      std::ofstream record(fs::path(eval_opts.out) / "report.kv", std::ios::trunc);
      record << cvse::format_report_record(final_report);
    }
  });

  SweepOptions sweep_opts;
  sweep_opts.train.loss = "cmn";
  sweep_opts.train.batch = 256;
  FlatConfig sweep_cfg;
  CLI::App* sweep_cmd =
      app.add_subcommand("sweep", "train and score one contrastive run per parameter value");
  add_train_options(sweep_cmd, sweep_cfg, sweep_opts.train, /*contrastive=*/false);
  sweep_cfg.option("param", sweep_opts.param, "tau or dim");
  sweep_cfg.option("values", sweep_opts.values, "parameter values")->delimiter(',');
  sweep_cfg.option("base-loss", sweep_opts.base_loss, "stage-one loss (sh or mh)");
  sweep_cfg.option("batch-base", sweep_opts.batch_base, "stage-one batch size");
  sweep_cfg.option("head-hidden", sweep_opts.train.head_hidden,
                   "projection head hidden width");
  sweep_cfg.option("threads", sweep_opts.threads, "run sweep points concurrently");
  sweep_cmd->callback([&]() {
    sweep_cfg.apply();
    require_set(sweep_opts.train.run_dir, "--run-dir");
    require_set(sweep_opts.param, "--param");
    cvse::SweepConfig cfg;
    cfg.param = cvse::sweep_param_from_name(sweep_opts.param);
    cfg.values = sweep_opts.values;
    cfg.threads = sweep_opts.threads;

    TrainOptions base_stage = sweep_opts.train;
    base_stage.loss = sweep_opts.base_loss;
    base_stage.batch = sweep_opts.batch_base;
    cfg.base_stage = to_train_config(base_stage, false);

    cfg.contrastive = to_train_config(sweep_opts.train, true);

    cvse::PairedDataset ds = load_data(sweep_opts.train.data);
    std::vector<cvse::SweepRow> rows = cvse::run_sweep(ds, cfg);
    std::string table = cvse::format_sweep_table(cfg.param, rows);
    std::cout << table;
    fs::create_directories(sweep_opts.train.run_dir);
    std::ofstream out(fs::path(sweep_opts.train.run_dir) / "sweep.txt", std::ios::trunc);
    out << table;
    std::ostringstream echo_text;
    echo_text << train_echo(sweep_opts.train, false);
    echo_text << "param=" << quoted(sweep_opts.param) << "\n";
    echo_text << "values=";
    for (std::size_t v = 0; v < sweep_opts.values.size(); ++v) {
      echo_text << (v ? "," : "") << number(sweep_opts.values[v]);
    }
    echo_text << "\n";
    echo_text << "base-loss=" << quoted(sweep_opts.base_loss) << "\n";
    echo_text << "batch-base=" << sweep_opts.batch_base << "\n";
    echo_text << "head-hidden=" << sweep_opts.train.head_hidden << "\n";
    echo_text << "threads=" << sweep_opts.threads << "\n";
    std::ofstream echo(fs::path(sweep_opts.train.run_dir) / "config.txt", std::ios::trunc);
    echo << echo_text.str();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kConfigExit;
  } catch (const cvse::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericExit;
  } catch (const cvse::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kDataExit;
  } catch (const cvse::Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigExit;
  }
  return 0;
}
