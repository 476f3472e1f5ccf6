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

#include "cvse/train.hpp"

#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <thread>
#include <utility>

#include "cvse/error.hpp"

namespace cvse {
namespace {

// Substream ids off the run seed; fixed so a seed pins the whole run.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kBatchStream = 1;
constexpr std::uint64_t kHeadStream = 2;

void check_dataset_dims(const PairedDataset& ds, const NetworkConfig& config) {
  if (ds.images.dim() != config.image_feature_dim) {
    throw ConfigError("training: dataset image features have dim " +
                      std::to_string(ds.images.dim()) + " but the network expects " +
                      std::to_string(config.image_feature_dim));
  }
  if (ds.captions.dim() != config.text_feature_dim) {
    throw ConfigError("training: dataset caption features have dim " +
                      std::to_string(ds.captions.dim()) + " but the network expects " +
                      std::to_string(config.text_feature_dim));
  }
}

std::vector<TensorRef> trainable_subset(std::vector<TensorRef> refs, bool freeze_base) {
  if (!freeze_base) return refs;
  std::vector<TensorRef> kept;
  for (TensorRef& ref : refs) {
    if (!is_base_parameter(ref.name)) kept.push_back(std::move(ref));
  }
  return kept;
}

}  // namespace

BatchLossResult batch_loss(const EmbeddingNetwork& net, const MatrixRef& image_feats,
                           const MatrixRef& text_feats, const LossConfig& cfg,
                           std::span<const Index> groups) {
  ForwardResult fwd = forward(net, image_feats, text_feats);
  LossOutput loss = compute_loss(fwd.image_embed, fwd.text_embed, cfg, groups);
  BatchLossResult result;
  result.value = loss.value;
  result.gradients = backward(net, fwd.cache, loss.d_image_embed, loss.d_text_embed);
  return result;
}

double batch_loss_value(const EmbeddingNetwork& net, const MatrixRef& image_feats,
                        const MatrixRef& text_feats, const LossConfig& cfg,
                        std::span<const Index> groups) {
  ForwardResult fwd = forward(net, image_feats, text_feats);
  return compute_loss_value(fwd.image_embed, fwd.text_embed, cfg, groups);
}

void TrainConfig::validate() const {
  loss.validate();
  lr.validate();
  if (joint_dim < 1) throw ConfigError("train config: dim must be >= 1");
  if (head_hidden_dim < 1) throw ConfigError("train config: head hidden dim must be >= 1");
  if (batch_size < 2) throw ConfigError("train config: batch size must be >= 2");
  if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
}

TrainResult run_training(const PairedDataset& ds, EmbeddingNetwork net, const TrainConfig& cfg) {
  cfg.validate();
  check_dataset_dims(ds, net.config);
  const std::size_t train_pairs = ds.split_captions(Split::kTrain).size();
  if (train_pairs < static_cast<std::size_t>(cfg.batch_size)) {
    throw DataError("training: the train split has " + std::to_string(train_pairs) +
                    " pairs, fewer than one batch of " + std::to_string(cfg.batch_size));
  }
  if (ds.split_images(Split::kVal).empty()) {
    throw DataError("training: the val split is empty");
  }

  Rng batch_rng = Rng(cfg.seed).split(kBatchStream);
  std::vector<TensorRef> params = trainable_subset(parameter_refs(net), cfg.freeze_base);
  if (params.empty()) throw ConfigError("training: no trainable parameters");
  AdamState state(params);

  TrainResult result;
  result.meta.seed = cfg.seed;
  result.meta.loss = loss_kind_name(cfg.loss.kind);
  int best_epoch = -1;
  double best_rsum = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(cfg.lr, epoch);
    double loss_sum = 0.0;
    std::vector<MiniBatch> batches = make_batches(ds, Split::kTrain, cfg.batch_size, batch_rng);
    if (batches.empty()) {
      throw DataError("training: no full batches of " + std::to_string(cfg.batch_size));
    }
    for (const MiniBatch& batch : batches) {
      std::span<const Index> groups =
          cfg.mask_shared_images ? std::span<const Index>(batch.image_rows)
                                 : std::span<const Index>();
      BatchLossResult step = batch_loss(net, batch.image_feats, batch.text_feats, cfg.loss, groups);
      if (!std::isfinite(step.value)) {
        throw NumericError("training: loss became non-finite at epoch " +
                           std::to_string(epoch + 1));
      }
      loss_sum += step.value;
      std::vector<TensorRef> grads =
          trainable_subset(gradient_refs(step.gradients), cfg.freeze_base);
      if (cfg.optimizer == OptimizerKind::kAdam) {
        adam_step(params, grads, state, lr);
      } else {
        sgd_step(params, grads, lr);
      }
    }

    RetrievalReport val = evaluate(net, ds, Split::kVal);
    result.curve.push_back({epoch + 1, loss_sum / static_cast<double>(batches.size()), val.rsum});
    if (best_epoch < 0 || val.rsum > best_rsum) {
      best_epoch = epoch + 1;
      best_rsum = val.rsum;
      result.network = net;
      result.best_val = val;
    }
  }
  result.meta.epoch = best_epoch;
  return result;
}

TrainResult train_base(const PairedDataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (cfg.loss.kind != LossKind::kSh && cfg.loss.kind != LossKind::kMh) {
    throw ConfigError("train_base: the base stage trains with a hinge loss (sh or mh), got '" +
                      loss_kind_name(cfg.loss.kind) + "'");
  }
  if (cfg.freeze_base) {
    throw ConfigError("train_base: freeze_base only applies to the contrastive stage");
  }
  NetworkConfig net_config;
  net_config.image_feature_dim = ds.images.dim();
  net_config.text_feature_dim = ds.captions.dim();
  net_config.base_dim = cfg.joint_dim;
  net_config.joint_dim = cfg.joint_dim;
  net_config.with_heads = false;
  Rng init_rng = Rng(cfg.seed).split(kInitStream);
  return run_training(ds, init_network(net_config, init_rng), cfg);
}

TrainResult train_contrastive(const PairedDataset& ds, const EmbeddingNetwork& base,
                              const TrainConfig& cfg) {
  cfg.validate();
  switch (cfg.loss.kind) {
    case LossKind::kCsn:
    case LossKind::kCmn:
    case LossKind::kCmnTilde:
    case LossKind::kMvn:
      break;
    default:
      throw ConfigError(
          "train_contrastive: the contrastive stage trains with an NCE loss "
          "(csn, cmn, cmn_tilde, or mvn), got '" +
          loss_kind_name(cfg.loss.kind) + "'");
  }
  Rng head_rng = Rng(cfg.seed).split(kHeadStream);
  EmbeddingNetwork net = init_from_base(base, cfg.joint_dim, cfg.head_hidden_dim, head_rng);
  return run_training(ds, std::move(net), cfg);
}

void write_run_dir(const std::filesystem::path& dir, const std::string& config_echo,
                   const TrainResult& result) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.txt", std::ios::trunc);
    if (!out) throw DataError("run dir: cannot write '" + (dir / "config.txt").string() + "'");
    out << config_echo;
  }
  {
    std::ofstream out(dir / "loss_curve.tsv", std::ios::trunc);
    if (!out) throw DataError("run dir: cannot write '" + (dir / "loss_curve.tsv").string() + "'");
    char line[128];
    for (const EpochRecord& rec : result.curve) {
      std::snprintf(line, sizeof(line), "%d\t%.12g\t%.12g\n", rec.epoch, rec.train_loss,
                    rec.val_rsum);
      out << line;
    }
  }
  save_checkpoint(dir / "checkpoint.cvse", result.network, result.meta);
  {
    std::ofstream out(dir / "report.txt", std::ios::trunc);
    std::vector<RetrievalReport> reports{result.best_val};
    std::vector<std::string> labels{"val"};
    out << format_report_table(reports, labels);
  }
  {
    std::ofstream out(dir / "report.kv", std::ios::trunc);
    out << format_report_record(result.best_val);
  }
}

std::string sweep_param_name(SweepParam param) {
  return param == SweepParam::kTau ? "tau" : "dim";
}

SweepParam sweep_param_from_name(const std::string& name) {
  if (name == "tau") return SweepParam::kTau;
  if (name == "dim") return SweepParam::kDim;
  throw ConfigError("unknown sweep parameter '" + name + "' (expected tau or dim)");
}

std::vector<double> SweepConfig::effective_values() const {
  if (!values.empty()) return values;
  if (param == SweepParam::kTau) return {0.05, 0.1, 0.5, 1.0};
  return {64, 128, 256, 512, 1024, 2048};
}

std::vector<SweepRow> run_sweep(const PairedDataset& ds, const SweepConfig& cfg) {
  std::vector<double> values = cfg.effective_values();
  for (double v : values) {
    if (cfg.param == SweepParam::kTau) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ConfigError("sweep: tau values must be finite and positive");
      }
    } else if (v < 1.0 || v != std::floor(v)) {
      throw ConfigError("sweep: dim values must be positive integers");
    }
  }

  TrainResult base = train_base(ds, cfg.base_stage);

  std::vector<SweepRow> rows(values.size());
  auto run_one = [&](std::size_t i) {
    TrainConfig point = cfg.contrastive;
    if (cfg.param == SweepParam::kTau) {
      point.loss.temperature = values[i];
    } else {
      point.joint_dim = static_cast<Index>(values[i]);
    }
    TrainResult trained = train_contrastive(ds, base.network, point);
    rows[i] = {values[i], evaluate(trained.network, ds, Split::kTest)};
  };

  if (cfg.threads > 1) {
    // Sweep points are independent; shard them over a fixed thread count.
    std::vector<std::exception_ptr> errors(values.size());
    std::vector<std::thread> pool;
    const std::size_t n_threads = std::min<std::size_t>(cfg.threads, values.size());
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t]() {
        for (std::size_t i = t; i < values.size(); i += n_threads) {
          try {
            run_one(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  } else {
    for (std::size_t i = 0; i < values.size(); ++i) run_one(i);
  }
  return rows;
}

std::string format_sweep_table(SweepParam param, const std::vector<SweepRow>& rows) {
  std::vector<RetrievalReport> reports;
  std::vector<std::string> labels;
  reports.reserve(rows.size());
  labels.reserve(rows.size());
  char label[64];
  for (const SweepRow& row : rows) {
    if (param == SweepParam::kDim) {
      std::snprintf(label, sizeof(label), "dim=%lld", static_cast<long long>(row.value));
    } else {
      std::snprintf(label, sizeof(label), "tau=%g", row.value);
    }
    labels.emplace_back(label);
    reports.push_back(row.test_report);
  }
  return format_report_table(reports, labels);
}

}  // namespace cvse
