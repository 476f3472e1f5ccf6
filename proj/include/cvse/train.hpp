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

#ifndef CVSE_TRAIN_HPP_
#define CVSE_TRAIN_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cvse/data.hpp"
#include "cvse/eval.hpp"
#include "cvse/losses.hpp"
#include "cvse/model.hpp"
#include "cvse/optim.hpp"

namespace cvse {

// Loss for one batch of paired features, with gradients for every network
// parameter. `groups` optionally carries the image identity of each pair.
struct BatchLossResult {
  double value = 0.0;
  NetworkGradients gradients;
};

BatchLossResult batch_loss(const EmbeddingNetwork& net, const MatrixRef& image_feats,
                           const MatrixRef& text_feats, const LossConfig& cfg,
                           std::span<const Index> groups = {});

double batch_loss_value(const EmbeddingNetwork& net, const MatrixRef& image_feats,
                        const MatrixRef& text_feats, const LossConfig& cfg,
                        std::span<const Index> groups = {});

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  LossConfig loss;
  Index joint_dim = 1024;        // base width in the base stage, head output after
  Index head_hidden_dim = 2048;  // contrastive stage only
  Index batch_size = 128;
  int epochs = 30;
  LrSchedule lr = base_stage_schedule();
  std::uint64_t seed = 42;
  bool freeze_base = false;           // contrastive stage only
  bool mask_shared_images = false;    // drop same-image pairs from negatives
  OptimizerKind optimizer = OptimizerKind::kAdam;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_rsum = 0.0;
};

struct TrainResult {
  EmbeddingNetwork network;  // weights of the best-validation epoch
  CheckpointMeta meta;
  std::vector<EpochRecord> curve;
  RetrievalReport best_val;
};

// Epoch loop over shuffled train batches; after each epoch the validation
// rsum is recorded and the best-scoring epoch's weights are kept (earliest
// epoch wins ties).
TrainResult run_training(const PairedDataset& ds, EmbeddingNetwork net, const TrainConfig& cfg);

// Stage one: headless network trained with a hinge loss (sh or mh).
TrainResult train_base(const PairedDataset& ds, const TrainConfig& cfg);

// Stage two: attaches projection heads to a trained base and trains with an
// NCE loss (csn, cmn, cmn_tilde, or mvn).
TrainResult train_contrastive(const PairedDataset& ds, const EmbeddingNetwork& base,
                              const TrainConfig& cfg);

// Run directory layout: config.txt, loss_curve.tsv, checkpoint.cvse,
// report.txt, report.kv.
void write_run_dir(const std::filesystem::path& dir, const std::string& config_echo,
                   const TrainResult& result);

enum class SweepParam { kTau, kDim };

std::string sweep_param_name(SweepParam param);
SweepParam sweep_param_from_name(const std::string& name);

struct SweepConfig {
  SweepParam param = SweepParam::kTau;
  std::vector<double> values;  // empty selects the standard grid
  TrainConfig base_stage;
  TrainConfig contrastive;
  int threads = 1;  // > 1 runs sweep points concurrently

  std::vector<double> effective_values() const;
};

struct SweepRow {
  double value = 0.0;
  RetrievalReport test_report;
};

// One base network, then one contrastive run and test evaluation per value;
// the seed stays constant across values.
std::vector<SweepRow> run_sweep(const PairedDataset& ds, const SweepConfig& cfg);

std::string format_sweep_table(SweepParam param, const std::vector<SweepRow>& rows);

}  // namespace cvse

#endif  // CVSE_TRAIN_HPP_
