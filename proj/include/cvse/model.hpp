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

#ifndef CVSE_MODEL_HPP_
#define CVSE_MODEL_HPP_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cvse/rng.hpp"
#include "cvse/types.hpp"

namespace cvse {

// Two-tower embedding model: one linear base per modality, plus an optional
// two-layer ReLU projection head per modality (both towers either have heads
// or neither does).
struct NetworkConfig {
  Index image_feature_dim = 0;
  Index text_feature_dim = 0;
  Index base_dim = 1024;
  bool with_heads = false;
  Index head_hidden_dim = 2048;
  Index joint_dim = 1024;  // equals base_dim when heads are absent

  void validate() const;
};

struct LinearLayer {
  Matrix weight;  // out x in
  Vector bias;    // out

  Index in_dim() const { return weight.cols(); }
  Index out_dim() const { return weight.rows(); }
};

struct LinearGrads {
  Matrix weight;
  Vector bias;
};

// y = x * W^T + b broadcast over rows.
Matrix linear_forward(const LinearLayer& layer, const MatrixRef& x);

// Fills grads and returns d(loss)/dx.
Matrix linear_backward(const LinearLayer& layer, const MatrixRef& x, const MatrixRef& d_out,
                       LinearGrads* grads);

struct ProjectionHead {
  LinearLayer hidden;  // base_dim -> head_hidden_dim, followed by ReLU
  LinearLayer output;  // head_hidden_dim -> joint_dim
};

struct HeadGrads {
  LinearGrads hidden, output;
};

struct EmbeddingNetwork {
  NetworkConfig config;
  LinearLayer image_base, text_base;
  std::optional<ProjectionHead> image_head, text_head;

  Index embedding_dim() const { return config.with_heads ? config.joint_dim : config.base_dim; }
};

// Glorot-uniform weights, zero biases, draw order fixed so a seed pins the
// whole network.
EmbeddingNetwork init_network(const NetworkConfig& config, Rng& rng);

// Copies a headless network's bases and attaches freshly initialized heads.
EmbeddingNetwork init_from_base(const EmbeddingNetwork& base, Index joint_dim,
                                Index head_hidden_dim, Rng& rng);

struct HeadCache {
  Matrix pre_hidden;   // before ReLU
  Matrix hidden_act;   // after ReLU
};

struct ForwardCache {
  Matrix image_input, text_input;
  Matrix image_base_out, text_base_out;
  std::optional<HeadCache> image_head, text_head;
};

struct ForwardResult {
  Matrix image_embed, text_embed;
  ForwardCache cache;
};

ForwardResult forward(const EmbeddingNetwork& net, const MatrixRef& image_feats,
                      const MatrixRef& text_feats);

// Inference-only single-modality embedding (no cache).
Matrix embed_images(const EmbeddingNetwork& net, const MatrixRef& feats);
Matrix embed_texts(const EmbeddingNetwork& net, const MatrixRef& feats);

struct NetworkGradients {
  LinearGrads image_base, text_base;
  std::optional<HeadGrads> image_head, text_head;
};

NetworkGradients backward(const EmbeddingNetwork& net, const ForwardCache& cache,
                          const MatrixRef& d_image_embed, const MatrixRef& d_text_embed);

// Flat named views over parameters/gradients, in one fixed order, for the
// optimizer and the checkpoint container.
struct TensorRef {
  std::string name;
  double* data = nullptr;
  Index rows = 0, cols = 0;

  Index size() const { return rows * cols; }
};

std::vector<TensorRef> parameter_refs(EmbeddingNetwork& net);
std::vector<TensorRef> gradient_refs(NetworkGradients& grads);

// Base-tower tensors keep their values when the base is frozen.
bool is_base_parameter(const std::string& name);

struct CheckpointMeta {
  int epoch = 0;
  std::uint64_t seed = 0;
  std::string loss = "mh";
};

void save_checkpoint(const std::filesystem::path& path, const EmbeddingNetwork& net,
                     const CheckpointMeta& meta);

struct LoadedCheckpoint {
  EmbeddingNetwork network;
  CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cvse

#endif  // CVSE_MODEL_HPP_
