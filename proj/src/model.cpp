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

#include "cvse/model.hpp"

#include <cmath>
#include <map>
#include <sstream>

#include "cvse/error.hpp"
#include "binary_io.hpp"

namespace cvse {
namespace {

constexpr char kCheckpointMagic[4] = {'C', 'V', 'S', 'E'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void require_dim(Index value, const char* name) {
  if (value < 1) {
    throw ConfigError(std::string("network config: ") + name + " must be >= 1, got " +
                      std::to_string(value));
  }
}

LinearLayer glorot_linear(Index out_dim, Index in_dim, Rng& rng) {
  LinearLayer layer;
  layer.weight.resize(out_dim, in_dim);
  const double bound = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  for (Index r = 0; r < out_dim; ++r) {
    for (Index c = 0; c < in_dim; ++c) {
      layer.weight(r, c) = rng.next_uniform(-bound, bound);
    }
  }
  layer.bias = Vector::Zero(out_dim);
  return layer;
}

Matrix head_forward(const ProjectionHead& head, const MatrixRef& x, HeadCache* cache) {
  Matrix pre = linear_forward(head.hidden, x);
  Matrix act = pre.cwiseMax(0.0);
  Matrix out = linear_forward(head.output, act);
  if (cache) {
    cache->pre_hidden = std::move(pre);
    cache->hidden_act = std::move(act);
  }
  return out;
}

// Returns d(loss)/d(head input); ReLU passes gradient only where the
// pre-activation was strictly positive.
Matrix head_backward(const ProjectionHead& head, const HeadCache& cache, const MatrixRef& x,
                     const MatrixRef& d_out, HeadGrads* grads) {
  Matrix d_act = linear_backward(head.output, cache.hidden_act, d_out, &grads->output);
  Matrix d_pre = (cache.pre_hidden.array() > 0.0).cast<double>() * d_act.array();
  return linear_backward(head.hidden, x, d_pre, &grads->hidden);
}

Matrix embed_one_tower(const LinearLayer& base, const std::optional<ProjectionHead>& head,
                       const MatrixRef& feats) {
  Matrix out = linear_forward(base, feats);
  if (head) out = head_forward(*head, out, nullptr);
  return out;
}

std::string config_record(const EmbeddingNetwork& net, const CheckpointMeta& meta) {
  std::ostringstream out;
  const NetworkConfig& c = net.config;
  out << "image_feature_dim=" << c.image_feature_dim << "\n";
  out << "text_feature_dim=" << c.text_feature_dim << "\n";
  out << "base_dim=" << c.base_dim << "\n";
  out << "with_heads=" << (c.with_heads ? 1 : 0) << "\n";
  out << "head_hidden_dim=" << c.head_hidden_dim << "\n";
  out << "joint_dim=" << c.joint_dim << "\n";
  out << "epoch=" << meta.epoch << "\n";
  out << "seed=" << meta.seed << "\n";
  out << "loss=" << meta.loss << "\n";
  return out.str();
}

std::map<std::string, std::string> parse_record(const std::string& record) {
  std::map<std::string, std::string> fields;
  std::istringstream in(record);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DataError("checkpoint: malformed config line '" + line + "'");
    fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return fields;
}

const std::string& field(const std::map<std::string, std::string>& fields, const std::string& key) {
  auto it = fields.find(key);
  if (it == fields.end()) throw DataError("checkpoint: config record is missing '" + key + "'");
  return it->second;
}

long long field_int(const std::map<std::string, std::string>& fields, const std::string& key) {
  try {
    return std::stoll(field(fields, key));
  } catch (const std::logic_error&) {
    throw DataError("checkpoint: config field '" + key + "' is not an integer");
  }
}

}  // namespace

void NetworkConfig::validate() const {
  require_dim(image_feature_dim, "image_feature_dim");
  require_dim(text_feature_dim, "text_feature_dim");
  require_dim(base_dim, "base_dim");
  if (with_heads) {
    require_dim(head_hidden_dim, "head_hidden_dim");
    require_dim(joint_dim, "joint_dim");
  } else if (joint_dim != base_dim) {
    throw ConfigError("network config: without heads the joint dim (" + std::to_string(joint_dim) +
                      ") must equal the base dim (" + std::to_string(base_dim) + ")");
  }
}

Matrix linear_forward(const LinearLayer& layer, const MatrixRef& x) {
  if (x.cols() != layer.in_dim()) {
    throw ConfigError("linear_forward: input has " + std::to_string(x.cols()) +
                      " columns but the layer expects " + std::to_string(layer.in_dim()));
  }
  return (x * layer.weight.transpose()).rowwise() + layer.bias.transpose();
}

Matrix linear_backward(const LinearLayer& layer, const MatrixRef& x, const MatrixRef& d_out,
                       LinearGrads* grads) {
  if (x.rows() != d_out.rows() || x.cols() != layer.in_dim() || d_out.cols() != layer.out_dim()) {
    throw ConfigError("linear_backward: got input " + shape_str(x.rows(), x.cols()) +
                      " and upstream " + shape_str(d_out.rows(), d_out.cols()) +
                      " for a " + shape_str(layer.out_dim(), layer.in_dim()) + " layer");
  }
  if (grads) {
    grads->weight = d_out.transpose() * x;
    grads->bias = d_out.colwise().sum().transpose();
  }
  return d_out * layer.weight;
}

EmbeddingNetwork init_network(const NetworkConfig& config, Rng& rng) {
  config.validate();
  EmbeddingNetwork net;
  net.config = config;
  net.image_base = glorot_linear(config.base_dim, config.image_feature_dim, rng);
  net.text_base = glorot_linear(config.base_dim, config.text_feature_dim, rng);
  if (config.with_heads) {
    ProjectionHead image_head{glorot_linear(config.head_hidden_dim, config.base_dim, rng),
                              glorot_linear(config.joint_dim, config.head_hidden_dim, rng)};
    ProjectionHead text_head{glorot_linear(config.head_hidden_dim, config.base_dim, rng),
                             glorot_linear(config.joint_dim, config.head_hidden_dim, rng)};
    net.image_head = std::move(image_head);
    net.text_head = std::move(text_head);
  }
  return net;
}

EmbeddingNetwork init_from_base(const EmbeddingNetwork& base, Index joint_dim,
                                Index head_hidden_dim, Rng& rng) {
  if (base.config.with_heads) {
    throw ConfigError("init_from_base: the starting network already has projection heads");
  }
  NetworkConfig config = base.config;
  config.with_heads = true;
  config.head_hidden_dim = head_hidden_dim;
  config.joint_dim = joint_dim;
  config.validate();

  EmbeddingNetwork net;
  net.config = config;
  net.image_base = base.image_base;
  net.text_base = base.text_base;
  ProjectionHead image_head{glorot_linear(head_hidden_dim, config.base_dim, rng),
                            glorot_linear(joint_dim, head_hidden_dim, rng)};
  ProjectionHead text_head{glorot_linear(head_hidden_dim, config.base_dim, rng),
                           glorot_linear(joint_dim, head_hidden_dim, rng)};
  net.image_head = std::move(image_head);
  net.text_head = std::move(text_head);
  return net;
}

ForwardResult forward(const EmbeddingNetwork& net, const MatrixRef& image_feats,
                      const MatrixRef& text_feats) {
  if (image_feats.rows() != text_feats.rows()) {
    throw ConfigError("forward: image batch has " + std::to_string(image_feats.rows()) +
                      " rows but text batch has " + std::to_string(text_feats.rows()));
  }
  if (image_feats.rows() < 1) throw ConfigError("forward: empty batch");
  if (image_feats.cols() != net.config.image_feature_dim) {
    throw ConfigError("forward: image features have dim " + std::to_string(image_feats.cols()) +
                      " but the network expects " + std::to_string(net.config.image_feature_dim));
  }
  if (text_feats.cols() != net.config.text_feature_dim) {
    throw ConfigError("forward: text features have dim " + std::to_string(text_feats.cols()) +
                      " but the network expects " + std::to_string(net.config.text_feature_dim));
  }

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.image_input = image_feats;
  cache.text_input = text_feats;
  cache.image_base_out = linear_forward(net.image_base, image_feats);
  cache.text_base_out = linear_forward(net.text_base, text_feats);
  if (net.config.with_heads) {
    cache.image_head.emplace();
    cache.text_head.emplace();
    result.image_embed = head_forward(*net.image_head, cache.image_base_out, &*cache.image_head);
    result.text_embed = head_forward(*net.text_head, cache.text_base_out, &*cache.text_head);
  } else {
    result.image_embed = cache.image_base_out;
    result.text_embed = cache.text_base_out;
  }
  return result;
}

Matrix embed_images(const EmbeddingNetwork& net, const MatrixRef& feats) {
  if (feats.cols() != net.config.image_feature_dim) {
    throw ConfigError("embed_images: features have dim " + std::to_string(feats.cols()) +
                      " but the network expects " + std::to_string(net.config.image_feature_dim));
  }
  return embed_one_tower(net.image_base, net.image_head, feats);
}

Matrix embed_texts(const EmbeddingNetwork& net, const MatrixRef& feats) {
  if (feats.cols() != net.config.text_feature_dim) {
    throw ConfigError("embed_texts: features have dim " + std::to_string(feats.cols()) +
                      " but the network expects " + std::to_string(net.config.text_feature_dim));
  }
  return embed_one_tower(net.text_base, net.text_head, feats);
}

NetworkGradients backward(const EmbeddingNetwork& net, const ForwardCache& cache,
                          const MatrixRef& d_image_embed, const MatrixRef& d_text_embed) {
  const Index n = cache.image_input.rows();
  const Index d = net.embedding_dim();
  if (d_image_embed.rows() != n || d_text_embed.rows() != n || d_image_embed.cols() != d ||
      d_text_embed.cols() != d) {
    throw ConfigError("backward: upstream gradients " +
                      shape_str(d_image_embed.rows(), d_image_embed.cols()) + " and " +
                      shape_str(d_text_embed.rows(), d_text_embed.cols()) +
                      " do not match the cached batch (" + shape_str(n, d) + ")");
  }
  if (net.config.with_heads != cache.image_head.has_value() ||
      net.config.with_heads != cache.text_head.has_value()) {
    throw ConfigError("backward: cache does not match the network's head layout");
  }

  NetworkGradients grads;
  Matrix d_image_base_out, d_text_base_out;
  if (net.config.with_heads) {
    grads.image_head.emplace();
    grads.text_head.emplace();
    d_image_base_out = head_backward(*net.image_head, *cache.image_head, cache.image_base_out,
                                     d_image_embed, &*grads.image_head);
    d_text_base_out = head_backward(*net.text_head, *cache.text_head, cache.text_base_out,
                                    d_text_embed, &*grads.text_head);
  } else {
    d_image_base_out = d_image_embed;
    d_text_base_out = d_text_embed;
  }
  linear_backward(net.image_base, cache.image_input, d_image_base_out, &grads.image_base);
  linear_backward(net.text_base, cache.text_input, d_text_base_out, &grads.text_base);
  return grads;
}

namespace {

void push_linear(std::vector<TensorRef>& refs, const std::string& prefix, LinearLayer& layer) {
  refs.push_back({prefix + ".weight", layer.weight.data(), layer.weight.rows(), layer.weight.cols()});
  refs.push_back({prefix + ".bias", layer.bias.data(), layer.bias.size(), 1});
}

void push_linear(std::vector<TensorRef>& refs, const std::string& prefix, LinearGrads& grads) {
  refs.push_back({prefix + ".weight", grads.weight.data(), grads.weight.rows(), grads.weight.cols()});
  refs.push_back({prefix + ".bias", grads.bias.data(), grads.bias.size(), 1});
}

}  // namespace

std::vector<TensorRef> parameter_refs(EmbeddingNetwork& net) {
  std::vector<TensorRef> refs;
  push_linear(refs, "image_base", net.image_base);
  push_linear(refs, "text_base", net.text_base);
  if (net.image_head) {
    push_linear(refs, "image_head.hidden", net.image_head->hidden);
    push_linear(refs, "image_head.output", net.image_head->output);
  }
  if (net.text_head) {
    push_linear(refs, "text_head.hidden", net.text_head->hidden);
    push_linear(refs, "text_head.output", net.text_head->output);
  }
  return refs;
}

std::vector<TensorRef> gradient_refs(NetworkGradients& grads) {
  std::vector<TensorRef> refs;
  push_linear(refs, "image_base", grads.image_base);
  push_linear(refs, "text_base", grads.text_base);
  if (grads.image_head) {
    push_linear(refs, "image_head.hidden", grads.image_head->hidden);
    push_linear(refs, "image_head.output", grads.image_head->output);
  }
  if (grads.text_head) {
    push_linear(refs, "text_head.hidden", grads.text_head->hidden);
    push_linear(refs, "text_head.output", grads.text_head->output);
  }
  return refs;
}

bool is_base_parameter(const std::string& name) {
  return name.rfind("image_base", 0) == 0 || name.rfind("text_base", 0) == 0;
}

void save_checkpoint(const std::filesystem::path& path, const EmbeddingNetwork& net,
                     const CheckpointMeta& meta) {
  detail::ByteWriter writer;
  writer.put_bytes(kCheckpointMagic, 4);
  writer.put_u32(kCheckpointVersion);
  std::string record = config_record(net, meta);
  writer.put_u32(static_cast<std::uint32_t>(record.size()));
  writer.put_string(record);

  auto refs = parameter_refs(const_cast<EmbeddingNetwork&>(net));
  for (const TensorRef& ref : refs) {
    writer.put_u16(static_cast<std::uint16_t>(ref.name.size()));
    writer.put_string(ref.name);
    writer.put_u64(static_cast<std::uint64_t>(ref.rows));
    writer.put_u64(static_cast<std::uint64_t>(ref.cols));
    // Row-major on disk regardless of in-memory layout.
    Eigen::Map<const Matrix> values(ref.data, ref.rows, ref.cols);
    for (Index r = 0; r < ref.rows; ++r) {
      for (Index c = 0; c < ref.cols; ++c) {
        writer.put_f64(values(r, c));
      }
    }
  }
  writer.write_with_crc(path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  detail::ByteReader reader = detail::ByteReader::load_checked(path, "checkpoint");
  std::string magic = reader.get_bytes(4);
  if (magic != std::string(kCheckpointMagic, 4)) {
    throw DataError("checkpoint: '" + path.string() + "' does not start with the expected magic");
  }
  std::uint32_t version = reader.get_u32();
  if (version != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version) +
                    " (supported: " + std::to_string(kCheckpointVersion) + ")");
  }
  std::uint32_t record_len = reader.get_u32();
  auto fields = parse_record(reader.get_bytes(record_len));

  NetworkConfig config;
  config.image_feature_dim = field_int(fields, "image_feature_dim");
  config.text_feature_dim = field_int(fields, "text_feature_dim");
  config.base_dim = field_int(fields, "base_dim");
  config.with_heads = field_int(fields, "with_heads") != 0;
  config.head_hidden_dim = field_int(fields, "head_hidden_dim");
  config.joint_dim = field_int(fields, "joint_dim");
  config.validate();

  LoadedCheckpoint loaded;
  loaded.meta.epoch = static_cast<int>(field_int(fields, "epoch"));
  loaded.meta.seed = static_cast<std::uint64_t>(field_int(fields, "seed"));
  loaded.meta.loss = field(fields, "loss");

  // Materialize the expected parameter set, then fill it from the stream.
  EmbeddingNetwork& net = loaded.network;
  net.config = config;
  net.image_base.weight.resize(config.base_dim, config.image_feature_dim);
  net.image_base.bias.resize(config.base_dim);
  net.text_base.weight.resize(config.base_dim, config.text_feature_dim);
  net.text_base.bias.resize(config.base_dim);
  if (config.with_heads) {
    net.image_head.emplace();
    net.text_head.emplace();
    for (ProjectionHead* head : {&*net.image_head, &*net.text_head}) {
      head->hidden.weight.resize(config.head_hidden_dim, config.base_dim);
      head->hidden.bias.resize(config.head_hidden_dim);
      head->output.weight.resize(config.joint_dim, config.head_hidden_dim);
      head->output.bias.resize(config.joint_dim);
    }
  }

  auto refs = parameter_refs(net);
  for (TensorRef& ref : refs) {
    std::uint16_t name_len = reader.get_u16();
    std::string name = reader.get_bytes(name_len);
    if (name != ref.name) {
      throw DataError("checkpoint: expected tensor '" + ref.name + "' but found '" + name + "'");
    }
    Index rows = static_cast<Index>(reader.get_u64());
    Index cols = static_cast<Index>(reader.get_u64());
    if (rows != ref.rows || cols != ref.cols) {
      throw DataError("checkpoint: tensor '" + name + "' has shape " + shape_str(rows, cols) +
                      " but the config implies " + shape_str(ref.rows, ref.cols));
    }
    Eigen::Map<Matrix> values(ref.data, ref.rows, ref.cols);
    for (Index r = 0; r < rows; ++r) {
      for (Index c = 0; c < cols; ++c) {
        values(r, c) = reader.get_f64();
      }
    }
    if (!values.allFinite()) {
      throw DataError("checkpoint: tensor '" + name + "' contains non-finite values");
    }
  }
  if (!reader.done()) {
    throw DataError("checkpoint: " + std::to_string(reader.remaining()) +
                    " unexpected trailing bytes");
  }
  return loaded;
}

}  // namespace cvse
