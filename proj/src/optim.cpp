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

#include "cvse/optim.hpp"

#include <cmath>
#include <string>

#include "cvse/error.hpp"

namespace cvse {
namespace {

void check_aligned(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads) {
  if (params.size() != grads.size()) {
    throw ConfigError("optimizer step: " + std::to_string(params.size()) + " parameters but " +
                      std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].rows != grads[i].rows || params[i].cols != grads[i].cols) {
      throw ConfigError("optimizer step: shape mismatch for '" + params[i].name + "'");
    }
  }
}

}  // namespace

AdamState::AdamState(const std::vector<TensorRef>& params, AdamConfig cfg) : config(cfg) {
  m.reserve(params.size());
  v.reserve(params.size());
  for (const TensorRef& p : params) {
    m.push_back(Array::Zero(p.size()));
    v.push_back(Array::Zero(p.size()));
  }
}

void adam_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
               AdamState& state, double lr) {
  check_aligned(params, grads);
  if (state.m.size() != params.size()) {
    throw ConfigError("adam_step: state covers " + std::to_string(state.m.size()) +
                      " tensors but " + std::to_string(params.size()) + " were given");
  }
  state.t += 1;
  const AdamConfig& c = state.config;
  const double bias1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bias2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].size()) {
      throw ConfigError("adam_step: state shape mismatch for '" + params[i].name + "'");
    }
    Eigen::Map<Array> p(params[i].data, params[i].size());
    Eigen::Map<const Array> g(grads[i].data, grads[i].size());
    state.m[i] = c.beta1 * state.m[i] + (1.0 - c.beta1) * g;
    state.v[i] = c.beta2 * state.v[i] + (1.0 - c.beta2) * g.square();
    p -= lr * (state.m[i] / bias1) / ((state.v[i] / bias2).sqrt() + c.epsilon);
  }
}

void sgd_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
              double lr) {
  check_aligned(params, grads);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Array> p(params[i].data, params[i].size());
    Eigen::Map<const Array> g(grads[i].data, grads[i].size());
    p -= lr * g;
  }
}

void LrSchedule::validate() const {
  if (stages.empty()) throw ConfigError("lr schedule: needs at least one stage");
  if (stages.front().first != 0) {
    throw ConfigError("lr schedule: the first stage must start at epoch 0, got " +
                      std::to_string(stages.front().first));
  }
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!(stages[i].second > 0.0) || !std::isfinite(stages[i].second)) {
      throw ConfigError("lr schedule: rates must be finite and positive");
    }
    if (i > 0 && stages[i].first <= stages[i - 1].first) {
      throw ConfigError("lr schedule: stage starts must be strictly increasing");
    }
  }
}

double lr_at(const LrSchedule& schedule, int epoch) {
  schedule.validate();
  if (epoch < 0) throw ConfigError("lr_at: epoch must be >= 0");
  double rate = schedule.stages.front().second;
  for (const auto& [start, r] : schedule.stages) {
    if (epoch >= start) rate = r;
  }
  return rate;
}

LrSchedule base_stage_schedule() { return LrSchedule{{{0, 2e-4}, {15, 2e-5}}}; }

LrSchedule contrastive_stage_schedule() { return LrSchedule{{{0, 2e-5}}}; }

}  // namespace cvse
