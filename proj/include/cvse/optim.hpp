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

#ifndef CVSE_OPTIM_HPP_
#define CVSE_OPTIM_HPP_

#include <utility>
#include <vector>

#include "cvse/model.hpp"
#include "cvse/types.hpp"

namespace cvse {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// First/second moment estimates per parameter tensor, plus the shared step
// counter used for bias correction.
struct AdamState {
  AdamState() = default;
  AdamState(const std::vector<TensorRef>& params, AdamConfig config = {});

  AdamConfig config;
  std::vector<Array> m, v;
  long t = 0;
};

// One bias-corrected Adam update, in place. Parameter, gradient, and state
// tensors must line up one to one.
void adam_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
               AdamState& state, double lr);

// Plain gradient descent, for diagnostics.
void sgd_step(const std::vector<TensorRef>& params, const std::vector<TensorRef>& grads,
              double lr);

// Piecewise-constant learning rate: stages are (start_epoch, rate) with
// strictly increasing start epochs, the first at 0.
struct LrSchedule {
  std::vector<std::pair<int, double>> stages;

  void validate() const;
};

double lr_at(const LrSchedule& schedule, int epoch);

// Stock schedules: the base stage decays 2e-4 -> 2e-5 at epoch 15, the
// contrastive stage holds 2e-5 throughout.
LrSchedule base_stage_schedule();
LrSchedule contrastive_stage_schedule();

}  // namespace cvse

#endif  // CVSE_OPTIM_HPP_
