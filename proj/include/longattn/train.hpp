#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "longattn/model.hpp"

namespace longattn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 1.0;  // 0 disables clipping
  std::size_t warmup_steps = 0;
};

/// Adam with global-norm gradient clipping and linear warmup.
class Adam {
 public:
  Adam(const ParamStore& params, AdamConfig cfg);
  /// Updates `params` in place; returns the pre-clip gradient norm.
  double step(ParamStore& params, const Gradients& grads);
  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::unordered_map<std::string, std::vector<double>> m_, v_;
};

struct Example {
  std::vector<std::int64_t> input;
  std::vector<std::int64_t> target;
};

/// One optimizer step on the mean loss of `batch`; returns that loss.
double train_step(const ModelConfig& cfg, ParamStore& params, Adam& opt, std::span<const Example> batch, Rng& rng);

/// Mean loss without recording.
double eval_loss(const ModelConfig& cfg, const ParamStore& params, std::span<const Example> data);

/// Fraction of examples whose greedy output equals the target exactly.
double exact_match(const ModelConfig& cfg, const ParamStore& params, std::span<const Example> data);

}  // namespace longattn
