#include "longattn/train.hpp"

#include <cmath>

#include "longattn/ops.hpp"

namespace longattn {

Adam::Adam(const ParamStore& params, AdamConfig cfg) : cfg_(cfg) {
  for (const auto& [name, t] : params) {
    m_[name].assign(t.size(), 0.0);
    v_[name].assign(t.size(), 0.0);
  }
}

double Adam::step(ParamStore& params, const Gradients& grads) {
  double sq = 0.0;
  std::vector<std::vector<double>> g;
  g.reserve(params.size());
  for (const auto& [name, t] : params) {
    g.push_back(grads.of(t));
    for (double x : g.back()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm)) throw NumericError("non-finite gradient norm");
  const double clip = (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) ? cfg_.clip_norm / norm : 1.0;
  ++t_;
  double lr = cfg_.lr;
  if (cfg_.warmup_steps > 0 && t_ < cfg_.warmup_steps) lr *= static_cast<double>(t_) / cfg_.warmup_steps;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    auto& m = m_.at(name);
    auto& v = v_.at(name);
    if (m.size() != t.size()) throw CheckpointError("optimizer state does not match parameter " + name);
    auto w = t.mutable_data();
    const auto& gk = g[k++];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = gk[i] * clip;
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      w[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.eps);
    }
  }
  return norm;
}

double train_step(const ModelConfig& cfg, ParamStore& params, Adam& opt, std::span<const Example> batch, Rng& rng) {
  if (batch.empty()) throw DimensionError("empty training batch");
  Gradients grads;
  double loss_value = 0.0;
  {
    Tape tape;
    TapeScope scope(tape);
    const ForwardOptions opts{true, &rng};
    Tensor total;
    for (const Example& ex : batch) {
      Tensor l = seq2seq_loss(cfg, params, ex.input, ex.target, opts);
      total = total.defined() ? add(total, l) : l;
    }
    const Tensor mean = scale(total, 1.0 / static_cast<double>(batch.size()));
    loss_value = mean.item();
    grads = backward(mean);
  }
  opt.step(params, grads);
  return loss_value;
}

double eval_loss(const ModelConfig& cfg, const ParamStore& params, std::span<const Example> data) {
  NoGradScope no_grad;
  double total = 0.0;
  for (const Example& ex : data) total += seq2seq_loss(cfg, params, ex.input, ex.target).item();
  return data.empty() ? 0.0 : total / static_cast<double>(data.size());
}

double exact_match(const ModelConfig& cfg, const ParamStore& params, std::span<const Example> data) {
  std::size_t hits = 0;
  for (const Example& ex : data) {
    hits += greedy_decode(cfg, params, ex.input, ex.target.size(), cfg.eos_id) == ex.target;
  }
  return data.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(data.size());
}

}  // namespace longattn
