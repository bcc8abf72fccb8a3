#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "longattn/adapt.hpp"
#include "longattn/config.hpp"
#include "longattn/data.hpp"
#include "longattn/rouge.hpp"
#include "longattn/train.hpp"

namespace longattn {

struct FitOptions {
  std::size_t steps = 1000;
  std::size_t batch_size = 8;
  double lr = 3e-3;
  std::size_t warmup_steps = 100;
  double clip_norm = 1.0;
  std::size_t eval_every = 0;     // 0: evaluate only at the end
  std::size_t eval_examples = 0;  // 0: the whole held-out set
};

struct FitLogRow {
  std::size_t step = 0;
  double loss = 0.0;
  double exact_match = -1.0;  // -1 when not evaluated at this step
};

struct FitResult {
  std::vector<FitLogRow> log;
  double final_exact_match = 0.0;
};

/// Minibatches drawn uniformly with replacement from `train` by an Rng
/// seeded with `seed`; held-out exact match every eval_every steps and at
/// the end.
FitResult fit(const ModelConfig& cfg, ParamStore& params, const std::vector<Example>& train,
              const std::vector<Example>& held_out, const FitOptions& opts, std::uint64_t seed,
              const std::function<void(const FitLogRow&)>& on_log = {});

struct DecodeOptions {
  std::size_t beam_size = 1;
  double alpha = 0.6;
  std::size_t max_len = 0;  // 0: model max_output_len
  int workers = 1;
};

/// Decoded outputs without the trailing EOS. Results do not depend on
/// `workers`.
std::vector<TokenSeq> decode_all(const ModelConfig& cfg, const ParamStore& params, const std::vector<Example>& data,
                                 const DecodeOptions& opts);

/// The desk-scale cross-block retrieval setup: d_model 32, 4 heads, d_ff 64,
/// two encoder layers, one decoder layer with cross-attention, L = 256,
/// b = 32, sinusoidal positions.
ModelConfig needle_model(AttentionVariant variant, bool staggered, std::size_t num_global = 8);

// ---------------------------------------------------------------------------
// Run configuration shared by the command line and the end-to-end checks.

/// Default document with sections model, data, pretrain, adapt, train,
/// eval, bench and mask. Every key a run may set is present here.
Json default_run_config();

/// Applies defaults for missing keys and rejects unknown ones.
Json resolve_run_config(const Json& user);

CorpusSpec corpus_spec_from(const Json& run, std::uint64_t seed, bool test_split);
FitOptions fit_options_from(const Json& run);
DecodeOptions decode_options_from(const Json& run);
ScheduleSpec schedule_spec_from(const Json& run);

struct PhaseReport {
  SchedulePhase phase;
  std::size_t documents = 0;
  double final_loss = 0.0;
};

/// Gap-sentence pretraining over the schedule. Phases at `long_len` draw
/// only on documents longer than `min_chars`; `on_phase` sees the
/// parameters after each phase.
std::vector<PhaseReport> pretrain(const ModelConfig& cfg, ParamStore& params, const Corpus& corpus,
                                  const PretrainSchedule& schedule, const FitOptions& opts, std::size_t long_len,
                                  std::size_t min_chars, std::uint64_t seed,
                                  const std::function<void(std::size_t, const ParamStore&)>& on_phase = {});

/// Named surgeries in order: "local", "global_local", "replicate_positions",
/// "drop_cross". Attention settings come from adapt.attention.
Checkpoint apply_surgeries(const Checkpoint& ckpt, const Json& adapt_section, std::uint64_t seed);

}  // namespace longattn
