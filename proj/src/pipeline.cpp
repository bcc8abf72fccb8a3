#include "longattn/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include <spdlog/spdlog.h>

#include "longattn/errors.hpp"

namespace longattn {

namespace {

template <typename T>
T get(const Json& doc, const char* section, const char* key) {
  try {
    return doc.at(section).at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config key '") + section + "." + key + "': " + e.what());
  }
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t salt) {
  Rng rng(seed ^ (0x9e3779b97f4a7c15ULL * (salt + 1)));
  return rng.next();
}

}  // namespace

FitResult fit(const ModelConfig& cfg, ParamStore& params, const std::vector<Example>& train,
              const std::vector<Example>& held_out, const FitOptions& opts, std::uint64_t seed,
              const std::function<void(const FitLogRow&)>& on_log) {
  if (train.empty()) throw ConfigError("fit: empty training set");
  if (opts.batch_size == 0) throw ConfigError("fit: batch_size must be positive");
  AdamConfig ac;
  ac.lr = opts.lr;
  ac.warmup_steps = opts.warmup_steps;
  ac.clip_norm = opts.clip_norm;
  Adam opt(params, ac);
  Rng rng(seed);
  const std::size_t n_eval = opts.eval_examples == 0 ? held_out.size() : std::min(opts.eval_examples, held_out.size());
  const std::span<const Example> eval_set(held_out.data(), n_eval);

  FitResult result;
  std::vector<Example> batch(opts.batch_size);
  for (std::size_t step = 1; step <= opts.steps; ++step) {
    for (auto& ex : batch) ex = train[rng.below(train.size())];
    FitLogRow row;
    row.step = step;
    row.loss = train_step(cfg, params, opt, batch, rng);
    const bool last = step == opts.steps;
    if (n_eval > 0 && ((opts.eval_every > 0 && step % opts.eval_every == 0) || last)) {
      row.exact_match = exact_match(cfg, params, eval_set);
    }
    if (last) result.final_exact_match = std::max(row.exact_match, 0.0);
    result.log.push_back(row);
    if (on_log) on_log(row);
  }
  return result;
}

std::vector<TokenSeq> decode_all(const ModelConfig& cfg, const ParamStore& params, const std::vector<Example>& data,
                                 const DecodeOptions& opts) {
  const std::size_t max_len = opts.max_len ? opts.max_len : cfg.max_output_len;
  std::vector<TokenSeq> out(data.size());
  const auto n = static_cast<std::ptrdiff_t>(data.size());
#pragma omp parallel for schedule(dynamic) num_threads(std::max(opts.workers, 1)) if (opts.workers > 1)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto& ex = data[static_cast<std::size_t>(i)];
    auto ids = opts.beam_size <= 1 ? greedy_decode(cfg, params, ex.input, max_len, cfg.eos_id)
                                   : beam_decode(cfg, params, ex.input, opts.beam_size, opts.alpha, max_len);
    if (!ids.empty() && ids.back() == cfg.eos_id) ids.pop_back();
    out[static_cast<std::size_t>(i)] = std::move(ids);
  }
  return out;
}

ModelConfig needle_model(AttentionVariant variant, bool staggered, std::size_t num_global) {
  ModelConfig cfg;
  cfg.vocab_size = 64;
  cfg.d_model = 32;
  cfg.num_heads = 4;
  cfg.d_ff = 64;
  cfg.enc_layers = 2;
  cfg.dec_layers = 1;
  cfg.cross_attn_layers = {0};
  cfg.max_input_len = 256;
  cfg.max_output_len = 4;
  cfg.posenc.scheme = PosScheme::Sinusoidal;
  cfg.attention.variant = variant;
  cfg.attention.block_size = 32;
  cfg.attention.staggered = staggered;
  cfg.attention.num_global = variant == AttentionVariant::GlobalLocal ? num_global : 0;
  cfg.validate();
  return cfg;
}

Json default_run_config() {
  Json doc;
  ModelConfig model = needle_model(AttentionVariant::BlockLocal, true);
  model.max_output_len = 32;
  doc["model"] = to_json(model);
  doc["data"] = {{"kind", "needle"},      {"train_docs", 20000},    {"test_docs", 200},
                 {"min_len", 256},        {"max_len", 256},        {"block_size", 32},
                 {"num_candidates", 4},   {"summary_sentences", 2}};
  doc["pretrain"] = {{"corpus_kind", "extractive-summ"},
                     {"docs", 2000},
                     {"shape", "S75L25"},
                     {"total_budget", 65536},
                     {"short_len", 64},
                     {"long_len", 256},
                     {"batch_size", 4},
                     {"short_output_len", 32},
                     {"long_output_len", 32},
                     {"base_mask_ratio", 0.45},
                     {"min_chars", 0},
                     {"lr", 1e-3},
                     {"warmup_steps", 10}};
  doc["adapt"] = {{"surgeries", Json::array({"global_local"})},
                  {"attention", {{"variant", "global_local"}, {"block_size", 32}, {"num_global", 8}, {"staggered", true}}},
                  {"new_max_len", 0},
                  {"keep_cross_layers", Json::array()}};
  doc["train"] = {{"steps", 3000},    {"batch_size", 8},     {"lr", 1e-3},
                  {"warmup_steps", 100}, {"clip_norm", 1.0}, {"eval_every", 250},
                  {"eval_examples", 100}, {"min_exact_match", 0.0}};
  doc["eval"] = {{"beam_size", 1}, {"alpha", 0.6}, {"max_len", 0}, {"rg_uses_lsum", false}, {"workers", 1}};
  doc["bench"] = {{"variants", Json::array({"block_local", "global_local", "full"})},
                  {"lengths", Json::array({256, 512, 1024})},
                  {"block_size", 64},
                  {"num_global", 32},
                  {"staggered", false},
                  {"repeats", 3},
                  {"warmups", 2},
                  {"d_model", 128},
                  {"num_heads", 4},
                  {"d_ff", 512},
                  {"baseline", "block_local"}};
  doc["mask"] = {{"layer", 0}, {"seq_len", 64}};
  return doc;
}

Json resolve_run_config(const Json& user) {
  Json doc = default_run_config();
  check_known_keys(user, doc);
  doc.merge_patch(user);
  // arrays are replaced wholesale by merge_patch; a model section is re-read
  // so that it is complete and validated
  doc["model"] = to_json(model_config_from_json(doc["model"]));
  return doc;
}

CorpusSpec corpus_spec_from(const Json& run, std::uint64_t seed, bool test_split) {
  CorpusSpec s;
  s.kind = parse_task_kind(get<std::string>(run, "data", "kind"));
  s.num_docs = get<std::size_t>(run, "data", test_split ? "test_docs" : "train_docs");
  s.min_len = get<std::size_t>(run, "data", "min_len");
  s.max_len = get<std::size_t>(run, "data", "max_len");
  s.vocab_size = get<std::size_t>(run, "model", "vocab_size");
  s.block_size = get<std::size_t>(run, "data", "block_size");
  s.num_candidates = get<std::size_t>(run, "data", "num_candidates");
  s.summary_sentences = get<std::size_t>(run, "data", "summary_sentences");
  s.seed = mix(seed, test_split ? 2 : 1);
  return s;
}

FitOptions fit_options_from(const Json& run) {
  FitOptions o;
  o.steps = get<std::size_t>(run, "train", "steps");
  o.batch_size = get<std::size_t>(run, "train", "batch_size");
  o.lr = get<double>(run, "train", "lr");
  o.warmup_steps = get<std::size_t>(run, "train", "warmup_steps");
  o.clip_norm = get<double>(run, "train", "clip_norm");
  o.eval_every = get<std::size_t>(run, "train", "eval_every");
  o.eval_examples = get<std::size_t>(run, "train", "eval_examples");
  return o;
}

DecodeOptions decode_options_from(const Json& run) {
  DecodeOptions o;
  o.beam_size = get<std::size_t>(run, "eval", "beam_size");
  o.alpha = get<double>(run, "eval", "alpha");
  o.max_len = get<std::size_t>(run, "eval", "max_len");
  o.workers = get<int>(run, "eval", "workers");
  return o;
}

ScheduleSpec schedule_spec_from(const Json& run) {
  ScheduleSpec s;
  s.shape = parse_schedule_shape(get<std::string>(run, "pretrain", "shape"));
  s.total_budget = get<std::uint64_t>(run, "pretrain", "total_budget");
  s.short_len = get<std::size_t>(run, "pretrain", "short_len");
  s.long_len = get<std::size_t>(run, "pretrain", "long_len");
  s.batch_size = get<std::size_t>(run, "pretrain", "batch_size");
  s.short_output_len = get<std::size_t>(run, "pretrain", "short_output_len");
  s.long_output_len = get<std::size_t>(run, "pretrain", "long_output_len");
  s.base_mask_ratio = get<double>(run, "pretrain", "base_mask_ratio");
  return s;
}

std::vector<PhaseReport> pretrain(const ModelConfig& cfg, ParamStore& params, const Corpus& corpus,
                                  const PretrainSchedule& schedule, const FitOptions& opts, std::size_t long_len,
                                  std::size_t min_chars, std::uint64_t seed,
                                  const std::function<void(std::size_t, const ParamStore&)>& on_phase) {
  std::vector<PhaseReport> reports;
  for (std::size_t i = 0; i < schedule.phases.size(); ++i) {
    const auto& phase = schedule.phases[i];
    if (phase.input_len > cfg.max_input_len) {
      throw ConfigError("pretrain phase input_len " + std::to_string(phase.input_len) + " exceeds model max_input_len " +
                        std::to_string(cfg.max_input_len));
    }
    PhaseReport rep;
    rep.phase = phase;
    const Corpus docs = phase.input_len == long_len ? filter_long(corpus, min_chars) : corpus;
    rep.documents = docs.size();
    if (phase.steps > 0) {
      if (docs.empty()) throw ConfigError("pretrain phase " + std::to_string(i) + " has no documents");
      const auto examples = gsg_examples(docs, phase.mask_ratio, mix(seed, 10 + i), phase.input_len, phase.output_len);
      FitOptions o = opts;
      o.steps = phase.steps;
      o.batch_size = schedule.batch_size;
      o.eval_every = 0;
      const auto result = fit(cfg, params, examples, {}, o, mix(seed, 20 + i));
      rep.final_loss = result.log.empty() ? 0.0 : result.log.back().loss;
      spdlog::info("pretrain phase {}: L={} ratio={} steps={} docs={} loss={:.4f}", i, phase.input_len,
                   phase.mask_ratio, phase.steps, docs.size(), rep.final_loss);
    }
    reports.push_back(rep);
    if (on_phase) on_phase(i, params);
  }
  return reports;
}

Checkpoint apply_surgeries(const Checkpoint& ckpt, const Json& adapt, std::uint64_t seed) {
  Checkpoint out = ckpt;
  const auto names = adapt.at("surgeries").get<std::vector<std::string>>();
  AttentionSpec spec;
  {
    Json probe = to_json(ckpt.config);
    probe["attention"] = adapt.at("attention");
    spec = model_config_from_json(probe).attention;
  }
  for (const auto& name : names) {
    if (name == "local") {
      out = port_to_local(out, spec);
    } else if (name == "global_local") {
      out = port_to_global_local(out, spec, seed);
    } else if (name == "replicate_positions") {
      out = replicate_positions(out, adapt.at("new_max_len").get<std::size_t>());
    } else if (name == "drop_cross") {
      out = drop_cross_attention(out, adapt.at("keep_cross_layers").get<std::vector<std::size_t>>());
    } else {
      throw ConfigError("unknown surgery '" + name + "'");
    }
  }
  return out;
}

}  // namespace longattn
