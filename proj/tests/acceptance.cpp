// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "longattn/adapt.hpp"
#include "longattn/attention.hpp"
#include "longattn/data.hpp"
#include "longattn/pipeline.hpp"
#include "longattn/rouge.hpp"
#include "longattn/train.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace longattn;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::vector<std::int64_t> random_ids(Rng& rng, std::size_t n, std::size_t vocab) {
  std::vector<std::int64_t> ids(n);
  for (auto& id : ids) id = 4 + static_cast<std::int64_t>(rng.below(vocab - 4));
  return ids;
}

ModelConfig toy(AttentionVariant variant, PosScheme scheme, std::size_t d_model, std::size_t vocab) {
  ModelConfig cfg;
  cfg.vocab_size = vocab;
  cfg.d_model = d_model;
  cfg.num_heads = 2;
  cfg.d_ff = 2 * d_model;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.cross_attn_layers = {0, 1};
  cfg.max_input_len = 64;
  cfg.max_output_len = 8;
  cfg.attention.variant = variant;
  cfg.attention.block_size = 4;
  cfg.attention.num_global = variant == AttentionVariant::GlobalLocal ? 2 : 0;
  cfg.posenc.scheme = scheme;
  cfg.posenc.t5_num_buckets = 8;
  cfg.posenc.t5_max_distance = 16;
  return cfg;
}

// ---------------------------------------------------------------------------

Outcome equivalence() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t len = 1 + rng.below(64);
    auto full = toy(AttentionVariant::Full, PosScheme::Sinusoidal, 32, 64);
    auto local = full;
    local.attention.variant = AttentionVariant::BlockLocal;
    local.attention.block_size = len + rng.below(8);
    const auto params = init_params(full, seed);
    const auto in = random_ids(rng, len, 64), out = random_ids(rng, 6, 64);
    NoGradScope no_grad;
    const Tensor a = decoder_forward(full, params, out, encoder_forward(full, params, in));
    const Tensor b = decoder_forward(local, params, out, encoder_forward(local, params, in));
    worst = std::max(worst, oracle::max_abs_diff(a, b));
  }
  return {worst < 1e-8, "20 seeds, max |logit diff| " + fmt_double(worst) + " (tol 1e-8)"};
}

Outcome gradients() {
  double worst = 0.0;
  std::string where;
  std::size_t cells = 0;
  for (auto variant : {AttentionVariant::Full, AttentionVariant::BlockLocal, AttentionVariant::GlobalLocal}) {
    for (auto scheme : {PosScheme::None, PosScheme::Sinusoidal, PosScheme::LearnedAbsolute, PosScheme::RoPE,
                        PosScheme::T5Relative}) {
      auto cfg = toy(variant, scheme, 8, 16);
      cfg.d_ff = 12;
      cfg.attention.staggered = variant != AttentionVariant::Full;
      cfg.decoder_global_attn = variant == AttentionVariant::GlobalLocal;
      cfg.max_input_len = 10;
      cfg.max_output_len = 4;
      auto params = init_params(cfg, 27);
      Rng rng(28);
      const auto in = random_ids(rng, 10, cfg.vocab_size);
      const auto target = random_ids(rng, 4, cfg.vocab_size);
      const double err = oracle::model_grad_error(cfg, params, in, target);
      ++cells;
      if (err > worst) {
        worst = err;
        where = to_string(variant) + " x " + to_string(scheme);
      }
    }
  }
  return {worst < 1e-4, std::to_string(cells) + " cells, worst normwise rel error " + fmt_double(worst) + " at " + where +
                            " (tol 1e-4)"};
}

Outcome stagger_reach() {
  std::size_t pairs = 0, misses = 0;
  for (std::size_t b : {2u, 4u, 8u, 64u}) {
    const AttentionSpec spec{AttentionVariant::BlockLocal, b, 0, true};
    for (std::size_t len = 1; len <= 256; ++len) {
      const MaskMatrix even = encoder_mask(spec, len, 0);
      const MaskMatrix odd = encoder_mask(spec, len, 1);
      for (std::size_t i = 0; i + 1 < len; ++i) {
        ++pairs;
        const bool reach = (even.at(i, i + 1) && even.at(i + 1, i)) || (odd.at(i, i + 1) && odd.at(i + 1, i));
        misses += !reach;
      }
    }
  }
  return {misses == 0 && pairs > 0, std::to_string(pairs) + " adjacent pairs, " + std::to_string(misses) + " never co-attend"};
}

struct NeedleRun {
  std::string name;
  double exact_match = 0.0;
  double seconds = 0.0;
};

NeedleRun needle_run(const std::string& name, AttentionVariant variant, bool staggered) {
  const auto start = std::chrono::steady_clock::now();
  const ModelConfig cfg = needle_model(variant, staggered, 8);
  CorpusSpec spec;
  spec.kind = TaskKind::Needle;
  spec.num_docs = 20000;
  spec.min_len = spec.max_len = 256;
  spec.block_size = 32;
  spec.num_candidates = 4;
  spec.seed = 41;
  const auto train = task_examples(gen_corpus(spec), cfg.max_input_len, cfg.max_output_len);
  spec.num_docs = 200;
  spec.seed = 42;
  const auto test = task_examples(gen_corpus(spec), cfg.max_input_len, cfg.max_output_len);
  auto params = init_params(cfg, 7);
  FitOptions opts;
  opts.steps = 3000;
  opts.batch_size = 8;
  opts.lr = 1e-3;
  opts.warmup_steps = 100;
  const auto result = fit(cfg, params, train, test, opts, 3);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("    needle %-22s exact match %.3f  (%.0f s)\n", name.c_str(), result.final_exact_match, secs);
  std::fflush(stdout);
  return {name, result.final_exact_match, secs};
}

Outcome needle() {
  const double chance = 1.0 / 4.0;
  const auto plain = needle_run("block_local", AttentionVariant::BlockLocal, false);
  const auto stag = needle_run("block_local staggered", AttentionVariant::BlockLocal, true);
  const auto gl = needle_run("global_local g=8", AttentionVariant::GlobalLocal, false);
  const double total = plain.seconds + stag.seconds + gl.seconds;
  const bool pass = plain.exact_match <= chance + 0.10 && stag.exact_match >= 0.9 && gl.exact_match >= 0.9 && total < 1800;
  return {pass, "non-staggered " + fmt_double(plain.exact_match) + " (<= " + fmt_double(chance + 0.1) + "), staggered " +
                    fmt_double(stag.exact_match) + " and global-local " + fmt_double(gl.exact_match) +
                    " (>= 0.9), total " + std::to_string(static_cast<int>(total)) + " s (< 1800)"};
}

Outcome mask_ratio() {
  const double r = scale_mask_ratio(0.45, 512, 4096);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", r);
  return {r == 0.05625, std::string("scale_mask_ratio(0.45, 512, 4096) = ") + buf};
}

bool same_f32(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

Outcome surgery() {
  std::vector<std::string> failures;
  // global-local port
  {
    auto cfg = toy(AttentionVariant::BlockLocal, PosScheme::Sinusoidal, 32, 64);
    cfg.enc_layers = 3;
    const auto src = make_checkpoint(cfg, init_params(cfg, 5));
    const std::size_t g = 6;
    const auto gl = port_to_global_local(src, {AttentionVariant::GlobalLocal, 4, g, false}, 9);
    if (gl.num_elements() - src.num_elements() != g * cfg.d_model + cfg.enc_layers * 2 * cfg.d_model) {
      failures.push_back("global-local parameter delta");
    }
    const auto* embed = src.find("embed.tokens");
    const auto* globals = gl.find("encoder.globals");
    for (std::size_t r = 0; globals && r < g; ++r) {
      bool found = false;
      for (std::size_t v = 0; v < cfg.vocab_size && !found; ++v) {
        found = std::memcmp(globals->data.data() + r * cfg.d_model, embed->data.data() + v * cfg.d_model,
                            cfg.d_model * sizeof(float)) == 0;
      }
      if (!found) failures.push_back("global row " + std::to_string(r) + " is not a vocabulary row");
    }
    if (!globals) failures.push_back("no global embeddings");
  }
  // Cross[0,6]
  {
    auto cfg = toy(AttentionVariant::Full, PosScheme::Sinusoidal, 16, 32);
    cfg.dec_layers = 12;
    cfg.cross_attn_layers.clear();
    for (std::size_t i = 0; i < 12; ++i) cfg.cross_attn_layers.push_back(i);
    const auto dropped = drop_cross_attention(make_checkpoint(cfg, init_params(cfg, 6)), {0, 6});
    auto target = cfg;
    target.cross_attn_layers = {0, 6};
    if (dropped.num_elements() != count_params(target)) failures.push_back("Cross[0,6] parameter count");
  }
  // position replication
  {
    auto cfg = toy(AttentionVariant::Full, PosScheme::LearnedAbsolute, 16, 32);
    cfg.max_input_len = 16;
    const auto src = make_checkpoint(cfg, init_params(cfg, 8));
    const auto big = replicate_positions(src, 48);
    Rng rng(3);
    const auto in = random_ids(rng, 12, 32), out = random_ids(rng, 4, 32);
    NoGradScope no_grad;
    const auto p0 = load_params(src), p1 = load_params(big);
    const Tensor a = decoder_forward(src.config, p0, out, encoder_forward(src.config, p0, in));
    const Tensor b = decoder_forward(big.config, p1, out, encoder_forward(big.config, p1, in));
    bool same = a.size() == b.size();
    for (std::size_t i = 0; same && i < a.size(); ++i) same = a[i] == b[i];
    if (!same) failures.push_back("replicated positions change short-input logits");
    for (const auto& t : src.params) {
      if (t.name != "encoder.positions" && !same_f32(t.data, big.find(t.name)->data)) failures.push_back(t.name + " changed");
    }
  }
  std::string detail = failures.empty() ? "global delta, global rows, Cross[0,6] count, replicated logits" : "";
  for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  return {failures.empty(), detail};
}

AttentionCounters instrumented(const AttentionSpec& spec, std::size_t len, std::size_t layer, Rng& rng) {
  const std::size_t h = spec.num_heads, d = spec.head_dim;
  auto rnd = [&](Shape shape) {
    std::vector<double> v(numel(shape));
    for (auto& x : v) x = rng.normal();
    return Tensor(shape, std::move(v));
  };
  const Tensor q = rnd({h, len, d}), k = rnd({h, len, d}), v = rnd({h, len, d});
  NoGradScope no_grad;
  reset_attention_counters();
  if (spec.variant == AttentionVariant::Full) {
    full_attention(q, k, v);
  } else {
    const auto layout = make_block_layout(len, spec.block_size, layer, spec.staggered);
    if (spec.variant == AttentionVariant::BlockLocal) {
      block_local_attention(q, k, v, layout);
    } else {
      const std::size_t g = spec.num_global;
      global_local_core(q, k, v, rnd({h, g, d}), rnd({h, g, d}), rnd({h, g, d}), layout);
    }
  }
  return attention_counters();
}

Outcome cost_model() {
  Rng rng(71);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 10; ++trial) {
    AttentionSpec spec;
    spec.variant = static_cast<AttentionVariant>(trial % 3);
    spec.block_size = 2 * (1 + rng.below(16));
    spec.num_global = spec.variant == AttentionVariant::GlobalLocal ? 1 + rng.below(8) : 0;
    spec.staggered = spec.variant != AttentionVariant::Full && rng.below(2) == 1;
    spec.num_heads = 1 + rng.below(4);
    spec.head_dim = 1 + rng.below(16);
    const std::size_t len = 1 + rng.below(200);
    for (std::size_t layer : {0u, 1u}) {
      const auto counted = instrumented(spec, len, layer, rng);
      const auto model = attention_cost(spec, len, layer);
      mismatches += counted.macs != model.flops || counted.score_elements != model.score_mem_elems;
    }
  }
  const AttentionSpec full{AttentionVariant::Full, 64, 0, false, 4, 16};
  const AttentionSpec local{AttentionVariant::BlockLocal, 64, 0, false, 4, 16};
  bool laws = true;
  double full_growth = 0.0, local_growth = 0.0;
  for (std::size_t len : {256u, 512u, 1024u}) {
    full_growth = static_cast<double>(attention_cost(full, 2 * len).score_mem_elems) /
                  static_cast<double>(attention_cost(full, len).score_mem_elems);
    local_growth = static_cast<double>(attention_cost(local, 2 * len).score_mem_elems) /
                   static_cast<double>(attention_cost(local, len).score_mem_elems);
    laws = laws && full_growth == 4.0 && local_growth == 2.0;
  }
  return {mismatches == 0 && laws, "10 configs x 2 layers, " + std::to_string(mismatches) +
                                       " counter mismatches; per doubling full " + fmt_double(full_growth) +
                                       "x, block-local " + fmt_double(local_growth) + "x"};
}

Outcome rouge() {
  Rng rng(81);
  auto seq = [&](std::size_t max_len) {
    TokenSeq s(rng.below(max_len + 1));
    for (auto& t : s) t = static_cast<std::int64_t>(rng.below(5));
    return s;
  };
  std::size_t bad = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto c = seq(12), r = seq(12);
    for (std::size_t n : {1u, 2u}) {
      const auto s = rouge_n(c, r, static_cast<int>(n));
      const double hits = static_cast<double>(oracle::matching_overlap(c, r, n));
      const double cn = c.size() >= n ? static_cast<double>(c.size() - n + 1) : 0.0;
      const double rn = r.size() >= n ? static_cast<double>(r.size() - n + 1) : 0.0;
      const double p = cn > 0 && rn > 0 ? hits / cn : 0.0;
      const double rec = cn > 0 && rn > 0 ? hits / rn : 0.0;
      bad += s.precision != p || s.recall != rec;
    }
    const double lcs = static_cast<double>(oracle::brute_lcs(c, r));
    const auto l = rouge_l(c, r);
    if (!c.empty() && !r.empty()) {
      bad += l.precision != lcs / static_cast<double>(c.size()) || l.recall != lcs / static_cast<double>(r.size());
    } else {
      bad += l.f1 != 0.0;
    }
  }
  std::vector<RougePair> same;
  for (int i = 0; i < 20; ++i) {
    auto s = seq(12);
    s.insert(s.end(), {7, 8, kSepId});
    same.push_back({s, s});
  }
  const double rg = corpus_report(same, kSepId).rg;
  return {bad == 0 && rg == 1.0, "1000 pairs, " + std::to_string(bad) + " oracle mismatches; rg(equal) = " + fmt_double(rg)};
}

Outcome schedule() {
  ScheduleSpec spec;
  spec.shape = ScheduleShape::S50L50;
  spec.short_len = 512;
  spec.long_len = 8 * 512;
  spec.batch_size = 1;
  spec.total_budget = 2ull * 512 * 500000;
  const auto s = build_schedule(spec);
  const auto short_steps = s.phases.at(0).steps, long_steps = s.phases.at(1).steps;
  return {short_steps == 8 * long_steps, "short " + std::to_string(short_steps) + " steps, long " +
                                             std::to_string(long_steps) + " steps"};
}

// ---------------------------------------------------------------------------

struct Cli {
  fs::path exe;
  fs::path work;

  int run(const std::string& args, const std::string& log) const {
    const std::string cmd = exe.string() + " " + args + " >> " + (work / log).string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Outcome end_to_end(const fs::path& exe, const fs::path& work) {
  if (exe.empty() || !fs::exists(exe)) return {false, "command line tool not found: " + exe.string()};
  fs::remove_all(work);
  fs::create_directories(work);
  const Cli cli{exe, work};
  const auto w = [&](const char* d) { return (work / d).string(); };
  {
    Json cfg = default_run_config();
    cfg["model"]["max_output_len"] = 32;
    cfg["data"]["train_docs"] = 20000;
    cfg["pretrain"]["total_budget"] = 16384;
    cfg["train"]["eval_every"] = 500;
    cfg["train"]["min_exact_match"] = 0.9;
    std::ofstream(work / "config.json") << cfg.dump(2);
  }
  const std::string config = " --config " + (work / "config.json").string();
  struct Stage {
    const char* name;
    std::string args;
  };
  const std::vector<Stage> stages{
      {"gen-data", "gen-data" + config + " --seed 11 --out " + w("data")},
      {"pretrain", "pretrain" + config + " --seed 11 --out " + w("pretrain")},
      {"adapt", "adapt" + config + " --seed 7 --from " + w("pretrain/checkpoint") + " --out " + w("adapt")},
      {"finetune", "finetune" + config + " --seed 11 --from " + w("adapt/checkpoint") + " --data " +
                       w("data/train.jsonl") + " --test-data " + w("data/test.jsonl") + " --out " + w("finetune")},
      {"eval", "eval" + config + " --from " + w("finetune/checkpoint") + " --test-data " + w("data/test.jsonl") +
                   " --out " + w("eval")},
  };
  for (const auto& s : stages) {
    const int code = cli.run(s.args, "log.txt");
    std::printf("    %-9s exit %d\n", s.name, code);
    std::fflush(stdout);
    if (code != 0) return {false, std::string(s.name) + " exited with " + std::to_string(code) + " (see " + w("log.txt") + ")"};
  }
  const std::map<std::string, std::vector<std::string>> artifacts{
      {"data", {"train.jsonl", "test.jsonl"}},
      {"pretrain", {"pretrain.csv", "checkpoint/params.bin", "checkpoint/manifest.json", "checkpoint/config.json"}},
      {"adapt", {"checkpoint/params.bin", "checkpoint/manifest.json", "checkpoint/config.json"}},
      {"finetune", {"loss.csv", "metrics.json", "checkpoint/params.bin"}},
      {"eval", {"rouge.csv", "rouge_examples.csv"}},
  };
  const std::map<std::string, std::string> command{{"data", "gen-data"},   {"pretrain", "pretrain"}, {"adapt", "adapt"},
                                                   {"finetune", "finetune"}, {"eval", "eval"}};
  std::size_t compared = 0;
  for (const auto& [dir, files] : artifacts) {
    const std::string again = dir + "_rerun";
    const int code =
        cli.run(command.at(dir) + " --from-run " + (work / dir / "run.json").string() + " --out " + w(again.c_str()),
                "rerun_log.txt");
    if (code != 0) return {false, "rerun of " + dir + " exited with " + std::to_string(code)};
    for (const auto& f : files) {
      const auto a = slurp(work / dir / f), b = slurp(work / again / f);
      if (a.empty() || a != b) return {false, dir + "/" + f + " differs on rerun"};
      ++compared;
    }
  }
  const auto metrics = Json::parse(slurp(work / "finetune" / "metrics.json"));
  return {true, "5 stages exit 0, finetune exact match " + fmt_double(metrics.at("final_exact_match").get<double>()) +
                    ", " + std::to_string(compared) + " artifacts byte-identical on rerun"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string cli_path, work = (fs::temp_directory_path() / "longattn_acceptance").string();
  std::vector<int> only;
  app.add_option("--cli", cli_path, "path to the longattn command line tool");
  app.add_option("--work", work, "scratch directory for the end-to-end run");
  app.add_option("--only", only, "criteria to run (default: all)");
  CLI11_PARSE(app, argc, argv);
  spdlog::set_level(spdlog::level::warn);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"equivalence", equivalence},
      {"gradients", gradients},
      {"stagger reach", stagger_reach},
      {"needle cross-block", needle},
      {"mask ratio", mask_ratio},
      {"surgery", surgery},
      {"cost model", cost_model},
      {"rouge oracle", rouge},
      {"schedule arithmetic", schedule},
      {"end-to-end smoke", [&] { return end_to_end(cli_path, work); }},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.contains(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d %-20s %s  %s  [%.1f s]\n", id, criteria[i].first.c_str(), o.pass ? "PASS" : "FAIL",
                o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  std::printf("%d criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
