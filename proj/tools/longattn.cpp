// Command line front end: gen-data, pretrain, adapt, finetune, eval, bench, dump-mask.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "longattn/bench.hpp"
#include "longattn/errors.hpp"
#include "longattn/pipeline.hpp"

#ifndef LONGATTN_GIT_DESCRIBE
#define LONGATTN_GIT_DESCRIBE "unknown"
#endif

namespace fs = std::filesystem;
using namespace longattn;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitAcceptance = 4;

struct AcceptanceFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string from_run;
  std::string from;
  std::string data;
  std::string test_data;
  std::string pairs;
  std::optional<int> workers;
  std::vector<std::string> surgeries;
};

struct Run {
  std::string command;
  Json config;
  std::uint64_t seed = 0;
  Json inputs = Json::object();
  fs::path out;
};

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
}

std::string absolute_or_empty(const std::string& p) { return p.empty() ? p : fs::absolute(p).string(); }

Run resolve(const std::string& command, const Options& opt) {
  Run run;
  run.command = command;
  if (opt.out.empty()) throw ConfigError("--out is required");
  run.out = opt.out;
  if (!opt.from_run.empty()) {
    if (!opt.config_path.empty() || !opt.overrides.empty() || opt.seed || !opt.surgeries.empty()) {
      throw ConfigError("--from-run replays a recorded run; --config, --set, --seed and --surgery cannot be combined with it");
    }
    const Json rec = read_json(opt.from_run);
    if (rec.value("command", "") != command) {
      throw ConfigError("run.json records command '" + rec.value("command", "") + "', not '" + command + "'");
    }
    run.config = resolve_run_config(rec.at("config"));
    run.seed = rec.at("seed").get<std::uint64_t>();
    run.inputs = rec.value("inputs", Json::object());
    return run;
  }
  Json user = opt.config_path.empty() ? Json::object() : read_json(opt.config_path);
  run.config = resolve_run_config(user);
  for (const auto& kv : opt.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_override(run.config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!opt.surgeries.empty()) run.config["adapt"]["surgeries"] = opt.surgeries;
  run.config = resolve_run_config(run.config);
  if (opt.workers) run.config["eval"]["workers"] = *opt.workers;
  if (opt.seed) {
    run.seed = *opt.seed;
  } else if (const char* env = std::getenv("LONGATTN_SEED")) {
    try {
      run.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("LONGATTN_SEED is not an integer: '") + env + "'");
    }
  }
  for (auto [key, value] : {std::pair{"from", &opt.from}, {"data", &opt.data}, {"test_data", &opt.test_data},
                            {"pairs", &opt.pairs}}) {
    if (!value->empty()) run.inputs[key] = absolute_or_empty(*value);
  }
  return run;
}

void write_run_json(const Run& run) {
  fs::create_directories(run.out);
  Json rec;
  rec["command"] = run.command;
  rec["seed"] = run.seed;
  rec["git_describe"] = LONGATTN_GIT_DESCRIBE;
  rec["inputs"] = run.inputs;
  rec["config"] = run.config;
  write_text(run.out / "run.json", rec.dump(2) + "\n");
}

std::string input(const Run& run, const char* key) { return run.inputs.value(key, std::string()); }

Checkpoint require_checkpoint(const Run& run) {
  const auto from = input(run, "from");
  if (from.empty()) throw ConfigError(run.command + " needs --from <checkpoint dir>");
  if (!fs::is_directory(from)) throw CheckpointError("checkpoint directory not found: " + from);
  return load_checkpoint(from);
}

Corpus corpus_for(const Run& run, const char* key, bool test_split) {
  const auto path = input(run, key);
  if (!path.empty()) return read_corpus(path);
  return gen_corpus(corpus_spec_from(run.config, run.seed, test_split));
}

std::size_t model_output_len(const ModelConfig& cfg) { return cfg.max_output_len; }

// ---------------------------------------------------------------------------

void cmd_gen_data(const Run& run) {
  const auto train = gen_corpus(corpus_spec_from(run.config, run.seed, false));
  const auto test = gen_corpus(corpus_spec_from(run.config, run.seed, true));
  write_corpus(train, run.out / "train.jsonl");
  write_corpus(test, run.out / "test.jsonl");
  spdlog::info("wrote {} train and {} test documents to {}", train.size(), test.size(), run.out.string());
}

void cmd_pretrain(const Run& run) {
  const Json& c = run.config;
  ModelConfig cfg;
  ParamStore params;
  if (!input(run, "from").empty()) {
    const auto ckpt = require_checkpoint(run);
    cfg = ckpt.config;
    params = load_params(ckpt);
  } else {
    cfg = model_config_from_json(c.at("model"));
    params = init_params(cfg, run.seed);
  }
  Corpus corpus;
  if (!input(run, "data").empty()) {
    corpus = read_corpus(input(run, "data"));
  } else {
    auto spec = corpus_spec_from(c, run.seed, false);
    spec.kind = parse_task_kind(c.at("pretrain").at("corpus_kind").get<std::string>());
    spec.num_docs = c.at("pretrain").at("docs").get<std::size_t>();
    corpus = gen_corpus(spec);
  }
  const auto sched_spec = schedule_spec_from(c);
  const auto schedule = build_schedule(sched_spec);
  FitOptions fo;
  fo.lr = c.at("pretrain").at("lr").get<double>();
  fo.warmup_steps = c.at("pretrain").at("warmup_steps").get<std::size_t>();
  fo.clip_norm = c.at("train").at("clip_norm").get<double>();
  const auto reports = pretrain(cfg, params, corpus, schedule, fo, sched_spec.long_len,
                                c.at("pretrain").at("min_chars").get<std::size_t>(), run.seed,
                                [&](std::size_t i, const ParamStore& p) {
                                  save_checkpoint(make_checkpoint(cfg, p), run.out / ("phase" + std::to_string(i)));
                                });
  std::ostringstream csv;
  csv << "phase,input_len,output_len,mask_ratio,token_budget,steps,documents,final_loss\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    csv << i << ',' << r.phase.input_len << ',' << r.phase.output_len << ',' << r.phase.mask_ratio << ','
        << r.phase.token_budget << ',' << r.phase.steps << ',' << r.documents << ',' << r.final_loss << '\n';
  }
  write_text(run.out / "pretrain.csv", csv.str());
  save_checkpoint(make_checkpoint(cfg, params), run.out / "checkpoint");
}

void cmd_adapt(const Run& run) {
  const auto ckpt = require_checkpoint(run);
  const auto adapted = apply_surgeries(ckpt, run.config.at("adapt"), run.seed);
  save_checkpoint(adapted, run.out / "checkpoint");
  spdlog::info("adapted checkpoint: {} -> {} parameters", ckpt.num_elements(), adapted.num_elements());
}

void cmd_finetune(const Run& run) {
  const Json& c = run.config;
  ModelConfig cfg;
  ParamStore params;
  if (!input(run, "from").empty()) {
    const auto ckpt = require_checkpoint(run);
    cfg = ckpt.config;
    params = load_params(ckpt);
  } else {
    cfg = model_config_from_json(c.at("model"));
    params = init_params(cfg, run.seed);
  }
  const auto train = task_examples(corpus_for(run, "data", false), cfg.max_input_len, model_output_len(cfg));
  const auto test = task_examples(corpus_for(run, "test_data", true), cfg.max_input_len, model_output_len(cfg));
  std::ostringstream csv;
  csv << "step,loss,exact_match\n";
  const auto result = fit(cfg, params, train, test, fit_options_from(c), run.seed ^ 0x5eedULL, [&](const FitLogRow& r) {
    csv << r.step << ',' << r.loss << ',';
    if (r.exact_match >= 0) {
      csv << r.exact_match;
      spdlog::info("step {} loss {:.4f} exact match {:.3f}", r.step, r.loss, r.exact_match);
    }
    csv << '\n';
  });
  write_text(run.out / "loss.csv", csv.str());
  save_checkpoint(make_checkpoint(cfg, params), run.out / "checkpoint");
  Json metrics{{"final_exact_match", result.final_exact_match}, {"steps", result.log.size()}};
  write_text(run.out / "metrics.json", metrics.dump(2) + "\n");
  const double need = c.at("train").at("min_exact_match").get<double>();
  if (result.final_exact_match < need) {
    throw AcceptanceFailure("exact match " + std::to_string(result.final_exact_match) + " below required " +
                            std::to_string(need));
  }
}

void write_rouge(const Run& run, const std::vector<RougePair>& pairs, const Tokenizer* tok) {
  const bool lsum = run.config.at("eval").at("rg_uses_lsum").get<bool>();
  const auto report = corpus_report(pairs, kSepId, lsum);
  std::ostringstream csv;
  csv.precision(10);
  csv << "r1,r2,rl,rlsum,rg\n"
      << report.r1.f1 << ',' << report.r2.f1 << ',' << report.rl.f1 << ',' << report.rlsum.f1 << ',' << report.rg << '\n';
  write_text(run.out / "rouge.csv", csv.str());

  std::ostringstream ex;
  ex.precision(10);
  ex << "index,r1,r2,rl,rlsum,exact,candidate,reference\n";
  auto text = [&](const TokenSeq& s) {
    if (tok) return tok->decode(s);
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i]);
    return out;
  };
  std::size_t exact = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto s = score_pair(pairs[i], kSepId);
    const bool same = pairs[i].cand == pairs[i].ref;
    exact += same;
    ex << i << ',' << s.r1.f1 << ',' << s.r2.f1 << ',' << s.rl.f1 << ',' << s.rlsum.f1 << ',' << (same ? 1 : 0) << ','
       << text(pairs[i].cand) << ',' << text(pairs[i].ref) << '\n';
  }
  write_text(run.out / "rouge_examples.csv", ex.str());
  spdlog::info("rouge over {} examples: r1 {:.4f} r2 {:.4f} rl {:.4f} rlsum {:.4f} rg {:.4f}, exact {}/{}",
               pairs.size(), report.r1.f1, report.r2.f1, report.rl.f1, report.rlsum.f1, report.rg, exact,
               pairs.size());
}

void cmd_eval(const Run& run) {
  std::vector<RougePair> pairs;
  if (!input(run, "pairs").empty()) {
    std::ifstream in(input(run, "pairs"));
    if (!in) throw ConfigError("cannot read " + input(run, "pairs"));
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      try {
        const auto j = Json::parse(line);
        pairs.push_back({j.at("cand").get<TokenSeq>(), j.at("ref").get<TokenSeq>()});
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(input(run, "pairs") + ": " + e.what());
      }
    }
    write_rouge(run, pairs, nullptr);
    return;
  }
  const auto ckpt = require_checkpoint(run);
  const auto& cfg = ckpt.config;
  const auto params = load_params(ckpt);
  const auto test = task_examples(corpus_for(run, "test_data", true), cfg.max_input_len, 0);
  const auto outputs = decode_all(cfg, params, test, decode_options_from(run.config));
  for (std::size_t i = 0; i < test.size(); ++i) {
    TokenSeq ref = test[i].target;
    if (!ref.empty() && ref.back() == cfg.eos_id) ref.pop_back();
    pairs.push_back({outputs[i], std::move(ref)});
  }
  const Tokenizer tok(cfg.vocab_size);
  write_rouge(run, pairs, &tok);
}

void cmd_bench(const Run& run) {
  const Json& b = run.config.at("bench");
  ScalingGrid grid;
  for (const auto& v : b.at("variants").get<std::vector<std::string>>()) {
    AttentionSpec s;
    s.variant = parse_attention_variant(v);
    s.block_size = b.at("block_size").get<std::size_t>();
    s.num_global = b.at("num_global").get<std::size_t>();
    s.staggered = b.at("staggered").get<bool>();
    grid.specs.push_back(s);
  }
  grid.lengths = b.at("lengths").get<std::vector<std::size_t>>();
  grid.repeats = b.at("repeats").get<std::size_t>();
  grid.warmups = b.at("warmups").get<std::size_t>();
  grid.d_model = b.at("d_model").get<std::size_t>();
  grid.num_heads = b.at("num_heads").get<std::size_t>();
  grid.d_ff = b.at("d_ff").get<std::size_t>();
  grid.baseline = b.at("baseline").get<std::string>();
  grid.seed = run.seed;
  const auto rows = run_scaling(grid);
  std::ostringstream csv;
  write_scaling_csv(rows, csv);
  write_text(run.out / "scaling.csv", csv.str());
  std::cout << csv.str();
  const auto report = ordering_check(rows);
  for (const auto& v : report.violations) spdlog::error("ordering: {}", v);
  if (!report.pass) throw AcceptanceFailure("cost ordering check failed");
  spdlog::info("ordering check passed on {} groups", report.groups_checked);
}

void cmd_dump_mask(const Run& run) {
  const auto cfg = model_config_from_json(run.config.at("model"));
  const auto layer = run.config.at("mask").at("layer").get<std::size_t>();
  const auto len = run.config.at("mask").at("seq_len").get<std::size_t>();
  const auto mask = encoder_mask(cfg.attention_spec(), len, layer);
  std::ostringstream pbm;
  pbm << "P1\n" << mask.cols << ' ' << mask.rows << '\n';
  for (std::size_t i = 0; i < mask.rows; ++i) {
    for (std::size_t j = 0; j < mask.cols; ++j) pbm << (j ? " " : "") << (mask.at(i, j) ? 1 : 0);
    pbm << '\n';
  }
  const auto path = run.out / ("mask_layer" + std::to_string(layer) + "_L" + std::to_string(len) + ".pbm");
  write_text(path, pbm.str());
  spdlog::info("wrote {}", path.string());
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("longattn"));
  CLI::App app{"Long-input seq2seq experiments"};
  app.require_subcommand(1);
  Options opt;

  struct Command {
    const char* name;
    const char* help;
    void (*fn)(const Run&);
  };
  const Command commands[] = {
      {"gen-data", "write train/test JSONL corpora", cmd_gen_data},
      {"pretrain", "gap-sentence pretraining over a short/long schedule", cmd_pretrain},
      {"adapt", "apply a chain of checkpoint surgeries", cmd_adapt},
      {"finetune", "train on a task corpus", cmd_finetune},
      {"eval", "decode and score with ROUGE", cmd_eval},
      {"bench", "attention scaling benchmark", cmd_bench},
      {"dump-mask", "write an encoder attention mask as PBM", cmd_dump_mask},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& c : commands) {
    auto* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", opt.config_path, "JSON run config")->check(CLI::ExistingFile);
    sub->add_option("--set", opt.overrides, "dotted.key=value override (repeatable)");
    sub->add_option("--seed", opt.seed, "seed (default: $LONGATTN_SEED, else 0)");
    sub->add_option("--out", opt.out, "output directory")->required();
    sub->add_option("--from-run", opt.from_run, "replay the config, seed and inputs of a run.json")
        ->check(CLI::ExistingFile);
    if (std::string_view(c.name) != "gen-data" && std::string_view(c.name) != "bench" &&
        std::string_view(c.name) != "dump-mask") {
      sub->add_option("--from", opt.from, "input checkpoint directory");
    }
    if (std::string_view(c.name) == "pretrain" || std::string_view(c.name) == "finetune") {
      sub->add_option("--data", opt.data, "training corpus (JSONL)");
    }
    if (std::string_view(c.name) == "finetune" || std::string_view(c.name) == "eval") {
      sub->add_option("--test-data", opt.test_data, "held-out corpus (JSONL)");
    }
    if (std::string_view(c.name) == "adapt") {
      sub->add_option("--surgery", opt.surgeries, "surgery to apply, in order (repeatable; replaces adapt.surgeries)");
    }
    if (std::string_view(c.name) == "eval") {
      sub->add_option("--pairs", opt.pairs, "score {\"cand\", \"ref\"} JSONL pairs without a model");
      sub->add_option("--workers", opt.workers, "decode threads");
    }
    subs.emplace_back(sub, &c);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  for (const auto& [sub, cmd] : subs) {
    if (!sub->parsed()) continue;
    try {
      const Run run = resolve(cmd->name, opt);
      write_run_json(run);
      cmd->fn(run);
      return kExitOk;
    } catch (const ConfigError& e) {
      spdlog::error("config error: {}", e.what());
      return kExitConfig;
    } catch (const CheckpointError& e) {
      spdlog::error("checkpoint error: {}", e.what());
      return kExitConfig;
    } catch (const NumericError& e) {
      spdlog::error("numeric error: {}", e.what());
      return kExitNumeric;
    } catch (const AcceptanceFailure& e) {
      spdlog::error("acceptance failure: {}", e.what());
      return kExitAcceptance;
    } catch (const DimensionError& e) {
      spdlog::error("dimension error: {}", e.what());
      return kExitConfig;
    } catch (const std::exception& e) {
      spdlog::error("{}", e.what());
      return 1;
    }
  }
  return kExitConfig;
}
