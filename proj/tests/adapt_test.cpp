#include "longattn/adapt.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <fstream>

#include "longattn/config.hpp"
#include "longattn/train.hpp"
#include "oracles.hpp"

using namespace longattn;
namespace fs = std::filesystem;

namespace {

ModelConfig base_config(PosScheme scheme = PosScheme::Sinusoidal) {
  ModelConfig cfg;
  cfg.vocab_size = 20;
  cfg.d_model = 8;
  cfg.num_heads = 2;
  cfg.d_ff = 16;
  cfg.enc_layers = 2;
  cfg.dec_layers = 2;
  cfg.cross_attn_layers = {0, 1};
  cfg.max_input_len = 16;
  cfg.max_output_len = 6;
  cfg.attention.variant = AttentionVariant::Full;
  cfg.posenc.scheme = scheme;
  return cfg;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("longattn_adapt_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Tensor logits_of(const ModelConfig& cfg, const ParamStore& params, std::span<const std::int64_t> in,
                 std::span<const std::int64_t> out) {
  NoGradScope ng;
  return decoder_forward(cfg, params, out, encoder_forward(cfg, params, in));
}

bool same_bits(const CheckpointTensor& a, const CheckpointTensor& b) {
  return a.shape == b.shape && a.data.size() == b.data.size() &&
         std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0;
}

Checkpoint fresh(const ModelConfig& cfg, std::uint64_t seed = 1) { return make_checkpoint(cfg, init_params(cfg, seed)); }

}  // namespace

TEST(Checkpoint, RoundTripIsByteExact) {
  const auto cfg = base_config(PosScheme::T5Relative);
  const Checkpoint ckpt = fresh(cfg);
  const auto d1 = scratch_dir("rt1"), d2 = scratch_dir("rt2");
  save_checkpoint(ckpt, d1);
  const Checkpoint loaded = load_checkpoint(d1);
  EXPECT_EQ(loaded.config, cfg);
  save_checkpoint(make_checkpoint(cfg, load_params(loaded)), d2);
  EXPECT_EQ(file_bytes(d1 / "params.bin"), file_bytes(d2 / "params.bin"));
  EXPECT_EQ(file_bytes(d1 / "manifest.json"), file_bytes(d2 / "manifest.json"));
  EXPECT_EQ(fs::file_size(d1 / "params.bin"), count_params(cfg) * 4);
}

TEST(Checkpoint, WrongWidthNamesParameter) {
  const Checkpoint ckpt = fresh(base_config());
  auto wide = base_config();
  wide.d_model = 16;
  try {
    load_params(ckpt, wide);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("embed.tokens"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, LayoutMismatchRejected) {
  auto cfg = base_config();
  cfg.attention = {AttentionVariant::BlockLocal, 4, 0, true};
  const Checkpoint ckpt = fresh(cfg);
  auto unstaggered = cfg;
  unstaggered.attention.staggered = false;
  EXPECT_THROW(load_params(ckpt, unstaggered), CheckpointError);
  EXPECT_NO_THROW(load_params(ckpt, cfg));
}

TEST(Checkpoint, VersionAndBlobChecks) {
  const auto dir = scratch_dir("bad");
  save_checkpoint(fresh(base_config()), dir);
  {
    std::ofstream(dir / "params.bin", std::ios::binary | std::ios::app) << "xx";
  }
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);
  save_checkpoint(fresh(base_config()), dir);
  Json manifest = Json::parse(std::ifstream(dir / "manifest.json"));
  manifest["format_version"] = 99;
  std::ofstream(dir / "manifest.json", std::ios::trunc) << manifest.dump();
  EXPECT_THROW(load_checkpoint(dir), CheckpointError);
  Checkpoint ckpt = fresh(base_config());
  ckpt.format_version = 2;
  EXPECT_THROW(load_params(ckpt), CheckpointError);
}

TEST(Checkpoint, HandBuiltManifest) {
  const auto dir = scratch_dir("hand");
  fs::create_directories(dir);
  const std::vector<float> a{1.5f, -2.0f}, b{0.25f, 3.0f, 4.0f, -1.0f, 8.0f, 0.0f}, c{7.0f};
  {
    std::ofstream out(dir / "params.bin", std::ios::binary);
    for (const auto* v : {&a, &b, &c})
      for (float x : *v) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, 4);
        for (int k = 0; k < 4; ++k) out.put(static_cast<char>((bits >> (8 * k)) & 0xff));
      }
  }
  std::ofstream(dir / "manifest.json") << R"({"format_version": 1, "params": {
      "alpha": {"shape": [2], "dtype": "float32", "offset": 0},
      "beta": {"shape": [2, 3], "dtype": "float32", "offset": 8},
      "gamma": {"shape": [1], "dtype": "float32", "offset": 32}}})";
  const auto tensors = read_tensors(dir);
  ASSERT_EQ(tensors.size(), 3u);
  EXPECT_EQ(tensors[0].name, "alpha");
  EXPECT_EQ(tensors[0].data, a);
  EXPECT_EQ(tensors[1].shape, (Shape{2, 3}));
  EXPECT_EQ(tensors[1].data, b);
  EXPECT_EQ(tensors[2].data, c);
}

TEST(Surgery, PortToLocalKeepsBytesAndLogits) {
  const auto cfg = base_config();
  const Checkpoint src = fresh(cfg, 3);
  const Checkpoint local = port_to_local(src, {AttentionVariant::BlockLocal, 16, 0, false});
  ASSERT_EQ(local.params.size(), src.params.size());
  for (std::size_t i = 0; i < src.params.size(); ++i) EXPECT_TRUE(same_bits(src.params[i], local.params[i]));
  const std::vector<std::int64_t> in{4, 9, 7, 11, 5, 6}, out{3, 8, 10};
  EXPECT_LT(oracle::max_abs_diff(logits_of(cfg, load_params(src), in, out),
                                 logits_of(local.config, load_params(local), in, out)),
            1e-8);
  EXPECT_THROW(port_to_local(src, {AttentionVariant::GlobalLocal, 4, 2, false}), ConfigError);
}

TEST(Surgery, PortToGlobalLocal) {
  const auto cfg = base_config();
  const Checkpoint src = fresh(cfg, 4);
  const AttentionSpec spec{AttentionVariant::GlobalLocal, 4, 3, false};
  const Checkpoint gl = port_to_global_local(src, spec, 11);
  EXPECT_EQ(gl.num_elements() - src.num_elements(), 3 * cfg.d_model + cfg.enc_layers * 2 * cfg.d_model);
  EXPECT_EQ(gl.num_elements(), count_params(gl.config));

  const auto* embed = src.find("embed.tokens");
  const auto* globals = gl.find("encoder.globals");
  ASSERT_TRUE(globals);
  for (std::size_t r = 0; r < 3; ++r) {
    bool found = false;
    for (std::size_t v = 0; v < cfg.vocab_size && !found; ++v) {
      found = std::memcmp(globals->data.data() + r * cfg.d_model, embed->data.data() + v * cfg.d_model,
                          cfg.d_model * sizeof(float)) == 0;
    }
    EXPECT_TRUE(found) << "global row " << r;
  }
  for (std::size_t i = 0; i < cfg.enc_layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i);
    for (const char* part : {".gain", ".bias"}) {
      const auto* g = gl.find(p + ".global_norm" + part);
      const auto* n = src.find(p + ".attn_norm" + part);
      ASSERT_TRUE(g && n);
      EXPECT_EQ(std::memcmp(g->data.data(), n->data.data(), g->data.size() * 4), 0);
    }
  }
  for (const auto& t : src.params) EXPECT_TRUE(same_bits(t, *gl.find(t.name))) << t.name;
  EXPECT_NO_THROW(load_params(gl));
  EXPECT_THROW(port_to_global_local(gl, spec, 1), ConfigError);
}

TEST(Surgery, GlobalSeedOnlyChangesGlobals) {
  const Checkpoint src = fresh(base_config(), 5);
  const AttentionSpec spec{AttentionVariant::GlobalLocal, 4, 6, false};
  const Checkpoint a = port_to_global_local(src, spec, 1);
  const Checkpoint b = port_to_global_local(src, spec, 2);
  const Checkpoint a2 = port_to_global_local(src, spec, 1);
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_TRUE(same_bits(a.params[i], a2.params[i]));
    if (a.params[i].name != "encoder.globals") {
      EXPECT_TRUE(same_bits(a.params[i], b.params[i]));
    }
  }
  EXPECT_FALSE(same_bits(*a.find("encoder.globals"), *b.find("encoder.globals")));
}

TEST(Surgery, ReplicatePositions) {
  auto cfg = base_config(PosScheme::LearnedAbsolute);
  const Checkpoint src = fresh(cfg, 6);
  const Checkpoint big = replicate_positions(src, 40);
  EXPECT_EQ(big.config.max_input_len, 40u);
  const auto* table = big.find("encoder.positions");
  ASSERT_EQ(table->shape, (Shape{40, cfg.d_model}));
  for (std::size_t p = 0; p + 16 < 40; ++p)
    for (std::size_t c = 0; c < cfg.d_model; ++c)
      ASSERT_EQ(table->data[p * cfg.d_model + c], table->data[(p + 16) * cfg.d_model + c]);

  const std::vector<std::int64_t> in{4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15}, out{3, 4};
  const Tensor before = logits_of(src.config, load_params(src), in, out);
  const Tensor after = logits_of(big.config, load_params(big), in, out);
  for (std::size_t i = 0; i < before.size(); ++i) ASSERT_EQ(before[i], after[i]);

  EXPECT_THROW(replicate_positions(src, 8), DimensionError);
  EXPECT_THROW(replicate_positions(fresh(base_config()), 40), ConfigError);
}

TEST(Surgery, DropCrossAttention) {
  auto cfg = base_config();
  cfg.dec_layers = 12;
  cfg.cross_attn_layers.resize(12);
  for (std::size_t i = 0; i < 12; ++i) cfg.cross_attn_layers[i] = i;
  const Checkpoint src = fresh(cfg, 7);

  const Checkpoint same = drop_cross_attention(src, cfg.cross_attn_layers);
  EXPECT_EQ(same.config, src.config);
  ASSERT_EQ(same.params.size(), src.params.size());
  for (std::size_t i = 0; i < src.params.size(); ++i) EXPECT_TRUE(same_bits(same.params[i], src.params[i]));

  const Checkpoint dropped = drop_cross_attention(src, {0, 6});
  auto target = cfg;
  target.cross_attn_layers = {0, 6};
  EXPECT_EQ(dropped.num_elements(), count_params(target));
  EXPECT_EQ(src.params.size() - dropped.params.size(), 10u * 6u);  // norm gain/bias + 4 projections
  for (const auto& t : dropped.params) EXPECT_TRUE(same_bits(t, *src.find(t.name))) << t.name;
  const ParamStore params = load_params(dropped);
  const std::vector<std::int64_t> in{4, 5, 6}, out{3, 7};
  EXPECT_NO_THROW(logits_of(dropped.config, params, in, out));

  EXPECT_THROW(drop_cross_attention(src, {}), ConfigError);
  EXPECT_THROW(drop_cross_attention(dropped, {1}), ConfigError);
}

TEST(Surgery, ReplicateAndDropCommute) {
  auto cfg = base_config(PosScheme::LearnedAbsolute);
  cfg.dec_layers = 3;
  cfg.cross_attn_layers = {0, 1, 2};
  const Checkpoint src = fresh(cfg, 8);
  const Checkpoint a = drop_cross_attention(replicate_positions(src, 32), {1});
  const Checkpoint b = replicate_positions(drop_cross_attention(src, {1}), 32);
  EXPECT_EQ(a.config, b.config);
  ASSERT_EQ(a.params.size(), b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    EXPECT_EQ(a.params[i].name, b.params[i].name);
    EXPECT_TRUE(same_bits(a.params[i], b.params[i]));
  }
}

TEST(Surgery, PortedLocalModelLearnsCopy) {
  ModelConfig cfg;
  cfg.vocab_size = 12;
  cfg.d_model = 16;
  cfg.num_heads = 2;
  cfg.d_ff = 32;
  cfg.enc_layers = 1;
  cfg.dec_layers = 1;
  cfg.cross_attn_layers = {0};
  cfg.max_input_len = 16;
  cfg.max_output_len = 8;
  const Checkpoint dense = fresh(cfg, 19);
  const Checkpoint local = port_to_local(dense, {AttentionVariant::BlockLocal, 4, 0, false});
  auto params = load_params(local);
  Adam opt(params, {.lr = 3e-3});
  Rng rng(20);
  auto sample = [&] {
    std::vector<std::int64_t> ids(5);
    for (auto& id : ids) id = 4 + static_cast<std::int64_t>(rng.below(8));
    auto target = ids;
    target.push_back(cfg.eos_id);
    return Example{ids, target};
  };
  for (int step = 0; step < 1200; ++step) {
    std::vector<Example> batch;
    for (int b = 0; b < 8; ++b) batch.push_back(sample());
    train_step(local.config, params, opt, batch, rng);
  }
  std::vector<Example> held_out;
  for (int i = 0; i < 100; ++i) held_out.push_back(sample());
  EXPECT_GT(exact_match(local.config, params, held_out), 0.9);
}
