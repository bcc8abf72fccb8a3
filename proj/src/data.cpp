#include "longattn/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "longattn/errors.hpp"
#include "longattn/rng.hpp"

namespace longattn {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string content_word(std::uint64_t index) {
  static constexpr char kConsonants[] = "bdfgklmnprstvz";
  static constexpr char kVowels[] = "aeiou";
  constexpr std::uint64_t kSyllables = 14 * 5;
  std::string word;
  std::uint64_t n = index + 1;  // bijective base: every index gets a distinct word
  while (n > 0) {
    const std::uint64_t digit = (n - 1) % kSyllables;
    word.insert(word.begin(), kVowels[digit % 5]);
    word.insert(word.begin(), kConsonants[digit / 5]);
    n = (n - 1) / kSyllables;
  }
  return word;
}

std::int64_t draw(Rng& rng, std::int64_t lo, std::int64_t hi) {
  return lo + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(hi - lo)));
}

std::size_t draw_len(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng.below(hi - lo + 1));
}

const Tokenizer& tokenizer_for(std::size_t vocab_size) {
  thread_local std::size_t cached_size = 0;
  thread_local std::unique_ptr<Tokenizer> cached;
  if (!cached || cached_size != vocab_size) {
    cached = std::make_unique<Tokenizer>(vocab_size);
    cached_size = vocab_size;
  }
  return *cached;
}

std::size_t doc_chars(const SyntheticDoc& doc, const Tokenizer& tok) {
  std::size_t total = 0;
  for (const auto& s : doc.sentences) total += tok.surface_length(s);
  return total;
}

SyntheticDoc gen_needle(const CorpusSpec& spec, Rng& rng) {
  const std::size_t b = spec.block_size;
  const std::size_t half = b / 2;
  const std::size_t len = draw_len(rng, spec.min_len, spec.max_len);
  const std::size_t n = spec.num_candidates;

  std::vector<std::int64_t> ids(len, kFirstNeedleFillerId);

  // keys and values in a random order; the first pair is the needle
  std::vector<std::int64_t> keys(kNeedleKeys), values(kNeedleValues);
  std::iota(keys.begin(), keys.end(), kFirstKeyId);
  std::iota(values.begin(), values.end(), kFirstValueId);
  for (std::size_t i = 0; i < n; ++i) {
    std::swap(keys[i], keys[i + rng.below(keys.size() - i)]);
    std::swap(values[i], values[i + rng.below(values.size() - i)]);
  }

  // a key sits within half a block of a query position but in another
  // block; distractors are placed the same way around unmarked positions
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  const auto near_key = [&](std::size_t q) -> std::size_t {
    const std::size_t lo = q >= half ? q - half : 0;
    const std::size_t hi = std::min(len - 2, q + half);
    for (std::size_t attempt = 0; attempt < 4 * b; ++attempt) {
      const std::size_t key = lo + rng.below(hi - lo + 1);
      if (key / b != q / b && (key + 1) / b == key / b) return key;
    }
    return kNone;
  };
  std::size_t query = 0;
  std::vector<std::size_t> slots;
  for (bool placed = false; !placed;) {
    query = rng.below(len);
    const std::size_t key = near_key(query);
    if (key == kNone) continue;
    slots.assign(1, key);
    std::vector<std::size_t> used{query / b, key / b};
    for (std::size_t attempt = 0; slots.size() < n && attempt < 64 * n; ++attempt) {
      const std::size_t p = near_key(rng.below(len));
      if (p == kNone || std::find(used.begin(), used.end(), p / b) != used.end()) continue;
      used.push_back(p / b);
      slots.push_back(p);
    }
    placed = slots.size() == n;
  }

  ids[query] = kFirstQueryId + (keys[0] - kFirstKeyId);
  for (std::size_t c = 1; c < spec.query_copies;) {
    const std::size_t p = rng.below(len);
    const bool near_pair = std::any_of(slots.begin(), slots.end(), [&](std::size_t s) { return s / b == p / b; });
    if (near_pair || ids[p] != kFirstNeedleFillerId) continue;
    ids[p] = ids[query];
    ++c;
  }
  for (std::size_t i = 0; i < n; ++i) {
    ids[slots[i]] = keys[i];
    ids[slots[i] + 1] = values[i];
  }
  SyntheticDoc doc;
  doc.target = {ids[slots[0] + 1]};
  doc.sentences.push_back(std::move(ids));
  return doc;
}

SyntheticDoc gen_summ(const CorpusSpec& spec, Rng& rng) {
  const auto vocab = static_cast<std::int64_t>(spec.vocab_size);
  const std::size_t len = draw_len(rng, spec.min_len, spec.max_len);
  SyntheticDoc doc;
  std::size_t total = 0;
  while (total < len || doc.sentences.size() <= spec.summary_sentences) {
    std::vector<std::int64_t> s(draw_len(rng, 3, 8));
    for (auto& t : s) t = draw(rng, kFirstContentId, vocab);
    s.push_back(kSepId);
    total += s.size() + 1;
    doc.sentences.push_back(std::move(s));
  }
  std::vector<std::size_t> order(doc.sentences.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < spec.summary_sentences; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
  std::vector<std::size_t> flagged(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(spec.summary_sentences));
  std::sort(flagged.begin(), flagged.end());
  for (std::size_t i : flagged) {
    auto& s = doc.sentences[i];
    doc.target.insert(doc.target.end(), s.begin(), s.end());
    s.insert(s.begin(), kFlagId);
  }
  return doc;
}

}  // namespace

// ---------------------------------------------------------------------------

Tokenizer::Tokenizer(std::size_t vocab_size) {
  if (vocab_size <= static_cast<std::size_t>(kFirstContentId)) {
    throw ConfigError("tokenizer: vocab_size must exceed " + std::to_string(kFirstContentId));
  }
  words_ = {"<mask_sent>", "<pad>", "</s>", "<s>", ".", "<flag>"};
  for (std::size_t i = words_.size(); i < vocab_size; ++i) words_.push_back(content_word(i - kFirstContentId));
}

const std::string& Tokenizer::word(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= words_.size()) {
    throw ConfigError("tokenizer: id " + std::to_string(id) + " outside vocabulary");
  }
  return words_[static_cast<std::size_t>(id)];
}

std::int64_t Tokenizer::id(const std::string& word) const {
  const auto it = std::find(words_.begin(), words_.end(), word);
  if (it == words_.end()) throw ConfigError("tokenizer: unknown word '" + word + "'");
  return it - words_.begin();
}

std::vector<std::int64_t> Tokenizer::encode(const std::string& text) const {
  std::istringstream in(text);
  std::vector<std::int64_t> ids;
  for (std::string w; in >> w;) ids.push_back(id(w));
  return ids;
}

std::string Tokenizer::decode(std::span<const std::int64_t> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += word(ids[i]);
  }
  return out;
}

std::size_t Tokenizer::surface_length(std::span<const std::int64_t> ids) const {
  if (ids.empty()) return 0;
  std::size_t n = ids.size() - 1;
  for (auto id : ids) n += word(id).size();
  return n;
}

std::vector<std::int64_t> SyntheticDoc::flatten() const {
  std::vector<std::int64_t> out;
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::string to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::Needle: return "needle";
    case TaskKind::ExtractiveSumm: return "extractive-summ";
  }
  return "?";
}

TaskKind parse_task_kind(const std::string& name) {
  for (auto k : {TaskKind::Copy, TaskKind::Reverse, TaskKind::Needle, TaskKind::ExtractiveSumm}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown corpus kind '" + name + "'");
}

SyntheticDoc gen_document(const CorpusSpec& spec, std::uint64_t doc_seed) {
  if (spec.min_len == 0 || spec.min_len > spec.max_len) throw ConfigError("corpus: need 0 < min_len <= max_len");
  const auto& tok = tokenizer_for(spec.vocab_size);
  Rng rng(doc_seed);
  const auto vocab = static_cast<std::int64_t>(spec.vocab_size);
  SyntheticDoc doc;
  switch (spec.kind) {
    case TaskKind::Copy:
    case TaskKind::Reverse: {
      std::vector<std::int64_t> s(draw_len(rng, spec.min_len, spec.max_len));
      for (auto& t : s) t = draw(rng, kFirstContentId, vocab);
      doc.target = s;
      if (spec.kind == TaskKind::Reverse) std::reverse(doc.target.begin(), doc.target.end());
      doc.sentences.push_back(std::move(s));
      break;
    }
    case TaskKind::Needle:
      doc = gen_needle(spec, rng);
      break;
    case TaskKind::ExtractiveSumm:
      doc = gen_summ(spec, rng);
      break;
  }
  doc.source_seed = doc_seed;
  doc.char_length = doc_chars(doc, tok);
  return doc;
}

Corpus gen_corpus(const CorpusSpec& spec) {
  if (spec.kind == TaskKind::Needle) {
    if (spec.block_size < 4 || spec.block_size % 2 != 0) throw ConfigError("needle: block_size must be even and >= 4");
    if (spec.min_len < 2 * spec.block_size) throw ConfigError("needle: documents must span at least two blocks");
    if (spec.num_candidates == 0 || spec.num_candidates > static_cast<std::size_t>(std::min(kNeedleKeys, kNeedleValues)) ||
        spec.num_candidates + 1 > spec.min_len / spec.block_size) {
      throw ConfigError("needle: num_candidates needs one block each besides the query block, within the key set");
    }
    if (spec.vocab_size < static_cast<std::size_t>(kFirstNeedleFillerId) + 2) {
      throw ConfigError("needle: vocab_size must be at least " + std::to_string(kFirstNeedleFillerId + 2));
    }
  }
  if (spec.kind == TaskKind::ExtractiveSumm && spec.summary_sentences == 0) {
    throw ConfigError("extractive-summ: summary_sentences must be positive");
  }
  Corpus corpus;
  corpus.reserve(spec.num_docs);
  for (std::size_t i = 0; i < spec.num_docs; ++i) corpus.push_back(gen_document(spec, mix_seed(spec.seed, i)));
  return corpus;
}

NeedleSite locate_needle(const SyntheticDoc& doc) {
  const auto ids = doc.flatten();
  NeedleSite site;
  std::int64_t wanted = -1;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= kFirstQueryId && ids[i] < kFirstValueId) {
      site.query = i;
      wanted = kFirstKeyId + (ids[i] - kFirstQueryId);
    }
  }
  const auto it = std::find(ids.begin(), ids.end(), wanted);
  if (wanted < 0 || it == ids.end()) throw ConfigError("not a needle document");
  site.key = static_cast<std::size_t>(it - ids.begin());
  return site;
}

double scale_mask_ratio(double base_ratio, std::size_t base_len, std::size_t new_len) {
  if (!(base_ratio > 0.0) || base_len == 0 || new_len == 0) {
    throw ConfigError("scale_mask_ratio: need base_ratio > 0 and positive lengths");
  }
  const double ratio = base_ratio * static_cast<double>(base_len) / static_cast<double>(new_len);
  if (ratio >= 1.0) throw ConfigError("scale_mask_ratio: scaled ratio " + std::to_string(ratio) + " is >= 1");
  return ratio;
}

GsgExample gsg_mask(const SyntheticDoc& doc, double mask_ratio, std::uint64_t seed) {
  const std::size_t n = doc.sentences.size();
  if (n == 0) throw ConfigError("gsg_mask: document has no sentences");
  if (!(mask_ratio > 0.0) || mask_ratio > 1.0) throw ConfigError("gsg_mask: ratio must be in (0, 1]");
  const double want = mask_ratio * static_cast<double>(n);
  std::size_t k = static_cast<std::size_t>(std::ceil(want - 1e-9 * want));
  k = std::clamp<std::size_t>(k, 1, n);

  Rng rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < k; ++i) std::swap(order[i], order[i + rng.below(n - i)]);

  GsgExample ex;
  ex.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(ex.selected.begin(), ex.selected.end());
  std::size_t next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = doc.sentences[i];
    if (next < k && ex.selected[next] == i) {
      ex.input.push_back(kMaskSentId);
      ex.target.insert(ex.target.end(), s.begin(), s.end());
      ++next;
    } else {
      ex.input.insert(ex.input.end(), s.begin(), s.end());
    }
  }
  return ex;
}

Corpus filter_long(const Corpus& corpus, std::size_t min_chars) {
  Corpus out;
  std::copy_if(corpus.begin(), corpus.end(), std::back_inserter(out),
               [&](const SyntheticDoc& d) { return d.char_length > min_chars; });
  if (out.empty()) {
    spdlog::warn("filter_long: no document of {} is longer than {} characters", corpus.size(), min_chars);
  }
  return out;
}

std::string to_string(ScheduleShape shape) {
  switch (shape) {
    case ScheduleShape::S100: return "S100";
    case ScheduleShape::S75L25: return "S75L25";
    case ScheduleShape::S50L50: return "S50L50";
    case ScheduleShape::L100: return "L100";
  }
  return "?";
}

ScheduleShape parse_schedule_shape(const std::string& name) {
  for (auto s : {ScheduleShape::S100, ScheduleShape::S75L25, ScheduleShape::S50L50, ScheduleShape::L100}) {
    if (to_string(s) == name) return s;
  }
  throw ConfigError("unknown schedule shape '" + name + "'");
}

PretrainSchedule build_schedule(const ScheduleSpec& spec) {
  if (spec.short_len == 0 || spec.long_len == 0 || spec.batch_size == 0) {
    throw ConfigError("schedule: lengths and batch size must be positive");
  }
  const std::uint64_t unit = static_cast<std::uint64_t>(spec.batch_size) * std::lcm(spec.short_len, spec.long_len);
  if (spec.total_budget == 0 || spec.total_budget % unit != 0) {
    throw ConfigError("schedule: total_budget " + std::to_string(spec.total_budget) + " must be a positive multiple of " +
                      std::to_string(unit) + " (batch * lcm(short_len, long_len))");
  }
  // quarters of the budget spent on short inputs
  std::uint64_t short_quarters = 0;
  switch (spec.shape) {
    case ScheduleShape::S100: short_quarters = 4; break;
    case ScheduleShape::S75L25: short_quarters = 3; break;
    case ScheduleShape::S50L50: short_quarters = 2; break;
    case ScheduleShape::L100: short_quarters = 0; break;
  }

  PretrainSchedule schedule;
  schedule.total_budget = spec.total_budget;
  schedule.batch_size = spec.batch_size;
  auto add_phase = [&](std::size_t len, std::size_t out_len, std::uint64_t budget) {
    SchedulePhase p;
    p.input_len = len;
    p.output_len = out_len;
    p.mask_ratio = scale_mask_ratio(spec.base_mask_ratio, spec.short_len, len);
    p.token_budget = budget;
    p.steps = budget / (static_cast<std::uint64_t>(spec.batch_size) * len);
    schedule.phases.push_back(p);
  };
  if (short_quarters == 4) {
    add_phase(spec.short_len, spec.short_output_len, spec.total_budget);
  } else if (short_quarters == 0) {
    add_phase(spec.long_len, spec.long_output_len, spec.total_budget);
  } else {
    const std::uint64_t short_budget = spec.total_budget / unit * short_quarters / 4 * unit;
    add_phase(spec.short_len, spec.short_output_len, short_budget);
    add_phase(spec.long_len, spec.long_output_len, spec.total_budget - short_budget);
  }
  return schedule;
}

std::vector<Example> task_examples(const Corpus& corpus, std::size_t max_input, std::size_t max_output) {
  std::vector<Example> out;
  out.reserve(corpus.size());
  std::size_t truncated = 0;
  for (const auto& doc : corpus) {
    Example ex;
    ex.input = doc.flatten();
    if (max_input > 0 && ex.input.size() > max_input) ex.input.resize(max_input);
    ex.target = doc.target;
    ex.target.push_back(kEosId);
    if (max_output > 0 && ex.target.size() > max_output) {
      ex.target.resize(max_output);
      ++truncated;
    }
    out.push_back(std::move(ex));
  }
  if (truncated > 0) {
    spdlog::info("targets truncated to {} tokens: {}/{} ({:.1f}%)", max_output, truncated, corpus.size(),
                 100.0 * static_cast<double>(truncated) / static_cast<double>(corpus.size()));
  }
  return out;
}

std::vector<Example> gsg_examples(const Corpus& corpus, double mask_ratio, std::uint64_t seed, std::size_t max_input,
                                  std::size_t max_output) {
  std::vector<Example> out;
  out.reserve(corpus.size());
  std::size_t truncated = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto g = gsg_mask(corpus[i], mask_ratio, mix_seed(seed, i));
    Example ex{std::move(g.input), std::move(g.target)};
    if (max_input > 0 && ex.input.size() > max_input) ex.input.resize(max_input);
    ex.target.push_back(kEosId);
    if (max_output > 0 && ex.target.size() > max_output) {
      ex.target.resize(max_output);
      ++truncated;
    }
    out.push_back(std::move(ex));
  }
  if (truncated > 0) {
    spdlog::info("gsg targets truncated to {} tokens: {}/{} ({:.1f}%)", max_output, truncated, corpus.size(),
                 100.0 * static_cast<double>(truncated) / static_cast<double>(corpus.size()));
  }
  return out;
}

void write_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write corpus to " + path.string());
  for (const auto& doc : corpus) {
    nlohmann::ordered_json j;
    j["sentences"] = doc.sentences;
    j["chars"] = doc.char_length;
    if (!doc.target.empty()) j["target"] = doc.target;
    j["seed"] = doc.source_seed;
    out << j.dump() << '\n';
  }
}

Corpus read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read corpus " + path.string());
  Corpus corpus;
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SyntheticDoc doc;
      doc.sentences = j.at("sentences").get<std::vector<std::vector<std::int64_t>>>();
      doc.char_length = j.at("chars").get<std::size_t>();
      if (j.contains("target")) doc.target = j["target"].get<std::vector<std::int64_t>>();
      if (j.contains("seed")) doc.source_seed = j["seed"].get<std::uint64_t>();
      if (doc.sentences.empty()) throw ConfigError("document has no sentences");
      corpus.push_back(std::move(doc));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return corpus;
}

}  // namespace longattn
