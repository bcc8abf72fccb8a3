#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "longattn/train.hpp"

namespace longattn {

// Reserved ids shared by every corpus.
constexpr std::int64_t kMaskSentId = 0;
constexpr std::int64_t kPadId = 1;
constexpr std::int64_t kEosId = 2;
constexpr std::int64_t kBosId = 3;
constexpr std::int64_t kSepId = 4;   // "." closes every sentence of multi-sentence documents
constexpr std::int64_t kFlagId = 5;  // marks sentences an extractive summary must copy
constexpr std::int64_t kFirstContentId = 6;

// Needle vocabulary: query token k asks for the value written right after
// key k; values come from their own small set.
constexpr std::int64_t kNeedleKeys = 8;
constexpr std::int64_t kNeedleValues = 8;
constexpr std::int64_t kFirstKeyId = kFirstContentId;
constexpr std::int64_t kFirstQueryId = kFirstKeyId + kNeedleKeys;
constexpr std::int64_t kFirstValueId = kFirstQueryId + kNeedleKeys;
constexpr std::int64_t kFirstNeedleFillerId = kFirstValueId + kNeedleValues;

/// Word-level tokenizer over the closed synthetic vocabulary: reserved
/// symbols, then generated consonant-vowel words.
class Tokenizer {
 public:
  explicit Tokenizer(std::size_t vocab_size);
  std::size_t vocab_size() const { return words_.size(); }
  const std::string& word(std::int64_t id) const;
  /// Throws ConfigError for words outside the vocabulary.
  std::int64_t id(const std::string& word) const;
  std::vector<std::int64_t> encode(const std::string& text) const;
  std::string decode(std::span<const std::int64_t> ids) const;
  std::size_t surface_length(std::span<const std::int64_t> ids) const;

 private:
  std::vector<std::string> words_;
};

struct SyntheticDoc {
  std::vector<std::vector<std::int64_t>> sentences;
  std::vector<std::int64_t> target;  // task output without EOS; empty for pretraining text
  std::size_t char_length = 0;
  std::uint64_t source_seed = 0;

  /// Concatenated sentences.
  std::vector<std::int64_t> flatten() const;
};

using Corpus = std::vector<SyntheticDoc>;

enum class TaskKind { Copy, Reverse, Needle, ExtractiveSumm };
std::string to_string(TaskKind kind);
TaskKind parse_task_kind(const std::string& name);

struct CorpusSpec {
  TaskKind kind = TaskKind::Copy;
  std::size_t num_docs = 100;
  std::size_t min_len = 8;  // tokens per document (needle: exact sequence length range)
  std::size_t max_len = 8;
  std::size_t vocab_size = 64;
  std::uint64_t seed = 0;
  // needle
  std::size_t block_size = 32;
  std::size_t num_candidates = 4;
  std::size_t query_copies = 1;  // extra copies go to blocks holding no key
  // extractive-summ
  std::size_t summary_sentences = 2;
};

/// Deterministic per seed; document i draws from a stream derived from
/// (seed, i), so any shard can be regenerated independently.
///   copy / reverse: one sentence, target = itself / reversed.
///   needle: one query token and num_candidates (key, value) pairs with
///     distinct keys and distinct values, all pairs in one block and within
///     b/2 of the query, one key matching the query. Target = that key's
///     value. Query and key never share a block; they share one only when
///     boundaries move by b/2.
///   extractive-summ: sentences ending in "."; summary_sentences of them
///     start with the flag token. Target = flagged sentences without flags.
Corpus gen_corpus(const CorpusSpec& spec);

/// Single document generator behind gen_corpus.
SyntheticDoc gen_document(const CorpusSpec& spec, std::uint64_t doc_seed);

/// Query and matching-key positions of a needle document.
struct NeedleSite {
  std::size_t query = 0;
  std::size_t key = 0;
};
NeedleSite locate_needle(const SyntheticDoc& doc);

/// base_ratio * base_len / new_len; ConfigError if the result leaves (0, 1).
double scale_mask_ratio(double base_ratio, std::size_t base_len, std::size_t new_len);

struct GsgExample {
  std::vector<std::int64_t> input;
  std::vector<std::int64_t> target;
  std::vector<std::size_t> selected;  // sentence indices, ascending
};

/// Gap-sentence masking: ceil(ratio * n) sentences (at least one), chosen
/// uniformly without replacement, each replaced by one mask token; target =
/// the chosen sentences in document order.
GsgExample gsg_mask(const SyntheticDoc& doc, double mask_ratio, std::uint64_t seed);

/// Documents with char_length > min_chars, order kept. Logs a warning when
/// nothing survives.
Corpus filter_long(const Corpus& corpus, std::size_t min_chars);

enum class ScheduleShape { S100, S75L25, S50L50, L100 };
std::string to_string(ScheduleShape shape);
ScheduleShape parse_schedule_shape(const std::string& name);

struct SchedulePhase {
  std::size_t input_len = 0;
  std::size_t output_len = 0;
  double mask_ratio = 0.0;
  std::uint64_t token_budget = 0;
  std::uint64_t steps = 0;
};

struct PretrainSchedule {
  std::vector<SchedulePhase> phases;
  std::uint64_t total_budget = 0;
  std::size_t batch_size = 0;
};

struct ScheduleSpec {
  ScheduleShape shape = ScheduleShape::S100;
  std::uint64_t total_budget = 0;  // input tokens
  std::size_t short_len = 512;
  std::size_t long_len = 4096;
  std::size_t batch_size = 1;
  std::size_t short_output_len = 256;
  std::size_t long_output_len = 256;
  double base_mask_ratio = 0.45;  // at short_len
};

/// Splits the budget by shape. total_budget must be a multiple of
/// batch * lcm(short_len, long_len); earlier phases round down to that unit
/// and the final phase takes the remainder, so the budget is conserved
/// exactly.
PretrainSchedule build_schedule(const ScheduleSpec& spec);

/// Task documents as seq2seq examples: input = flattened document truncated
/// to max_input, target = doc target (+ EOS) truncated to max_output.
std::vector<Example> task_examples(const Corpus& corpus, std::size_t max_input, std::size_t max_output);

/// gsg_mask over every document (document i uses a seed derived from
/// (seed, i)), EOS appended, same truncation rules.
std::vector<Example> gsg_examples(const Corpus& corpus, double mask_ratio, std::uint64_t seed, std::size_t max_input,
                                  std::size_t max_output);

/// JSON lines: {"sentences": [[...], ...], "chars": n, "target": [...], "seed": s}
void write_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus read_corpus(const std::filesystem::path& path);

}  // namespace longattn
