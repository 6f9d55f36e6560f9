#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "confusable/corpus.hpp"
#include "confusable/rng.hpp"

namespace confusable {

// Per-word substitution candidates with normalized weights; built from
// confusion-bin co-occurrence. No self-substitution entries.
struct ConfusionTable {
  std::vector<std::vector<std::pair<int, double>>> candidates;

  int size() const { return static_cast<int>(candidates.size()); }
};

ConfusionTable build_confusion_table(const std::vector<ConfusionNetwork>& cnets,
                                     int vocab_size);

void save_confusion_table(const ConfusionTable& table, const Vocabulary& vocab,
                          const std::string& path);
ConfusionTable load_confusion_table(const std::string& path, const Vocabulary& vocab);

enum class FallbackPolicy { Skip, UniformRandom };

struct NoiseConfig {
  double p_sub = 0.0;
  double p_del = 0.0;
  double p_ins = 0.0;
  std::uint64_t seed = 0;
  FallbackPolicy fallback = FallbackPolicy::Skip;
};

// Per token one event is drawn: substitute (candidate sampled by weight, or
// the fallback policy when the word has none), delete, insert (emit the token
// then a uniformly random vocabulary word), or keep.
std::vector<int> corrupt_utterance(const std::vector<int>& tokens,
                                   const NoiseConfig& config,
                                   const ConfusionTable& table, Rng& rng);

// Per-utterance corruption with an index-derived stream, so results do not
// depend on processing order.
std::vector<std::vector<int>> corrupt_corpus(const std::vector<std::vector<int>>& corpus,
                                             const NoiseConfig& config,
                                             const ConfusionTable& table);

// 100 * (S + D + I) / N via unit-cost Levenshtein alignment per utterance,
// summed over the corpus; N is the total reference token count.
double word_error_rate(const std::vector<std::vector<int>>& ref,
                       const std::vector<std::vector<int>>& hyp);

struct MixRatio {
  double sub = 70.0;
  double del = 20.0;
  double ins = 10.0;
};

// Bisection on a global intensity scalar, split into p_sub:p_del:p_ins by the
// mix ratio, until the measured corpus WER is within +-0.5 of the target.
NoiseConfig calibrate_to_wer(const std::vector<std::vector<int>>& corpus,
                             double target_wer, const ConfusionTable& table,
                             const MixRatio& mix, std::uint64_t seed,
                             FallbackPolicy fallback = FallbackPolicy::Skip);

// Corrupted dataset writer: corpus-module TSV with a `# wer=<measured>`
// header comment.
void write_corrupted_tsv(const std::vector<std::string>& labels,
                         const std::vector<std::vector<int>>& utterances,
                         const Vocabulary& vocab, double measured_wer,
                         const std::string& path);

}  // namespace confusable
