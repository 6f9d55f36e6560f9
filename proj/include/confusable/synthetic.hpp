#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "confusable/corpus.hpp"

namespace confusable {

// Synthetic intent-classification benchmark with planted acoustic confusions.
// Content words are confusable with "rare" words whose sparse clean-text
// appearances belong to a different intent: substitution noise therefore
// injects misleading intent evidence that only the acoustic embedding axis
// can see through, while the rarity keeps the acoustic tie cheap on clean
// text.
struct SyntheticConfig {
  int intents = 5;
  int content_per_intent = 20;
  int shared_per_pair = 3;  // ambiguous words shared by neighboring intents
  int fillers = 40;
  int rare_per_intent = 5;  // confusable rare words, sparsely in clean text
  int train_n = 1000;
  int dev_n = 200;
  int test_n = 200;
  int min_len = 3;
  int max_len = 9;
  double content_prob = 0.7;
  double rare_prob = 0.2;           // chance a sentence carries a rare word
  double partner_posterior = 0.35;  // bin mass off the spoken word
  double flip_prob = 0.2;           // chance the partner tops the bin
  std::uint64_t seed = 7;
};

struct SyntheticDataset {
  std::vector<IntentRow> train, dev, test;
  std::string cnets_text;  // CNET-format networks over the train sentences
};

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& config);

// Writes train.tsv, dev.tsv, test.tsv and cnets.txt into the directory.
void write_synthetic_dataset(const SyntheticDataset& data, const std::string& dir);

}  // namespace confusable
