#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace confusable {

// Dense word index space. Ids are assigned by descending count, ties broken
// lexicographically; <unk> is always present and takes the last id.
class Vocabulary {
 public:
  static constexpr const char* kUnk = "<unk>";

  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences,
                          int min_count);
  static Vocabulary from_counts(const std::map<std::string, std::int64_t>& counts,
                                int min_count);
  // Preserves the given id order (e.g. rows of a loaded embedding file);
  // appends <unk> if absent.
  static Vocabulary from_ordered_words(const std::vector<std::string>& words);

  int id_of(const std::string& word) const {
    auto it = word_to_id_.find(word);
    return it == word_to_id_.end() ? unk_id_ : it->second;
  }
  bool contains(const std::string& word) const {
    return word_to_id_.count(word) > 0;
  }
  const std::string& word_of(int id) const { return words_.at(id); }
  std::int64_t count_of(int id) const { return counts_.at(id); }
  int size() const { return static_cast<int>(words_.size()); }
  int unk_id() const { return unk_id_; }
  int min_count() const { return min_count_; }
  const std::vector<std::int64_t>& counts() const { return counts_; }
  const std::vector<std::string>& words() const { return words_; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  std::vector<std::string> words_;
  std::vector<std::int64_t> counts_;
  std::unordered_map<std::string, int> word_to_id_;
  int unk_id_ = 0;
  int min_count_ = 1;
};

struct ConfusionBin {
  // (token id, posterior); sorted by descending posterior, ties by lower id.
  // Posteriors are normalized to sum to 1.
  std::vector<std::pair<int, double>> alternatives;
};

struct ConfusionNetwork {
  std::string utterance_id;
  std::vector<ConfusionBin> bins;
};

struct LabeledUtterance {
  std::vector<int> tokens;
  int intent = -1;
  std::string utterance_id;
};

struct LabelSet {
  std::vector<std::string> names;          // id -> name, train labels only
  std::map<std::string, int> name_to_id;   // train labels only
  // Labels seen only in dev/test map here and always count as errors.
  int unseen_id() const { return static_cast<int>(names.size()); }
  int id_of(const std::string& name) const {
    auto it = name_to_id.find(name);
    return it == name_to_id.end() ? unseen_id() : it->second;
  }
};

struct DatasetSplit {
  std::vector<LabeledUtterance> train, dev, test;
  LabelSet labels;
};

struct ParseOptions {
  // Replace all-digit tokens with a sentinel, mirroring the digit
  // preprocessing used by some reproduced baselines.
  bool digits_to_sentinel = false;
};

std::string normalize_token(const std::string& raw, const ParseOptions& opts = {});

// Plain corpus: one sentence per line, whitespace tokenized, lowercased.
std::vector<std::vector<std::string>> read_plain_corpus(const std::string& path,
                                                        const ParseOptions& opts = {});

// CNET format: one bin per line of `word:posterior` pairs, blank line ends an
// utterance, `#` starts a comment line.
std::vector<ConfusionNetwork> parse_confusion_networks(const std::string& path,
                                                       const Vocabulary& vocab,
                                                       const ParseOptions& opts = {});
std::vector<ConfusionNetwork> parse_confusion_networks_text(const std::string& text,
                                                            const Vocabulary& vocab,
                                                            const ParseOptions& opts = {});
std::string serialize_confusion_networks(const std::vector<ConfusionNetwork>& nets,
                                         const Vocabulary& vocab);

// Surfaces (lowercased) of every alternative across a CNET file, for
// vocabulary construction.
std::vector<std::vector<std::string>> read_cnet_surfaces(const std::string& path,
                                                         const ParseOptions& opts = {});

struct IntentRow {
  std::string label;                 // first label if multi-labeled
  std::vector<std::string> tokens;   // lowercased
};

// TSV: `label<TAB>space-separated tokens`; multi-labels joined with '+'
// reduce to the first label. `#` comment lines are skipped.
std::vector<IntentRow> parse_intent_rows(const std::string& path,
                                         const ParseOptions& opts = {});

std::vector<LabeledUtterance> intern_utterances(const std::vector<IntentRow>& rows,
                                                const Vocabulary& vocab,
                                                const LabelSet& labels,
                                                const std::string& id_prefix);

DatasetSplit make_split(const std::vector<IntentRow>& train,
                        const std::vector<IntentRow>& dev,
                        const std::vector<IntentRow>& test,
                        const Vocabulary& vocab);

// Highest-posterior alternative per bin, ties by lower token id.
std::vector<int> top_path(const ConfusionNetwork& cnet);

}  // namespace confusable
