#include "confusable/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace confusable {

namespace {

std::string lowercase(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isdigit(c) != 0; });
}

std::vector<std::string> split_whitespace(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream iss(line);
  std::string tok;
  while (iss >> tok) out.push_back(tok);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::string normalize_token(const std::string& raw, const ParseOptions& opts) {
  std::string t = lowercase(raw);
  if (opts.digits_to_sentinel && all_digits(t)) return "<num>";
  return t;
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences,
                             int min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::map<std::string, std::int64_t> counts;
  bool any = false;
  for (const auto& sent : sentences) {
    for (const auto& w : sent) {
      if (w.empty()) continue;
      ++counts[w];
      any = true;
    }
  }
  if (!any) throw std::runtime_error("empty corpus");
  return from_counts(counts, min_count);
}

Vocabulary Vocabulary::from_counts(const std::map<std::string, std::int64_t>& counts,
                                   int min_count) {
  if (min_count < 1) throw std::invalid_argument("min_count must be >= 1");
  std::vector<std::pair<std::string, std::int64_t>> retained;
  std::int64_t dropped = 0;
  for (const auto& [word, count] : counts) {
    if (word == kUnk) continue;
    if (count >= min_count) {
      retained.emplace_back(word, count);
    } else {
      dropped += count;
    }
  }
  std::sort(retained.begin(), retained.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.min_count_ = min_count;
  for (const auto& [word, count] : retained) {
    v.word_to_id_[word] = static_cast<int>(v.words_.size());
    v.words_.push_back(word);
    v.counts_.push_back(count);
  }
  v.unk_id_ = static_cast<int>(v.words_.size());
  auto unk_given = counts.find(kUnk);
  std::int64_t unk_count = dropped + (unk_given == counts.end() ? 0 : unk_given->second);
  v.word_to_id_[kUnk] = v.unk_id_;
  v.words_.push_back(kUnk);
  v.counts_.push_back(unk_count);
  return v;
}

Vocabulary Vocabulary::from_ordered_words(const std::vector<std::string>& words) {
  Vocabulary v;
  v.unk_id_ = -1;
  for (const auto& w : words) {
    if (v.word_to_id_.count(w)) {
      throw std::runtime_error("duplicate word in ordered vocabulary: " + w);
    }
    if (w == kUnk) v.unk_id_ = static_cast<int>(v.words_.size());
    v.word_to_id_[w] = static_cast<int>(v.words_.size());
    v.words_.push_back(w);
    v.counts_.push_back(0);
  }
  if (v.unk_id_ < 0) {
    v.unk_id_ = static_cast<int>(v.words_.size());
    v.word_to_id_[kUnk] = v.unk_id_;
    v.words_.push_back(kUnk);
    v.counts_.push_back(0);
  }
  return v;
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (int i = 0; i < size(); ++i) {
    out << words_[i] << '\t' << counts_[i] << '\n';
  }
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  Vocabulary v;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                               ": expected `word<TAB>count`");
    }
    std::string word = line.substr(0, tab);
    std::int64_t count = std::stoll(line.substr(tab + 1));
    if (word == kUnk) v.unk_id_ = static_cast<int>(v.words_.size());
    v.word_to_id_[word] = static_cast<int>(v.words_.size());
    v.words_.push_back(word);
    v.counts_.push_back(count);
  }
  if (v.words_.empty() || v.words_[v.unk_id_] != kUnk) {
    throw std::runtime_error(path + ": vocabulary file lacks " + std::string(kUnk));
  }
  return v;
}

std::vector<std::vector<std::string>> read_plain_corpus(const std::string& path,
                                                        const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::vector<std::string>> sentences;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = split_whitespace(line);
    if (toks.empty()) continue;
    std::vector<std::string> norm;
    norm.reserve(toks.size());
    for (const auto& t : toks) norm.push_back(normalize_token(t, opts));
    sentences.push_back(std::move(norm));
  }
  return sentences;
}

namespace {

struct RawBin {
  std::vector<std::pair<std::string, double>> alts;
};

// Shared CNET line scanner; invokes sink per utterance of raw bins.
template <typename Sink>
void scan_cnet_text(const std::string& text, const ParseOptions& opts, Sink&& sink) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  std::vector<RawBin> current;
  int utterance_index = 0;
  auto flush = [&] {
    if (!current.empty()) {
      sink(utterance_index++, current);
      current.clear();
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty() && line[0] == '#') continue;
    auto toks = split_whitespace(line);
    if (toks.empty()) {
      flush();
      continue;
    }
    RawBin bin;
    for (const auto& tok : toks) {
      auto colon = tok.rfind(':');
      if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size()) {
        throw std::runtime_error("line " + std::to_string(lineno) +
                                 ": malformed pair `" + tok + "` (want word:posterior)");
      }
      std::string word = normalize_token(tok.substr(0, colon), opts);
      double posterior;
      try {
        std::size_t used = 0;
        posterior = std::stod(tok.substr(colon + 1), &used);
        if (used != tok.size() - colon - 1) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(lineno) +
                                 ": malformed posterior in `" + tok + "`");
      }
      if (!(posterior > 0.0)) {
        throw std::runtime_error("line " + std::to_string(lineno) +
                                 ": non-positive posterior in `" + tok + "`");
      }
      bin.alts.emplace_back(std::move(word), posterior);
    }
    if (bin.alts.size() >= 2) {
      auto sorted = bin.alts;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i].first == sorted[i - 1].first) {
          throw std::runtime_error("line " + std::to_string(lineno) +
                                   ": duplicate alternative `" + sorted[i].first + "`");
        }
      }
    }
    current.push_back(std::move(bin));
  }
  flush();
}

}  // namespace

std::vector<ConfusionNetwork> parse_confusion_networks_text(const std::string& text,
                                                            const Vocabulary& vocab,
                                                            const ParseOptions& opts) {
  std::vector<ConfusionNetwork> nets;
  scan_cnet_text(text, opts, [&](int index, const std::vector<RawBin>& raw_bins) {
    ConfusionNetwork net;
    net.utterance_id = "utt-" + std::to_string(index);
    for (const auto& raw : raw_bins) {
      ConfusionBin bin;
      // OOV surfaces map to <unk>; merge any resulting duplicate ids.
      std::map<int, double> merged;
      double total = 0.0;
      for (const auto& [word, posterior] : raw.alts) {
        merged[vocab.id_of(word)] += posterior;
        total += posterior;
      }
      for (const auto& [id, p] : merged) bin.alternatives.emplace_back(id, p / total);
      std::sort(bin.alternatives.begin(), bin.alternatives.end(),
                [](const auto& a, const auto& b) {
                  if (a.second != b.second) return a.second > b.second;
                  return a.first < b.first;
                });
      net.bins.push_back(std::move(bin));
    }
    nets.push_back(std::move(net));
  });
  return nets;
}

std::vector<ConfusionNetwork> parse_confusion_networks(const std::string& path,
                                                       const Vocabulary& vocab,
                                                       const ParseOptions& opts) {
  try {
    return parse_confusion_networks_text(read_file(path), vocab, opts);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
}

std::vector<std::vector<std::string>> read_cnet_surfaces(const std::string& path,
                                                         const ParseOptions& opts) {
  std::vector<std::vector<std::string>> out;
  scan_cnet_text(read_file(path), opts, [&](int, const std::vector<RawBin>& raw_bins) {
    std::vector<std::string> words;
    for (const auto& bin : raw_bins) {
      for (const auto& [word, posterior] : bin.alts) words.push_back(word);
    }
    out.push_back(std::move(words));
  });
  return out;
}

std::string serialize_confusion_networks(const std::vector<ConfusionNetwork>& nets,
                                         const Vocabulary& vocab) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& net : nets) {
    for (const auto& bin : net.bins) {
      bool first = true;
      for (const auto& [id, posterior] : bin.alternatives) {
        if (!first) out << ' ';
        out << vocab.word_of(id) << ':' << posterior;
        first = false;
      }
      out << '\n';
    }
    out << '\n';
  }
  return out.str();
}

std::vector<IntentRow> parse_intent_rows(const std::string& path,
                                         const ParseOptions& opts) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<IntentRow> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                               ": missing tab separator");
    }
    IntentRow row;
    std::string label = lowercase(line.substr(0, tab));
    // Multi-label rows keep the top (first) intent.
    auto plus = label.find('+');
    row.label = plus == std::string::npos ? label : label.substr(0, plus);
    if (row.label.empty()) {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) + ": empty label");
    }
    for (const auto& t : split_whitespace(line.substr(tab + 1))) {
      row.tokens.push_back(normalize_token(t, opts));
    }
    if (row.tokens.empty()) {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                               ": empty utterance");
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<LabeledUtterance> intern_utterances(const std::vector<IntentRow>& rows,
                                                const Vocabulary& vocab,
                                                const LabelSet& labels,
                                                const std::string& id_prefix) {
  std::vector<LabeledUtterance> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    LabeledUtterance u;
    u.utterance_id = id_prefix + std::to_string(i);
    u.intent = labels.id_of(rows[i].label);
    for (const auto& t : rows[i].tokens) u.tokens.push_back(vocab.id_of(t));
    out.push_back(std::move(u));
  }
  return out;
}

DatasetSplit make_split(const std::vector<IntentRow>& train,
                        const std::vector<IntentRow>& dev,
                        const std::vector<IntentRow>& test,
                        const Vocabulary& vocab) {
  if (train.empty()) throw std::runtime_error("empty train split");
  DatasetSplit split;
  for (const auto& row : train) {
    if (!split.labels.name_to_id.count(row.label)) {
      split.labels.name_to_id[row.label] = static_cast<int>(split.labels.names.size());
      split.labels.names.push_back(row.label);
    }
  }
  split.train = intern_utterances(train, vocab, split.labels, "train-");
  split.dev = intern_utterances(dev, vocab, split.labels, "dev-");
  split.test = intern_utterances(test, vocab, split.labels, "test-");
  return split;
}

std::vector<int> top_path(const ConfusionNetwork& cnet) {
  if (cnet.bins.empty()) throw std::runtime_error("confusion network has no bins");
  std::vector<int> path;
  path.reserve(cnet.bins.size());
  for (const auto& bin : cnet.bins) {
    if (bin.alternatives.empty()) throw std::runtime_error("empty confusion bin");
    // Alternatives are sorted by descending posterior with ties by lower id,
    // so the top path is simply the first entry of each bin.
    path.push_back(bin.alternatives.front().first);
  }
  return path;
}

}  // namespace confusable
