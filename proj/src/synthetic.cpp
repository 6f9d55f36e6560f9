#include "confusable/synthetic.hpp"

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "confusable/rng.hpp"

namespace confusable {

SyntheticDataset generate_synthetic_dataset(const SyntheticConfig& config) {
  // Pools that confuse within themselves need at least two members.
  if (config.intents < 2 || config.content_per_intent < 1 || config.fillers < 2 ||
      config.rare_per_intent < 2 || config.min_len < 1 ||
      config.max_len < config.min_len) {
    throw std::invalid_argument("invalid synthetic dataset config");
  }

  // Per-intent content word lists; neighboring intents share a few words so
  // the clean task is not perfectly separable.
  std::vector<std::vector<std::string>> content(config.intents);
  for (int k = 0; k < config.intents; ++k) {
    for (int i = 0; i < config.content_per_intent; ++i) {
      content[k].push_back("c" + std::to_string(k) + "w" + std::to_string(i));
    }
  }
  for (int k = 0; k < config.intents; ++k) {
    const int next = (k + 1) % config.intents;
    for (int i = 0; i < config.shared_per_pair && i < config.content_per_intent; ++i) {
      content[next].push_back(content[k][i]);
    }
  }
  std::vector<std::string> fillers;
  for (int i = 0; i < config.fillers; ++i) fillers.push_back("f" + std::to_string(i));
  std::vector<std::vector<std::string>> rare(config.intents);
  for (int k = 0; k < config.intents; ++k) {
    for (int i = 0; i < config.rare_per_intent; ++i) {
      rare[k].push_back("r" + std::to_string(k) + "w" + std::to_string(i));
    }
  }

  Rng rng(derive_seed(config.seed, "synthetic"));
  auto make_row = [&](int intent) {
    IntentRow row;
    row.label = "intent_" + std::to_string(intent);
    const int len = config.min_len +
                    static_cast<int>(rng.below(config.max_len - config.min_len + 1));
    const auto& words = content[intent];
    for (int t = 0; t < len; ++t) {
      // The first token is always a content word so no clean utterance is
      // entirely uninformative.
      if (t == 0 || rng.uniform() < config.content_prob) {
        row.tokens.push_back(words[rng.below(words.size())]);
      } else {
        row.tokens.push_back(fillers[rng.below(fillers.size())]);
      }
    }
    // A sparse sprinkle of this intent's rare words: enough to give them an
    // intent association in clean text, not enough to matter on clean CER.
    if (len >= 2 && rng.uniform() < config.rare_prob) {
      const auto& pool = rare[intent];
      row.tokens[1 + rng.below(len - 1)] = pool[rng.below(pool.size())];
    }
    return row;
  };
  auto make_rows = [&](int n) {
    std::vector<IntentRow> rows;
    rows.reserve(n);
    for (int i = 0; i < n; ++i) {
      rows.push_back(make_row(static_cast<int>(rng.below(config.intents))));
    }
    return rows;
  };

  SyntheticDataset data;
  data.train = make_rows(config.train_n);
  data.dev = make_rows(config.dev_n);
  data.test = make_rows(config.test_n);

  // One confusion network per train sentence. Each token's bin holds the
  // spoken word, its planted confusable partner, and a word-specific anchor
  // that appears only inside bins. A content word's partner is a rare word
  // from another intent — a real word carrying wrong intent evidence, like
  // "flight"/"fight" — and several same-intent content words share one rare
  // partner, so acoustic clusters stay intent-coherent. Fillers and rare
  // words are confusable within their own pools. The anchor is what ties a
  // word and its partner together acoustically: they never predict each
  // other's contexts directly, but both predict the anchor. With probability
  // flip_prob the recognizer "mishears": the partner takes the top posterior,
  // so top paths (and hence the semantic training axis) contain errors too.
  std::map<std::string, std::string> partner;
  for (int k = 0; k < config.intents; ++k) {
    const auto& pool = rare[(k + 2) % config.intents];
    for (int i = 0; i < config.content_per_intent; ++i) {
      partner["c" + std::to_string(k) + "w" + std::to_string(i)] =
          pool[i % config.rare_per_intent];
    }
  }
  for (int i = 0; i < config.fillers; ++i) {
    partner[fillers[i]] = fillers[(i + 1) % config.fillers];
  }
  for (int k = 0; k < config.intents; ++k) {
    for (int i = 0; i < config.rare_per_intent; ++i) {
      partner[rare[k][i]] = rare[k][(i + 1) % config.rare_per_intent];
    }
  }

  std::ostringstream cnets;
  const double keep = 1.0 - config.partner_posterior;
  const double partner_mass = config.partner_posterior * 2.0 / 3.0;
  const double anchor_mass = config.partner_posterior / 3.0;
  for (const auto& row : data.train) {
    for (const auto& tok : row.tokens) {
      const bool flipped = rng.uniform() < config.flip_prob;
      const double own_p = flipped ? partner_mass : keep;
      const double partner_p = flipped ? keep : partner_mass;
      cnets << tok << ':' << own_p << ' ' << partner.at(tok) << ':' << partner_p
            << ' ' << "anc_" + tok << ':' << anchor_mass << '\n';
    }
    cnets << '\n';
  }
  data.cnets_text = cnets.str();
  return data;
}

void write_synthetic_dataset(const SyntheticDataset& data, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write_tsv = [&](const std::vector<IntentRow>& rows, const std::string& name) {
    std::ofstream out(fs::path(dir) / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + name + " under " + dir);
    for (const auto& row : rows) {
      out << row.label << '\t';
      for (std::size_t t = 0; t < row.tokens.size(); ++t) {
        if (t) out << ' ';
        out << row.tokens[t];
      }
      out << '\n';
    }
  };
  write_tsv(data.train, "train.tsv");
  write_tsv(data.dev, "dev.tsv");
  write_tsv(data.test, "test.tsv");
  std::ofstream out(fs::path(dir) / "cnets.txt", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write cnets.txt under " + dir);
  out << data.cnets_text;
}

}  // namespace confusable
