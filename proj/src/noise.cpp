#include "confusable/noise.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "confusable/log.hpp"

namespace confusable {

ConfusionTable build_confusion_table(const std::vector<ConfusionNetwork>& cnets,
                                     int vocab_size) {
  if (cnets.empty()) throw std::runtime_error("empty confusion network list");
  std::vector<std::map<int, double>> acc(vocab_size);
  for (const auto& net : cnets) {
    for (const auto& bin : net.bins) {
      const auto& alts = bin.alternatives;
      if (alts.size() < 2) continue;
      for (const auto& [u, pu] : alts) {
        for (const auto& [v, pv] : alts) {
          if (u == v) continue;
          acc[u][v] += pv;
        }
      }
    }
  }
  ConfusionTable table;
  table.candidates.resize(vocab_size);
  for (int w = 0; w < vocab_size; ++w) {
    double total = 0.0;
    for (const auto& [cand, weight] : acc[w]) total += weight;
    if (total <= 0.0) continue;
    auto& out = table.candidates[w];
    out.reserve(acc[w].size());
    for (const auto& [cand, weight] : acc[w]) out.emplace_back(cand, weight / total);
    // Descending weight, ties by lower id, for reproducible serialization.
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
  }
  return table;
}

void save_confusion_table(const ConfusionTable& table, const Vocabulary& vocab,
                          const std::string& path) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (int w = 0; w < table.size(); ++w) {
    if (table.candidates[w].empty()) continue;
    nlohmann::ordered_json list = nlohmann::ordered_json::array();
    for (const auto& [cand, weight] : table.candidates[w]) {
      list.push_back({vocab.word_of(cand), weight});
    }
    j[vocab.word_of(w)] = std::move(list);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

ConfusionTable load_confusion_table(const std::string& path, const Vocabulary& vocab) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  nlohmann::json j;
  in >> j;
  ConfusionTable table;
  table.candidates.resize(vocab.size());
  for (const auto& [word, list] : j.items()) {
    const int id = vocab.id_of(word);
    double total = 0.0;
    for (const auto& entry : list) total += entry.at(1).get<double>();
    if (total <= 0.0) continue;
    for (const auto& entry : list) {
      const int cand = vocab.id_of(entry.at(0).get<std::string>());
      if (cand == id) continue;
      table.candidates[id].emplace_back(cand, entry.at(1).get<double>() / total);
    }
  }
  return table;
}

std::vector<int> corrupt_utterance(const std::vector<int>& tokens,
                                   const NoiseConfig& config,
                                   const ConfusionTable& table, Rng& rng) {
  const double p_total = config.p_sub + config.p_del + config.p_ins;
  if (config.p_sub < 0 || config.p_del < 0 || config.p_ins < 0 || p_total > 1.0 + 1e-12) {
    throw std::invalid_argument("event probabilities must be in [0,1] and sum to <= 1");
  }
  const int vocab_size = table.size();
  auto random_word = [&](int avoid) {
    if (vocab_size <= 1) return avoid;
    int w;
    do {
      w = static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_size)));
    } while (w == avoid);
    return w;
  };

  std::vector<int> out;
  out.reserve(tokens.size());
  for (int tok : tokens) {
    const double u = rng.uniform();
    if (u < config.p_sub) {
      static const std::vector<std::pair<int, double>> kNoCandidates;
      const auto& cands = tok < vocab_size ? table.candidates[tok] : kNoCandidates;
      if (!cands.empty()) {
        double x = rng.uniform();
        int chosen = cands.back().first;
        for (const auto& [cand, weight] : cands) {
          if (x < weight) {
            chosen = cand;
            break;
          }
          x -= weight;
        }
        out.push_back(chosen);
      } else if (config.fallback == FallbackPolicy::UniformRandom) {
        out.push_back(random_word(tok));
      } else {
        out.push_back(tok);  // skip policy: leave the word intact
      }
    } else if (u < config.p_sub + config.p_del) {
      continue;
    } else if (u < config.p_sub + config.p_del + config.p_ins) {
      out.push_back(tok);
      out.push_back(static_cast<int>(rng.below(std::max<std::uint64_t>(1, vocab_size))));
    } else {
      out.push_back(tok);
    }
  }
  return out;
}

std::vector<std::vector<int>> corrupt_corpus(const std::vector<std::vector<int>>& corpus,
                                             const NoiseConfig& config,
                                             const ConfusionTable& table) {
  std::vector<std::vector<int>> out;
  out.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(i)));
    out.push_back(corrupt_utterance(corpus[i], config, table, rng));
  }
  return out;
}

namespace {

// Unit-cost Levenshtein distance (substitutions + deletions + insertions).
long edit_distance(const std::vector<int>& ref, const std::vector<int>& hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<long> prev(m + 1), cur(m + 1);
  for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<long>(j);
  for (std::size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<long>(i);
    for (std::size_t j = 1; j <= m; ++j) {
      const long sub = prev[j - 1] + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

}  // namespace

double word_error_rate(const std::vector<std::vector<int>>& ref,
                       const std::vector<std::vector<int>>& hyp) {
  if (ref.size() != hyp.size()) {
    throw std::runtime_error("reference/hypothesis corpus length mismatch");
  }
  long errors = 0;
  long total = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    errors += edit_distance(ref[i], hyp[i]);
    total += static_cast<long>(ref[i].size());
  }
  if (total == 0) throw std::runtime_error("empty reference corpus");
  return 100.0 * static_cast<double>(errors) / static_cast<double>(total);
}

NoiseConfig calibrate_to_wer(const std::vector<std::vector<int>>& corpus,
                             double target_wer, const ConfusionTable& table,
                             const MixRatio& mix, std::uint64_t seed,
                             FallbackPolicy fallback) {
  if (!(target_wer > 0.0 && target_wer < 100.0)) {
    throw std::invalid_argument("target WER must be in (0, 100)");
  }
  const double mix_total = mix.sub + mix.del + mix.ins;
  if (!(mix_total > 0.0)) throw std::invalid_argument("mix ratio must be positive");

  auto config_at = [&](double intensity) {
    NoiseConfig c;
    c.p_sub = intensity * mix.sub / mix_total;
    c.p_del = intensity * mix.del / mix_total;
    c.p_ins = intensity * mix.ins / mix_total;
    c.seed = seed;
    c.fallback = fallback;
    return c;
  };
  auto measure = [&](double intensity) {
    return word_error_rate(corpus, corrupt_corpus(corpus, config_at(intensity), table));
  };

  constexpr double kTolerance = 0.5;
  constexpr int kMaxIterations = 40;
  double lo = 0.0, hi = 1.0;
  double best_intensity = 0.0;
  double best_wer = 0.0;  // intensity 0 measures exactly 0
  for (int it = 0; it < kMaxIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double wer = measure(mid);
    if (std::abs(wer - target_wer) < std::abs(best_wer - target_wer)) {
      best_wer = wer;
      best_intensity = mid;
    }
    log::debug("calibration iteration " + std::to_string(it) + ": intensity " +
               std::to_string(mid) + " -> WER " + std::to_string(wer));
    if (std::abs(wer - target_wer) <= kTolerance) return config_at(mid);
    if (wer < target_wer) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  std::ostringstream msg;
  msg << "calibration failed to reach WER " << target_wer << " +-" << kTolerance
      << "; best achieved " << best_wer << " at intensity " << best_intensity;
  throw std::runtime_error(msg.str());
}

void write_corrupted_tsv(const std::vector<std::string>& labels,
                         const std::vector<std::vector<int>>& utterances,
                         const Vocabulary& vocab, double measured_wer,
                         const std::string& path) {
  if (labels.size() != utterances.size()) {
    throw std::runtime_error("label/utterance count mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << "# wer=" << std::fixed << std::setprecision(4) << measured_wer << '\n';
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out << labels[i] << '\t';
    for (std::size_t t = 0; t < utterances[i].size(); ++t) {
      if (t) out << ' ';
      out << vocab.word_of(utterances[i][t]);
    }
    out << '\n';
  }
}

}  // namespace confusable
