#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>

#include "confusable/noise.hpp"

using namespace confusable;

namespace {

// Independent reference for WER: textbook Levenshtein DP, no shortcuts.
int levenshtein_oracle(const std::vector<int>& a, const std::vector<int>& b) {
  std::vector<std::vector<int>> d(a.size() + 1, std::vector<int>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const int sub = d[i - 1][j - 1] + (a[i - 1] != b[j - 1] ? 1 : 0);
      d[i][j] = std::min({sub, d[i - 1][j] + 1, d[i][j - 1] + 1});
    }
  }
  return d[a.size()][b.size()];
}

}  // namespace

TEST_CASE("confusion table from bins") {
  std::vector<ConfusionNetwork> cnets;
  ConfusionNetwork net;
  net.bins.push_back({{{0, 0.6}, {1, 0.3}, {2, 0.1}}});
  net.bins.push_back({{{0, 0.8}, {2, 0.2}}});
  net.bins.push_back({{{3, 1.0}}});
  cnets.push_back(net);
  ConfusionTable table = build_confusion_table(cnets, 5);
  REQUIRE(table.size() == 5);

  // Word 0 co-occurred with 1 (mass 0.3) and 2 (mass 0.1 + 0.2).
  const auto& c0 = table.candidates[0];
  REQUIRE(c0.size() == 2);
  double total = 0;
  std::map<int, double> weights;
  for (const auto& [id, w] : c0) {
    weights[id] = w;
    total += w;
    CHECK(id != 0);  // no self-substitution
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(weights.at(1) == doctest::Approx(0.3 / 0.6).epsilon(1e-9));
  CHECK(weights.at(2) == doctest::Approx(0.3 / 0.6).epsilon(1e-9));

  // Word 3 only ever appeared alone: no candidates.
  CHECK(table.candidates[3].empty());
  CHECK(table.candidates[4].empty());
}

TEST_CASE("confusion table weights verified by independent recount") {
  Rng rng(21);
  const int vocab = 12;
  std::vector<ConfusionNetwork> cnets;
  std::vector<std::map<int, double>> truth(vocab);
  for (int n = 0; n < 200; ++n) {
    ConfusionNetwork net;
    const int bins = 1 + static_cast<int>(rng.below(4));
    for (int b = 0; b < bins; ++b) {
      std::vector<int> ids;
      const int alts = 1 + static_cast<int>(rng.below(3));
      for (int a = 0; a < alts; ++a) {
        const int id = static_cast<int>(rng.below(vocab));
        if (std::find(ids.begin(), ids.end(), id) == ids.end()) ids.push_back(id);
      }
      std::vector<std::pair<int, double>> alt;
      double total = 0;
      std::vector<double> ps;
      for (std::size_t i = 0; i < ids.size(); ++i) {
        ps.push_back(0.05 + rng.uniform());
        total += ps.back();
      }
      for (std::size_t i = 0; i < ids.size(); ++i) {
        alt.emplace_back(ids[i], ps[i] / total);
      }
      for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = 0; j < ids.size(); ++j) {
          if (i != j) truth[ids[i]][ids[j]] += alt[j].second;
        }
      }
      net.bins.push_back({std::move(alt)});
    }
    cnets.push_back(std::move(net));
  }
  ConfusionTable table = build_confusion_table(cnets, vocab);
  for (int w = 0; w < vocab; ++w) {
    double truth_total = 0;
    for (const auto& [id, mass] : truth[w]) truth_total += mass;
    CHECK(table.candidates[w].size() == truth[w].size());
    for (const auto& [id, weight] : table.candidates[w]) {
      CHECK(weight == doctest::Approx(truth[w].at(id) / truth_total).epsilon(1e-9));
    }
  }
}

TEST_CASE("confusion table save/load round-trip") {
  Vocabulary v = Vocabulary::build({{"a", "b", "c"}}, 1);
  std::vector<ConfusionNetwork> cnets;
  ConfusionNetwork net;
  net.bins.push_back({{{0, 0.7}, {1, 0.2}, {2, 0.1}}});
  cnets.push_back(net);
  ConfusionTable table = build_confusion_table(cnets, v.size());
  const auto path =
      (std::filesystem::temp_directory_path() / "ctab_rt.json").string();
  save_confusion_table(table, v, path);
  ConfusionTable loaded = load_confusion_table(path, v);
  REQUIRE(loaded.size() == table.size());
  for (int w = 0; w < table.size(); ++w) {
    REQUIRE(loaded.candidates[w].size() == table.candidates[w].size());
    for (std::size_t i = 0; i < table.candidates[w].size(); ++i) {
      CHECK(loaded.candidates[w][i].first == table.candidates[w][i].first);
      CHECK(loaded.candidates[w][i].second ==
            doctest::Approx(table.candidates[w][i].second).epsilon(1e-12));
    }
  }
}

TEST_CASE("corrupt_utterance") {
  std::vector<ConfusionNetwork> cnets;
  ConfusionNetwork net;
  net.bins.push_back({{{0, 0.5}, {1, 0.5}}});
  cnets.push_back(net);
  ConfusionTable table = build_confusion_table(cnets, 4);

  SUBCASE("zero probabilities are the identity") {
    NoiseConfig cfg;
    Rng rng(1);
    std::vector<int> tokens{0, 1, 2, 3};
    CHECK(corrupt_utterance(tokens, cfg, table, rng) == tokens);
  }

  SUBCASE("certain substitution replaces every token with a candidate") {
    NoiseConfig cfg;
    cfg.p_sub = 1.0;
    Rng rng(2);
    auto out = corrupt_utterance({0, 0, 0}, cfg, table, rng);
    CHECK(out == std::vector<int>{1, 1, 1});
  }

  SUBCASE("skip fallback keeps words without candidates") {
    NoiseConfig cfg;
    cfg.p_sub = 1.0;
    cfg.fallback = FallbackPolicy::Skip;
    Rng rng(3);
    CHECK(corrupt_utterance({2, 3}, cfg, table, rng) == std::vector<int>{2, 3});
  }

  SUBCASE("uniform fallback substitutes anyway") {
    NoiseConfig cfg;
    cfg.p_sub = 1.0;
    cfg.fallback = FallbackPolicy::UniformRandom;
    Rng rng(4);
    auto out = corrupt_utterance({2, 2, 2, 2, 2, 2, 2, 2}, cfg, table, rng);
    int changed = 0;
    for (int t : out) changed += t != 2;
    CHECK(changed > 0);
  }

  SUBCASE("certain deletion empties the utterance") {
    NoiseConfig cfg;
    cfg.p_del = 1.0;
    Rng rng(5);
    CHECK(corrupt_utterance({0, 1, 2}, cfg, table, rng).empty());
  }

  SUBCASE("certain insertion doubles the length") {
    NoiseConfig cfg;
    cfg.p_ins = 1.0;
    Rng rng(6);
    auto out = corrupt_utterance({0, 1, 2}, cfg, table, rng);
    REQUIRE(out.size() == 6);
    CHECK(out[0] == 0);
    CHECK(out[2] == 1);
    CHECK(out[4] == 2);
  }
}

TEST_CASE("corrupt_corpus is order-independent and deterministic") {
  std::vector<ConfusionNetwork> cnets;
  ConfusionNetwork net;
  net.bins.push_back({{{0, 0.5}, {1, 0.3}, {2, 0.2}}});
  cnets.push_back(net);
  ConfusionTable table = build_confusion_table(cnets, 5);
  NoiseConfig cfg;
  cfg.p_sub = 0.3;
  cfg.p_del = 0.1;
  cfg.p_ins = 0.05;
  cfg.seed = 42;
  std::vector<std::vector<int>> corpus;
  Rng rng(8);
  for (int i = 0; i < 50; ++i) {
    std::vector<int> sent;
    for (int t = 0; t < 6; ++t) sent.push_back(static_cast<int>(rng.below(5)));
    corpus.push_back(std::move(sent));
  }
  auto a = corrupt_corpus(corpus, cfg, table);
  auto b = corrupt_corpus(corpus, cfg, table);
  CHECK(a == b);
}

TEST_CASE("word error rate hand cases") {
  using V = std::vector<std::vector<int>>;
  // identical -> 0
  CHECK(word_error_rate(V{{1, 2, 3}}, V{{1, 2, 3}}) == doctest::Approx(0.0));
  // one substitution over 3 words
  CHECK(word_error_rate(V{{1, 2, 3}}, V{{1, 9, 3}}) ==
        doctest::Approx(100.0 / 3.0));
  // one deletion
  CHECK(word_error_rate(V{{1, 2, 3}}, V{{1, 3}}) == doctest::Approx(100.0 / 3.0));
  // one insertion
  CHECK(word_error_rate(V{{1, 2, 3}}, V{{1, 2, 9, 3}}) ==
        doctest::Approx(100.0 / 3.0));
  // empty hypothesis: all deletions
  CHECK(word_error_rate(V{{1, 2}}, V{{}}) == doctest::Approx(100.0));
  // WER can exceed 100
  CHECK(word_error_rate(V{{1}}, V{{2, 3, 4}}) == doctest::Approx(300.0));
  // multi-utterance pooling: (1 + 0) errors over (3 + 2) words
  CHECK(word_error_rate(V{{1, 2, 3}, {4, 5}}, V{{1, 9, 3}, {4, 5}}) ==
        doctest::Approx(100.0 * 1.0 / 5.0));
}

TEST_CASE("word error rate matches an independent DP oracle on random pairs") {
  Rng rng(13);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> ref, hyp;
    const int rn = 1 + static_cast<int>(rng.below(12));
    const int hn = static_cast<int>(rng.below(14));
    for (int i = 0; i < rn; ++i) ref.push_back(static_cast<int>(rng.below(6)));
    for (int i = 0; i < hn; ++i) hyp.push_back(static_cast<int>(rng.below(6)));
    const double expected = 100.0 * levenshtein_oracle(ref, hyp) / ref.size();
    CHECK(word_error_rate({ref}, {hyp}) == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("calibration hits the target WER within tolerance") {
  // Rich confusion structure so substitution-driven WER responds smoothly.
  Rng rng(30);
  const int vocab = 30;
  std::vector<ConfusionNetwork> cnets;
  for (int n = 0; n < 100; ++n) {
    ConfusionNetwork net;
    for (int b = 0; b < 5; ++b) {
      const int a = static_cast<int>(rng.below(vocab));
      int c = static_cast<int>(rng.below(vocab));
      if (c == a) c = (c + 1) % vocab;
      net.bins.push_back({{{a, 0.6}, {c, 0.4}}});
    }
    cnets.push_back(std::move(net));
  }
  ConfusionTable table = build_confusion_table(cnets, vocab);

  std::vector<std::vector<int>> corpus;
  for (int i = 0; i < 300; ++i) {
    std::vector<int> sent;
    for (int t = 0; t < 10; ++t) sent.push_back(static_cast<int>(rng.below(vocab)));
    corpus.push_back(std::move(sent));
  }

  for (double target : {10.0, 18.54, 30.0}) {
    NoiseConfig cfg = calibrate_to_wer(corpus, target, table, MixRatio{}, 99);
    auto corrupted = corrupt_corpus(corpus, cfg, table);
    const double wer = word_error_rate(corpus, corrupted);
    CHECK(std::abs(wer - target) <= 0.5);
    // Mix ratio preserved: p_sub : p_del : p_ins = 70 : 20 : 10.
    CHECK(cfg.p_del == doctest::Approx(cfg.p_sub * 20.0 / 70.0).epsilon(1e-9));
    CHECK(cfg.p_ins == doctest::Approx(cfg.p_sub * 10.0 / 70.0).epsilon(1e-9));
  }

  // Deterministic: same seed, same config out.
  NoiseConfig c1 = calibrate_to_wer(corpus, 18.54, table, MixRatio{}, 7);
  NoiseConfig c2 = calibrate_to_wer(corpus, 18.54, table, MixRatio{}, 7);
  CHECK(c1.p_sub == c2.p_sub);

  // Out-of-range target is rejected up front.
  CHECK_THROWS_AS(calibrate_to_wer(corpus, 5000.0, table, MixRatio{}, 1),
                  std::invalid_argument);

  // In-range but unreachable target fails loudly: with no substitution
  // candidates and mix 70:20:10 the achievable WER tops out near 30%.
  std::vector<ConfusionNetwork> lonely;
  ConfusionNetwork lone_net;
  for (int b = 0; b < 3; ++b) lone_net.bins.push_back({{{b, 1.0}}});
  lonely.push_back(lone_net);
  ConfusionTable empty_table = build_confusion_table(lonely, vocab);
  CHECK_THROWS_AS(calibrate_to_wer(corpus, 90.0, empty_table, MixRatio{}, 1),
                  std::runtime_error);
}

TEST_CASE("corruption intensity is monotone in WER on average") {
  Rng rng(77);
  const int vocab = 20;
  std::vector<ConfusionNetwork> cnets;
  for (int n = 0; n < 50; ++n) {
    ConfusionNetwork net;
    for (int b = 0; b < 4; ++b) {
      const int a = static_cast<int>(rng.below(vocab));
      const int c = (a + 1 + static_cast<int>(rng.below(vocab - 1))) % vocab;
      net.bins.push_back({{{a, 0.5}, {c, 0.5}}});
    }
    cnets.push_back(std::move(net));
  }
  ConfusionTable table = build_confusion_table(cnets, vocab);
  std::vector<std::vector<int>> corpus;
  for (int i = 0; i < 200; ++i) {
    std::vector<int> sent;
    for (int t = 0; t < 8; ++t) sent.push_back(static_cast<int>(rng.below(vocab)));
    corpus.push_back(std::move(sent));
  }
  double prev = -1.0;
  for (double intensity : {0.05, 0.15, 0.3, 0.5}) {
    NoiseConfig cfg;
    cfg.p_sub = 0.7 * intensity;
    cfg.p_del = 0.2 * intensity;
    cfg.p_ins = 0.1 * intensity;
    cfg.seed = 4;
    const double wer = word_error_rate(corpus, corrupt_corpus(corpus, cfg, table));
    CHECK(wer > prev);
    prev = wer;
  }
}
