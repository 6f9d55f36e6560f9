#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <memory>

#include "confusable/embedding.hpp"

using namespace confusable;

namespace {

std::shared_ptr<Vocabulary> toy_vocab(int n) {
  std::vector<std::string> words;
  for (int i = 0; i < n; ++i) words.push_back("w" + std::to_string(i));
  return std::make_shared<Vocabulary>(Vocabulary::build({words}, 1));
}

EmbeddingMatrix random_embedding(int vocab, int dim, std::uint64_t seed) {
  EmbeddingMatrix e;
  e.vocab = toy_vocab(vocab);
  e.input.resize(e.vocab->size(), dim);
  e.output.resize(e.vocab->size(), dim);
  Rng rng(seed);
  for (int r = 0; r < e.rows(); ++r) {
    for (int c = 0; c < dim; ++c) {
      e.input(r, c) = rng.uniform(-0.8, 0.8);
      e.output(r, c) = rng.uniform(-0.8, 0.8);
    }
  }
  return e;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("sgns loss at zero vectors is (1+k) ln 2") {
  EmbeddingMatrix e;
  e.vocab = toy_vocab(4);
  e.input = Eigen::MatrixXd::Zero(5, 3);
  e.output = Eigen::MatrixXd::Zero(5, 3);
  TrainingPair pair{0, 1, 1.0};
  CHECK(sgns_loss(e, pair, {}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(sgns_loss(e, pair, {2, 3}) ==
        doctest::Approx(3.0 * std::log(2.0)).epsilon(1e-12));
  // weight scales linearly
  TrainingPair half{0, 1, 0.5};
  CHECK(sgns_loss(e, half, {2}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("sgns analytic gradient matches central finite differences") {
  const int dim = 5;
  Rng seeds(42);
  int checked = 0;
  for (int trial = 0; trial < 30; ++trial) {
    EmbeddingMatrix e = random_embedding(8, dim, seeds.next_u64());
    TrainingPair pair{static_cast<int>(seeds.below(8)),
                      static_cast<int>(seeds.below(8)),
                      0.25 + 0.75 * seeds.uniform()};
    std::vector<int> negatives;
    const int k = 1 + static_cast<int>(seeds.below(4));
    for (int i = 0; i < k; ++i) {
      int neg;
      do {
        neg = static_cast<int>(seeds.below(8));
      } while (neg == pair.output);
      negatives.push_back(neg);
    }

    // Analytic gradient via a unit step: theta' = theta - lr * g.
    const double lr = 1.0;
    EmbeddingMatrix stepped = e;
    sgns_step_explicit(stepped, pair, negatives, lr);
    Eigen::MatrixXd grad_in = (e.input - stepped.input) / lr;
    Eigen::MatrixXd grad_out = (e.output - stepped.output) / lr;

    const double h = 1e-5;
    auto check_entry = [&](Eigen::MatrixXd& matrix, int r, int c, double analytic) {
      const double saved = matrix(r, c);
      matrix(r, c) = saved + h;
      const double up = sgns_loss(e, pair, negatives);
      matrix(r, c) = saved - h;
      const double down = sgns_loss(e, pair, negatives);
      matrix(r, c) = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      CHECK(std::abs(numeric - analytic) / denom < 1e-6);
      ++checked;
    };
    for (int c = 0; c < dim; ++c) {
      check_entry(e.input, pair.input, c, grad_in(pair.input, c));
      check_entry(e.output, pair.output, c, grad_out(pair.output, c));
      check_entry(e.output, negatives[0], c, grad_out(negatives[0], c));
    }
    // Untouched rows must have exactly zero gradient.
    for (int r = 0; r < e.rows(); ++r) {
      if (r == pair.input) continue;
      CHECK(grad_in.row(r).cwiseAbs().maxCoeff() == 0.0);
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("sgns frozen prefix dims stay untouched") {
  EmbeddingMatrix e = random_embedding(6, 8, 11);
  EmbeddingMatrix before = e;
  TrainingPair pair{1, 2, 1.0};
  sgns_step_explicit(e, pair, {3, 4}, 0.1, /*frozen_prefix_dims=*/3);
  CHECK(e.input.row(1).head(3) == before.input.row(1).head(3));
  CHECK((e.input.row(1).tail(5) - before.input.row(1).tail(5)).cwiseAbs().maxCoeff() >
        0.0);
  // Output side updates all dims (only the published input matrix is sliced).
}

TEST_CASE("negative sampling never draws the positive output") {
  std::vector<std::int64_t> counts{1000, 1, 1, 1};
  NoiseDistribution noise(counts);
  EmbeddingMatrix e = random_embedding(4, 4, 5);
  Rng rng(9);
  // Word 0 dominates the noise distribution, so sampling negatives for an
  // output of 0 exercises the resampling path heavily.
  TrainingPair pair{1, 0, 1.0};
  for (int i = 0; i < 200; ++i) {
    const double loss = negative_sampling_step(e, pair, 3, 0.01, noise, rng);
    CHECK(std::isfinite(loss));
  }
  // Distribution itself should still mostly return word 0.
  int zeros = 0;
  for (int i = 0; i < 1000; ++i) zeros += noise.sample(rng) == 0;
  CHECK(zeros > 900);
}

TEST_CASE("noise distribution follows unigram^0.75") {
  std::vector<std::int64_t> counts{16, 81};
  NoiseDistribution noise(counts);
  // p(0) = 16^.75 / (16^.75 + 81^.75) = 8 / (8 + 27)
  Rng rng(123);
  int zeros = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) zeros += noise.sample(rng) == 0;
  CHECK(static_cast<double>(zeros) / n == doctest::Approx(8.0 / 35.0).epsilon(0.02));
}

TEST_CASE("skipgram pair generation with a forced full window") {
  // window=1 makes the dynamic width deterministic (b is always 1).
  Rng rng(1);
  auto pairs = generate_skipgram_pairs({10, 11, 12}, 1, rng);
  REQUIRE(pairs.size() == 4);
  auto has = [&](int in, int out) {
    for (const auto& p : pairs) {
      if (p.input == in && p.output == out && p.weight == 1.0) return true;
    }
    return false;
  };
  CHECK(has(10, 11));
  CHECK(has(11, 10));
  CHECK(has(11, 12));
  CHECK(has(12, 11));

  // Dynamic window never exceeds the configured maximum.
  Rng rng2(2);
  std::vector<int> sent(30);
  for (int i = 0; i < 30; ++i) sent[i] = i;
  for (const auto& p : generate_skipgram_pairs(sent, 4, rng2)) {
    CHECK(std::abs(p.input - p.output) <= 4);
    CHECK(p.input != p.output);
  }
}

TEST_CASE("intra-confusion pair generation enumerates ordered bin pairs") {
  ConfusionNetwork net;
  net.bins.push_back({{{0, 0.6}, {1, 0.3}, {2, 0.1}}});
  net.bins.push_back({{{3, 1.0}}});  // singleton: no pairs
  auto pairs = generate_intra_confusion_pairs(net);
  REQUIRE(pairs.size() == 6);
  auto weight_of = [&](int in, int out) {
    for (const auto& p : pairs) {
      if (p.input == in && p.output == out) return p.weight;
    }
    return -1.0;
  };
  CHECK(weight_of(0, 1) == doctest::Approx(0.3));
  CHECK(weight_of(0, 2) == doctest::Approx(0.1));
  CHECK(weight_of(1, 0) == doctest::Approx(0.6));
  CHECK(weight_of(1, 2) == doctest::Approx(0.1));
  CHECK(weight_of(2, 0) == doctest::Approx(0.6));
  CHECK(weight_of(2, 1) == doctest::Approx(0.3));
}

TEST_CASE("training on a planted corpus brings co-occurring words together") {
  // Two tight clusters: sentences alternate between cluster A words and
  // cluster B words, never mixing.
  auto vocab = toy_vocab(8);
  std::vector<std::vector<int>> sentences;
  Rng rng(3);
  for (int s = 0; s < 400; ++s) {
    const int base = (s % 2) * 4;
    std::vector<int> sent;
    for (int t = 0; t < 6; ++t) sent.push_back(base + static_cast<int>(rng.below(4)));
    sentences.push_back(std::move(sent));
  }
  EmbeddingTrainConfig cfg;
  cfg.dim = 16;
  cfg.window = 3;
  cfg.epochs = 12;
  cfg.subsample = 0;
  cfg.seed = 5;
  EmbeddingMatrix e = train_embedding(sentences, vocab, cfg);
  // Within-cluster similarity should dominate across-cluster similarity.
  double within = 0, across = 0;
  within += cosine_similarity(e, 0, 1) + cosine_similarity(e, 2, 3) +
            cosine_similarity(e, 4, 5) + cosine_similarity(e, 6, 7);
  across += cosine_similarity(e, 0, 4) + cosine_similarity(e, 1, 5) +
            cosine_similarity(e, 2, 6) + cosine_similarity(e, 3, 7);
  CHECK(within / 4 > across / 4 + 0.3);
}

TEST_CASE("intra-confusion training clusters words sharing a confusable") {
  auto vocab = toy_vocab(6);
  // Words 0 and 1 are both confusable with 4; words 2 and 3 with 5. Sharing a
  // bin-mate gives them a common acoustic context, so their input vectors
  // should converge while the two groups stay apart.
  std::vector<ConfusionNetwork> cnets;
  for (int n = 0; n < 300; ++n) {
    ConfusionNetwork net;
    net.bins.push_back({{{0, 0.6}, {4, 0.4}}});
    net.bins.push_back({{{1, 0.6}, {4, 0.4}}});
    net.bins.push_back({{{2, 0.6}, {5, 0.4}}});
    net.bins.push_back({{{3, 0.6}, {5, 0.4}}});
    cnets.push_back(std::move(net));
  }
  EmbeddingTrainConfig cfg;
  cfg.dim = 12;
  cfg.epochs = 10;
  cfg.scheme = EmbeddingScheme::IntraConfusion;
  cfg.seed = 8;
  EmbeddingMatrix e = train_embedding(cnets, vocab, cfg);
  CHECK(cosine_similarity(e, 0, 1) > cosine_similarity(e, 0, 2) + 0.2);
  CHECK(cosine_similarity(e, 2, 3) > cosine_similarity(e, 2, 1) + 0.2);
}

TEST_CASE("single-threaded training is bit-identical across runs") {
  auto vocab = toy_vocab(10);
  std::vector<std::vector<int>> sentences;
  Rng rng(4);
  for (int s = 0; s < 50; ++s) {
    std::vector<int> sent;
    for (int t = 0; t < 7; ++t) sent.push_back(static_cast<int>(rng.below(10)));
    sentences.push_back(std::move(sent));
  }
  EmbeddingTrainConfig cfg;
  cfg.dim = 8;
  cfg.epochs = 3;
  cfg.seed = 77;
  EmbeddingMatrix a = train_embedding(sentences, vocab, cfg);
  EmbeddingMatrix b = train_embedding(sentences, vocab, cfg);
  CHECK(a.input == b.input);
  CHECK(a.output == b.output);
}

TEST_CASE("concatenation stacks dims and preserves both slices") {
  EmbeddingMatrix e1 = random_embedding(5, 4, 21);
  EmbeddingMatrix e2 = random_embedding(5, 3, 22);
  e2.vocab = e1.vocab;
  EmbeddingMatrix cat = concatenate_embeddings(e1, e2);
  CHECK(cat.dim() == 7);
  CHECK(cat.input.leftCols(4) == e1.input);
  CHECK(cat.input.rightCols(3) == e2.input);

  EmbeddingMatrix other = random_embedding(6, 3, 23);
  CHECK_THROWS_AS(concatenate_embeddings(e1, other), std::runtime_error);
}

TEST_CASE("joint optimization starts from the concatenated vectors") {
  auto vocab = toy_vocab(6);
  EmbeddingMatrix e1 = random_embedding(6, 4, 31);
  e1.vocab = vocab;
  EmbeddingMatrix e2 = random_embedding(6, 3, 32);
  e2.vocab = vocab;
  EmbeddingMatrix cat = concatenate_embeddings(e1, e2);

  std::vector<ConfusionNetwork> cnets;
  ConfusionNetwork net;
  net.bins.push_back({{{0, 0.5}, {1, 0.5}}});
  cnets.push_back(net);

  EmbeddingTrainConfig cfg;
  cfg.epochs = 1;
  cfg.learning_rate = 0.0;  // zero lr: joint must be a no-op on the inputs
  EmbeddingMatrix frozen = joint_optimize(cat, cnets, cfg);
  CHECK(frozen.input == cat.input);

  cfg.learning_rate = 0.025;
  cfg.epochs = 3;
  cfg.seed = 5;
  EmbeddingMatrix tuned = joint_optimize(cat, cnets, cfg);
  CHECK(tuned.dim() == 7);
  // Rows outside any bin keep their initialization.
  CHECK(tuned.input.row(5) == cat.input.row(5));
  CHECK((tuned.input.row(0) - cat.input.row(0)).cwiseAbs().maxCoeff() > 0.0);

  // frozen_prefix_dims protects the semantic block.
  cfg.frozen_prefix_dims = 4;
  EmbeddingMatrix prefix = joint_optimize(cat, cnets, cfg);
  CHECK(prefix.input.leftCols(4) == cat.input.leftCols(4));
  CHECK((prefix.input.row(0).tail(3) - cat.input.row(0).tail(3))
            .cwiseAbs()
            .maxCoeff() > 0.0);
}

TEST_CASE("nearest neighbors match a brute-force oracle") {
  Rng seeds(55);
  for (int trial = 0; trial < 10; ++trial) {
    EmbeddingMatrix e = random_embedding(20, 6, seeds.next_u64());
    const int query = static_cast<int>(seeds.below(20));
    auto got = nearest_neighbors(e, query, 5);
    REQUIRE(got.size() == 5);

    std::vector<std::pair<int, double>> all;
    for (int i = 0; i < e.rows(); ++i) {
      if (i == query) continue;
      all.emplace_back(i, cosine_similarity(e, query, i));
    }
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
      if (a.second != b.second) return a.second > b.second;
      return a.first < b.first;
    });
    for (int i = 0; i < 5; ++i) {
      CHECK(got[i].first == all[i].first);
      CHECK(got[i].second == doctest::Approx(all[i].second).epsilon(1e-12));
    }
  }
}

TEST_CASE("pca projection matches an eigensolver oracle") {
  Rng seeds(66);
  for (int trial = 0; trial < 5; ++trial) {
    EmbeddingMatrix e = random_embedding(15, 7, seeds.next_u64());
    std::vector<int> ids;
    for (int i = 0; i < 12; ++i) ids.push_back(i);
    auto got = pca_project_2d(e, ids);
    REQUIRE(got.size() == ids.size());

    // Oracle: dense symmetric eigendecomposition of the covariance.
    Eigen::MatrixXd x(ids.size(), e.dim());
    for (std::size_t i = 0; i < ids.size(); ++i) x.row(i) = e.input.row(ids[i]);
    Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(ids.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    Eigen::VectorXd pc1 = es.eigenvectors().col(e.dim() - 1);
    Eigen::VectorXd pc2 = es.eigenvectors().col(e.dim() - 2);

    // Projections are defined up to sign; compare up to a per-axis flip.
    Eigen::VectorXd proj1 = x * pc1, proj2 = x * pc2;
    double s1 = 0, s2 = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      s1 += std::get<1>(got[i]) * proj1(i);
      s2 += std::get<2>(got[i]) * proj2(i);
    }
    const double f1 = s1 < 0 ? -1.0 : 1.0;
    const double f2 = s2 < 0 ? -1.0 : 1.0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      CHECK(std::get<0>(got[i]) == e.vocab->word_of(ids[i]));
      CHECK(std::get<1>(got[i]) == doctest::Approx(f1 * proj1(i)).epsilon(1e-6));
      CHECK(std::get<2>(got[i]) == doctest::Approx(f2 * proj2(i)).epsilon(1e-6));
    }
  }
}

TEST_CASE("text save/load round-trip") {
  EmbeddingMatrix e = random_embedding(7, 5, 91);
  const auto path = temp_path("emb_rt.txt");
  save_embedding_text(e, path);
  EmbeddingMatrix loaded = load_embedding_text(path);
  CHECK(loaded.dim() == e.dim());
  CHECK(loaded.rows() == e.rows());
  CHECK((loaded.input - e.input).cwiseAbs().maxCoeff() < 1e-6);
  for (int i = 0; i < e.rows(); ++i) {
    CHECK(loaded.vocab->word_of(i) == e.vocab->word_of(i));
  }
}

TEST_CASE("text loader accepts headerless files") {
  const auto path = temp_path("emb_nohdr.txt");
  {
    std::ofstream out(path);
    out << "cat 1.0 2.0 3.0\ndog 4.0 5.0 6.0\n";
  }
  EmbeddingMatrix e = load_embedding_text(path);
  CHECK(e.dim() == 3);
  CHECK(e.vocab->id_of("cat") == 0);
  CHECK(e.input(1, 2) == doctest::Approx(6.0));
}

TEST_CASE("binary save/load round-trip is exact at f32 and byte-stable") {
  EmbeddingMatrix e = random_embedding(9, 6, 92);
  const auto p1 = temp_path("emb_rt1.c2ve");
  const auto p2 = temp_path("emb_rt2.c2ve");
  save_embedding_binary(e, p1);
  EmbeddingMatrix loaded = load_embedding_binary(p1);
  // The format stores f32, so loading equals the float-cast of the original.
  for (int r = 0; r < e.rows(); ++r) {
    for (int c = 0; c < e.dim(); ++c) {
      CHECK(loaded.input(r, c) ==
            static_cast<double>(static_cast<float>(e.input(r, c))));
    }
    CHECK(loaded.vocab->word_of(r) == e.vocab->word_of(r));
  }
  // save(load(save(x))) is byte-identical to save(x).
  save_embedding_binary(loaded, p2);
  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), {});
  std::string b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
}

TEST_CASE("save_embedding dispatches on extension") {
  EmbeddingMatrix e = random_embedding(4, 3, 93);
  const auto bin = temp_path("emb_disp.c2ve");
  const auto txt = temp_path("emb_disp.txt");
  save_embedding(e, bin);
  save_embedding(e, txt);
  CHECK(load_embedding(bin).dim() == 3);
  CHECK(load_embedding(txt).dim() == 3);
}
