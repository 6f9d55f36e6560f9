#include "confusable/embedding.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "confusable/log.hpp"

namespace confusable {

namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

EmbeddingMatrix init_embedding(std::shared_ptr<const Vocabulary> vocab, int dim,
                               std::uint64_t seed) {
  const int v = vocab->size();
  EmbeddingMatrix e;
  e.vocab = std::move(vocab);
  e.input.resize(v, dim);
  e.output = Eigen::MatrixXd::Zero(v, dim);
  Rng rng(derive_seed(seed, "embedding-init"));
  const double bound = 0.5 / dim;
  for (int r = 0; r < v; ++r) {
    for (int c = 0; c < dim; ++c) e.input(r, c) = rng.uniform(-bound, bound);
  }
  return e;
}

void check_finite(const EmbeddingMatrix& e, int epoch) {
  if (!e.input.allFinite() || !e.output.allFinite()) {
    throw std::runtime_error("non-finite embedding entries after epoch " +
                             std::to_string(epoch + 1));
  }
}

}  // namespace

NoiseDistribution::NoiseDistribution(const std::vector<std::int64_t>& counts) {
  cumulative_.resize(counts.size());
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    total += counts[i] > 0 ? std::pow(static_cast<double>(counts[i]), 0.75) : 0.0;
    cumulative_[i] = total;
  }
  if (total <= 0.0) {  // untrained vocab (all counts zero): fall back to uniform
    for (std::size_t i = 0; i < counts.size(); ++i) {
      cumulative_[i] = static_cast<double>(i + 1);
    }
  }
}

int NoiseDistribution::sample(Rng& rng) const {
  const double x = rng.uniform() * cumulative_.back();
  auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), x,
                             [](double cum, double v) { return cum <= v; });
  if (it == cumulative_.end()) --it;
  return static_cast<int>(it - cumulative_.begin());
}

std::vector<TrainingPair> generate_skipgram_pairs(const std::vector<int>& tokens,
                                                  int window, Rng& rng) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  std::vector<TrainingPair> pairs;
  const int n = static_cast<int>(tokens.size());
  for (int i = 0; i < n; ++i) {
    const int b = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(window)));
    for (int j = std::max(0, i - b); j <= std::min(n - 1, i + b); ++j) {
      if (j == i) continue;
      pairs.push_back({tokens[i], tokens[j], 1.0});
    }
  }
  return pairs;
}

std::vector<TrainingPair> generate_intra_confusion_pairs(const ConfusionNetwork& cnet) {
  std::vector<TrainingPair> pairs;
  for (const auto& bin : cnet.bins) {
    const auto& alts = bin.alternatives;
    if (alts.size() < 2) continue;
    for (std::size_t a = 0; a < alts.size(); ++a) {
      for (std::size_t b = 0; b < alts.size(); ++b) {
        if (a == b) continue;
        pairs.push_back({alts[a].first, alts[b].first, alts[b].second});
      }
    }
  }
  return pairs;
}

std::vector<TrainingPair> generate_inter_confusion_pairs(const ConfusionNetwork& cnet,
                                                         int window, Rng& rng) {
  if (window < 1) throw std::invalid_argument("window must be >= 1");
  std::vector<TrainingPair> pairs;
  const int n = static_cast<int>(cnet.bins.size());
  for (int i = 0; i < n; ++i) {
    const int b = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(window)));
    for (int j = std::max(0, i - b); j <= std::min(n - 1, i + b); ++j) {
      if (j == i) continue;
      for (const auto& [u, pu] : cnet.bins[i].alternatives) {
        for (const auto& [v, pv] : cnet.bins[j].alternatives) {
          pairs.push_back({u, v, pu * pv});
        }
      }
    }
  }
  return pairs;
}

double sgns_loss(const EmbeddingMatrix& e, const TrainingPair& pair,
                 const std::vector<int>& negatives) {
  const auto v = e.input.row(pair.input);
  double loss = -std::log(sigmoid(e.output.row(pair.output).dot(v)));
  for (int n : negatives) {
    loss -= std::log(sigmoid(-e.output.row(n).dot(v)));
  }
  return pair.weight * loss;
}

double sgns_step_explicit(EmbeddingMatrix& e, const TrainingPair& pair,
                          const std::vector<int>& negatives, double lr,
                          int frozen_prefix_dims) {
  const int dim = e.dim();
  const Eigen::RowVectorXd v = e.input.row(pair.input);
  Eigen::RowVectorXd grad_v = Eigen::RowVectorXd::Zero(dim);
  std::map<int, Eigen::RowVectorXd> grad_out;
  double loss = 0.0;

  const double s_pos = sigmoid(e.output.row(pair.output).dot(v));
  loss -= std::log(s_pos);
  grad_v += -pair.weight * (1.0 - s_pos) * e.output.row(pair.output);
  grad_out.emplace(pair.output, Eigen::RowVectorXd::Zero(dim)).first->second +=
      -pair.weight * (1.0 - s_pos) * v;

  for (int n : negatives) {
    const double s_neg = sigmoid(e.output.row(n).dot(v));
    loss -= std::log(1.0 - s_neg);
    grad_v += pair.weight * s_neg * e.output.row(n);
    grad_out.emplace(n, Eigen::RowVectorXd::Zero(dim)).first->second +=
        pair.weight * s_neg * v;
  }

  if (frozen_prefix_dims > 0) {
    grad_v.head(std::min(frozen_prefix_dims, dim)).setZero();
  }
  e.input.row(pair.input) -= lr * grad_v;
  for (const auto& [row, g] : grad_out) e.output.row(row) -= lr * g;
  return pair.weight * loss;
}

double negative_sampling_step(EmbeddingMatrix& e, const TrainingPair& pair, int k,
                              double lr, const NoiseDistribution& noise, Rng& rng) {
  std::vector<int> negatives;
  negatives.reserve(k);
  for (int i = 0; i < k; ++i) {
    const int n = noise.sample(rng);
    if (n == pair.output) continue;  // drawing the target yields no penalty term
    negatives.push_back(n);
  }
  return sgns_step_explicit(e, pair, negatives, lr);
}

namespace {

constexpr double kMinLrFraction = 1e-4;

// Shared training driver. `units` are independently trainable work items
// (sentences or networks); `expand` turns one unit into its pair stream.
// The learning rate decays linearly over epochs * total unit weight.
template <typename Unit, typename Expand>
void run_sgns_training(EmbeddingMatrix& e, const std::vector<Unit>& units,
                       const std::vector<double>& unit_sizes,
                       const EmbeddingTrainConfig& config, double initial_lr,
                       Expand&& expand) {
  const NoiseDistribution noise(e.vocab->counts());
  double total_size = 0.0;
  for (double s : unit_sizes) total_size += s;
  const double span = std::max(1.0, total_size * config.epochs);

  std::atomic<double> processed{0.0};
  auto worker = [&](std::size_t begin, std::size_t end, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TrainingPair> pairs;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      for (std::size_t u = begin; u < end; ++u) {
        const double done =
            processed.fetch_add(unit_sizes[u], std::memory_order_relaxed);
        const double lr =
            initial_lr * std::max(kMinLrFraction, 1.0 - done / span);
        pairs.clear();
        expand(units[u], rng, pairs);
        for (const auto& pair : pairs) {
          negative_sampling_step(e, pair, config.negatives, lr, noise, rng);
        }
      }
    }
  };

  if (config.threads <= 1) {
    // Deterministic mode: one pass per epoch with finiteness checks between.
    Rng rng(derive_seed(config.seed, "embedding-train"));
    const NoiseDistribution& nd = noise;
    std::vector<TrainingPair> pairs;
    double done = 0.0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
      for (std::size_t u = 0; u < units.size(); ++u) {
        const double lr =
            initial_lr * std::max(kMinLrFraction, 1.0 - done / span);
        done += unit_sizes[u];
        pairs.clear();
        expand(units[u], rng, pairs);
        for (const auto& pair : pairs) {
          negative_sampling_step(e, pair, config.negatives, lr, nd, rng);
        }
      }
      check_finite(e, epoch);
      log::debug("embedding epoch " + std::to_string(epoch + 1) + "/" +
                 std::to_string(config.epochs));
    }
  } else {
    // Racy-parallel mode: workers update shared matrices without locking.
    // Guarantees finiteness and planted-structure trends, not bit-identity.
    const std::size_t nthreads =
        std::min<std::size_t>(config.threads, std::max<std::size_t>(1, units.size()));
    std::vector<std::thread> threads;
    const std::size_t chunk = (units.size() + nthreads - 1) / nthreads;
    for (std::size_t t = 0; t < nthreads; ++t) {
      const std::size_t begin = t * chunk;
      const std::size_t end = std::min(units.size(), begin + chunk);
      if (begin >= end) break;
      threads.emplace_back(worker, begin, end,
                           derive_seed(derive_seed(config.seed, "embedding-train"), t));
    }
    for (auto& th : threads) th.join();
    check_finite(e, config.epochs - 1);
  }
}

void train_contextual_inplace(EmbeddingMatrix& e,
                              const std::vector<std::vector<int>>& sentences,
                              const EmbeddingTrainConfig& config, double initial_lr) {
  const auto& counts = e.vocab->counts();
  double total_count = 0.0;
  for (auto c : counts) total_count += static_cast<double>(c);

  std::vector<double> sizes;
  sizes.reserve(sentences.size());
  for (const auto& s : sentences) sizes.push_back(static_cast<double>(s.size()));

  const double t = config.subsample;
  run_sgns_training(
      e, sentences, sizes, config, initial_lr,
      [&](const std::vector<int>& sentence, Rng& rng, std::vector<TrainingPair>& out) {
        std::vector<int> kept;
        if (t > 0.0 && total_count > 0.0) {
          kept.reserve(sentence.size());
          for (int id : sentence) {
            const double f = static_cast<double>(counts[id]) / total_count;
            const double p_discard =
                f > 0.0 ? std::max(0.0, 1.0 - std::sqrt(t / f)) : 0.0;
            if (rng.uniform() >= p_discard) kept.push_back(id);
          }
        } else {
          kept = sentence;
        }
        out = generate_skipgram_pairs(kept, config.window, rng);
      });
}

void train_intra_inplace(EmbeddingMatrix& e, const std::vector<ConfusionNetwork>& cnets,
                         const EmbeddingTrainConfig& config, double initial_lr) {
  std::vector<double> sizes;
  sizes.reserve(cnets.size());
  for (const auto& net : cnets) {
    double pairs = 0.0;
    for (const auto& bin : net.bins) {
      const double a = static_cast<double>(bin.alternatives.size());
      pairs += a * (a - 1.0);
    }
    sizes.push_back(std::max(1.0, pairs));
  }
  run_sgns_training(e, cnets, sizes, config, initial_lr,
                    [&](const ConfusionNetwork& net, Rng& rng,
                        std::vector<TrainingPair>& out) {
                      out = generate_intra_confusion_pairs(net);
                      if (config.inter_confusion) {
                        auto inter =
                            generate_inter_confusion_pairs(net, config.window, rng);
                        out.insert(out.end(), inter.begin(), inter.end());
                      }
                    });
}

}  // namespace

EmbeddingMatrix train_embedding(const std::vector<std::vector<int>>& sentences,
                                std::shared_ptr<const Vocabulary> vocab,
                                const EmbeddingTrainConfig& config) {
  if (config.scheme != EmbeddingScheme::PlainSkipgram) {
    throw std::runtime_error("scheme/source mismatch: text corpus requires plain-skipgram");
  }
  if (config.dim < 1 || config.epochs < 1 || config.negatives < 1 ||
      !(config.learning_rate > 0.0)) {
    throw std::invalid_argument("invalid embedding training config");
  }
  EmbeddingMatrix e = init_embedding(std::move(vocab), config.dim, config.seed);
  train_contextual_inplace(e, sentences, config, config.learning_rate);
  return e;
}

EmbeddingMatrix train_embedding(const std::vector<ConfusionNetwork>& cnets,
                                std::shared_ptr<const Vocabulary> vocab,
                                const EmbeddingTrainConfig& config) {
  if (config.dim < 1 || config.epochs < 1 || config.negatives < 1 ||
      !(config.learning_rate > 0.0)) {
    throw std::invalid_argument("invalid embedding training config");
  }
  if (config.scheme == EmbeddingScheme::ToppathSkipgram) {
    std::vector<std::vector<int>> sentences;
    sentences.reserve(cnets.size());
    for (const auto& net : cnets) sentences.push_back(top_path(net));
    EmbeddingMatrix e = init_embedding(std::move(vocab), config.dim, config.seed);
    train_contextual_inplace(e, sentences, config, config.learning_rate);
    return e;
  }
  if (config.scheme == EmbeddingScheme::IntraConfusion) {
    EmbeddingMatrix e = init_embedding(std::move(vocab), config.dim, config.seed);
    train_intra_inplace(e, cnets, config, config.learning_rate);
    return e;
  }
  throw std::runtime_error(
      "scheme/source mismatch: confusion networks require toppath-skipgram or intra-confusion");
}

EmbeddingMatrix concatenate_embeddings(const EmbeddingMatrix& e1,
                                       const EmbeddingMatrix& e2) {
  if (!e1.vocab || !e2.vocab || e1.vocab->words() != e2.vocab->words()) {
    throw std::runtime_error("vocabulary mismatch between embeddings");
  }
  EmbeddingMatrix out;
  out.vocab = e1.vocab;
  out.input.resize(e1.rows(), e1.dim() + e2.dim());
  out.input << e1.input, e2.input;
  out.output = Eigen::MatrixXd::Zero(e1.rows(), e1.dim() + e2.dim());
  return out;
}

EmbeddingMatrix joint_optimize(const EmbeddingMatrix& concat,
                               const std::vector<ConfusionNetwork>& cnets,
                               const EmbeddingTrainConfig& config) {
  EmbeddingMatrix e;
  e.vocab = concat.vocab;
  e.input = concat.input;
  e.output = Eigen::MatrixXd::Zero(concat.rows(), concat.dim());
  if (config.epochs == 0) return e;
  EmbeddingTrainConfig joint = config;
  joint.epochs = std::max(1, config.epochs);
  const double lr = config.learning_rate * config.joint_lr_scale;
  if (config.frozen_prefix_dims > 0) {
    // Route through the explicit step to honor the frozen block.
    const NoiseDistribution noise(e.vocab->counts());
    Rng rng(derive_seed(config.seed, "embedding-train"));
    std::vector<double> sizes;
    double total = 0.0;
    for (const auto& net : cnets) {
      double p = 0.0;
      for (const auto& bin : net.bins) {
        const double a = static_cast<double>(bin.alternatives.size());
        p += a * (a - 1.0);
      }
      sizes.push_back(std::max(1.0, p));
      total += sizes.back();
    }
    const double span = std::max(1.0, total * joint.epochs);
    double done = 0.0;
    for (int epoch = 0; epoch < joint.epochs; ++epoch) {
      for (std::size_t u = 0; u < cnets.size(); ++u) {
        const double cur = lr * std::max(kMinLrFraction, 1.0 - done / span);
        done += sizes[u];
        for (const auto& pair : generate_intra_confusion_pairs(cnets[u])) {
          std::vector<int> negatives;
          for (int i = 0; i < joint.negatives; ++i) {
            const int n = noise.sample(rng);
            if (n != pair.output) negatives.push_back(n);
          }
          sgns_step_explicit(e, pair, negatives, cur, config.frozen_prefix_dims);
        }
      }
      check_finite(e, epoch);
    }
  } else {
    train_intra_inplace(e, cnets, joint, lr);
  }
  return e;
}

double cosine_similarity(const EmbeddingMatrix& e, int a, int b) {
  const double na = e.input.row(a).norm();
  const double nb = e.input.row(b).norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return e.input.row(a).dot(e.input.row(b)) / (na * nb);
}

std::vector<std::pair<int, double>> nearest_neighbors(const EmbeddingMatrix& e,
                                                      int word_id, int n) {
  if (word_id < 0 || word_id >= e.rows()) {
    throw std::out_of_range("word id out of range: " + std::to_string(word_id));
  }
  if (n < 1) throw std::invalid_argument("n must be >= 1");
  std::vector<std::pair<int, double>> scored;
  scored.reserve(e.rows() - 1);
  for (int i = 0; i < e.rows(); ++i) {
    if (i == word_id) continue;
    scored.emplace_back(i, cosine_similarity(e, word_id, i));
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (static_cast<int>(scored.size()) > n) scored.resize(n);
  return scored;
}

namespace {

// Leading eigenvector of a symmetric PSD matrix by power iteration.
Eigen::VectorXd power_iteration(const Eigen::MatrixXd& m, double tol, int max_iters) {
  const int d = static_cast<int>(m.rows());
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v(i) = 1.0 + 1e-3 * i;  // non-degenerate start
  v.normalize();
  for (int it = 0; it < max_iters; ++it) {
    Eigen::VectorXd next = m * v;
    const double norm = next.norm();
    if (norm < 1e-300) break;  // zero variance left
    next /= norm;
    if ((next - v).norm() < tol) {
      v = next;
      break;
    }
    v = next;
  }
  // Deterministic sign: largest-magnitude component positive.
  int arg = 0;
  v.cwiseAbs().maxCoeff(&arg);
  if (v(arg) < 0.0) v = -v;
  return v;
}

}  // namespace

std::vector<std::tuple<std::string, double, double>> pca_project_2d(
    const EmbeddingMatrix& e, const std::vector<int>& word_ids) {
  if (word_ids.size() < 3) throw std::runtime_error("pca requires at least 3 words");
  const int n = static_cast<int>(word_ids.size());
  const int d = e.dim();
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    if (word_ids[i] < 0 || word_ids[i] >= e.rows()) {
      throw std::out_of_range("word id out of range: " + std::to_string(word_ids[i]));
    }
    x.row(i) = e.input.row(word_ids[i]);
  }
  x.rowwise() -= x.colwise().mean();
  Eigen::MatrixXd cov = x.transpose() * x / static_cast<double>(n - 1);

  constexpr double kTol = 1e-9;
  constexpr int kMaxIters = 100000;
  const Eigen::VectorXd pc1 = power_iteration(cov, kTol, kMaxIters);
  Eigen::VectorXd pc2;
  if (d >= 2) {
    const double lambda1 = pc1.dot(cov * pc1);
    cov -= lambda1 * pc1 * pc1.transpose();
    pc2 = power_iteration(cov, kTol, kMaxIters);
  } else {
    pc2 = Eigen::VectorXd::Zero(d);
  }

  std::vector<std::tuple<std::string, double, double>> rows;
  rows.reserve(n);
  for (int i = 0; i < n; ++i) {
    rows.emplace_back(e.vocab ? e.vocab->word_of(word_ids[i])
                              : std::to_string(word_ids[i]),
                      x.row(i).dot(pc1), x.row(i).dot(pc2));
  }
  return rows;
}

void save_embedding_text(const EmbeddingMatrix& e, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << e.rows() << ' ' << e.dim() << '\n';
  out.precision(9);
  for (int r = 0; r < e.rows(); ++r) {
    out << e.vocab->word_of(r);
    for (int c = 0; c < e.dim(); ++c) out << ' ' << e.input(r, c);
    out << '\n';
  }
}

EmbeddingMatrix load_embedding_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::string line;
  std::vector<std::string> words;
  std::vector<std::vector<double>> rows;
  int lineno = 0;
  int dim = -1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream iss(line);
    if (lineno == 1) {
      // `<V> <dim>` header, or a headerless first data row.
      std::vector<std::string> toks;
      std::string t;
      while (iss >> t) toks.push_back(t);
      if (toks.size() == 2 &&
          toks[0].find_first_not_of("0123456789") == std::string::npos &&
          toks[1].find_first_not_of("0123456789") == std::string::npos) {
        dim = std::stoi(toks[1]);
        continue;
      }
      if (toks.size() < 2) {
        throw std::runtime_error(path + ": line 1: not an embedding file");
      }
      words.push_back(toks[0]);
      std::vector<double> row;
      for (std::size_t i = 1; i < toks.size(); ++i) row.push_back(std::stod(toks[i]));
      dim = static_cast<int>(row.size());
      rows.push_back(std::move(row));
      continue;
    }
    std::string word;
    iss >> word;
    std::vector<double> row;
    double v;
    while (iss >> v) row.push_back(v);
    if (static_cast<int>(row.size()) != dim) {
      throw std::runtime_error(path + ": line " + std::to_string(lineno) +
                               ": expected " + std::to_string(dim) + " values");
    }
    words.push_back(word);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": empty embedding file");

  auto vocab = std::make_shared<Vocabulary>(Vocabulary::from_ordered_words(words));
  EmbeddingMatrix e;
  e.vocab = vocab;
  e.input = Eigen::MatrixXd::Zero(vocab->size(), dim);  // <unk> row zero if absent
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (int c = 0; c < dim; ++c) e.input(static_cast<int>(r), c) = rows[r][c];
  }
  e.output = Eigen::MatrixXd::Zero(vocab->size(), dim);
  return e;
}

namespace {

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error(path + ": truncated binary embedding");
  return v;
}

}  // namespace

void save_embedding_binary(const EmbeddingMatrix& e, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write("C2VE", 4);
  write_raw<std::uint32_t>(out, 1);
  write_raw<std::uint64_t>(out, static_cast<std::uint64_t>(e.rows()));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(e.dim()));
  for (int r = 0; r < e.rows(); ++r) {
    for (int c = 0; c < e.dim(); ++c) {
      write_raw<float>(out, static_cast<float>(e.input(r, c)));
    }
  }
  for (int r = 0; r < e.rows(); ++r) {
    const std::string& w = e.vocab->word_of(r);
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(w.size()));
    out.write(w.data(), static_cast<std::streamsize>(w.size()));
  }
}

EmbeddingMatrix load_embedding_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "C2VE", 4) != 0) {
    throw std::runtime_error(path + ": not a C2VE embedding file");
  }
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != 1) throw std::runtime_error(path + ": unsupported C2VE version");
  const auto v = read_raw<std::uint64_t>(in, path);
  const auto dim = read_raw<std::uint32_t>(in, path);
  EmbeddingMatrix e;
  e.input.resize(static_cast<int>(v), static_cast<int>(dim));
  for (std::uint64_t r = 0; r < v; ++r) {
    for (std::uint32_t c = 0; c < dim; ++c) {
      e.input(static_cast<int>(r), static_cast<int>(c)) = read_raw<float>(in, path);
    }
  }
  std::vector<std::string> words;
  words.reserve(v);
  for (std::uint64_t r = 0; r < v; ++r) {
    const auto len = read_raw<std::uint32_t>(in, path);
    std::string w(len, '\0');
    in.read(w.data(), len);
    if (!in) throw std::runtime_error(path + ": truncated vocabulary");
    words.push_back(std::move(w));
  }
  auto vocab = std::make_shared<Vocabulary>(Vocabulary::from_ordered_words(words));
  if (vocab->size() != static_cast<int>(v)) {
    // <unk> was appended; give it a zero row.
    e.input.conservativeResize(vocab->size(), Eigen::NoChange);
    e.input.row(vocab->size() - 1).setZero();
  }
  e.vocab = vocab;
  e.output = Eigen::MatrixXd::Zero(vocab->size(), static_cast<int>(dim));
  return e;
}

void save_embedding(const EmbeddingMatrix& e, const std::string& path) {
  if (path.size() >= 5 && path.substr(path.size() - 5) == ".c2ve") {
    save_embedding_binary(e, path);
  } else {
    save_embedding_text(e, path);
  }
}

EmbeddingMatrix load_embedding(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("cannot open file: " + path);
  char magic[4] = {0, 0, 0, 0};
  probe.read(magic, 4);
  probe.close();
  if (std::memcmp(magic, "C2VE", 4) == 0) return load_embedding_binary(path);
  return load_embedding_text(path);
}

}  // namespace confusable
