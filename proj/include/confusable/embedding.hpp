#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "confusable/corpus.hpp"
#include "confusable/rng.hpp"

namespace confusable {

enum class EmbeddingScheme {
  PlainSkipgram,    // contextual pairs on plain text
  ToppathSkipgram,  // contextual pairs on confusion-network top paths
  IntraConfusion,   // acoustic pairs within confusion bins
};

struct TrainingPair {
  int input;
  int output;
  double weight;  // in (0, 1]
};

struct EmbeddingTrainConfig {
  int dim = 100;
  int window = 5;
  int negatives = 5;
  double learning_rate = 0.025;
  int epochs = 5;
  double subsample = 1e-4;       // 0 disables subsampling
  std::uint64_t seed = 1;
  EmbeddingScheme scheme = EmbeddingScheme::PlainSkipgram;
  int threads = 1;               // >1 selects the racy-parallel mode
  double joint_lr_scale = 0.25;  // joint optimization runs at scale * lr
  int frozen_prefix_dims = 0;    // joint option: leave leading dims untouched
  bool inter_confusion = false;  // experimental: cross-bin context pairs too
};

struct EmbeddingMatrix {
  Eigen::MatrixXd input;   // V x dim, the published representation
  Eigen::MatrixXd output;  // V x dim, context side (training only)
  std::shared_ptr<const Vocabulary> vocab;

  int dim() const { return static_cast<int>(input.cols()); }
  int rows() const { return static_cast<int>(input.rows()); }
};

// Unigram^0.75 noise distribution for negative sampling.
class NoiseDistribution {
 public:
  explicit NoiseDistribution(const std::vector<std::int64_t>& counts);
  int sample(Rng& rng) const;

 private:
  std::vector<double> cumulative_;
};

// Dynamic-window skip-gram pairs: per position a width b ~ U{1..window} is
// drawn, then every (center, context) at offset <= b is emitted with weight 1.
std::vector<TrainingPair> generate_skipgram_pairs(const std::vector<int>& tokens,
                                                  int window, Rng& rng);

// Acoustic-axis pairs: every ordered pair (u, v) of distinct same-bin
// alternatives, weighted by the posterior of v. Singleton bins emit nothing.
std::vector<TrainingPair> generate_intra_confusion_pairs(const ConfusionNetwork& cnet);

// Cross-bin pairs within a window over the network (experimental).
std::vector<TrainingPair> generate_inter_confusion_pairs(const ConfusionNetwork& cnet,
                                                         int window, Rng& rng);

// Weighted negative-sampling loss for one pair with an explicit negative list:
//   L = -w [ log sigma(u_out . v_in) + sum_n log sigma(-u_n . v_in) ]
double sgns_loss(const EmbeddingMatrix& e, const TrainingPair& pair,
                 const std::vector<int>& negatives);

// Applies the exact gradient of sgns_loss with step size lr; returns the
// pre-update loss.
double sgns_step_explicit(EmbeddingMatrix& e, const TrainingPair& pair,
                          const std::vector<int>& negatives, double lr,
                          int frozen_prefix_dims = 0);

// Samples k negatives from the noise distribution (resampling draws equal to
// the pair's output id), then performs sgns_step_explicit.
double negative_sampling_step(EmbeddingMatrix& e, const TrainingPair& pair, int k,
                              double lr, const NoiseDistribution& noise, Rng& rng);

EmbeddingMatrix train_embedding(const std::vector<std::vector<int>>& sentences,
                                std::shared_ptr<const Vocabulary> vocab,
                                const EmbeddingTrainConfig& config);
EmbeddingMatrix train_embedding(const std::vector<ConfusionNetwork>& cnets,
                                std::shared_ptr<const Vocabulary> vocab,
                                const EmbeddingTrainConfig& config);

EmbeddingMatrix concatenate_embeddings(const EmbeddingMatrix& e1,
                                       const EmbeddingMatrix& e2);

// Continues negative-sampling training of a concatenated embedding on the
// intra-confusion pair stream, with a fresh zero output matrix and a reduced
// learning rate (config.learning_rate * config.joint_lr_scale).
EmbeddingMatrix joint_optimize(const EmbeddingMatrix& concat,
                               const std::vector<ConfusionNetwork>& cnets,
                               const EmbeddingTrainConfig& config);

// Top-n neighbors by cosine over input vectors, excluding the query;
// descending similarity, ties by lower id.
std::vector<std::pair<int, double>> nearest_neighbors(const EmbeddingMatrix& e,
                                                      int word_id, int n);

double cosine_similarity(const EmbeddingMatrix& e, int a, int b);

// Mean-centers the selected vectors and projects onto the top-2 principal
// components (power iteration with deflation).
std::vector<std::tuple<std::string, double, double>> pca_project_2d(
    const EmbeddingMatrix& e, const std::vector<int>& word_ids);

// Textual format: header `<V> <dim>` then `word v1 .. vdim` per line. The
// loader also accepts headerless files (dim inferred from the first row).
void save_embedding_text(const EmbeddingMatrix& e, const std::string& path);
EmbeddingMatrix load_embedding_text(const std::string& path);

// Binary format: magic C2VE, version u32, V u64, dim u32, row-major LE f32,
// then length-prefixed UTF-8 vocabulary strings.
void save_embedding_binary(const EmbeddingMatrix& e, const std::string& path);
EmbeddingMatrix load_embedding_binary(const std::string& path);

void save_embedding(const EmbeddingMatrix& e, const std::string& path);  // by extension
EmbeddingMatrix load_embedding(const std::string& path);

}  // namespace confusable
