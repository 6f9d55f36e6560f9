#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

#include "confusable/corpus.hpp"
#include "confusable/embedding.hpp"
#include "confusable/rng.hpp"

namespace confusable {

// One direction of the BiLSTM. Gate rows are stacked [input; forget;
// candidate; output], each block `hidden` tall.
struct LstmParameters {
  Eigen::MatrixXd w_in;   // 4h x embed_dim
  Eigen::MatrixXd w_rec;  // 4h x h
  Eigen::VectorXd bias;   // 4h

  static LstmParameters zeros(int hidden, int input_dim);
  static LstmParameters uniform_init(int hidden, int input_dim, Rng& rng);
  void set_zero();
};

struct IntentModel {
  EmbeddingMatrix embedding;
  bool embedding_trainable = false;
  LstmParameters forward, backward;
  Eigen::MatrixXd w_out;  // labels x 2h
  Eigen::VectorXd b_out;  // labels
  double dropout = 0.0;
  int hidden = 0;

  int labels() const { return static_cast<int>(b_out.size()); }
  int embed_dim() const { return embedding.dim(); }
};

IntentModel init_intent_model(const EmbeddingMatrix& embedding, bool trainable,
                              int hidden, int labels, double dropout,
                              std::uint64_t seed);

struct DirectionTrace {
  // One entry per processed timestep, in processing order.
  std::vector<Eigen::VectorXd> gate_i, gate_f, gate_g, gate_o;
  std::vector<Eigen::VectorXd> cell, hidden;
};

struct ForwardTrace {
  std::vector<int> tokens;
  DirectionTrace fwd, bwd;             // bwd runs right-to-left
  Eigen::VectorXd concat_state;        // [h_fwd_T ; h_bwd_0] before dropout
  Eigen::VectorXd dropped_state;       // after inverted dropout (== concat in eval)
  Eigen::VectorXd dropout_mask;        // per-unit keep scale, 1s in eval mode
};

ForwardTrace bilstm_forward(const IntentModel& model, const std::vector<int>& tokens,
                            bool train_mode, Rng* rng);

struct Prediction {
  Eigen::VectorXd probabilities;
  int label = 0;  // argmax, ties to lower id
};

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);
Prediction predict_intent(const IntentModel& model, const std::vector<int>& tokens);

struct Gradients {
  LstmParameters forward, backward;
  Eigen::MatrixXd w_out;
  Eigen::VectorXd b_out;
  std::map<int, Eigen::VectorXd> embedding_rows;  // only when trainable
};

// Cross-entropy loss against the true intent plus exact gradients by
// backpropagation through time.
std::pair<double, Gradients> loss_and_gradients(const IntentModel& model,
                                                const LabeledUtterance& utterance,
                                                Rng* rng);

struct AdamTensor {
  Eigen::ArrayXXd m, v;
  static AdamTensor like(const Eigen::MatrixXd& p);
  static AdamTensor like(const Eigen::VectorXd& p);
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Standard bias-corrected elementwise Adam update at global step t (>= 1).
void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
                 AdamTensor& state, double lr, long t, const AdamConfig& cfg = {});
void adam_update(Eigen::Ref<Eigen::VectorXd> param, const Eigen::VectorXd& grad,
                 AdamTensor& state, double lr, long t, const AdamConfig& cfg = {});

struct AdamLstm {
  AdamTensor w_in, w_rec, bias;
};

struct ModelAdamState {
  AdamLstm forward, backward;
  AdamTensor w_out, b_out;
  AdamTensor embedding;  // dense; rows updated lazily as they are touched
  long step = 0;
  static ModelAdamState like(const IntentModel& model);
};

// One batch-size-1 optimization step; returns the loss.
double train_step(IntentModel& model, const LabeledUtterance& utterance,
                  ModelAdamState& state, double lr, Rng* rng,
                  const AdamConfig& cfg = {});

struct TrainRunConfig {
  std::vector<int> hidden_grid{256, 128, 64, 32};
  std::vector<double> dropout_grid{0.1, 0.2, 0.25};
  std::vector<double> lr_grid{0.001, 0.0005};
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 1;
};

struct GridPointLog {
  int hidden;
  double dropout;
  double lr;
  std::vector<double> dev_accuracy;  // per epoch, in training order
};

struct TrainResult {
  IntentModel model;
  int hidden = 0;
  double dropout = 0.0;
  double lr = 0.0;
  int best_epoch = 0;  // 1-based epoch of the chosen checkpoint
  double dev_accuracy = 0.0;
  std::vector<GridPointLog> log;
};

TrainResult train_intent_model(const DatasetSplit& split,
                               const EmbeddingMatrix& embedding, bool trainable,
                               const TrainRunConfig& config);

// (accuracy, greedy predictions).
std::pair<double, std::vector<int>> evaluate_model(
    const IntentModel& model, const std::vector<LabeledUtterance>& data);

// Checkpoint: magic C2VM, version, dims, label names, parameter blocks as
// little-endian f32, embedded embedding matrix and vocabulary.
void save_model(const IntentModel& model, const std::vector<std::string>& label_names,
                const std::string& path);
std::pair<IntentModel, std::vector<std::string>> load_model(const std::string& path);

}  // namespace confusable
