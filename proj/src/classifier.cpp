#include "confusable/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "confusable/log.hpp"

namespace confusable {

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& x) {
  return (1.0 / (1.0 + (-x.array()).exp())).matrix();
}

}  // namespace

LstmParameters LstmParameters::zeros(int hidden, int input_dim) {
  LstmParameters p;
  p.w_in = Eigen::MatrixXd::Zero(4 * hidden, input_dim);
  p.w_rec = Eigen::MatrixXd::Zero(4 * hidden, hidden);
  p.bias = Eigen::VectorXd::Zero(4 * hidden);
  return p;
}

LstmParameters LstmParameters::uniform_init(int hidden, int input_dim, Rng& rng) {
  LstmParameters p = zeros(hidden, input_dim);
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (int r = 0; r < p.w_in.rows(); ++r) {
    for (int c = 0; c < p.w_in.cols(); ++c) p.w_in(r, c) = rng.uniform(-bound, bound);
  }
  for (int r = 0; r < p.w_rec.rows(); ++r) {
    for (int c = 0; c < p.w_rec.cols(); ++c) p.w_rec(r, c) = rng.uniform(-bound, bound);
  }
  return p;
}

void LstmParameters::set_zero() {
  w_in.setZero();
  w_rec.setZero();
  bias.setZero();
}

IntentModel init_intent_model(const EmbeddingMatrix& embedding, bool trainable,
                              int hidden, int labels, double dropout,
                              std::uint64_t seed) {
  if (hidden < 1 || labels < 1) throw std::invalid_argument("invalid model dims");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("dropout must be in [0,1)");
  IntentModel m;
  m.embedding = embedding;
  m.embedding_trainable = trainable;
  m.hidden = hidden;
  m.dropout = dropout;
  Rng rng(derive_seed(seed, "classifier-init"));
  m.forward = LstmParameters::uniform_init(hidden, embedding.dim(), rng);
  m.backward = LstmParameters::uniform_init(hidden, embedding.dim(), rng);
  m.w_out = Eigen::MatrixXd::Zero(labels, 2 * hidden);
  m.b_out = Eigen::VectorXd::Zero(labels);
  return m;
}

namespace {

// Runs one direction over the token sequence; `positions` gives processing
// order (left-to-right or right-to-left).
DirectionTrace run_direction(const LstmParameters& p, const EmbeddingMatrix& emb,
                             const std::vector<int>& tokens,
                             const std::vector<int>& positions, int hidden) {
  DirectionTrace trace;
  const auto n = positions.size();
  trace.gate_i.reserve(n);
  trace.gate_f.reserve(n);
  trace.gate_g.reserve(n);
  trace.gate_o.reserve(n);
  trace.cell.reserve(n);
  trace.hidden.reserve(n);
  Eigen::VectorXd h = Eigen::VectorXd::Zero(hidden);
  Eigen::VectorXd c = Eigen::VectorXd::Zero(hidden);
  for (int pos : positions) {
    const Eigen::VectorXd x = emb.input.row(tokens[pos]).transpose();
    const Eigen::VectorXd pre = p.w_in * x + p.w_rec * h + p.bias;
    const Eigen::VectorXd gi = sigmoid(pre.segment(0, hidden));
    const Eigen::VectorXd gf = sigmoid(pre.segment(hidden, hidden));
    const Eigen::VectorXd gg = pre.segment(2 * hidden, hidden).array().tanh().matrix();
    const Eigen::VectorXd go = sigmoid(pre.segment(3 * hidden, hidden));
    c = (gf.array() * c.array() + gi.array() * gg.array()).matrix();
    h = (go.array() * c.array().tanh()).matrix();
    trace.gate_i.push_back(gi);
    trace.gate_f.push_back(gf);
    trace.gate_g.push_back(gg);
    trace.gate_o.push_back(go);
    trace.cell.push_back(c);
    trace.hidden.push_back(h);
  }
  return trace;
}

}  // namespace

ForwardTrace bilstm_forward(const IntentModel& model, const std::vector<int>& tokens,
                            bool train_mode, Rng* rng) {
  if (tokens.empty()) throw std::runtime_error("empty token sequence");
  const int h = model.hidden;
  std::vector<int> order(tokens.size());
  std::iota(order.begin(), order.end(), 0);

  ForwardTrace trace;
  trace.tokens = tokens;
  trace.fwd = run_direction(model.forward, model.embedding, tokens, order, h);
  std::reverse(order.begin(), order.end());
  trace.bwd = run_direction(model.backward, model.embedding, tokens, order, h);

  trace.concat_state.resize(2 * h);
  trace.concat_state << trace.fwd.hidden.back(), trace.bwd.hidden.back();

  trace.dropout_mask = Eigen::VectorXd::Ones(2 * h);
  if (train_mode && model.dropout > 0.0) {
    if (!rng) throw std::runtime_error("train-mode forward with dropout needs an rng");
    const double keep = 1.0 - model.dropout;
    for (int i = 0; i < 2 * h; ++i) {
      trace.dropout_mask(i) = rng->uniform() < keep ? 1.0 / keep : 0.0;
    }
  }
  trace.dropped_state = trace.concat_state.cwiseProduct(trace.dropout_mask);
  return trace;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double shift = logits.maxCoeff();
  Eigen::VectorXd exps = (logits.array() - shift).exp().matrix();
  return exps / exps.sum();
}

Prediction predict_intent(const IntentModel& model, const std::vector<int>& tokens) {
  const ForwardTrace trace = bilstm_forward(model, tokens, /*train_mode=*/false, nullptr);
  Prediction pred;
  pred.probabilities = softmax(model.w_out * trace.dropped_state + model.b_out);
  pred.label = 0;
  for (int i = 1; i < pred.probabilities.size(); ++i) {
    if (pred.probabilities(i) > pred.probabilities(pred.label)) pred.label = i;
  }
  return pred;
}

namespace {

// Backward pass through one direction. `dh_last` is the loss gradient at the
// final processed hidden state; only the final state feeds the output layer,
// so earlier steps receive gradient through the recurrence alone.
void backward_direction(const LstmParameters& p, const DirectionTrace& trace,
                        const EmbeddingMatrix& emb, const std::vector<int>& tokens,
                        const std::vector<int>& positions,
                        const Eigen::VectorXd& dh_last, LstmParameters& grads,
                        std::map<int, Eigen::VectorXd>* embedding_grads) {
  const int h = static_cast<int>(dh_last.size());
  const int steps = static_cast<int>(positions.size());
  Eigen::VectorXd dh = dh_last;
  Eigen::VectorXd dc = Eigen::VectorXd::Zero(h);
  for (int s = steps - 1; s >= 0; --s) {
    const auto& gi = trace.gate_i[s];
    const auto& gf = trace.gate_f[s];
    const auto& gg = trace.gate_g[s];
    const auto& go = trace.gate_o[s];
    const Eigen::VectorXd tc = trace.cell[s].array().tanh().matrix();
    const Eigen::VectorXd c_prev =
        s > 0 ? trace.cell[s - 1] : Eigen::VectorXd::Zero(h);
    const Eigen::VectorXd h_prev =
        s > 0 ? trace.hidden[s - 1] : Eigen::VectorXd::Zero(h);

    const Eigen::ArrayXd do_ = dh.array() * tc.array();
    dc.array() += dh.array() * go.array() * (1.0 - tc.array().square());

    const Eigen::ArrayXd di = dc.array() * gg.array();
    const Eigen::ArrayXd df = dc.array() * c_prev.array();
    const Eigen::ArrayXd dg = dc.array() * gi.array();

    Eigen::VectorXd dpre(4 * h);
    dpre.segment(0, h) = (di * gi.array() * (1.0 - gi.array())).matrix();
    dpre.segment(h, h) = (df * gf.array() * (1.0 - gf.array())).matrix();
    dpre.segment(2 * h, h) = (dg * (1.0 - gg.array().square())).matrix();
    dpre.segment(3 * h, h) = (do_ * go.array() * (1.0 - go.array())).matrix();

    const int pos = positions[s];
    const Eigen::VectorXd x = emb.input.row(tokens[pos]).transpose();
    grads.w_in.noalias() += dpre * x.transpose();
    grads.w_rec.noalias() += dpre * h_prev.transpose();
    grads.bias += dpre;

    if (embedding_grads) {
      auto [it, inserted] = embedding_grads->try_emplace(
          tokens[pos], Eigen::VectorXd::Zero(emb.dim()));
      it->second.noalias() += p.w_in.transpose() * dpre;
    }

    dh.noalias() = p.w_rec.transpose() * dpre;
    dc = dc.cwiseProduct(gf);
  }
}

}  // namespace

std::pair<double, Gradients> loss_and_gradients(const IntentModel& model,
                                                const LabeledUtterance& utterance,
                                                Rng* rng) {
  const ForwardTrace trace = bilstm_forward(model, utterance.tokens, /*train_mode=*/true, rng);
  const Eigen::VectorXd probs = softmax(model.w_out * trace.dropped_state + model.b_out);

  const int labels = model.labels();
  if (utterance.intent < 0 || utterance.intent >= labels) {
    throw std::runtime_error("utterance label outside the trainable label set");
  }
  const double loss = -std::log(std::max(probs(utterance.intent), 1e-300));

  Gradients g;
  const int h = model.hidden;
  g.forward = LstmParameters::zeros(h, model.embed_dim());
  g.backward = LstmParameters::zeros(h, model.embed_dim());

  Eigen::VectorXd dlogits = probs;
  dlogits(utterance.intent) -= 1.0;
  g.w_out = dlogits * trace.dropped_state.transpose();
  g.b_out = dlogits;

  const Eigen::VectorXd dz =
      (model.w_out.transpose() * dlogits).cwiseProduct(trace.dropout_mask);

  std::vector<int> order(utterance.tokens.size());
  std::iota(order.begin(), order.end(), 0);
  auto* emb_grads = model.embedding_trainable ? &g.embedding_rows : nullptr;
  backward_direction(model.forward, trace.fwd, model.embedding, utterance.tokens,
                     order, dz.head(h), g.forward, emb_grads);
  std::reverse(order.begin(), order.end());
  backward_direction(model.backward, trace.bwd, model.embedding, utterance.tokens,
                     order, dz.tail(h), g.backward, emb_grads);
  return {loss, std::move(g)};
}

AdamTensor AdamTensor::like(const Eigen::MatrixXd& p) {
  return {Eigen::ArrayXXd::Zero(p.rows(), p.cols()),
          Eigen::ArrayXXd::Zero(p.rows(), p.cols())};
}

AdamTensor AdamTensor::like(const Eigen::VectorXd& p) {
  return {Eigen::ArrayXXd::Zero(p.size(), 1), Eigen::ArrayXXd::Zero(p.size(), 1)};
}

namespace {

template <typename M, typename V, typename P, typename G>
void adam_apply(M&& m, V&& v, P&& param, const G& grad, double lr, long t,
                const AdamConfig& cfg) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.square();
  const double mc = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double vc = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  param -= lr * (m / mc) / ((v / vc).sqrt() + cfg.epsilon);
}

}  // namespace

void adam_update(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
                 AdamTensor& state, double lr, long t, const AdamConfig& cfg) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols() ||
      state.m.rows() != grad.rows() || state.m.cols() != grad.cols()) {
    throw std::runtime_error("adam shape mismatch");
  }
  if (t < 1) throw std::invalid_argument("adam step index must be >= 1");
  Eigen::ArrayXXd p = param.array();
  adam_apply(state.m, state.v, p, grad.array(), lr, t, cfg);
  param = p.matrix();
}

void adam_update(Eigen::Ref<Eigen::VectorXd> param, const Eigen::VectorXd& grad,
                 AdamTensor& state, double lr, long t, const AdamConfig& cfg) {
  if (param.size() != grad.size() || state.m.rows() != grad.size()) {
    throw std::runtime_error("adam shape mismatch");
  }
  if (t < 1) throw std::invalid_argument("adam step index must be >= 1");
  Eigen::ArrayXXd p(param.size(), 1);
  p.col(0) = param.array();
  Eigen::ArrayXXd g(grad.size(), 1);
  g.col(0) = grad.array();
  adam_apply(state.m, state.v, p, g, lr, t, cfg);
  param = p.col(0).matrix();
}

ModelAdamState ModelAdamState::like(const IntentModel& model) {
  ModelAdamState s;
  s.forward = {AdamTensor::like(model.forward.w_in), AdamTensor::like(model.forward.w_rec),
               AdamTensor::like(model.forward.bias)};
  s.backward = {AdamTensor::like(model.backward.w_in),
                AdamTensor::like(model.backward.w_rec),
                AdamTensor::like(model.backward.bias)};
  s.w_out = AdamTensor::like(model.w_out);
  s.b_out = AdamTensor::like(model.b_out);
  if (model.embedding_trainable) s.embedding = AdamTensor::like(model.embedding.input);
  return s;
}

double train_step(IntentModel& model, const LabeledUtterance& utterance,
                  ModelAdamState& state, double lr, Rng* rng, const AdamConfig& cfg) {
  auto [loss, g] = loss_and_gradients(model, utterance, rng);
  const long t = ++state.step;
  adam_update(model.forward.w_in, g.forward.w_in, state.forward.w_in, lr, t, cfg);
  adam_update(model.forward.w_rec, g.forward.w_rec, state.forward.w_rec, lr, t, cfg);
  adam_update(model.forward.bias, g.forward.bias, state.forward.bias, lr, t, cfg);
  adam_update(model.backward.w_in, g.backward.w_in, state.backward.w_in, lr, t, cfg);
  adam_update(model.backward.w_rec, g.backward.w_rec, state.backward.w_rec, lr, t, cfg);
  adam_update(model.backward.bias, g.backward.bias, state.backward.bias, lr, t, cfg);
  adam_update(model.w_out, g.w_out, state.w_out, lr, t, cfg);
  adam_update(model.b_out, g.b_out, state.b_out, lr, t, cfg);
  // Lazy per-row Adam for touched embedding rows, bias-corrected at global t.
  for (const auto& [row, grad] : g.embedding_rows) {
    Eigen::ArrayXXd p(1, model.embed_dim());
    p.row(0) = model.embedding.input.row(row).array();
    Eigen::ArrayXXd gr(1, model.embed_dim());
    gr.row(0) = grad.transpose().array();
    adam_apply(state.embedding.m.row(row), state.embedding.v.row(row), p, gr, lr, t, cfg);
    model.embedding.input.row(row) = p.row(0).matrix();
  }
  return loss;
}

std::pair<double, std::vector<int>> evaluate_model(
    const IntentModel& model, const std::vector<LabeledUtterance>& data) {
  if (data.empty()) throw std::runtime_error("empty evaluation set");
  std::vector<int> predictions;
  predictions.reserve(data.size());
  int correct = 0;
  for (const auto& u : data) {
    const int label = predict_intent(model, u.tokens).label;
    predictions.push_back(label);
    if (label == u.intent) ++correct;
  }
  return {static_cast<double>(correct) / static_cast<double>(data.size()),
          std::move(predictions)};
}

TrainResult train_intent_model(const DatasetSplit& split,
                               const EmbeddingMatrix& embedding, bool trainable,
                               const TrainRunConfig& config) {
  if (split.train.empty() || split.dev.empty()) {
    throw std::runtime_error("train and dev splits must be non-empty");
  }
  if (config.hidden_grid.empty() || config.dropout_grid.empty() ||
      config.lr_grid.empty()) {
    throw std::runtime_error("hyperparameter grids must be non-empty");
  }
  if (config.patience < 1) throw std::invalid_argument("patience must be >= 1");
  const int labels = static_cast<int>(split.labels.names.size());

  TrainResult best;
  best.dev_accuracy = -1.0;
  int grid_index = 0;
  for (int hidden : config.hidden_grid) {
    for (double dropout : config.dropout_grid) {
      for (double lr : config.lr_grid) {
        const std::uint64_t point_seed = derive_seed(config.seed, grid_index);
        IntentModel model = init_intent_model(embedding, trainable, hidden, labels,
                                              dropout, point_seed);
        ModelAdamState state = ModelAdamState::like(model);
        Rng shuffle_rng(derive_seed(point_seed, "shuffle"));
        Rng dropout_rng(derive_seed(point_seed, "dropout"));

        GridPointLog point_log{hidden, dropout, lr, {}};
        double point_best = -1.0;
        int stale_epochs = 0;
        std::vector<std::size_t> order(split.train.size());
        std::iota(order.begin(), order.end(), 0);
        for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
          shuffle_rng.shuffle(order);
          for (std::size_t idx : order) {
            train_step(model, split.train[idx], state, lr, &dropout_rng);
          }
          const double dev_acc = evaluate_model(model, split.dev).first;
          point_log.dev_accuracy.push_back(dev_acc);
          log::debug("grid " + std::to_string(grid_index) + " epoch " +
                     std::to_string(epoch) + " dev_acc " + std::to_string(dev_acc));
          if (dev_acc > best.dev_accuracy) {  // strict: ties keep the earlier point
            best.model = model;
            best.hidden = hidden;
            best.dropout = dropout;
            best.lr = lr;
            best.best_epoch = epoch;
            best.dev_accuracy = dev_acc;
          }
          if (dev_acc > point_best) {
            point_best = dev_acc;
            stale_epochs = 0;
          } else if (++stale_epochs >= config.patience) {
            break;
          }
        }
        best.log.push_back(std::move(point_log));
        ++grid_index;
      }
    }
  }
  return best;
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
  if (!in) throw std::runtime_error(path + ": truncated model file");
  return v;
}

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) write_raw<float>(out, static_cast<float>(m(r, c)));
  }
}

void read_matrix(std::ifstream& in, Eigen::MatrixXd& m, const std::string& path) {
  for (int r = 0; r < m.rows(); ++r) {
    for (int c = 0; c < m.cols(); ++c) m(r, c) = read_raw<float>(in, path);
  }
}

void write_string(std::ofstream& out, const std::string& s) {
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& path) {
  const auto len = read_raw<std::uint32_t>(in, path);
  std::string s(len, '\0');
  in.read(s.data(), len);
  if (!in) throw std::runtime_error(path + ": truncated model file");
  return s;
}

}  // namespace

void save_model(const IntentModel& model, const std::vector<std::string>& label_names,
                const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out.write("C2VM", 4);
  write_raw<std::uint32_t>(out, 1);
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(model.hidden));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(model.embed_dim()));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(model.labels()));
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(model.embedding.rows()));
  write_raw<double>(out, model.dropout);
  write_raw<std::uint8_t>(out, model.embedding_trainable ? 1 : 0);
  for (const auto& name : label_names) write_string(out, name);
  for (int r = 0; r < model.embedding.rows(); ++r) {
    write_string(out, model.embedding.vocab->word_of(r));
  }
  write_matrix(out, model.embedding.input);
  write_matrix(out, model.forward.w_in);
  write_matrix(out, model.forward.w_rec);
  write_matrix(out, model.forward.bias);
  write_matrix(out, model.backward.w_in);
  write_matrix(out, model.backward.w_rec);
  write_matrix(out, model.backward.bias);
  write_matrix(out, model.w_out);
  write_matrix(out, model.b_out);
}

std::pair<IntentModel, std::vector<std::string>> load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "C2VM", 4) != 0) {
    throw std::runtime_error(path + ": not a C2VM model file");
  }
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != 1) throw std::runtime_error(path + ": unsupported C2VM version");
  const int hidden = static_cast<int>(read_raw<std::uint32_t>(in, path));
  const int embed_dim = static_cast<int>(read_raw<std::uint32_t>(in, path));
  const int labels = static_cast<int>(read_raw<std::uint32_t>(in, path));
  const int vocab_size = static_cast<int>(read_raw<std::uint32_t>(in, path));
  const double dropout = read_raw<double>(in, path);
  const bool trainable = read_raw<std::uint8_t>(in, path) != 0;

  std::vector<std::string> label_names;
  label_names.reserve(labels);
  for (int i = 0; i < labels; ++i) label_names.push_back(read_string(in, path));
  std::vector<std::string> words;
  words.reserve(vocab_size);
  for (int i = 0; i < vocab_size; ++i) words.push_back(read_string(in, path));

  IntentModel m;
  m.hidden = hidden;
  m.dropout = dropout;
  m.embedding_trainable = trainable;
  m.embedding.vocab = std::make_shared<Vocabulary>(Vocabulary::from_ordered_words(words));
  m.embedding.input.resize(vocab_size, embed_dim);
  m.embedding.output = Eigen::MatrixXd::Zero(vocab_size, embed_dim);
  read_matrix(in, m.embedding.input, path);
  m.forward = LstmParameters::zeros(hidden, embed_dim);
  m.backward = LstmParameters::zeros(hidden, embed_dim);
  read_matrix(in, m.forward.w_in, path);
  read_matrix(in, m.forward.w_rec, path);
  Eigen::MatrixXd bias(4 * hidden, 1);
  read_matrix(in, bias, path);
  m.forward.bias = bias.col(0);
  read_matrix(in, m.backward.w_in, path);
  read_matrix(in, m.backward.w_rec, path);
  read_matrix(in, bias, path);
  m.backward.bias = bias.col(0);
  m.w_out.resize(labels, 2 * hidden);
  read_matrix(in, m.w_out, path);
  Eigen::MatrixXd b(labels, 1);
  read_matrix(in, b, path);
  m.b_out = b.col(0);
  return {std::move(m), std::move(label_names)};
}

}  // namespace confusable
