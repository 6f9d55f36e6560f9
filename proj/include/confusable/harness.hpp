#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "confusable/classifier.hpp"
#include "confusable/corpus.hpp"
#include "confusable/embedding.hpp"
#include "confusable/noise.hpp"

namespace confusable {

enum class RegimeKind { RandomTrainable, PretrainedFixed, SkipgramFixed, C2vFixed };

RegimeKind regime_kind_from_string(const std::string& s);
std::string to_string(RegimeKind kind);

struct EmbeddingRegime {
  RegimeKind kind = RegimeKind::RandomTrainable;
  std::string name;
  int dim = 100;           // random-trainable / skipgram-fixed
  int dim_semantic = 300;  // c2v: top-path skip-gram block
  int dim_acoustic = 256;  // c2v: intra-confusion block
  std::string pretrained_path;  // pretrained-fixed
  int window = 5;
  int negatives = 5;
  int epochs = 5;
  int joint_epochs = 0;  // 0: same as epochs
  double learning_rate = 0.025;
  double subsample = 1e-4;  // frequent-word subsampling threshold, 0 disables

  bool trainable() const { return kind == RegimeKind::RandomTrainable; }
};

struct ExperimentSpec {
  std::string train_path, dev_path, test_path;
  std::string cnets_path;
  std::string corpus_path;  // optional extra text for skipgram-fixed
  std::vector<EmbeddingRegime> regimes;
  bool train_on_noisy = false;
  bool clean_dev = false;  // noisy training: early-stop on clean dev instead
  std::optional<NoiseConfig> explicit_noise;
  double target_wer = 18.54;
  MixRatio mix;
  FallbackPolicy fallback = FallbackPolicy::Skip;
  TrainRunConfig classifier;
  std::vector<std::uint64_t> seeds{1};
  int min_count = 1;
};

// Loads the JSON spec; relative paths resolve against the spec file.
ExperimentSpec load_experiment_spec(const std::string& path);

struct ExperimentCell {
  std::string regime;
  std::uint64_t seed = 0;
  double cer_clean = 0.0;
  double cer_noisy = 0.0;
  double delta_diff = 0.0;
  double wer_test = 0.0;   // measured WER of the corrupted test set
  double wer_train = 0.0;  // measured WER of the corrupted train set (noisy training)
  int hidden = 0;
  double dropout = 0.0;
  double lr = 0.0;
  int best_epoch = 0;
  double dev_accuracy = 0.0;
  std::vector<GridPointLog> training_log;
  std::string error;  // empty on success

  bool failed() const { return !error.empty(); }
};

struct RegimeAggregate {
  std::string regime;
  double cer_clean = 0.0;
  double cer_noisy = 0.0;
  double delta_diff = 0.0;
  double wer = 0.0;
};

struct ExperimentReport {
  std::string timestamp;
  bool train_on_noisy = false;
  NoiseConfig noise;
  std::vector<ExperimentCell> cells;       // canonical regime-major, seed-minor order
  std::vector<RegimeAggregate> aggregates; // medians across seeds

  bool any_failed() const;
};

double classification_error_rate(const std::vector<int>& predictions,
                                 const std::vector<int>& truths);
double robustness_delta(double cer_clean, double cer_noisy);
double relative_improvement(double baseline, double proposed);

double median(std::vector<double> values);

ExperimentReport run_experiment(const ExperimentSpec& spec, int jobs = 1);

// report.json (canonical, 4 d.p. floats) and summary.csv (per-regime medians,
// columns: regime,cer_clean,cer_noisy,delta_diff,wer).
void emit_report(const ExperimentReport& report, const std::string& out_dir);

std::string report_to_json(const ExperimentReport& report);
std::string report_to_csv(const ExperimentReport& report);

}  // namespace confusable
