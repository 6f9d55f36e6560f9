#include "confusable/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

#include "confusable/log.hpp"

namespace confusable {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

RegimeKind regime_kind_from_string(const std::string& s) {
  if (s == "random-trainable") return RegimeKind::RandomTrainable;
  if (s == "pretrained-fixed") return RegimeKind::PretrainedFixed;
  if (s == "skipgram-fixed") return RegimeKind::SkipgramFixed;
  if (s == "c2v-fixed") return RegimeKind::C2vFixed;
  throw std::runtime_error("unknown embedding regime: " + s);
}

std::string to_string(RegimeKind kind) {
  switch (kind) {
    case RegimeKind::RandomTrainable: return "random-trainable";
    case RegimeKind::PretrainedFixed: return "pretrained-fixed";
    case RegimeKind::SkipgramFixed: return "skipgram-fixed";
    case RegimeKind::C2vFixed: return "c2v-fixed";
  }
  throw std::logic_error("unreachable");
}

namespace {

std::string resolve_path(const fs::path& base, const std::string& p) {
  if (p.empty()) return p;
  fs::path path(p);
  if (path.is_absolute()) return path.string();
  return (base / path).string();
}

}  // namespace

ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  nlohmann::json j;
  in >> j;
  const fs::path base = fs::path(path).parent_path();

  ExperimentSpec spec;
  const auto& dataset = j.at("dataset");
  spec.train_path = resolve_path(base, dataset.at("train").get<std::string>());
  spec.dev_path = resolve_path(base, dataset.at("dev").get<std::string>());
  spec.test_path = resolve_path(base, dataset.at("test").get<std::string>());
  spec.cnets_path = resolve_path(base, j.value("cnets", std::string{}));
  spec.corpus_path = resolve_path(base, j.value("corpus", std::string{}));
  spec.min_count = j.value("min_count", 1);

  for (const auto& r : j.at("regimes")) {
    EmbeddingRegime regime;
    regime.kind = regime_kind_from_string(r.at("kind").get<std::string>());
    regime.name = r.value("name", to_string(regime.kind));
    regime.dim = r.value("dim", regime.dim);
    regime.dim_semantic = r.value("dim_semantic", regime.dim_semantic);
    regime.dim_acoustic = r.value("dim_acoustic", regime.dim_acoustic);
    regime.pretrained_path = resolve_path(base, r.value("path", std::string{}));
    regime.window = r.value("window", regime.window);
    regime.negatives = r.value("negatives", regime.negatives);
    regime.epochs = r.value("epochs", regime.epochs);
    regime.joint_epochs = r.value("joint_epochs", 0);
    regime.learning_rate = r.value("lr", regime.learning_rate);
    regime.subsample = r.value("subsample", regime.subsample);
    spec.regimes.push_back(std::move(regime));
  }
  if (spec.regimes.empty()) throw std::runtime_error("spec declares no regimes");

  spec.train_on_noisy = j.value("train_condition", std::string("clean")) == "noisy";
  spec.clean_dev = j.value("clean_dev", false);

  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    if (n.contains("p_sub") || n.contains("p_del") || n.contains("p_ins")) {
      NoiseConfig c;
      c.p_sub = n.value("p_sub", 0.0);
      c.p_del = n.value("p_del", 0.0);
      c.p_ins = n.value("p_ins", 0.0);
      spec.explicit_noise = c;
    } else {
      spec.target_wer = n.value("target_wer", spec.target_wer);
    }
    if (n.contains("mix")) {
      const auto& m = n.at("mix");
      spec.mix.sub = m.at(0).get<double>();
      spec.mix.del = m.at(1).get<double>();
      spec.mix.ins = m.at(2).get<double>();
    }
    if (n.value("fallback", std::string("skip")) == "uniform-random") {
      spec.fallback = FallbackPolicy::UniformRandom;
    }
  }

  if (j.contains("classifier")) {
    const auto& c = j.at("classifier");
    if (c.contains("hidden")) spec.classifier.hidden_grid = c.at("hidden").get<std::vector<int>>();
    if (c.contains("dropout")) spec.classifier.dropout_grid = c.at("dropout").get<std::vector<double>>();
    if (c.contains("lr")) spec.classifier.lr_grid = c.at("lr").get<std::vector<double>>();
    spec.classifier.max_epochs = c.value("max_epochs", spec.classifier.max_epochs);
    spec.classifier.patience = c.value("patience", spec.classifier.patience);
  }
  if (j.contains("seeds")) spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (spec.seeds.empty()) throw std::runtime_error("spec declares no seeds");
  return spec;
}

double classification_error_rate(const std::vector<int>& predictions,
                                 const std::vector<int>& truths) {
  if (predictions.empty() || predictions.size() != truths.size()) {
    throw std::runtime_error("prediction/truth length mismatch or empty input");
  }
  long mismatches = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    if (predictions[i] != truths[i]) ++mismatches;
  }
  return 100.0 * static_cast<double>(mismatches) / static_cast<double>(predictions.size());
}

double robustness_delta(double cer_clean, double cer_noisy) {
  return cer_noisy - cer_clean;
}

double relative_improvement(double baseline, double proposed) {
  if (!(baseline > 0.0)) throw std::runtime_error("baseline must be positive");
  return 100.0 * (baseline - proposed) / baseline;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::runtime_error("median of empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

bool ExperimentReport::any_failed() const {
  return std::any_of(cells.begin(), cells.end(),
                     [](const ExperimentCell& c) { return c.failed(); });
}

namespace {

std::vector<std::vector<std::string>> tokens_of(const std::vector<IntentRow>& rows) {
  std::vector<std::vector<std::string>> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.tokens);
  return out;
}

std::vector<std::vector<int>> token_ids_of(const std::vector<LabeledUtterance>& us) {
  std::vector<std::vector<int>> out;
  out.reserve(us.size());
  for (const auto& u : us) out.push_back(u.tokens);
  return out;
}

// Swaps in corrupted token sequences; fully-deleted utterances fall back to a
// single <unk> so downstream consumers never see an empty sequence.
std::vector<LabeledUtterance> with_tokens(const std::vector<LabeledUtterance>& base,
                                          const std::vector<std::vector<int>>& tokens,
                                          int unk_id) {
  std::vector<LabeledUtterance> out = base;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].tokens = tokens[i].empty() ? std::vector<int>{unk_id} : tokens[i];
  }
  return out;
}

struct ExperimentInputs {
  std::shared_ptr<const Vocabulary> vocab;
  DatasetSplit split;
  std::vector<ConfusionNetwork> cnets;
  ConfusionTable table;
  std::vector<std::vector<int>> skipgram_sentences;  // clean text for skipgram-fixed
  NoiseConfig noise;
};

EmbeddingMatrix build_regime_embedding(const EmbeddingRegime& regime,
                                       const ExperimentInputs& inputs,
                                       std::uint64_t seed) {
  switch (regime.kind) {
    case RegimeKind::RandomTrainable: {
      EmbeddingMatrix e;
      e.vocab = inputs.vocab;
      e.input.resize(inputs.vocab->size(), regime.dim);
      e.output = Eigen::MatrixXd::Zero(inputs.vocab->size(), regime.dim);
      Rng rng(derive_seed(seed, "random-embedding"));
      const double bound = 0.5 / regime.dim;
      for (int r = 0; r < e.input.rows(); ++r) {
        for (int c = 0; c < e.input.cols(); ++c) e.input(r, c) = rng.uniform(-bound, bound);
      }
      return e;
    }
    case RegimeKind::PretrainedFixed: {
      const EmbeddingMatrix file = load_embedding(regime.pretrained_path);
      EmbeddingMatrix e;
      e.vocab = inputs.vocab;
      e.input = Eigen::MatrixXd::Zero(inputs.vocab->size(), file.dim());
      e.output = Eigen::MatrixXd::Zero(inputs.vocab->size(), file.dim());
      for (int r = 0; r < inputs.vocab->size(); ++r) {
        if (r == inputs.vocab->unk_id()) continue;  // fixed <unk> stays zero
        const std::string& w = inputs.vocab->word_of(r);
        if (file.vocab->contains(w)) e.input.row(r) = file.input.row(file.vocab->id_of(w));
      }
      return e;
    }
    case RegimeKind::SkipgramFixed: {
      EmbeddingTrainConfig cfg;
      cfg.scheme = EmbeddingScheme::PlainSkipgram;
      cfg.dim = regime.dim;
      cfg.window = regime.window;
      cfg.negatives = regime.negatives;
      cfg.epochs = regime.epochs;
      cfg.learning_rate = regime.learning_rate;
      cfg.subsample = regime.subsample;
      cfg.seed = seed;
      return train_embedding(inputs.skipgram_sentences, inputs.vocab, cfg);
    }
    case RegimeKind::C2vFixed: {
      EmbeddingTrainConfig cfg;
      cfg.window = regime.window;
      cfg.negatives = regime.negatives;
      cfg.epochs = regime.epochs;
      cfg.learning_rate = regime.learning_rate;
      cfg.subsample = regime.subsample;

      cfg.scheme = EmbeddingScheme::ToppathSkipgram;
      cfg.dim = regime.dim_semantic;
      cfg.seed = derive_seed(seed, "c2v-1");
      const EmbeddingMatrix c2v1 = train_embedding(inputs.cnets, inputs.vocab, cfg);

      cfg.scheme = EmbeddingScheme::IntraConfusion;
      cfg.dim = regime.dim_acoustic;
      cfg.seed = derive_seed(seed, "c2v-c");
      const EmbeddingMatrix c2vc = train_embedding(inputs.cnets, inputs.vocab, cfg);

      const EmbeddingMatrix concat = concatenate_embeddings(c2v1, c2vc);
      cfg.seed = derive_seed(seed, "c2v-joint");
      cfg.epochs = regime.joint_epochs > 0 ? regime.joint_epochs : regime.epochs;
      return joint_optimize(concat, inputs.cnets, cfg);
    }
  }
  throw std::logic_error("unreachable");
}

ExperimentCell run_cell(const ExperimentSpec& spec, const ExperimentInputs& inputs,
                        const EmbeddingRegime& regime, std::uint64_t seed,
                        const std::vector<LabeledUtterance>& train_set,
                        const std::vector<LabeledUtterance>& dev_set,
                        const std::vector<LabeledUtterance>& noisy_test,
                        double wer_test, double wer_train) {
  ExperimentCell cell;
  cell.regime = regime.name;
  cell.seed = seed;
  cell.wer_test = wer_test;
  cell.wer_train = wer_train;
  try {
    const EmbeddingMatrix embedding =
        build_regime_embedding(regime, inputs, derive_seed(seed, "embedding"));

    DatasetSplit split;
    split.labels = inputs.split.labels;
    split.train = train_set;
    split.dev = dev_set;
    split.test = inputs.split.test;

    TrainRunConfig cfg = spec.classifier;
    cfg.seed = derive_seed(seed, "classifier");
    TrainResult result = train_intent_model(split, embedding, regime.trainable(), cfg);

    const auto [acc_clean, pred_clean] = evaluate_model(result.model, inputs.split.test);
    const auto [acc_noisy, pred_noisy] = evaluate_model(result.model, noisy_test);
    (void)pred_clean;
    (void)pred_noisy;
    cell.cer_clean = 100.0 * (1.0 - acc_clean);
    cell.cer_noisy = 100.0 * (1.0 - acc_noisy);
    cell.delta_diff = robustness_delta(cell.cer_clean, cell.cer_noisy);
    cell.hidden = result.hidden;
    cell.dropout = result.dropout;
    cell.lr = result.lr;
    cell.best_epoch = result.best_epoch;
    cell.dev_accuracy = result.dev_accuracy;
    cell.training_log = std::move(result.log);
  } catch (const std::exception& e) {
    cell.error = e.what();
    log::error("cell " + cell.regime + "/seed " + std::to_string(seed) +
               " failed: " + cell.error);
  }
  return cell;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentSpec& spec, int jobs) {
  ExperimentInputs inputs;

  const auto train_rows = parse_intent_rows(spec.train_path);
  const auto dev_rows = parse_intent_rows(spec.dev_path);
  const auto test_rows = parse_intent_rows(spec.test_path);

  // Vocabulary spans the train text, the confusion networks, and any extra
  // skipgram corpus, so every regime shares one id space.
  std::vector<std::vector<std::string>> vocab_stream = tokens_of(train_rows);
  if (!spec.cnets_path.empty()) {
    auto surfaces = read_cnet_surfaces(spec.cnets_path);
    vocab_stream.insert(vocab_stream.end(), surfaces.begin(), surfaces.end());
  }
  std::vector<std::vector<std::string>> corpus_sentences;
  if (!spec.corpus_path.empty()) {
    corpus_sentences = read_plain_corpus(spec.corpus_path);
    vocab_stream.insert(vocab_stream.end(), corpus_sentences.begin(),
                        corpus_sentences.end());
  }
  inputs.vocab = std::make_shared<Vocabulary>(
      Vocabulary::build(vocab_stream, spec.min_count));

  inputs.split = make_split(train_rows, dev_rows, test_rows, *inputs.vocab);
  if (!spec.cnets_path.empty()) {
    inputs.cnets = parse_confusion_networks(spec.cnets_path, *inputs.vocab);
    inputs.table = build_confusion_table(inputs.cnets, inputs.vocab->size());
  } else {
    inputs.table.candidates.resize(inputs.vocab->size());
  }

  const auto& base_sentences = corpus_sentences.empty() ? tokens_of(train_rows)
                                                        : corpus_sentences;
  inputs.skipgram_sentences.reserve(base_sentences.size());
  for (const auto& s : base_sentences) {
    std::vector<int> ids;
    ids.reserve(s.size());
    for (const auto& w : s) ids.push_back(inputs.vocab->id_of(w));
    inputs.skipgram_sentences.push_back(std::move(ids));
  }

  if (spec.explicit_noise) {
    inputs.noise = *spec.explicit_noise;
    inputs.noise.fallback = spec.fallback;
  } else {
    inputs.noise = calibrate_to_wer(token_ids_of(inputs.split.train), spec.target_wer,
                                    inputs.table, spec.mix,
                                    derive_seed(spec.seeds.front(), "calibrate"),
                                    spec.fallback);
  }

  ExperimentReport report;
  report.timestamp = utc_timestamp();
  report.train_on_noisy = spec.train_on_noisy;
  report.noise = inputs.noise;

  struct SeedData {
    std::vector<LabeledUtterance> train_set, dev_set, noisy_test;
    double wer_test = 0.0, wer_train = 0.0;
  };
  std::vector<SeedData> per_seed(spec.seeds.size());
  for (std::size_t s = 0; s < spec.seeds.size(); ++s) {
    const std::uint64_t seed = spec.seeds[s];
    SeedData& data = per_seed[s];
    NoiseConfig noise = inputs.noise;

    noise.seed = derive_seed(seed, "corrupt-test");
    const auto clean_test = token_ids_of(inputs.split.test);
    const auto noisy_test_tokens = corrupt_corpus(clean_test, noise, inputs.table);
    data.wer_test = word_error_rate(clean_test, noisy_test_tokens);
    data.noisy_test = with_tokens(inputs.split.test, noisy_test_tokens,
                                  inputs.vocab->unk_id());

    if (spec.train_on_noisy) {
      noise.seed = derive_seed(seed, "corrupt-train");
      const auto clean_train = token_ids_of(inputs.split.train);
      const auto noisy_train = corrupt_corpus(clean_train, noise, inputs.table);
      data.wer_train = word_error_rate(clean_train, noisy_train);
      data.train_set = with_tokens(inputs.split.train, noisy_train,
                                   inputs.vocab->unk_id());
      if (spec.clean_dev) {
        data.dev_set = inputs.split.dev;
      } else {
        noise.seed = derive_seed(seed, "corrupt-dev");
        const auto clean_dev = token_ids_of(inputs.split.dev);
        data.dev_set = with_tokens(inputs.split.dev,
                                   corrupt_corpus(clean_dev, noise, inputs.table),
                                   inputs.vocab->unk_id());
      }
    } else {
      data.train_set = inputs.split.train;
      data.dev_set = inputs.split.dev;
    }
  }

  // Regime-major, seed-minor canonical cell order; cells are independent.
  struct CellTask {
    std::size_t regime_index, seed_index;
  };
  std::vector<CellTask> tasks;
  for (std::size_t r = 0; r < spec.regimes.size(); ++r) {
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) tasks.push_back({r, s});
  }
  report.cells.resize(tasks.size());

  auto run_task = [&](std::size_t t) {
    const auto& regime = spec.regimes[tasks[t].regime_index];
    const std::uint64_t seed = spec.seeds[tasks[t].seed_index];
    const SeedData& data = per_seed[tasks[t].seed_index];
    report.cells[t] = run_cell(spec, inputs, regime, seed, data.train_set,
                               data.dev_set, data.noisy_test, data.wer_test,
                               data.wer_train);
  };

  if (jobs <= 1) {
    for (std::size_t t = 0; t < tasks.size(); ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> workers;
    const int nthreads = static_cast<int>(
        std::min<std::size_t>(static_cast<std::size_t>(jobs), tasks.size()));
    for (int w = 0; w < nthreads; ++w) {
      workers.emplace_back([&] {
        for (std::size_t t = next.fetch_add(1); t < tasks.size();
             t = next.fetch_add(1)) {
          run_task(t);
        }
      });
    }
    for (auto& th : workers) th.join();
  }

  for (const auto& regime : spec.regimes) {
    std::vector<double> clean, noisy, delta, wer;
    for (const auto& cell : report.cells) {
      if (cell.regime != regime.name || cell.failed()) continue;
      clean.push_back(cell.cer_clean);
      noisy.push_back(cell.cer_noisy);
      delta.push_back(cell.delta_diff);
      wer.push_back(cell.wer_test);
    }
    if (clean.empty()) continue;
    report.aggregates.push_back({regime.name, median(clean), median(noisy),
                                 median(delta), median(wer)});
  }
  return report;
}

namespace {

double round4(double x) { return std::round(x * 1e4) / 1e4; }

std::string format_fixed(double x, int places) {
  std::ostringstream ss;
  ss.setf(std::ios::fixed);
  ss.precision(places);
  ss << x;
  return ss.str();
}

}  // namespace

std::string report_to_json(const ExperimentReport& report) {
  ordered_json j;
  j["timestamp"] = report.timestamp;
  j["train_condition"] = report.train_on_noisy ? "noisy" : "clean";
  j["noise"] = {{"p_sub", round4(report.noise.p_sub)},
                {"p_del", round4(report.noise.p_del)},
                {"p_ins", round4(report.noise.p_ins)},
                {"fallback", report.noise.fallback == FallbackPolicy::Skip
                                 ? "skip"
                                 : "uniform-random"}};
  j["cells"] = ordered_json::array();
  for (const auto& cell : report.cells) {
    ordered_json c;
    c["regime"] = cell.regime;
    c["seed"] = cell.seed;
    c["error"] = cell.error;
    if (!cell.failed()) {
      c["cer_clean"] = round4(cell.cer_clean);
      c["cer_noisy"] = round4(cell.cer_noisy);
      c["delta_diff"] = round4(cell.delta_diff);
      c["wer_test"] = round4(cell.wer_test);
      c["wer_train"] = round4(cell.wer_train);
      c["hyperparameters"] = {{"hidden", cell.hidden},
                              {"dropout", round4(cell.dropout)},
                              {"lr", cell.lr},
                              {"epoch", cell.best_epoch}};
      c["dev_accuracy"] = round4(cell.dev_accuracy);
      ordered_json log = ordered_json::array();
      for (const auto& point : cell.training_log) {
        ordered_json p;
        p["hidden"] = point.hidden;
        p["dropout"] = round4(point.dropout);
        p["lr"] = point.lr;
        ordered_json accs = ordered_json::array();
        for (double a : point.dev_accuracy) accs.push_back(round4(a));
        p["dev_accuracy"] = std::move(accs);
        log.push_back(std::move(p));
      }
      c["training_log"] = std::move(log);
    }
    j["cells"].push_back(std::move(c));
  }
  j["aggregates"] = ordered_json::array();
  for (const auto& agg : report.aggregates) {
    j["aggregates"].push_back({{"regime", agg.regime},
                               {"cer_clean", round4(agg.cer_clean)},
                               {"cer_noisy", round4(agg.cer_noisy)},
                               {"delta_diff", round4(agg.delta_diff)},
                               {"wer", round4(agg.wer)}});
  }
  return j.dump(2) + "\n";
}

std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "regime,cer_clean,cer_noisy,delta_diff,wer\n";
  for (const auto& agg : report.aggregates) {
    out << agg.regime << ',' << format_fixed(agg.cer_clean, 2) << ','
        << format_fixed(agg.cer_noisy, 2) << ',' << format_fixed(agg.delta_diff, 2)
        << ',' << format_fixed(agg.wer, 2) << '\n';
  }
  return out.str();
}

void emit_report(const ExperimentReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "report.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report.json under " + out_dir);
    out << report_to_json(report);
  }
  {
    std::ofstream out(fs::path(out_dir) / "summary.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write summary.csv under " + out_dir);
    out << report_to_csv(report);
  }
}

}  // namespace confusable
