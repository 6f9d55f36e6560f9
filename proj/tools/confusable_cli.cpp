#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "confusable/classifier.hpp"
#include "confusable/corpus.hpp"
#include "confusable/embedding.hpp"
#include "confusable/harness.hpp"
#include "confusable/log.hpp"
#include "confusable/noise.hpp"

namespace {

using namespace confusable;

std::shared_ptr<const Vocabulary> vocab_from_sentences(
    const std::vector<std::vector<std::string>>& sentences, int min_count) {
  return std::make_shared<Vocabulary>(Vocabulary::build(sentences, min_count));
}

MixRatio parse_mix(const std::string& s) {
  MixRatio mix;
  if (s.empty()) return mix;
  std::istringstream iss(s);
  std::string part;
  std::vector<double> vals;
  while (std::getline(iss, part, ':')) vals.push_back(std::stod(part));
  if (vals.size() != 3) throw std::runtime_error("--mix expects sub:del:ins");
  mix.sub = vals[0];
  mix.del = vals[1];
  mix.ins = vals[2];
  return mix;
}

// Vocabulary covering a labeled dataset plus any words a confusion table may
// substitute in.
std::shared_ptr<const Vocabulary> vocab_for_corruption(
    const std::vector<IntentRow>& rows, const std::string& table_path) {
  std::map<std::string, std::int64_t> counts;
  for (const auto& row : rows) {
    for (const auto& t : row.tokens) ++counts[t];
  }
  if (!table_path.empty()) {
    std::ifstream in(table_path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open file: " + table_path);
    nlohmann::json j;
    in >> j;
    for (const auto& [word, list] : j.items()) {
      counts.emplace(word, 0);
      counts[word] += 1;
      for (const auto& entry : list) {
        counts.emplace(entry.at(0).get<std::string>(), 0);
        counts[entry.at(0).get<std::string>()] += 1;
      }
    }
  }
  return std::make_shared<Vocabulary>(Vocabulary::from_counts(counts, 1));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"confusable: ASR-noise-robust intent detection toolkit"};
  app.require_subcommand(1);

  // ---- vocab build ----
  auto* vocab_cmd = app.add_subcommand("vocab", "vocabulary tools")
                        ->require_subcommand(1);
  std::string vb_corpus, vb_out;
  int vb_min_count = 1;
  auto* vocab_build = vocab_cmd->add_subcommand("build", "build a vocabulary from text");
  vocab_build->add_option("corpus", vb_corpus, "plain text corpus")->required();
  vocab_build->add_option("-o,--output", vb_out, "output vocabulary file")->required();
  vocab_build->add_option("--min-count", vb_min_count, "minimum word count")->capture_default_str();

  // ---- embed ----
  auto* embed_cmd = app.add_subcommand("embed", "embedding tools")->require_subcommand(1);

  std::string et_input, et_out, et_scheme = "plain";
  EmbeddingTrainConfig et_cfg;
  int et_min_count = 1;
  auto* embed_train = embed_cmd->add_subcommand("train", "train word embeddings");
  embed_train->add_option("input", et_input, "corpus (plain) or CNET file")->required();
  embed_train->add_option("-o,--output", et_out, "output embedding file")->required();
  embed_train->add_option("--scheme", et_scheme, "plain|toppath|intra")->capture_default_str();
  embed_train->add_option("--dim", et_cfg.dim, "embedding dimension")->capture_default_str();
  embed_train->add_option("--window", et_cfg.window, "max context offset")->capture_default_str();
  embed_train->add_option("--negatives", et_cfg.negatives, "negatives per pair")->capture_default_str();
  embed_train->add_option("--epochs", et_cfg.epochs, "training epochs")->capture_default_str();
  embed_train->add_option("--lr", et_cfg.learning_rate, "initial learning rate")->capture_default_str();
  embed_train->add_option("--subsample", et_cfg.subsample, "subsample threshold")->capture_default_str();
  embed_train->add_option("--min-count", et_min_count, "minimum word count")->capture_default_str();
  embed_train->add_option("--seed", et_cfg.seed, "random seed")->capture_default_str();
  embed_train->add_option("--jobs", et_cfg.threads, "worker threads (racy if >1)")->capture_default_str();

  std::string ec_a, ec_b, ec_out;
  auto* embed_concat = embed_cmd->add_subcommand("concat", "concatenate two embeddings");
  embed_concat->add_option("first", ec_a, "first embedding file")->required();
  embed_concat->add_option("second", ec_b, "second embedding file")->required();
  embed_concat->add_option("-o,--output", ec_out, "output embedding file")->required();

  std::string ej_emb, ej_cnets, ej_out;
  EmbeddingTrainConfig ej_cfg;
  auto* embed_joint = embed_cmd->add_subcommand(
      "joint", "jointly optimize a concatenated embedding on confusion networks");
  embed_joint->add_option("embedding", ej_emb, "concatenated embedding file")->required();
  embed_joint->add_option("cnets", ej_cnets, "CNET file")->required();
  embed_joint->add_option("-o,--output", ej_out, "output embedding file")->required();
  embed_joint->add_option("--epochs", ej_cfg.epochs, "training epochs")->capture_default_str();
  embed_joint->add_option("--negatives", ej_cfg.negatives, "negatives per pair")->capture_default_str();
  embed_joint->add_option("--lr", ej_cfg.learning_rate, "pretraining learning rate")->capture_default_str();
  embed_joint->add_option("--lr-scale", ej_cfg.joint_lr_scale,
                          "joint-optimization scale on --lr")->capture_default_str();
  embed_joint->add_option("--freeze-dims", ej_cfg.frozen_prefix_dims,
                          "leading input dimensions to freeze")->capture_default_str();
  embed_joint->add_option("--seed", ej_cfg.seed, "random seed")->capture_default_str();

  std::string en_emb, en_word;
  int en_n = 10;
  auto* embed_neighbors = embed_cmd->add_subcommand("neighbors", "nearest neighbors by cosine");
  embed_neighbors->add_option("embedding", en_emb, "embedding file")->required();
  embed_neighbors->add_option("word", en_word, "query word")->required();
  embed_neighbors->add_option("-n", en_n, "number of neighbors")->capture_default_str();

  std::string ep_emb, ep_out;
  std::vector<std::string> ep_words;
  auto* embed_pca = embed_cmd->add_subcommand("pca", "2-D PCA projection of selected words");
  embed_pca->add_option("embedding", ep_emb, "embedding file")->required();
  embed_pca->add_option("words", ep_words, "words to project (>= 3)")->required();
  embed_pca->add_option("-o,--output", ep_out, "output CSV (default stdout)");

  // ---- classify ----
  auto* classify_cmd = app.add_subcommand("classify", "intent classifier")->require_subcommand(1);

  std::string ct_train, ct_dev, ct_out, ct_embedding;
  int ct_random_dim = 0;
  int ct_min_count = 1;
  bool ct_trainable = false;
  TrainRunConfig ct_cfg;
  auto* classify_train = classify_cmd->add_subcommand("train", "grid-search train the BiLSTM");
  classify_train->add_option("train", ct_train, "train TSV")->required();
  classify_train->add_option("dev", ct_dev, "dev TSV")->required();
  classify_train->add_option("-o,--output", ct_out, "output model checkpoint")->required();
  classify_train->add_option("--embedding", ct_embedding, "fixed pretrained embedding file");
  classify_train->add_option("--random-dim", ct_random_dim,
                             "randomly initialized trainable embedding of this dim");
  classify_train->add_flag("--trainable", ct_trainable, "fine-tune the embedding");
  classify_train->add_option("--hidden", ct_cfg.hidden_grid, "hidden dim grid")
      ->delimiter(',');
  classify_train->add_option("--dropout", ct_cfg.dropout_grid, "dropout grid")
      ->delimiter(',');
  classify_train->add_option("--lr", ct_cfg.lr_grid, "learning rate grid")->delimiter(',');
  classify_train->add_option("--epochs", ct_cfg.max_epochs, "max epochs")->capture_default_str();
  classify_train->add_option("--patience", ct_cfg.patience, "early-stop patience")->capture_default_str();
  classify_train->add_option("--min-count", ct_min_count, "vocab min count (random embedding)")->capture_default_str();
  classify_train->add_option("--seed", ct_cfg.seed, "random seed")->capture_default_str();

  std::string ce_model, ce_data;
  auto* classify_eval = classify_cmd->add_subcommand("eval", "evaluate a trained model");
  classify_eval->add_option("model", ce_model, "model checkpoint")->required();
  classify_eval->add_option("data", ce_data, "TSV dataset")->required();

  // ---- noise ----
  auto* noise_cmd = app.add_subcommand("noise", "ASR error simulation")->require_subcommand(1);

  std::string nt_cnets, nt_out;
  auto* noise_table = noise_cmd->add_subcommand("table", "build a confusion table from CNETs");
  noise_table->add_option("cnets", nt_cnets, "CNET file")->required();
  noise_table->add_option("-o,--output", nt_out, "output JSON table")->required();

  std::string nc_data, nc_table, nc_out, nc_fallback = "skip";
  NoiseConfig nc_cfg;
  auto* noise_corrupt = noise_cmd->add_subcommand("corrupt", "corrupt a labeled dataset");
  noise_corrupt->add_option("data", nc_data, "TSV dataset")->required();
  noise_corrupt->add_option("--table", nc_table, "confusion table JSON")->required();
  noise_corrupt->add_option("-o,--output", nc_out, "output TSV")->required();
  noise_corrupt->add_option("--p-sub", nc_cfg.p_sub, "substitution probability")->capture_default_str();
  noise_corrupt->add_option("--p-del", nc_cfg.p_del, "deletion probability")->capture_default_str();
  noise_corrupt->add_option("--p-ins", nc_cfg.p_ins, "insertion probability")->capture_default_str();
  noise_corrupt->add_option("--seed", nc_cfg.seed, "random seed")->capture_default_str();
  noise_corrupt->add_option("--fallback", nc_fallback, "skip|uniform-random")->capture_default_str();

  std::string na_data, na_table, na_mix = "70:20:10", na_fallback = "skip";
  double na_target = 18.54;
  std::uint64_t na_seed = 1;
  auto* noise_calibrate = noise_cmd->add_subcommand(
      "calibrate", "find event probabilities hitting a target WER");
  noise_calibrate->add_option("data", na_data, "TSV dataset")->required();
  noise_calibrate->add_option("--table", na_table, "confusion table JSON")->required();
  noise_calibrate->add_option("--target-wer", na_target, "target WER percent")->capture_default_str();
  noise_calibrate->add_option("--mix", na_mix, "sub:del:ins ratio")->capture_default_str();
  noise_calibrate->add_option("--seed", na_seed, "random seed")->capture_default_str();
  noise_calibrate->add_option("--fallback", na_fallback, "skip|uniform-random")->capture_default_str();

  // ---- experiment ----
  auto* experiment_cmd = app.add_subcommand("experiment", "experiment harness")
                             ->require_subcommand(1);
  std::string xr_spec, xr_out = ".";
  int xr_jobs = 1;
  auto* experiment_run = experiment_cmd->add_subcommand("run", "run an experiment spec");
  experiment_run->add_option("spec", xr_spec, "experiment spec JSON")->required();
  experiment_run->add_option("-o,--output", xr_out, "output directory")->capture_default_str();
  experiment_run->add_option("--jobs", xr_jobs, "parallel regime x seed cells")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*vocab_build) {
      auto vocab = Vocabulary::build(read_plain_corpus(vb_corpus), vb_min_count);
      vocab.save(vb_out);
      std::cerr << "vocabulary: " << vocab.size() << " words\n";
      return 0;
    }

    if (*embed_train) {
      std::shared_ptr<const Vocabulary> vocab;
      EmbeddingMatrix e;
      if (et_scheme == "plain") {
        et_cfg.scheme = EmbeddingScheme::PlainSkipgram;
        const auto sentences = read_plain_corpus(et_input);
        vocab = vocab_from_sentences(sentences, et_min_count);
        std::vector<std::vector<int>> ids;
        ids.reserve(sentences.size());
        for (const auto& s : sentences) {
          std::vector<int> row;
          for (const auto& w : s) row.push_back(vocab->id_of(w));
          ids.push_back(std::move(row));
        }
        e = train_embedding(ids, vocab, et_cfg);
      } else if (et_scheme == "toppath" || et_scheme == "intra") {
        et_cfg.scheme = et_scheme == "toppath" ? EmbeddingScheme::ToppathSkipgram
                                               : EmbeddingScheme::IntraConfusion;
        vocab = vocab_from_sentences(read_cnet_surfaces(et_input), et_min_count);
        const auto cnets = parse_confusion_networks(et_input, *vocab);
        e = train_embedding(cnets, vocab, et_cfg);
      } else {
        throw std::runtime_error("unknown --scheme: " + et_scheme);
      }
      save_embedding(e, et_out);
      return 0;
    }

    if (*embed_concat) {
      const auto combined =
          concatenate_embeddings(load_embedding(ec_a), load_embedding(ec_b));
      save_embedding(combined, ec_out);
      return 0;
    }

    if (*embed_joint) {
      const EmbeddingMatrix concat = load_embedding(ej_emb);
      const auto cnets = parse_confusion_networks(ej_cnets, *concat.vocab);
      ej_cfg.scheme = EmbeddingScheme::IntraConfusion;
      ej_cfg.dim = concat.dim();
      save_embedding(joint_optimize(concat, cnets, ej_cfg), ej_out);
      return 0;
    }

    if (*embed_neighbors) {
      const EmbeddingMatrix e = load_embedding(en_emb);
      if (!e.vocab->contains(en_word)) {
        throw std::runtime_error("word not in vocabulary: " + en_word);
      }
      for (const auto& [id, sim] : nearest_neighbors(e, e.vocab->id_of(en_word), en_n)) {
        std::cout << e.vocab->word_of(id) << ' ' << sim << '\n';
      }
      return 0;
    }

    if (*embed_pca) {
      const EmbeddingMatrix e = load_embedding(ep_emb);
      std::vector<int> ids;
      for (const auto& w : ep_words) {
        if (!e.vocab->contains(w)) throw std::runtime_error("word not in vocabulary: " + w);
        ids.push_back(e.vocab->id_of(w));
      }
      std::ostringstream csv;
      csv << "word,x,y\n";
      csv.precision(9);
      for (const auto& [word, x, y] : pca_project_2d(e, ids)) {
        csv << word << ',' << x << ',' << y << '\n';
      }
      if (ep_out.empty()) {
        std::cout << csv.str();
      } else {
        std::ofstream out(ep_out, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write file: " + ep_out);
        out << csv.str();
      }
      return 0;
    }

    if (*classify_train) {
      const auto train_rows = parse_intent_rows(ct_train);
      const auto dev_rows = parse_intent_rows(ct_dev);

      EmbeddingMatrix embedding;
      bool trainable = ct_trainable;
      if (!ct_embedding.empty()) {
        embedding = load_embedding(ct_embedding);
      } else if (ct_random_dim > 0) {
        std::vector<std::vector<std::string>> stream;
        for (const auto& r : train_rows) stream.push_back(r.tokens);
        auto vocab = vocab_from_sentences(stream, ct_min_count);
        embedding.vocab = vocab;
        embedding.input.resize(vocab->size(), ct_random_dim);
        embedding.output = Eigen::MatrixXd::Zero(vocab->size(), ct_random_dim);
        Rng rng(derive_seed(ct_cfg.seed, "random-embedding"));
        const double bound = 0.5 / ct_random_dim;
        for (int r = 0; r < embedding.input.rows(); ++r) {
          for (int c = 0; c < embedding.input.cols(); ++c) {
            embedding.input(r, c) = rng.uniform(-bound, bound);
          }
        }
        trainable = true;
      } else {
        throw std::runtime_error("one of --embedding or --random-dim is required");
      }

      const auto split = make_split(train_rows, dev_rows, dev_rows, *embedding.vocab);
      const TrainResult result = train_intent_model(split, embedding, trainable, ct_cfg);
      save_model(result.model, split.labels.names, ct_out);

      nlohmann::ordered_json sidecar;
      sidecar["hyperparameters"] = {{"hidden", result.hidden},
                                    {"dropout", result.dropout},
                                    {"lr", result.lr},
                                    {"epoch", result.best_epoch}};
      sidecar["dev_accuracy"] = result.dev_accuracy;
      sidecar["training_log"] = nlohmann::ordered_json::array();
      for (const auto& point : result.log) {
        sidecar["training_log"].push_back({{"hidden", point.hidden},
                                           {"dropout", point.dropout},
                                           {"lr", point.lr},
                                           {"dev_accuracy", point.dev_accuracy}});
      }
      std::ofstream side(ct_out + ".json", std::ios::binary);
      if (!side) throw std::runtime_error("cannot write sidecar: " + ct_out + ".json");
      side << sidecar.dump(2) << '\n';
      std::cerr << "best: hidden=" << result.hidden << " dropout=" << result.dropout
                << " lr=" << result.lr << " dev_acc=" << result.dev_accuracy << "\n";
      return 0;
    }

    if (*classify_eval) {
      auto [model, label_names] = load_model(ce_model);
      const auto rows = parse_intent_rows(ce_data);
      LabelSet labels;
      labels.names = label_names;
      for (std::size_t i = 0; i < label_names.size(); ++i) {
        labels.name_to_id[label_names[i]] = static_cast<int>(i);
      }
      const auto data = intern_utterances(rows, *model.embedding.vocab, labels, "eval-");
      const auto [accuracy, predictions] = evaluate_model(model, data);
      std::vector<int> truths;
      for (const auto& u : data) truths.push_back(u.intent);
      std::cout << "accuracy " << accuracy << "\n"
                << "cer " << classification_error_rate(predictions, truths) << "\n";
      return 0;
    }

    if (*noise_table) {
      auto vocab = vocab_from_sentences(read_cnet_surfaces(nt_cnets), 1);
      const auto cnets = parse_confusion_networks(nt_cnets, *vocab);
      save_confusion_table(build_confusion_table(cnets, vocab->size()), *vocab, nt_out);
      return 0;
    }

    if (*noise_corrupt) {
      const auto rows = parse_intent_rows(nc_data);
      auto vocab = vocab_for_corruption(rows, nc_table);
      const auto table = load_confusion_table(nc_table, *vocab);
      nc_cfg.fallback = nc_fallback == "uniform-random" ? FallbackPolicy::UniformRandom
                                                        : FallbackPolicy::Skip;
      std::vector<std::vector<int>> clean;
      std::vector<std::string> labels;
      for (const auto& row : rows) {
        labels.push_back(row.label);
        std::vector<int> ids;
        for (const auto& t : row.tokens) ids.push_back(vocab->id_of(t));
        clean.push_back(std::move(ids));
      }
      const auto noisy = corrupt_corpus(clean, nc_cfg, table);
      write_corrupted_tsv(labels, noisy, *vocab, word_error_rate(clean, noisy), nc_out);
      return 0;
    }

    if (*noise_calibrate) {
      const auto rows = parse_intent_rows(na_data);
      auto vocab = vocab_for_corruption(rows, na_table);
      const auto table = load_confusion_table(na_table, *vocab);
      std::vector<std::vector<int>> clean;
      for (const auto& row : rows) {
        std::vector<int> ids;
        for (const auto& t : row.tokens) ids.push_back(vocab->id_of(t));
        clean.push_back(std::move(ids));
      }
      const auto fallback = na_fallback == "uniform-random" ? FallbackPolicy::UniformRandom
                                                            : FallbackPolicy::Skip;
      const NoiseConfig cfg =
          calibrate_to_wer(clean, na_target, table, parse_mix(na_mix), na_seed, fallback);
      const double measured = word_error_rate(clean, corrupt_corpus(clean, cfg, table));
      nlohmann::ordered_json j = {{"p_sub", cfg.p_sub},
                                  {"p_del", cfg.p_del},
                                  {"p_ins", cfg.p_ins},
                                  {"seed", cfg.seed},
                                  {"measured_wer", measured}};
      std::cout << j.dump(2) << '\n';
      return 0;
    }

    if (*experiment_run) {
      const ExperimentSpec spec = load_experiment_spec(xr_spec);
      const ExperimentReport report = run_experiment(spec, xr_jobs);
      emit_report(report, xr_out);
      if (report.any_failed()) {
        std::cerr << "one or more experiment cells failed; see report.json\n";
        return 1;
      }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  std::cerr << app.help();
  return 2;
}
