// rolerel: train word embeddings, per-role forests, score and evaluate
// contextual triples.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rolerel/rolerel.hpp"

namespace fs = std::filesystem;
using namespace rolerel;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

/// Bad paths, unreadable files and invalid configuration.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GlobalOptions {
  std::string config_path;
  std::vector<std::string> settings;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::string out = ".";
};

RunConfig resolve_config(const GlobalOptions& g) {
  RunConfig config;
  try {
    if (!g.config_path.empty()) load_config_file(config, g.config_path);
    for (const auto& s : g.settings) apply_assignment(config, s);
    if (g.seed) config.seed = *g.seed;
    if (g.threads) config.threads = *g.threads;
    config.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return config;
}

std::vector<ContextualTriple> read_triples(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  try {
    return parse_triples(in);
  } catch (const ParseError& e) {
    throw ParseError(e.line(), path + ": " + e.what());
  }
}

EmbeddingModel read_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  try {
    return load_embeddings(in);
  } catch (const EmbeddingError& e) {
    throw EmbeddingError(path + ": " + e.what());
  }
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  return out;
}

void finish_output(std::ofstream& out, const fs::path& path) {
  out.close();
  if (!out) throw UsageError("failed writing " + path.string());
}

void check_unit_norm(const EmbeddingModel& model) {
  for (std::size_t w = 0; w < model.vocab.size(); ++w) {
    const auto v = model.vector(w);
    if (std::abs(std::sqrt(dot(v, v)) - 1.0) >= 1e-6) {
      throw EmbeddingError("word \"" + model.vocab.word(w) +
                           "\" is not unit length after finalize");
    }
  }
}

// ---------------------------------------------------------------------------
// Stages

EmbeddingModel train_embeddings_stage(const std::vector<std::string>& inputs,
                                      const RunConfig& config, const fs::path& out_file) {
  std::vector<ContextualTriple> all;
  for (const auto& path : inputs) {
    auto triples = read_triples(path);
    all.insert(all.end(), std::make_move_iterator(triples.begin()),
               std::make_move_iterator(triples.end()));
  }
  const auto corpus = build_corpus(all);
  auto model = finalize(train_skipgram(corpus, config.resolved_embedding()));
  check_unit_norm(model);
  for (const auto& w : model.warnings) std::cerr << "warning: " << w << '\n';

  auto out = open_output(out_file);
  save_embeddings(out, model);
  finish_output(out, out_file);

  std::cout << "sentences: " << corpus.size() << '\n'
            << "vocabulary: " << model.vocab.size() << '\n'
            << "dim: " << model.dim() << '\n'
            << "epochs: " << model.epoch_mean_loss.size() << '\n'
            << "final mean loss: " << std::setprecision(6)
            << model.epoch_mean_loss.back() << '\n'
            << "wrote " << out_file.string() << '\n';
  return model;
}

ModelBundle train_stage(const std::vector<ContextualTriple>& labeled,
                        EmbeddingModel embedding, const RunConfig& config,
                        const fs::path& model_dir) {
  auto bundle = train_role_models(labeled, std::move(embedding),
                                  config.resolved_forest(), config.threads);
  save_models(model_dir, bundle);
  for (const auto& [role, c] : bundle.classifiers) {
    std::cout << "trained " << role.name() << " (" << c.training_size.positives
              << " positive, " << c.training_size.negatives << " negative)\n";
  }
  for (const auto& s : bundle.skipped_roles) {
    std::cout << "skipped " << s.role.name() << ": " << s.reason << '\n';
  }
  std::cout << "wrote " << model_dir.string() << '\n';
  return bundle;
}

void write_scores(std::ostream& out, const std::vector<ScoredTriple>& scored,
                  bool per_role) {
  if (!per_role) {
    for (const auto& s : rank(scored)) out << scored_record(s).dump() << '\n';
    return;
  }
  std::map<Role, std::vector<ScoredTriple>> blocks;
  for (const auto& s : scored) blocks[s.triple.role].push_back(s);
  for (auto& [role, block] : blocks) {
    for (const auto& s : rank(std::move(block))) {
      out << scored_record(s).dump() << '\n';
    }
  }
}

void evaluate_stage(const std::vector<ContextualTriple>& labeled,
                    const EmbeddingModel& embedding, const RunConfig& config,
                    const std::vector<double>& fractions, const fs::path& out_dir) {
  for (const auto& t : labeled) {
    if (!t.label) throw UsageError("triple \"" + t.id + "\" has no label");
  }
  const auto runs = evaluate_fractions(
      labeled, embedding, config.resolved_forest(), fractions, config.split_seed(),
      config.threshold, config.gains,
      [&](double fraction, const ModelBundle& bundle) {
        save_models(out_dir / ("models-" + format_fraction(fraction)), bundle);
      },
      config.threads);

  const auto json_path = out_dir / "report.json";
  auto json_out = open_output(json_path);
  json_out << report_json(runs).dump(2) << '\n';
  finish_output(json_out, json_path);

  const auto csv_path = out_dir / "report.csv";
  auto csv_out = open_output(csv_path);
  write_report_csv(csv_out, runs);
  finish_output(csv_out, csv_path);

  std::cout << std::left << std::setw(16) << "role" << std::setw(10) << "fraction"
            << std::setw(11) << "precision" << std::setw(9) << "recall"
            << std::setw(9) << "f1" << "ndcg\n";
  std::cout << std::fixed << std::setprecision(4);
  for (const auto& run : runs) {
    auto row = [&](const EvalReport& r) {
      std::cout << std::setw(16) << r.role << std::setw(10) << run.fraction
                << std::setw(11) << r.classification.precision << std::setw(9)
                << r.classification.recall << std::setw(9) << r.classification.f1
                << r.ndcg.value << '\n';
    };
    for (const auto& r : run.evaluation.per_role) row(r);
    row(run.evaluation.aggregate);
  }
  std::cout.unsetf(std::ios::fixed);
  std::cout << "wrote " << json_path.string() << " and " << csv_path.string() << '\n';
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> fractions;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto trimmed = std::string(detail::trim(item));
    double f = 0.0;
    const auto res =
        std::from_chars(trimmed.data(), trimmed.data() + trimmed.size(), f);
    if (res.ec != std::errc() || res.ptr != trimmed.data() + trimmed.size()) {
      throw ConfigError("invalid fraction \"" + item + "\"");
    }
    if (!(f > 0.0 && f < 1.0)) {
      throw ConfigError("fraction " + trimmed + " must lie strictly between 0 and 1");
    }
    fractions.push_back(f);
  }
  if (fractions.empty()) throw ConfigError("no fractions given");
  return fractions;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Role relevance scoring for contextual triples"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config_path, "Config file of key = value lines");
  app.add_option("--set", g.settings,
                 "Override a config key, e.g. --set epochs=5 (repeatable). Keys "
                 "and defaults: dim=30 window=5 negatives=5 epochs=20 "
                 "lr_initial=0.025 lr_final=0.0001 min_count=1 unigram_power=0.75 "
                 "subsample=0 n_trees=100 max_depth=none min_samples_leaf=1 "
                 "features_per_split=none (ceil(sqrt(dim))) threshold=0.5 "
                 "gain.highly_relevant=3 gain.relevant=2 gain.neutral=1 "
                 "gain.irrelevant=0");
  app.add_option("--seed", g.seed, "Master seed (default 1)");
  app.add_option("--threads", g.threads,
                 "Worker threads (default 1). More than one makes embedding "
                 "training non-deterministic");
  app.add_option("--out", g.out, "Output directory (default .)");

  // train-embeddings
  auto* te = app.add_subcommand("train-embeddings",
                                "Train skip-gram embeddings on all context sentences");
  std::vector<std::string> te_inputs;
  te->add_option("inputs", te_inputs, "Triple files (labeled and unlabeled)")
      ->required();

  // train
  auto* tr = app.add_subcommand("train", "Train one random forest per role");
  std::string tr_labeled, tr_embeddings;
  tr->add_option("labeled", tr_labeled, "Labeled triple file")->required();
  tr->add_option("--embeddings", tr_embeddings, "Embedding file")->required();

  // score
  auto* sc = app.add_subcommand("score", "Score and rank triples");
  std::string sc_input, sc_models, sc_embeddings;
  bool sc_per_role = false;
  bool sc_stdout = false;
  sc->add_option("triples", sc_input, "Triple file")->required();
  sc->add_option("--models", sc_models, "Model directory")->required();
  sc->add_option("--embeddings", sc_embeddings, "Embedding file")->required();
  sc->add_flag("--per-role", sc_per_role, "One ranked block per role");
  sc->add_flag("--stdout", sc_stdout, "Print scores instead of writing scores.jsonl");

  // evaluate
  auto* ev = app.add_subcommand(
      "evaluate", "Split, retrain and evaluate at each training fraction");
  std::string ev_labeled, ev_embeddings, ev_fractions = "0.1,0.5,0.9";
  ev->add_option("labeled", ev_labeled, "Labeled triple file")->required();
  ev->add_option("--embeddings", ev_embeddings, "Embedding file")->required();
  ev->add_option("--fractions", ev_fractions, "Training fractions (default 0.1,0.5,0.9)");

  // neighbors
  auto* nn = app.add_subcommand("neighbors", "Nearest neighbors of seed words");
  std::vector<std::string> nn_words;
  std::string nn_embeddings;
  int nn_k = 3;
  nn->add_option("words", nn_words, "Seed words")->required();
  nn->add_option("--embeddings", nn_embeddings, "Embedding file")->required();
  nn->add_option("-k", nn_k, "Neighbors per seed word (default 3)");

  // pipeline
  auto* pl = app.add_subcommand(
      "pipeline", "train-embeddings, train, score and evaluate in one run");
  std::string pl_labeled;
  std::vector<std::string> pl_unlabeled;
  std::string pl_fractions = "0.1,0.5,0.9";
  pl->add_option("--labeled", pl_labeled, "Labeled triple file")->required();
  pl->add_option("--unlabeled", pl_unlabeled,
                 "Unlabeled triple files; pooled into the embedding corpus and scored");
  pl->add_option("--fractions", pl_fractions, "Training fractions (default 0.1,0.5,0.9)");

  CLI11_PARSE(app, argc, argv);

  try {
    const RunConfig config = resolve_config(g);
    const fs::path out_dir = g.out;

    if (*te) {
      train_embeddings_stage(te_inputs, config, out_dir / "embeddings.txt");
    } else if (*tr) {
      const auto labeled = read_triples(tr_labeled);
      train_stage(labeled, read_embeddings(tr_embeddings), config, out_dir);
    } else if (*sc) {
      const auto triples = read_triples(sc_input);
      ModelBundle bundle;
      try {
        bundle = load_models(sc_models, read_embeddings(sc_embeddings));
      } catch (const PipelineError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
      }
      const auto scored = score_triples(triples, bundle);
      if (sc_stdout) {
        write_scores(std::cout, scored, sc_per_role);
      } else {
        const auto path = out_dir / "scores.jsonl";
        auto out = open_output(path);
        write_scores(out, scored, sc_per_role);
        finish_output(out, path);
        std::cout << "scored " << scored.size() << " triples; wrote "
                  << path.string() << '\n';
      }
    } else if (*ev) {
      const auto fractions = parse_fractions(ev_fractions);
      const auto labeled = read_triples(ev_labeled);
      evaluate_stage(labeled, read_embeddings(ev_embeddings), config, fractions,
                     out_dir);
    } else if (*nn) {
      if (nn_k < 1) throw ConfigError("-k must be >= 1");
      const auto model = read_embeddings(nn_embeddings);
      std::size_t succeeded = 0;
      std::cout << std::left << std::setw(20) << "seed keyword"
                << "top " << nn_k << " nearest neighbors\n";
      for (const auto& word : nn_words) {
        const auto key = detail::to_lower_ascii(word);
        if (!model.vocab.find(key)) {
          std::cerr << "warning: \"" << word << "\" is not in the vocabulary\n";
          continue;
        }
        std::cout << std::setw(20) << key;
        const auto neighbors = nearest_neighbors(model, key, static_cast<std::size_t>(nn_k));
        for (std::size_t i = 0; i < neighbors.size(); ++i) {
          std::cout << (i ? ", " : "") << neighbors[i].word << " ("
                    << std::fixed << std::setprecision(4) << neighbors[i].similarity
                    << ')';
        }
        std::cout.unsetf(std::ios::fixed);
        std::cout << '\n';
        ++succeeded;
      }
      if (succeeded == 0) {
        std::cerr << "error: no seed word is in the vocabulary\n";
        return kExitFailure;
      }
    } else if (*pl) {
      const auto fractions = parse_fractions(pl_fractions);
      const auto labeled = read_triples(pl_labeled);
      std::vector<std::string> inputs{pl_labeled};
      inputs.insert(inputs.end(), pl_unlabeled.begin(), pl_unlabeled.end());

      fs::create_directories(out_dir);
      {
        const auto path = out_dir / "config.txt";
        auto out = open_output(path);
        write_config(out, config);
        finish_output(out, path);
      }
      auto embedding = train_embeddings_stage(inputs, config, out_dir / "embeddings.txt");
      const auto bundle = train_stage(labeled, embedding, config, out_dir / "models");

      std::vector<ContextualTriple> to_score;
      for (const auto& path : pl_unlabeled) {
        auto triples = read_triples(path);
        to_score.insert(to_score.end(), triples.begin(), triples.end());
      }
      if (to_score.empty()) to_score = labeled;
      const auto scores_path = out_dir / "scores.jsonl";
      auto scores_out = open_output(scores_path);
      write_scores(scores_out, score_triples(to_score, bundle), false);
      finish_output(scores_out, scores_path);
      std::cout << "scored " << to_score.size() << " triples; wrote "
                << scores_path.string() << '\n';

      evaluate_stage(labeled, embedding, config, fractions, out_dir);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return EXIT_SUCCESS;
}
