#pragma once

// Run configuration: flat "key = value" files with command-line overrides.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

#include "rolerel/corpus.hpp"
#include "rolerel/embedding.hpp"
#include "rolerel/eval.hpp"
#include "rolerel/forest.hpp"
#include "rolerel/random.hpp"

namespace rolerel {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  EmbeddingConfig embedding;
  ForestConfig forest;
  double threshold = 0.5;
  GainMap gains;
  std::uint64_t seed = 1;
  int threads = 1;

  /// Module seeds: derive_seed(seed, stage tag).
  std::uint64_t embedding_seed() const { return derive_seed(seed, "embedding"); }
  std::uint64_t forest_seed() const { return derive_seed(seed, "forest"); }
  std::uint64_t split_seed() const { return derive_seed(seed, "split"); }

  /// Copies with the derived seeds and thread count filled in.
  EmbeddingConfig resolved_embedding() const {
    auto c = embedding;
    c.seed = embedding_seed();
    c.threads = threads;
    return c;
  }
  ForestConfig resolved_forest() const {
    auto c = forest;
    c.seed = forest_seed();
    return c;
  }

  void validate() const {
    embedding.validate();
    if (forest.n_trees < 1) throw ConfigError("n_trees must be >= 1");
    if (forest.max_depth && *forest.max_depth < 1) {
      throw ConfigError("max_depth must be >= 1");
    }
    if (forest.min_samples_leaf < 1) throw ConfigError("min_samples_leaf must be >= 1");
    if (forest.features_per_split &&
        (*forest.features_per_split < 1 || *forest.features_per_split > embedding.dim)) {
      throw ConfigError("features_per_split must be in [1, dim]");
    }
    if (!(threshold >= 0.0 && threshold <= 1.0)) {
      throw ConfigError("threshold must be in [0, 1]");
    }
    gains.validate();
    if (threads < 1) throw ConfigError("threads must be >= 1");
  }
};

namespace detail {

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) {
    throw ConfigError("invalid value \"" + std::string(text) + "\" for key \"" +
                      std::string(key) + "\"");
  }
  return value;
}

}  // namespace detail

/// Applies one setting. "max_depth" and "features_per_split" accept "none".
inline void apply_setting(RunConfig& config, std::string_view key,
                          std::string_view value) {
  using detail::parse_number;
  const auto optional_int = [&](std::optional<int>& slot) {
    if (value == "none" || value == "unlimited" || value == "auto") {
      slot.reset();
    } else {
      slot = parse_number<int>(key, value);
    }
  };
  if (key == "dim") config.embedding.dim = parse_number<int>(key, value);
  else if (key == "window") config.embedding.window = parse_number<int>(key, value);
  else if (key == "negatives") config.embedding.negatives = parse_number<int>(key, value);
  else if (key == "epochs") config.embedding.epochs = parse_number<int>(key, value);
  else if (key == "lr_initial") config.embedding.lr_initial = parse_number<double>(key, value);
  else if (key == "lr_final") config.embedding.lr_final = parse_number<double>(key, value);
  else if (key == "min_count") config.embedding.min_count = parse_number<std::uint64_t>(key, value);
  else if (key == "unigram_power") config.embedding.unigram_power = parse_number<double>(key, value);
  else if (key == "subsample") config.embedding.subsample = parse_number<double>(key, value);
  else if (key == "n_trees") config.forest.n_trees = parse_number<int>(key, value);
  else if (key == "max_depth") optional_int(config.forest.max_depth);
  else if (key == "min_samples_leaf") config.forest.min_samples_leaf = parse_number<int>(key, value);
  else if (key == "features_per_split") optional_int(config.forest.features_per_split);
  else if (key == "threshold") config.threshold = parse_number<double>(key, value);
  else if (key == "gain.highly_relevant") config.gains.highly_relevant = parse_number<double>(key, value);
  else if (key == "gain.relevant") config.gains.relevant = parse_number<double>(key, value);
  else if (key == "gain.neutral") config.gains.neutral = parse_number<double>(key, value);
  else if (key == "gain.irrelevant") config.gains.irrelevant = parse_number<double>(key, value);
  else if (key == "seed") config.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "threads") config.threads = parse_number<int>(key, value);
  else throw ConfigError("unknown config key \"" + std::string(key) + "\"");
}

/// Applies "key=value" (spaces around '=' allowed).
inline void apply_assignment(RunConfig& config, std::string_view text) {
  const auto eq = text.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("expected key = value, got \"" + std::string(text) + "\"");
  }
  const auto key = detail::trim(text.substr(0, eq));
  const auto value = detail::trim(text.substr(eq + 1));
  if (key.empty()) throw ConfigError("empty key in \"" + std::string(text) + "\"");
  apply_setting(config, key, value);
}

/// Reads "key = value" lines; '#' starts a comment.
inline void load_config(RunConfig& config, std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view text = line;
    if (const auto hash = text.find('#'); hash != std::string_view::npos) {
      text = text.substr(0, hash);
    }
    if (detail::trim(text).empty()) continue;
    try {
      apply_assignment(config, text);
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void load_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  load_config(config, in);
}

inline void write_config(std::ostream& out, const RunConfig& c) {
  const auto opt = [](const std::optional<int>& v) {
    return v ? std::to_string(*v) : std::string("none");
  };
  out << "dim = " << c.embedding.dim << '\n'
      << "window = " << c.embedding.window << '\n'
      << "negatives = " << c.embedding.negatives << '\n'
      << "epochs = " << c.embedding.epochs << '\n'
      << "lr_initial = " << format_double(c.embedding.lr_initial) << '\n'
      << "lr_final = " << format_double(c.embedding.lr_final) << '\n'
      << "min_count = " << c.embedding.min_count << '\n'
      << "unigram_power = " << format_double(c.embedding.unigram_power) << '\n'
      << "subsample = " << format_double(c.embedding.subsample) << '\n'
      << "n_trees = " << c.forest.n_trees << '\n'
      << "max_depth = " << opt(c.forest.max_depth) << '\n'
      << "min_samples_leaf = " << c.forest.min_samples_leaf << '\n'
      << "features_per_split = " << opt(c.forest.features_per_split) << '\n'
      << "threshold = " << format_double(c.threshold) << '\n'
      << "gain.highly_relevant = " << format_double(c.gains.highly_relevant) << '\n'
      << "gain.relevant = " << format_double(c.gains.relevant) << '\n'
      << "gain.neutral = " << format_double(c.gains.neutral) << '\n'
      << "gain.irrelevant = " << format_double(c.gains.irrelevant) << '\n'
      << "seed = " << c.seed << '\n';
}

}  // namespace rolerel
