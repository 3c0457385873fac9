#pragma once

// Binary random forest over dense feature vectors: bootstrap-sampled CART
// trees split on Gini impurity, with class-fraction leaves.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "rolerel/corpus.hpp"
#include "rolerel/random.hpp"

namespace rolerel {

class ForestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ForestConfig {
  int n_trees = 100;
  /// Unset means unlimited depth.
  std::optional<int> max_depth;
  int min_samples_leaf = 1;
  /// Unset resolves to ceil(sqrt(d)) at training time.
  std::optional<int> features_per_split;
  std::uint64_t seed = 1;

  int resolved_features_per_split(std::size_t dim) const {
    if (features_per_split) return *features_per_split;
    return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(dim))));
  }

  void validate(std::size_t dim) const {
    if (n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
    if (max_depth && *max_depth < 1) {
      throw std::invalid_argument("max_depth must be >= 1");
    }
    if (min_samples_leaf < 1) {
      throw std::invalid_argument("min_samples_leaf must be >= 1");
    }
    const int m = resolved_features_per_split(dim);
    if (m < 1 || static_cast<std::size_t>(m) > dim) {
      throw std::invalid_argument("features_per_split must be in [1, " +
                                  std::to_string(dim) + "]");
    }
  }
};

struct LabeledSample {
  /// Canonical ordering key; training sorts samples by id.
  std::string id;
  std::vector<double> features;
  bool positive = false;
};

struct Split {
  std::size_t feature = 0;
  double threshold = 0.0;
  double impurity_decrease = 0.0;
};

/// A node is a leaf when feature < 0. Internal nodes send x[feature] <=
/// threshold to the left child.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double fraction = 0.0;

  bool is_leaf() const noexcept { return feature < 0; }
};

class DecisionTree {
 public:
  DecisionTree() = default;
  explicit DecisionTree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {}

  const std::vector<TreeNode>& nodes() const noexcept { return nodes_; }

  double predict(std::span<const double> x) const {
    std::size_t i = 0;
    while (!nodes_[i].is_leaf()) {
      const auto& node = nodes_[i];
      i = static_cast<std::size_t>(
          x[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                      : node.right);
    }
    return nodes_[i].fraction;
  }

  /// Longest root-to-leaf path, counted in tested features.
  int depth() const { return nodes_.empty() ? 0 : depth_from(0); }

 private:
  int depth_from(std::size_t i) const {
    const auto& node = nodes_[i];
    if (node.is_leaf()) return 0;
    return 1 + std::max(depth_from(static_cast<std::size_t>(node.left)),
                        depth_from(static_cast<std::size_t>(node.right)));
  }

  std::vector<TreeNode> nodes_;
};

struct TrainingSize {
  std::size_t positives = 0;
  std::size_t negatives = 0;

  friend bool operator==(const TrainingSize&, const TrainingSize&) = default;
};

struct RoleClassifier {
  Role role;
  std::size_t dim = 0;
  ForestConfig config;
  TrainingSize training_size;
  std::vector<DecisionTree> trees;

  double predict_proba(std::span<const double> x) const {
    if (x.size() != dim) {
      throw ForestError("feature dimension " + std::to_string(x.size()) +
                        " does not match classifier dimension " +
                        std::to_string(dim));
    }
    double sum = 0.0;
    for (const auto& tree : trees) sum += tree.predict(x);
    return sum / static_cast<double>(trees.size());
  }
};

inline double predict_proba(const RoleClassifier& classifier,
                            std::span<const double> x) {
  return classifier.predict_proba(x);
}

// ---------------------------------------------------------------------------
// Split search

namespace detail {

inline double gini(double positives, double total) {
  if (total <= 0.0) return 0.0;
  const double p = positives / total;
  return 2.0 * p * (1.0 - p);
}

inline constexpr double kMinImpurityDecrease = 1e-12;

/// Best split over `rows` (indices into samples, repeats allowed) restricted
/// to `features`, scanning features in ascending index order and thresholds
/// in ascending order; only strict improvements replace the incumbent.
/// Splits whose decrease does not exceed `min_decrease` are ignored.
inline std::optional<Split> best_split(std::span<const LabeledSample> samples,
                                       std::span<const std::size_t> rows,
                                       std::span<const std::size_t> features,
                                       std::size_t min_leaf,
                                       double min_decrease = kMinImpurityDecrease) {
  if (rows.empty()) return std::nullopt;
  const double n = static_cast<double>(rows.size());
  double total_pos = 0.0;
  for (auto r : rows) total_pos += samples[r].positive ? 1.0 : 0.0;
  const double parent = gini(total_pos, n);
  if (parent <= 0.0) return std::nullopt;

  std::vector<std::size_t> sorted_features(features.begin(), features.end());
  std::sort(sorted_features.begin(), sorted_features.end());

  std::optional<Split> best;
  std::vector<std::pair<double, bool>> column(rows.size());
  for (const std::size_t f : sorted_features) {
    for (std::size_t i = 0; i < rows.size(); ++i) {
      column[i] = {samples[rows[i]].features[f], samples[rows[i]].positive};
    }
    std::sort(column.begin(), column.end());
    double left_pos = 0.0;
    for (std::size_t i = 0; i + 1 < column.size(); ++i) {
      left_pos += column[i].second ? 1.0 : 0.0;
      const double a = column[i].first;
      const double b = column[i + 1].first;
      if (!(a < b)) continue;
      const std::size_t left_n = i + 1;
      const std::size_t right_n = column.size() - left_n;
      if (left_n < min_leaf || right_n < min_leaf) continue;
      const double ln = static_cast<double>(left_n);
      const double rn = static_cast<double>(right_n);
      const double children = (ln / n) * gini(left_pos, ln) +
                              (rn / n) * gini(total_pos - left_pos, rn);
      const double decrease = parent - children;
      if (decrease <= min_decrease) continue;
      if (!best || decrease > best->impurity_decrease) {
        double threshold = a + (b - a) / 2.0;
        if (!(threshold < b)) threshold = a;
        best = Split{f, threshold, decrease};
      }
    }
  }
  return best;
}

}  // namespace detail

/// Gini-optimal threshold split over the candidate features. Thresholds are
/// midpoints between consecutive distinct values; ties go to the lower feature
/// index, then the lower threshold. Absent when no split reduces impurity.
inline std::optional<Split> best_split(std::span<const LabeledSample> samples,
                                       std::span<const std::size_t> candidate_features) {
  std::vector<std::size_t> rows(samples.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  return detail::best_split(samples, rows, candidate_features, 1);
}

// ---------------------------------------------------------------------------
// Training

namespace detail {

class TreeGrower {
 public:
  TreeGrower(std::span<const LabeledSample> samples, std::size_t dim,
             const ForestConfig& config, Rng& rng)
      : samples_(samples),
        dim_(dim),
        max_depth_(config.max_depth),
        min_leaf_(static_cast<std::size_t>(config.min_samples_leaf)),
        features_per_split_(
            static_cast<std::size_t>(config.resolved_features_per_split(dim))),
        rng_(rng) {}

  DecisionTree grow(std::vector<std::size_t> rows) {
    nodes_.clear();
    build(rows, 0);
    return DecisionTree(std::move(nodes_));
  }

 private:
  std::int32_t build(std::span<std::size_t> rows, int depth) {
    const auto index = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    std::size_t positives = 0;
    for (auto r : rows) positives += samples_[r].positive ? 1 : 0;
    const double fraction =
        static_cast<double>(positives) / static_cast<double>(rows.size());

    const bool pure = positives == 0 || positives == rows.size();
    const bool depth_capped = max_depth_ && depth >= *max_depth_;
    const bool too_small = rows.size() < 2 * min_leaf_;
    std::optional<Split> split;
    if (!pure && !depth_capped && !too_small) split = choose_split(rows);

    if (!split) {
      nodes_[index].fraction = fraction;
      return index;
    }

    const auto middle = std::stable_partition(
        rows.begin(), rows.end(), [&](std::size_t r) {
          return samples_[r].features[split->feature] <= split->threshold;
        });
    const auto left_n = static_cast<std::size_t>(middle - rows.begin());
    const auto left = build(rows.first(left_n), depth + 1);
    const auto right = build(rows.subspan(left_n), depth + 1);
    auto& node = nodes_[index];
    node.feature = static_cast<int>(split->feature);
    node.threshold = split->threshold;
    node.left = left;
    node.right = right;
    node.fraction = fraction;
    return index;
  }

  // Tries a random subset of features_per_split features; if none of them
  // admits a split, falls back to the remaining features. An impure node with
  // no impurity-reducing split (XOR-like layouts) still gets the first
  // zero-gain split that separates distinct rows, so unlimited trees fit
  // their training rows.
  std::optional<Split> choose_split(std::span<const std::size_t> rows) {
    std::vector<std::size_t> order(dim_);
    for (std::size_t i = 0; i < dim_; ++i) order[i] = i;
    for (std::size_t i = 0; i < features_per_split_; ++i) {
      std::swap(order[i], order[i + rng_.below(dim_ - i)]);
    }
    const std::span<const std::size_t> all(order);
    auto split = best_split(samples_, rows, all.first(features_per_split_), min_leaf_);
    if (!split && features_per_split_ < dim_) {
      split = best_split(samples_, rows, all.subspan(features_per_split_), min_leaf_);
    }
    if (!split) split = best_split(samples_, rows, all, min_leaf_, -kMinImpurityDecrease);
    return split;
  }

  std::span<const LabeledSample> samples_;
  std::size_t dim_;
  std::optional<int> max_depth_;
  std::size_t min_leaf_;
  std::size_t features_per_split_;
  Rng& rng_;
  std::vector<TreeNode> nodes_;
};

}  // namespace detail

/// Trains one forest. Samples are put in canonical order (by id) before any
/// bootstrap draw, so the result does not depend on input order. Tree t uses
/// its own RNG derived from (config.seed, t); `threads` only affects speed.
inline RoleClassifier train_forest(const Role& role,
                                   std::vector<LabeledSample> samples,
                                   const ForestConfig& config, int threads = 1) {
  if (samples.empty()) throw ForestError("no training samples");
  const std::size_t dim = samples.front().features.size();
  for (const auto& s : samples) {
    if (s.features.size() != dim) {
      throw ForestError("sample \"" + s.id + "\" has inconsistent dimension");
    }
  }
  config.validate(dim);

  TrainingSize size;
  for (const auto& s : samples) ++(s.positive ? size.positives : size.negatives);
  if (size.positives == 0 || size.negatives == 0) {
    throw ForestError("role \"" + role.name() +
                      "\" has a single class; train_forest needs both "
                      "positive and negative samples");
  }

  std::stable_sort(samples.begin(), samples.end(),
                   [](const auto& a, const auto& b) { return a.id < b.id; });

  RoleClassifier classifier;
  classifier.role = role;
  classifier.dim = dim;
  classifier.config = config;
  classifier.config.features_per_split = config.resolved_features_per_split(dim);
  classifier.training_size = size;
  classifier.trees.resize(static_cast<std::size_t>(config.n_trees));

  const auto grow_tree = [&](std::size_t t) {
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> rows(samples.size());
    for (auto& r : rows) r = rng.below(samples.size());
    detail::TreeGrower grower(samples, dim, classifier.config, rng);
    classifier.trees[t] = grower.grow(std::move(rows));
  };

  const auto n_trees = classifier.trees.size();
  const auto workers = static_cast<std::size_t>(
      std::clamp<int>(threads, 1, static_cast<int>(n_trees)));
  if (workers == 1) {
    for (std::size_t t = 0; t < n_trees; ++t) grow_tree(t);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t t = w; t < n_trees; t += workers) grow_tree(t);
      });
    }
  }
  return classifier;
}

// ---------------------------------------------------------------------------
// JSON persistence

namespace detail {

inline nlohmann::json tree_to_json(const DecisionTree& tree, std::size_t i) {
  const auto& node = tree.nodes()[i];
  if (node.is_leaf()) return {{"p", node.fraction}};
  return {{"f", node.feature},
          {"t", node.threshold},
          {"l", tree_to_json(tree, static_cast<std::size_t>(node.left))},
          {"r", tree_to_json(tree, static_cast<std::size_t>(node.right))}};
}

inline std::int32_t tree_from_json(const nlohmann::json& j, std::size_t dim,
                                   int depth, std::optional<int> max_depth,
                                   std::vector<TreeNode>& nodes) {
  if (!j.is_object()) throw ForestError("tree node is not an object");
  const auto index = static_cast<std::int32_t>(nodes.size());
  nodes.emplace_back();
  if (j.contains("p")) {
    if (j.size() != 1 || !j["p"].is_number()) {
      throw ForestError("malformed leaf node");
    }
    const double p = j["p"].get<double>();
    if (!(p >= 0.0 && p <= 1.0)) throw ForestError("leaf fraction outside [0,1]");
    nodes[index].fraction = p;
    return index;
  }
  for (const char* key : {"f", "t", "l", "r"}) {
    if (!j.contains(key)) {
      throw ForestError(std::string("internal node missing \"") + key + "\"");
    }
  }
  if (!j["f"].is_number_integer() || !j["t"].is_number()) {
    throw ForestError("malformed internal node");
  }
  const auto feature = j["f"].get<std::int64_t>();
  if (feature < 0 || static_cast<std::size_t>(feature) >= dim) {
    throw ForestError("split feature " + std::to_string(feature) +
                      " outside [0, " + std::to_string(dim) + ")");
  }
  if (max_depth && depth >= *max_depth) {
    throw ForestError("tree exceeds max_depth " + std::to_string(*max_depth));
  }
  const double threshold = j["t"].get<double>();
  const auto left = tree_from_json(j["l"], dim, depth + 1, max_depth, nodes);
  const auto right = tree_from_json(j["r"], dim, depth + 1, max_depth, nodes);
  auto& node = nodes[index];
  node.feature = static_cast<int>(feature);
  node.threshold = threshold;
  node.left = left;
  node.right = right;
  return index;
}

}  // namespace detail

inline nlohmann::json to_json(const RoleClassifier& c) {
  nlohmann::json config = {
      {"n_trees", c.config.n_trees},
      {"max_depth", c.config.max_depth ? nlohmann::json(*c.config.max_depth)
                                       : nlohmann::json(nullptr)},
      {"min_samples_leaf", c.config.min_samples_leaf},
      {"features_per_split", c.config.resolved_features_per_split(c.dim)},
      {"seed", c.config.seed}};
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& tree : c.trees) trees.push_back(detail::tree_to_json(tree, 0));
  return {{"role", c.role.name()},
          {"dim", c.dim},
          {"config", config},
          {"training_size",
           {{"positives", c.training_size.positives},
            {"negatives", c.training_size.negatives}}},
          {"trees", trees}};
}

inline RoleClassifier classifier_from_json(const nlohmann::json& j) {
  try {
    RoleClassifier c;
    const auto role_name = j.at("role").get<std::string>();
    c.role = Role::canonicalize(role_name);
    if (c.role.name() != role_name) {
      throw ForestError("role \"" + role_name + "\" is not canonical");
    }
    c.dim = j.at("dim").get<std::size_t>();
    const auto& config = j.at("config");
    c.config.n_trees = config.at("n_trees").get<int>();
    if (!config.at("max_depth").is_null()) {
      c.config.max_depth = config.at("max_depth").get<int>();
    }
    c.config.min_samples_leaf = config.at("min_samples_leaf").get<int>();
    c.config.features_per_split = config.at("features_per_split").get<int>();
    c.config.seed = config.at("seed").get<std::uint64_t>();
    c.config.validate(c.dim);
    c.training_size.positives = j.at("training_size").at("positives").get<std::size_t>();
    c.training_size.negatives = j.at("training_size").at("negatives").get<std::size_t>();

    const auto& trees = j.at("trees");
    if (!trees.is_array() ||
        trees.size() != static_cast<std::size_t>(c.config.n_trees)) {
      throw ForestError("expected " + std::to_string(c.config.n_trees) + " trees");
    }
    for (const auto& t : trees) {
      std::vector<TreeNode> nodes;
      detail::tree_from_json(t, c.dim, 0, c.config.max_depth, nodes);
      c.trees.emplace_back(std::move(nodes));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ForestError(std::string("malformed classifier: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ForestError(std::string("invalid classifier: ") + e.what());
  }
}

}  // namespace rolerel
