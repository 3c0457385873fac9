#pragma once

// Stratified splits, thresholded precision/recall/F1 and graded NDCG.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rolerel/corpus.hpp"
#include "rolerel/pipeline.hpp"
#include "rolerel/random.hpp"

namespace rolerel {

// ---------------------------------------------------------------------------
// Splitting

struct TrainTestSplit {
  std::vector<ContextualTriple> train;
  std::vector<ContextualTriple> test;
};

/// Stratifies by (role, binarized label). Within each stratum the members are
/// put in id order, shuffled with a stream derived from (seed, stratum), and
/// the first ceil(fraction * n) go to train. Output keeps input order.
inline TrainTestSplit split_train_test(std::span<const ContextualTriple> labeled,
                                       double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw std::invalid_argument("split fraction must lie strictly between 0 and 1");
  }
  std::map<std::string, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const auto& t = labeled[i];
    std::string key = t.role.name() + '\x1f';
    const auto binary = t.label ? binarize_label(*t.label) : std::nullopt;
    key += binary ? (*binary ? "1" : "0") : "-";
    strata[key].push_back(i);
  }

  std::vector<bool> in_train(labeled.size(), false);
  for (auto& [key, members] : strata) {
    std::sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) {
      return labeled[a].id < labeled[b].id;
    });
    Rng rng(derive_seed(seed, key));
    rng.shuffle(members);
    // The epsilon keeps products like 0.9 * 10 = 9.000000000000002 at 9.
    const double raw = fraction * static_cast<double>(members.size());
    const auto take = std::min(members.size(),
                               static_cast<std::size_t>(std::ceil(raw - 1e-9)));
    for (std::size_t i = 0; i < take; ++i) in_train[members[i]] = true;
  }

  TrainTestSplit split;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    (in_train[i] ? split.train : split.test).push_back(labeled[i]);
  }
  return split;
}

// ---------------------------------------------------------------------------
// Precision / recall / F1

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const noexcept { return tp + fp + fn + tn; }

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

struct ClassificationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionCounts counts;
  /// No predicted positives; precision is reported as 0.
  bool precision_undefined = false;
  /// No gold positives; recall is reported as 0.
  bool recall_undefined = false;
};

struct GoldScore {
  double score;
  bool positive;
};

inline ClassificationMetrics metrics_from_counts(const ConfusionCounts& c) {
  ClassificationMetrics m;
  m.counts = c;
  const auto tp = static_cast<double>(c.tp);
  if (c.tp + c.fp == 0) {
    m.precision_undefined = true;
  } else {
    m.precision = tp / static_cast<double>(c.tp + c.fp);
  }
  if (c.tp + c.fn == 0) {
    m.recall_undefined = true;
  } else {
    m.recall = tp / static_cast<double>(c.tp + c.fn);
  }
  if (m.precision + m.recall > 0.0) {
    m.f1 = 2.0 * m.precision * m.recall / (m.precision + m.recall);
  }
  return m;
}

/// Predicts positive iff score >= threshold.
inline ClassificationMetrics precision_recall_f1(std::span<const GoldScore> items,
                                                 double threshold = 0.5) {
  ConfusionCounts c;
  for (const auto& item : items) {
    const bool predicted = item.score >= threshold;
    if (predicted && item.positive) ++c.tp;
    else if (predicted) ++c.fp;
    else if (item.positive) ++c.fn;
    else ++c.tn;
  }
  return metrics_from_counts(c);
}

// ---------------------------------------------------------------------------
// NDCG

struct GainMap {
  double highly_relevant = 3.0;
  double relevant = 2.0;
  double neutral = 1.0;
  double irrelevant = 0.0;

  double operator()(RelevanceLabel label) const noexcept {
    switch (label) {
      case RelevanceLabel::kHighlyRelevant: return highly_relevant;
      case RelevanceLabel::kRelevant: return relevant;
      case RelevanceLabel::kNeutral: return neutral;
      case RelevanceLabel::kIrrelevant: return irrelevant;
    }
    return 0.0;
  }

  void validate() const {
    if (!(irrelevant >= 0.0 && neutral > irrelevant && relevant > neutral &&
          highly_relevant > relevant)) {
      throw std::invalid_argument(
          "gains must satisfy highly_relevant > relevant > neutral > "
          "irrelevant >= 0");
    }
  }
};

struct NdcgResult {
  double value = 1.0;
  /// No item has positive gain; value is 1 by convention.
  bool degenerate = false;
};

namespace detail {

inline double dcg(std::span<const double> gains, std::size_t cutoff) {
  double sum = 0.0;
  const std::size_t n = std::min(cutoff, gains.size());
  for (std::size_t i = 0; i < n; ++i) {
    sum += (std::exp2(gains[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  }
  return sum;
}

}  // namespace detail

/// NDCG over gains listed in ranked order, with (2^g - 1) / log2(i + 1)
/// discounting (1-based i) and an optional cutoff.
inline NdcgResult ndcg_from_gains(std::span<const double> ranked_gains,
                                  std::optional<std::size_t> cutoff = std::nullopt) {
  const std::size_t k = cutoff.value_or(ranked_gains.size());
  std::vector<double> ideal(ranked_gains.begin(), ranked_gains.end());
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double idcg = detail::dcg(ideal, k);
  if (!(idcg > 0.0)) return {1.0, true};
  return {detail::dcg(ranked_gains, k) / idcg, false};
}

inline NdcgResult ndcg(std::span<const RelevanceLabel> ranked_labels,
                       const GainMap& gains = {},
                       std::optional<std::size_t> cutoff = std::nullopt) {
  std::vector<double> g;
  g.reserve(ranked_labels.size());
  for (auto label : ranked_labels) g.push_back(gains(label));
  return ndcg_from_gains(g, cutoff);
}

// ---------------------------------------------------------------------------
// Evaluation reports

struct EvalReport {
  /// Canonical role name, or "ALL" for the aggregate.
  std::string role;
  ClassificationMetrics classification;
  NdcgResult ndcg;
  double threshold = 0.5;
  std::size_t evaluated = 0;
  /// True when the role had no classifier and every triple scored 0.
  bool untrained_role = false;
};

inline constexpr std::string_view kAggregateRole = "ALL";

struct Evaluation {
  std::vector<EvalReport> per_role;
  EvalReport aggregate;
};

/// Scores and ranks the test triples per role. P/R/F1 use the binarizable
/// labels; NDCG uses all four grades. The aggregate micro-averages the
/// confusion counts and takes the mean of per-role NDCG.
inline Evaluation evaluate(const ModelBundle& bundle,
                           std::span<const ContextualTriple> test,
                           double threshold = 0.5, const GainMap& gains = {}) {
  std::map<Role, std::vector<ContextualTriple>> by_role;
  for (const auto& t : test) {
    if (!t.label) {
      throw std::invalid_argument("test triple \"" + t.id + "\" has no label");
    }
    by_role[t.role].push_back(t);
  }

  Evaluation result;
  ConfusionCounts total;
  double ndcg_sum = 0.0;
  std::size_t evaluated = 0;
  for (const auto& [role, triples] : by_role) {
    const auto ranked = rank(score_triples(triples, bundle));
    std::vector<GoldScore> binary;
    std::vector<RelevanceLabel> graded;
    for (const auto& s : ranked) {
      graded.push_back(*s.triple.label);
      if (const auto b = binarize_label(*s.triple.label)) {
        binary.push_back({s.score, *b});
      }
    }
    EvalReport report;
    report.role = role.name();
    report.classification = precision_recall_f1(binary, threshold);
    report.ndcg = ndcg(graded, gains);
    report.threshold = threshold;
    report.evaluated = ranked.size();
    report.untrained_role = bundle.find(role) == nullptr;
    total += report.classification.counts;
    ndcg_sum += report.ndcg.value;
    evaluated += report.evaluated;
    result.per_role.push_back(std::move(report));
  }

  auto& agg = result.aggregate;
  agg.role = kAggregateRole;
  agg.classification = metrics_from_counts(total);
  agg.ndcg.value = result.per_role.empty()
                       ? 1.0
                       : ndcg_sum / static_cast<double>(result.per_role.size());
  agg.ndcg.degenerate = result.per_role.empty();
  agg.threshold = threshold;
  agg.evaluated = evaluated;
  return result;
}

inline nlohmann::json to_json(const EvalReport& r) {
  const auto& c = r.classification;
  nlohmann::json j = {
      {"role", r.role},
      {"precision", c.precision},
      {"recall", c.recall},
      {"f1", c.f1},
      {"ndcg", r.ndcg.value},
      {"threshold", r.threshold},
      {"evaluated", r.evaluated},
      {"counts", {{"tp", c.counts.tp}, {"fp", c.counts.fp},
                  {"fn", c.counts.fn}, {"tn", c.counts.tn}}},
      {"precision_undefined", c.precision_undefined},
      {"recall_undefined", c.recall_undefined},
      {"ndcg_degenerate", r.ndcg.degenerate}};
  if (r.untrained_role) j["untrained_role"] = true;
  return j;
}

inline nlohmann::json to_json(const Evaluation& e) {
  nlohmann::json roles = nlohmann::json::array();
  for (const auto& r : e.per_role) roles.push_back(to_json(r));
  return {{"per_role", roles}, {"aggregate", to_json(e.aggregate)}};
}

struct FractionEvaluation {
  double fraction;
  Evaluation evaluation;
};

inline std::string format_fraction(double f) { return format_double(f); }

/// Flat table: role, fraction, precision, recall, f1, ndcg.
inline void write_report_csv(std::ostream& out,
                             std::span<const FractionEvaluation> runs) {
  out << "role,fraction,precision,recall,f1,ndcg\n";
  const auto row = [&](const EvalReport& r, double fraction) {
    out << r.role << ',' << format_fraction(fraction) << ','
        << format_double(r.classification.precision) << ','
        << format_double(r.classification.recall) << ','
        << format_double(r.classification.f1) << ','
        << format_double(r.ndcg.value) << '\n';
  };
  for (const auto& run : runs) {
    for (const auto& r : run.evaluation.per_role) row(r, run.fraction);
    row(run.evaluation.aggregate, run.fraction);
  }
}

inline nlohmann::json report_json(std::span<const FractionEvaluation> runs) {
  nlohmann::json j = nlohmann::json::array();
  for (const auto& run : runs) {
    auto block = to_json(run.evaluation);
    block["fraction"] = run.fraction;
    j.push_back(std::move(block));
  }
  return {{"runs", j}};
}

/// For each fraction: split, train fresh per-role forests on the train part
/// and evaluate on the rest. `on_models` sees each freshly trained bundle.
template <typename OnModels>
std::vector<FractionEvaluation> evaluate_fractions(
    std::span<const ContextualTriple> labeled, const EmbeddingModel& embedding,
    const ForestConfig& forest_config, std::span<const double> fractions,
    std::uint64_t split_seed, double threshold, const GainMap& gains,
    OnModels&& on_models, int threads = 1) {
  std::vector<FractionEvaluation> runs;
  for (const double fraction : fractions) {
    const auto split = split_train_test(labeled, fraction, split_seed);
    const auto bundle =
        train_role_models(split.train, embedding, forest_config, threads);
    on_models(fraction, bundle);
    runs.push_back({fraction, evaluate(bundle, split.test, threshold, gains)});
  }
  return runs;
}

inline std::vector<FractionEvaluation> evaluate_fractions(
    std::span<const ContextualTriple> labeled, const EmbeddingModel& embedding,
    const ForestConfig& forest_config, std::span<const double> fractions,
    std::uint64_t split_seed, double threshold = 0.5, const GainMap& gains = {},
    int threads = 1) {
  return evaluate_fractions(labeled, embedding, forest_config, fractions,
                            split_seed, threshold, gains,
                            [](double, const ModelBundle&) {}, threads);
}

}  // namespace rolerel
