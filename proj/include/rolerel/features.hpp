#pragma once

// Context feature vectors: count-weighted bag-of-words sums of unit word
// vectors, projected back onto the unit hypersphere.

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rolerel/corpus.hpp"
#include "rolerel/embedding.hpp"

namespace rolerel {

struct Normalized {
  std::vector<double> values;
  bool degenerate = false;
};

/// v / |v|_2, or the zero vector flagged degenerate when |v|_2 <= 1e-12.
inline Normalized l2_normalize(std::span<const double> v) {
  const double norm = std::sqrt(dot(v, v));
  Normalized out;
  out.values.assign(v.size(), 0.0);
  if (!(norm > 1e-12) || !std::isfinite(norm)) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < v.size(); ++i) out.values[i] = v[i] / norm;
  return out;
}

struct ContextFeatureVector {
  std::vector<double> values;
  /// Set when no context token was in the vocabulary; values is then zero.
  bool oov = false;

  friend bool operator==(const ContextFeatureVector&,
                         const ContextFeatureVector&) = default;
};

/// Count-weighted sum of the vectors of in-vocabulary tokens across all
/// sentences, normalized. Out-of-vocabulary tokens are skipped. Terms are
/// added in vocabulary order, so token order never changes the result and
/// duplicating the whole context yields the identical vector.
inline ContextFeatureVector context_vector(
    std::span<const std::string> sentences, const EmbeddingModel& model) {
  if (!model.finalized) throw EmbeddingError("model is not finalized");
  std::map<std::size_t, std::size_t> counts;
  for (const auto& sentence : sentences) {
    for (const auto& token : tokenize(sentence)) {
      if (const auto w = model.vocab.find(token)) ++counts[*w];
    }
  }
  std::vector<double> sum(model.dim(), 0.0);
  for (const auto& [w, c] : counts) {
    const auto v = model.vector(w);
    const double weight = static_cast<double>(c);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += weight * v[i];
  }
  const bool any = !counts.empty();
  ContextFeatureVector cfv;
  if (!any) {
    cfv.values.assign(model.dim(), 0.0);
    cfv.oov = true;
    return cfv;
  }
  auto normalized = l2_normalize(sum);
  // Word vectors can cancel exactly; treat that like an empty context.
  cfv.oov = normalized.degenerate;
  cfv.values = std::move(normalized.values);
  return cfv;
}

inline ContextFeatureVector context_vector(const ContextualTriple& triple,
                                           const EmbeddingModel& model) {
  return context_vector(triple.sentences, model);
}

inline nlohmann::json cfv_record(std::string_view id,
                                 const ContextFeatureVector& cfv) {
  return {{"id", id}, {"oov", cfv.oov}, {"values", cfv.values}};
}

}  // namespace rolerel
