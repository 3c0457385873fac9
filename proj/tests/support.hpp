#pragma once

// Test-only oracles and synthetic data. Nothing here calls into the code path
// it is used to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <nlohmann/json.hpp>

#include "rolerel/corpus.hpp"

namespace rolerel::testing {

// ---------------------------------------------------------------------------
// Skip-gram loss evaluated straight from its definition, for finite
// differences.

inline double naive_sgns_loss(const std::vector<double>& center,
                              const std::vector<double>& context,
                              const std::vector<std::vector<double>>& negatives) {
  const auto dotp = [](const std::vector<double>& a, const std::vector<double>& b) {
    long double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (long double)a[i] * b[i];
    return static_cast<double>(s);
  };
  const auto log_sigmoid = [](double x) { return -std::log1p(std::exp(-x)); };
  double loss = -log_sigmoid(dotp(context, center));
  for (const auto& n : negatives) loss -= log_sigmoid(-dotp(n, center));
  return loss;
}

struct FiniteDifferenceGradients {
  std::vector<double> center;
  std::vector<double> context;
  std::vector<std::vector<double>> negatives;
};

inline FiniteDifferenceGradients central_differences(
    std::vector<double> center, std::vector<double> context,
    std::vector<std::vector<double>> negatives, double eps = 1e-5) {
  FiniteDifferenceGradients g;
  const auto probe = [&](std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double saved = v[i];
      v[i] = saved + eps;
      const double plus = naive_sgns_loss(center, context, negatives);
      v[i] = saved - eps;
      const double minus = naive_sgns_loss(center, context, negatives);
      v[i] = saved;
      out[i] = (plus - minus) / (2 * eps);
    }
    return out;
  };
  g.center = probe(center);
  g.context = probe(context);
  for (auto& n : negatives) g.negatives.push_back(probe(n));
  return g;
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / scale;
}

// ---------------------------------------------------------------------------
// NDCG by exhaustive enumeration: IDCG is the best DCG over every permutation.

inline double brute_force_dcg(const std::vector<double>& gains) {
  double s = 0;
  for (std::size_t i = 0; i < gains.size(); ++i) {
    s += (std::pow(2.0, gains[i]) - 1.0) / std::log2(static_cast<double>(i + 2));
  }
  return s;
}

inline double brute_force_ndcg(const std::vector<double>& ranked) {
  std::vector<double> perm = ranked;
  std::sort(perm.begin(), perm.end());
  double best = 0;
  do {
    best = std::max(best, brute_force_dcg(perm));
  } while (std::next_permutation(perm.begin(), perm.end()));
  if (best <= 0) return 1.0;
  return brute_force_dcg(ranked) / best;
}

// ---------------------------------------------------------------------------
// Forest prediction by walking the serialized JSON trees.

inline double json_tree_predict(const nlohmann::json& node,
                                std::span<const double> x) {
  const nlohmann::json* n = &node;
  while (!n->contains("p")) {
    const auto f = (*n)["f"].get<std::size_t>();
    n = x[f] <= (*n)["t"].get<double>() ? &(*n)["l"] : &(*n)["r"];
  }
  return (*n)["p"].get<double>();
}

inline std::vector<double> json_per_tree_predictions(const nlohmann::json& forest,
                                                     std::span<const double> x) {
  std::vector<double> out;
  for (const auto& tree : forest["trees"]) out.push_back(json_tree_predict(tree, x));
  return out;
}

// ---------------------------------------------------------------------------
// Chi-square goodness of fit.

inline double chi_square_p_value(const std::vector<std::uint64_t>& observed,
                                 const std::vector<double>& probabilities) {
  double n = 0;
  for (auto o : observed) n += static_cast<double>(o);
  double stat = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double expected = n * probabilities[i];
    const double diff = static_cast<double>(observed[i]) - expected;
    stat += diff * diff / expected;
  }
  boost::math::chi_squared dist(static_cast<double>(observed.size() - 1));
  return boost::math::cdf(boost::math::complement(dist, stat));
}

// ---------------------------------------------------------------------------
// Synthetic corpora

/// Sentences drawn from one of two disjoint three-word cliques.
inline Corpus two_clique_corpus(std::size_t per_clique = 500,
                                std::uint64_t seed = 7) {
  const std::vector<std::vector<std::string>> cliques = {{"a", "b", "c"},
                                                         {"x", "y", "z"}};
  std::mt19937_64 rng(seed);
  Corpus corpus;
  for (std::size_t i = 0; i < per_clique; ++i) {
    for (const auto& clique : cliques) {
      TokenizedSentence s;
      for (int j = 0; j < 6; ++j) s.push_back(clique[rng() % clique.size()]);
      corpus.push_back(std::move(s));
    }
  }
  return corpus;
}

/// Labeled contextual triples for several roles. Contexts mix role-specific
/// words into shared background text at a rate that follows the label grade:
/// 0.45 highly relevant, 0.18 relevant, 0.05 neutral, none for irrelevant.
/// Relevant triples sit close enough to the boundary that classifier
/// confidence, and so the ranking, separates them from highly relevant ones.
struct SyntheticRoleData {
  std::vector<ContextualTriple> triples;
};

inline SyntheticRoleData synthetic_roles(
    const std::vector<std::string>& roles, std::size_t per_role,
    std::uint64_t seed, std::size_t background_size = 150,
    std::size_t role_vocab_size = 25) {
  std::mt19937_64 rng(seed);
  const auto uniform = [&]() { return (rng() >> 11) * 0x1.0p-53; };
  std::vector<std::string> background;
  for (std::size_t i = 0; i < background_size; ++i) {
    background.push_back("filing" + std::to_string(i));
  }
  SyntheticRoleData data;
  for (const auto& role : roles) {
    std::vector<std::string> role_words;
    for (std::size_t i = 0; i < role_vocab_size; ++i) {
      role_words.push_back(role + "term" + std::to_string(i));
    }
    for (std::size_t t = 0; t < per_role; ++t) {
      const double u = uniform();
      RelevanceLabel label;
      double role_share;
      if (u < 0.30) {
        label = RelevanceLabel::kHighlyRelevant;
        role_share = 0.45;
      } else if (u < 0.55) {
        label = RelevanceLabel::kRelevant;
        role_share = 0.18;
      } else if (u < 0.65) {
        label = RelevanceLabel::kNeutral;
        role_share = 0.05;
      } else {
        label = RelevanceLabel::kIrrelevant;
        role_share = 0.0;
      }
      ContextualTriple triple;
      char id[64];
      std::snprintf(id, sizeof id, "%s-%04zu", role.c_str(), t);
      triple.id = id;
      triple.head = "HEAD CORP " + std::to_string(t % 17);
      triple.tail = "TAIL BANK " + std::to_string(t % 13);
      triple.role = Role::canonicalize(t % 2 == 0 ? role : role + "s");
      triple.label = label;
      for (int s = 0; s < 3; ++s) {
        std::string sentence;
        for (int w = 0; w < 12; ++w) {
          if (!sentence.empty()) sentence += ' ';
          if (uniform() < role_share) {
            sentence += role_words[rng() % role_words.size()];
          } else {
            sentence += background[rng() % background.size()];
          }
        }
        sentence += '.';
        triple.sentences.push_back(std::move(sentence));
      }
      data.triples.push_back(std::move(triple));
    }
  }
  return data;
}

}  // namespace rolerel::testing
