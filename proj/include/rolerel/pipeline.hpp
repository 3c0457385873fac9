#pragma once

// Per-role training, scoring and ranking of contextual triples.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rolerel/corpus.hpp"
#include "rolerel/embedding.hpp"
#include "rolerel/features.hpp"
#include "rolerel/forest.hpp"
#include "rolerel/random.hpp"

namespace rolerel {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Highly relevant and relevant map to 1, irrelevant to 0. Neutral has no
/// binary label and is left out of classifier training.
inline std::optional<bool> binarize_label(RelevanceLabel label) {
  switch (label) {
    case RelevanceLabel::kHighlyRelevant:
    case RelevanceLabel::kRelevant:
      return true;
    case RelevanceLabel::kIrrelevant:
      return false;
    case RelevanceLabel::kNeutral:
      return std::nullopt;
  }
  return std::nullopt;
}

struct SkippedRole {
  Role role;
  std::string reason;
};

struct ModelBundle {
  EmbeddingModel embedding;
  std::map<Role, RoleClassifier> classifiers;
  std::vector<SkippedRole> skipped_roles;

  const RoleClassifier* find(const Role& role) const {
    const auto it = classifiers.find(role);
    return it == classifiers.end() ? nullptr : &it->second;
  }
};

inline constexpr double kOovFallbackScore = 0.5;
inline constexpr double kUnknownRoleScore = 0.0;

/// Groups labeled triples by role and trains one forest per role. Neutral and
/// all-OOV samples are dropped; roles left with fewer than two samples of
/// either class are recorded in skipped_roles. Each role's forest seed is
/// derived from forest_config.seed and the role name.
inline ModelBundle train_role_models(std::span<const ContextualTriple> labeled,
                                     EmbeddingModel embedding,
                                     const ForestConfig& forest_config,
                                     int threads = 1) {
  if (!embedding.finalized) throw PipelineError("embedding is not finalized");

  std::map<Role, std::vector<const ContextualTriple*>> by_role;
  for (const auto& triple : labeled) by_role[triple.role].push_back(&triple);

  ModelBundle bundle;
  for (const auto& [role, triples] : by_role) {
    std::vector<LabeledSample> samples;
    std::size_t positives = 0, negatives = 0, binarizable = 0;
    for (const auto* triple : triples) {
      if (!triple->label) continue;
      const auto binary = binarize_label(*triple->label);
      if (!binary) continue;
      ++binarizable;
      auto cfv = context_vector(*triple, embedding);
      if (cfv.oov) continue;
      ++(*binary ? positives : negatives);
      samples.push_back({triple->id, std::move(cfv.values), *binary});
    }
    if (binarizable == 0) {
      bundle.skipped_roles.push_back({role, "no trainable labels"});
      continue;
    }
    if (positives == 0 || negatives == 0) {
      bundle.skipped_roles.push_back({role, "single-class"});
      continue;
    }
    if (positives < 2 || negatives < 2) {
      bundle.skipped_roles.push_back(
          {role, "fewer than 2 samples in a class (" + std::to_string(positives) +
                     " positive, " + std::to_string(negatives) + " negative)"});
      continue;
    }
    ForestConfig config = forest_config;
    config.seed = derive_seed(forest_config.seed, role.name());
    bundle.classifiers.emplace(
        role, train_forest(role, std::move(samples), config, threads));
  }
  if (bundle.classifiers.empty()) {
    throw PipelineError("no role has trainable data for both classes");
  }
  bundle.embedding = std::move(embedding);
  return bundle;
}

enum class ScoreSource { kClassifier, kOovFallback, kUnknownRole };

struct ScoredTriple {
  ContextualTriple triple;
  double score = 0.0;
  ScoreSource source = ScoreSource::kClassifier;

  bool oov_fallback() const noexcept { return source == ScoreSource::kOovFallback; }
};

inline std::string_view source_reason(ScoreSource source) {
  switch (source) {
    case ScoreSource::kClassifier: return "classifier";
    case ScoreSource::kOovFallback: return "all context tokens out of vocabulary";
    case ScoreSource::kUnknownRole: return "no classifier for role";
  }
  return "";
}

/// Scores each triple with its role's classifier. A role without a classifier
/// scores 0; otherwise an all-OOV context scores 0.5.
inline ScoredTriple score_triple(const ContextualTriple& triple,
                                 const ModelBundle& bundle) {
  const auto* classifier = bundle.find(triple.role);
  if (classifier == nullptr) {
    return {triple, kUnknownRoleScore, ScoreSource::kUnknownRole};
  }
  const auto cfv = context_vector(triple, bundle.embedding);
  if (cfv.oov) return {triple, kOovFallbackScore, ScoreSource::kOovFallback};
  return {triple, classifier->predict_proba(cfv.values), ScoreSource::kClassifier};
}

inline std::vector<ScoredTriple> score_triples(
    std::span<const ContextualTriple> triples, const ModelBundle& bundle) {
  std::vector<ScoredTriple> scored;
  scored.reserve(triples.size());
  for (const auto& triple : triples) scored.push_back(score_triple(triple, bundle));
  return scored;
}

/// Descending score, ties by ascending id.
inline std::vector<ScoredTriple> rank(std::vector<ScoredTriple> scored) {
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.triple.id < b.triple.id;
  });
  return scored;
}

inline nlohmann::json scored_record(const ScoredTriple& s) {
  nlohmann::json j = {{"id", s.triple.id},
                      {"role", s.triple.role.name()},
                      {"score", s.score},
                      {"oov_fallback", s.oov_fallback()}};
  if (s.source == ScoreSource::kUnknownRole) j["reason"] = source_reason(s.source);
  return j;
}

// ---------------------------------------------------------------------------
// Model directory: one "<role>.forest.json" per classifier plus manifest.json.

inline std::string forest_file_name(const Role& role) {
  return role.name() + ".forest.json";
}

inline void save_models(const std::filesystem::path& dir, const ModelBundle& bundle) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest = {{"classifiers", nlohmann::json::array()},
                             {"skipped_roles", nlohmann::json::array()}};
  for (const auto& [role, classifier] : bundle.classifiers) {
    const auto name = forest_file_name(role);
    std::ofstream out(dir / name);
    if (!out) throw PipelineError("cannot write " + (dir / name).string());
    out << to_json(classifier).dump() << '\n';
    if (!out) throw PipelineError("failed writing " + (dir / name).string());
    manifest["classifiers"].push_back({{"role", role.name()}, {"file", name}});
  }
  for (const auto& skipped : bundle.skipped_roles) {
    manifest["skipped_roles"].push_back(
        {{"role", skipped.role.name()}, {"reason", skipped.reason}});
  }
  std::ofstream out(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
  if (!out) throw PipelineError("failed writing " + (dir / "manifest.json").string());
}

inline ModelBundle load_models(const std::filesystem::path& dir,
                               EmbeddingModel embedding) {
  const auto manifest_path = dir / "manifest.json";
  std::ifstream in(manifest_path);
  if (!in) throw PipelineError("cannot read " + manifest_path.string());
  ModelBundle bundle;
  try {
    const auto manifest = nlohmann::json::parse(in);
    for (const auto& entry : manifest.at("classifiers")) {
      const auto path = dir / entry.at("file").get<std::string>();
      std::ifstream forest_in(path);
      if (!forest_in) throw PipelineError("cannot read " + path.string());
      RoleClassifier classifier;
      try {
        classifier = classifier_from_json(nlohmann::json::parse(forest_in));
      } catch (const std::exception& e) {
        throw PipelineError(path.string() + ": " + e.what());
      }
      if (classifier.role.name() != entry.at("role").get<std::string>()) {
        throw PipelineError(path.string() + ": role does not match manifest");
      }
      if (classifier.dim != embedding.dim()) {
        throw PipelineError(path.string() + ": classifier dimension " +
                            std::to_string(classifier.dim) +
                            " does not match embedding dimension " +
                            std::to_string(embedding.dim()));
      }
      const Role role = classifier.role;
      bundle.classifiers.emplace(role, std::move(classifier));
    }
    for (const auto& entry : manifest.at("skipped_roles")) {
      const Role role = Role::canonicalize(entry.at("role").get<std::string>());
      if (bundle.classifiers.contains(role)) {
        throw PipelineError("role \"" + role.name() +
                            "\" is both trained and skipped in manifest");
      }
      bundle.skipped_roles.push_back({role, entry.at("reason").get<std::string>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw PipelineError(manifest_path.string() + ": " + e.what());
  }
  bundle.embedding = std::move(embedding);
  return bundle;
}

}  // namespace rolerel
