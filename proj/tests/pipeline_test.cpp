#include "rolerel/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "support.hpp"

namespace rolerel {
namespace {

TEST(BinarizeTest, Labels) {
  EXPECT_EQ(binarize_label(RelevanceLabel::kHighlyRelevant), true);
  EXPECT_EQ(binarize_label(RelevanceLabel::kRelevant), true);
  EXPECT_EQ(binarize_label(RelevanceLabel::kIrrelevant), false);
  EXPECT_EQ(binarize_label(RelevanceLabel::kNeutral), std::nullopt);
}

/// Two hand-made word directions: "good" words along e1, "bad" along e2.
EmbeddingModel toy_embedding() {
  EmbeddingModel m;
  m.vocab = Vocabulary({"good", "fine", "bad", "poor"}, {4, 3, 2, 1});
  m.input = Matrix(4, 3);
  m.input.row(0)[0] = 1;
  m.input.row(1)[0] = 0.8;
  m.input.row(1)[2] = 0.6;
  m.input.row(2)[1] = 1;
  m.input.row(3)[1] = 0.8;
  m.input.row(3)[2] = 0.6;
  m.finalized = true;
  return m;
}

ContextualTriple triple(std::string id, std::string role, std::string text,
                        std::optional<RelevanceLabel> label) {
  return {std::move(id), "H", Role::canonicalize(role), "T", {std::move(text)}, label};
}

std::vector<ContextualTriple> toy_labeled() {
  using L = RelevanceLabel;
  std::vector<ContextualTriple> out;
  for (int i = 0; i < 6; ++i) {
    const auto n = std::to_string(i);
    out.push_back(triple("a" + n, "affiliates", i % 2 ? "good good fine" : "good fine",
                         i % 3 ? L::kRelevant : L::kHighlyRelevant));
    out.push_back(triple("b" + n, "affiliate", i % 2 ? "bad poor" : "poor poor bad",
                         L::kIrrelevant));
    out.push_back(triple("c" + n, "trustee", i % 2 ? "fine fine good" : "good",
                         L::kRelevant));
    out.push_back(triple("d" + n, "trustee", "bad", L::kIrrelevant));
    out.push_back(triple("e" + n, "issuer", "good", L::kRelevant));  // single class
    out.push_back(triple("f" + n, "agent", "good", L::kNeutral));    // neutral only
  }
  out.push_back(triple("g0", "trustee", "zzz unknown", L::kRelevant));  // all OOV
  out.push_back(triple("g1", "trustee", "good", L::kNeutral));
  return out;
}

ForestConfig toy_forest() {
  ForestConfig c;
  c.n_trees = 15;
  c.seed = 3;
  return c;
}

TEST(TrainRoleModelsTest, TrainsAndSkips) {
  const auto labeled = toy_labeled();
  const auto bundle = train_role_models(labeled, toy_embedding(), toy_forest());
  ASSERT_EQ(bundle.classifiers.size(), 2u);
  for (const auto& [role, c] : bundle.classifiers) EXPECT_EQ(role, c.role);
  const auto& trustee = bundle.classifiers.at(Role::canonicalize("trustee"));
  // g0 (all OOV) and g1 (neutral) are excluded.
  EXPECT_EQ(trustee.training_size, (TrainingSize{6, 6}));
  EXPECT_EQ(bundle.classifiers.at(Role::canonicalize("affiliate")).training_size,
            (TrainingSize{6, 6}));

  ASSERT_EQ(bundle.skipped_roles.size(), 2u);
  EXPECT_EQ(bundle.skipped_roles[0].role.name(), "agent");
  EXPECT_EQ(bundle.skipped_roles[0].reason, "no trainable labels");
  EXPECT_EQ(bundle.skipped_roles[1].role.name(), "issuer");
  EXPECT_EQ(bundle.skipped_roles[1].reason, "single-class");
}

TEST(TrainRoleModelsTest, TooFewPerClassSkipped) {
  std::vector<ContextualTriple> labeled{
      triple("a", "issuer", "good", RelevanceLabel::kRelevant),
      triple("b", "issuer", "bad", RelevanceLabel::kIrrelevant),
      triple("c", "issuer", "poor", RelevanceLabel::kIrrelevant)};
  EXPECT_THROW(train_role_models(labeled, toy_embedding(), toy_forest()), PipelineError);
}

TEST(TrainRoleModelsTest, RequiresFinalizedEmbedding) {
  auto e = toy_embedding();
  e.finalized = false;
  EXPECT_THROW(train_role_models(toy_labeled(), e, toy_forest()), PipelineError);
}

TEST(ScoreTriplesTest, Dispatch) {
  const auto bundle = train_role_models(toy_labeled(), toy_embedding(), toy_forest());
  const std::vector<ContextualTriple> queries{
      triple("q1", "trustees", "good fine", std::nullopt),
      triple("q2", "trustee", "bad", std::nullopt),
      triple("q3", "guarantor", "good", std::nullopt),
      triple("q4", "trustee", "qqq", std::nullopt),
      triple("q5", "issuer", "good", std::nullopt)};
  const auto scored = score_triples(queries, bundle);
  ASSERT_EQ(scored.size(), 5u);
  EXPECT_DOUBLE_EQ(scored[0].score,
                   bundle.find(Role::canonicalize("trustee"))
                       ->predict_proba(context_vector(queries[0], bundle.embedding).values));
  EXPECT_GT(scored[0].score, 0.5);
  EXPECT_LT(scored[1].score, 0.5);
  EXPECT_EQ(scored[2].score, 0.0);
  EXPECT_EQ(scored[2].source, ScoreSource::kUnknownRole);
  EXPECT_FALSE(scored[2].oov_fallback());
  EXPECT_EQ(scored[3].score, 0.5);
  EXPECT_TRUE(scored[3].oov_fallback());
  EXPECT_EQ(scored[4].score, 0.0);  // skipped role has no classifier
  for (const auto& s : scored) {
    EXPECT_GE(s.score, 0.0);
    EXPECT_LE(s.score, 1.0);
  }
  EXPECT_EQ(scored_record(scored[3]).dump(),
            R"({"id":"q4","oov_fallback":true,"role":"trustee","score":0.5})");
}

ScoredTriple scored(std::string id, double score) {
  return {triple(std::move(id), "issuer", "x", std::nullopt), score,
          ScoreSource::kClassifier};
}

TEST(RankTest, Examples) {
  const auto ids = [](const std::vector<ScoredTriple>& v) {
    std::vector<std::string> out;
    for (const auto& s : v) out.push_back(s.triple.id);
    return out;
  };
  EXPECT_EQ(ids(rank({scored("t1", 0.9), scored("t2", 0.1), scored("t3", 0.5)})),
            (std::vector<std::string>{"t1", "t3", "t2"}));
  EXPECT_EQ(ids(rank({scored("tb", 0.5), scored("ta", 0.5)})),
            (std::vector<std::string>{"ta", "tb"}));
  EXPECT_TRUE(rank({}).empty());
}

TEST(RankTest, PropertyPermutationNonIncreasing) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<ScoredTriple> in;
    const auto n = rng() % 12;
    for (std::size_t i = 0; i < n; ++i) {
      in.push_back(scored("id" + std::to_string(i), (rng() % 5) / 4.0));
    }
    const auto out = rank(in);
    ASSERT_EQ(out.size(), in.size());
    std::multiset<std::string> a, b;
    for (const auto& s : in) a.insert(s.triple.id);
    for (const auto& s : out) b.insert(s.triple.id);
    EXPECT_EQ(a, b);
    for (std::size_t i = 1; i < out.size(); ++i) {
      EXPECT_GE(out[i - 1].score, out[i].score);
      if (out[i - 1].score == out[i].score) {
        EXPECT_LT(out[i - 1].triple.id, out[i].triple.id);
      }
    }
  }
}

TEST(ModelDirectoryTest, SaveLoadRoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "rolerel_pipeline_test";
  std::filesystem::remove_all(dir);
  const auto bundle = train_role_models(toy_labeled(), toy_embedding(), toy_forest());
  save_models(dir, bundle);
  EXPECT_TRUE(std::filesystem::exists(dir / "affiliate.forest.json"));
  EXPECT_TRUE(std::filesystem::exists(dir / "trustee.forest.json"));
  const auto loaded = load_models(dir, toy_embedding());
  ASSERT_EQ(loaded.classifiers.size(), 2u);
  ASSERT_EQ(loaded.skipped_roles.size(), 2u);
  for (const auto& [role, c] : bundle.classifiers) {
    EXPECT_EQ(to_json(loaded.classifiers.at(role)).dump(), to_json(c).dump());
  }

  std::ofstream(dir / "trustee.forest.json") << "{broken";
  try {
    load_models(dir, toy_embedding());
    FAIL();
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("trustee.forest.json"), std::string::npos);
  }
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace rolerel
