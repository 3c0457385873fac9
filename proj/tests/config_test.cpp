#include "rolerel/config.hpp"

#include <sstream>

#include <gtest/gtest.h>

namespace rolerel {
namespace {

TEST(RunConfigTest, Defaults) {
  const RunConfig c;
  EXPECT_EQ(c.embedding.dim, 30);
  EXPECT_EQ(c.embedding.window, 5);
  EXPECT_EQ(c.embedding.negatives, 5);
  EXPECT_EQ(c.embedding.epochs, 20);
  EXPECT_EQ(c.forest.n_trees, 100);
  EXPECT_FALSE(c.forest.max_depth);
  EXPECT_EQ(c.forest.resolved_features_per_split(30), 6);
  EXPECT_EQ(c.threshold, 0.5);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfigTest, LoadsKeyValueFile) {
  RunConfig c;
  std::istringstream in(
      "# experiment\n"
      "dim = 12\n"
      "epochs=3   # short\n"
      "\n"
      "max_depth = 8\n"
      "features_per_split = none\n"
      "gain.highly_relevant = 4\n"
      "seed = 77\n");
  load_config(c, in);
  EXPECT_EQ(c.embedding.dim, 12);
  EXPECT_EQ(c.embedding.epochs, 3);
  EXPECT_EQ(c.forest.max_depth, 8);
  EXPECT_FALSE(c.forest.features_per_split);
  EXPECT_EQ(c.gains.highly_relevant, 4.0);
  EXPECT_EQ(c.seed, 77u);
}

TEST(RunConfigTest, ErrorsNameLine) {
  RunConfig c;
  std::istringstream bad_key("dim = 4\nbogus = 1\n");
  try {
    load_config(c, bad_key);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream bad_value("epochs = many\n");
  EXPECT_THROW(load_config(c, bad_value), ConfigError);
  EXPECT_THROW(apply_assignment(c, "no equals sign"), ConfigError);
}

TEST(RunConfigTest, RoundTripsThroughText) {
  RunConfig c;
  apply_assignment(c, "lr_initial=0.05");
  apply_assignment(c, "max_depth=3");
  apply_assignment(c, "threshold=0.4");
  std::stringstream buf;
  write_config(buf, c);
  RunConfig d;
  load_config(d, buf);
  std::stringstream again;
  write_config(again, d);
  EXPECT_EQ(buf.str(), again.str());
  EXPECT_EQ(d.embedding.lr_initial, 0.05);
  EXPECT_EQ(d.forest.max_depth, 3);
}

TEST(RunConfigTest, SeedDerivation) {
  RunConfig a, b;
  b.seed = 2;
  EXPECT_NE(a.embedding_seed(), a.forest_seed());
  EXPECT_NE(a.embedding_seed(), b.embedding_seed());
  EXPECT_EQ(a.embedding_seed(), derive_seed(1, "embedding"));
  EXPECT_EQ(a.resolved_embedding().seed, a.embedding_seed());
}

TEST(RunConfigTest, Validation) {
  RunConfig c;
  c.threshold = 1.5;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.forest.features_per_split = 31;
  EXPECT_THROW(c.validate(), ConfigError);
  c = {};
  c.gains.relevant = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

}  // namespace
}  // namespace rolerel
