#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "csnorm/experiments.hpp"
#include "test_util.hpp"

using namespace csnorm;

namespace {

ExperimentConfig quick(const std::string& out = "") {
  ExperimentConfig c;
  c.seeds = 2;
  c.image_size = 8;
  c.train_count = 6;
  c.test_count = 4;
  for (TrainConfig* t : {&c.motivation_train, &c.train}) {
    t->epochs = 1;
    t->steps_per_epoch = 2;
    t->batch_size = 2;
  }
  c.out_dir = out;
  return c;
}

std::string csv(const ExperimentReport& r) {
  std::ostringstream os;
  r.write_csv(os);
  return os.str();
}

std::string manifest(const ExperimentReport& r) {
  std::ostringstream os;
  r.write_manifest(os);
  return os.str();
}

}  // namespace

TEST(Median, OddEvenEmpty) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_TRUE(std::isnan(median({})));
}

TEST(FeatureMapImage, StretchesToUnitRange) {
  Tensor4 f({1, 2, 2, 2}, std::vector<double>{1, 2, 3, 5, 7, 7, 7, 7});
  const Tensor4 a = feature_map_image(f, 0, 0);
  EXPECT_EQ(a.shape(), (Shape{1, 1, 2, 2}));
  EXPECT_EQ(a[0], 0.0);
  EXPECT_EQ(a[3], 1.0);
  EXPECT_DOUBLE_EQ(a[1], 0.25);
  const Tensor4 flat = feature_map_image(f, 0, 1);
  for (double v : flat.data()) EXPECT_EQ(v, 0.0);
  EXPECT_THROW(feature_map_image(f, 1, 0), std::out_of_range);
}

TEST(Experiments, MotivationReportShape) {
  const ExperimentReport r = exp_motivation(quick());
  EXPECT_EQ(r.name, "motivation");
  // two arms x two seeds, then two median rows
  ASSERT_EQ(r.results.size(), 6u);
  EXPECT_EQ(r.median("plain").table.rows.size(), 4u + 2u);
  EXPECT_EQ(r.assertions.size(), 3u);
  const std::string c = csv(r);
  EXPECT_EQ(c.substr(0, c.find('\n')), "arm,seed,condition,psnr_db,ssim");
  const std::string m = manifest(r);
  for (const char* key : {"name=motivation", "assert.in_lower_fraction=", "config.motivation.epochs=1", "passed="}) {
    EXPECT_NE(m.find(key), std::string::npos) << key;
  }
}

TEST(Experiments, GeneralizationAndAblationArms) {
  ExperimentConfig c = quick();
  c.seeds = 1;
  const ExperimentReport g = exp_generalization(c);
  for (const char* arm : {"baseline", "csnorm-alt", "csnorm-mixed", "plain-in"}) {
    const auto& t = g.median(arm).table;
    EXPECT_EQ(t.rows.size(), 5u) << arm;
    EXPECT_NO_THROW(t.at("cross:B"));
  }
  EXPECT_EQ(g.assertions.size(), 5u);
  // the reported delta is the per-seed difference when there is one seed
  for (const auto& [name, value] : g.deltas) {
    if (name == "interp") {
      EXPECT_NEAR(value,
                  g.median("csnorm-alt").table.at("interp").psnr_db - g.median("baseline").table.at("interp").psnr_db,
                  1e-12);
    }
  }
  const ExperimentReport a = exp_ablation(c);
  EXPECT_EQ(a.assertions.size(), 3u);
  EXPECT_EQ(a.results.size(), 8u);
}

TEST(Experiments, ReportsAreDeterministic) {
  testutil::TempDir d1("rep1"), d2("rep2");
  exp_motivation(quick(d1.path().string()));
  exp_motivation(quick(d2.path().string()));
  for (const char* f : {"report_motivation.csv", "report_motivation.manifest"}) {
    const std::string a = testutil::slurp(d1.file(f)), b = testutil::slurp(d2.file(f));
    EXPECT_FALSE(a.empty()) << f;
    EXPECT_EQ(a, b) << f;
  }
}

TEST(Experiments, BaseSeedChangesData) {
  ExperimentConfig a = quick(), b = quick();
  a.seeds = b.seeds = 1;
  b.seed = 99;
  EXPECT_NE(exp_motivation(a).info.get("seed.0.data_digest"), exp_motivation(b).info.get("seed.0.data_digest"));
}

TEST(Experiments, GateDumpWritesCsv) {
  testutil::TempDir d("gates");
  ExperimentConfig c = quick(d.path().string());
  c.seeds = 1;
  exp_generalization(c);
  EXPECT_TRUE(std::filesystem::exists(d.path() / "gates" / "generalization_csnorm-alt.csv"));
  EXPECT_TRUE(std::filesystem::exists(d.path() / "report_generalization.manifest"));
}

TEST(Experiments, BadInput) {
  EXPECT_THROW(run_suite("everything", quick()), std::invalid_argument);
  ExperimentConfig c = quick();
  c.seeds = 0;
  EXPECT_THROW(exp_motivation(c), std::invalid_argument);
}
