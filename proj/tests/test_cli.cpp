#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "csnorm/data.hpp"
#include "csnorm/digest.hpp"
#include "csnorm/image_io.hpp"
#include "test_util.hpp"

using namespace csnorm;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    data_ = dir_.file("a");
    ASSERT_EQ(run({"gen", "--seed", "3", "--count", "4", "--size", "8", "--out", data_}).code, cli::kOk);
    ASSERT_EQ(run({"gen", "--seed", "4", "--count", "2", "--size", "8", "--domain", "B", "--out", dir_.file("b")}).code,
              cli::kOk);
  }

  std::vector<std::string> train_args(const std::string& ckpt) const {
    return {"train", "--data", data_, "--ckpt", ckpt, "--epochs", "2", "--steps-per-epoch", "2", "--batch-size", "2",
            "--optimizer", "adam", "--lr-out", "1e-3", "--lr-in", "1e-3", "--delta", "0.01"};
  }

  testutil::TempDir dir_{"cli"};
  std::string data_;
};

}  // namespace

TEST_F(CliTest, HelpAndUsageErrors) {
  EXPECT_EQ(run({"--help"}).code, cli::kOk);
  EXPECT_EQ(run({"train", "--help"}).code, cli::kOk);
  EXPECT_EQ(run({}).code, cli::kUsageError);
  EXPECT_EQ(run({"frobnicate"}).code, cli::kUsageError);
  EXPECT_EQ(run({"gen", "--out", dir_.file("x"), "--size", "65"}).code, cli::kUsageError);
  EXPECT_EQ(run({"gen", "--out", dir_.file("x"), "--domain", "Z"}).code, cli::kUsageError);
  EXPECT_EQ(run({"train", "--data", data_}).code, cli::kUsageError);  // --ckpt missing
  auto bad_mode = train_args(dir_.file("m.ckpt"));
  bad_mode.insert(bad_mode.end(), {"--mode", "sideways"});
  EXPECT_EQ(run(bad_mode).code, cli::kUsageError);
}

TEST_F(CliTest, TrainStreamsLogAndIsDeterministic) {
  const Result a = run(train_args(dir_.file("a.ckpt")));
  ASSERT_EQ(a.code, cli::kOk) << a.err;
  const Result b = run(train_args(dir_.file("b.ckpt")));
  ASSERT_EQ(b.code, cli::kOk) << b.err;
  EXPECT_EQ(a.out.substr(0, a.out.find('\n')), "epoch,step_kind,loss_pixel,loss_amp,holdout_psnr");
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 5);  // header + 2 epochs x 2 kinds
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(sha256_file(dir_.file("a.ckpt")), sha256_file(dir_.file("b.ckpt")));
}

TEST_F(CliTest, ConfigFileIsOverriddenByFlags) {
  {
    std::ofstream cfg(dir_.file("t.kv"));
    cfg << "epochs=3\nsteps_per_epoch=1\nbatch_size=2\nmode=baseline\n";
  }
  const Result from_file = run({"train", "--data", data_, "--ckpt", dir_.file("c.ckpt"), "--config", dir_.file("t.kv")});
  ASSERT_EQ(from_file.code, cli::kOk) << from_file.err;
  EXPECT_EQ(std::count(from_file.out.begin(), from_file.out.end(), '\n'), 4);  // header + 3 joint rows
  const Result overridden = run({"train", "--data", data_, "--ckpt", dir_.file("d.ckpt"), "--config",
                                 dir_.file("t.kv"), "--epochs", "1"});
  ASSERT_EQ(overridden.code, cli::kOk) << overridden.err;
  EXPECT_EQ(std::count(overridden.out.begin(), overridden.out.end(), '\n'), 2);
  EXPECT_EQ(run({"train", "--config", dir_.file("missing.kv")}).code, cli::kIoError);
}

TEST_F(CliTest, ScheduleChangesTraining) {
  const Result constant = run(train_args(dir_.file("c.ckpt")));
  auto args = train_args(dir_.file("s.ckpt"));
  args.insert(args.end(), {"--schedule", "cosine"});
  const Result cosine = run(args);
  ASSERT_EQ(cosine.code, cli::kOk) << cosine.err;
  // the first step runs at the full rate either way, so only later rows differ
  EXPECT_NE(constant.out, cosine.out);
  args.back() = "linear";
  EXPECT_EQ(run(args).code, cli::kUsageError);
}

TEST_F(CliTest, EvalConditions) {
  ASSERT_EQ(run(train_args(dir_.file("m.ckpt"))).code, cli::kOk);
  const Result r = run({"eval", "--ckpt", dir_.file("m.ckpt"), "--data", data_, "--conditions",
                        "original,interp,scale,cross:" + dir_.file("b")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "condition,psnr_db,ssim");
  EXPECT_NE(r.out.find("\naverage,"), std::string::npos);
  EXPECT_EQ(run({"eval", "--ckpt", dir_.file("m.ckpt"), "--data", data_, "--conditions", "original,bogus"}).code,
            cli::kUsageError);
  EXPECT_EQ(run({"eval", "--ckpt", dir_.file("nope.ckpt"), "--data", data_}).code, cli::kIoError);
  // a different epsilon is a different architecture
  EXPECT_EQ(run({"eval", "--ckpt", dir_.file("m.ckpt"), "--data", data_, "--epsilon", "0.01"}).code, cli::kIoError);
}

TEST_F(CliTest, TruncatedCheckpointIsIoError) {
  ASSERT_EQ(run(train_args(dir_.file("m.ckpt"))).code, cli::kOk);
  const std::string bytes = testutil::slurp(dir_.file("m.ckpt"));
  {
    std::ofstream os(dir_.file("cut.ckpt"), std::ios::binary);
    os << bytes.substr(0, bytes.size() / 2);
  }
  const Result r = run({"eval", "--ckpt", dir_.file("cut.ckpt"), "--data", data_});
  EXPECT_EQ(r.code, cli::kIoError);
  EXPECT_NE(r.err.find("truncated"), std::string::npos) << r.err;
}

TEST_F(CliTest, PerturbVerifyAndLambdaRange) {
  const std::string low = data_ + "/degraded_0000.ppm", norm = data_ + "/target_0000.ppm";
  const Result r = run({"perturb", "--low", low, "--norm", norm, "--lambda", "0.4", "--out", dir_.file("p.ppm"),
                        "--verify"});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  const auto pos = r.out.find("max_phase_deviation,");
  ASSERT_NE(pos, std::string::npos);
  EXPECT_LT(std::stod(r.out.substr(pos + 20)), 1e-9);
  EXPECT_EQ(load_ppm(dir_.file("p.ppm")).shape(), load_ppm(low).shape());
  EXPECT_EQ(run({"perturb", "--low", low, "--norm", norm, "--lambda", "1.5", "--out", dir_.file("q.ppm")}).code,
            cli::kUsageError);
  EXPECT_EQ(run({"perturb", "--low", dir_.file("none.ppm"), "--norm", norm, "--out", dir_.file("q.ppm")}).code,
            cli::kIoError);
}

TEST_F(CliTest, GradcheckExitCodes) {
  const Result ok = run({"gradcheck", "--module", "losses"});
  EXPECT_EQ(ok.code, cli::kOk) << ok.err;
  EXPECT_EQ(ok.out.substr(0, ok.out.find('\n')), "module,tensor,checked,max_rel_error,worst_index,analytic,numeric,pass");
  EXPECT_EQ(run({"gradcheck", "--module", "losses", "--inject-sign-flip"}).code, cli::kNumericError);
  EXPECT_EQ(run({"gradcheck", "--module", "nothing"}).code, cli::kUsageError);
}

TEST_F(CliTest, GatesWritesCsvAndMaps) {
  ASSERT_EQ(run(train_args(dir_.file("m.ckpt"))).code, cli::kOk);
  const Result r = run({"gates", "--ckpt", dir_.file("m.ckpt"), "--image", data_ + "/degraded_0001.ppm", "--out",
                        dir_.file("g")});
  ASSERT_EQ(r.code, cli::kOk) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir_.file("g") + "/gates.csv"));
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 33);  // header + 32 channels

  auto base = train_args(dir_.file("plain.ckpt"));
  base.insert(base.end(), {"--mode", "baseline"});
  ASSERT_EQ(run(base).code, cli::kOk);
  EXPECT_EQ(run({"gates", "--ckpt", dir_.file("plain.ckpt"), "--image", data_ + "/degraded_0001.ppm", "--out",
                 dir_.file("g2")})
                .code,
            cli::kUsageError);
}

TEST_F(CliTest, ExperimentsWritesOneReportPair) {
  const std::string out = dir_.file("reports");
  const Result r = run({"experiments", "--suite", "motivation", "--seeds", "1", "--size", "8", "--train-count", "4",
                        "--test-count", "2", "--epochs", "1", "--steps-per-epoch", "1", "--out", out});
  // a one-step model fails the assertions, which is exit 3
  EXPECT_EQ(r.code, cli::kNumericError) << r.err;
  EXPECT_TRUE(std::filesystem::exists(out + "/report_motivation.csv"));
  EXPECT_TRUE(std::filesystem::exists(out + "/report_motivation.manifest"));
  EXPECT_FALSE(std::filesystem::exists(out + "/report_generalization.csv"));
  EXPECT_EQ(run({"experiments", "--suite", "bogus"}).code, cli::kUsageError);
}
