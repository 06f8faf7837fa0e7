#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mdfl/cli.hpp"
#include "mdfl/config.hpp"
#include "mdfl/npy.hpp"
#include "mdfl/scene.hpp"

using namespace mdfl;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mdfl_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

fs::path small_scene(const fs::path& dir, const std::string& extra = {}) {
  const auto scene = dir / "scene";
  std::vector<std::string> args{"synth", "--out", scene.string(), "--h", "24", "--w", "24", "--seed", "5"};
  if (!extra.empty()) {
    args.push_back("--c1");
    args.push_back(extra);
  }
  EXPECT_EQ(run(args).code, 0);
  return scene;
}

fs::path tiny_config(const fs::path& dir, const fs::path& scene, const std::string& name, std::size_t epochs = 2) {
  RunConfig c;
  c.scene = scene.string();
  c.output = (dir / name).string();
  c.seed = 4;
  c.width = 8;
  c.heads = 2;
  c.hidden = 16;
  c.diffusion_epochs = epochs;
  c.classifier_epochs = epochs;
  c.checkpoint_every = 1;
  c.ablation.fuse_steps = {0, 50};
  const auto path = dir / (name + ".json");
  write(path, config_to_json(c));
  return path;
}

}  // namespace

TEST(CliSynth, DefaultsProduceALoadableScene) {
  const auto dir = scratch("synth1");
  const auto r = run({"synth", "--out", (dir / "s").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const Scene s = load_scene(dir / "s");
  EXPECT_EQ(s.height(), 64u);
  EXPECT_EQ(s.hsi.dim(2), 8u);
  EXPECT_NE(r.out.find("class 1"), std::string::npos);
}

TEST(CliSynth, SameSeedSameBytes) {
  const auto dir = scratch("synth2");
  ASSERT_EQ(run({"synth", "--out", (dir / "a").string(), "--seed", "9", "--h", "20", "--w", "30"}).code, 0);
  ASSERT_EQ(run({"synth", "--out", (dir / "b").string(), "--seed", "9", "--h", "20", "--w", "30"}).code, 0);
  for (const char* f : {"hsi.mdt", "lidar.mdt", "labels.mdt"}) EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
}

TEST(CliSynth, LabelsCoverExactlyTheRequestedClasses) {
  const auto dir = scratch("synth3");
  ASSERT_EQ(run({"synth", "--out", (dir / "s").string(), "--k", "3", "--h", "64", "--w", "64"}).code, 0);
  const Scene s = load_scene(dir / "s");
  const std::set<std::uint16_t> seen(s.labels.data.begin(), s.labels.data.end());
  EXPECT_EQ(seen, (std::set<std::uint16_t>{1, 2, 3}));
}

TEST(CliSynth, RefusesNonEmptyDirectoryWithoutForce) {
  const auto dir = scratch("synth4");
  ASSERT_EQ(run({"synth", "--out", dir.string(), "--h", "16", "--w", "16"}).code, 0);
  const auto again = run({"synth", "--out", dir.string(), "--h", "16", "--w", "16"});
  EXPECT_EQ(again.code, 2);
  EXPECT_NE(again.err.find("--force"), std::string::npos);
  EXPECT_EQ(run({"synth", "--out", dir.string(), "--h", "16", "--w", "16", "--force"}).code, 0);
}

TEST(CliConvert, NpyArraysBecomeAScene) {
  const auto dir = scratch("convert");
  const Scene src = synth_scene({.height = 12, .width = 10, .hsi_channels = 3}, 2);
  write_npy_f32(dir / "hsi.npy", src.hsi.shape(), src.hsi.vec());
  write_npy_f32(dir / "lidar.npy", {12, 10}, src.lidar.vec());
  write_npy_u16(dir / "labels.npy", {12, 10}, src.labels.data);
  const auto r = run({"convert", "--hsi", (dir / "hsi.npy").string(), "--lidar", (dir / "lidar.npy").string(), "--labels",
                      (dir / "labels.npy").string(), "--out", (dir / "scene").string(), "--name", "toy"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Scene s = load_scene(dir / "scene");
  EXPECT_EQ(s.hsi, src.hsi);
  EXPECT_EQ(s.lidar, src.lidar);
  EXPECT_EQ(s.labels, src.labels);
  EXPECT_EQ(s.num_classes, src.num_classes);
  EXPECT_EQ(s.name, "toy");

  write(dir / "junk.npy", "not numpy");
  const auto bad = run({"convert", "--hsi", (dir / "junk.npy").string(), "--lidar", (dir / "lidar.npy").string(),
                        "--labels", (dir / "labels.npy").string(), "--out", (dir / "scene2").string()});
  EXPECT_EQ(bad.code, 2);
  EXPECT_NE(bad.err.find("junk.npy"), std::string::npos);
}

TEST(CliTrain, UnknownConfigKeyIsRejectedByName) {
  const auto dir = scratch("train1");
  write(dir / "c.json", R"({"scene": "x", "output": "y", "bogus_key": 1})");
  const auto r = run({"train", "--config", (dir / "c.json").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("bogus_key"), std::string::npos);
}

TEST(CliTrain, ClassifierStageNeedsDiffusionCheckpoints) {
  const auto dir = scratch("train2");
  const auto cfg = tiny_config(dir, small_scene(dir), "run");
  const auto r = run({"train", "--config", cfg.string(), "--stage", "classifier"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find((dir / "run" / "diffusion_hsi.ckpt").string()), std::string::npos);
}

TEST(CliTrain, FullRunEvalAndRender) {
  const auto dir = scratch("train3");
  const auto scene = small_scene(dir);
  const auto cfg = tiny_config(dir, scene, "run");
  const auto r = run({"train", "--config", cfg.string(), "--stage", "all"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto run_dir = dir / "run";
  const auto metrics = slurp(run_dir / "metrics.json");
  for (const char* key : {"\"oa\"", "\"aa\"", "\"kappa\""}) EXPECT_NE(metrics.find(key), std::string::npos);
  for (const char* f : {"diffusion_hsi_log.csv", "diffusion_lidar_log.csv", "classifier_log.csv", "config.json"}) {
    EXPECT_TRUE(fs::exists(run_dir / f)) << f;
  }
  EXPECT_EQ(slurp(run_dir / "classifier_log.csv").substr(0, 24), "epoch,lr,loss,train_oa\n0");

  const auto e = run({"eval", "--scene", scene.string(), "--ckpt", (run_dir / "classifier.ckpt").string(), "--render",
                      (dir / "a.png").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(e.out, metrics);
  ASSERT_EQ(run({"eval", "--scene", scene.string(), "--ckpt", (run_dir / "classifier.ckpt").string(), "--render",
                 (dir / "b.png").string(), "--metrics", (dir / "m.json").string()})
                .code,
            0);
  EXPECT_EQ(slurp(dir / "a.png"), slurp(dir / "b.png"));
  EXPECT_EQ(slurp(dir / "m.json"), metrics);
  EXPECT_GT(slurp(dir / "a.png").size(), 8u);

  fs::create_directories(dir / "other");
  const auto other = small_scene(dir / "other", "5");
  const auto mismatch = run({"eval", "--scene", other.string(), "--ckpt", (run_dir / "classifier.ckpt").string()});
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_NE(mismatch.err.find("hsi_channels=8"), std::string::npos);
  EXPECT_NE(mismatch.err.find("hsi_channels=5"), std::string::npos);
}

TEST(CliTrain, InterruptedRunResumesToTheSameResult) {
  const auto dir = scratch("train4");
  const auto scene = small_scene(dir);
  const auto straight = tiny_config(dir, scene, "straight", 3);
  ASSERT_EQ(run({"train", "--config", straight.string()}).code, 0);

  const auto cfg = tiny_config(dir, scene, "resumed", 3);
  auto first = run({"train", "--config", cfg.string(), "--stop-after", "2"});
  ASSERT_EQ(first.code, 0) << first.err;
  EXPECT_NE(first.out.find("--resume"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "resumed" / "metrics.json"));
  for (int i = 0; i < 4 && !fs::exists(dir / "resumed" / "metrics.json"); ++i) {
    ASSERT_EQ(run({"train", "--config", cfg.string(), "--resume", "--stop-after", "2"}).code, 0);
  }
  for (const char* f : {"metrics.json", "diffusion_hsi_log.csv", "diffusion_lidar_log.csv", "classifier_log.csv"}) {
    EXPECT_EQ(slurp(dir / "straight" / f), slurp(dir / "resumed" / f)) << f;
  }
}

TEST(CliTrain, RepeatedRunsWriteIdenticalFiles) {
  const auto dir = scratch("train5");
  const auto scene = small_scene(dir);
  const auto a = tiny_config(dir, scene, "a"), b = tiny_config(dir, scene, "b");
  ASSERT_EQ(run({"train", "--config", a.string()}).code, 0);
  ASSERT_EQ(run({"train", "--config", b.string()}).code, 0);
  for (const char* f : {"metrics.json", "diffusion_hsi_log.csv", "classifier_log.csv"}) {
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
}

TEST(CliTrain, TrainingFailureExitsWithThree) {
  const auto dir = scratch("train6");
  const auto scene = small_scene(dir);
  RunConfig c = load_config(tiny_config(dir, scene, "x"));
  c.lr = 50.0;
  c.weight_decay = 0.0;
  c.diffusion_epochs = 60;
  write(dir / "bad.json", config_to_json(c));
  const auto r = run({"train", "--config", (dir / "bad.json").string(), "--stage", "diffusion"});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("diffusion"), std::string::npos);
}

TEST(CliAblate, SingleStepSweepReportsEveryVariant) {
  const auto dir = scratch("ablate");
  const auto cfg = tiny_config(dir, small_scene(dir), "base", 1);
  const auto r = run({"ablate", "--config", cfg.string(), "--sweep", "single_steps", "--seeds", "1,2"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto csv = slurp(dir / "base" / "ablation" / "ablation_single_steps.csv");
  std::istringstream lines(csv);
  std::string line;
  std::getline(lines, line);
  EXPECT_EQ(line, "variant,seed,oa,aa,kappa");
  std::multiset<std::string> variants;
  while (std::getline(lines, line)) {
    variants.insert(line.substr(0, line.find(',')));
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 4) << line;
  }
  for (const char* v : {"fused", "step_0", "step_50"}) EXPECT_EQ(variants.count(v), 3u) << v;  // two seeds + mean
  EXPECT_TRUE(fs::exists(dir / "base" / "ablation" / "single_step_curve.csv"));
}

TEST(CliSchedule, WritesTheTable) {
  const auto r = run({"schedule", "--T", "3", "--beta-start", "0.1", "--beta-end", "0.3"});
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.substr(0, 23), "t,beta,alpha,alpha_bar\n");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 4);
  EXPECT_EQ(run({"schedule", "--T", "0"}).code, 2);
}

TEST(CliHelp, EveryFlagShowsItsDefault) {
  for (const char* cmd : {"synth", "convert", "train", "eval", "ablate", "schedule"}) {
    const auto r = run({cmd, "--help"});
    ASSERT_EQ(r.code, 0) << cmd;
    std::istringstream lines(r.out);
    std::string line;
    int options = 0;
    while (std::getline(lines, line)) {
      if (line.rfind("  --", 0) != 0 || line.find("--help") != std::string::npos) continue;
      ++options;
      EXPECT_TRUE(line.find('[') != std::string::npos || line.find("REQUIRED") != std::string::npos ||
                  line.find("(default:") != std::string::npos)
          << cmd << ": " << line;
    }
    EXPECT_GT(options, 0) << cmd;
  }
}

TEST(CliHelp, BadUsageExitsWithTwo) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"train"}).code, 2);
  EXPECT_EQ(run({"train", "--config", "x.json", "--stage", "sideways"}).code, 2);
  EXPECT_EQ(run({"eval", "--scene", "/nonexistent", "--ckpt", "/nonexistent.ckpt"}).code, 2);
}
