#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fixtures.hpp"
#include "rp2/classifier.hpp"
#include "rp2/eval.hpp"
#include "rp2/image_io.hpp"
#include "rp2/weights_io.hpp"

using namespace rp2;
namespace fs = std::filesystem;

namespace {

struct CliRun {
  int code = -1;
  std::string out;
};

// stdout only; stderr goes to the test log.
CliRun run(const std::string& args) {
  const std::string cmd = std::string(RP2_CLI_PATH) + " " + args;
  CliRun r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "rp2_cli_tests" / name;
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

// Every regular file under `dir`, by relative path.
std::map<std::string, std::string> tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = slurp(e.path());
  }
  return files;
}

fs::path write_pairs(const fs::path& dir, int total, int hits) {
  const auto pairs = rp2::testing::red_pairs(total, hits);
  std::ofstream tsv(dir / "pairs.tsv");
  for (int i = 0; i < total; ++i) {
    write_png(dir / ("c" + std::to_string(i) + ".png"), pairs[i].clean);
    write_png(dir / ("p" + std::to_string(i) + ".png"), pairs[i].perturbed);
    tsv << "c" << i << ".png\tp" << i << ".png\t" << pairs[i].distance_tag << "\t0deg\n";
  }
  return dir / "pairs.tsv";
}

fs::path fixture_model(const fs::path& dir) {
  save_weights(rp2::testing::red_threshold_model(), dir / "fixture.rpw");
  return dir / "fixture.rpw";
}

// Classifies the rendered stop sign (class 0) correctly.
fs::path stop_model(const fs::path& dir) {
  save_weights(rp2::testing::red_stop_model(), dir / "stop.rpw");
  return dir / "stop.rpw";
}

}  // namespace

TEST(CliDataset, SplitCountsAreReported) {
  const fs::path dir = fresh_dir("gen100");
  const CliRun r = run("dataset gen --per-class 100 --seed 1 --out " + dir.string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train=560 val=120 test=120"), std::string::npos) << r.out;
}

TEST(CliDataset, TooFewPerClassIsAUsageError) {
  const fs::path dir = fresh_dir("gen10");
  EXPECT_EQ(run("dataset gen --per-class 10 --out " + dir.string()).code, 2);
}

TEST(CliDataset, OutputIndependentOfThreadCount) {
  const fs::path a = fresh_dir("det_a"), b = fresh_dir("det_b");
  ASSERT_EQ(run("dataset gen --per-class 20 --seed 4 --threads 1 --out " + a.string()).code, 0);
  ASSERT_EQ(run("dataset gen --per-class 20 --seed 4 --threads 3 --out " + b.string()).code, 0);
  const auto ta = tree(a), tb = tree(b);
  EXPECT_GT(ta.size(), 100u);
  EXPECT_TRUE(ta == tb);
}

TEST(CliTrain, ZeroEpochsWritesInitialization) {
  const fs::path dir = fresh_dir("train0");
  ASSERT_EQ(run("dataset gen --per-class 20 --seed 2 --out " + (dir / "data").string()).code, 0);
  const CliRun r = run("train --data " + (dir / "data").string() + " --epochs 0 --seed 9 --out " +
                    (dir / "m.rpw").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("test_accuracy="), std::string::npos);
  const ModelParameters loaded = load_weights(dir / "m.rpw");
  const ModelParameters init = init_parameters(kReferenceArchitecture, kReferenceClassCount, 9);
  ASSERT_EQ(loaded.tensors.size(), init.tensors.size());
  for (std::size_t i = 0; i < init.tensors.size(); ++i) EXPECT_EQ(loaded.tensors[i], init.tensors[i]);
}

TEST(CliTrain, MissingDataIsAnIoError) {
  const fs::path dir = fresh_dir("train_missing");
  EXPECT_EQ(run("train --data " + (dir / "nothing").string() + " --out " + (dir / "m.rpw").string()).code, 5);
}

TEST(CliAttack, PremiseFailureAndForce) {
  const fs::path dir = fresh_dir("premise");
  const fs::path model = fixture_model(dir);
  // The fixture model calls the red stop sign class 1, so class 0 is a wrong premise.
  const std::string base = "attack --model " + model.string() +
                           " --class 0 --target 1 --iterations 3 --batch-size 2 --canonical-side 32 --out ";
  EXPECT_EQ(run(base + (dir / "a").string()).code, 4);
  EXPECT_FALSE(fs::exists(dir / "a" / "meta.json"));
  EXPECT_EQ(run(base + (dir / "b").string() + " --force").code, 0);
  EXPECT_TRUE(fs::exists(dir / "b" / "meta.json"));
}

TEST(CliAttack, EmptyMaskIsAUsageError) {
  const fs::path dir = fresh_dir("empty_mask");
  const fs::path model = stop_model(dir);
  write_png(dir / "mask.png", Tensor({32, 32, 3}));
  const CliRun r = run("attack --model " + model.string() + " --class 0 --target 1 --iterations 3 --canonical-side 32 --mask " +
                    (dir / "mask.png").string() + " --out " + (dir / "a").string());
  EXPECT_EQ(r.code, 2);
}

TEST(CliAttack, MetadataEchoesResolvedSettings) {
  const fs::path dir = fresh_dir("meta");
  const fs::path model = stop_model(dir);
  const CliRun r = run("attack --model " + model.string() +
                    " --class 0 --target 1 --iterations 4 --batch-size 2 --canonical-side 32 --lambda 0.02 --eta 0.05"
                    " --seed 77 --out " + (dir / "a").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("probe_success="), std::string::npos);
  std::ifstream in(dir / "a" / "meta.json");
  const nlohmann::json meta = nlohmann::json::parse(in);
  EXPECT_DOUBLE_EQ(meta["lambda"].get<double>(), 0.02);
  EXPECT_DOUBLE_EQ(meta["eta"].get<double>(), 0.05);
  EXPECT_EQ(meta["seed"].get<int>(), 77);
  EXPECT_EQ(meta["norm"], "L2");
  EXPECT_EQ(meta["target_class"], 1);
  EXPECT_TRUE(fs::exists(dir / "a" / "trace.csv"));
}

TEST(CliAttack, ArchiveIndependentOfThreadCount) {
  const fs::path dir = fresh_dir("attack_threads");
  const fs::path model = stop_model(dir);
  const std::string base = "attack --model " + model.string() +
                           " --class 0 --target 1 --iterations 6 --batch-size 3 --canonical-side 32 --seed 3 --out ";
  ASSERT_EQ(run(base + (dir / "t1").string() + " --threads 1").code, 0);
  ASSERT_EQ(run(base + (dir / "t3").string() + " --threads 3").code, 0);
  EXPECT_EQ(slurp(dir / "t1" / "delta.rpw"), slurp(dir / "t3" / "delta.rpw"));
  EXPECT_EQ(slurp(dir / "t1" / "meta.json"), slurp(dir / "t3" / "meta.json"));
  EXPECT_EQ(slurp(dir / "t1" / "trace.csv"), slurp(dir / "t3" / "trace.csv"));
}

TEST(CliEval, StationaryFixtureRates) {
  const fs::path dir = fresh_dir("stationary");
  const fs::path model = fixture_model(dir);
  fs::create_directories(dir / "nine");
  fs::create_directories(dir / "ten");
  const CliRun a = run("eval stationary --model " + model.string() + " --class 0 --target 1 --pairs " +
                    write_pairs(dir / "nine", 10, 9).string() + " --out " + (dir / "a.json").string());
  EXPECT_EQ(a.code, 0);
  EXPECT_NE(a.out.find("success_rate=0.900"), std::string::npos) << a.out;
  const CliRun b = run("eval stationary --model " + model.string() + " --class 0 --target 1 --pairs " +
                    write_pairs(dir / "ten", 14, 10).string() + " --out " + (dir / "b.json").string());
  EXPECT_EQ(b.code, 0);
  EXPECT_NE(b.out.find("success_rate=0.714"), std::string::npos) << b.out;
  std::ifstream in(dir / "b.json");
  const nlohmann::json j = nlohmann::json::parse(in);
  EXPECT_NO_THROW(validate_report_json(j));
  EXPECT_EQ(j["numerator"], 10);
  EXPECT_EQ(j["denominator"], 14);
}

TEST(CliEval, DriveByDefaultK) {
  const fs::path dir = fresh_dir("driveby");
  const fs::path model = fixture_model(dir);
  fs::create_directories(dir / "frames" / "clean");
  fs::create_directories(dir / "frames" / "perturbed");
  for (int i = 0; i < 25; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "f%03d.png", i);
    write_png(dir / "frames" / "clean" / name, rp2::testing::red_image(0.2f));
    write_png(dir / "frames" / "perturbed" / name, rp2::testing::red_image(0.9f));
  }
  const CliRun r = run("eval driveby --model " + model.string() + " --class 0 --target 1 --frames " +
                    (dir / "frames").string() + " --out " + (dir / "r.json").string());
  ASSERT_EQ(r.code, 0);
  std::ifstream in(dir / "r.json");
  const nlohmann::json j = nlohmann::json::parse(in);
  EXPECT_EQ(j["k"], 10);
  EXPECT_EQ(j["sampled_indices"], (std::vector<int>{0, 10, 20}));
}

TEST(CliEval, MalformedPairsFileIsAFormatError) {
  const fs::path dir = fresh_dir("malformed");
  const fs::path model = fixture_model(dir);
  std::ofstream(dir / "pairs.tsv") << "only-one-field\n";
  EXPECT_EQ(run("eval stationary --model " + model.string() + " --class 0 --target 1 --pairs " +
                (dir / "pairs.tsv").string() + " --out " + (dir / "r.json").string())
                .code,
            5);
}

TEST(CliConfig, UnknownKeyIsAUsageError) {
  const fs::path dir = fresh_dir("config_bad");
  std::ofstream(dir / "c.toml") << "[train]\nbogus = 3\n";
  EXPECT_EQ(run("--config " + (dir / "c.toml").string() + " train --data x --out y").code, 2);
}

TEST(CliConfig, FlagsOverrideConfigValues) {
  const fs::path dir = fresh_dir("config_override");
  std::ofstream(dir / "c.toml") << "[dataset.gen]\nper-class = 10\nseed = 3\n";
  EXPECT_EQ(run("--config " + (dir / "c.toml").string() + " dataset gen --out " + (dir / "a").string()).code, 2);
  const CliRun r = run("--config " + (dir / "c.toml").string() + " dataset gen --per-class 20 --out " + (dir / "b").string());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("train=112"), std::string::npos);
}

TEST(CliUsage, UnknownSubcommandAndHelp) {
  EXPECT_EQ(run("frobnicate").code, 2);
  EXPECT_EQ(run("--help").code, 0);
}
