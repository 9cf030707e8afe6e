#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "scdr/io.hpp"

using namespace scdr;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kSmallConfig = R"({
  "synth": {"source_users": 200, "target_users": 200, "source_items": 60, "target_items": 60,
            "overlap_ratio": 0.4, "density": 0.1, "dim": 4},
  "pretrain": {"dim": 4, "epochs": 6},
  "train": {"epochs": 8, "hidden": 8}
})";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("scdr_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
    write("small.json", kSmallConfig);
  }
  void TearDown() override { fs::remove_all(root_); }

  void write(const std::string& name, const std::string& text) {
    io::write_file(root_ / name, text, true);
  }
  std::string read(const fs::path& rel) const { return io::read_file(root_ / rel); }

  // Runs the tool from the scratch root and returns its exit status.
  int run(const std::string& args) const {
    const std::string cmd = "cd '" + root_.string() + "' && '" SCDR_BINARY "' " + args +
                            " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  int run_in(const std::string& out, const std::string& cmd, const std::string& extra = "") const {
    return run(cmd + " --config small.json --out " + out + " " + extra);
  }

  void pipeline(const std::string& out) const {
    ASSERT_EQ(run_in(out, "synth"), 0);
    ASSERT_EQ(run_in(out, "pretrain", "--mode sharpness_aware"), 0);
    ASSERT_EQ(run_in(out, "train", "--method scdr"), 0);
    ASSERT_EQ(run_in(out, "eval", "--method scdr"), 0);
    ASSERT_EQ(run_in(out, "attack", "--method scdr"), 0);
  }

  std::vector<fs::path> files(const std::string& out) const {
    std::vector<fs::path> names;
    if (!fs::exists(root_ / out)) return names;
    for (const auto& e : fs::directory_iterator(root_ / out)) names.push_back(e.path().filename());
    std::sort(names.begin(), names.end());
    return names;
  }

  fs::path root_;
};

}  // namespace

TEST_F(Cli, PipelineRerunIsByteIdentical) {
  pipeline("a");
  pipeline("b");
  const auto names = files("a");
  ASSERT_EQ(names, files("b"));
  EXPECT_EQ(names.size(), 12u);
  for (const auto& n : names) EXPECT_EQ(read(fs::path("a") / n), read(fs::path("b") / n)) << n;
}

TEST_F(Cli, SynthWritesScenarioFiles) {
  ASSERT_EQ(run_in("s", "synth"), 0);
  EXPECT_EQ(files("s"), (std::vector<fs::path>{"manifest.json", "source.csv", "target.csv",
                                               "truth.json"}));
}

TEST_F(Cli, InvalidOverlapWritesNothing) {
  write("bad.json", R"({"synth": {"overlap_ratio": 0}})");
  EXPECT_EQ(run("synth --config bad.json --out bad"), 2);
  EXPECT_TRUE(files("bad").empty());
}

TEST_F(Cli, FullOverlapPutsEveryUserInBothDomains) {
  write("full.json", R"({"synth": {"source_users": 50, "target_users": 50, "source_items": 20,
                         "target_items": 20, "overlap_ratio": 1.0, "density": 0.3}})");
  ASSERT_EQ(run("synth --config full.json --out full"), 0);
  const auto m = io::manifest_from_json(read("full/manifest.json"));
  EXPECT_EQ(m.overlap.size(), 50u);
  EXPECT_EQ(m.train.size() + m.test.size(), 50u);
}

TEST_F(Cli, PlainEqualsSharpnessAwareWithZeroSteps) {
  write("k0.json", R"({
    "synth": {"source_users": 150, "target_users": 150, "source_items": 40, "target_items": 40,
              "overlap_ratio": 0.4, "density": 0.1},
    "pretrain": {"epochs": 4, "perturb": {"rho": 0.5, "k": 0}}})");
  ASSERT_EQ(run("synth --config k0.json --out k"), 0);
  ASSERT_EQ(run("pretrain --config k0.json --out k --mode plain"), 0);
  ASSERT_EQ(run("pretrain --config k0.json --out k --mode sharpness_aware"), 0);
  for (const char* side : {"source", "target"}) {
    const auto plain = io::factor_checkpoint_from_json(read(std::string("k/mf_") + side + ".json"));
    const auto sharp =
        io::factor_checkpoint_from_json(read(std::string("k/smf_") + side + ".json"));
    EXPECT_EQ(plain.model, sharp.model) << side;
    EXPECT_EQ(read(std::string("k/mf_") + side + "_trace.csv"),
              read(std::string("k/smf_") + side + "_trace.csv"));
  }
}

TEST_F(Cli, MoreEpochsExtendTheTrace) {
  ASSERT_EQ(run_in("t", "synth"), 0);
  write("e4.json", R"({"pretrain": {"dim": 4, "epochs": 4}})");
  write("e7.json", R"({"pretrain": {"dim": 4, "epochs": 7}})");
  ASSERT_EQ(run("pretrain --config e4.json --out t --mode plain"), 0);
  const auto short_trace = read("t/mf_source_trace.csv");
  ASSERT_EQ(run("pretrain --config e7.json --out t --mode plain --force"), 0);
  const auto long_trace = read("t/mf_source_trace.csv");
  EXPECT_EQ(std::count(short_trace.begin(), short_trace.end(), '\n'), 5);
  EXPECT_EQ(std::count(long_trace.begin(), long_trace.end(), '\n'), 8);
  EXPECT_EQ(long_trace.substr(0, short_trace.size()), short_trace);
}

TEST_F(Cli, AttackFirstRowMatchesEval) {
  pipeline("p");
  const auto eval = json::parse(read("p/eval_scdr.json"));
  const auto attack = json::parse(read("p/attack_scdr.json"));
  ASSERT_EQ(attack["rows"].size(), 5u);
  EXPECT_EQ(attack["rows"][0]["epsilon"].get<double>(), 0.0);
  EXPECT_EQ(attack["rows"][0]["mae"].get<double>(), eval["metrics"][0]["value"].get<double>());
  EXPECT_EQ(attack["rows"][0]["rmse"].get<double>(), eval["metrics"][1]["value"].get<double>());
  EXPECT_EQ(attack["rows"][4]["epsilon"].get<double>(), 1.0);
}

TEST_F(Cli, LandscapeDefaultGridHas441Rows) {
  pipeline("l");
  ASSERT_EQ(run_in("l", "landscape", "--method scdr"), 0);
  const auto csv = read("l/landscape_scdr.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 442);
  EXPECT_EQ(csv.substr(0, 16), "zeta,gamma,loss\n");
}

TEST_F(Cli, SharpnessOfZeroNetIsZero) {
  ASSERT_EQ(run_in("z", "synth"), 0);
  ASSERT_EQ(run_in("z", "pretrain", "--mode plain"), 0);
  io::MappingCheckpoint zero;
  zero.net = MappingNet::zeros(4, 8);
  zero.method = "emcdr";
  write("z/mapping_emcdr.json", io::to_json(zero));
  ASSERT_EQ(run_in("z", "sharpness", "--method emcdr"), 0);
  const auto report = json::parse(read("z/sharpness_emcdr.json"));
  EXPECT_EQ(report["lipschitz_estimate"].get<double>(), 0.0);
}

TEST_F(Cli, ReductionChainAcrossMethods) {
  write("chain.json", R"({
    "synth": {"source_users": 150, "target_users": 150, "source_items": 40, "target_items": 40,
              "overlap_ratio": 0.4, "density": 0.1, "dim": 4},
    "pretrain": {"dim": 4, "epochs": 4, "perturb": {"rho": 0.5, "k": 0}},
    "train": {"epochs": 5, "hidden": 6, "perturb": {"rho": 0.5, "k": 0},
              "tune_source_embeddings": false, "supervision": "embedding"}})");
  for (const char* step : {"synth", "pretrain --mode plain", "pretrain --mode sharpness_aware",
                           "train --method scdr", "train --method scdr_minus",
                           "train --method emcdr"}) {
    ASSERT_EQ(run(std::string(step) + " --config chain.json --out c"), 0) << step;
  }
  const auto scdr = io::mapping_checkpoint_from_json(read("c/mapping_scdr.json"));
  const auto minus = io::mapping_checkpoint_from_json(read("c/mapping_scdr_minus.json"));
  const auto emcdr = io::mapping_checkpoint_from_json(read("c/mapping_emcdr.json"));
  EXPECT_EQ(scdr.net, minus.net);
  EXPECT_EQ(minus.net, emcdr.net);
  EXPECT_TRUE(scdr.tuned_users.empty());
}

TEST_F(Cli, RefusesOverwriteUnlessForced) {
  ASSERT_EQ(run_in("o", "synth"), 0);
  const auto before = read("o/truth.json");
  EXPECT_EQ(run_in("o", "synth", "--seed 9"), 2);
  EXPECT_EQ(read("o/truth.json"), before);
  EXPECT_EQ(run_in("o", "synth", "--seed 9 --force"), 0);
  EXPECT_NE(read("o/truth.json"), before);
}

TEST_F(Cli, ExitCodes) {
  EXPECT_EQ(run("eval --out nowhere"), 4);
  EXPECT_EQ(run("synth --config missing.json --out x"), 4);
  EXPECT_EQ(run("synth --config small.json --out x --bogus"), 2);
  EXPECT_EQ(run("train --config small.json --out x --method tmcdr"), 2);
  EXPECT_EQ(run("pretrain --config small.json --out x --mode fast"), 2);
  write("typo.json", R"({"train": {"epoch": 3}})");
  EXPECT_EQ(run("synth --config typo.json --out x"), 2);
  write("broken.json", "{ not json");
  EXPECT_EQ(run("synth --config broken.json --out x"), 2);

  ASSERT_EQ(run_in("d", "synth"), 0);
  write("hot.json", R"({"pretrain": {"dim": 4, "epochs": 20, "learning_rate": 1000}})");
  EXPECT_EQ(run("pretrain --config hot.json --out d --mode plain"), 3);
  EXPECT_FALSE(fs::exists(root_ / "d/mf_source.json"));
}

TEST_F(Cli, MismatchedDimensionsRejected) {
  ASSERT_EQ(run_in("m", "synth"), 0);
  ASSERT_EQ(run_in("m", "pretrain", "--mode plain"), 0);
  auto target = io::factor_checkpoint_from_json(read("m/mf_target.json"));
  target.model = FactorModel(Matrix(target.model.users.rows(), 3),
                             Matrix(target.model.items.rows(), 3));
  write("m/mf_target.json", io::to_json(target));
  EXPECT_EQ(run_in("m", "train", "--method emcdr"), 2);
  EXPECT_FALSE(fs::exists(root_ / "m/mapping_emcdr.json"));
}

TEST_F(Cli, PretrainSplitsRatingFilesAndRecordsManifest) {
  ASSERT_EQ(run_in("src", "synth"), 0);
  write("files.json", R"({
    "scenario": {"source": "src/source.csv", "target": "src/target.csv", "beta": 0.5,
                 "manifest": "split.json"},
    "pretrain": {"dim": 4, "epochs": 3}})");
  ASSERT_EQ(run("pretrain --config files.json --out r --mode plain"), 0);
  const auto m = io::manifest_from_json(read("r/split.json"));
  EXPECT_EQ(m.source_path, "../src/source.csv");
  EXPECT_EQ(m.beta, 0.5);
  EXPECT_EQ(m.test.size(), (m.overlap.size() + 1) / 2);
  ASSERT_EQ(run("train --config files.json --out r --method emcdr"), 0);
}
