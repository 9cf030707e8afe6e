#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "scdr/error.hpp"
#include "scdr/format.hpp"
#include "scdr/io.hpp"

using namespace scdr;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Awkward doubles: tiny, huge, non-terminating, negative zero.
Matrix awkward(std::size_t r, std::size_t c, std::mt19937_64& gen) {
  auto m = oracle::random_matrix(r, c, gen);
  m.values()[0] = 0.1 + 0.2;
  if (m.size() > 1) m.values()[1] = std::numeric_limits<double>::denorm_min();
  if (m.size() > 2) m.values()[2] = -0.0;
  if (m.size() > 3) m.values()[3] = 1.7976931348623157e308;
  return m;
}

}  // namespace

TEST(Format, ShortestRoundTrip) {
  std::mt19937_64 gen(1);
  for (int t = 0; t < 10000; ++t) {
    const double x = std::ldexp(oracle::random_vector(1, gen)[0], static_cast<int>(t % 200) - 100);
    const auto back = parse_double(format_double(x));
    ASSERT_TRUE(back.has_value());
    EXPECT_EQ(*back, x);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_EQ(format_double(3.0), "3");
  EXPECT_FALSE(parse_double("1.5x").has_value());
  EXPECT_FALSE(parse_double("").has_value());
  EXPECT_EQ(parse_double("+2").value(), 2.0);
}

TEST(Checkpoint, FactorModelRoundTripIsBitExact) {
  std::mt19937_64 gen(2);
  io::FactorCheckpoint c;
  c.model = FactorModel(awkward(7, 3, gen), awkward(5, 3, gen));
  c.config.seed = 123456789012345ull;
  c.config.learning_rate = 0.01;
  c.mode = "sharpness_aware";
  c.perturb = {0.5, 5, 0.0};
  const auto text = io::to_json(c);
  const auto back = io::factor_checkpoint_from_json(text);
  EXPECT_EQ(back.model, c.model);
  EXPECT_TRUE(std::signbit(back.model.users.values()[2]));
  EXPECT_EQ(back.config.seed, c.config.seed);
  EXPECT_EQ(back.mode, c.mode);
  EXPECT_EQ(back.perturb.k, 5u);
  EXPECT_EQ(io::to_json(back), text);
}

TEST(Checkpoint, MappingRoundTripIsBitExact) {
  std::mt19937_64 gen(3);
  io::MappingCheckpoint c;
  c.net = {awkward(6, 4, gen), oracle::random_vector(6, gen), awkward(4, 6, gen),
           oracle::random_vector(4, gen)};
  c.method = "scdr";
  c.tuned_users = {3, 1, 8};
  c.tuned_embeddings = awkward(3, 4, gen);
  const auto text = io::to_json(c);
  const auto back = io::mapping_checkpoint_from_json(text);
  EXPECT_EQ(back.net, c.net);
  EXPECT_EQ(back.tuned_users, c.tuned_users);
  EXPECT_EQ(back.tuned_embeddings, c.tuned_embeddings);
  EXPECT_EQ(io::to_json(back), text);
}

TEST(Checkpoint, RejectsWrongKindAndCorruptPayload) {
  io::FactorCheckpoint c;
  c.model = FactorModel(Matrix(2, 2, 1.0), Matrix(2, 2, 1.0));
  const auto text = io::to_json(c);
  EXPECT_THROW(io::mapping_checkpoint_from_json(text), ValidationError);
  EXPECT_THROW(io::factor_checkpoint_from_json("{not json"), ValidationError);
  auto broken = text;
  broken.replace(broken.find("\"rows\": 2"), 9, "\"rows\": 3");
  EXPECT_THROW(io::factor_checkpoint_from_json(broken), ValidationError);
}

TEST(Manifest, RoundTripAndReload) {
  const auto dir = fresh_dir("scdr_io_manifest");
  const auto syn = generate_synthetic(oracle::small_spec(4));
  write_ratings(dir / "source.csv", syn.scenario.source);
  write_ratings(dir / "target.csv", syn.scenario.target);
  const auto m = io::make_manifest(syn.scenario, "source.csv", "target.csv");
  const auto text = io::to_json(m);
  const auto back = io::manifest_from_json(text);
  EXPECT_EQ(back.test, m.test);
  EXPECT_EQ(back.beta, m.beta);
  EXPECT_EQ(io::to_json(back), text);

  const auto sc = io::load_scenario(back, dir);
  EXPECT_EQ(sc.test, syn.scenario.test);
  EXPECT_EQ(sc.train, syn.scenario.train);
  EXPECT_EQ(sc.target.num_interactions(), syn.scenario.target.num_interactions());
  fs::remove_all(dir);
}

TEST(Truth, RoundTrip) {
  const auto syn = generate_synthetic(oracle::small_spec(5));
  const auto back = io::truth_from_json(io::to_json(syn.truth));
  EXPECT_EQ(back.transform, syn.truth.transform);
  EXPECT_EQ(back.target_users, syn.truth.target_users);
  EXPECT_EQ(back.map, syn.truth.map);
}

TEST(Reports, LandscapeCsvLayout) {
  LandscapeGrid g;
  g.zeta_axis = {-1.0, 1.0};
  g.gamma_axis = {0.0, 0.5, 1.0};
  g.loss = Matrix(2, 3);
  for (std::size_t i = 0; i < 6; ++i) g.loss.values()[i] = 0.1 * static_cast<double>(i);
  const auto csv = io::to_csv(g);
  EXPECT_EQ(csv,
            "zeta,gamma,loss\n"
            "-1,0,0\n-1,0.5,0.1\n-1,1,0.2\n"
            "1,0,0.30000000000000004\n1,0.5,0.4\n1,1,0.5\n");
}

TEST(Reports, EvalReportFields) {
  const auto r = metrics_from_residuals(std::vector<double>{1, -3}, 7);
  const auto text = io::to_json(r, "scdr");
  for (const char* key : {"\"mae\"", "\"rmse\"", "\"n\"", "\"seeds\"", "\"method\""}) {
    EXPECT_NE(text.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(io::trace_to_csv({0.5, 0.25}), "epoch,loss\n1,0.5\n2,0.25\n");
}

TEST(Files, WriteRefusesOverwriteWithoutForce) {
  const auto dir = fresh_dir("scdr_io_files");
  const auto path = dir / "out.json";
  io::write_file(path, "one\n", false);
  EXPECT_THROW(io::write_file(path, "two\n", false), ValidationError);
  EXPECT_EQ(io::read_file(path), "one\n");
  io::write_file(path, "two\n", true);
  EXPECT_EQ(io::read_file(path), "two\n");
  EXPECT_FALSE(fs::exists(dir / "out.json.tmp"));
  EXPECT_THROW(io::read_file(dir / "missing.json"), IoError);
  fs::remove_all(dir);
}
