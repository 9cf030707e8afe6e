#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "scdr/error.hpp"
#include "scdr/factorization.hpp"

using namespace scdr;

namespace {

FactorModel from_rows(std::vector<double> u, std::vector<double> v) {
  Matrix mu(1, u.size()), mv(1, v.size());
  std::copy(u.begin(), u.end(), mu.row(0).begin());
  std::copy(v.begin(), v.end(), mv.row(0).begin());
  return {mu, mv};
}

struct Instance {
  FactorModel model;
  std::vector<Interaction> batch;
};

Instance random_instance(std::mt19937_64& gen, std::size_t triples) {
  std::uniform_int_distribution<std::size_t> dim_d(1, 6), n_d(2, 6);
  const auto d = dim_d(gen);
  const auto nu = n_d(gen), ni = n_d(gen);
  Instance out{{oracle::random_matrix(nu, d, gen), oracle::random_matrix(ni, d, gen)}, {}};
  std::uniform_int_distribution<std::size_t> pu(0, nu - 1), pi(0, ni - 1);
  std::uniform_real_distribution<double> r(1.0, 5.0);
  for (std::size_t t = 0; t < triples; ++t) out.batch.push_back({pu(gen), pi(gen), r(gen)});
  return out;
}

// Rank-1 noiseless 4x4 ratings.
DomainDataset rank_one() {
  const double u[4] = {1.0, 1.5, 0.8, 1.2};
  const double v[4] = {2.0, 1.0, 2.5, 1.5};
  std::vector<RatingTriple> triples;
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      triples.push_back({"u" + std::to_string(i), "i" + std::to_string(j), u[i] * v[j]});
    }
  }
  return DomainDataset::from_triples(triples);
}

double mean_squared_residual(const FactorModel& m, const DomainDataset& ds) {
  const auto inter = ds.interactions();
  return mf_loss(m, {inter.begin(), inter.end()}) / static_cast<double>(inter.size());
}

TrainConfig rank_one_config(std::size_t epochs) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 4;
  cfg.learning_rate = 0.05;
  cfg.init_std = 0.1;
  cfg.seed = 3;
  return cfg;
}

}  // namespace

TEST(Predict, HandCases) {
  EXPECT_EQ(predict(from_rows({1, 0}, {0, 1}), 0, 0), 0.0);
  EXPECT_EQ(predict(from_rows({1, 2, 3}, {4, 5, 6}), 0, 0), 32.0);
  EXPECT_DOUBLE_EQ(predict(from_rows({0.3, 0.3, 0.3, 0.3}, {0.3, 0.3, 0.3, 0.3}), 0, 0),
                   4 * 0.09);
  EXPECT_THROW(predict(from_rows({1}, {1}), 1, 0), ValidationError);
}

TEST(MfLoss, HandCases) {
  const auto m = from_rows({1, 0}, {1, 0});
  EXPECT_EQ(mf_loss(m, std::vector<Interaction>{{0, 0, 3.0}}), 4.0);
  EXPECT_EQ(mf_loss(m, std::vector<Interaction>{{0, 0, 1.0}}), 0.0);
  EXPECT_THROW(mf_loss(m, std::vector<Interaction>{}), ValidationError);
}

TEST(MfLoss, MatchesScalarLoop) {
  std::mt19937_64 gen(11);
  for (int t = 0; t < 200; ++t) {
    const auto inst = random_instance(gen, 4);
    for (double wd : {0.0, 0.1}) {
      EXPECT_NEAR(mf_loss(inst.model, inst.batch, wd),
                  oracle::mf_loss_loop(inst.model, inst.batch, wd), 1e-12);
    }
  }
}

TEST(MfGrad, HandCase) {
  const auto g = mf_grad(from_rows({1, 0}, {1, 0}), std::vector<Interaction>{{0, 0, 3.0}});
  EXPECT_EQ(g.user_grads(0, 0), -4.0);
  EXPECT_EQ(g.user_grads(0, 1), 0.0);
  EXPECT_EQ(g.item_grads(0, 0), -4.0);
  EXPECT_EQ(g.item_grads(0, 1), 0.0);
}

TEST(MfGrad, ZeroResidual) {
  const auto g = mf_grad(from_rows({1, 2}, {1, 1}), std::vector<Interaction>{{0, 0, 3.0}});
  for (double x : g.user_grads.values()) EXPECT_EQ(x, 0.0);
  for (double x : g.item_grads.values()) EXPECT_EQ(x, 0.0);
}

TEST(MfGrad, MatchesFiniteDifferences) {
  std::mt19937_64 gen(12);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    auto inst = random_instance(gen, 5);
    const double wd = t % 2 ? 0.05 : 0.0;
    const auto g = mf_grad(inst.model, inst.batch, wd);
    auto loss = [&] { return oracle::mf_loss_loop(inst.model, inst.batch, wd); };
    for (std::size_t r = 0; r < g.user_rows.size(); ++r) {
      for (std::size_t c = 0; c < inst.model.dim(); ++c) {
        const double fd = oracle::central_difference(loss, inst.model.users(g.user_rows[r], c));
        worst = std::max(worst, oracle::relative_error(g.user_grads(r, c), fd));
      }
    }
    for (std::size_t r = 0; r < g.item_rows.size(); ++r) {
      for (std::size_t c = 0; c < inst.model.dim(); ++c) {
        const double fd = oracle::central_difference(loss, inst.model.items(g.item_rows[r], c));
        worst = std::max(worst, oracle::relative_error(g.item_grads(r, c), fd));
      }
    }
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(MfGrad, RowsInFirstAppearanceOrder) {
  std::mt19937_64 gen(1);
  FactorModel m{oracle::random_matrix(5, 2, gen), oracle::random_matrix(5, 2, gen)};
  const auto g = mf_grad(m, std::vector<Interaction>{{3, 1, 1}, {0, 4, 2}, {3, 4, 3}});
  EXPECT_EQ(g.user_rows, (std::vector<std::size_t>{3, 0}));
  EXPECT_EQ(g.item_rows, (std::vector<std::size_t>{1, 4}));
}

TEST(TrainMf, RankOneConverges) {
  const auto ds = rank_one();
  const auto res = train_mf(ds, 2, rank_one_config(200));
  EXPECT_LT(mean_squared_residual(res.model, ds), 1e-2);
  EXPECT_EQ(res.loss_trace.size(), 200u);
}

TEST(TrainMf, ZeroEpochsReturnsInit) {
  const auto ds = rank_one();
  const auto cfg = rank_one_config(0);
  const auto res = train_mf(ds, 3, cfg);
  EXPECT_EQ(res.model, init_factor_model(4, 4, 3, cfg));
  EXPECT_TRUE(res.loss_trace.empty());
}

TEST(TrainMf, Deterministic) {
  const auto ds = rank_one();
  const auto a = train_mf(ds, 2, rank_one_config(30));
  const auto b = train_mf(ds, 2, rank_one_config(30));
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.loss_trace, b.loss_trace);
}

TEST(TrainMf, DivergenceNamesEpochAndRate) {
  auto cfg = rank_one_config(50);
  cfg.learning_rate = 10.0;
  try {
    train_mf(rank_one(), 2, cfg);
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find("epoch"), std::string::npos);
    EXPECT_NE(what.find("10"), std::string::npos);
  }
}

TEST(TrainMf, InitializationScale) {
  TrainConfig cfg;
  cfg.seed = 4;
  const auto m = init_factor_model(300, 300, 10, cfg);
  double sq = 0.0;
  for (double x : m.users.values()) sq += x * x;
  const double sd = std::sqrt(sq / static_cast<double>(m.users.size()));
  EXPECT_NEAR(sd, 0.01, 0.001);
}

TEST(TrainSmf, ReducesToPlainWhenKOrRhoZero) {
  const auto ds = rank_one();
  const auto cfg = rank_one_config(40);
  const auto plain = train_mf(ds, 2, cfg);
  for (PerturbConfig p : {PerturbConfig{0.5, 0, 0.0}, PerturbConfig{0.0, 5, 0.0}}) {
    const auto smf = train_smf(ds, 2, cfg, p);
    EXPECT_EQ(smf.model, plain.model);
    EXPECT_EQ(smf.loss_trace, plain.loss_trace);
  }
}

TEST(TrainSmf, RankOneConverges) {
  const auto ds = rank_one();
  const auto res = train_smf(ds, 2, rank_one_config(300), {0.5, 5, 0.0});
  EXPECT_LT(mean_squared_residual(res.model, ds), 5e-2);
}

TEST(TrainSmf, PerturbedTraceDominatesPlainLoss) {
  // In epoch 0 both runs start from the same initialization, and the first
  // batch's perturbed loss can only exceed the clean one.
  const auto ds = rank_one();
  auto cfg = rank_one_config(1);
  cfg.batch_size = 16;
  const auto plain = train_mf(ds, 2, cfg);
  const auto smf = train_smf(ds, 2, cfg, {0.3, 3, 0.0});
  EXPECT_GE(smf.loss_trace[0], plain.loss_trace[0]);
}

TEST(TrainSmf, UntouchedRowsUnchanged) {
  // One batch that touches user 0 only: every other user row stays at init.
  std::vector<RatingTriple> triples{{"a", "x", 4}, {"a", "y", 2}, {"b", "x", 3}};
  auto ds = DomainDataset::from_triples(triples);
  ds = ds.filtered([](const Interaction& x) { return x.user == 0; });
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 9;
  const auto init = init_factor_model(2, 2, 2, cfg);
  for (bool sharp : {false, true}) {
    const auto res = sharp ? train_smf(ds, 2, cfg, {0.2, 2, 0.0}) : train_mf(ds, 2, cfg);
    EXPECT_TRUE(std::equal(res.model.users.row(1).begin(), res.model.users.row(1).end(),
                           init.users.row(1).begin()));
    EXPECT_FALSE(std::equal(res.model.users.row(0).begin(), res.model.users.row(0).end(),
                            init.users.row(0).begin()));
  }
}

TEST(TrainConfigTest, Validation) {
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.weight_decay = -1;
  EXPECT_THROW(cfg.validate(), ValidationError);
  cfg = {};
  cfg.init_std = 0;
  EXPECT_THROW(cfg.validate(), ValidationError);
}
