#include "scdr/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "scdr/error.hpp"
#include "scdr/random.hpp"

namespace scdr {

EvalReport metrics_from_residuals(std::span<const double> residuals, std::uint64_t seed) {
  if (residuals.empty()) throw ValidationError("no residuals to score");
  double abs_sum = 0.0;
  double sq_sum = 0.0;
  for (double r : residuals) {
    abs_sum += std::abs(r);
    sq_sum += r * r;
  }
  const auto n = static_cast<double>(residuals.size());
  EvalReport out;
  out.mae = abs_sum / n;
  out.rmse = std::sqrt(sq_sum / n);
  out.n = residuals.size();
  out.per_seed.push_back({seed, out.mae, out.rmse, out.n});
  return out;
}

EvalReport combine_seeds(std::span<const EvalReport> reports) {
  if (reports.empty()) throw ValidationError("no reports to combine");
  EvalReport out;
  for (const auto& r : reports) {
    out.mae += r.mae;
    out.rmse += r.rmse;
    out.n += r.n;
    out.per_seed.insert(out.per_seed.end(), r.per_seed.begin(), r.per_seed.end());
  }
  out.mae /= static_cast<double>(reports.size());
  out.rmse /= static_cast<double>(reports.size());
  return out;
}

namespace {

struct TestUser {
  std::span<const double> embedding;
  std::vector<RatedItem> items;
};

std::vector<TestUser> collect_test_users(const FactorModel& source, const FactorModel& target,
                                         const CdrScenario& scenario) {
  if (scenario.test.empty()) throw ValidationError("cold-start test split is empty");
  if (source.dim() != target.dim()) {
    throw ValidationError("source and target factor models differ in dimension");
  }
  if (source.users.rows() != scenario.source.num_users() ||
      target.items.rows() != scenario.target.num_items()) {
    throw ValidationError("factor models do not match the scenario's domains");
  }
  const auto withheld = scenario.test_interactions();
  std::vector<TestUser> out;
  out.reserve(scenario.test.size());
  for (std::size_t i = 0; i < scenario.test.size(); ++i) {
    if (withheld[i].empty()) {
      throw ValidationError("test user '" +
                            scenario.source.user_tokens()[scenario.test[i].source_user] +
                            "' has no withheld target interactions");
    }
    auto& user = out.emplace_back();
    user.embedding = source.users.row(scenario.test[i].source_user);
    for (const auto& x : withheld[i]) user.items.push_back({target.items.row(x.item), x.rating});
  }
  return out;
}

void append_residuals(const UserMap& map, std::span<const double> u,
                      std::span<const RatedItem> items, std::vector<double>& residuals) {
  const Vector mapped = map.apply(u);
  for (const auto& it : items) residuals.push_back(it.rating - dot(mapped, it.item));
}

// d/du of sum_j (R_j - <map(u), v_j>)^2.
Vector rating_loss_gradient(const UserMap& map, std::span<const double> u,
                            std::span<const RatedItem> items) {
  const Vector mapped = map.apply(u);
  Vector upstream(mapped.size(), 0.0);
  for (const auto& it : items) axpy(-2.0 * (it.rating - dot(mapped, it.item)), it.item, upstream);
  return map.pullback(u, upstream);
}

}  // namespace

EvalReport evaluate(const UserMap& map, const FactorModel& source, const FactorModel& target,
                    const CdrScenario& scenario) {
  const auto users = collect_test_users(source, target, scenario);
  std::vector<double> residuals;
  for (const auto& user : users) append_residuals(map, user.embedding, user.items, residuals);
  return metrics_from_residuals(residuals, scenario.seed);
}

EvalReport evaluate(const MappingNet& net, const FactorModel& source, const FactorModel& target,
                    const CdrScenario& scenario) {
  return evaluate(NetMap(net), source, target, scenario);
}

std::vector<AttackPoint> fgsm_sweep(const UserMap& map, const FactorModel& source,
                                    const FactorModel& target, const CdrScenario& scenario,
                                    std::span<const double> epsilons) {
  for (std::size_t i = 0; i < epsilons.size(); ++i) {
    if (!(epsilons[i] >= 0.0) || !std::isfinite(epsilons[i])) {
      throw ValidationError("attack rates must be finite and >= 0");
    }
    if (i > 0 && epsilons[i] < epsilons[i - 1]) {
      throw ValidationError("attack rates must be sorted ascending");
    }
  }
  const auto users = collect_test_users(source, target, scenario);
  std::vector<Vector> gradients;
  gradients.reserve(users.size());
  for (const auto& user : users) {
    gradients.push_back(rating_loss_gradient(map, user.embedding, user.items));
  }

  std::vector<AttackPoint> out;
  for (double eps : epsilons) {
    std::vector<double> residuals;
    for (std::size_t i = 0; i < users.size(); ++i) {
      if (eps == 0.0) {
        append_residuals(map, users[i].embedding, users[i].items, residuals);
      } else {
        const Vector attacked = fgsm_step(users[i].embedding, gradients[i], eps);
        append_residuals(map, attacked, users[i].items, residuals);
      }
    }
    out.push_back({eps, metrics_from_residuals(residuals, scenario.seed)});
  }
  return out;
}

std::vector<AttackPoint> fgsm_sweep(const MappingNet& net, const FactorModel& source,
                                    const FactorModel& target, const CdrScenario& scenario,
                                    std::span<const double> epsilons) {
  return fgsm_sweep(NetMap(net), source, target, scenario, epsilons);
}

void LandscapeSpec::validate() const {
  if (!std::isfinite(zeta_min) || !std::isfinite(zeta_max) || !std::isfinite(gamma_min) ||
      !std::isfinite(gamma_max) || !(zeta_min < zeta_max) || !(gamma_min < gamma_max)) {
    throw ValidationError("landscape ranges must be finite with min < max");
  }
  if (zeta_points < 2 || gamma_points < 2) {
    throw ValidationError("landscape needs at least 2 points per axis");
  }
}

double LandscapeGrid::range() const {
  const auto values = loss.values();
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  return *hi - *lo;
}

namespace {

Vector axis(double lo, double hi, std::size_t points) {
  Vector out(points);
  const double span = hi - lo;
  for (std::size_t i = 0; i < points; ++i) {
    out[i] = lo + span * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  out.back() = hi;
  return out;
}

Vector unit_gaussian(std::size_t d, Rng& rng) {
  Vector g(d);
  for (auto& x : g) x = rng.normal();
  const double n = norm(g);
  for (auto& x : g) x /= n;
  return g;
}

}  // namespace

LandscapeGrid landscape_grid(const UserMap& map, const FactorModel& source,
                             const FactorModel& target, const CdrScenario& scenario,
                             const LandscapeSpec& spec) {
  spec.validate();
  const auto users = collect_test_users(source, target, scenario);
  struct Sample {
    std::size_t user;
    std::size_t item;
  };
  std::vector<Sample> pool;
  for (std::size_t u = 0; u < users.size(); ++u) {
    for (std::size_t j = 0; j < users[u].items.size(); ++j) pool.push_back({u, j});
  }
  const std::size_t n = spec.n_samples == 0 ? std::min<std::size_t>(256, pool.size())
                                            : spec.n_samples;
  if (n > pool.size()) {
    throw ValidationError("landscape asks for " + std::to_string(n) + " samples but only " +
                          std::to_string(pool.size()) + " test pairs exist");
  }

  const auto d = source.dim();
  Rng rng(spec.seed);
  const Vector dir1 = unit_gaussian(d, rng);
  const Vector dir2 = unit_gaussian(d, rng);
  rng.shuffle(std::span<Sample>(pool));
  pool.resize(n);

  LandscapeGrid grid;
  grid.zeta_axis = axis(spec.zeta_min, spec.zeta_max, spec.zeta_points);
  grid.gamma_axis = axis(spec.gamma_min, spec.gamma_max, spec.gamma_points);
  grid.loss = Matrix(spec.zeta_points, spec.gamma_points);
  grid.seed = spec.seed;
  grid.n_samples = n;

  Vector point(d);
  for (std::size_t zi = 0; zi < grid.zeta_axis.size(); ++zi) {
    const double zeta = grid.zeta_axis[zi];
    for (std::size_t gi = 0; gi < grid.gamma_axis.size(); ++gi) {
      const double gamma = grid.gamma_axis[gi];
      double abs_sum = 0.0;
      for (const auto& s : pool) {
        const auto u = users[s.user].embedding;
        const double scale = norm(u);
        for (std::size_t c = 0; c < d; ++c) {
          point[c] = u[c] + gamma * (dir1[c] * scale) + zeta * (dir2[c] * scale);
        }
        const auto& it = users[s.user].items[s.item];
        abs_sum += std::abs(it.rating - dot(map.apply(point), it.item));
      }
      grid.loss(zi, gi) = abs_sum / static_cast<double>(n);
    }
  }
  if (!all_finite(grid.loss.values())) throw DivergenceError("non-finite landscape loss");
  return grid;
}

LandscapeGrid landscape_grid(const MappingNet& net, const FactorModel& source,
                             const FactorModel& target, const CdrScenario& scenario,
                             const LandscapeSpec& spec) {
  return landscape_grid(NetMap(net), source, target, scenario, spec);
}

SharpnessReport lipschitz_estimate(const UserMap& map, const FactorModel& source,
                                   const FactorModel& target, const CdrScenario& scenario,
                                   const PerturbConfig& perturb, LipschitzOutput output) {
  perturb.validate();
  if (!(perturb.rho > 0.0) || perturb.k < 1) {
    throw ValidationError("sharpness estimate needs rho > 0 and k >= 1");
  }
  const auto users = collect_test_users(source, target, scenario);

  SharpnessReport report;
  report.rho = perturb.rho;
  report.k = perturb.k;
  double ratio_sum = 0.0;
  std::size_t flat_skips = 0;

  auto mean_prediction = [](const Vector& mapped, std::span<const RatedItem> items) {
    double acc = 0.0;
    for (const auto& it : items) acc += dot(mapped, it.item);
    return acc / static_cast<double>(items.size());
  };

  for (const auto& user : users) {
    const BatchObjective objective = [&](const Matrix& p, Matrix* g) {
      const auto x = p.row(0);
      if (g) {
        *g = Matrix(1, p.cols());
        const Vector grad = rating_loss_gradient(map, x, user.items);
        std::copy(grad.begin(), grad.end(), g->row(0).begin());
      }
      return rating_loss(map, x, user.items);
    };
    const auto pert = find_delta(objective, user.embedding, perturb);
    const double step = norm(pert.delta.row(0));
    if (step < 1e-12) {
      ++report.skipped;
      const Vector grad = rating_loss_gradient(map, user.embedding, user.items);
      if (squared_norm(grad) == 0.0) ++flat_skips;
      continue;
    }
    const Vector before = map.apply(user.embedding);
    const Vector after = map.apply(pert.point.row(0));
    double change = 0.0;
    if (output == LipschitzOutput::rating) {
      change = std::abs(mean_prediction(before, user.items) - mean_prediction(after, user.items));
    } else {
      Vector diff(before.size());
      for (std::size_t c = 0; c < diff.size(); ++c) diff[c] = before[c] - after[c];
      change = norm(diff);
    }
    ratio_sum += change / step;
    ++report.n_users;
  }

  if (report.n_users == 0) {
    // A map with zero input gradient at every test user is locally constant:
    // no ascent direction exists and the slope is zero.
    if (flat_skips == report.skipped) return report;
    throw ValidationError("every test user produced a degenerate perturbation");
  }
  report.lipschitz_estimate = ratio_sum / static_cast<double>(report.n_users);
  return report;
}

SharpnessReport lipschitz_estimate(const MappingNet& net, const FactorModel& source,
                                   const FactorModel& target, const CdrScenario& scenario,
                                   const PerturbConfig& perturb, LipschitzOutput output) {
  return lipschitz_estimate(NetMap(net), source, target, scenario, perturb, output);
}

}  // namespace scdr
