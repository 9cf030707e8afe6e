#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scdr/data.hpp"
#include "scdr/factorization.hpp"
#include "scdr/mapping.hpp"
#include "scdr/perturbation.hpp"

namespace scdr {

struct SeedMetrics {
  std::uint64_t seed = 0;
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
};

/// Pooled MAE / RMSE over scored interactions. When built from several runs,
/// `mae` and `rmse` are the means of the per-seed values.
struct EvalReport {
  double mae = 0.0;
  double rmse = 0.0;
  std::size_t n = 0;
  std::vector<SeedMetrics> per_seed;
};

/// MAE and RMSE of a residual sample. Throws ValidationError when empty.
EvalReport metrics_from_residuals(std::span<const double> residuals, std::uint64_t seed = 0);

/// Averages single-seed reports into one multi-seed report.
EvalReport combine_seeds(std::span<const EvalReport> reports);

/// Cold-start evaluation over every withheld target interaction of every
/// test user.
EvalReport evaluate(const UserMap& map, const FactorModel& source, const FactorModel& target,
                    const CdrScenario& scenario);
EvalReport evaluate(const MappingNet& net, const FactorModel& source,
                    const FactorModel& target, const CdrScenario& scenario);

struct AttackPoint {
  double epsilon = 0.0;
  EvalReport report;
};

/// White-box FGSM on each test user's source embedding, gradient taken through
/// the map against that user's withheld ratings.
std::vector<AttackPoint> fgsm_sweep(const UserMap& map, const FactorModel& source,
                                    const FactorModel& target, const CdrScenario& scenario,
                                    std::span<const double> epsilons);
std::vector<AttackPoint> fgsm_sweep(const MappingNet& net, const FactorModel& source,
                                    const FactorModel& target, const CdrScenario& scenario,
                                    std::span<const double> epsilons);

struct LandscapeSpec {
  double zeta_min = -1.0;
  double zeta_max = 1.0;
  double gamma_min = -1.0;
  double gamma_max = 1.0;
  std::size_t zeta_points = 21;
  std::size_t gamma_points = 21;
  /// Zero selects min(256, available test pairs).
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct LandscapeGrid {
  Vector zeta_axis;
  Vector gamma_axis;
  /// loss(z, g) at zeta_axis[z], gamma_axis[g].
  Matrix loss;
  std::uint64_t seed = 0;
  std::size_t n_samples = 0;

  double range() const;
};

/// Mean absolute rating error over N sampled test pairs, evaluated on a
/// lattice of displacements along two filter-normalized random directions of
/// the source embedding.
LandscapeGrid landscape_grid(const UserMap& map, const FactorModel& source,
                             const FactorModel& target, const CdrScenario& scenario,
                             const LandscapeSpec& spec);
LandscapeGrid landscape_grid(const MappingNet& net, const FactorModel& source,
                             const FactorModel& target, const CdrScenario& scenario,
                             const LandscapeSpec& spec);

/// What "output" means in the Lipschitz ratio.
enum class LipschitzOutput {
  /// Mean predicted rating over the user's withheld items (default).
  rating,
  /// The mapped embedding itself (l2 distance).
  embedding,
};

struct SharpnessReport {
  double lipschitz_estimate = 0.0;
  double rho = 0.0;
  std::size_t k = 0;
  std::size_t n_users = 0;
  std::size_t skipped = 0;
};

/// Mean over test users of |out(u) - out(u + delta*)| / ||delta*|| where
/// delta* is the PGD maximizer of the user's withheld-rating loss.
SharpnessReport lipschitz_estimate(const UserMap& map, const FactorModel& source,
                                   const FactorModel& target, const CdrScenario& scenario,
                                   const PerturbConfig& perturb,
                                   LipschitzOutput output = LipschitzOutput::rating);
SharpnessReport lipschitz_estimate(const MappingNet& net, const FactorModel& source,
                                   const FactorModel& target, const CdrScenario& scenario,
                                   const PerturbConfig& perturb,
                                   LipschitzOutput output = LipschitzOutput::rating);

}  // namespace scdr
