#pragma once

#include <cstddef>
#include <functional>
#include <span>

#include "scdr/linalg.hpp"

namespace scdr {

struct FactorModel;
struct Interaction;

/// PGD settings: ball radius, number of ascent steps, and step size.
struct PerturbConfig {
  double rho = 0.0;
  std::size_t k = 0;
  /// Non-positive selects rho / max(k, 1).
  double alpha = 0.0;

  double step_size() const noexcept;
  void validate() const;
};

/// Objective over a batch of points (one point per row). Returns the loss and,
/// when `gradient` is non-null, writes d loss / d point with the same shape.
using BatchObjective = std::function<double(const Matrix& points, Matrix* gradient)>;

struct Perturbation {
  /// One row per perturbed point.
  Matrix delta;
  /// The best iterate itself. Use this rather than origin + delta, which can
  /// differ from it by rounding.
  Matrix point;
  /// Loss at origin + delta.
  double achieved_loss = 0.0;
  /// Loss at the unperturbed origin.
  double origin_loss = 0.0;
};

/// Rescales `point - origin` onto the rho sphere when it lies outside the ball.
void project_to_ball(std::span<double> point, std::span<const double> origin, double rho);

/// One projected sign-ascent step: project(point + alpha * sign(gradient)).
Vector pgd_step(std::span<const double> point, std::span<const double> origin,
                std::span<const double> gradient, const PerturbConfig& config);

/// Approximately maximizes `objective` over per-row perturbations with
/// ||delta_r|| <= rho. Runs k PGD steps from `origin` and keeps the best
/// iterate, the origin included, so achieved_loss >= origin_loss.
/// Throws DivergenceError when a loss or gradient is non-finite.
Perturbation find_delta(const BatchObjective& objective, const Matrix& origin,
                        const PerturbConfig& config);

/// Single-vector convenience overload.
Perturbation find_delta(const BatchObjective& objective, std::span<const double> origin,
                        const PerturbConfig& config);

/// u + epsilon * sign(gradient), one step, no projection.
Vector fgsm_step(std::span<const double> point, std::span<const double> gradient,
                 double epsilon);

/// FGSM on a factor model's user row against that user's ratings `batch`.
Vector fgsm_perturb(const FactorModel& model, std::size_t user,
                    std::span<const Interaction> batch, double epsilon);

}  // namespace scdr
