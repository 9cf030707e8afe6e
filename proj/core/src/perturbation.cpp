#include "scdr/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "scdr/error.hpp"
#include "scdr/factorization.hpp"

namespace scdr {

double PerturbConfig::step_size() const noexcept {
  if (alpha > 0.0) return alpha;
  return rho / static_cast<double>(std::max<std::size_t>(k, 1));
}

void PerturbConfig::validate() const {
  if (!(rho >= 0.0) || !std::isfinite(rho)) throw ValidationError("rho must be finite and >= 0");
  if (!std::isfinite(alpha) || alpha < 0.0) {
    throw ValidationError("alpha must be positive (or zero for the default)");
  }
}

void project_to_ball(std::span<double> point, std::span<const double> origin, double rho) {
  double sq = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double diff = point[i] - origin[i];
    sq += diff * diff;
  }
  const double dist = std::sqrt(sq);
  // A point just rescaled onto the sphere can measure a few ulps outside it;
  // leaving it alone keeps the projection idempotent.
  if (dist <= rho * (1.0 + 1e-12)) return;
  const double scale = rho / dist;
  for (std::size_t i = 0; i < point.size(); ++i) {
    point[i] = origin[i] + (point[i] - origin[i]) * scale;
  }
}

namespace {

void step_in_place(std::span<double> point, std::span<const double> origin,
                   std::span<const double> gradient, double alpha, double rho) {
  for (std::size_t i = 0; i < point.size(); ++i) point[i] += alpha * sign(gradient[i]);
  project_to_ball(point, origin, rho);
}

}  // namespace

Vector pgd_step(std::span<const double> point, std::span<const double> origin,
                std::span<const double> gradient, const PerturbConfig& config) {
  if (point.size() != origin.size() || point.size() != gradient.size()) {
    throw ValidationError("pgd_step: dimension mismatch");
  }
  Vector out(point.begin(), point.end());
  step_in_place(out, origin, gradient, config.step_size(), config.rho);
  return out;
}

Perturbation find_delta(const BatchObjective& objective, const Matrix& origin,
                        const PerturbConfig& config) {
  config.validate();
  const double alpha = config.step_size();

  Matrix point = origin;
  Matrix gradient(origin.rows(), origin.cols());
  const bool ascend = config.k > 0 && config.rho > 0.0;

  const double origin_loss = objective(point, ascend ? &gradient : nullptr);
  if (!std::isfinite(origin_loss)) {
    throw DivergenceError("non-finite loss at the unperturbed point");
  }

  Perturbation out;
  out.origin_loss = origin_loss;
  out.achieved_loss = origin_loss;
  out.point = origin;

  if (ascend) {
    for (std::size_t step = 1; step <= config.k; ++step) {
      if (!all_finite(gradient.values())) {
        throw DivergenceError("non-finite gradient at PGD step " + std::to_string(step - 1));
      }
      for (std::size_t r = 0; r < point.rows(); ++r) {
        step_in_place(point.row(r), origin.row(r), gradient.row(r), alpha, config.rho);
      }
      const double loss = objective(point, step < config.k ? &gradient : nullptr);
      if (!std::isfinite(loss)) {
        throw DivergenceError("non-finite loss at PGD step " + std::to_string(step));
      }
      if (loss > out.achieved_loss) {
        out.achieved_loss = loss;
        out.point = point;
      }
    }
  }

  out.delta = Matrix(origin.rows(), origin.cols());
  for (std::size_t i = 0; i < origin.size(); ++i) {
    out.delta.values()[i] = out.point.values()[i] - origin.values()[i];
  }
  return out;
}

Perturbation find_delta(const BatchObjective& objective, std::span<const double> origin,
                        const PerturbConfig& config) {
  Matrix m(1, origin.size());
  std::copy(origin.begin(), origin.end(), m.row(0).begin());
  return find_delta(objective, m, config);
}

Vector fgsm_step(std::span<const double> point, std::span<const double> gradient,
                 double epsilon) {
  if (point.size() != gradient.size()) throw ValidationError("fgsm: dimension mismatch");
  if (!(epsilon >= 0.0)) throw ValidationError("fgsm epsilon must be >= 0");
  Vector out(point.begin(), point.end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += epsilon * sign(gradient[i]);
  return out;
}

Vector fgsm_perturb(const FactorModel& model, std::size_t user,
                    std::span<const Interaction> batch, double epsilon) {
  if (batch.empty()) throw ValidationError("fgsm: empty batch");
  if (user >= model.users.rows()) throw ValidationError("fgsm: user index out of range");
  const auto u = model.users.row(user);
  Vector gradient(model.dim(), 0.0);
  for (const auto& x : batch) {
    if (x.user != user) throw ValidationError("fgsm: batch contains another user's rating");
    if (x.item >= model.items.rows()) throw ValidationError("fgsm: item index out of range");
    const auto v = model.items.row(x.item);
    axpy(-2.0 * (x.rating - dot(u, v)), v, gradient);
  }
  return fgsm_step(u, gradient, epsilon);
}

}  // namespace scdr
