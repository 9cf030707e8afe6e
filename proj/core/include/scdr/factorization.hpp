#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scdr/data.hpp"
#include "scdr/linalg.hpp"
#include "scdr/perturbation.hpp"

namespace scdr {

/// User and item latent matrices of one domain. Row i of `users` is the
/// embedding of user i; row j of `items` is the embedding of item j.
struct FactorModel {
  Matrix users;
  Matrix items;

  FactorModel() = default;
  FactorModel(Matrix users_, Matrix items_);

  std::size_t dim() const noexcept { return users.cols(); }

  bool operator==(const FactorModel&) const = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 256;
  double weight_decay = 0.0;
  double init_std = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Inner product of user row and item row. No clipping.
double predict(const FactorModel& model, std::size_t user, std::size_t item);

/// Sum of squared residuals over `batch`, plus weight_decay times the squared
/// norms of every distinct user and item row the batch touches.
double mf_loss(const FactorModel& model, std::span<const Interaction> batch,
               double weight_decay = 0.0);

/// Gradient of mf_loss restricted to the rows a batch touches. Row lists keep
/// first-appearance order; row r of `user_grads` belongs to `user_rows[r]`.
struct MfGradient {
  std::vector<std::size_t> user_rows;
  Matrix user_grads;
  std::vector<std::size_t> item_rows;
  Matrix item_grads;
};

MfGradient mf_grad(const FactorModel& model, std::span<const Interaction> batch,
                   double weight_decay = 0.0);

struct MfTrainResult {
  FactorModel model;
  /// Mean per-interaction training objective of each epoch, measured on the
  /// batches before their update.
  std::vector<double> loss_trace;
};

/// Gaussian initialization used by the trainers.
FactorModel init_factor_model(std::size_t num_users, std::size_t num_items,
                              std::size_t dim, const TrainConfig& config);

/// Mini-batch SGD on the squared-error objective.
MfTrainResult train_mf(const DomainDataset& dataset, std::size_t dim,
                       const TrainConfig& config);

/// Sharpness-aware variant: each step perturbs the batch's user rows inside
/// the rho ball via PGD and applies the gradient taken at the perturbed point.
MfTrainResult train_smf(const DomainDataset& dataset, std::size_t dim,
                        const TrainConfig& config, const PerturbConfig& perturb);

}  // namespace scdr
