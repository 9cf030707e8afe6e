#include "scdr/factorization.hpp"

#include <cmath>
#include <string>
#include <unordered_map>

#include "scdr/error.hpp"
#include "scdr/random.hpp"

namespace scdr {

FactorModel::FactorModel(Matrix users_, Matrix items_)
    : users(std::move(users_)), items(std::move(items_)) {
  if (users.cols() != items.cols() || users.cols() == 0) {
    throw ValidationError("user and item matrices need the same positive width");
  }
  if (!all_finite(users.values()) || !all_finite(items.values())) {
    throw ValidationError("factor model contains non-finite entries");
  }
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("learning_rate must be positive");
  }
  if (batch_size == 0) throw ValidationError("batch_size must be positive");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ValidationError("weight_decay must be >= 0");
  }
  if (!(init_std > 0.0) || !std::isfinite(init_std)) {
    throw ValidationError("init_std must be positive");
  }
}

double predict(const FactorModel& model, std::size_t user, std::size_t item) {
  if (user >= model.users.rows() || item >= model.items.rows()) {
    throw ValidationError("predict: index out of range");
  }
  return dot(model.users.row(user), model.items.row(item));
}

namespace {

// Distinct rows touched by a batch and the slot of each entry.
struct BatchRows {
  std::vector<std::size_t> users;
  std::vector<std::size_t> items;
  std::vector<std::size_t> user_slot;
  std::vector<std::size_t> item_slot;

  BatchRows(const FactorModel& model, std::span<const Interaction> batch) {
    if (batch.empty()) throw ValidationError("empty batch");
    std::unordered_map<std::size_t, std::size_t> user_pos;
    std::unordered_map<std::size_t, std::size_t> item_pos;
    user_slot.reserve(batch.size());
    item_slot.reserve(batch.size());
    for (const auto& x : batch) {
      if (x.user >= model.users.rows() || x.item >= model.items.rows()) {
        throw ValidationError("batch references an index out of range");
      }
      auto [u, unew] = user_pos.try_emplace(x.user, users.size());
      if (unew) users.push_back(x.user);
      auto [i, inew] = item_pos.try_emplace(x.item, items.size());
      if (inew) items.push_back(x.item);
      user_slot.push_back(u->second);
      item_slot.push_back(i->second);
    }
  }

  Matrix gather_users(const FactorModel& model) const {
    Matrix out(users.size(), model.dim());
    for (std::size_t r = 0; r < users.size(); ++r) {
      const auto src = model.users.row(users[r]);
      std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
  }
};

// Loss of a batch with user rows taken from `user_points` (one row per
// distinct user). Gradients are optional and accumulate into zeroed outputs.
double batch_objective(const FactorModel& model, std::span<const Interaction> batch,
                       const BatchRows& rows, const Matrix& user_points, double weight_decay,
                       Matrix* user_grads, Matrix* item_grads) {
  double loss = 0.0;
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto u = user_points.row(rows.user_slot[n]);
    const auto v = model.items.row(batch[n].item);
    const double residual = batch[n].rating - dot(u, v);
    loss += residual * residual;
    if (user_grads) axpy(-2.0 * residual, v, user_grads->row(rows.user_slot[n]));
    if (item_grads) axpy(-2.0 * residual, u, item_grads->row(rows.item_slot[n]));
  }
  if (weight_decay > 0.0) {
    for (std::size_t r = 0; r < rows.users.size(); ++r) {
      loss += weight_decay * squared_norm(user_points.row(r));
      if (user_grads) axpy(2.0 * weight_decay, user_points.row(r), user_grads->row(r));
    }
    for (std::size_t r = 0; r < rows.items.size(); ++r) {
      const auto v = model.items.row(rows.items[r]);
      loss += weight_decay * squared_norm(v);
      if (item_grads) axpy(2.0 * weight_decay, v, item_grads->row(r));
    }
  }
  return loss;
}

MfTrainResult train_factor_model(const DomainDataset& dataset, std::size_t dim,
                                 const TrainConfig& config, const PerturbConfig* perturb) {
  config.validate();
  if (perturb) perturb->validate();
  if (dim == 0) throw ValidationError("latent dimension must be positive");
  if (dataset.num_interactions() == 0) throw ValidationError("dataset has no interactions");

  MfTrainResult out{init_factor_model(dataset.num_users(), dataset.num_items(), dim, config), {}};
  auto& model = out.model;
  const auto all = dataset.interactions();
  std::vector<Interaction> order(all.begin(), all.end());
  Rng shuffle_rng(Rng::derive(config.seed, 1));
  std::vector<Interaction> batch;
  batch.reserve(config.batch_size);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<Interaction>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const auto stop = std::min(order.size(), start + config.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                   order.begin() + static_cast<std::ptrdiff_t>(stop));
      const BatchRows rows(model, batch);
      Matrix points = rows.gather_users(model);

      if (perturb) {
        const BatchObjective objective = [&](const Matrix& p, Matrix* g) {
          if (g) *g = Matrix(p.rows(), p.cols());
          return batch_objective(model, batch, rows, p, config.weight_decay, g, nullptr);
        };
        points = find_delta(objective, points, *perturb).point;
      }

      Matrix user_grads(rows.users.size(), dim);
      Matrix item_grads(rows.items.size(), dim);
      const double loss = batch_objective(model, batch, rows, points, config.weight_decay,
                                          &user_grads, &item_grads);
      if (!std::isfinite(loss) || !all_finite(user_grads.values()) ||
          !all_finite(item_grads.values())) {
        throw DivergenceError("factorization diverged in epoch " + std::to_string(epoch) +
                              " at learning rate " + std::to_string(config.learning_rate));
      }
      epoch_loss += loss;
      for (std::size_t r = 0; r < rows.users.size(); ++r) {
        axpy(-config.learning_rate, user_grads.row(r), model.users.row(rows.users[r]));
      }
      for (std::size_t r = 0; r < rows.items.size(); ++r) {
        axpy(-config.learning_rate, item_grads.row(r), model.items.row(rows.items[r]));
      }
    }
    out.loss_trace.push_back(epoch_loss / static_cast<double>(order.size()));
  }
  return out;
}

}  // namespace

double mf_loss(const FactorModel& model, std::span<const Interaction> batch,
               double weight_decay) {
  const BatchRows rows(model, batch);
  return batch_objective(model, batch, rows, rows.gather_users(model), weight_decay, nullptr,
                         nullptr);
}

MfGradient mf_grad(const FactorModel& model, std::span<const Interaction> batch,
                   double weight_decay) {
  const BatchRows rows(model, batch);
  MfGradient out{rows.users, Matrix(rows.users.size(), model.dim()), rows.items,
                 Matrix(rows.items.size(), model.dim())};
  batch_objective(model, batch, rows, rows.gather_users(model), weight_decay, &out.user_grads,
                  &out.item_grads);
  return out;
}

FactorModel init_factor_model(std::size_t num_users, std::size_t num_items, std::size_t dim,
                              const TrainConfig& config) {
  Rng rng(config.seed);
  Matrix users(num_users, dim);
  Matrix items(num_items, dim);
  for (auto& x : users.values()) x = rng.normal(0.0, config.init_std);
  for (auto& x : items.values()) x = rng.normal(0.0, config.init_std);
  return FactorModel(std::move(users), std::move(items));
}

MfTrainResult train_mf(const DomainDataset& dataset, std::size_t dim, const TrainConfig& config) {
  return train_factor_model(dataset, dim, config, nullptr);
}

MfTrainResult train_smf(const DomainDataset& dataset, std::size_t dim,
                        const TrainConfig& config, const PerturbConfig& perturb) {
  return train_factor_model(dataset, dim, config, &perturb);
}

}  // namespace scdr
