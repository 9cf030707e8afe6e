#include "scdr/mapping.hpp"

#include <cmath>
#include <string>

#include "scdr/error.hpp"
#include "scdr/random.hpp"

namespace scdr {

MappingNet MappingNet::zeros(std::size_t dim, std::size_t hidden) {
  return {Matrix(hidden, dim), Vector(hidden, 0.0), Matrix(dim, hidden), Vector(dim, 0.0)};
}

void MappingNet::validate() const {
  const auto d = dim();
  const auto h = hidden();
  if (d == 0 || h == 0 || b1.size() != h || w2.rows() != d || w2.cols() != h || b2.size() != d) {
    throw ValidationError("mapping net shapes are inconsistent");
  }
  if (!all_finite(w1.values()) || !all_finite(b1) || !all_finite(w2.values()) ||
      !all_finite(b2)) {
    throw ValidationError("mapping net contains non-finite parameters");
  }
}

MappingNet init_mapping_net(std::size_t dim, std::size_t hidden, std::uint64_t seed) {
  if (dim == 0 || hidden == 0) throw ValidationError("mapping net needs positive dimensions");
  auto net = MappingNet::zeros(dim, hidden);
  Rng rng(seed);
  const double std1 = 1.0 / std::sqrt(static_cast<double>(dim));
  const double std2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  for (auto& x : net.w1.values()) x = rng.normal(0.0, std1);
  for (auto& x : net.w2.values()) x = rng.normal(0.0, std2);
  return net;
}

namespace {

void check_input(const MappingNet& net, std::span<const double> u) {
  if (u.size() != net.dim()) {
    throw ValidationError("mapping input has dimension " + std::to_string(u.size()) +
                          ", expected " + std::to_string(net.dim()));
  }
}

Vector hidden_activation(const MappingNet& net, std::span<const double> u) {
  Vector a(net.hidden());
  for (std::size_t j = 0; j < a.size(); ++j) a[j] = std::tanh(dot(net.w1.row(j), u) + net.b1[j]);
  return a;
}

Vector output_layer(const MappingNet& net, const Vector& a) {
  Vector out(net.dim());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = dot(net.w2.row(c), a) + net.b2[c];
  return out;
}

}  // namespace

Vector forward(const MappingNet& net, std::span<const double> u) {
  check_input(net, u);
  return output_layer(net, hidden_activation(net, u));
}

MappingGradients MappingGradients::zeros_like(const MappingNet& net) {
  return {Matrix(net.hidden(), net.dim()), Vector(net.hidden(), 0.0),
          Matrix(net.dim(), net.hidden()), Vector(net.dim(), 0.0), Vector(net.dim(), 0.0)};
}

Vector accumulate_backward(const MappingNet& net, std::span<const double> u,
                           std::span<const double> upstream, MappingGradients& accum) {
  check_input(net, u);
  if (upstream.size() != net.dim()) throw ValidationError("upstream gradient has wrong size");
  const auto d = net.dim();
  const auto h = net.hidden();
  const Vector a = hidden_activation(net, u);

  Vector grad_hidden(h, 0.0);
  for (std::size_t c = 0; c < d; ++c) {
    accum.b2[c] += upstream[c];
    axpy(upstream[c], a, accum.w2.row(c));
    axpy(upstream[c], net.w2.row(c), grad_hidden);
  }
  Vector grad_input(d, 0.0);
  for (std::size_t j = 0; j < h; ++j) {
    const double g = grad_hidden[j] * (1.0 - a[j] * a[j]);
    accum.b1[j] += g;
    axpy(g, u, accum.w1.row(j));
    axpy(g, net.w1.row(j), grad_input);
  }
  return grad_input;
}

MappingGradients mapping_backward(const MappingNet& net, std::span<const double> u,
                                  std::span<const double> upstream) {
  auto grads = MappingGradients::zeros_like(net);
  grads.input = accumulate_backward(net, u, upstream, grads);
  return grads;
}

AffineMap::AffineMap(Matrix a, Vector b) : a_(std::move(a)), b_(std::move(b)) {
  if (a_.rows() != b_.size()) throw ValidationError("affine map shapes are inconsistent");
}

AffineMap AffineMap::identity(std::size_t dim) {
  Matrix a(dim, dim);
  for (std::size_t i = 0; i < dim; ++i) a(i, i) = 1.0;
  return AffineMap(std::move(a), Vector(dim, 0.0));
}

Vector AffineMap::apply(std::span<const double> u) const {
  if (u.size() != a_.cols()) throw ValidationError("affine map input has wrong size");
  Vector out(a_.rows());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = dot(a_.row(r), u) + b_[r];
  return out;
}

Vector AffineMap::pullback(std::span<const double>, std::span<const double> upstream) const {
  Vector out(a_.cols(), 0.0);
  for (std::size_t r = 0; r < a_.rows(); ++r) axpy(upstream[r], a_.row(r), out);
  return out;
}

void ScdrTrainConfig::validate() const {
  base.validate();
  perturb.validate();
  if (hidden == 0) throw ValidationError("hidden width must be positive");
}

namespace {

// Loss of a mapped embedding against what supervises it, with the unscaled
// derivative with respect to that embedding.
double output_objective(Supervision supervision, std::span<const double> mapped,
                        std::span<const double> target_embedding,
                        std::span<const RatedItem> items, Vector* grad) {
  double loss = 0.0;
  if (grad) grad->assign(mapped.size(), 0.0);
  if (supervision == Supervision::embedding) {
    for (std::size_t c = 0; c < mapped.size(); ++c) {
      const double diff = mapped[c] - target_embedding[c];
      loss += diff * diff;
      if (grad) (*grad)[c] = 2.0 * diff;
    }
    return loss;
  }
  for (const auto& it : items) {
    const double residual = it.rating - dot(mapped, it.item);
    loss += residual * residual;
    if (grad) axpy(-2.0 * residual, it.item, *grad);
  }
  return loss;
}

// PGD objective for one user over a 1 x d point.
BatchObjective user_objective(const UserMap& map, Supervision supervision,
                              std::span<const double> target_embedding,
                              std::span<const RatedItem> items, PerturbSpace space) {
  return [&map, supervision, target_embedding, items, space](const Matrix& p, Matrix* g) {
    const auto point = p.row(0);
    Vector dmapped;
    const Vector mapped = space == PerturbSpace::input ? map.apply(point)
                                                      : Vector(point.begin(), point.end());
    const double loss =
        output_objective(supervision, mapped, target_embedding, items, g ? &dmapped : nullptr);
    if (g) {
      *g = Matrix(1, p.cols());
      const Vector back = space == PerturbSpace::input ? map.pullback(point, dmapped) : dmapped;
      std::copy(back.begin(), back.end(), g->row(0).begin());
    }
    return loss;
  };
}

void sgd_update(MappingNet& net, const MappingGradients& grads, double lr) {
  axpy(-lr, grads.w1.values(), net.w1.values());
  axpy(-lr, grads.b1, net.b1);
  axpy(-lr, grads.w2.values(), net.w2.values());
  axpy(-lr, grads.b2, net.b2);
}

bool gradients_finite(const MappingGradients& g) {
  return all_finite(g.w1.values()) && all_finite(g.b1) && all_finite(g.w2.values()) &&
         all_finite(g.b2);
}

[[noreturn]] void diverged(std::size_t epoch, double lr) {
  throw DivergenceError("mapping training diverged in epoch " + std::to_string(epoch) +
                        " at learning rate " + std::to_string(lr));
}

void check_models(const CdrScenario& scenario, const FactorModel& source,
                  const FactorModel& target) {
  if (source.dim() != target.dim()) {
    throw ValidationError("source and target factor models differ in dimension");
  }
  if (source.users.rows() != scenario.source.num_users() ||
      target.items.rows() != scenario.target.num_items()) {
    throw ValidationError("factor models do not match the scenario's domains");
  }
  if (scenario.train.empty()) throw ValidationError("mapping-train split is empty");
}

Matrix gather_train_rows(const FactorModel& model, const std::vector<UserPair>& train,
                         bool source_side) {
  Matrix out(train.size(), model.dim());
  for (std::size_t i = 0; i < train.size(); ++i) {
    const auto row = model.users.row(source_side ? train[i].source_user : train[i].target_user);
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

std::vector<std::size_t> identity_order(std::size_t n) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  return order;
}

}  // namespace

double rating_loss(const UserMap& map, std::span<const double> u,
                   std::span<const RatedItem> items) {
  return output_objective(Supervision::ratings, map.apply(u), {}, items, nullptr);
}

double scdr_loss(const MappingNet& net, std::span<const double> u_src,
                 std::span<const RatedItem> items, const PerturbConfig& perturb,
                 PerturbSpace space) {
  if (items.empty()) throw ValidationError("scdr_loss needs at least one rated item");
  check_input(net, u_src);
  const NetMap map(net);
  if (space == PerturbSpace::input) {
    return find_delta(user_objective(map, Supervision::ratings, {}, items, space), u_src, perturb)
        .achieved_loss;
  }
  const Vector mapped = forward(net, u_src);
  return find_delta(user_objective(map, Supervision::ratings, {}, items, space), mapped, perturb)
      .achieved_loss;
}

FactorModel MappingTrainResult::apply_to(const FactorModel& source) const {
  FactorModel out = source;
  for (std::size_t i = 0; i < tuned_users.size(); ++i) {
    const auto row = tuned_embeddings.row(i);
    std::copy(row.begin(), row.end(), out.users.row(tuned_users[i]).begin());
  }
  return out;
}

MappingTrainResult emcdr_train(const CdrScenario& scenario, const FactorModel& source,
                               const FactorModel& target, const TrainConfig& config,
                               std::size_t hidden) {
  config.validate();
  check_models(scenario, source, target);
  const auto d = source.dim();
  const auto n = scenario.train.size();
  const Matrix inputs = gather_train_rows(source, scenario.train, true);
  const Matrix targets = gather_train_rows(target, scenario.train, false);

  MappingTrainResult out{init_mapping_net(d, hidden, Rng::derive(config.seed, 21)), {}, {}, {}};
  auto& net = out.net;
  auto order = identity_order(n);
  Rng shuffle_rng(Rng::derive(config.seed, 22));

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += config.batch_size) {
      const auto stop = std::min(n, start + config.batch_size);
      const double scale = 1.0 / static_cast<double>((stop - start) * d);
      auto grads = MappingGradients::zeros_like(net);
      double loss = 0.0;
      Vector dmapped;
      for (std::size_t b = start; b < stop; ++b) {
        const auto u = inputs.row(order[b]);
        const Vector mapped = forward(net, u);
        loss += output_objective(Supervision::embedding, mapped, targets.row(order[b]), {},
                                 &dmapped);
        for (auto& g : dmapped) g *= scale;
        accumulate_backward(net, u, dmapped, grads);
      }
      if (!std::isfinite(loss) || !gradients_finite(grads)) diverged(epoch, config.learning_rate);
      sgd_update(net, grads, config.learning_rate);
      epoch_loss += loss;
    }
    out.loss_trace.push_back(epoch_loss / static_cast<double>(n * d));
  }
  return out;
}

MappingTrainResult scdr_train(const CdrScenario& scenario, const FactorModel& source,
                              const FactorModel& target, const ScdrTrainConfig& config) {
  config.validate();
  check_models(scenario, source, target);
  const auto& base = config.base;
  const auto d = source.dim();
  const auto n = scenario.train.size();

  Matrix embeddings = gather_train_rows(source, scenario.train, true);
  Matrix targets;
  std::vector<std::vector<RatedItem>> rated(n);
  if (config.supervision == Supervision::embedding) {
    targets = gather_train_rows(target, scenario.train, false);
  } else {
    const auto interactions = scenario.train_interactions();
    for (std::size_t i = 0; i < n; ++i) {
      for (const auto& x : interactions[i]) {
        rated[i].push_back({target.items.row(x.item), x.rating});
      }
    }
  }

  MappingTrainResult out{init_mapping_net(d, config.hidden, Rng::derive(base.seed, 21)), {}, {},
                         {}};
  auto& net = out.net;
  const NetMap map(net);
  auto order = identity_order(n);
  Rng shuffle_rng(Rng::derive(base.seed, 22));
  std::size_t total_terms = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total_terms += config.supervision == Supervision::embedding ? d : rated[i].size();
  }
  if (total_terms == 0) throw ValidationError("mapping-train users have no target ratings");

  Matrix input_grads(n, d);
  for (std::size_t epoch = 0; epoch < base.epochs; ++epoch) {
    shuffle_rng.shuffle(std::span<std::size_t>(order));
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += base.batch_size) {
      const auto stop = std::min(n, start + base.batch_size);
      std::size_t terms = 0;
      for (std::size_t b = start; b < stop; ++b) {
        terms += config.supervision == Supervision::embedding ? d : rated[order[b]].size();
      }
      if (terms == 0) continue;
      const double scale = 1.0 / static_cast<double>(terms);

      auto grads = MappingGradients::zeros_like(net);
      double loss = 0.0;
      Vector dmapped;
      for (std::size_t b = start; b < stop; ++b) {
        const auto i = order[b];
        const auto u = embeddings.row(i);
        const auto tgt = config.supervision == Supervision::embedding
                             ? targets.row(i)
                             : std::span<const double>{};
        const auto objective = user_objective(map, config.supervision, tgt, rated[i], config.space);

        Vector input(u.begin(), u.end());
        Vector mapped;
        if (config.space == PerturbSpace::input) {
          const auto best = find_delta(objective, u, config.perturb).point;
          input.assign(best.row(0).begin(), best.row(0).end());
          mapped = forward(net, input);
        } else {
          const auto best = find_delta(objective, forward(net, u), config.perturb).point;
          mapped.assign(best.row(0).begin(), best.row(0).end());
        }

        loss += output_objective(config.supervision, mapped, tgt, rated[i], &dmapped);
        for (auto& g : dmapped) g *= scale;
        const Vector du = accumulate_backward(net, input, dmapped, grads);
        std::copy(du.begin(), du.end(), input_grads.row(i).begin());
      }
      if (!std::isfinite(loss) || !gradients_finite(grads) ||
          !all_finite(input_grads.values())) {
        diverged(epoch, base.learning_rate);
      }
      sgd_update(net, grads, base.learning_rate);
      if (config.tune_source_embeddings) {
        for (std::size_t b = start; b < stop; ++b) {
          axpy(-base.learning_rate, input_grads.row(order[b]), embeddings.row(order[b]));
        }
      }
      epoch_loss += loss;
    }
    out.loss_trace.push_back(epoch_loss / static_cast<double>(total_terms));
  }

  if (config.tune_source_embeddings) {
    for (const auto& p : scenario.train) out.tuned_users.push_back(p.source_user);
    out.tuned_embeddings = std::move(embeddings);
  }
  return out;
}

Vector infer_cold_start(const MappingNet& net, const FactorModel& source, std::size_t user) {
  if (user >= source.users.rows()) {
    throw ValidationError("unknown source user index " + std::to_string(user));
  }
  return forward(net, source.users.row(user));
}

}  // namespace scdr
