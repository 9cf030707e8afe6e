#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "scdr/data.hpp"
#include "scdr/factorization.hpp"
#include "scdr/linalg.hpp"
#include "scdr/perturbation.hpp"

namespace scdr {

/// Two-layer perceptron mapping source-domain user embeddings into the target
/// embedding space: W2 * tanh(W1 * u + b1) + b2.
struct MappingNet {
  Matrix w1;  // hidden x dim
  Vector b1;  // hidden
  Matrix w2;  // dim x hidden
  Vector b2;  // dim

  static MappingNet zeros(std::size_t dim, std::size_t hidden);

  std::size_t dim() const noexcept { return w1.cols(); }
  std::size_t hidden() const noexcept { return w1.rows(); }

  void validate() const;

  bool operator==(const MappingNet&) const = default;
};

/// Weights drawn from N(0, 1 / fan_in), biases zero.
MappingNet init_mapping_net(std::size_t dim, std::size_t hidden, std::uint64_t seed);

Vector forward(const MappingNet& net, std::span<const double> u);

struct MappingGradients {
  Matrix w1;
  Vector b1;
  Matrix w2;
  Vector b2;
  Vector input;

  static MappingGradients zeros_like(const MappingNet& net);
};

/// Backpropagates `upstream` (d loss / d output) through the network at `u`.
MappingGradients mapping_backward(const MappingNet& net, std::span<const double> u,
                                  std::span<const double> upstream);

/// Accumulating form of mapping_backward: adds parameter gradients into
/// `accum` and returns the input gradient.
Vector accumulate_backward(const MappingNet& net, std::span<const double> u,
                           std::span<const double> upstream, MappingGradients& accum);

/// A differentiable map from source to target embedding space. Analysis works
/// against this interface so constructed maps can stand in for a network.
class UserMap {
 public:
  virtual ~UserMap() = default;
  virtual std::size_t dim() const = 0;
  virtual Vector apply(std::span<const double> u) const = 0;
  /// Vector-Jacobian product: d(upstream . apply(u)) / du.
  virtual Vector pullback(std::span<const double> u,
                          std::span<const double> upstream) const = 0;
};

/// Non-owning UserMap view of a MappingNet.
class NetMap final : public UserMap {
 public:
  explicit NetMap(const MappingNet& net) : net_(&net) {}
  std::size_t dim() const override { return net_->dim(); }
  Vector apply(std::span<const double> u) const override { return forward(*net_, u); }
  Vector pullback(std::span<const double> u, std::span<const double> upstream) const override {
    return mapping_backward(*net_, u, upstream).input;
  }

 private:
  const MappingNet* net_;
};

/// u -> A u + b.
class AffineMap final : public UserMap {
 public:
  AffineMap(Matrix a, Vector b);
  static AffineMap identity(std::size_t dim);
  std::size_t dim() const override { return a_.cols(); }
  Vector apply(std::span<const double> u) const override;
  Vector pullback(std::span<const double> u, std::span<const double> upstream) const override;

 private:
  Matrix a_;
  Vector b_;
};

/// One observed target-domain rating with its item embedding.
struct RatedItem {
  std::span<const double> item;
  double rating = 0.0;
};

/// Where the inner maximization places its perturbation.
enum class PerturbSpace {
  /// On the source embedding, before the mapping (default).
  input,
  /// On the mapped embedding.
  output,
};

/// What the mapping is fitted against.
enum class Supervision {
  /// Target-domain rating reconstruction through the mapped embedding.
  ratings,
  /// Mean squared distance to the pretrained target user embedding.
  embedding,
};

struct ScdrTrainConfig {
  TrainConfig base;
  PerturbConfig perturb;
  bool tune_source_embeddings = true;
  Supervision supervision = Supervision::ratings;
  PerturbSpace space = PerturbSpace::input;
  std::size_t hidden = 50;

  void validate() const;
};

/// Sum over `items` of (rating - <map(u), item>)^2.
double rating_loss(const UserMap& map, std::span<const double> u,
                   std::span<const RatedItem> items);

/// Rating loss at the PGD-approximated worst perturbation of `u_src`.
double scdr_loss(const MappingNet& net, std::span<const double> u_src,
                 std::span<const RatedItem> items, const PerturbConfig& perturb,
                 PerturbSpace space = PerturbSpace::input);

struct MappingTrainResult {
  MappingNet net;
  /// Source user indices of the mapping-train users, parallel to the rows of
  /// `tuned_embeddings`.
  std::vector<std::size_t> tuned_users;
  Matrix tuned_embeddings;
  /// Mean training objective per epoch.
  std::vector<double> loss_trace;

  /// `source` with the tuned rows written back.
  FactorModel apply_to(const FactorModel& source) const;
};

/// Fits the mapping by mean squared error against pretrained target user
/// embeddings of the mapping-train users. Embeddings stay frozen.
MappingTrainResult emcdr_train(const CdrScenario& scenario, const FactorModel& source,
                               const FactorModel& target, const TrainConfig& config,
                               std::size_t hidden = 50);

/// Sharpness-aware training of the mapping and (optionally) the train users'
/// source embeddings. Only train users' data is read from the target side.
MappingTrainResult scdr_train(const CdrScenario& scenario, const FactorModel& source,
                              const FactorModel& target, const ScdrTrainConfig& config);

/// Target-space embedding for a cold-start user from their source embedding.
Vector infer_cold_start(const MappingNet& net, const FactorModel& source, std::size_t user);

}  // namespace scdr
