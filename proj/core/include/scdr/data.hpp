#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "scdr/linalg.hpp"

namespace scdr {

/// One observed (user, item, rating) interaction as read from a file.
struct RatingTriple {
  std::string user;
  std::string item;
  double rating = 0.0;
};

/// A dense-indexed interaction. `user` and `item` index into the owning
/// DomainDataset's token lists.
struct Interaction {
  std::size_t user = 0;
  std::size_t item = 0;
  double rating = 0.0;

  bool operator==(const Interaction&) const = default;
};

/// Users, items and observed ratings of one recommendation domain.
///
/// Indices are dense and assigned in first-appearance order. Values are
/// immutable after construction.
class DomainDataset {
 public:
  /// Builds a dataset from raw triples. Repeated (user, item) pairs keep the
  /// position of their first appearance and the rating of their last.
  static DomainDataset from_triples(std::span<const RatingTriple> triples);

  /// Builds a dataset over an explicit index space. Every interaction must
  /// reference valid indices and (user, item) pairs must be unique.
  DomainDataset(std::vector<std::string> users, std::vector<std::string> items,
                std::vector<Interaction> interactions);

  std::size_t num_users() const noexcept { return users_.size(); }
  std::size_t num_items() const noexcept { return items_.size(); }
  std::size_t num_interactions() const noexcept { return interactions_.size(); }

  const std::vector<std::string>& user_tokens() const noexcept { return users_; }
  const std::vector<std::string>& item_tokens() const noexcept { return items_; }
  std::span<const Interaction> interactions() const noexcept { return interactions_; }

  std::optional<std::size_t> find_user(const std::string& token) const;
  std::optional<std::size_t> find_item(const std::string& token) const;

  /// Number of duplicate rows collapsed while building from triples.
  std::size_t duplicate_count() const noexcept { return duplicate_count_; }

  /// Interaction positions grouped by user index.
  std::vector<std::vector<std::size_t>> interactions_by_user() const;

  /// Same index space with only the interactions for which `keep` is true.
  template <typename Pred>
  DomainDataset filtered(Pred keep) const {
    std::vector<Interaction> kept;
    kept.reserve(interactions_.size());
    for (const auto& x : interactions_) {
      if (keep(x)) kept.push_back(x);
    }
    DomainDataset out = *this;
    out.interactions_ = std::move(kept);
    out.duplicate_count_ = 0;
    return out;
  }

 private:
  DomainDataset() = default;
  void build_lookup();

  std::vector<std::string> users_;
  std::vector<std::string> items_;
  std::vector<Interaction> interactions_;
  std::unordered_map<std::string, std::size_t> user_lookup_;
  std::unordered_map<std::string, std::size_t> item_lookup_;
  std::size_t duplicate_count_ = 0;
};

/// Delimited text layout of a rating file: columns user, item, rating.
struct RatingFormat {
  char delimiter = ',';
  bool has_header = false;
};

/// Reads a rating file. Throws IoError, MalformedRowError (1-based data row),
/// or ValidationError for an empty file.
DomainDataset ingest_domain(const std::filesystem::path& path, RatingFormat format = {});

/// Parses rating text already in memory (same rules as ingest_domain).
DomainDataset parse_ratings(const std::string& text, RatingFormat format = {});

/// Delimited text of `dataset` in interaction order, no header.
std::string format_ratings(const DomainDataset& dataset, RatingFormat format = {});

/// Writes `dataset` as delimited text in interaction order, no header.
void write_ratings(const std::filesystem::path& path, const DomainDataset& dataset,
                   RatingFormat format = {});

/// An overlapping user: the same token seen in both domains.
struct UserPair {
  std::size_t source_user = 0;
  std::size_t target_user = 0;

  bool operator==(const UserPair&) const = default;
};

/// Two domains with their overlapping users split into mapping-train and
/// cold-start test sets.
struct CdrScenario {
  DomainDataset source;
  DomainDataset target;
  /// All overlapping users in source index order.
  std::vector<UserPair> overlap;
  /// Disjoint partition of `overlap`, each in source index order.
  std::vector<UserPair> train;
  std::vector<UserPair> test;
  double beta = 0.0;
  std::uint64_t seed = 0;

  /// The target domain with every interaction of a test user removed. This is
  /// the only target data that training code should see.
  DomainDataset target_training_view() const;

  /// Withheld target interactions of each test user, parallel to `test`.
  std::vector<std::vector<Interaction>> test_interactions() const;

  /// Target interactions of each train user, parallel to `train`.
  std::vector<std::vector<Interaction>> train_interactions() const;
};

/// Number of cold-start test users drawn from `overlap_size` overlapping users.
std::size_t cold_start_count(std::size_t overlap_size, double beta);

/// Matches users by token, checks the item sets are disjoint, and makes a
/// seeded uniform split assigning ceil(beta * |overlap|) users to test.
CdrScenario build_scenario(DomainDataset source, DomainDataset target, double beta,
                           std::uint64_t seed);

/// Rebuilds a scenario from explicit test membership (by source user token),
/// as recorded in a manifest.
CdrScenario scenario_from_split(DomainDataset source, DomainDataset target,
                                const std::vector<std::string>& test_tokens, double beta,
                                std::uint64_t seed);

/// Source-to-target latent transform of a synthetic scenario. `identity`
/// copies overlap users' latents unchanged.
enum class MapKind { linear, tanh, identity };

const char* map_kind_name(MapKind kind) noexcept;
/// Throws ValidationError for an unknown name.
MapKind parse_map_kind(const std::string& name);

/// Parameters of a planted two-domain problem.
struct SyntheticSpec {
  std::size_t source_users = 2000;
  std::size_t target_users = 2000;
  std::size_t source_items = 500;
  std::size_t target_items = 500;
  /// Fraction of min(source_users, target_users) present in both domains.
  double overlap_ratio = 0.05;
  std::size_t dim = 10;
  double noise = 0.1;
  MapKind map = MapKind::linear;
  /// Probability that a given user-item pair is observed.
  double density = 0.05;
  /// Per-coordinate latent mean; non-positive selects sqrt(3 / dim), which
  /// centers ratings at 3.
  double latent_mean = 0.0;
  double latent_std = 0.3;
  double beta = 0.8;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t overlap_count() const;
  double resolved_latent_mean() const;
};

/// Planted latent factors, rows in dataset index order.
struct SyntheticTruth {
  Matrix source_users;
  Matrix source_items;
  Matrix target_users;
  Matrix target_items;
  /// Orthogonal d x d matrix of the source-to-target transform.
  Matrix transform;
  MapKind map = MapKind::linear;
  double latent_mean = 0.0;
  double latent_std = 0.0;
};

struct SyntheticScenario {
  CdrScenario scenario;
  SyntheticTruth truth;
};

/// Applies the planted source-to-target latent transform to one vector.
Vector apply_planted_map(const SyntheticTruth& truth, std::span<const double> source);

SyntheticScenario generate_synthetic(const SyntheticSpec& spec);

}  // namespace scdr
