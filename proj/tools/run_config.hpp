#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "scdr/analysis.hpp"
#include "scdr/data.hpp"
#include "scdr/factorization.hpp"
#include "scdr/mapping.hpp"
#include "scdr/perturbation.hpp"

namespace scdr::cli {

/// Everything a command needs, merged from defaults, the config file and flags.
struct RunConfig {
  /// Seeds the generator, the split, every trainer and the landscape directions.
  std::uint64_t seed = 1;
  std::filesystem::path out = ".";

  SyntheticSpec synth;

  /// Split manifest; relative paths resolve against `out`.
  std::filesystem::path manifest = "manifest.json";
  /// When both are set and the manifest does not exist yet, pretrain splits
  /// these rating files and records the manifest.
  std::filesystem::path source_ratings;
  std::filesystem::path target_ratings;
  RatingFormat rating_format;
  double beta = 0.8;

  std::size_t dim = 10;
  TrainConfig pretrain;
  PerturbConfig pretrain_perturb{0.5, 5, 0.0};

  TrainConfig train;
  PerturbConfig train_perturb{0.5, 5, 0.0};
  std::size_t hidden = 50;
  bool tune_source_embeddings = true;
  Supervision supervision = Supervision::ratings;
  PerturbSpace space = PerturbSpace::input;

  std::vector<double> epsilons{0.0, 0.25, 0.5, 0.75, 1.0};
  LandscapeSpec landscape;
  PerturbConfig sharpness{0.5, 5, 0.0};
  LipschitzOutput sharpness_output = LipschitzOutput::rating;

  RunConfig();

  /// Writes the global seed into every nested config.
  void apply_seed();
  void validate() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
};

/// Overlays a JSON config document on `config`. Unknown sections or keys are
/// validation errors.
void merge_config(RunConfig& config, const std::string& text);

}  // namespace scdr::cli
