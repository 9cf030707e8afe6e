#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scdr/analysis.hpp"
#include "scdr/data.hpp"
#include "scdr/factorization.hpp"
#include "scdr/format.hpp"
#include "scdr/mapping.hpp"
#include "scdr/perturbation.hpp"

namespace scdr::io {

inline constexpr int kFormatVersion = 1;

/// Pretrained factor model plus the settings that produced it.
struct FactorCheckpoint {
  FactorModel model;
  TrainConfig config;
  /// "plain" or "sharpness_aware".
  std::string mode = "plain";
  PerturbConfig perturb;
};

std::string to_json(const FactorCheckpoint& checkpoint);
FactorCheckpoint factor_checkpoint_from_json(const std::string& text);

/// Trained mapping plus tuned source embeddings (empty for emcdr).
struct MappingCheckpoint {
  MappingNet net;
  std::string method;
  TrainConfig config;
  PerturbConfig perturb;
  std::vector<std::size_t> tuned_users;
  Matrix tuned_embeddings;
};

std::string to_json(const MappingCheckpoint& checkpoint);
MappingCheckpoint mapping_checkpoint_from_json(const std::string& text);

/// The reproducibility record of a scenario: its files, split parameters and
/// split membership by user token.
struct ScenarioManifest {
  std::string source_path;
  std::string target_path;
  RatingFormat format;
  double beta = 0.0;
  std::uint64_t seed = 0;
  std::vector<std::string> overlap;
  std::vector<std::string> train;
  std::vector<std::string> test;
};

ScenarioManifest make_manifest(const CdrScenario& scenario, std::string source_path,
                               std::string target_path, RatingFormat format = {});
std::string to_json(const ScenarioManifest& manifest);
ScenarioManifest manifest_from_json(const std::string& text);

/// Loads both rating files (relative paths resolve against `base_dir`) and
/// restores the recorded split.
CdrScenario load_scenario(const ScenarioManifest& manifest,
                          const std::filesystem::path& base_dir);

std::string to_json(const SyntheticTruth& truth);
SyntheticTruth truth_from_json(const std::string& text);

std::string to_json(const EvalReport& report, const std::string& method);
std::string to_json(const std::vector<AttackPoint>& sweep, const std::string& method);
std::string to_json(const SharpnessReport& report, const std::string& method);

/// Header "zeta,gamma,loss", one row per cell, zeta-major.
std::string to_csv(const LandscapeGrid& grid);

/// "epoch,loss" rows.
std::string trace_to_csv(const std::vector<double>& trace);

std::string read_file(const std::filesystem::path& path);

/// Writes atomically via a temporary sibling. Refuses to replace an existing
/// file unless `overwrite`.
void write_file(const std::filesystem::path& path, const std::string& contents,
                bool overwrite);

}  // namespace scdr::io
