#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "run_config.hpp"

namespace scdr::cli {

struct CommandOptions {
  /// emcdr, scdr or scdr_minus.
  std::string method = "scdr";
  /// plain or sharpness_aware.
  std::string mode = "sharpness_aware";
  bool force = false;
};

struct OutputFile {
  std::filesystem::path path;
  std::string contents;
};

/// Every command computes its complete output set in memory first; nothing is
/// written until `commit`.
std::vector<OutputFile> cmd_synth(const RunConfig& config);
std::vector<OutputFile> cmd_pretrain(const RunConfig& config, const CommandOptions& options);
std::vector<OutputFile> cmd_train(const RunConfig& config, const CommandOptions& options);
std::vector<OutputFile> cmd_eval(const RunConfig& config, const CommandOptions& options);
std::vector<OutputFile> cmd_attack(const RunConfig& config, const CommandOptions& options);
std::vector<OutputFile> cmd_landscape(const RunConfig& config, const CommandOptions& options);
std::vector<OutputFile> cmd_sharpness(const RunConfig& config, const CommandOptions& options);

/// Refuses the whole set if any target exists and `force` is off, then writes.
void commit(const std::vector<OutputFile>& outputs, bool force);

}  // namespace scdr::cli
