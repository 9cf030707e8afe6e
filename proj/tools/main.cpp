#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI/CLI.hpp>

#include "commands.hpp"
#include "scdr/error.hpp"
#include "scdr/io.hpp"

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitDivergence = 3;
constexpr int kExitMissingInput = 4;

struct Flags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  scdr::cli::CommandOptions options;
};

using Command = std::function<std::vector<scdr::cli::OutputFile>(
    const scdr::cli::RunConfig&, const scdr::cli::CommandOptions&)>;

int run(const std::string& name, const Command& command, const Flags& flags) {
  using namespace scdr;
  try {
    cli::RunConfig config;
    if (!flags.config_path.empty()) cli::merge_config(config, io::read_file(flags.config_path));
    if (flags.seed) config.seed = *flags.seed;
    if (flags.out) config.out = *flags.out;
    config.apply_seed();
    const auto outputs = command(config, flags.options);
    cli::commit(outputs, flags.options.force);
    for (const auto& f : outputs) std::cout << f.path.string() << '\n';
    return 0;
  } catch (const DivergenceError& e) {
    std::cerr << "scdr " << name << ": diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const IoError& e) {
    std::cerr << "scdr " << name << ": missing input: " << e.what() << '\n';
    return kExitMissingInput;
  } catch (const ValidationError& e) {
    std::cerr << "scdr " << name << ": invalid: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "scdr " << name << ": " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  namespace cli = scdr::cli;
  CLI::App app{"Sharpness-aware cross-domain recommendation experiments"};
  app.require_subcommand(1);

  Flags flags;
  const std::map<std::string, std::pair<std::string, Command>> commands{
      {"synth", {"Generate a planted two-domain scenario",
                 [](const cli::RunConfig& c, const cli::CommandOptions&) { return cli::cmd_synth(c); }}},
      {"pretrain", {"Fit source and target factor models", cli::cmd_pretrain}},
      {"train", {"Train the cross-domain mapping", cli::cmd_train}},
      {"eval", {"Cold-start MAE / RMSE on the test users", cli::cmd_eval}},
      {"attack", {"FGSM sweep over the configured epsilons", cli::cmd_attack}},
      {"landscape", {"2-D loss landscape grid", cli::cmd_landscape}},
      {"sharpness", {"Lipschitz sharpness estimate", cli::cmd_sharpness}},
  };

  std::string chosen;
  for (const auto& [name, entry] : commands) {
    auto* sub = app.add_subcommand(name, entry.first);
    sub->add_option("--config", flags.config_path, "JSON config file");
    sub->add_option("--seed", flags.seed, "Global seed");
    sub->add_option("--out", flags.out, "Output directory");
    sub->add_option("--method", flags.options.method, "emcdr | scdr | scdr_minus")
        ->capture_default_str();
    sub->add_option("--mode", flags.options.mode, "plain | sharpness_aware")
        ->capture_default_str();
    sub->add_flag("--force", flags.options.force, "Overwrite existing outputs");
    sub->callback([&chosen, n = name] { chosen = n; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitValidation;
  }
  return run(chosen, commands.at(chosen).second, flags);
}
