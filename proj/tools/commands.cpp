#include "commands.hpp"

#include <algorithm>

#include "scdr/analysis.hpp"
#include "scdr/error.hpp"
#include "scdr/io.hpp"

namespace scdr::cli {

namespace fs = std::filesystem;

namespace {

void check_method(const std::string& method) {
  if (method != "emcdr" && method != "scdr" && method != "scdr_minus") {
    throw ValidationError("--method must be emcdr, scdr or scdr_minus (got '" + method + "')");
  }
}

void check_mode(const std::string& mode) {
  if (mode != "plain" && mode != "sharpness_aware") {
    throw ValidationError("--mode must be plain or sharpness_aware (got '" + mode + "')");
  }
}

// The scdr method maps between sharpness-aware embeddings; the baselines use
// plain ones.
std::string factor_prefix(const std::string& method) {
  return method == "scdr" ? "smf" : "mf";
}

std::string relative_to(const fs::path& dir, const fs::path& file) {
  const auto base = fs::absolute(dir).lexically_normal();
  return fs::absolute(file).lexically_normal().lexically_relative(base).generic_string();
}

CdrScenario load_manifest_scenario(const RunConfig& config) {
  const auto path = config.resolve(config.manifest);
  const auto manifest = io::manifest_from_json(io::read_file(path));
  return io::load_scenario(manifest, path.parent_path());
}

struct Pretrained {
  FactorModel source;
  FactorModel target;
};

Pretrained load_factors(const RunConfig& config, const CdrScenario& scenario,
                        const std::string& method) {
  const auto prefix = factor_prefix(method);
  Pretrained out{
      io::factor_checkpoint_from_json(io::read_file(config.resolve(prefix + "_source.json"))).model,
      io::factor_checkpoint_from_json(io::read_file(config.resolve(prefix + "_target.json"))).model};
  if (out.source.dim() != out.target.dim()) {
    throw ValidationError("checkpoint mismatch: source d=" + std::to_string(out.source.dim()) +
                          " but target d=" + std::to_string(out.target.dim()));
  }
  if (out.source.users.rows() != scenario.source.num_users() ||
      out.source.items.rows() != scenario.source.num_items() ||
      out.target.users.rows() != scenario.target.num_users() ||
      out.target.items.rows() != scenario.target.num_items()) {
    throw ValidationError("factor checkpoints do not match the scenario in the manifest");
  }
  return out;
}

// Checkpoints plus the trained mapping, with tuned source rows written back.
struct Trained {
  CdrScenario scenario;
  Pretrained factors;
  MappingNet net;
};

Trained load_trained(const RunConfig& config, const CommandOptions& options) {
  check_method(options.method);
  auto scenario = load_manifest_scenario(config);
  auto factors = load_factors(config, scenario, options.method);
  auto mapping = io::mapping_checkpoint_from_json(
      io::read_file(config.resolve("mapping_" + options.method + ".json")));
  if (mapping.net.dim() != factors.source.dim()) {
    throw ValidationError("mapping checkpoint mismatch: net d=" +
                          std::to_string(mapping.net.dim()) + " but factor d=" +
                          std::to_string(factors.source.dim()));
  }
  for (std::size_t i = 0; i < mapping.tuned_users.size(); ++i) {
    const auto user = mapping.tuned_users[i];
    if (user >= factors.source.users.rows()) {
      throw ValidationError("mapping checkpoint tunes an unknown source user");
    }
    const auto row = mapping.tuned_embeddings.row(i);
    std::copy(row.begin(), row.end(), factors.source.users.row(user).begin());
  }
  return {std::move(scenario), std::move(factors), std::move(mapping.net)};
}

}  // namespace

std::vector<OutputFile> cmd_synth(const RunConfig& config) {
  config.synth.validate();
  const auto syn = generate_synthetic(config.synth);
  const auto source = config.resolve("source.csv");
  const auto target = config.resolve("target.csv");
  const auto manifest_path = config.resolve(config.manifest);
  const auto dir = manifest_path.parent_path();
  const auto manifest = io::make_manifest(syn.scenario, relative_to(dir, source),
                                          relative_to(dir, target));
  return {{source, format_ratings(syn.scenario.source)},
          {target, format_ratings(syn.scenario.target)},
          {config.resolve("truth.json"), io::to_json(syn.truth)},
          {manifest_path, io::to_json(manifest)}};
}

std::vector<OutputFile> cmd_pretrain(const RunConfig& config, const CommandOptions& options) {
  check_mode(options.mode);
  config.validate();
  std::vector<OutputFile> outputs;

  const auto manifest_path = config.resolve(config.manifest);
  CdrScenario scenario = [&] {
    if (fs::exists(manifest_path) || config.source_ratings.empty() ||
        config.target_ratings.empty()) {
      return load_manifest_scenario(config);
    }
    auto sc = build_scenario(ingest_domain(config.source_ratings, config.rating_format),
                             ingest_domain(config.target_ratings, config.rating_format),
                             config.beta, config.seed);
    const auto dir = manifest_path.parent_path();
    const auto manifest = io::make_manifest(sc, relative_to(dir, config.source_ratings),
                                            relative_to(dir, config.target_ratings),
                                            config.rating_format);
    outputs.push_back({manifest_path, io::to_json(manifest)});
    return sc;
  }();

  const bool sharp = options.mode == "sharpness_aware";
  const std::string prefix = sharp ? "smf" : "mf";
  auto fit = [&](const DomainDataset& data) {
    return sharp ? train_smf(data, config.dim, config.pretrain, config.pretrain_perturb)
                 : train_mf(data, config.dim, config.pretrain);
  };
  // Test users' target ratings are withheld from pretraining.
  const std::pair<const char*, DomainDataset> domains[] = {
      {"source", scenario.source}, {"target", scenario.target_training_view()}};
  for (const auto& [name, data] : domains) {
    const auto result = fit(data);
    io::FactorCheckpoint checkpoint;
    checkpoint.model = result.model;
    checkpoint.config = config.pretrain;
    checkpoint.mode = options.mode;
    if (sharp) checkpoint.perturb = config.pretrain_perturb;
    const std::string stem = prefix + "_" + name;
    outputs.push_back({config.resolve(stem + ".json"), io::to_json(checkpoint)});
    outputs.push_back({config.resolve(stem + "_trace.csv"), io::trace_to_csv(result.loss_trace)});
  }
  return outputs;
}

std::vector<OutputFile> cmd_train(const RunConfig& config, const CommandOptions& options) {
  check_method(options.method);
  config.validate();
  const auto scenario = load_manifest_scenario(config);
  const auto factors = load_factors(config, scenario, options.method);

  MappingTrainResult result;
  io::MappingCheckpoint checkpoint;
  if (options.method == "emcdr") {
    result = emcdr_train(scenario, factors.source, factors.target, config.train, config.hidden);
  } else {
    ScdrTrainConfig sc;
    sc.base = config.train;
    sc.perturb = config.train_perturb;
    sc.tune_source_embeddings = config.tune_source_embeddings;
    sc.supervision = config.supervision;
    sc.space = config.space;
    sc.hidden = config.hidden;
    result = scdr_train(scenario, factors.source, factors.target, sc);
    checkpoint.perturb = config.train_perturb;
  }
  checkpoint.net = result.net;
  checkpoint.method = options.method;
  checkpoint.config = config.train;
  checkpoint.tuned_users = result.tuned_users;
  checkpoint.tuned_embeddings = result.tuned_embeddings;
  const std::string stem = "mapping_" + options.method;
  return {{config.resolve(stem + ".json"), io::to_json(checkpoint)},
          {config.resolve(stem + "_trace.csv"), io::trace_to_csv(result.loss_trace)}};
}

std::vector<OutputFile> cmd_eval(const RunConfig& config, const CommandOptions& options) {
  const auto t = load_trained(config, options);
  const auto report = evaluate(t.net, t.factors.source, t.factors.target, t.scenario);
  return {{config.resolve("eval_" + options.method + ".json"), io::to_json(report, options.method)}};
}

std::vector<OutputFile> cmd_attack(const RunConfig& config, const CommandOptions& options) {
  const auto t = load_trained(config, options);
  const auto sweep =
      fgsm_sweep(t.net, t.factors.source, t.factors.target, t.scenario, config.epsilons);
  return {{config.resolve("attack_" + options.method + ".json"), io::to_json(sweep, options.method)}};
}

std::vector<OutputFile> cmd_landscape(const RunConfig& config, const CommandOptions& options) {
  config.landscape.validate();
  const auto t = load_trained(config, options);
  const auto grid =
      landscape_grid(t.net, t.factors.source, t.factors.target, t.scenario, config.landscape);
  return {{config.resolve("landscape_" + options.method + ".csv"), io::to_csv(grid)}};
}

std::vector<OutputFile> cmd_sharpness(const RunConfig& config, const CommandOptions& options) {
  config.sharpness.validate();
  const auto t = load_trained(config, options);
  const auto report = lipschitz_estimate(t.net, t.factors.source, t.factors.target, t.scenario,
                                         config.sharpness, config.sharpness_output);
  return {{config.resolve("sharpness_" + options.method + ".json"),
           io::to_json(report, options.method)}};
}

void commit(const std::vector<OutputFile>& outputs, bool force) {
  if (!force) {
    for (const auto& f : outputs) {
      if (fs::exists(f.path)) {
        throw ValidationError(f.path.string() + " already exists; pass --force to overwrite");
      }
    }
  }
  for (const auto& f : outputs) {
    const auto dir = f.path.parent_path();
    if (!dir.empty()) {
      std::error_code ec;
      fs::create_directories(dir, ec);
      if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
    }
  }
  for (const auto& f : outputs) io::write_file(f.path, f.contents, force);
}

}  // namespace scdr::cli
