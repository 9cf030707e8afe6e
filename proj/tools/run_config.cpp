#include "run_config.hpp"

#include <functional>
#include <map>

#ifdef SCDR_VENDORED_JSON
#include "json.hpp"
#else
#include <nlohmann/json.hpp>
#endif

#include "scdr/error.hpp"

namespace scdr::cli {

using nlohmann::json;

RunConfig::RunConfig() {
  pretrain.epochs = 50;
  train.epochs = 500;
  apply_seed();
}

void RunConfig::apply_seed() {
  synth.seed = seed;
  pretrain.seed = seed;
  train.seed = seed;
  landscape.seed = seed;
}

void RunConfig::validate() const {
  synth.validate();
  if (dim == 0) throw ValidationError("pretrain.dim must be positive");
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("scenario.beta must be in (0, 1)");
  pretrain.validate();
  pretrain_perturb.validate();
  train.validate();
  train_perturb.validate();
  sharpness.validate();
  landscape.validate();
  if (hidden == 0) throw ValidationError("train.hidden must be positive");
}

std::filesystem::path RunConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : out / p;
}

namespace {

using Setter = std::function<void(const json&)>;

void apply_section(const json& section, const std::string& name,
                   const std::map<std::string, Setter>& setters) {
  if (!section.is_object()) throw ValidationError("config section '" + name + "' must be an object");
  for (const auto& [key, value] : section.items()) {
    const auto it = setters.find(key);
    if (it == setters.end()) {
      throw ValidationError("unknown config key '" + name + "." + key + "'");
    }
    it->second(value);
  }
}

template <typename T>
Setter set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

Setter set_perturb(PerturbConfig& p, const std::string& name) {
  return [&p, name](const json& v) {
    apply_section(v, name, {{"rho", set(p.rho)}, {"k", set(p.k)}, {"alpha", set(p.alpha)}});
  };
}

Setter set_train(TrainConfig& c, const std::string& key) {
  std::map<std::string, Setter> m{{"learning_rate", set(c.learning_rate)},
                                  {"epochs", set(c.epochs)},
                                  {"batch_size", set(c.batch_size)},
                                  {"weight_decay", set(c.weight_decay)},
                                  {"init_std", set(c.init_std)}};
  return m.at(key);
}

}  // namespace

void merge_config(RunConfig& c, const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  try {
    std::map<std::string, Setter> synth{
        {"source_users", set(c.synth.source_users)},
        {"target_users", set(c.synth.target_users)},
        {"source_items", set(c.synth.source_items)},
        {"target_items", set(c.synth.target_items)},
        {"overlap_ratio", set(c.synth.overlap_ratio)},
        {"dim", set(c.synth.dim)},
        {"noise", set(c.synth.noise)},
        {"density", set(c.synth.density)},
        {"latent_mean", set(c.synth.latent_mean)},
        {"latent_std", set(c.synth.latent_std)},
        {"beta", set(c.synth.beta)},
        {"map", [&](const json& v) { c.synth.map = parse_map_kind(v.get<std::string>()); }}};

    std::map<std::string, Setter> scenario{
        {"manifest", [&](const json& v) { c.manifest = v.get<std::string>(); }},
        {"source", [&](const json& v) { c.source_ratings = v.get<std::string>(); }},
        {"target", [&](const json& v) { c.target_ratings = v.get<std::string>(); }},
        {"beta", set(c.beta)},
        {"header", set(c.rating_format.has_header)},
        {"delimiter", [&](const json& v) {
           const auto s = v.get<std::string>();
           if (s.size() != 1) throw ValidationError("scenario.delimiter must be one character");
           c.rating_format.delimiter = s[0];
         }}};

    std::map<std::string, Setter> pretrain{{"dim", set(c.dim)},
                                           {"perturb", set_perturb(c.pretrain_perturb, "pretrain.perturb")}};
    std::map<std::string, Setter> train{
        {"hidden", set(c.hidden)},
        {"tune_source_embeddings", set(c.tune_source_embeddings)},
        {"perturb", set_perturb(c.train_perturb, "train.perturb")},
        {"supervision", [&](const json& v) {
           const auto s = v.get<std::string>();
           if (s != "ratings" && s != "embedding") {
             throw ValidationError("train.supervision must be 'ratings' or 'embedding'");
           }
           c.supervision = s == "ratings" ? Supervision::ratings : Supervision::embedding;
         }},
        {"space", [&](const json& v) {
           const auto s = v.get<std::string>();
           if (s != "input" && s != "output") {
             throw ValidationError("train.space must be 'input' or 'output'");
           }
           c.space = s == "input" ? PerturbSpace::input : PerturbSpace::output;
         }}};
    for (const char* key : {"learning_rate", "epochs", "batch_size", "weight_decay", "init_std"}) {
      pretrain[key] = set_train(c.pretrain, key);
      train[key] = set_train(c.train, key);
    }

    std::map<std::string, Setter> attack{{"epsilons", set(c.epsilons)}};
    std::map<std::string, Setter> landscape{
        {"zeta_min", set(c.landscape.zeta_min)},
        {"zeta_max", set(c.landscape.zeta_max)},
        {"gamma_min", set(c.landscape.gamma_min)},
        {"gamma_max", set(c.landscape.gamma_max)},
        {"zeta_points", set(c.landscape.zeta_points)},
        {"gamma_points", set(c.landscape.gamma_points)},
        {"n_samples", set(c.landscape.n_samples)}};
    std::map<std::string, Setter> sharpness{
        {"rho", set(c.sharpness.rho)},
        {"k", set(c.sharpness.k)},
        {"alpha", set(c.sharpness.alpha)},
        {"output", [&](const json& v) {
           const auto s = v.get<std::string>();
           if (s != "rating" && s != "embedding") {
             throw ValidationError("sharpness.output must be 'rating' or 'embedding'");
           }
           c.sharpness_output = s == "rating" ? LipschitzOutput::rating : LipschitzOutput::embedding;
         }}};

    const std::map<std::string, Setter> top{
        {"seed", set(c.seed)},
        {"out", [&](const json& v) { c.out = v.get<std::string>(); }},
        {"synth", [&](const json& v) { apply_section(v, "synth", synth); }},
        {"scenario", [&](const json& v) { apply_section(v, "scenario", scenario); }},
        {"pretrain", [&](const json& v) { apply_section(v, "pretrain", pretrain); }},
        {"train", [&](const json& v) { apply_section(v, "train", train); }},
        {"attack", [&](const json& v) { apply_section(v, "attack", attack); }},
        {"landscape", [&](const json& v) { apply_section(v, "landscape", landscape); }},
        {"sharpness", [&](const json& v) { apply_section(v, "sharpness", sharpness); }}};
    apply_section(doc, "config", top);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config value has the wrong type: ") + e.what());
  }
  c.apply_seed();
}

}  // namespace scdr::cli
