#include "scdr/io.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#ifdef SCDR_VENDORED_JSON
#include "json.hpp"
#else
#include <nlohmann/json.hpp>
#endif

#include "scdr/error.hpp"

namespace scdr::io {

using nlohmann::json;

namespace {

json matrix_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.values().begin(), m.values().end())}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw ValidationError("matrix payload size mismatch");
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.values().begin());
  return m;
}

json train_config_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"batch_size", c.batch_size},       {"weight_decay", c.weight_decay},
          {"init_std", c.init_std},           {"seed", c.seed}};
}

TrainConfig train_config_from(const json& j) {
  TrainConfig c;
  c.learning_rate = j.at("learning_rate").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.init_std = j.at("init_std").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

json perturb_json(const PerturbConfig& p) {
  return {{"rho", p.rho}, {"k", p.k}, {"alpha", p.step_size()}};
}

PerturbConfig perturb_from(const json& j) {
  PerturbConfig p;
  p.rho = j.at("rho").get<double>();
  p.k = j.at("k").get<std::size_t>();
  p.alpha = j.at("alpha").get<double>();
  return p;
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed document: ") + e.what());
  }
}

void expect_kind(const json& j, const std::string& kind) {
  if (j.value("kind", std::string()) != kind) {
    throw ValidationError("expected a '" + kind + "' document");
  }
  if (j.value("format_version", 0) != kFormatVersion) {
    throw ValidationError("unsupported format_version in '" + kind + "' document");
  }
}

template <typename F>
auto guarded(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("invalid document: ") + e.what());
  }
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

}  // namespace

std::string to_json(const FactorCheckpoint& c) {
  json j = {{"format_version", kFormatVersion},
            {"kind", "factor_model"},
            {"dim", c.model.dim()},
            {"mode", c.mode},
            {"seed", c.config.seed},
            {"config", train_config_json(c.config)},
            {"perturb", perturb_json(c.perturb)},
            {"users", matrix_json(c.model.users)},
            {"items", matrix_json(c.model.items)}};
  return dump(j);
}

FactorCheckpoint factor_checkpoint_from_json(const std::string& text) {
  return guarded([&] {
    const auto j = parse(text);
    expect_kind(j, "factor_model");
    FactorCheckpoint c;
    c.model = FactorModel(matrix_from(j.at("users")), matrix_from(j.at("items")));
    if (c.model.dim() != j.at("dim").get<std::size_t>()) {
      throw ValidationError("factor checkpoint dim does not match its payload");
    }
    c.config = train_config_from(j.at("config"));
    c.mode = j.at("mode").get<std::string>();
    c.perturb = perturb_from(j.at("perturb"));
    return c;
  });
}

std::string to_json(const MappingCheckpoint& c) {
  json j = {{"format_version", kFormatVersion},
            {"kind", "mapping_net"},
            {"method", c.method},
            {"dim", c.net.dim()},
            {"hidden", c.net.hidden()},
            {"activation", "tanh"},
            {"output", "linear"},
            {"seed", c.config.seed},
            {"config", train_config_json(c.config)},
            {"perturb", perturb_json(c.perturb)},
            {"w1", matrix_json(c.net.w1)},
            {"b1", c.net.b1},
            {"w2", matrix_json(c.net.w2)},
            {"b2", c.net.b2},
            {"tuned_users", c.tuned_users},
            {"tuned_embeddings", matrix_json(c.tuned_embeddings)}};
  return dump(j);
}

MappingCheckpoint mapping_checkpoint_from_json(const std::string& text) {
  return guarded([&] {
    const auto j = parse(text);
    expect_kind(j, "mapping_net");
    if (j.at("activation").get<std::string>() != "tanh") {
      throw ValidationError("unsupported mapping activation");
    }
    MappingCheckpoint c;
    c.method = j.at("method").get<std::string>();
    c.net.w1 = matrix_from(j.at("w1"));
    c.net.b1 = j.at("b1").get<Vector>();
    c.net.w2 = matrix_from(j.at("w2"));
    c.net.b2 = j.at("b2").get<Vector>();
    c.net.validate();
    c.config = train_config_from(j.at("config"));
    c.perturb = perturb_from(j.at("perturb"));
    c.tuned_users = j.at("tuned_users").get<std::vector<std::size_t>>();
    c.tuned_embeddings = matrix_from(j.at("tuned_embeddings"));
    if (c.tuned_embeddings.rows() != c.tuned_users.size()) {
      throw ValidationError("tuned embedding rows do not match tuned users");
    }
    return c;
  });
}

ScenarioManifest make_manifest(const CdrScenario& scenario, std::string source_path,
                               std::string target_path, RatingFormat format) {
  ScenarioManifest m;
  m.source_path = std::move(source_path);
  m.target_path = std::move(target_path);
  m.format = format;
  m.beta = scenario.beta;
  m.seed = scenario.seed;
  const auto& tokens = scenario.source.user_tokens();
  for (const auto& p : scenario.overlap) m.overlap.push_back(tokens[p.source_user]);
  for (const auto& p : scenario.train) m.train.push_back(tokens[p.source_user]);
  for (const auto& p : scenario.test) m.test.push_back(tokens[p.source_user]);
  return m;
}

std::string to_json(const ScenarioManifest& m) {
  json j = {{"format_version", kFormatVersion},
            {"kind", "scenario_manifest"},
            {"source_path", m.source_path},
            {"target_path", m.target_path},
            {"delimiter", std::string(1, m.format.delimiter)},
            {"has_header", m.format.has_header},
            {"beta", m.beta},
            {"seed", m.seed},
            {"overlap", m.overlap},
            {"train", m.train},
            {"test", m.test}};
  return dump(j);
}

ScenarioManifest manifest_from_json(const std::string& text) {
  return guarded([&] {
    const auto j = parse(text);
    expect_kind(j, "scenario_manifest");
    ScenarioManifest m;
    m.source_path = j.at("source_path").get<std::string>();
    m.target_path = j.at("target_path").get<std::string>();
    const auto delim = j.at("delimiter").get<std::string>();
    if (delim.size() != 1) throw ValidationError("delimiter must be one character");
    m.format.delimiter = delim[0];
    m.format.has_header = j.at("has_header").get<bool>();
    m.beta = j.at("beta").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.overlap = j.at("overlap").get<std::vector<std::string>>();
    m.train = j.at("train").get<std::vector<std::string>>();
    m.test = j.at("test").get<std::vector<std::string>>();
    return m;
  });
}

CdrScenario load_scenario(const ScenarioManifest& m, const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  auto source = ingest_domain(resolve(m.source_path), m.format);
  auto target = ingest_domain(resolve(m.target_path), m.format);
  auto scenario = scenario_from_split(std::move(source), std::move(target), m.test, m.beta, m.seed);
  if (scenario.overlap.size() != m.overlap.size() || scenario.train.size() != m.train.size()) {
    throw ValidationError("manifest split does not match the rating files");
  }
  return scenario;
}

std::string to_json(const SyntheticTruth& t) {
  json j = {{"format_version", kFormatVersion},
            {"kind", "synthetic_truth"},
            {"map", map_kind_name(t.map)},
            {"latent_mean", t.latent_mean},
            {"latent_std", t.latent_std},
            {"transform", matrix_json(t.transform)},
            {"source_users", matrix_json(t.source_users)},
            {"source_items", matrix_json(t.source_items)},
            {"target_users", matrix_json(t.target_users)},
            {"target_items", matrix_json(t.target_items)}};
  return dump(j);
}

SyntheticTruth truth_from_json(const std::string& text) {
  return guarded([&] {
    const auto j = parse(text);
    expect_kind(j, "synthetic_truth");
    SyntheticTruth t;
    t.map = parse_map_kind(j.at("map").get<std::string>());
    t.latent_mean = j.at("latent_mean").get<double>();
    t.latent_std = j.at("latent_std").get<double>();
    t.transform = matrix_from(j.at("transform"));
    t.source_users = matrix_from(j.at("source_users"));
    t.source_items = matrix_from(j.at("source_items"));
    t.target_users = matrix_from(j.at("target_users"));
    t.target_items = matrix_from(j.at("target_items"));
    return t;
  });
}

std::string to_json(const EvalReport& r, const std::string& method) {
  json seeds = json::array();
  json per_seed = json::array();
  for (const auto& s : r.per_seed) {
    seeds.push_back(s.seed);
    per_seed.push_back({{"seed", s.seed}, {"mae", s.mae}, {"rmse", s.rmse}, {"n", s.n}});
  }
  json j = {{"format_version", kFormatVersion},
            {"kind", "eval_report"},
            {"method", method},
            {"metrics", json::array({{{"name", "mae"}, {"value", r.mae}},
                                     {{"name", "rmse"}, {"value", r.rmse}}})},
            {"n", r.n},
            {"seeds", seeds},
            {"per_seed", per_seed}};
  return dump(j);
}

std::string to_json(const std::vector<AttackPoint>& sweep, const std::string& method) {
  json rows = json::array();
  for (const auto& p : sweep) {
    rows.push_back(
        {{"epsilon", p.epsilon}, {"mae", p.report.mae}, {"rmse", p.report.rmse}, {"n", p.report.n}});
  }
  json j = {{"format_version", kFormatVersion},
            {"kind", "attack_report"},
            {"method", method},
            {"attack", "fgsm"},
            {"rows", rows}};
  return dump(j);
}

std::string to_json(const SharpnessReport& r, const std::string& method) {
  json j = {{"format_version", kFormatVersion},
            {"kind", "sharpness_report"},
            {"method", method},
            {"lipschitz_estimate", r.lipschitz_estimate},
            {"rho", r.rho},
            {"k", r.k},
            {"n_users", r.n_users},
            {"skipped", r.skipped}};
  return dump(j);
}

std::string to_csv(const LandscapeGrid& grid) {
  std::string out = "zeta,gamma,loss\n";
  for (std::size_t z = 0; z < grid.zeta_axis.size(); ++z) {
    for (std::size_t g = 0; g < grid.gamma_axis.size(); ++g) {
      out += format_double(grid.zeta_axis[z]);
      out += ',';
      out += format_double(grid.gamma_axis[g]);
      out += ',';
      out += format_double(grid.loss(z, g));
      out += '\n';
    }
  }
  return out;
}

std::string trace_to_csv(const std::vector<double>& trace) {
  std::string out = "epoch,loss\n";
  for (std::size_t e = 0; e < trace.size(); ++e) {
    out += std::to_string(e + 1) + "," + format_double(trace[e]) + "\n";
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_file(const std::filesystem::path& path, const std::string& contents,
                bool overwrite) {
  if (!overwrite && std::filesystem::exists(path)) {
    throw ValidationError("refusing to overwrite existing " + path.string() +
                          " (pass --force to replace it)");
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << contents;
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

}  // namespace scdr::io
