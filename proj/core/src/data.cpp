#include "scdr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "scdr/error.hpp"
#include "scdr/format.hpp"
#include "scdr/random.hpp"

namespace scdr {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::uint64_t pair_key(std::size_t user, std::size_t item) {
  return (static_cast<std::uint64_t>(user) << 32) | static_cast<std::uint64_t>(item);
}

}  // namespace

DomainDataset DomainDataset::from_triples(std::span<const RatingTriple> triples) {
  DomainDataset out;
  std::unordered_map<std::uint64_t, std::size_t> seen;
  for (const auto& t : triples) {
    if (t.user.empty() || t.item.empty()) {
      throw ValidationError("rating triple with empty user or item token");
    }
    if (!std::isfinite(t.rating)) {
      throw ValidationError("non-finite rating for user " + t.user);
    }
    auto [uit, unew] = out.user_lookup_.try_emplace(t.user, out.users_.size());
    if (unew) out.users_.push_back(t.user);
    auto [iit, inew] = out.item_lookup_.try_emplace(t.item, out.items_.size());
    if (inew) out.items_.push_back(t.item);

    const auto key = pair_key(uit->second, iit->second);
    auto [pos, fresh] = seen.try_emplace(key, out.interactions_.size());
    if (fresh) {
      out.interactions_.push_back({uit->second, iit->second, t.rating});
    } else {
      out.interactions_[pos->second].rating = t.rating;
      ++out.duplicate_count_;
    }
  }
  if (out.users_.empty() || out.items_.empty()) {
    throw ValidationError("dataset has no interactions");
  }
  return out;
}

DomainDataset::DomainDataset(std::vector<std::string> users, std::vector<std::string> items,
                             std::vector<Interaction> interactions)
    : users_(std::move(users)), items_(std::move(items)),
      interactions_(std::move(interactions)) {
  if (users_.empty() || items_.empty()) {
    throw ValidationError("dataset needs at least one user and one item");
  }
  build_lookup();
  if (user_lookup_.size() != users_.size() || item_lookup_.size() != items_.size()) {
    throw ValidationError("duplicate user or item token");
  }
  std::unordered_set<std::uint64_t> pairs;
  for (const auto& x : interactions_) {
    if (x.user >= users_.size() || x.item >= items_.size()) {
      throw ValidationError("interaction references an index out of range");
    }
    if (!std::isfinite(x.rating)) throw ValidationError("non-finite rating");
    if (!pairs.insert(pair_key(x.user, x.item)).second) {
      throw ValidationError("duplicate (user, item) interaction");
    }
  }
}

void DomainDataset::build_lookup() {
  user_lookup_.clear();
  item_lookup_.clear();
  for (std::size_t i = 0; i < users_.size(); ++i) user_lookup_.emplace(users_[i], i);
  for (std::size_t j = 0; j < items_.size(); ++j) item_lookup_.emplace(items_[j], j);
}

std::optional<std::size_t> DomainDataset::find_user(const std::string& token) const {
  const auto it = user_lookup_.find(token);
  if (it == user_lookup_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> DomainDataset::find_item(const std::string& token) const {
  const auto it = item_lookup_.find(token);
  if (it == item_lookup_.end()) return std::nullopt;
  return it->second;
}

std::vector<std::vector<std::size_t>> DomainDataset::interactions_by_user() const {
  std::vector<std::vector<std::size_t>> out(users_.size());
  for (std::size_t n = 0; n < interactions_.size(); ++n) {
    out[interactions_[n].user].push_back(n);
  }
  return out;
}

DomainDataset parse_ratings(const std::string& text, RatingFormat format) {
  std::vector<RatingTriple> triples;
  std::istringstream in(text);
  std::string line;
  std::size_t row = 0;
  bool header_pending = format.has_header;
  while (std::getline(in, line)) {
    if (header_pending) {
      header_pending = false;
      continue;
    }
    ++row;
    const auto view = trim(line);
    if (view.empty()) continue;

    std::string_view fields[3];
    std::size_t count = 0;
    std::size_t start = 0;
    while (true) {
      const auto end = view.find(format.delimiter, start);
      const auto field = view.substr(start, end == std::string_view::npos ? end : end - start);
      if (count == 3) throw MalformedRowError(row, "expected 3 columns");
      fields[count++] = trim(field);
      if (end == std::string_view::npos) break;
      start = end + 1;
    }
    if (count != 3) throw MalformedRowError(row, "expected 3 columns");
    if (fields[0].empty() || fields[1].empty()) {
      throw MalformedRowError(row, "empty user or item token");
    }
    const auto rating = parse_double(fields[2]);
    if (!rating || !std::isfinite(*rating)) {
      throw MalformedRowError(row, "rating '" + std::string(fields[2]) + "' is not a finite number");
    }
    triples.push_back({std::string(fields[0]), std::string(fields[1]), *rating});
  }
  if (triples.empty()) throw ValidationError("rating data is empty");
  return DomainDataset::from_triples(triples);
}

DomainDataset ingest_domain(const std::filesystem::path& path, RatingFormat format) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open rating file " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  try {
    return parse_ratings(buffer.str(), format);
  } catch (const MalformedRowError& e) {
    throw MalformedRowError(e.row(), path.string());
  }
}

std::string format_ratings(const DomainDataset& dataset, RatingFormat format) {
  std::string out;
  for (const auto& x : dataset.interactions()) {
    out += dataset.user_tokens()[x.user];
    out += format.delimiter;
    out += dataset.item_tokens()[x.item];
    out += format.delimiter;
    out += format_double(x.rating);
    out += '\n';
  }
  return out;
}

void write_ratings(const std::filesystem::path& path, const DomainDataset& dataset,
                   RatingFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_ratings(dataset, format);
  if (!out) throw IoError("failed writing " + path.string());
}

DomainDataset CdrScenario::target_training_view() const {
  std::vector<bool> withheld(target.num_users(), false);
  for (const auto& p : test) withheld[p.target_user] = true;
  return target.filtered([&](const Interaction& x) { return !withheld[x.user]; });
}

namespace {

std::vector<std::vector<Interaction>> target_interactions_of(
    const DomainDataset& target, const std::vector<UserPair>& users) {
  const auto by_user = target.interactions_by_user();
  std::vector<std::vector<Interaction>> out;
  out.reserve(users.size());
  for (const auto& p : users) {
    auto& rows = out.emplace_back();
    for (auto n : by_user[p.target_user]) rows.push_back(target.interactions()[n]);
  }
  return out;
}

std::vector<UserPair> compute_overlap(const DomainDataset& source, const DomainDataset& target) {
  for (const auto& token : source.item_tokens()) {
    if (target.find_item(token)) {
      throw ValidationError("item '" + token + "' appears in both domains");
    }
  }
  std::vector<UserPair> overlap;
  for (std::size_t s = 0; s < source.num_users(); ++s) {
    if (const auto t = target.find_user(source.user_tokens()[s])) overlap.push_back({s, *t});
  }
  if (overlap.empty()) throw ValidationError("the domains share no users");
  return overlap;
}

void check_beta(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("beta must lie in (0, 1)");
}

}  // namespace

std::vector<std::vector<Interaction>> CdrScenario::test_interactions() const {
  return target_interactions_of(target, test);
}

std::vector<std::vector<Interaction>> CdrScenario::train_interactions() const {
  return target_interactions_of(target, train);
}

std::size_t cold_start_count(std::size_t overlap_size, double beta) {
  // The slack absorbs representation error such as 0.7 * 10 = 7.000000000000001.
  const double exact = beta * static_cast<double>(overlap_size);
  const auto count = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::min(count, overlap_size);
}

CdrScenario build_scenario(DomainDataset source, DomainDataset target, double beta,
                           std::uint64_t seed) {
  check_beta(beta);
  auto overlap = compute_overlap(source, target);

  std::vector<std::size_t> order(overlap.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span<std::size_t>(order));

  const auto n_test = cold_start_count(overlap.size(), beta);
  std::vector<bool> is_test(overlap.size(), false);
  for (std::size_t i = 0; i < n_test; ++i) is_test[order[i]] = true;

  CdrScenario out{std::move(source), std::move(target), std::move(overlap), {}, {}, beta, seed};
  for (std::size_t i = 0; i < out.overlap.size(); ++i) {
    (is_test[i] ? out.test : out.train).push_back(out.overlap[i]);
  }
  return out;
}

CdrScenario scenario_from_split(DomainDataset source, DomainDataset target,
                                const std::vector<std::string>& test_tokens, double beta,
                                std::uint64_t seed) {
  check_beta(beta);
  auto overlap = compute_overlap(source, target);
  std::unordered_set<std::string> test_set(test_tokens.begin(), test_tokens.end());
  CdrScenario out{std::move(source), std::move(target), std::move(overlap), {}, {}, beta, seed};
  for (const auto& p : out.overlap) {
    const bool in_test = test_set.erase(out.source.user_tokens()[p.source_user]) > 0;
    (in_test ? out.test : out.train).push_back(p);
  }
  if (!test_set.empty()) {
    throw ValidationError("split lists user '" + *test_set.begin() + "' not in the overlap");
  }
  return out;
}

void SyntheticSpec::validate() const {
  if (source_users < 1 || target_users < 1 || source_items < 1 || target_items < 1) {
    throw ValidationError("synthetic user and item counts must be >= 1");
  }
  if (!(overlap_ratio > 0.0 && overlap_ratio <= 1.0)) {
    throw ValidationError("overlap ratio must lie in (0, 1]");
  }
  if (dim < 1) throw ValidationError("latent dimension must be >= 1");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ValidationError("noise must be >= 0");
  if (!(density > 0.0 && density <= 1.0)) throw ValidationError("density must lie in (0, 1]");
  if (!(latent_std >= 0.0) || !std::isfinite(latent_mean)) {
    throw ValidationError("latent distribution parameters are invalid");
  }
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("beta must lie in (0, 1)");
}

std::size_t SyntheticSpec::overlap_count() const {
  const auto base = std::min(source_users, target_users);
  const auto n = static_cast<std::size_t>(std::llround(overlap_ratio * static_cast<double>(base)));
  return std::clamp<std::size_t>(n, 1, base);
}

double SyntheticSpec::resolved_latent_mean() const {
  return latent_mean > 0.0 ? latent_mean : std::sqrt(3.0 / static_cast<double>(dim));
}

namespace {

Matrix random_orthogonal(std::size_t d, Rng& rng) {
  Matrix q(d, d);
  for (auto& x : q.values()) x = rng.normal();
  // modified Gram-Schmidt on rows
  for (std::size_t r = 0; r < d; ++r) {
    auto row = q.row(r);
    for (std::size_t p = 0; p < r; ++p) {
      const double proj = dot(row, q.row(p));
      axpy(-proj, q.row(p), row);
    }
    const double n = norm(row);
    for (auto& x : row) x /= n;
  }
  return q;
}

Matrix gaussian_rows(std::size_t n, std::size_t d, double mean, double stddev, Rng& rng) {
  Matrix m(n, d);
  for (auto& x : m.values()) x = rng.normal(mean, stddev);
  return m;
}

struct DomainDraw {
  std::vector<std::string> user_tokens;
  std::vector<std::string> item_tokens;
  Matrix users;
  Matrix items;
};

std::vector<RatingTriple> draw_ratings(const DomainDraw& draw, const SyntheticSpec& spec,
                                       Rng& rng) {
  const auto n_users = draw.users.rows();
  const auto n_items = draw.items.rows();
  std::vector<RatingTriple> out;
  std::vector<std::size_t> item_hits(n_items, 0);
  auto emit = [&](std::size_t u, std::size_t i) {
    const double clean = dot(draw.users.row(u), draw.items.row(i));
    const double noisy = spec.noise > 0.0 ? clean + spec.noise * rng.normal() : clean;
    out.push_back({draw.user_tokens[u], draw.item_tokens[i], std::clamp(noisy, 1.0, 5.0)});
    ++item_hits[i];
  };
  for (std::size_t u = 0; u < n_users; ++u) {
    bool any = false;
    for (std::size_t i = 0; i < n_items; ++i) {
      if (spec.density >= 1.0 || rng.uniform() < spec.density) {
        emit(u, i);
        any = true;
      }
    }
    if (!any) emit(u, static_cast<std::size_t>(rng.uniform_index(n_items)));
  }
  for (std::size_t i = 0; i < n_items; ++i) {
    if (item_hits[i] == 0) emit(static_cast<std::size_t>(rng.uniform_index(n_users)), i);
  }
  return out;
}

// Reorders generation-order rows into dataset index order.
Matrix reorder_rows(const Matrix& rows, const std::vector<std::string>& gen_tokens,
                    const std::vector<std::string>& dataset_tokens) {
  std::unordered_map<std::string, std::size_t> gen_index;
  for (std::size_t i = 0; i < gen_tokens.size(); ++i) gen_index.emplace(gen_tokens[i], i);
  Matrix out(dataset_tokens.size(), rows.cols());
  for (std::size_t i = 0; i < dataset_tokens.size(); ++i) {
    const auto src = rows.row(gen_index.at(dataset_tokens[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace

const char* map_kind_name(MapKind kind) noexcept {
  switch (kind) {
    case MapKind::linear: return "linear";
    case MapKind::tanh: return "tanh";
    case MapKind::identity: return "identity";
  }
  return "linear";
}

MapKind parse_map_kind(const std::string& name) {
  for (auto kind : {MapKind::linear, MapKind::tanh, MapKind::identity}) {
    if (name == map_kind_name(kind)) return kind;
  }
  throw ValidationError("unknown map kind '" + name + "'");
}

Vector apply_planted_map(const SyntheticTruth& truth, std::span<const double> source) {
  const auto d = source.size();
  Vector centered(d);
  for (std::size_t i = 0; i < d; ++i) centered[i] = source[i] - truth.latent_mean;
  Vector out(d);
  for (std::size_t r = 0; r < d; ++r) {
    double z = dot(truth.transform.row(r), centered);
    if (truth.map == MapKind::tanh && truth.latent_std > 0.0) {
      z = truth.latent_std * std::tanh(z / truth.latent_std);
    }
    out[r] = truth.latent_mean + z;
  }
  return out;
}

SyntheticScenario generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto d = spec.dim;
  const double mean = spec.resolved_latent_mean();
  const auto n_overlap = spec.overlap_count();
  Rng rng(spec.seed);

  SyntheticTruth truth;
  truth.map = spec.map;
  truth.latent_mean = mean;
  truth.latent_std = spec.latent_std;
  truth.transform = random_orthogonal(d, rng);
  if (spec.map == MapKind::identity) {
    truth.transform = Matrix(d, d);
    for (std::size_t i = 0; i < d; ++i) truth.transform(i, i) = 1.0;
  }

  DomainDraw src;
  DomainDraw tgt;
  for (std::size_t u = 0; u < spec.source_users; ++u) {
    src.user_tokens.push_back(u < n_overlap ? "u" + std::to_string(u)
                                            : "s" + std::to_string(u - n_overlap));
  }
  for (std::size_t u = 0; u < spec.target_users; ++u) {
    tgt.user_tokens.push_back(u < n_overlap ? "u" + std::to_string(u)
                                            : "t" + std::to_string(u - n_overlap));
  }
  for (std::size_t i = 0; i < spec.source_items; ++i) src.item_tokens.push_back("si" + std::to_string(i));
  for (std::size_t i = 0; i < spec.target_items; ++i) tgt.item_tokens.push_back("ti" + std::to_string(i));

  src.users = gaussian_rows(spec.source_users, d, mean, spec.latent_std, rng);
  const Matrix fresh = gaussian_rows(spec.target_users, d, mean, spec.latent_std, rng);
  tgt.users = Matrix(spec.target_users, d);
  for (std::size_t u = 0; u < spec.target_users; ++u) {
    const auto base = u < n_overlap ? src.users.row(u) : fresh.row(u);
    const auto mapped = apply_planted_map(truth, base);
    std::copy(mapped.begin(), mapped.end(), tgt.users.row(u).begin());
  }
  src.items = gaussian_rows(spec.source_items, d, mean, spec.latent_std, rng);
  tgt.items = gaussian_rows(spec.target_items, d, mean, spec.latent_std, rng);

  const auto src_triples = draw_ratings(src, spec, rng);
  const auto tgt_triples = draw_ratings(tgt, spec, rng);
  auto source = DomainDataset::from_triples(src_triples);
  auto target = DomainDataset::from_triples(tgt_triples);

  truth.source_users = reorder_rows(src.users, src.user_tokens, source.user_tokens());
  truth.source_items = reorder_rows(src.items, src.item_tokens, source.item_tokens());
  truth.target_users = reorder_rows(tgt.users, tgt.user_tokens, target.user_tokens());
  truth.target_items = reorder_rows(tgt.items, tgt.item_tokens, target.item_tokens());

  auto scenario = build_scenario(std::move(source), std::move(target), spec.beta, spec.seed);
  return {std::move(scenario), std::move(truth)};
}

}  // namespace scdr
