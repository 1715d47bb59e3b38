#pragma once

// Synthetic embedding populations with planted identities and attribute
// directions, and a deliberately naive LFA simulator used as a test oracle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lfa/attributes.hpp"
#include "lfa/core.hpp"
#include "lfa/lfa.hpp"
#include "lfa/random.hpp"

namespace lfa {

struct PlantedAttribute {
  std::optional<Vector> direction;  // nullopt: drawn uniformly on the sphere
  double strength = 0.0;            // alpha
  double fraction = 0.0;            // share of identities carrying it
};

struct SynthConfig {
  std::size_t dim = 64;
  std::size_t n_identities = 100;
  std::size_t images_min = 5;
  std::size_t images_max = 10;
  // RMS norm of the per-image Gaussian perturbation (per-component stddev is
  // identity_spread / sqrt(dim)), so the value means the same for any dim.
  double identity_spread = 0.1;
  std::vector<PlantedAttribute> attributes;
  std::uint64_t rng_seed = 0;
};

struct GroundTruth {
  std::vector<std::size_t> identity;                 // per image
  std::vector<std::vector<bool>> planted;            // [attribute][image]
  std::vector<Vector> directions;                    // per attribute, unit norm
  std::vector<double> strengths;
  std::vector<std::vector<std::size_t>> affected_identities;  // per attribute, ascending
};

struct SynthOutput {
  EmbeddingDataset dataset;
  GroundTruth truth;
  AttributeTable attributes;
};

inline void validate(const SynthConfig& cfg) {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidConfig, m); };
  if (cfg.dim < 2) fail("dim must be >= 2");
  if (cfg.n_identities < 1) fail("n_identities must be >= 1");
  if (cfg.images_min < 1 || cfg.images_max < cfg.images_min) fail("need 1 <= images_min <= images_max");
  if (!(cfg.identity_spread >= 0.0) || !std::isfinite(cfg.identity_spread)) fail("identity_spread must be >= 0");
  for (const auto& a : cfg.attributes) {
    if (!(a.strength >= 0.0) || !std::isfinite(a.strength)) fail("attribute strength must be >= 0");
    if (!(a.fraction >= 0.0 && a.fraction <= 1.0)) fail("attribute fraction must lie in [0, 1]");
    if (a.direction && a.direction->size() != cfg.dim) fail("attribute direction has wrong dimension");
  }
}

inline Vector random_unit_vector(Rng& rng, std::size_t dim) {
  Vector v(dim);
  double len = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    len = norm(v);
  } while (!(len > kZeroNormEpsilon));
  for (double& x : v) x /= len;
  return v;
}

inline std::string synth_image_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "img%07zu", i);
  return buf;
}

inline std::string synth_identity_key(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "id%06zu", i);
  return buf;
}

/// Deterministic for a fixed config. RNG streams: 0 identity centres,
/// 1 attribute directions and carriers, 2 image counts and perturbations.
inline SynthOutput generate(const SynthConfig& cfg) {
  validate(cfg);
  const std::size_t d = cfg.dim;

  Rng centre_rng = Rng::stream(cfg.rng_seed, 0);
  std::vector<Vector> centres(cfg.n_identities);
  for (auto& c : centres) c = random_unit_vector(centre_rng, d);

  GroundTruth truth;
  Rng attr_rng = Rng::stream(cfg.rng_seed, 1);
  std::vector<std::vector<char>> carries(cfg.attributes.size(), std::vector<char>(cfg.n_identities, 0));
  for (std::size_t a = 0; a < cfg.attributes.size(); ++a) {
    const auto& spec = cfg.attributes[a];
    truth.directions.push_back(spec.direction ? normalize(*spec.direction) : random_unit_vector(attr_rng, d));
    truth.strengths.push_back(spec.strength);
    const auto count = static_cast<std::size_t>(std::llround(spec.fraction * static_cast<double>(cfg.n_identities)));
    std::vector<std::size_t> order(cfg.n_identities);
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    attr_rng.shuffle(order);
    order.resize(count);
    std::sort(order.begin(), order.end());
    for (std::size_t id : order) carries[a][id] = 1;
    truth.affected_identities.push_back(std::move(order));
  }

  Rng image_rng = Rng::stream(cfg.rng_seed, 2);
  const double sigma = cfg.identity_spread / std::sqrt(static_cast<double>(d));
  std::vector<double> rows;
  std::vector<std::string> ids;
  std::vector<std::string> keys;
  truth.planted.assign(cfg.attributes.size(), {});
  Vector e(d);
  for (std::size_t id = 0; id < cfg.n_identities; ++id) {
    const std::size_t span = cfg.images_max - cfg.images_min + 1;
    const std::size_t count = cfg.images_min + static_cast<std::size_t>(image_rng.below(span));
    for (std::size_t img = 0; img < count; ++img) {
      for (std::size_t k = 0; k < d; ++k) e[k] = centres[id][k] + sigma * image_rng.normal();
      e = normalize(e);
      for (std::size_t a = 0; a < cfg.attributes.size(); ++a) {
        const bool on = carries[a][id] != 0;
        truth.planted[a].push_back(on);
        if (on) {
          for (std::size_t k = 0; k < d; ++k) e[k] += truth.strengths[a] * truth.directions[a][k];
          e = normalize(e);
        }
      }
      rows.insert(rows.end(), e.begin(), e.end());
      truth.identity.push_back(id);
      ids.push_back(synth_image_id(ids.size()));
      keys.push_back(synth_identity_key(id));
    }
  }

  std::vector<AttributeSchema> schema;
  for (std::size_t a = 0; a < cfg.attributes.size(); ++a) {
    schema.push_back({"attr" + std::to_string(a), {"no", "yes"}});
  }
  AttributeTable table(std::move(schema));
  std::vector<std::int32_t> codes(cfg.attributes.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t a = 0; a < cfg.attributes.size(); ++a) codes[a] = truth.planted[a][i] ? 1 : 0;
    table.add_coded_row(ids[i], codes);
  }

  auto ds = EmbeddingDataset::from_rows(std::move(ids), rows, d, keys);
  return {std::move(ds), std::move(truth), std::move(table)};
}

inline constexpr std::size_t kReferenceMaxRows = 1000;

/// Literal transcription of the growth equations, recomputed from scratch
/// every iteration: direction (1/C) * sum_j e_j / c_{l_j}; argmax over
/// k not in S of <e_k, v> / ||v||; stop if that value is below tau; else add.
/// Shares no code with lfa_grow beyond the dataset accessors.
inline GrowResult reference_lfa(const EmbeddingDataset& ds, const Group& seed, double tau) {
  if (ds.size() > kReferenceMaxRows) {
    throw Error(ErrorCode::InvalidArgument, "reference simulator is limited to 1000 rows");
  }
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorCode::InvalidThreshold, "tau must lie in (0, 1)");
  if (seed.members.empty()) throw Error(ErrorCode::EmptyGroup, "seed group is empty");

  const std::size_t d = ds.dim();
  std::vector<std::size_t> s = seed.members;
  GrowResult out;
  Vector v(d);
  std::size_t big_c = 0;

  auto compute_direction = [&] {
    std::map<std::uint32_t, std::size_t> counts;
    for (std::size_t j : s) counts[ds.identity(j)] += 1;
    big_c = counts.size();
    std::fill(v.begin(), v.end(), 0.0);
    for (std::size_t j : s) {
      const double w = 1.0 / static_cast<double>(counts[ds.identity(j)]);
      for (std::size_t k = 0; k < d; ++k) v[k] += w * ds.row(j)[k];
    }
    for (std::size_t k = 0; k < d; ++k) v[k] *= 1.0 / static_cast<double>(big_c);
  };
  auto v_norm = [&] {
    double sum = 0.0;
    for (std::size_t k = 0; k < d; ++k) sum += v[k] * v[k];
    return std::sqrt(sum);
  };

  while (true) {
    compute_direction();
    const double len = v_norm();
    if (!(len > kZeroNormEpsilon)) throw Error(ErrorCode::DegenerateDirection, "reference direction vanished");

    bool found = false;
    std::size_t best = 0;
    double best_p = 0.0;
    for (std::size_t k = 0; k < ds.size(); ++k) {
      if (std::find(s.begin(), s.end(), k) != s.end()) continue;
      double ip = 0.0;
      for (std::size_t c = 0; c < d; ++c) ip += ds.row(k)[c] * v[c];
      const double p = ip / len;
      if (!found || p > best_p) {
        found = true;
        best = k;
        best_p = p;
      }
    }
    if (!found) break;
    if (best_p < tau) {
      out.trace.stop_projection = best_p;
      break;
    }
    out.trace.steps.push_back({best, best_p, big_c, s.size()});
    s.push_back(best);
  }

  LatentDirection dir;
  dir.components = v;
  dir.source_group_size = s.size();
  dir.source_identity_count = big_c;
  out.group.members = std::move(s);
  out.group.direction = std::move(dir);
  out.group.threshold_used = tau;
  out.group.provenance = seed.provenance;
  return out;
}

}  // namespace lfa
