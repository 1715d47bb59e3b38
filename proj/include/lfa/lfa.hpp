#pragma once

// Latent Feature Alignment: identity-weighted latent directions and
// aligned growth of a seed group.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lfa/core.hpp"
#include "lfa/parallel.hpp"

namespace lfa {

/// Sum of member embeddings weighted by 1 / (members sharing the identity).
///
/// The optional 1/C normalization is not applied; every consumer divides by
/// the direction's norm, so the result is only meaningful up to positive scale.
inline LatentDirection latent_direction(const EmbeddingDataset& ds,
                                        std::span<const std::size_t> members) {
  if (members.empty()) throw Error(ErrorCode::EmptyGroup, "cannot compute a direction for an empty group");
  check_indices(ds, members);

  std::unordered_map<std::uint32_t, std::size_t> per_identity;
  for (std::size_t m : members) ++per_identity[ds.identity(m)];

  LatentDirection v;
  v.components.assign(ds.dim(), 0.0);
  for (std::size_t m : members) {
    const double w = 1.0 / static_cast<double>(per_identity[ds.identity(m)]);
    const auto e = ds.row(m);
    for (std::size_t k = 0; k < e.size(); ++k) v.components[k] += w * e[k];
  }
  v.source_group_size = members.size();
  v.source_identity_count = per_identity.size();

  if (!(norm(v.components) > kZeroNormEpsilon)) {
    throw Error(ErrorCode::DegenerateDirection,
                "weighted member sum has zero norm (group of " + std::to_string(members.size()) + ")");
  }
  return v;
}

struct GrowthStep {
  std::size_t index = 0;         // dataset row admitted at this step
  double projection = 0.0;       // its normalized projection
  std::size_t identity_count = 0;  // C of the subset the direction was computed from
  std::size_t group_size = 0;      // n of that subset

  friend bool operator==(const GrowthStep&, const GrowthStep&) = default;
};

struct GrowthTrace {
  std::vector<GrowthStep> steps;
  std::optional<double> stop_projection;  // absent when the pool ran out

  friend bool operator==(const GrowthTrace&, const GrowthTrace&) = default;
};

struct GrowResult {
  Group group;
  GrowthTrace trace;
};

struct Candidate {
  std::size_t index = 0;
  double projection = 0.0;
};

/// Argmax of the normalized projection over `pool` (ties to the lowest index).
/// `pool` must be non-empty.
inline Candidate most_aligned(const EmbeddingDataset& ds, std::span<const double> direction,
                              std::span<const std::size_t> pool, std::size_t threads = 1) {
  const double len = norm(direction);
  if (!(len > kZeroNormEpsilon)) throw Error(ErrorCode::DegenerateDirection, "direction has zero norm");

  auto better = [](const Candidate& a, const Candidate& b) {
    return a.projection > b.projection || (a.projection == b.projection && a.index < b.index);
  };

  constexpr std::size_t kChunk = 4096;
  const std::size_t chunks = (pool.size() + kChunk - 1) / kChunk;
  std::vector<Candidate> best(chunks);
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t begin = c * kChunk;
    const std::size_t end = std::min(pool.size(), begin + kChunk);
    Candidate local{pool[begin], dot(ds.row(pool[begin]), direction) / len};
    for (std::size_t p = begin + 1; p < end; ++p) {
      Candidate cand{pool[p], dot(ds.row(pool[p]), direction) / len};
      if (better(cand, local)) local = cand;
    }
    best[c] = local;
  });
  Candidate winner = best.front();
  for (std::size_t c = 1; c < best.size(); ++c) {
    if (better(best[c], winner)) winner = best[c];
  }
  return winner;
}

inline void check_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw Error(ErrorCode::InvalidThreshold, "tau must lie in (0, 1), got " + std::to_string(tau));
  }
}

/// Grows `seed` by repeatedly admitting the pool candidate most aligned with
/// the group's current latent direction, until that projection drops below
/// `tau` or the pool is empty.
///
/// `pool` defaults to every index outside the seed and is copied, so
/// separate runs may produce overlapping groups.
inline GrowResult lfa_grow(const EmbeddingDataset& ds, const Group& seed, double tau,
                           std::optional<std::vector<std::size_t>> pool = std::nullopt,
                           std::size_t threads = 1) {
  check_tau(tau);
  if (seed.members.empty()) throw Error(ErrorCode::EmptyGroup, "seed group is empty");
  check_indices(ds, seed.members);

  std::vector<std::size_t> members = seed.members;
  std::vector<char> in_group(ds.size(), 0);
  for (std::size_t m : members) {
    if (in_group[m]) throw Error(ErrorCode::InvalidArgument, "seed contains duplicate index " + std::to_string(m));
    in_group[m] = 1;
  }

  std::vector<std::size_t> candidates;
  if (pool) {
    check_indices(ds, *pool);
    std::vector<char> seen(ds.size(), 0);
    for (std::size_t i : *pool) {
      if (!in_group[i] && !seen[i]) candidates.push_back(i);
      seen[i] = 1;
    }
    std::sort(candidates.begin(), candidates.end());
  } else {
    candidates.reserve(ds.size() - members.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (!in_group[i]) candidates.push_back(i);
    }
  }

  GrowResult result;
  LatentDirection direction = latent_direction(ds, members);
  while (!candidates.empty()) {
    const Candidate best = most_aligned(ds, direction.components, candidates, threads);
    if (best.projection < tau) {
      result.trace.stop_projection = best.projection;
      break;
    }
    result.trace.steps.push_back({best.index, best.projection, direction.source_identity_count,
                                  direction.source_group_size});
    members.push_back(best.index);
    candidates.erase(std::lower_bound(candidates.begin(), candidates.end(), best.index));
    direction = latent_direction(ds, members);
  }

  result.group.members = std::move(members);
  result.group.direction = std::move(direction);
  result.group.threshold_used = tau;
  result.group.provenance = seed.provenance;
  return result;
}

struct SeedOutcome {
  std::size_t seed_index = 0;
  std::optional<GrowResult> result;
  std::optional<ErrorCode> error;
  std::string message;

  bool ok() const noexcept { return result.has_value(); }
};

/// Grows every seed independently with a fresh pool. A failing seed is
/// recorded in its outcome and does not stop the others. Output order
/// matches seed order and is independent of `threads`.
inline std::vector<SeedOutcome> run_all(const EmbeddingDataset& ds, double tau,
                                        std::span<const Group> seeds, std::size_t threads = 1) {
  check_tau(tau);
  std::vector<SeedOutcome> out(seeds.size());
  parallel_for(seeds.size(), threads, [&](std::size_t s) {
    out[s].seed_index = s;
    try {
      out[s].result = lfa_grow(ds, seeds[s], tau);
    } catch (const Error& e) {
      out[s].error = e.code();
      out[s].message = e.what();
    }
  });
  return out;
}

}  // namespace lfa
