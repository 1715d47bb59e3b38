#pragma once

// Comparison group-formers: Lloyd k-means with k-means++ seeding, and
// nearest-neighbour groups of a fixed size. Plus group-size matching.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "lfa/core.hpp"
#include "lfa/lfa.hpp"
#include "lfa/parallel.hpp"
#include "lfa/random.hpp"

namespace lfa {

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double shift_tolerance = 1e-4;
  std::size_t threads = 1;
};

struct KMeansResult {
  std::vector<std::size_t> assignments;
  std::vector<double> centroids;  // k x d row-major
  std::size_t k = 0;
  std::size_t iterations_run = 0;
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // one entry per assignment step

  std::span<const double> centroid(std::size_t c, std::size_t dim) const {
    return {centroids.data() + c * dim, dim};
  }
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double diff = a[k] - b[k];
    sum += diff * diff;
  }
  return sum;
}

namespace detail {

/// k-means++: first centre uniform, the rest with probability proportional to
/// squared distance from the nearest chosen centre. If every remaining point
/// coincides with a centre the lowest unchosen index is taken.
inline std::vector<std::size_t> kmeanspp_seeds(const EmbeddingDataset& ds, std::size_t k, Rng& rng) {
  const std::size_t n = ds.size();
  std::vector<std::size_t> chosen;
  std::vector<char> taken(n, 0);
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());

  std::size_t first = static_cast<std::size_t>(rng.below(n));
  chosen.push_back(first);
  taken[first] = 1;
  while (chosen.size() < k) {
    const auto last = ds.row(chosen.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], squared_distance(ds.row(i), last));
      if (!taken[i]) total += nearest[i];
    }
    std::size_t pick = n;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double running = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || nearest[i] <= 0.0) continue;
        running += nearest[i];
        pick = i;
        if (running > target) break;
      }
    }
    if (pick == n) {
      for (std::size_t i = 0; i < n; ++i) {
        if (!taken[i]) {
          pick = i;
          break;
        }
      }
    }
    chosen.push_back(pick);
    taken[pick] = 1;
  }
  return chosen;
}

}  // namespace detail

/// Lloyd's algorithm with squared Euclidean distance on the unit-norm rows.
/// Stops when no assignment changes or the largest centroid shift falls below
/// the tolerance. Empty clusters are re-seeded at the point farthest from its
/// own centroid. Deterministic for a fixed seed and independent of threads.
inline KMeansResult kmeans(const EmbeddingDataset& ds, std::size_t k, std::uint64_t rng_seed,
                           const KMeansOptions& opts = {}) {
  const std::size_t n = ds.size();
  const std::size_t d = ds.dim();
  if (k < 1 || k > n) {
    throw Error(ErrorCode::InvalidK, "k must lie in [1, " + std::to_string(n) + "], got " + std::to_string(k));
  }

  Rng rng(rng_seed);
  KMeansResult res;
  res.k = k;
  res.centroids.resize(k * d);
  {
    const auto seeds = detail::kmeanspp_seeds(ds, k, rng);
    for (std::size_t c = 0; c < k; ++c) {
      std::copy_n(ds.row(seeds[c]).begin(), d, res.centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
    }
  }

  res.assignments.assign(n, SIZE_MAX);
  std::vector<std::size_t> next(n);
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
    parallel_for(n, opts.threads, [&](std::size_t i) {
      const auto e = ds.row(i);
      std::size_t best = 0;
      double best_d = squared_distance(e, res.centroid(0, d));
      for (std::size_t c = 1; c < k; ++c) {
        const double dc = squared_distance(e, res.centroid(c, d));
        if (dc < best_d) {
          best_d = dc;
          best = c;
        }
      }
      next[i] = best;
      dist[i] = best_d;
    });

    std::size_t changed = 0;
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (next[i] != res.assignments[i]) ++changed;
      inertia += dist[i];
    }
    res.assignments = next;
    res.inertia = inertia;
    res.inertia_trace.push_back(inertia);
    res.iterations_run = iter + 1;
    if (changed == 0) break;

    // Fixed-order per-cluster summation.
    std::vector<double> sums(k * d, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = res.assignments[i];
      ++counts[c];
      const auto e = ds.row(i);
      for (std::size_t j = 0; j < d; ++j) sums[c * d + j] += e[j];
    }

    std::vector<char> used_as_reseed(n, 0);
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<double> updated(d);
      if (counts[c] > 0) {
        for (std::size_t j = 0; j < d; ++j) updated[j] = sums[c * d + j] / static_cast<double>(counts[c]);
      } else {
        std::size_t far = SIZE_MAX;
        for (std::size_t i = 0; i < n; ++i) {
          if (used_as_reseed[i]) continue;
          if (far == SIZE_MAX || dist[i] > dist[far]) far = i;
        }
        used_as_reseed[far] = 1;
        std::copy_n(ds.row(far).begin(), d, updated.begin());
      }
      max_shift = std::max(max_shift, std::sqrt(squared_distance(updated, res.centroid(c, d))));
      std::copy(updated.begin(), updated.end(), res.centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
    }
    if (max_shift < opts.shift_tolerance) break;
  }
  return res;
}

/// Clusters as groups (members ascending), skipping empty clusters.
inline std::vector<Group> kmeans_groups(const KMeansResult& res) {
  std::vector<Group> groups(res.k);
  for (std::size_t i = 0; i < res.assignments.size(); ++i) groups[res.assignments[i]].members.push_back(i);
  std::erase_if(groups, [](const Group& g) { return g.members.empty(); });
  for (auto& g : groups) g.provenance = SeedProvenance::user_supplied;
  return groups;
}

/// Each seed plus its n-1 most cosine-similar other rows (ties to the lowest
/// index), in rank order. Groups may overlap.
inline std::vector<Group> nns_groups(const EmbeddingDataset& ds, std::span<const std::size_t> seed_indices,
                                     std::size_t n, std::size_t threads = 1) {
  if (n < 1 || n > ds.size()) {
    throw Error(ErrorCode::InvalidN, "group size must lie in [1, " + std::to_string(ds.size()) + "], got " +
                                         std::to_string(n));
  }
  check_indices(ds, seed_indices);
  std::vector<Group> out(seed_indices.size());
  parallel_for(seed_indices.size(), threads, [&](std::size_t s) {
    const std::size_t seed = seed_indices[s];
    std::vector<std::pair<double, std::size_t>> ranked;
    ranked.reserve(ds.size() - 1);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (i != seed) ranked.emplace_back(cosine_similarity(ds.row(seed), ds.row(i)), i);
    }
    auto closer = [](const auto& a, const auto& b) {
      return a.first > b.first || (a.first == b.first && a.second < b.second);
    };
    std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n - 1), ranked.end(), closer);
    Group g;
    g.members.push_back(seed);
    for (std::size_t r = 0; r + 1 < n; ++r) g.members.push_back(ranked[r].second);
    g.provenance = SeedProvenance::user_supplied;
    out[s] = std::move(g);
  });
  return out;
}

enum class MatchMode { kmeans, lfa };

struct MatchResult {
  double parameter = 0.0;        // k for kmeans, tau for lfa
  double achieved_mean = 0.0;    // mean group size at `parameter`
  bool within_tolerance = false;
  std::size_t probes = 0;
};

inline constexpr double kSizeMatchTolerance = 0.10;
inline constexpr std::size_t kMaxThresholdProbes = 20;

/// k = round(N / target_n), clamped to [1, N].
inline std::size_t match_kmeans_k(std::size_t n_rows, std::size_t target_n) {
  if (target_n < 1 || target_n > n_rows) {
    throw Error(ErrorCode::InvalidN, "target size must lie in [1, N]");
  }
  const auto k = static_cast<std::size_t>(
      std::llround(static_cast<double>(n_rows) / static_cast<double>(target_n)));
  return std::clamp<std::size_t>(k, 1, n_rows);
}

inline double mean_grown_size(const EmbeddingDataset& ds, double tau, std::span<const Group> seeds,
                              std::size_t threads) {
  const auto outcomes = run_all(ds, tau, seeds, threads);
  double total = 0.0;
  std::size_t ok = 0;
  for (const auto& o : outcomes) {
    if (!o.ok()) continue;
    total += static_cast<double>(o.result->group.members.size());
    ++ok;
  }
  return ok == 0 ? 0.0 : total / static_cast<double>(ok);
}

/// Bisects tau over (0, 1): larger tau grows smaller groups. Returns the
/// closest probe; `within_tolerance` tells whether it is within 10%.
inline MatchResult match_lfa_threshold(const EmbeddingDataset& ds, std::size_t target_n,
                                       std::span<const Group> seeds, std::size_t threads = 1) {
  if (target_n < 1 || target_n > ds.size()) throw Error(ErrorCode::InvalidN, "target size must lie in [1, N]");
  if (seeds.empty()) throw Error(ErrorCode::InvalidArgument, "threshold matching needs at least one seed");
  const double target = static_cast<double>(target_n);
  double lo = 0.0;
  double hi = 1.0;
  MatchResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t probe = 0; probe < kMaxThresholdProbes; ++probe) {
    const double tau = 0.5 * (lo + hi);
    const double mean = mean_grown_size(ds, tau, seeds, threads);
    ++best.probes;
    const double gap = std::abs(mean - target);
    if (gap < best_gap) {
      best_gap = gap;
      best.parameter = tau;
      best.achieved_mean = mean;
    }
    if (gap <= kSizeMatchTolerance * target) {
      best.within_tolerance = true;
      break;
    }
    if (mean > target) {
      lo = tau;
    } else {
      hi = tau;
    }
  }
  return best;
}

/// Parameter yielding mean group size ~target_n: k for k-means, tau for LFA.
/// Throws Unachievable (naming the closest probe) when LFA cannot get within 10%.
inline MatchResult match_group_size(const EmbeddingDataset& ds, std::size_t target_n, MatchMode mode,
                                    std::span<const Group> seeds = {}, std::size_t threads = 1) {
  if (mode == MatchMode::kmeans) {
    MatchResult r;
    r.parameter = static_cast<double>(match_kmeans_k(ds.size(), target_n));
    r.achieved_mean = static_cast<double>(ds.size()) / r.parameter;
    r.within_tolerance = true;
    return r;
  }
  auto r = match_lfa_threshold(ds, target_n, seeds, threads);
  if (!r.within_tolerance) {
    throw Error(ErrorCode::Unachievable, "closest tau " + std::to_string(r.parameter) + " gives mean size " +
                                             std::to_string(r.achieved_mean) + " for target " +
                                             std::to_string(target_n));
  }
  return r;
}

}  // namespace lfa
