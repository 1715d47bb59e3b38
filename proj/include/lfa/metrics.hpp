#pragma once

// Group evaluation: attribute coherence and biometric error rates computed
// from the genuine/impostor score distributions inside each group.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lfa/attributes.hpp"
#include "lfa/core.hpp"
#include "lfa/parallel.hpp"
#include "lfa/random.hpp"

namespace lfa {

// ---------------------------------------------------------------------------
// Semantic coherence

/// Number of attributes on which both rows are known and differ.
inline std::size_t attribute_distance(std::span<const std::int32_t> a, std::span<const std::int32_t> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::SchemaMismatch, "attribute rows have " + std::to_string(a.size()) + " and " +
                                               std::to_string(b.size()) + " columns");
  }
  std::size_t diff = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    if (a[k] != kUnknownCode && b[k] != kUnknownCode && a[k] != b[k]) ++diff;
  }
  return diff;
}

struct CoherenceTotals {
  double distance_sum = 0.0;
  std::size_t pairs = 0;
};

/// Attribute rows of the group's members that have one, in member order.
inline std::vector<std::size_t> attribute_rows(const EmbeddingDataset& ds, const Group& group,
                                               const AttributeTable& attrs) {
  std::vector<std::size_t> rows;
  rows.reserve(group.members.size());
  for (std::size_t m : group.members) {
    if (m >= ds.size()) throw Error(ErrorCode::IndexOutOfRange, "group member outside dataset");
    if (auto r = attrs.find(ds.image_id(m))) rows.push_back(*r);
  }
  return rows;
}

inline CoherenceTotals coherence_totals(const EmbeddingDataset& ds, const Group& group,
                                        const AttributeTable& attrs) {
  const auto rows = attribute_rows(ds, group, attrs);
  CoherenceTotals t;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = i + 1; j < rows.size(); ++j) {
      t.distance_sum += static_cast<double>(attribute_distance(attrs.row(rows[i]), attrs.row(rows[j])));
      ++t.pairs;
    }
  }
  return t;
}

/// Mean attribute distance over all unordered member pairs.
inline double group_coherence(const EmbeddingDataset& ds, const Group& group, const AttributeTable& attrs) {
  const auto t = coherence_totals(ds, group, attrs);
  if (t.pairs == 0) throw Error(ErrorCode::TooFewMembers, "group needs at least two members with attributes");
  return t.distance_sum / static_cast<double>(t.pairs);
}

/// Pair-pooled coherence: total distance over all intra-group pairs of every
/// eligible group, divided by the total pair count.
inline double method_coherence(const EmbeddingDataset& ds, std::span<const Group> groups,
                               const AttributeTable& attrs) {
  CoherenceTotals pooled;
  for (const auto& g : groups) {
    const auto t = coherence_totals(ds, g, attrs);
    pooled.distance_sum += t.distance_sum;
    pooled.pairs += t.pairs;
  }
  if (pooled.pairs == 0) throw Error(ErrorCode::NoEligibleGroups, "no group has two attributed members");
  return pooled.distance_sum / static_cast<double>(pooled.pairs);
}

// ---------------------------------------------------------------------------
// Score distributions

struct ScoreSet {
  std::vector<double> genuine;
  std::vector<double> impostor;
  std::size_t n_images = 0;
  std::size_t n_identities = 0;

  bool has_genuine() const noexcept { return !genuine.empty(); }
  bool has_impostor() const noexcept { return !impostor.empty(); }
};

/// Cosine score for every member pair: same identity -> genuine, otherwise
/// impostor. Pairs are enumerated in member order (i < j).
inline ScoreSet collect_scores(const EmbeddingDataset& ds, const Group& group) {
  if (group.members.size() < 2) throw Error(ErrorCode::TooFewMembers, "score collection needs >= 2 members");
  check_indices(ds, group.members);
  ScoreSet s;
  s.n_images = group.members.size();
  std::vector<std::uint32_t> ids;
  for (std::size_t m : group.members) ids.push_back(ds.identity(m));
  std::sort(ids.begin(), ids.end());
  s.n_identities = static_cast<std::size_t>(std::unique(ids.begin(), ids.end()) - ids.begin());

  const auto& m = group.members;
  for (std::size_t i = 0; i < m.size(); ++i) {
    for (std::size_t j = i + 1; j < m.size(); ++j) {
      const double score = cosine_similarity(ds.row(m[i]), ds.row(m[j]));
      if (ds.identity(m[i]) == ds.identity(m[j])) {
        s.genuine.push_back(score);
      } else {
        s.impostor.push_back(score);
      }
    }
  }
  return s;
}

inline void require_impostors(const ScoreSet& s) {
  if (!s.has_impostor()) throw Error(ErrorCode::NoImpostorPairs, "score set has no impostor pairs");
}
inline void require_genuines(const ScoreSet& s) {
  if (!s.has_genuine()) throw Error(ErrorCode::NoGenuinePairs, "score set has no genuine pairs");
}

namespace detail {

inline double fraction_at_least(std::span<const double> scores, double t) {
  std::size_t hits = 0;
  for (double x : scores) hits += x >= t;
  return static_cast<double>(hits) / static_cast<double>(scores.size());
}

// Sorted-copy counterparts used by the sweeps.
inline double sorted_fraction_at_least(std::span<const double> sorted, double t) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(sorted.end() - it) / static_cast<double>(sorted.size());
}
inline double sorted_fraction_below(std::span<const double> sorted, double t) {
  const auto it = std::lower_bound(sorted.begin(), sorted.end(), t);
  return static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
}

}  // namespace detail

/// Fraction of impostor scores >= t.
inline double fmr_at(const ScoreSet& s, double t) {
  require_impostors(s);
  return detail::fraction_at_least(s.impostor, t);
}

/// Fraction of genuine scores < t.
inline double fnmr_at(const ScoreSet& s, double t) {
  require_genuines(s);
  std::size_t misses = 0;
  for (double x : s.genuine) misses += x < t;
  return static_cast<double>(misses) / static_cast<double>(s.genuine.size());
}

/// Equal error rate. Thresholds are swept over the sorted union of scores; at
/// the threshold minimising |FMR - FNMR| (lowest threshold on ties) the
/// midpoint (FMR + FNMR) / 2 is returned.
inline double eer(const ScoreSet& s) {
  require_genuines(s);
  require_impostors(s);
  std::vector<double> gen = s.genuine;
  std::vector<double> imp = s.impostor;
  std::sort(gen.begin(), gen.end());
  std::sort(imp.begin(), imp.end());
  std::vector<double> grid;
  grid.reserve(gen.size() + imp.size());
  std::merge(gen.begin(), gen.end(), imp.begin(), imp.end(), std::back_inserter(grid));
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  double best_gap = 2.0;
  double best = 0.0;
  for (double t : grid) {
    const double fmr = detail::sorted_fraction_at_least(imp, t);
    const double fnmr = detail::sorted_fraction_below(gen, t);
    const double gap = std::abs(fmr - fnmr);
    if (gap < best_gap) {
      best_gap = gap;
      best = 0.5 * (fmr + fnmr);
    }
  }
  return best;
}

/// Lowest threshold whose FMR is at most `target`. Candidates are -1, every
/// impostor score, and the next double above the largest impostor score
/// (FMR 0), so every target in (0, 1] has an answer.
inline double threshold_at_fmr(const ScoreSet& s, double target) {
  require_impostors(s);
  if (!(target > 0.0 && target <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "FMR target must lie in (0, 1]");
  }
  std::vector<double> imp = s.impostor;
  std::sort(imp.begin(), imp.end());
  std::vector<double> grid{-1.0};
  for (double x : imp) {
    if (x > grid.back()) grid.push_back(x);
  }
  grid.push_back(std::nextafter(imp.back(), 2.0));
  for (double t : grid) {
    if (detail::sorted_fraction_at_least(imp, t) <= target) return t;
  }
  return grid.back();
}

/// FNMR at the operating point where FMR first drops to `target`.
inline double fnmr_at_fmr(const ScoreSet& s, double target) {
  require_genuines(s);
  return fnmr_at(s, threshold_at_fmr(s, target));
}

struct CurvePoint {
  double threshold = 0.0;
  double rate = 0.0;
};

/// FMR at each threshold of an ascending grid.
inline std::vector<CurvePoint> fmr_curve(const ScoreSet& s, std::span<const double> thresholds) {
  require_impostors(s);
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw Error(ErrorCode::InvalidArgument, "threshold grid must be ascending");
  }
  std::vector<double> imp = s.impostor;
  std::sort(imp.begin(), imp.end());
  std::vector<CurvePoint> out;
  out.reserve(thresholds.size());
  for (double t : thresholds) out.push_back({t, detail::sorted_fraction_at_least(imp, t)});
  return out;
}

/// Evenly spaced grid lo, lo+step, ..., up to hi inclusive.
inline std::vector<double> threshold_grid(double lo, double hi, std::size_t points) {
  std::vector<double> g(points);
  for (std::size_t i = 0; i < points; ++i) {
    g[i] = points == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  }
  return g;
}

/// Mean impostor similarity; high values flag a biased subpopulation.
inline double impostor_mean(const ScoreSet& s) {
  require_impostors(s);
  double sum = 0.0;
  for (double x : s.impostor) sum += x;
  return sum / static_cast<double>(s.impostor.size());
}

// ---------------------------------------------------------------------------
// Bootstrap

enum class CiMethod { normal, percentile };

struct BootstrapCi {
  double mean = 0.0;
  double halfwidth = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::size_t valid_iterations = 0;
  std::size_t degenerate_iterations = 0;  // resamples with a single identity
};

inline constexpr double kNormalQuantile975 = 1.96;

/// Image-level bootstrap of FMR@t. Each iteration resamples the members with
/// replacement (RNG stream = iteration index), rebuilds the cross-identity
/// pairs among the resample and records FMR@t. The normal method reports
/// halfwidth = 1.96 * sample std of the bootstrap FMRs around their mean; the
/// percentile method uses the 2.5/97.5 percentiles and half their distance.
inline BootstrapCi bootstrap_fmr_ci(const EmbeddingDataset& ds, const Group& group, double t,
                                    std::size_t iterations, std::uint64_t rng_seed,
                                    CiMethod method = CiMethod::normal, std::size_t threads = 1) {
  if (iterations < 2) throw Error(ErrorCode::InvalidArgument, "bootstrap needs at least 2 iterations");
  require_impostors(collect_scores(ds, group));

  const auto& m = group.members;
  const std::size_t n = m.size();
  std::vector<double> score(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      score[i * n + j] = score[j * n + i] = cosine_similarity(ds.row(m[i]), ds.row(m[j]));
    }
  }

  std::vector<std::optional<double>> fmr(iterations);
  parallel_for(iterations, threads, [&](std::size_t it) {
    Rng rng = Rng::stream(rng_seed, it);
    std::vector<std::size_t> pick(n);
    for (auto& p : pick) p = static_cast<std::size_t>(rng.below(n));
    std::size_t pairs = 0;
    std::size_t hits = 0;
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        if (ds.identity(m[pick[a]]) == ds.identity(m[pick[b]])) continue;
        ++pairs;
        hits += score[pick[a] * n + pick[b]] >= t;
      }
    }
    if (pairs > 0) fmr[it] = static_cast<double>(hits) / static_cast<double>(pairs);
  });

  BootstrapCi ci;
  std::vector<double> values;
  for (const auto& f : fmr) {
    if (f) {
      values.push_back(*f);
    } else {
      ++ci.degenerate_iterations;
    }
  }
  ci.valid_iterations = values.size();
  if (values.size() < 2) throw Error(ErrorCode::NoImpostorPairs, "fewer than two bootstrap resamples had impostor pairs");

  double sum = 0.0;
  for (double v : values) sum += v;
  ci.mean = sum / static_cast<double>(values.size());
  if (method == CiMethod::normal) {
    double ss = 0.0;
    for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    ci.halfwidth = kNormalQuantile975 * sd;
    ci.lower = ci.mean - ci.halfwidth;
    ci.upper = ci.mean + ci.halfwidth;
  } else {
    std::sort(values.begin(), values.end());
    auto quantile = [&](double q) {
      const double pos = q * static_cast<double>(values.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, values.size() - 1);
      return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
    };
    ci.lower = quantile(0.025);
    ci.upper = quantile(0.975);
    ci.halfwidth = 0.5 * (ci.upper - ci.lower);
  }
  return ci;
}

// ---------------------------------------------------------------------------
// Bias report

/// Population standard deviation (divide by count).
inline double population_stddev(std::span<const double> values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size()));
}

struct BiasOptions {
  double fixed_threshold = 0.2;
  std::vector<double> fmr_targets{0.01, 0.001};
  std::size_t bootstrap_iterations = 1000;
  std::uint64_t bootstrap_seed = 0;
  CiMethod ci_method = CiMethod::normal;
  std::vector<double> curve_thresholds = threshold_grid(-0.2, 1.0, 61);
  std::size_t threads = 1;
};

struct GroupBias {
  std::string name;
  std::size_t n_images = 0;
  std::size_t n_identities = 0;
  std::size_t n_genuine = 0;
  std::size_t n_impostor = 0;
  std::optional<double> eer;
  std::vector<std::optional<double>> fnmr_at_targets;  // parallel to BiasOptions::fmr_targets
  std::optional<double> fmr_fixed;
  std::optional<BootstrapCi> fmr_ci;
  std::optional<double> impostor_mean;
  std::vector<CurvePoint> fmr_curve;
  std::vector<std::string> notes;  // missing-side flags and skipped metrics
};

struct BiasReport {
  BiasOptions options;
  std::vector<GroupBias> groups;
  std::vector<std::size_t> comparison;  // indices into groups used for sigma
  std::optional<double> sigma_eer;
  std::vector<std::optional<double>> sigma_fnmr_at_targets;
  std::optional<double> sigma_fmr_fixed;
};

inline GroupBias evaluate_group(const EmbeddingDataset& ds, const Group& group, std::string name,
                                const BiasOptions& opt) {
  GroupBias gb;
  gb.name = std::move(name);
  gb.n_images = group.members.size();
  gb.fnmr_at_targets.assign(opt.fmr_targets.size(), std::nullopt);
  if (group.members.size() < 2) {
    gb.notes.push_back(qualified_code(ErrorCode::TooFewMembers));
    return gb;
  }
  const ScoreSet s = collect_scores(ds, group);
  gb.n_identities = s.n_identities;
  gb.n_genuine = s.genuine.size();
  gb.n_impostor = s.impostor.size();
  if (!s.has_genuine()) gb.notes.push_back(qualified_code(ErrorCode::NoGenuinePairs));
  if (!s.has_impostor()) gb.notes.push_back(qualified_code(ErrorCode::NoImpostorPairs));

  if (s.has_impostor()) {
    gb.fmr_fixed = fmr_at(s, opt.fixed_threshold);
    gb.impostor_mean = impostor_mean(s);
    gb.fmr_curve = fmr_curve(s, opt.curve_thresholds);
    if (opt.bootstrap_iterations >= 2) {
      try {
        gb.fmr_ci = bootstrap_fmr_ci(ds, group, opt.fixed_threshold, opt.bootstrap_iterations, opt.bootstrap_seed,
                                     opt.ci_method, opt.threads);
      } catch (const Error& e) {
        gb.notes.push_back(e.what());
      }
    }
  }
  if (s.has_genuine() && s.has_impostor()) {
    gb.eer = eer(s);
    for (std::size_t k = 0; k < opt.fmr_targets.size(); ++k) gb.fnmr_at_targets[k] = fnmr_at_fmr(s, opt.fmr_targets[k]);
  }
  return gb;
}

/// Per-group metrics and the cross-group standard deviation of each metric
/// over `comparison` (indices into `groups`; empty means all groups). Groups
/// missing a metric are left out of that metric's sigma.
inline BiasReport bias_report(const EmbeddingDataset& ds, std::span<const Group> groups,
                              std::span<const std::string> names, std::vector<std::size_t> comparison,
                              const BiasOptions& opt) {
  if (names.size() != groups.size()) throw Error(ErrorCode::InvalidArgument, "one name per group required");
  BiasReport rep;
  rep.options = opt;
  for (std::size_t g = 0; g < groups.size(); ++g) rep.groups.push_back(evaluate_group(ds, groups[g], names[g], opt));
  if (comparison.empty()) {
    for (std::size_t g = 0; g < groups.size(); ++g) comparison.push_back(g);
  }
  for (std::size_t g : comparison) {
    if (g >= groups.size()) throw Error(ErrorCode::InvalidArgument, "comparison index out of range");
  }
  rep.comparison = comparison;

  auto sigma_of = [&](auto&& get) -> std::optional<double> {
    std::vector<double> v;
    for (std::size_t g : comparison) {
      if (auto x = get(rep.groups[g])) v.push_back(*x);
    }
    if (v.empty()) return std::nullopt;
    return population_stddev(v);
  };
  rep.sigma_eer = sigma_of([](const GroupBias& b) { return b.eer; });
  rep.sigma_fmr_fixed = sigma_of([](const GroupBias& b) { return b.fmr_fixed; });
  for (std::size_t k = 0; k < opt.fmr_targets.size(); ++k) {
    rep.sigma_fnmr_at_targets.push_back(sigma_of([k](const GroupBias& b) { return b.fnmr_at_targets[k]; }));
  }
  return rep;
}

}  // namespace lfa
