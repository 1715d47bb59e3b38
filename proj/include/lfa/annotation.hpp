#pragma once

// Majority-vote consensus over several annotators' categorical labels.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "lfa/attributes.hpp"
#include "lfa/core.hpp"

namespace lfa {

template <typename Label>
struct MergedVote {
  Label label;                      // the unknown marker when there is no consensus
  std::optional<double> agreement;  // votes for label / all annotators
};

namespace detail {

template <typename Label>
MergedVote<Label> merge_votes_impl(std::span<const Label> votes, std::size_t annotator_count,
                                   const Label& unknown) {
  if (votes.size() != annotator_count) {
    throw Error(ErrorCode::InvalidArgument, "expected " + std::to_string(annotator_count) + " votes, got " +
                                                std::to_string(votes.size()));
  }
  std::map<Label, std::size_t> counts;
  std::size_t valid = 0;
  for (const auto& v : votes) {
    if (v == unknown) continue;
    ++counts[v];
    ++valid;
  }
  // At most one label can hold a strict majority, so no tie-break is needed.
  for (const auto& [label, count] : counts) {
    if (2 * count > valid) {
      return {label, static_cast<double>(count) / static_cast<double>(annotator_count)};
    }
  }
  return {unknown, std::nullopt};
}

}  // namespace detail

/// Drops "unknown" votes; the label with more than half of the remaining
/// votes wins. Agreement is its vote count over all annotators.
inline MergedVote<std::string> merge_votes(std::span<const std::string> votes, std::size_t annotator_count) {
  return detail::merge_votes_impl<std::string>(votes, annotator_count, std::string(kUnknownToken));
}

inline MergedVote<std::int32_t> merge_votes(std::span<const std::int32_t> votes, std::size_t annotator_count) {
  return detail::merge_votes_impl<std::int32_t>(votes, annotator_count, kUnknownCode);
}

struct ConsensusCell {
  std::int32_t code = kUnknownCode;
  std::optional<double> agreement;
};

struct ClassStats {
  std::string label;
  std::size_t count = 0;
  double percentage = 0.0;  // of all images, in percent
  std::optional<double> mean_agreement;
  std::optional<double> std_agreement;  // population standard deviation
};

struct AttributeStats {
  std::string attribute;
  std::vector<ClassStats> classes;  // schema order
  std::size_t unknown_count = 0;
  double unknown_percentage = 0.0;
};

struct ConsensusTable {
  std::vector<AttributeSchema> schema;
  std::vector<std::string> image_ids;
  std::vector<ConsensusCell> cells;  // image-major, one per attribute
  std::size_t annotator_count = 0;
  std::size_t dropped_images = 0;    // images not shared by every annotator (intersect mode)
  std::vector<AttributeStats> stats;

  const ConsensusCell& cell(std::size_t image, std::size_t attribute) const {
    return cells[image * schema.size() + attribute];
  }
  const std::string& label(std::size_t image, std::size_t attribute) const {
    static const std::string unknown(kUnknownToken);
    const auto code = cell(image, attribute).code;
    return code == kUnknownCode ? unknown : schema[attribute].classes[static_cast<std::size_t>(code)];
  }
};

inline bool same_schema(const std::vector<AttributeSchema>& a, const std::vector<AttributeSchema>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].name != b[i].name || a[i].classes != b[i].classes) return false;
  }
  return true;
}

/// Merges every (image, attribute) cell and aggregates per-class counts and
/// agreement statistics. Cells without consensus are excluded from the
/// agreement statistics. Image order follows the first annotator.
///
/// Annotators must cover the same images; with `intersect` the shared images
/// are kept and the rest counted in `dropped_images`.
inline ConsensusTable consensus_table(std::span<const AttributeTable> annotators, bool intersect = false) {
  if (annotators.size() < 2) throw Error(ErrorCode::InvalidArgument, "consensus needs at least two annotators");
  const auto& first = annotators.front();
  for (const auto& t : annotators) {
    if (!same_schema(t.schema(), first.schema())) {
      throw Error(ErrorCode::SchemaMismatch, "annotator tables disagree on attributes or classes");
    }
  }

  ConsensusTable out;
  out.schema = first.schema();
  out.annotator_count = annotators.size();

  std::set<std::string> all_ids;
  for (const auto& t : annotators) all_ids.insert(t.image_ids().begin(), t.image_ids().end());
  for (std::size_t r = 0; r < first.rows(); ++r) {
    const auto& id = first.image_id(r);
    const bool shared = std::all_of(annotators.begin(), annotators.end(),
                                    [&](const AttributeTable& t) { return t.find(id).has_value(); });
    if (shared) out.image_ids.push_back(id);
  }
  if (out.image_ids.size() != all_ids.size() && !intersect) {
    throw Error(ErrorCode::ImageSetMismatch, std::to_string(all_ids.size() - out.image_ids.size()) +
                                                 " images are not covered by every annotator");
  }
  out.dropped_images = all_ids.size() - out.image_ids.size();

  const std::size_t n_attr = out.schema.size();
  const std::size_t n_ann = annotators.size();
  out.cells.resize(out.image_ids.size() * n_attr);
  std::vector<std::int32_t> votes(n_ann);
  for (std::size_t i = 0; i < out.image_ids.size(); ++i) {
    for (std::size_t a = 0; a < n_attr; ++a) {
      for (std::size_t k = 0; k < n_ann; ++k) {
        votes[k] = annotators[k].row(*annotators[k].find(out.image_ids[i]))[a];
      }
      const auto merged = merge_votes(std::span<const std::int32_t>(votes), n_ann);
      out.cells[i * n_attr + a] = {merged.label, merged.agreement};
    }
  }

  const double total = static_cast<double>(out.image_ids.size());
  for (std::size_t a = 0; a < n_attr; ++a) {
    AttributeStats st;
    st.attribute = out.schema[a].name;
    std::vector<std::vector<double>> agreements(out.schema[a].classes.size());
    for (std::size_t i = 0; i < out.image_ids.size(); ++i) {
      const auto& c = out.cells[i * n_attr + a];
      if (c.code == kUnknownCode) {
        ++st.unknown_count;
      } else {
        agreements[static_cast<std::size_t>(c.code)].push_back(*c.agreement);
      }
    }
    for (std::size_t c = 0; c < agreements.size(); ++c) {
      ClassStats cs;
      cs.label = out.schema[a].classes[c];
      cs.count = agreements[c].size();
      cs.percentage = total > 0 ? 100.0 * static_cast<double>(cs.count) / total : 0.0;
      if (!agreements[c].empty()) {
        double mean = 0.0;
        for (double x : agreements[c]) mean += x;
        mean /= static_cast<double>(agreements[c].size());
        double ss = 0.0;
        for (double x : agreements[c]) ss += (x - mean) * (x - mean);
        cs.mean_agreement = mean;
        cs.std_agreement = std::sqrt(ss / static_cast<double>(agreements[c].size()));
      }
      st.classes.push_back(std::move(cs));
    }
    st.unknown_percentage = total > 0 ? 100.0 * static_cast<double>(st.unknown_count) / total : 0.0;
    out.stats.push_back(std::move(st));
  }
  return out;
}

}  // namespace lfa
