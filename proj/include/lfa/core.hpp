#pragma once

// Foundational types shared by every module: errors, vector primitives,
// the immutable embedding dataset and the group/direction records.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace lfa {

enum class ErrorCode {
  // core
  ZeroVector,
  DimensionMismatch,
  InvalidDataset,
  // init / lfa
  InvalidThreshold,
  EmptyGroup,
  DegenerateDirection,
  IndexOutOfRange,
  // baselines
  InvalidK,
  InvalidN,
  Unachievable,
  // metrics
  SchemaMismatch,
  TooFewMembers,
  NoEligibleGroups,
  NoGenuinePairs,
  NoImpostorPairs,
  InvalidArgument,
  // annotation
  UnknownClassToken,
  ImageSetMismatch,
  DuplicateVote,
  // traversal
  AntipodalInputs,
  // synth
  InvalidConfig,
  // io
  FormatError,
  IoError,
};

inline std::string_view error_module(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector:
    case ErrorCode::DimensionMismatch:
    case ErrorCode::InvalidDataset:
      return "core";
    case ErrorCode::InvalidThreshold:
    case ErrorCode::EmptyGroup:
    case ErrorCode::DegenerateDirection:
    case ErrorCode::IndexOutOfRange:
      return "lfa";
    case ErrorCode::InvalidK:
    case ErrorCode::InvalidN:
    case ErrorCode::Unachievable:
      return "baselines";
    case ErrorCode::SchemaMismatch:
    case ErrorCode::TooFewMembers:
    case ErrorCode::NoEligibleGroups:
    case ErrorCode::NoGenuinePairs:
    case ErrorCode::NoImpostorPairs:
    case ErrorCode::InvalidArgument:
      return "metrics";
    case ErrorCode::UnknownClassToken:
    case ErrorCode::ImageSetMismatch:
    case ErrorCode::DuplicateVote:
      return "annotation";
    case ErrorCode::AntipodalInputs:
      return "traversal";
    case ErrorCode::InvalidConfig:
      return "synth";
    case ErrorCode::FormatError:
    case ErrorCode::IoError:
      return "io";
  }
  return "unknown";
}

inline std::string_view error_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidDataset: return "InvalidDataset";
    case ErrorCode::InvalidThreshold: return "InvalidThreshold";
    case ErrorCode::EmptyGroup: return "EmptyGroup";
    case ErrorCode::DegenerateDirection: return "DegenerateDirection";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::InvalidN: return "InvalidN";
    case ErrorCode::Unachievable: return "Unachievable";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::TooFewMembers: return "TooFewMembers";
    case ErrorCode::NoEligibleGroups: return "NoEligibleGroups";
    case ErrorCode::NoGenuinePairs: return "NoGenuinePairs";
    case ErrorCode::NoImpostorPairs: return "NoImpostorPairs";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::UnknownClassToken: return "UnknownClassToken";
    case ErrorCode::ImageSetMismatch: return "ImageSetMismatch";
    case ErrorCode::DuplicateVote: return "DuplicateVote";
    case ErrorCode::AntipodalInputs: return "AntipodalInputs";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Module-qualified identifier such as "lfa.DegenerateDirection".
inline std::string qualified_code(ErrorCode code) {
  return std::string(error_module(code)) + "." + std::string(error_name(code));
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(qualified_code(code) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline constexpr double kZeroNormEpsilon = 1e-9;
inline constexpr double kUnitNormTolerance = 1e-6;
inline constexpr double kRenormalizeWarning = 1e-3;

using Vector = std::vector<double>;

/// Sequential left-to-right dot product. Every similarity in the toolkit goes
/// through this so that independently written routes produce identical bits.
inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "vector lengths " + std::to_string(a.size()) + " and " +
                    std::to_string(b.size()) + " differ");
  }
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += a[k] * b[k];
  return sum;
}

inline double norm(std::span<const double> v) {
  double sum = 0.0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

inline Vector normalize(std::span<const double> v) {
  const double n = norm(v);
  if (!(n > kZeroNormEpsilon)) {
    throw Error(ErrorCode::ZeroVector, "cannot normalize a vector with norm " + std::to_string(n));
  }
  Vector out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

inline double clamp_similarity(double s) { return std::clamp(s, -1.0, 1.0); }

/// Dot product of two unit vectors clamped to [-1, 1].
inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  return clamp_similarity(dot(a, b));
}

struct LatentDirection {
  Vector components;
  std::size_t source_group_size = 0;
  std::size_t source_identity_count = 0;
};

/// Normalized projection <e, v> / ||v||. Invariant under positive scaling of v.
inline double project_onto(std::span<const double> e, const LatentDirection& v) {
  const double n = norm(v.components);
  if (!(n > kZeroNormEpsilon)) {
    throw Error(ErrorCode::ZeroVector, "latent direction has zero norm");
  }
  return dot(e, v.components) / n;
}

enum class SeedProvenance { graph_component, user_supplied, singleton };

inline std::string_view to_string(SeedProvenance p) {
  switch (p) {
    case SeedProvenance::graph_component: return "graph-component";
    case SeedProvenance::user_supplied: return "user-supplied";
    case SeedProvenance::singleton: return "singleton";
  }
  return "user-supplied";
}

struct Group {
  std::vector<std::size_t> members;  // insertion order
  std::optional<LatentDirection> direction;
  double threshold_used = 0.0;
  SeedProvenance provenance = SeedProvenance::user_supplied;
};

/// N unit-norm rows of dimension d with dense identity labels.
///
/// Rows are re-normalized on construction; `renormalized_rows()` counts the
/// inputs whose norm was further than 1e-3 from one so callers can warn.
class EmbeddingDataset {
 public:
  EmbeddingDataset() = default;

  /// `rows` is row-major N x dim. `identity_keys` are arbitrary strings,
  /// mapped to dense labels in order of first appearance.
  static EmbeddingDataset from_rows(std::vector<std::string> image_ids,
                                    std::span<const double> rows, std::size_t dim,
                                    std::span<const std::string> identity_keys) {
    if (dim < 2) throw Error(ErrorCode::InvalidDataset, "embedding dimension must be >= 2");
    if (image_ids.empty()) throw Error(ErrorCode::InvalidDataset, "dataset must have at least one row");
    const std::size_t n = image_ids.size();
    if (rows.size() != n * dim) {
      throw Error(ErrorCode::InvalidDataset,
                  "expected " + std::to_string(n * dim) + " components, got " +
                      std::to_string(rows.size()));
    }
    if (identity_keys.size() != n) {
      throw Error(ErrorCode::InvalidDataset, "identity label count does not match row count");
    }

    EmbeddingDataset ds;
    ds.dim_ = dim;
    ds.data_.resize(n * dim);
    ds.identities_.resize(n);
    ds.image_ids_ = std::move(image_ids);

    std::unordered_map<std::string, std::size_t> seen_ids;
    seen_ids.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!seen_ids.emplace(ds.image_ids_[i], i).second) {
        throw Error(ErrorCode::InvalidDataset, "duplicate image_id '" + ds.image_ids_[i] + "'");
      }
    }
    ds.id_index_ = std::move(seen_ids);

    std::unordered_map<std::string, std::uint32_t> label_of;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] =
          label_of.emplace(identity_keys[i], static_cast<std::uint32_t>(ds.identity_names_.size()));
      if (inserted) ds.identity_names_.push_back(identity_keys[i]);
      ds.identities_[i] = it->second;

      const auto src = rows.subspan(i * dim, dim);
      const double len = norm(src);
      if (!(len > kZeroNormEpsilon)) {
        throw Error(ErrorCode::ZeroVector, "row " + std::to_string(i) + " has zero norm");
      }
      if (std::abs(len - 1.0) > kRenormalizeWarning) ++ds.renormalized_;
      for (std::size_t k = 0; k < dim; ++k) ds.data_[i * dim + k] = src[k] / len;
    }
    return ds;
  }

  std::size_t size() const noexcept { return image_ids_.size(); }
  std::size_t dim() const noexcept { return dim_; }

  std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
  std::span<const double> data() const noexcept { return data_; }

  std::uint32_t identity(std::size_t i) const { return identities_[i]; }
  std::span<const std::uint32_t> identities() const noexcept { return identities_; }
  std::size_t identity_count() const noexcept { return identity_names_.size(); }
  const std::string& identity_name(std::uint32_t label) const { return identity_names_[label]; }

  const std::string& image_id(std::size_t i) const { return image_ids_[i]; }
  const std::vector<std::string>& image_ids() const noexcept { return image_ids_; }

  std::optional<std::size_t> find(const std::string& image_id) const {
    auto it = id_index_.find(image_id);
    if (it == id_index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t renormalized_rows() const noexcept { return renormalized_; }

 private:
  std::size_t dim_ = 0;
  std::vector<double> data_;
  std::vector<std::uint32_t> identities_;
  std::vector<std::string> identity_names_;
  std::vector<std::string> image_ids_;
  std::unordered_map<std::string, std::size_t> id_index_;
  std::size_t renormalized_ = 0;
};

inline void check_indices(const EmbeddingDataset& ds, std::span<const std::size_t> indices) {
  for (std::size_t i : indices) {
    if (i >= ds.size()) {
      throw Error(ErrorCode::IndexOutOfRange,
                  "index " + std::to_string(i) + " >= dataset size " + std::to_string(ds.size()));
    }
  }
}

}  // namespace lfa
