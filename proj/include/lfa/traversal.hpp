#pragma once

// Great-circle traversal of unit embeddings toward (t > 0) or away from
// (t < 0) a latent direction.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lfa/core.hpp"
#include "lfa/parallel.hpp"

namespace lfa {

inline constexpr double kParallelAngle = 1e-6;
inline constexpr double kAntipodalAngle = 1e-6;

/// sin((1-t)θ)/sin θ · p0 + sin(tθ)/sin θ · p1 with θ = acos(p0·p1),
/// re-normalized. t outside [0, 1] extrapolates along the same great circle.
/// For θ below 1e-6 this falls back to normalized linear interpolation.
inline Vector slerp(std::span<const double> p0, std::span<const double> p1, double t) {
  if (!(norm(p0) > kZeroNormEpsilon) || !(norm(p1) > kZeroNormEpsilon)) {
    throw Error(ErrorCode::ZeroVector, "slerp endpoints must be nonzero");
  }
  const double cos_theta = cosine_similarity(p0, p1);
  const double theta = std::acos(cos_theta);
  if (std::numbers::pi - theta < kAntipodalAngle) {
    throw Error(ErrorCode::AntipodalInputs, "great circle through antipodal points is undefined");
  }
  if (t == 0.0) return Vector(p0.begin(), p0.end());
  if (t == 1.0) return Vector(p1.begin(), p1.end());

  Vector out(p0.size());
  if (theta < kParallelAngle) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = (1.0 - t) * p0[k] + t * p1[k];
  } else {
    const double s = std::sin(theta);
    const double a = std::sin((1.0 - t) * theta) / s;
    const double b = std::sin(t * theta) / s;
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = a * p0[k] + b * p1[k];
  }
  return normalize(out);
}

struct TraversalCell {
  std::size_t target = 0;  // dataset row
  double strength = 0.0;
  std::optional<Vector> embedding;
  std::string error;  // set when embedding is absent
};

/// slerp(e, normalize(direction), t) for every target row and strength,
/// target-major. A failing cell records its error and the batch continues.
inline std::vector<TraversalCell> traverse_group(const EmbeddingDataset& ds, std::span<const std::size_t> targets,
                                                 const LatentDirection& direction, std::span<const double> strengths,
                                                 std::size_t threads = 1) {
  check_indices(ds, targets);
  if (direction.components.size() != ds.dim()) {
    throw Error(ErrorCode::DimensionMismatch, "direction dimension does not match the dataset");
  }
  for (double t : strengths) {
    if (!std::isfinite(t)) throw Error(ErrorCode::InvalidArgument, "traversal strengths must be finite");
  }
  const Vector unit = normalize(direction.components);
  std::vector<TraversalCell> cells(targets.size() * strengths.size());
  parallel_for(cells.size(), threads, [&](std::size_t c) {
    auto& cell = cells[c];
    cell.target = targets[c / strengths.size()];
    cell.strength = strengths[c % strengths.size()];
    try {
      cell.embedding = slerp(ds.row(cell.target), unit, cell.strength);
    } catch (const Error& e) {
      cell.error = e.what();
    }
  });
  return cells;
}

}  // namespace lfa
