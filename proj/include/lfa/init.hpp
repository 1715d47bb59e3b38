#pragma once

// Seed groups from the cosine-similarity graph: every connected component of
// the graph with edges at similarity >= threshold is one initial group.

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <vector>

#include "lfa/core.hpp"
#include "lfa/lfa.hpp"
#include "lfa/parallel.hpp"

namespace lfa {

inline constexpr double kDefaultGraphThreshold = 0.5;

struct SimilarityGraph {
  std::size_t node_count = 0;
  std::vector<std::vector<std::size_t>> adjacency;  // sorted ascending
  double threshold = kDefaultGraphThreshold;

  std::size_t edge_count() const {
    std::size_t twice = 0;
    for (const auto& a : adjacency) twice += a.size();
    return twice / 2;
  }
};

/// Exact all-pairs graph. Rows are processed in blocks; each row's upper
/// triangle is computed independently so the result does not depend on the
/// number of threads.
inline SimilarityGraph build_similarity_graph(const EmbeddingDataset& ds,
                                              double threshold = kDefaultGraphThreshold,
                                              std::size_t threads = 1) {
  if (!(threshold > -1.0 && threshold < 1.0)) {
    throw Error(ErrorCode::InvalidThreshold,
                "graph threshold must lie in (-1, 1), got " + std::to_string(threshold));
  }
  const std::size_t n = ds.size();
  constexpr std::size_t kBlock = 64;
  const std::size_t blocks = (n + kBlock - 1) / kBlock;

  std::vector<std::vector<std::size_t>> upper(n);
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t i_begin = b * kBlock;
    const std::size_t i_end = std::min(n, i_begin + kBlock);
    // j-tiles keep a block of rows hot against a block of columns
    for (std::size_t j_tile = i_begin; j_tile < n; j_tile += kBlock) {
      const std::size_t j_end = std::min(n, j_tile + kBlock);
      for (std::size_t i = i_begin; i < i_end; ++i) {
        const auto ei = ds.row(i);
        for (std::size_t j = std::max(j_tile, i + 1); j < j_end; ++j) {
          if (cosine_similarity(ei, ds.row(j)) >= threshold) upper[i].push_back(j);
        }
      }
    }
  });

  SimilarityGraph g;
  g.node_count = n;
  g.threshold = threshold;
  g.adjacency.resize(n);
  // Appending in increasing i keeps every list sorted: lower neighbours of j
  // arrive before j's own upper list.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j : upper[i]) {
      g.adjacency[i].push_back(j);
      g.adjacency[j].push_back(i);
    }
  }
  return g;
}

/// Disjoint-set forest with path halving and union by size.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

/// Components ordered by their smallest member, members ascending. Isolated
/// nodes become singleton groups. No directions are attached.
inline std::vector<Group> connected_components(const SimilarityGraph& g) {
  UnionFind uf(g.node_count);
  for (std::size_t i = 0; i < g.node_count; ++i) {
    for (std::size_t j : g.adjacency[i]) {
      if (j > i) uf.unite(i, j);
    }
  }

  std::vector<std::size_t> slot(g.node_count, SIZE_MAX);
  std::vector<Group> groups;
  for (std::size_t i = 0; i < g.node_count; ++i) {
    const std::size_t root = uf.find(i);
    if (slot[root] == SIZE_MAX) {
      slot[root] = groups.size();
      groups.emplace_back();
      groups.back().threshold_used = g.threshold;
    }
    groups[slot[root]].members.push_back(i);
  }
  for (auto& grp : groups) {
    grp.provenance = grp.members.size() == 1 ? SeedProvenance::singleton : SeedProvenance::graph_component;
  }
  return groups;
}

/// Graph construction, component extraction and per-component directions.
/// Components whose weighted sum is degenerate keep an empty direction.
inline std::vector<Group> init_groups(const EmbeddingDataset& ds,
                                      double threshold = kDefaultGraphThreshold,
                                      std::size_t threads = 1) {
  auto groups = connected_components(build_similarity_graph(ds, threshold, threads));
  for (auto& grp : groups) {
    try {
      grp.direction = latent_direction(ds, grp.members);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateDirection) throw;
    }
  }
  return groups;
}

}  // namespace lfa
