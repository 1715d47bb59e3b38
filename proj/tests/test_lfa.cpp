#include <gtest/gtest.h>

#include <cmath>

#include "lfa/init.hpp"
#include "lfa/lfa.hpp"
#include "lfa/synth.hpp"
#include "support.hpp"

using namespace lfa;
using lfa::testing::make_dataset;
using lfa::testing::random_dataset;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

Group seed_of(std::vector<std::size_t> members) {
  Group g;
  g.members = std::move(members);
  return g;
}

}  // namespace

TEST(LatentDirection, WeightsEachIdentityEqually) {
  // Identity a has three images on +x, identity b one image on +y.
  const auto ds = make_dataset({{1, 0}, {1, 0}, {1, 0}, {0, 1}}, {"a", "a", "a", "b"});
  const std::vector<std::size_t> all{0, 1, 2, 3};
  const auto v = latent_direction(ds, all);
  EXPECT_DOUBLE_EQ(v.components[0], 1.0);
  EXPECT_DOUBLE_EQ(v.components[1], 1.0);
  EXPECT_EQ(v.source_group_size, 4u);
  EXPECT_EQ(v.source_identity_count, 2u);
}

TEST(LatentDirection, Errors) {
  const auto ds = make_dataset({{1, 0}, {-1, 0}}, {"a", "b"});
  EXPECT_EQ(code_of([&] { latent_direction(ds, std::vector<std::size_t>{}); }), ErrorCode::EmptyGroup);
  EXPECT_EQ(code_of([&] { latent_direction(ds, std::vector<std::size_t>{0, 1}); }), ErrorCode::DegenerateDirection);
  EXPECT_EQ(code_of([&] { latent_direction(ds, std::vector<std::size_t>{5}); }), ErrorCode::IndexOutOfRange);
}

TEST(LfaGrow, StopsBelowTauAndRecordsTrace) {
  const double s = std::sqrt(0.5);
  const auto ds = make_dataset({{1, 0, 0}, {s, s, 0}, {0, 1, 0}, {0, 0, 1}}, {"a", "b", "c", "d"});
  const auto r = lfa_grow(ds, seed_of({0}), 0.6);
  ASSERT_EQ(r.trace.steps.size(), 1u);
  EXPECT_EQ(r.trace.steps[0].index, 1u);
  EXPECT_NEAR(r.trace.steps[0].projection, s, 1e-15);
  EXPECT_EQ(r.trace.steps[0].identity_count, 1u);
  EXPECT_EQ(r.trace.steps[0].group_size, 1u);
  EXPECT_EQ(r.group.members, (std::vector<std::size_t>{0, 1}));
  ASSERT_TRUE(r.trace.stop_projection.has_value());
  EXPECT_LT(*r.trace.stop_projection, 0.6);
  EXPECT_EQ(r.group.direction->source_group_size, 2u);
  EXPECT_EQ(r.group.threshold_used, 0.6);
}

TEST(LfaGrow, TiesGoToLowestIndex) {
  const auto ds = make_dataset({{1, 0}, {0.5, 0.5}, {1, 0}, {1, 0}}, {"a", "b", "c", "d"});
  const auto r = lfa_grow(ds, seed_of({0}), 0.9);
  ASSERT_GE(r.trace.steps.size(), 2u);
  EXPECT_EQ(r.trace.steps[0].index, 2u);
  EXPECT_EQ(r.trace.steps[1].index, 3u);
}

TEST(LfaGrow, EmptyPoolEndsWithoutStopProjection) {
  const auto ds = make_dataset({{1, 0}, {1, 0.01}}, {"a", "b"});
  const auto r = lfa_grow(ds, seed_of({0}), 0.5);
  EXPECT_EQ(r.group.members.size(), 2u);
  EXPECT_FALSE(r.trace.stop_projection.has_value());
}

TEST(LfaGrow, RestrictedPool) {
  const auto ds = make_dataset({{1, 0}, {1, 0.01}, {1, 0.02}, {0, 1}}, {"a", "b", "c", "d"});
  const auto r = lfa_grow(ds, seed_of({0}), 0.5, std::vector<std::size_t>{2, 3, 3});
  EXPECT_EQ(r.group.members, (std::vector<std::size_t>{0, 2}));
}

TEST(LfaGrow, InputErrors) {
  const auto ds = make_dataset({{1, 0}, {0, 1}}, {"a", "b"});
  EXPECT_EQ(code_of([&] { lfa_grow(ds, seed_of({0}), 0.0); }), ErrorCode::InvalidThreshold);
  EXPECT_EQ(code_of([&] { lfa_grow(ds, seed_of({0}), 1.0); }), ErrorCode::InvalidThreshold);
  EXPECT_EQ(code_of([&] { lfa_grow(ds, seed_of({0}), std::nan("")); }), ErrorCode::InvalidThreshold);
  EXPECT_EQ(code_of([&] { lfa_grow(ds, seed_of({}), 0.5); }), ErrorCode::EmptyGroup);
  EXPECT_EQ(code_of([&] { lfa_grow(ds, seed_of({9}), 0.5); }), ErrorCode::IndexOutOfRange);
  EXPECT_EQ(code_of([&] { lfa_grow(ds, seed_of({0, 0}), 0.5); }), ErrorCode::InvalidArgument);
}

TEST(LfaGrow, MatchesReferenceOnRandomInstances) {
  Rng rng(2024);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + rng.below(19);
    const std::size_t d = 2 + rng.below(7);
    const auto ds = random_dataset(rng, n, d, 1 + rng.below(6));
    const double tau = 0.1 * static_cast<double>(1 + rng.below(9));
    const auto seed = seed_of({static_cast<std::size_t>(rng.below(n))});
    const auto got = lfa_grow(ds, seed, tau);
    const auto want = reference_lfa(ds, seed, tau);
    ASSERT_EQ(got.group.members, want.group.members) << "trial " << trial;
    ASSERT_EQ(got.trace.steps.size(), want.trace.steps.size());
    for (std::size_t s = 0; s < got.trace.steps.size(); ++s) {
      EXPECT_EQ(got.trace.steps[s].index, want.trace.steps[s].index);
      EXPECT_EQ(got.trace.steps[s].identity_count, want.trace.steps[s].identity_count);
      EXPECT_EQ(got.trace.steps[s].group_size, want.trace.steps[s].group_size);
      EXPECT_NEAR(got.trace.steps[s].projection, want.trace.steps[s].projection, 1e-12);
    }
  }
}

TEST(LfaGrow, ThreadCountDoesNotChangeResult) {
  Rng rng(5);
  const auto ds = random_dataset(rng, 9000, 6, 300);
  const auto a = lfa_grow(ds, seed_of({0, 1}), 0.7, std::nullopt, 1);
  const auto b = lfa_grow(ds, seed_of({0, 1}), 0.7, std::nullopt, 8);
  EXPECT_EQ(a.group.members, b.group.members);
  EXPECT_EQ(a.trace, b.trace);
}

TEST(RunAll, IsolatesFailingSeeds) {
  const auto ds = make_dataset({{1, 0}, {-1, 0}, {0, 1}}, {"a", "b", "c"});
  std::vector<Group> seeds{seed_of({0, 1}), seed_of({2})};
  const auto out = run_all(ds, 0.5, seeds, 2);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_FALSE(out[0].ok());
  EXPECT_EQ(*out[0].error, ErrorCode::DegenerateDirection);
  EXPECT_TRUE(out[1].ok());
  EXPECT_EQ(out[1].seed_index, 1u);
}

TEST(SimilarityGraph, EdgesAtThresholdInclusive) {
  const double s = std::sqrt(0.5);
  const auto ds = make_dataset({{1, 0}, {s, s}, {0, 1}, {-1, 0}}, {"a", "b", "c", "d"});
  const auto g = build_similarity_graph(ds, 0.5);
  EXPECT_EQ(g.edge_count(), 2u);
  EXPECT_EQ(g.adjacency[1], (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(g.adjacency[3].empty());
  EXPECT_EQ(code_of([&] { build_similarity_graph(ds, 1.0); }), ErrorCode::InvalidThreshold);
  EXPECT_EQ(code_of([&] { build_similarity_graph(ds, -1.0); }), ErrorCode::InvalidThreshold);
}

TEST(SimilarityGraph, MatchesBruteForceForAnyThreadCount) {
  Rng rng(11);
  const auto ds = random_dataset(rng, 300, 4, 50);
  for (std::size_t threads : {1u, 3u, 8u}) {
    const auto g = build_similarity_graph(ds, 0.6, threads);
    std::size_t edges = 0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      std::vector<std::size_t> want;
      for (std::size_t j = 0; j < ds.size(); ++j) {
        if (j != i && cosine_similarity(ds.row(i), ds.row(j)) >= 0.6) want.push_back(j);
      }
      edges += want.size();
      ASSERT_EQ(g.adjacency[i], want);
    }
    EXPECT_EQ(g.edge_count(), edges / 2);
  }
}

TEST(Components, OrderedBySmallestMemberWithProvenance) {
  const auto ds = make_dataset({{0, 1}, {1, 0}, {0, 1}, {1, 0.01}, {-1, -1}}, {"a", "b", "c", "d", "e"});
  const auto groups = init_groups(ds, 0.9);
  ASSERT_EQ(groups.size(), 3u);
  EXPECT_EQ(groups[0].members, (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(groups[1].members, (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(groups[2].members, (std::vector<std::size_t>{4}));
  EXPECT_EQ(groups[0].provenance, SeedProvenance::graph_component);
  EXPECT_EQ(groups[2].provenance, SeedProvenance::singleton);
  EXPECT_EQ(to_string(groups[2].provenance), "singleton");
  EXPECT_TRUE(groups[0].direction.has_value());
  EXPECT_EQ(groups[0].threshold_used, 0.9);
}

TEST(Components, PartitionEveryNode) {
  Rng rng(3);
  const auto ds = random_dataset(rng, 500, 3, 100);
  const auto groups = connected_components(build_similarity_graph(ds, 0.95));
  std::vector<int> seen(ds.size(), 0);
  for (const auto& g : groups) {
    for (std::size_t m : g.members) ++seen[m];
  }
  for (int s : seen) EXPECT_EQ(s, 1);
}

TEST(UnionFindTest, Basics) {
  UnionFind uf(6);
  uf.unite(0, 1);
  uf.unite(2, 3);
  uf.unite(1, 3);
  EXPECT_EQ(uf.find(0), uf.find(2));
  EXPECT_NE(uf.find(0), uf.find(4));
}
