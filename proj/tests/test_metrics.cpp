#include <gtest/gtest.h>

#include <cmath>

#include "lfa/metrics.hpp"
#include "lfa/synth.hpp"
#include "support.hpp"

using namespace lfa;
using namespace lfa::testing;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::IoError;
}

Group group_of(std::vector<std::size_t> m) {
  Group g;
  g.members = std::move(m);
  return g;
}

AttributeTable face_table(const std::vector<std::string>& ids, const std::vector<std::vector<std::string>>& labels) {
  AttributeTable t = AttributeTable::open(std::vector<std::string>{"gender", "beard", "glasses"});
  for (std::size_t i = 0; i < ids.size(); ++i) t.add_row(ids[i], labels[i]);
  return t;
}

}  // namespace

TEST(Coherence, CountsDifferingKnownAttributes) {
  const std::vector<std::int32_t> a{0, 1, 2, kUnknownCode};
  const std::vector<std::int32_t> b{0, 2, kUnknownCode, 1};
  EXPECT_EQ(attribute_distance(a, b), 1u);
  EXPECT_EQ(code_of([&] { attribute_distance(a, std::vector<std::int32_t>{0}); }), ErrorCode::SchemaMismatch);
}

TEST(Coherence, GroupAndPooledMethod) {
  const auto ds = make_dataset({{1, 0}, {0, 1}, {1, 1}, {1, 2}, {2, 1}}, {"a", "b", "c", "d", "e"});
  const auto t = face_table(ds.image_ids(), {{"male", "no", "no"},
                                             {"female", "no", "unknown"},
                                             {"male", "yes", "yes"},
                                             {"male", "no", "no"},
                                             {"female", "yes", "no"}});
  // pairs (0,1)=1 (0,2)=2 (1,2)=2 -> 5/3
  EXPECT_DOUBLE_EQ(group_coherence(ds, group_of({0, 1, 2}), t), 5.0 / 3.0);
  // plus (3,4)=2 -> (5+2)/4
  const std::vector<Group> groups{group_of({0, 1, 2}), group_of({3, 4}), group_of({4})};
  EXPECT_DOUBLE_EQ(method_coherence(ds, groups, t), 7.0 / 4.0);
  EXPECT_EQ(code_of([&] { group_coherence(ds, group_of({0}), t); }), ErrorCode::TooFewMembers);
  const std::vector<Group> tiny{group_of({0}), group_of({3})};
  EXPECT_EQ(code_of([&] { method_coherence(ds, tiny, t); }), ErrorCode::NoEligibleGroups);
}

TEST(Scores, SplitsGenuineAndImpostor) {
  const auto ds = make_dataset({{1, 0}, {1, 0}, {0, 1}}, {"a", "a", "b"});
  const auto s = collect_scores(ds, group_of({0, 1, 2}));
  EXPECT_EQ(s.genuine.size(), 1u);
  EXPECT_EQ(s.impostor.size(), 2u);
  EXPECT_EQ(s.n_identities, 2u);
  EXPECT_NEAR(s.genuine[0], 1.0, 1e-15);
  EXPECT_EQ(code_of([&] { collect_scores(ds, group_of({0})); }), ErrorCode::TooFewMembers);
}

TEST(Rates, FmrFnmrDefinitions) {
  ScoreSet s;
  s.genuine = {0.1, 0.5, 0.9};
  s.impostor = {-0.2, 0.2, 0.2, 0.6};
  EXPECT_DOUBLE_EQ(fmr_at(s, 0.2), 0.75);
  EXPECT_DOUBLE_EQ(fnmr_at(s, 0.5), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(fmr_at(s, 1.01), 0.0);
  EXPECT_DOUBLE_EQ(fnmr_at(s, -1.0), 0.0);
  ScoreSet empty;
  EXPECT_EQ(code_of([&] { fmr_at(empty, 0.2); }), ErrorCode::NoImpostorPairs);
  EXPECT_EQ(code_of([&] { fnmr_at(empty, 0.2); }), ErrorCode::NoGenuinePairs);
}

TEST(Rates, EerOfSeparableAndOverlappingSets) {
  ScoreSet sep;
  sep.genuine = {0.8, 0.9};
  sep.impostor = {0.1, 0.2};
  EXPECT_DOUBLE_EQ(eer(sep), 0.0);
  ScoreSet swapped;
  swapped.genuine = {0.1, 0.2};
  swapped.impostor = {0.8, 0.9};
  EXPECT_DOUBLE_EQ(eer(swapped), 1.0);
}

TEST(Rates, FnmrAtFmrGranularity) {
  // 120 genuine scores: one rejection moves FNMR by 1/120.
  ScoreSet s;
  for (int i = 0; i < 120; ++i) s.genuine.push_back(0.5 + 0.003 * i);
  for (int i = 0; i < 1000; ++i) s.impostor.push_back(-0.3 + 0.0008 * i);
  const double base = fnmr_at_fmr(s, 1e-3);
  s.genuine[0] = 0.0;
  s.genuine[1] = 0.0;
  const double worse = fnmr_at_fmr(s, 1e-3);
  EXPECT_NEAR(worse - base, 2.0 / 120.0, 1e-15);
  EXPECT_NEAR(1.0 / 120.0, 0.0083, 5e-5);
}

TEST(Rates, ThresholdAtFmrAlwaysAttainable) {
  ScoreSet s;
  s.genuine = {0.9};
  s.impostor = {0.3, 0.3, 0.3};
  const double t = threshold_at_fmr(s, 0.001);
  EXPECT_GT(t, 0.3);
  EXPECT_DOUBLE_EQ(fmr_at(s, t), 0.0);
  EXPECT_DOUBLE_EQ(threshold_at_fmr(s, 1.0), -1.0);
  EXPECT_EQ(code_of([&] { threshold_at_fmr(s, 0.0); }), ErrorCode::InvalidArgument);
}

TEST(Rates, OraclesAgreeOnRandomSets) {
  Rng rng(99);
  const std::vector<double> grid = threshold_grid(-1.0, 1.0, 41);
  for (int trial = 0; trial < 300; ++trial) {
    const auto s = random_scores(rng, 1 + rng.below(30), 1 + rng.below(60));
    ASSERT_EQ(eer(s), oracle_eer(s));
    for (double target : {1.0, 0.5, 0.1, 0.01, 0.001}) ASSERT_EQ(fnmr_at_fmr(s, target), oracle_fnmr_at_fmr(s, target));
    const auto curve = fmr_curve(s, grid);
    const auto want = oracle_fmr_curve(s, grid);
    for (std::size_t i = 0; i < grid.size(); ++i) ASSERT_EQ(curve[i].rate, want[i]);
  }
}

TEST(Rates, CurveIsMonotoneAndGridChecked) {
  Rng rng(5);
  const auto s = random_scores(rng, 10, 200);
  const auto grid = threshold_grid(-0.2, 1.0, 61);
  EXPECT_DOUBLE_EQ(grid.front(), -0.2);
  EXPECT_DOUBLE_EQ(grid.back(), 1.0);
  const auto c = fmr_curve(s, grid);
  for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LE(c[i].rate, c[i - 1].rate);
  const std::vector<double> bad{0.5, 0.1};
  EXPECT_EQ(code_of([&] { fmr_curve(s, bad); }), ErrorCode::InvalidArgument);
}

TEST(Sigma, PopulationStdMatchesPublishedTable) {
  // ArcFace rows: EER, FNMR@FMR=1%, FNMR@FMR=0.1% across groups A-D.
  const std::vector<double> eer_row{8.70e-03, 4.00e-04, 2.42e-02, 1.00e-03};
  const std::vector<double> fnmr1_row{1.15e-02, 0.0, 2.08e-02, 0.0};
  const std::vector<double> fnmr01_row{2.30e-02, 0.0, 3.12e-02, 4.20e-02};
  EXPECT_NEAR(population_stddev(eer_row), 0.0096, 5e-5);
  EXPECT_NEAR(population_stddev(fnmr1_row), 0.0087, 5e-5);
  EXPECT_NEAR(population_stddev(fnmr01_row), 0.0154, 5e-5);
  EXPECT_DOUBLE_EQ(population_stddev(std::vector<double>{2.0, 2.0}), 0.0);
}

TEST(Bootstrap, DeterministicAndThreadIndependent) {
  SynthConfig cfg;
  cfg.dim = 8;
  cfg.n_identities = 20;
  cfg.rng_seed = 4;
  const auto gen = generate(cfg);
  Group g;
  for (std::size_t i = 0; i < gen.dataset.size(); ++i) g.members.push_back(i);
  const auto a = bootstrap_fmr_ci(gen.dataset, g, 0.2, 200, 7, CiMethod::normal, 1);
  const auto b = bootstrap_fmr_ci(gen.dataset, g, 0.2, 200, 7, CiMethod::normal, 8);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.halfwidth, b.halfwidth);
  EXPECT_EQ(a.valid_iterations, 200u);
  EXPECT_GT(a.halfwidth, 0.0);
  EXPECT_NEAR(a.mean, fmr_at(collect_scores(gen.dataset, g), 0.2), 3 * a.halfwidth);
  const auto p = bootstrap_fmr_ci(gen.dataset, g, 0.2, 200, 7, CiMethod::percentile, 1);
  EXPECT_LE(p.lower, p.upper);
  EXPECT_DOUBLE_EQ(p.halfwidth, 0.5 * (p.upper - p.lower));
  EXPECT_EQ(code_of([&] { bootstrap_fmr_ci(gen.dataset, g, 0.2, 1, 7); }), ErrorCode::InvalidArgument);
}

TEST(BiasReportTest, FlagsMissingSidesAndComputesSigma) {
  const auto ds = make_dataset({{1, 0}, {1, 0.1}, {0, 1}, {0.1, 1}, {1, 1}}, {"a", "a", "b", "c", "d"});
  BiasOptions opt;
  opt.bootstrap_iterations = 50;
  const std::vector<Group> groups{group_of({0, 1, 2, 3}), group_of({2, 3, 4}), group_of({0, 1}), group_of({4})};
  const std::vector<std::string> names{"A", "B", "C", "D"};
  const auto rep = bias_report(ds, groups, names, {}, opt);
  ASSERT_EQ(rep.groups.size(), 4u);
  EXPECT_TRUE(rep.groups[0].eer.has_value());
  EXPECT_FALSE(rep.groups[1].eer.has_value());
  EXPECT_TRUE(rep.groups[1].fmr_fixed.has_value());
  EXPECT_FALSE(rep.groups[2].fmr_fixed.has_value());
  EXPECT_EQ(rep.groups[3].notes.front(), "metrics.TooFewMembers");
  ASSERT_TRUE(rep.sigma_fmr_fixed.has_value());
  const std::vector<double> fmrs{*rep.groups[0].fmr_fixed, *rep.groups[1].fmr_fixed};
  EXPECT_DOUBLE_EQ(*rep.sigma_fmr_fixed, population_stddev(fmrs));
  EXPECT_DOUBLE_EQ(*rep.sigma_eer, 0.0);
}
