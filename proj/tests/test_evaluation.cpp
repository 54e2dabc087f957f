// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <json.hpp>

#include "lorascope/error.hpp"
#include "lorascope/evaluation.hpp"

namespace lorascope {
namespace {

using json = nlohmann::json;

// Planted toy population:
//   value.magnitude.m : 0 for healthy, the step level for drift, 8 for steering
//   query.shape.s     : +1 harm, -1 help, 0 otherwise
//   value.shape.c     : constant
FeatureMatrix toy_matrix() {
  FeatureMatrix m;
  m.columns = {{{0, ModuleKind::query_projection}, FeatureFamily::shape, "s"},
               {{0, ModuleKind::value_projection}, FeatureFamily::magnitude, "m"},
               {{0, ModuleKind::value_projection}, FeatureFamily::shape, "c"}};
  std::vector<std::array<double, 3>> rows;
  auto add = [&](const std::string& id, Category c, const std::string& g, std::optional<std::int64_t> level,
                 std::array<double, 3> v, bool held = false) {
    AdapterMetadata l;
    l.adapter_id = id;
    l.category = c;
    l.group = g;
    l.intensity = level;
    l.held_out = held;
    m.rows.push_back(id);
    m.labels.push_back(l);
    rows.push_back(v);
  };
  for (int i = 0; i < 8; ++i) add("h" + std::to_string(i), Category::healthy, "healthy", std::nullopt, {0, 0, 1});
  for (int i = 0; i < 6; ++i)
    add("harm" + std::to_string(i), Category::inverted_harmlessness, "harm", i + 1, {1, double(i + 1), 1});
  for (int i = 0; i < 6; ++i)
    add("help" + std::to_string(i), Category::inverted_helpfulness, "help", i + 1, {-1, double(i + 1), 1});
  for (int i = 0; i < 3; ++i) add("st" + std::to_string(i), Category::steering, "steer", 1, {0, 8, 1});
  for (int i = 0; i < 2; ++i) add("tiny" + std::to_string(i), Category::steering, "tiny", 1, {0, 8, 1});
  for (int i = 0; i < 3; ++i) add("ho" + std::to_string(i), Category::steering, "held", 1, {0, 8, 1}, true);
  m.values.resize(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < 3; ++c) m.values(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
  return m;
}

EvalConfig toy_config() {
  EvalConfig c;
  c.feature_splits = {FeatureSplit::all, FeatureSplit::magnitude, FeatureSplit::shape};
  c.bootstrap_resamples = 200;
  return c;
}

TEST(Evaluation, SplitNamesRoundTrip) {
  for (auto f : {FeatureSplit::all, FeatureSplit::magnitude, FeatureSplit::shape, FeatureSplit::direction})
    EXPECT_EQ(parse_feature_split(to_string(f)), f);
  for (auto m : {ModuleSplit::both, ModuleSplit::query, ModuleSplit::value}) EXPECT_EQ(parse_module_split(to_string(m)), m);
  EXPECT_THROW(parse_feature_split("nope"), Error);
  EXPECT_EQ(families_of(FeatureSplit::all).size(), 3u);
  EXPECT_EQ(modules_of(ModuleSplit::query), std::set<ModuleKind>{ModuleKind::query_projection});
}

TEST(Evaluation, PopulationSplitAndCentroidSources) {
  const FeatureMatrix m = toy_matrix();
  const SplitPlan p = population_split(m.labels, 0.7, 3);
  // floor(0.7 n) clamped to [1, n - 1] per group.
  auto train_count = [&](const std::string& group) {
    return std::count_if(m.labels.begin(), m.labels.end(),
                         [&](const AdapterMetadata& l) { return l.group == group && p.in_train(l.adapter_id); });
  };
  EXPECT_EQ(train_count("healthy"), 5);
  EXPECT_EQ(train_count("harm"), 4);
  EXPECT_EQ(train_count("steer"), 2);
  EXPECT_EQ(train_count("tiny"), 1);
  EXPECT_EQ(p.train_ids.size() + p.test_ids.size(), m.rows.size());
  const auto sources = centroid_source_ids(m.labels, p);
  EXPECT_EQ(sources.size(), 5u);
  for (const auto& id : sources) EXPECT_TRUE(p.in_train(id));
  EXPECT_TRUE(std::is_sorted(sources.begin(), sources.end()));
}

TEST(Evaluation, OrdinalSeverity) {
  const std::vector<double> s = {0.1, 0.5, 0.3, 0.9}, x = {1, 3, 2, 4};
  EXPECT_EQ(ordinal_severity(s, x).rho, 1.0);
  const std::vector<double> two = {1, 1, 2, 2};
  try {
    ordinal_severity(s, two);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::degeneracy);
  }
}

TEST(Evaluation, PlantedSignalsAreRecovered) {
  const FeatureMatrix m = toy_matrix();
  const SplitPlan p = population_split(m.labels, 0.7, 3);
  const EvalReport r = run_evaluation(m, p, toy_config(), {"h0"});

  EXPECT_EQ(r.pairwise_groups, (std::vector<std::string>{"healthy", "harm", "help", "steer"}));
  // 1 binary + 6 pairwise comparisons, 3 x 3 splits each.
  EXPECT_EQ(r.cells.size(), 7u * 9u);

  EXPECT_EQ(r.cell("healthy_vs_drift", FeatureSplit::all, ModuleSplit::both).auc, 1.0);
  EXPECT_EQ(r.cell("healthy_vs_drift", FeatureSplit::magnitude, ModuleSplit::value).auc, 1.0);
  // Objectives differ only in the query shape column.
  EXPECT_EQ(r.cell("harm_vs_help", FeatureSplit::shape, ModuleSplit::query).auc, 1.0);
  const CellResult& c = r.cell("harm_vs_help", FeatureSplit::all, ModuleSplit::both);
  EXPECT_EQ(c.negative, "harm");
  EXPECT_EQ(c.positive, "help");
  EXPECT_EQ(c.n_train, 8);
  EXPECT_EQ(c.n_test, 4);
  EXPECT_LE(c.ci.low, c.auc);
  EXPECT_GE(c.ci.high, c.auc);
  EXPECT_THROW(r.cell("nope", FeatureSplit::all, ModuleSplit::both), Error);

  ASSERT_EQ(r.ordinal.size(), 2u);
  for (const auto& o : r.ordinal) {
    ASSERT_TRUE(o.correlation) << o.group;
    EXPECT_NEAR(o.correlation->rho, 1.0, 1e-12) << o.group;
    EXPECT_EQ(o.levels, 6);
  }

  ASSERT_TRUE(r.cross_method);
  EXPECT_EQ(r.cross_method->auc, 1.0);
  EXPECT_EQ(r.cross_method->positive, "held+steer+tiny");
  EXPECT_EQ(r.drift.size(), m.rows.size());
  EXPECT_EQ(r.centroid_sources, std::vector<std::string>{"h0"});

  auto has_note = [&](const std::string& frag) {
    return std::any_of(r.notes.begin(), r.notes.end(), [&](const std::string& n) { return n.find(frag) != std::string::npos; });
  };
  EXPECT_TRUE(has_note("'held' held out"));
  EXPECT_TRUE(has_note("'tiny' has fewer than 3"));
  EXPECT_TRUE(has_note("no direction columns"));
}

TEST(Evaluation, ReportIsThreadInvariant) {
  const FeatureMatrix m = toy_matrix();
  const SplitPlan p = population_split(m.labels, 0.7, 3);
  EvalConfig c = toy_config();
  const std::string a = report_to_json(run_evaluation(m, p, c));
  c.threads = 3;
  const EvalReport r3 = run_evaluation(m, p, c);
  // The thread count is echoed in the config block; everything else matches.
  json ja = json::parse(a), jb = json::parse(report_to_json(r3));
  ja["metadata"].erase("config");
  jb["metadata"].erase("config");
  EXPECT_EQ(ja, jb);
  const std::string csv = report_to_csv(r3);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 63 + 1);
}

TEST(Evaluation, RenderedReportHasTheTables) {
  const FeatureMatrix m = toy_matrix();
  const EvalReport r = run_evaluation(m, population_split(m.labels, 0.7, 3), toy_config());
  const std::string text = render_report(report_to_json(r));
  for (const char* frag : {"harm_vs_help", "Cross-method", "Ordinal severity"})
    EXPECT_NE(text.find(frag), std::string::npos) << frag;
}

TEST(Evaluation, DirectionWithoutCentroidIsADependencyError) {
  const FeatureMatrix m = toy_matrix();
  EvalConfig c = toy_config();
  c.feature_splits = {FeatureSplit::direction};
  try {
    run_evaluation(m, population_split(m.labels, 0.7, 3), c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::dependency);
  }
}

}  // namespace
}  // namespace lorascope
