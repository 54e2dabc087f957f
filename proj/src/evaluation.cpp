// SPDX-License-Identifier: Apache-2.0
#include "lorascope/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "lorascope/error.hpp"
#include "lorascope/parallel.hpp"
#include "lorascope/rng.hpp"

namespace lorascope {

using json = nlohmann::json;

std::string_view to_string(FeatureSplit s) {
  switch (s) {
    case FeatureSplit::all: return "all";
    case FeatureSplit::magnitude: return "magnitude";
    case FeatureSplit::shape: return "shape";
    case FeatureSplit::direction: return "direction";
  }
  return "?";
}

std::string_view to_string(ModuleSplit s) {
  switch (s) {
    case ModuleSplit::both: return "both";
    case ModuleSplit::query: return "query";
    case ModuleSplit::value: return "value";
  }
  return "?";
}

FeatureSplit parse_feature_split(std::string_view s) {
  for (auto f : {FeatureSplit::all, FeatureSplit::magnitude, FeatureSplit::shape, FeatureSplit::direction})
    if (s == to_string(f)) return f;
  fail(ErrorKind::usage, "unknown feature split '" + std::string(s) + "' (magnitude|shape|direction|all)");
}

ModuleSplit parse_module_split(std::string_view s) {
  for (auto m : {ModuleSplit::both, ModuleSplit::query, ModuleSplit::value})
    if (s == to_string(m)) return m;
  fail(ErrorKind::usage, "unknown module split '" + std::string(s) + "' (query|value|both)");
}

std::set<FeatureFamily> families_of(FeatureSplit s) {
  switch (s) {
    case FeatureSplit::magnitude: return {FeatureFamily::magnitude};
    case FeatureSplit::shape: return {FeatureFamily::shape};
    case FeatureSplit::direction: return {FeatureFamily::direction};
    case FeatureSplit::all: break;
  }
  return kAllFamilies;
}

std::set<ModuleKind> modules_of(ModuleSplit s) {
  switch (s) {
    case ModuleSplit::query: return {ModuleKind::query_projection};
    case ModuleSplit::value: return {ModuleKind::value_projection};
    case ModuleSplit::both: break;
  }
  return kAllModules;
}

SplitPlan population_split(const std::vector<AdapterMetadata>& labels, double ratio, std::uint64_t seed) {
  std::vector<std::string> ids, strata;
  for (const auto& l : labels) {
    ids.push_back(l.adapter_id);
    strata.push_back(l.group.empty() ? std::string(to_string(l.category)) : l.group);
  }
  return stratified_split(ids, strata, ratio, seed);
}

std::vector<std::string> centroid_source_ids(const std::vector<AdapterMetadata>& labels, const SplitPlan& plan) {
  std::vector<std::string> out;
  for (const auto& l : labels)
    if (l.category == Category::healthy && plan.in_train(l.adapter_id)) out.push_back(l.adapter_id);
  std::sort(out.begin(), out.end());
  return out;
}

const CellResult& EvalReport::cell(const std::string& comparison, FeatureSplit f, ModuleSplit m) const {
  for (const auto& c : cells)
    if (c.comparison == comparison && c.feature_split == f && c.module_split == m) return c;
  fail(ErrorKind::schema, "report has no cell " + comparison + "/" + std::string(to_string(f)) + "/" +
                              std::string(to_string(m)));
}

CellResult evaluate_cell(const FeatureMatrix& full, const std::vector<std::string>& ids, const std::vector<int>& labels,
                         const SplitPlan& plan, FeatureSplit f, ModuleSplit m, const EvalConfig& config,
                         std::uint64_t seed, ClassifierModel* model_out) {
  const FeatureMatrix sub = full.select_rows(ids).filter_columns(families_of(f), modules_of(m));
  const SplitPlan p = plan.restrict_to(ids);
  TrainOptions opts;
  opts.lambda = config.lambda;
  opts.max_iterations = 200;
  const ClassifierModel model = train_logreg(sub, labels, p, opts);

  stats::ScoredLabels test;
  for (const auto& id : p.test_ids) {
    const Eigen::Index r = sub.row_index(id);
    const Vector rv = sub.values.row(r).transpose();
    test.scores.push_back(model.decision(std::span<const double>(rv.data(), static_cast<std::size_t>(rv.size()))));
    test.labels.push_back(labels[static_cast<std::size_t>(r)]);
  }
  CellResult c;
  c.feature_split = f;
  c.module_split = m;
  c.auc = stats::auc(test);
  c.ci = stats::bootstrap_auc_ci(test, config.bootstrap_resamples, config.ci_level, seed);
  c.n_train = static_cast<int>(p.train_ids.size());
  c.n_test = static_cast<int>(p.test_ids.size());
  c.seed = seed;
  if (model_out) *model_out = model;
  return c;
}

stats::Correlation ordinal_severity(std::span<const double> scores, std::span<const double> intensity) {
  if (std::set<double>(intensity.begin(), intensity.end()).size() < 3)
    fail(ErrorKind::degeneracy, "ordinal severity needs at least 3 intensity levels");
  return stats::spearman(scores, intensity);
}

namespace {

struct Comparison {
  std::string name;
  std::vector<std::string> ids;
  std::vector<int> labels;
  std::string negative, positive;
};

bool matrix_has_family(const FeatureMatrix& m, FeatureFamily f) {
  return std::any_of(m.columns.begin(), m.columns.end(), [&](const FeatureColumn& c) { return c.family == f; });
}

}  // namespace

EvalReport run_evaluation(const FeatureMatrix& full, const SplitPlan& plan, const EvalConfig& config,
                          std::vector<std::string> centroid_sources) {
  if (full.labels.size() != full.rows.size()) fail(ErrorKind::schema, "feature matrix rows carry no labels");
  if (config.feature_splits.empty() || config.module_splits.empty())
    fail(ErrorKind::parameter, "at least one feature split and one module split are required");
  for (auto f : config.feature_splits)
    if (f == FeatureSplit::direction && !matrix_has_family(full, FeatureFamily::direction))
      fail(ErrorKind::dependency, "direction features requested but the feature matrix has none (build a centroid first)");

  EvalReport report;
  report.config = config;
  report.plan = plan;
  report.centroid_sources = std::move(centroid_sources);
  if (!matrix_has_family(full, FeatureFamily::direction))
    report.notes.push_back("feature matrix has no direction columns; 'all' covers magnitude and shape only");

  const auto& labels = full.labels;
  auto is_drift = [&](const AdapterMetadata& l) { return config.drift_categories.count(l.category) > 0; };

  // Binary detection comes first so its model can be reused below.
  std::vector<Comparison> comparisons;
  {
    Comparison c{"healthy_vs_drift", {}, {}, "healthy", "drift"};
    for (const auto& l : labels) {
      if (l.category == Category::healthy || is_drift(l)) {
        c.ids.push_back(l.adapter_id);
        c.labels.push_back(is_drift(l) ? 1 : 0);
      }
    }
    comparisons.push_back(std::move(c));
  }
  // Pairwise grid over groups with >= 3 members, excluding held-out and legacy.
  std::vector<std::string> groups;
  std::map<std::string, int> group_size;
  std::map<std::string, bool> group_eligible;
  for (const auto& l : labels) {
    if (!group_size.count(l.group)) groups.push_back(l.group);
    group_size[l.group] += 1;
    const bool ok = !l.held_out && l.category != Category::legacy;
    group_eligible[l.group] = group_eligible.count(l.group) ? group_eligible[l.group] && ok : ok;
  }
  for (const auto& g : groups) {
    if (!group_eligible[g]) {
      report.notes.push_back("group '" + g + "' held out of the pairwise grid");
    } else if (group_size[g] < 3) {
      report.notes.push_back("group '" + g + "' has fewer than 3 members; left out of the pairwise grid");
    } else {
      report.pairwise_groups.push_back(g);
    }
  }
  for (std::size_t a = 0; a < report.pairwise_groups.size(); ++a)
    for (std::size_t b = a + 1; b < report.pairwise_groups.size(); ++b) {
      const auto& ga = report.pairwise_groups[a];
      const auto& gb = report.pairwise_groups[b];
      Comparison c{ga + "_vs_" + gb, {}, {}, ga, gb};
      for (const auto& l : labels)
        if (l.group == ga || l.group == gb) {
          c.ids.push_back(l.adapter_id);
          c.labels.push_back(l.group == gb ? 1 : 0);
        }
      comparisons.push_back(std::move(c));
    }

  struct Task {
    std::size_t comparison;
    FeatureSplit f;
    ModuleSplit m;
  };
  std::vector<Task> tasks;
  for (std::size_t c = 0; c < comparisons.size(); ++c)
    for (auto f : config.feature_splits)
      for (auto m : config.module_splits) tasks.push_back({c, f, m});
  report.cells.resize(tasks.size());
  parallel_for(tasks.size(), config.threads, [&](std::size_t t) {
    const auto& task = tasks[t];
    const auto& c = comparisons[task.comparison];
    CellResult r = evaluate_cell(full, c.ids, c.labels, plan, task.f, task.m, config, derive_seed(config.seed, 0xCE11 + t),
                                 t == 0 ? &report.binary_model : nullptr);
    r.comparison = c.name;
    r.negative = c.negative;
    r.positive = c.positive;
    report.cells[t] = std::move(r);
  });

  // Binary model = task 0 (primary feature and module split).
  const ClassifierModel& model = report.binary_model;
  const FeatureMatrix primary =
      full.filter_columns(families_of(config.feature_splits[0]), modules_of(config.module_splits[0]));
  const Vector log_odds = model.decision(primary);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    DriftScore d;
    d.adapter_id = labels[i].adapter_id;
    d.category = labels[i].category;
    d.group = labels[i].group;
    d.intensity = labels[i].intensity;
    d.log_odds = log_odds(static_cast<Eigen::Index>(i));
    d.probability = sigmoid(d.log_odds);
    d.in_train = plan.in_train(d.adapter_id);
    report.drift.push_back(d);
  }

  // Ordinal severity per drift group, on log-odds (same ranking as the
  // probability, without saturation ties).
  for (const auto& g : groups) {
    std::vector<double> s, x;
    bool drift_group = false;
    for (const auto& d : report.drift)
      if (d.group == g && config.drift_categories.count(d.category)) {
        drift_group = true;
        if (!d.intensity) continue;
        s.push_back(d.log_odds);
        x.push_back(static_cast<double>(*d.intensity));
      }
    if (!drift_group) continue;
    OrdinalResult o;
    o.group = g;
    o.levels = static_cast<int>(std::set<double>(x.begin(), x.end()).size());
    try {
      o.correlation = ordinal_severity(s, x);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::degeneracy) throw;
      o.note = e.what();
    }
    report.ordinal.push_back(std::move(o));
  }

  // Cross-method transfer: the binary model, no refitting, scored on
  // held-out healthy adapters versus every transfer-category adapter.
  {
    stats::ScoredLabels test;
    std::set<std::string> transfer_groups;
    int n_pos = 0;
    for (const auto& d : report.drift) {
      if (d.category == Category::healthy && plan.in_test(d.adapter_id)) {
        test.scores.push_back(d.log_odds);
        test.labels.push_back(0);
      } else if (config.transfer_categories.count(d.category)) {
        test.scores.push_back(d.log_odds);
        test.labels.push_back(1);
        transfer_groups.insert(d.group);
        ++n_pos;
      }
    }
    if (n_pos > 0) {
      CellResult c;
      c.comparison = "cross_method";
      c.feature_split = config.feature_splits[0];
      c.module_split = config.module_splits[0];
      c.auc = stats::auc(test);
      c.seed = derive_seed(config.seed, 0xC805);
      c.ci = stats::bootstrap_auc_ci(test, config.bootstrap_resamples, config.ci_level, c.seed, config.threads);
      c.n_train = report.cells[0].n_train;
      c.n_test = static_cast<int>(test.scores.size());
      c.negative = "healthy (test split)";
      for (const auto& g : transfer_groups) c.positive += (c.positive.empty() ? "" : "+") + g;
      report.cross_method = c;
    } else {
      report.notes.push_back("no transfer-category adapters; cross-method evaluation skipped");
    }
  }

  report.importance = feature_importance(model);
  return report;
}

std::string eval_config_json(const EvalConfig& c) {
  json fs = json::array(), ms = json::array(), dc = json::array(), tc = json::array();
  for (auto f : c.feature_splits) fs.push_back(std::string(to_string(f)));
  for (auto m : c.module_splits) ms.push_back(std::string(to_string(m)));
  for (auto x : c.drift_categories) dc.push_back(std::string(to_string(x)));
  for (auto x : c.transfer_categories) tc.push_back(std::string(to_string(x)));
  json j = {{"k", c.k},
            {"lambda", c.lambda},
            {"ratio", c.ratio},
            {"seed", c.seed},
            {"bootstrap_resamples", c.bootstrap_resamples},
            {"ci_level", c.ci_level},
            {"feature_splits", fs},
            {"module_splits", ms},
            {"drift_categories", dc},
            {"transfer_categories", tc}};
  return j.dump();
}

namespace {

json cell_json(const CellResult& c) {
  return {{"auc", c.auc},
          {"ci", {c.ci.low, c.ci.high}},
          {"ci_valid_resamples", c.ci.n_valid},
          {"n_train", c.n_train},
          {"n_test", c.n_test},
          {"seed", c.seed},
          {"negative", c.negative},
          {"positive", c.positive}};
}

json correlation_json(const stats::Correlation& c) { return {{"rho", c.rho}, {"p_value", c.p_value}, {"n", c.n}}; }

}  // namespace

std::string report_to_json(const EvalReport& r) {
  json comparisons = json::object();
  for (const auto& c : r.cells)
    comparisons[c.comparison][std::string(to_string(c.feature_split))][std::string(to_string(c.module_split))] =
        cell_json(c);
  json ordinal = json::object();
  for (const auto& o : r.ordinal) {
    json e = {{"levels", o.levels}, {"score", "binary-model log-odds"}};
    if (o.correlation) e.update(correlation_json(*o.correlation));
    else e["note"] = o.note;
    ordinal[o.group] = e;
  }
  json drift = json::array();
  for (const auto& d : r.drift) {
    json e = {{"adapter_id", d.adapter_id},
              {"category", std::string(to_string(d.category))},
              {"group", d.group},
              {"log_odds", d.log_odds},
              {"probability", d.probability},
              {"split", d.in_train ? "train" : "test"}};
    e["intensity"] = d.intensity ? json(*d.intensity) : json(nullptr);
    drift.push_back(e);
  }
  json importance = json::object();
  for (const auto& [f, v] : r.importance.mean_abs_weight)
    importance["mean_abs_weight"][std::string(to_string(f))] = v ? json(*v) : json("absent");
  for (const auto& [a, row] : r.importance.ratio)
    for (const auto& [b, v] : row) importance["ratio"][std::string(to_string(a)) + "/" + std::string(to_string(b))] = v;

  json meta = {
      {"format", "lorascope-eval/1"},
      {"config", json::parse(eval_config_json(r.config))},
      {"classifier",
       {{"model", "l2-regularised logistic regression"},
        {"objective", "sum log-loss + lambda/2 |w|^2, bias unpenalised"},
        {"solver", "damped Newton (LDLT) with Armijo backtracking, stop at |grad| <= 1e-8"},
        {"standardisation", "per-column mean and population standard deviation of training rows; constant columns get weight 0"},
        {"binary_model_iterations", r.binary_model.iterations},
        {"binary_model_gradient_norm", r.binary_model.gradient_norm}}},
      {"bootstrap", "percentile interval; resamples with one class are dropped"},
      {"drift_probability_source", "binary healthy-vs-drift model at the primary split"},
      {"pairwise_groups", r.pairwise_groups},
      {"centroid_sources", r.centroid_sources},
      {"notes", r.notes}};
  json plan = {{"ratio", r.plan.ratio},
               {"seed", r.plan.seed},
               {"strata", r.plan.strata},
               {"train_ids", r.plan.train_ids},
               {"test_ids", r.plan.test_ids}};
  json doc = {{"metadata", meta},
              {"split", plan},
              {"comparisons", comparisons},
              {"ordinal_severity", ordinal},
              {"drift_probabilities", drift},
              {"feature_importance", importance}};
  if (r.cross_method) {
    doc["cross_method"] = cell_json(*r.cross_method);
    doc["cross_method"]["flipped_auc"] = 1.0 - r.cross_method->auc;
  }
  return doc.dump(2) + "\n";
}

std::string report_to_csv(const EvalReport& r) {
  std::string out = "comparison,feature_split,module_split,auc,ci_low,ci_high,n_train,n_test,seed\n";
  auto row = [&](const CellResult& c) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%s,%s,%.17g,%.17g,%.17g,%d,%d,%llu\n", c.comparison.c_str(),
                  std::string(to_string(c.feature_split)).c_str(), std::string(to_string(c.module_split)).c_str(), c.auc,
                  c.ci.low, c.ci.high, c.n_train, c.n_test, static_cast<unsigned long long>(c.seed));
    out += buf;
  };
  for (const auto& c : r.cells) row(c);
  if (r.cross_method) row(*r.cross_method);
  return out;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(std::string s, std::size_t w) {
  if (s.size() < w) s.append(w - s.size(), ' ');
  return s;
}

}  // namespace

std::string render_report(std::string_view report_json, const Manifest* manifest) {
  json doc;
  try {
    doc = json::parse(report_json);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("report: ") + e.what());
  }
  std::ostringstream os;
  const auto& cfg = doc.at("metadata").at("config");
  const std::string f0 = cfg.at("feature_splits")[0];
  const std::string m0 = cfg.at("module_splits")[0];

  // Population summary.
  os << "Adapter population\n";
  std::map<std::string, std::tuple<std::string, std::string, int, std::set<long long>>> pop;
  std::vector<std::string> order;
  if (manifest) {
    for (const auto& e : manifest->entries) {
      if (!pop.count(e.group)) order.push_back(e.group);
      auto& [cat, method, n, levels] = pop[e.group];
      cat = std::string(to_string(e.category));
      method = e.method;
      ++n;
      if (e.intensity) levels.insert(*e.intensity);
    }
  } else {
    for (const auto& d : doc.at("drift_probabilities")) {
      const std::string g = d.at("group");
      if (!pop.count(g)) order.push_back(g);
      auto& [cat, method, n, levels] = pop[g];
      cat = d.at("category");
      ++n;
      if (!d.at("intensity").is_null()) levels.insert(d.at("intensity").get<long long>());
    }
  }
  os << "  " << pad("group", 26) << pad("category", 24) << pad("method", 10) << pad("n", 5) << "levels\n";
  int total = 0;
  for (const auto& g : order) {
    const auto& [cat, method, n, levels] = pop[g];
    total += n;
    os << "  " << pad(g, 26) << pad(cat, 24) << pad(method, 10) << pad(std::to_string(n), 5) << levels.size() << "\n";
  }
  os << "  " << pad("total", 60) << total << "\n\n";

  // Pairwise AUC grid at the primary split.
  const auto& comps = doc.at("comparisons");
  const auto groups = doc.at("metadata").at("pairwise_groups").get<std::vector<std::string>>();
  os << "Pairwise classification AUC (features: " << f0 << ", modules: " << m0 << ")\n";
  os << "  " << pad("", 24);
  for (const auto& g : groups) os << pad(g.substr(0, 22), 24);
  os << "\n";
  for (const auto& a : groups) {
    os << "  " << pad(a.substr(0, 22), 24);
    for (const auto& b : groups) {
      std::string cell = "-";
      for (const auto& name : {a + "_vs_" + b, b + "_vs_" + a})
        if (comps.contains(name)) cell = fmt("%.2f", comps[name][f0][m0].at("auc").get<double>());
      os << pad(cell, 24);
    }
    os << "\n";
  }
  if (comps.contains("healthy_vs_drift")) {
    const auto& c = comps["healthy_vs_drift"][f0][m0];
    os << "\nBinary detection (healthy vs drift): AUC " << fmt("%.2f", c.at("auc").get<double>()) << "  95% CI ["
       << fmt("%.2f", c.at("ci")[0].get<double>()) << ", " << fmt("%.2f", c.at("ci")[1].get<double>()) << "]  train "
       << c.at("n_train").get<int>() << " / test " << c.at("n_test").get<int>() << "\n";
  }

  // Module split for every comparison.
  os << "\nModule-split classification AUC (features: " << f0 << ")\n";
  os << "  " << pad("comparison", 56) << pad("query", 8) << pad("value", 8) << "both\n";
  for (const auto& [name, by_feature] : comps.items()) {
    if (!by_feature.contains(f0)) continue;
    os << "  " << pad(name, 56);
    for (const char* m : {"query", "value", "both"}) {
      const auto& fm = by_feature[f0];
      os << pad(fm.contains(m) ? fmt("%.2f", fm[m].at("auc").get<double>()) : "-", 8);
    }
    os << "\n";
  }

  // Feature-family split.
  os << "\nFeature-family classification AUC (modules: " << m0 << ")\n";
  os << "  " << pad("comparison", 56) << pad("magnitude", 11) << pad("shape", 8) << pad("direction", 11) << "all\n";
  for (const auto& [name, by_feature] : comps.items()) {
    os << "  " << pad(name, 56);
    for (const char* f : {"magnitude", "shape", "direction", "all"}) {
      const bool has = by_feature.contains(f) && by_feature[f].contains(m0);
      os << pad(has ? fmt("%.2f", by_feature[f][m0].at("auc").get<double>()) : "-", std::string(f) == "all" ? 4 : (std::string(f) == "shape" ? 8 : 11));
    }
    os << "\n";
  }

  if (doc.contains("cross_method")) {
    const auto& c = doc["cross_method"];
    os << "\nCross-method transfer (trained on healthy vs drift, tested on healthy vs "
       << c.at("positive").get<std::string>() << "): AUC " << fmt("%.2f", c.at("auc").get<double>()) << "  95% CI ["
       << fmt("%.2f", c.at("ci")[0].get<double>()) << ", " << fmt("%.2f", c.at("ci")[1].get<double>()) << "]\n";
  }

  os << "\nOrdinal severity (Spearman of drift log-odds vs intensity)\n";
  for (const auto& [g, o] : doc.at("ordinal_severity").items()) {
    os << "  " << pad(g, 28);
    if (o.contains("rho"))
      os << "rho = " << fmt("%.3f", o["rho"].get<double>()) << "  p = " << fmt("%.3g", o["p_value"].get<double>())
         << "  n = " << o["n"].get<int>() << "\n";
    else
      os << o.value("note", std::string("n/a")) << "\n";
  }

  os << "\nFeature-family importance (mean |standardised weight|, binary model)\n";
  for (const auto& [f, v] : doc.at("feature_importance").at("mean_abs_weight").items())
    os << "  " << pad(f, 12) << (v.is_number() ? fmt("%.4g", v.get<double>()) : v.get<std::string>()) << "\n";
  if (doc.at("feature_importance").contains("ratio"))
    for (const auto& [k, v] : doc["feature_importance"]["ratio"].items())
      os << "  " << pad(k, 22) << fmt("%.3g", v.get<double>()) << "\n";
  for (const auto& n : doc.at("metadata").at("notes")) os << "\nnote: " << n.get<std::string>();
  os << "\n";
  return os.str();
}

}  // namespace lorascope
