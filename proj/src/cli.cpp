// SPDX-License-Identifier: Apache-2.0
#include "lorascope/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <type_traits>

#include <CLI11.hpp>
#include <json.hpp>

#include "lorascope/adapter.hpp"
#include "lorascope/alignment.hpp"
#include "lorascope/behavior.hpp"
#include "lorascope/centroid.hpp"
#include "lorascope/classify.hpp"
#include "lorascope/container.hpp"
#include "lorascope/error.hpp"
#include "lorascope/evaluation.hpp"
#include "lorascope/features.hpp"
#include "lorascope/parallel.hpp"
#include "lorascope/pca.hpp"
#include "lorascope/synthgen.hpp"

namespace lorascope::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

constexpr const char* kSnapshotFormat = "lorascope-run/1";

template <typename T>
struct is_vector : std::false_type {};
template <typename T>
struct is_vector<std::vector<T>> : std::true_type {};

// Options of one subcommand. Each value resolves as default < config file <
// command line, and the resolved set is what the snapshot records.
class Params {
 public:
  explicit Params(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "JSON run snapshot / config file to take defaults from");
  }

  template <typename T>
  CLI::Option* add(const std::string& name, T& var, const std::string& desc) {
    CLI::Option* opt = app_->add_option("--" + name, var, desc);
    if constexpr (is_vector<T>::value)
      opt->delimiter(',');
    else
      opt->capture_default_str();
    items_.push_back({name, opt, [&var] { return json(var); }, [&var](const json& v) { var = v.get<T>(); }});
    return opt;
  }

  bool given(const std::string& name) const {
    for (const auto& it : items_)
      if (it.name == name) return it.opt->count() > 0;
    return false;
  }

  void resolve(const std::string& command) {
    if (config_path_.empty()) return;
    json doc;
    try {
      doc = json::parse(read_text_file(config_path_));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, "config '" + config_path_ + "': " + e.what());
    }
    if (!doc.is_object()) fail(ErrorKind::parse, "config '" + config_path_ + "' is not a JSON object");
    if (doc.contains("command") && doc["command"] != command)
      fail(ErrorKind::usage, "config '" + config_path_ + "' is for command '" +
                                 doc["command"].get<std::string>() + "', not '" + command + "'");
    const json& params = doc.contains("params") ? doc["params"] : doc;
    for (const auto& [key, value] : params.items()) {
      auto it = std::find_if(items_.begin(), items_.end(), [&](const Item& i) { return i.name == key; });
      if (it == items_.end()) fail(ErrorKind::usage, "config '" + config_path_ + "': unknown key '" + key + "'");
      if (it->opt->count() > 0) continue;
      try {
        it->load(value);
      } catch (const json::exception& e) {
        fail(ErrorKind::parse, "config '" + config_path_ + "': key '" + key + "': " + e.what());
      }
    }
  }

  json snapshot(const std::string& command) const {
    json p = json::object();
    for (const auto& it : items_) p[it.name] = it.dump();
    return {{"format", kSnapshotFormat}, {"command", command}, {"params", p}};
  }

 private:
  struct Item {
    std::string name;
    CLI::Option* opt;
    std::function<json()> dump;
    std::function<void(const json&)> load;
  };
  CLI::App* app_;
  std::string config_path_;
  std::vector<Item> items_;
};

fs::path prepare_out(const std::string& out) {
  if (out.empty()) fail(ErrorKind::usage, "--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) fail(ErrorKind::io, "cannot create output directory '" + out + "': " + ec.message());
  return fs::path(out);
}

void write_snapshot(const fs::path& out, const std::string& command, const Params& params) {
  write_text_atomic(out / (command + ".config.json"), params.snapshot(command).dump(2) + "\n");
}

void write_json(const fs::path& path, const json& doc) { write_text_atomic(path, doc.dump(2) + "\n"); }

unsigned thread_count(int threads) {
  if (threads < 0) fail(ErrorKind::usage, "--threads must be >= 0");
  return threads == 0 ? default_threads() : static_cast<unsigned>(threads);
}

std::set<std::string> as_set(const std::vector<std::string>& v) { return {v.begin(), v.end()}; }

struct Population {
  Manifest manifest;
  std::vector<AdapterDelta> deltas;
  std::vector<AdapterMetadata> labels;
};

// Loads every manifest entry not matched by `exclude`, in manifest order.
Population load_population(const std::string& manifest_path, ScalePolicy policy, const Selection& exclude,
                           unsigned threads) {
  if (manifest_path.empty()) fail(ErrorKind::usage, "--manifest is required");
  Population pop;
  pop.manifest = load_manifest(manifest_path);
  std::vector<const ManifestEntry*> keep;
  for (const auto& e : pop.manifest.entries)
    if (!selected(e, exclude)) keep.push_back(&e);
  pop.deltas.resize(keep.size());
  parallel_for(keep.size(), threads, [&](std::size_t i) {
    pop.deltas[i] = reconstruct_delta(load_adapter(pop.manifest, *keep[i]), policy);
  });
  for (const auto* e : keep) pop.labels.push_back(e->metadata());
  return pop;
}

// Accepts the centroid output directory or the .safetensors file in it.
CentroidModel load_centroid_dir(const std::string& where) {
  const fs::path p(where);
  if (p.extension() == ".safetensors") return load_centroid(p, fs::path(p).replace_extension(".json"));
  return load_centroid(p / "centroid.safetensors", p / "centroid.json");
}

// The centroid must average exactly the healthy training adapters of the
// split in use; anything else leaks test adapters into the features.
void check_centroid_split(const CentroidModel& c, const std::vector<AdapterMetadata>& labels, const SplitPlan& plan) {
  const auto expected = centroid_source_ids(labels, plan);
  if (c.source_adapter_ids != expected)
    fail(ErrorKind::dependency,
         "centroid was built from a different healthy training split; rebuild it with the same "
         "--manifest/--ratio/--seed/--exclude-category");
}

bool needs_direction(const std::vector<FeatureSplit>& splits) {
  return std::any_of(splits.begin(), splits.end(),
                     [](FeatureSplit f) { return families_of(f).count(FeatureFamily::direction) > 0; });
}

FeatureMatrix build_matrix(const Population& pop, const CentroidModel* centroid, int k, unsigned threads) {
  std::vector<SpectralFeatureSet> feats(pop.deltas.size());
  parallel_for(pop.deltas.size(), threads,
               [&](std::size_t i) { feats[i] = extract_features(pop.deltas[i], centroid, k, 1); });
  return assemble_matrix(feats, kAllFamilies, kAllModules, pop.labels);
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::vector<std::string>& names, Parse parse, const char* what) {
  if (names.empty()) fail(ErrorKind::usage, std::string("empty ") + what + " list");
  std::vector<T> out;
  for (const auto& n : names) {
    const T v = parse(n);
    if (std::find(out.begin(), out.end(), v) == out.end()) out.push_back(v);
  }
  return out;
}

// ---------------------------------------------------------------- commands

struct Common {
  std::string manifest;
  std::string out;
  int threads = 0;
  std::string scale_policy = "unit";
  std::vector<std::string> exclude;
};

void add_common(Params& p, Common& c, bool with_manifest = true) {
  if (with_manifest) p.add("manifest", c.manifest, "Population manifest (JSON)");
  p.add("out", c.out, "Output directory");
  p.add("threads", c.threads, "Worker threads (0 = all cores); results do not depend on it");
  if (with_manifest) {
    p.add("scale-policy", c.scale_policy, "unit | alpha-over-rank");
    p.add("exclude-category", c.exclude, "Categories or groups to leave out (comma separated)");
  }
}

struct SynthArgs {
  Common c;
  std::string spec = "default";
  std::uint64_t seed = 42;
};

void cmd_synth(const SynthArgs& a, const Params& params, std::ostream& out) {
  const fs::path dir = prepare_out(a.c.out);
  PopulationSpec spec = a.spec == "default" ? default_population_spec(a.seed)
                                            : spec_from_json(read_text_file(a.spec));
  spec.master_seed = a.seed;
  const Manifest m = gen_population(spec, dir, thread_count(a.c.threads));
  write_text_atomic(dir / "asr.csv", synthetic_asr_csv(m, a.seed));
  write_text_atomic(dir / "probes.json", synthetic_probes_json(spec.dims, a.seed));
  write_snapshot(dir, "synth", params);
  out << "wrote " << m.entries.size() << " adapters to " << dir.string() << "\n";
}

struct ExtractArgs {
  Common c;
  int k = 8;
  std::string centroid;
  std::string feature_split = "all";
  std::string module_split = "both";
};

void cmd_extract(const ExtractArgs& a, const Params& params, std::ostream& out) {
  const FeatureSplit f = parse_feature_split(a.feature_split);
  const ModuleSplit m = parse_module_split(a.module_split);
  const bool direction = families_of(f).count(FeatureFamily::direction) > 0;
  if (direction && a.centroid.empty())
    fail(ErrorKind::dependency, "feature split '" + a.feature_split +
                                    "' includes direction features; run `centroid` first and pass --centroid");
  const fs::path dir = prepare_out(a.c.out);
  const unsigned threads = thread_count(a.c.threads);
  const Population pop = load_population(a.c.manifest, parse_scale_policy(a.c.scale_policy), as_set(a.c.exclude),
                                         threads);
  CentroidModel centroid;
  if (direction) centroid = load_centroid_dir(a.centroid);
  const FeatureMatrix full = build_matrix(pop, direction ? &centroid : nullptr, a.k, threads);
  const FeatureMatrix sel = full.filter_columns(families_of(f), modules_of(m));
  write_text_atomic(dir / "features.csv", feature_matrix_csv(sel));
  write_text_atomic(dir / "labels.json", feature_labels_json(sel));
  write_snapshot(dir, "extract", params);
  out << "wrote " << sel.rows.size() << " x " << sel.columns.size() << " features to " << dir.string() << "\n";
}

struct CentroidArgs {
  Common c;
  int k = 8;
  double ratio = 0.7;
  std::uint64_t seed = 42;
};

void cmd_centroid(const CentroidArgs& a, const Params& params, std::ostream& out) {
  const fs::path dir = prepare_out(a.c.out);
  const unsigned threads = thread_count(a.c.threads);
  Population pop = load_population(a.c.manifest, parse_scale_policy(a.c.scale_policy), as_set(a.c.exclude),
                                   threads);
  const SplitPlan plan = population_split(pop.labels, a.ratio, a.seed);
  const auto ids = centroid_source_ids(pop.labels, plan);
  std::vector<AdapterDelta> healthy;
  for (auto& d : pop.deltas)
    if (std::binary_search(ids.begin(), ids.end(), d.adapter_id)) healthy.push_back(std::move(d));
  CentroidModel model = build_centroid(healthy, a.k, threads);
  for (const auto& l : pop.labels)
    if (l.category == Category::healthy && !std::binary_search(ids.begin(), ids.end(), l.adapter_id))
      model.excluded_adapter_ids.push_back(l.adapter_id);
  save_centroid(model, dir / "centroid.safetensors", dir / "centroid.json");
  write_snapshot(dir, "centroid", params);
  out << "centroid from " << ids.size() << " healthy training adapters -> " << dir.string() << "\n";
}

struct ModelArgs {
  Common c;
  int k = 8;
  double lambda = 1.0;
  double ratio = 0.7;
  std::uint64_t seed = 42;
  std::string centroid;
  std::vector<std::string> feature_splits = {"all", "magnitude", "shape", "direction"};
  std::vector<std::string> module_splits = {"both", "query", "value"};
  int bootstrap = 1000;
  double ci_level = 0.95;
  std::vector<std::string> drift = {"inverted_harmlessness", "inverted_helpfulness"};
  std::vector<std::string> transfer = {"steering"};
};

EvalConfig eval_config(const ModelArgs& a) {
  EvalConfig cfg;
  cfg.k = a.k;
  cfg.lambda = a.lambda;
  cfg.ratio = a.ratio;
  cfg.seed = a.seed;
  cfg.bootstrap_resamples = a.bootstrap;
  cfg.ci_level = a.ci_level;
  cfg.feature_splits = parse_list<FeatureSplit>(a.feature_splits, parse_feature_split, "feature split");
  cfg.module_splits = parse_list<ModuleSplit>(a.module_splits, parse_module_split, "module split");
  cfg.drift_categories.clear();
  for (const auto& s : a.drift) cfg.drift_categories.insert(parse_category(s));
  cfg.transfer_categories.clear();
  for (const auto& s : a.transfer) cfg.transfer_categories.insert(parse_category(s));
  cfg.threads = thread_count(a.c.threads);
  return cfg;
}

struct Prepared {
  Population pop;
  SplitPlan plan;
  FeatureMatrix matrix;
  std::vector<std::string> centroid_sources;
};

Prepared prepare_model_inputs(const ModelArgs& a, const EvalConfig& cfg) {
  if (needs_direction(cfg.feature_splits) && a.centroid.empty())
    fail(ErrorKind::dependency, "direction features requested but no centroid given; run `centroid` first and "
                                "pass --centroid (or restrict --feature-split to magnitude,shape)");
  Prepared p;
  p.pop = load_population(a.c.manifest, parse_scale_policy(a.c.scale_policy), as_set(a.c.exclude), cfg.threads);
  p.plan = population_split(p.pop.labels, cfg.ratio, cfg.seed);
  std::optional<CentroidModel> centroid;
  if (!a.centroid.empty()) {
    centroid = load_centroid_dir(a.centroid);
    check_centroid_split(*centroid, p.pop.labels, p.plan);
    p.centroid_sources = centroid->source_adapter_ids;
  }
  p.matrix = build_matrix(p.pop, centroid ? &*centroid : nullptr, cfg.k, cfg.threads);
  return p;
}

void cmd_train(const ModelArgs& a, const Params& params, std::ostream& out) {
  EvalConfig cfg = eval_config(a);
  const fs::path dir = prepare_out(a.c.out);
  const Prepared p = prepare_model_inputs(a, cfg);
  std::vector<std::string> ids;
  std::vector<int> y;
  for (const auto& l : p.pop.labels) {
    const bool drift = cfg.drift_categories.count(l.category) > 0;
    if (l.category != Category::healthy && !drift) continue;
    ids.push_back(l.adapter_id);
    y.push_back(drift ? 1 : 0);
  }
  ClassifierModel model;
  const CellResult cell = evaluate_cell(p.matrix, ids, y, p.plan.restrict_to(ids), cfg.feature_splits.front(),
                                        cfg.module_splits.front(), cfg, cfg.seed, &model);
  write_text_atomic(dir / "classifier.json", model_to_json(model) + "\n");
  json split = {{"train_ids", p.plan.train_ids}, {"test_ids", p.plan.test_ids}, {"ratio", p.plan.ratio},
                {"seed", p.plan.seed}, {"strata", p.plan.strata}};
  write_json(dir / "split.json", split);
  write_snapshot(dir, "train", params);
  char line[160];
  std::snprintf(line, sizeof line, "healthy vs drift: held-out AUC %.3f (%d train / %d test)\n", cell.auc,
                cell.n_train, cell.n_test);
  out << line;
}

void cmd_evaluate(const ModelArgs& a, const Params& params, std::ostream& out) {
  EvalConfig cfg = eval_config(a);
  const fs::path dir = prepare_out(a.c.out);
  const Prepared p = prepare_model_inputs(a, cfg);
  const EvalReport r = run_evaluation(p.matrix, p.plan, cfg, p.centroid_sources);
  write_text_atomic(dir / "report.json", report_to_json(r));
  write_text_atomic(dir / "report.csv", report_to_csv(r));
  write_text_atomic(dir / "classifier.json", model_to_json(r.binary_model) + "\n");
  write_snapshot(dir, "evaluate", params);
  const auto& b = r.cells.front();
  char line[200];
  std::snprintf(line, sizeof line, "%s AUC %.3f [%.3f, %.3f]; report -> %s\n", b.comparison.c_str(), b.auc,
                b.ci.low, b.ci.high, (dir / "report.json").string().c_str());
  out << line;
}

struct PcaArgs {
  Common c;
  std::vector<std::string> select = {"inverted_harmlessness", "inverted_helpfulness"};
  int components = 3;
};

void cmd_pca(const PcaArgs& a, const Params& params, std::ostream& out) {
  const fs::path dir = prepare_out(a.c.out);
  const unsigned threads = thread_count(a.c.threads);
  if (a.select.empty()) fail(ErrorKind::usage, "--select must name at least one category or group");
  const Population all = load_population(a.c.manifest, parse_scale_policy(a.c.scale_policy), as_set(a.c.exclude),
                                         threads);
  std::vector<AdapterDelta> deltas;
  std::vector<const ManifestEntry*> entries;
  for (std::size_t i = 0; i < all.deltas.size(); ++i) {
    const ManifestEntry& e = all.manifest.find(all.labels[i].adapter_id);
    if (!selected(e, as_set(a.select))) continue;
    deltas.push_back(all.deltas[i]);
    entries.push_back(&e);
  }
  if (deltas.size() < 3) fail(ErrorKind::population, "PCA needs at least 3 selected adapters");
  const PcaModel model = pca_fit(std::span<const AdapterDelta>(deltas), threads);

  // Type labels: members of the first selection entry against the rest.
  std::vector<int> type;
  std::vector<double> steps;
  bool have_steps = true;
  for (const auto* e : entries) {
    type.push_back(selected(*e, {a.select.front()}) ? 1 : 0);
    if (e->intensity)
      steps.push_back(static_cast<double>(*e->intensity));
    else
      have_steps = false;
  }
  const bool two_types = std::count(type.begin(), type.end(), 1) > 0 && std::count(type.begin(), type.end(), 0) > 0;

  json comps = json::array();
  const int nc = std::min(a.components, model.components());
  for (int c = 0; c < nc; ++c) {
    json j = {{"component", c + 1},
              {"eigenvalue", model.eigenvalues(c)},
              {"explained_variance_ratio", model.explained_variance_ratio(c)},
              {"orientation", model.orientation[static_cast<std::size_t>(c)]}};
    if (two_types) {
      const OrientedAuc t = pc_objective_auc(model, c, type);
      j["type_auc"] = {{"auc", t.auc}, {"raw_auc", t.raw_auc}, {"orientation", t.orientation},
                       {"positive", a.select.front()}};
    }
    if (have_steps) {
      try {
        const OrientedCorrelation r = pc_intensity_rho(model, c, steps);
        j["intensity_rho"] = {{"rho", r.correlation.rho}, {"p_value", r.correlation.p_value},
                              {"n", r.correlation.n}, {"orientation", r.orientation}};
      } catch (const Error& e) {
        j["intensity_rho"] = {{"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
      }
    }
    comps.push_back(j);
  }
  json scores = json::array();
  for (std::size_t i = 0; i < model.adapter_ids.size(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(nc));
    for (int c = 0; c < nc; ++c) row[static_cast<std::size_t>(c)] = model.scores(static_cast<Eigen::Index>(i), c);
    scores.push_back({{"adapter_id", model.adapter_ids[i]}, {"group", entries[i]->group}, {"scores", row}});
  }
  json doc = {{"format", "lorascope-pca/1"},
              {"selection", a.select},
              {"n", model.n},
              {"ordering_tag", model.ordering_tag},
              {"components", comps},
              {"scores", scores}};
  write_json(dir / "pca.json", doc);
  write_snapshot(dir, "pca", params);
  out << "PCA over " << model.n << " adapters -> " << (dir / "pca.json").string() << "\n";
}

struct AlignArgs {
  Common c;
  std::string adapter;
  std::string probes;
  int k = 8;
  std::vector<std::string> modules = {"query", "value"};
  int draws = 20000;
  std::uint64_t seed = 0;
};

void cmd_align(const AlignArgs& a, const Params& params, std::ostream& out) {
  if (a.adapter.empty()) fail(ErrorKind::usage, "--adapter is required");
  if (a.probes.empty()) fail(ErrorKind::usage, "--probes is required");
  const fs::path dir = prepare_out(a.c.out);
  const Manifest m = load_manifest(a.c.manifest);
  const AdapterDelta delta =
      reconstruct_delta(load_adapter(m, m.find(a.adapter)), parse_scale_policy(a.c.scale_policy));
  const ProbeNormals probes = parse_probes(read_text_file(a.probes));
  std::vector<AlignmentReport> reports;
  for (const auto& name : a.modules)
    reports.push_back(alignment_report(delta, probes, parse_module(name), a.k, a.draws, a.seed));
  write_text_atomic(dir / "alignment.json", alignment_report_json(a.adapter, reports, probes));
  write_snapshot(dir, "align", params);
  for (const auto& r : reports) {
    char line[200];
    std::snprintf(line, sizeof line, "%s: max %.4f (layer %d), mean %.4f, %.2fx random\n",
                  std::string(module_name(r.module)).c_str(), r.max, r.argmax_layer, r.mean, r.mean_ratio);
    out << line;
  }
}

struct LinkArgs {
  Common c;
  std::string asr;
  std::string report;
  std::vector<std::string> group_a = {"inverted_harmlessness"};
  std::vector<std::string> group_b = {"healthy"};
  std::vector<std::string> dose = {"inverted_harmlessness", "inverted_helpfulness"};
  std::vector<std::string> frob = {"inverted_harmlessness", "inverted_helpfulness"};
  std::vector<std::string> geo_exclude = {"steering"};
};

json corr_json(const stats::Correlation& c) { return {{"rho", c.rho}, {"p_value", c.p_value}, {"n", c.n}}; }

// Runs one analysis; a failure is recorded in the output rather than
// aborting the remaining analyses.
template <typename F>
json guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    return {{"error", std::string(to_string(e.kind()))}, {"message", e.what()}};
  }
}

void cmd_link(const LinkArgs& a, const Params& params, std::ostream& out) {
  if (a.asr.empty()) fail(ErrorKind::usage, "--asr is required");
  const fs::path dir = prepare_out(a.c.out);
  const unsigned threads = thread_count(a.c.threads);
  const Manifest m = load_manifest(a.c.manifest);
  const AsrTable table = ingest_asr(read_text_file(a.asr));

  json doc = {{"format", "lorascope-link/1"}};
  const Elevation el = mean_elevation(table, m, as_set(a.group_a), as_set(a.group_b));
  doc["elevation"] = {{"group_a", a.group_a}, {"group_b", a.group_b}, {"mean_a", el.mean_a},
                      {"mean_b", el.mean_b},   {"n_a", el.n_a},         {"n_b", el.n_b},
                      {"delta", el.delta},     {"meets_threshold", el.meets_threshold}};

  json dose = json::object();
  for (const auto& s : a.dose)
    dose[s] = guarded([&] {
      const DoseResponse d = dose_response(table, m, {s});
      json levels = json::object();
      for (const auto& [lvl, v] : d.mean_asr_by_level) levels[std::to_string(lvl)] = v;
      return json{{"correlation", corr_json(d.correlation)}, {"mean_asr_by_level", levels},
                  {"aggregation", "mean per level"}};
    });
  doc["dose_response"] = dose;

  if (!a.frob.empty()) {
    const Population pop = load_population(a.c.manifest, parse_scale_policy(a.c.scale_policy), as_set(a.c.exclude),
                                           threads);
    std::vector<SpectralFeatureSet> feats(pop.deltas.size());
    parallel_for(pop.deltas.size(), threads,
                 [&](std::size_t i) { feats[i] = extract_features(pop.deltas[i], nullptr, 1, 1); });
    json fr = json::object();
    for (const auto& s : a.frob)
      fr[s] = guarded([&] { return json{{"correlation", corr_json(frob_vs_asr(feats, table, m, {s}))},
                                        {"statistic", "mean Frobenius norm over sublayers"}}; });
    doc["frobenius_vs_asr"] = fr;
  }

  if (!a.report.empty()) {
    json rep;
    try {
      rep = json::parse(read_text_file(a.report));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, "report '" + a.report + "': " + e.what());
    }
    std::map<std::string, double> scores;
    for (const auto& d : rep.at("drift_probabilities")) scores[d.at("adapter_id")] = d.at("log_odds").get<double>();
    doc["geometry_behavior"] = guarded([&] {
      const GeoBehavior g = geo_behavior_rho(scores, table, m, as_set(a.geo_exclude));
      return json{{"correlation", corr_json(g.correlation)},
                  {"excluded", g.excluded},
                  {"joined_ids", g.joined_ids},
                  {"score", "binary healthy-vs-drift model log-odds"}};
    });
  }
  write_json(dir / "link.json", doc);
  write_snapshot(dir, "link", params);
  char line[160];
  std::snprintf(line, sizeof line, "ASR elevation %+.3f (%.3f vs %.3f)\n", el.delta, el.mean_a, el.mean_b);
  out << line;
}

struct ReportArgs {
  Common c;
  std::string report;
  std::string link;
};

std::string render_link(const json& link) {
  std::ostringstream os;
  char line[256];
  os << "\nBehavioural link\n";
  const auto& el = link.at("elevation");
  std::snprintf(line, sizeof line, "  ASR elevation: %.3f vs %.3f, delta %+.3f%s\n", el.at("mean_a").get<double>(),
                el.at("mean_b").get<double>(), el.at("delta").get<double>(),
                el.at("meets_threshold").get<bool>() ? " (>= 0.10)" : "");
  os << line;
  auto corr_line = [&](const std::string& label, const json& j) {
    if (j.contains("error")) {
      os << "  " << label << ": " << j.at("error").get<std::string>() << " (" << j.at("message").get<std::string>()
         << ")\n";
      return;
    }
    const auto& c = j.at("correlation");
    std::snprintf(line, sizeof line, "  %s: rho %.3f, p %.3g, n %d\n", label.c_str(), c.at("rho").get<double>(),
                  c.at("p_value").get<double>(), c.at("n").get<int>());
    os << line;
  };
  if (link.contains("dose_response"))
    for (const auto& [k, v] : link["dose_response"].items()) corr_line("dose-response " + k, v);
  if (link.contains("frobenius_vs_asr"))
    for (const auto& [k, v] : link["frobenius_vs_asr"].items()) corr_line("Frobenius vs ASR " + k, v);
  if (link.contains("geometry_behavior")) {
    const auto& g = link["geometry_behavior"];
    corr_line("geometry vs behaviour", g);
    if (g.contains("excluded")) {
      os << "    excluded:";
      for (const auto& e : g["excluded"]) os << " " << e.get<std::string>();
      os << "\n";
    }
  }
  return os.str();
}

void cmd_report(const ReportArgs& a, const Params& params, std::ostream& out) {
  if (a.report.empty()) fail(ErrorKind::usage, "--report is required");
  const fs::path dir = prepare_out(a.c.out);
  std::optional<Manifest> m;
  if (!a.c.manifest.empty()) m = load_manifest(a.c.manifest);
  std::string text = render_report(read_text_file(a.report), m ? &*m : nullptr);
  if (!a.link.empty()) {
    try {
      text += render_link(json::parse(read_text_file(a.link)));
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, "link '" + a.link + "': " + e.what());
    }
  }
  write_text_atomic(dir / "summary.txt", text);
  write_snapshot(dir, "report", params);
  out << text;
}

int dispatch(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"lorascope: spectral forensics for LoRA adapter populations", "lorascope"};
  app.require_subcommand(1);

  SynthArgs synth;
  ExtractArgs extract;
  CentroidArgs centroid;
  ModelArgs train, evaluate;
  PcaArgs pca;
  AlignArgs align;
  LinkArgs link;
  ReportArgs report;

  auto* s_synth = app.add_subcommand("synth", "Generate a synthetic adapter population");
  auto* s_extract = app.add_subcommand("extract", "Write the spectral feature matrix");
  auto* s_centroid = app.add_subcommand("centroid", "Build the healthy centroid from the training split");
  auto* s_train = app.add_subcommand("train", "Train the healthy-vs-drift classifier");
  auto* s_eval = app.add_subcommand("evaluate", "Run the full evaluation battery");
  auto* s_pca = app.add_subcommand("pca", "PCA of flattened weight deltas");
  auto* s_align = app.add_subcommand("align", "Align adapter directions with probe normals");
  auto* s_link = app.add_subcommand("link", "Join geometry with attack-success rates");
  auto* s_report = app.add_subcommand("report", "Render a text summary of an evaluation");

  Params p_synth(s_synth), p_extract(s_extract), p_centroid(s_centroid), p_train(s_train), p_eval(s_eval),
      p_pca(s_pca), p_align(s_align), p_link(s_link), p_report(s_report);

  add_common(p_synth, synth.c, false);
  p_synth.add("spec", synth.spec, "'default' or a population spec JSON file");
  p_synth.add("seed", synth.seed, "Master seed");

  add_common(p_extract, extract.c);
  p_extract.add("k", extract.k, "Singular directions per sublayer");
  p_extract.add("centroid", extract.centroid, "Centroid directory or .safetensors file (needed for direction features)");
  p_extract.add("feature-split", extract.feature_split, "all | magnitude | shape | direction");
  p_extract.add("module-split", extract.module_split, "both | query | value");

  add_common(p_centroid, centroid.c);
  p_centroid.add("k", centroid.k, "Singular directions per sublayer");
  p_centroid.add("ratio", centroid.ratio, "Training fraction per stratum");
  p_centroid.add("seed", centroid.seed, "Split seed");

  for (auto [params, a] : {std::pair{&p_train, &train}, std::pair{&p_eval, &evaluate}}) {
    add_common(*params, a->c);
    params->add("k", a->k, "Singular directions per sublayer");
    params->add("lambda", a->lambda, "L2 penalty");
    params->add("ratio", a->ratio, "Training fraction per stratum");
    params->add("seed", a->seed, "Split and bootstrap seed");
    params->add("centroid", a->centroid, "Centroid directory or .safetensors file");
    params->add("feature-split", a->feature_splits, "Feature families (first is primary)");
    params->add("module-split", a->module_splits, "Module filters (first is primary)");
    params->add("bootstrap", a->bootstrap, "Bootstrap resamples for AUC intervals");
    params->add("ci-level", a->ci_level, "Confidence level");
    params->add("drift-category", a->drift, "Categories labelled as drift");
    params->add("transfer-category", a->transfer, "Categories for the cross-method test");
  }
  train.feature_splits = {"all"};
  train.module_splits = {"both"};

  add_common(p_pca, pca.c);
  p_pca.add("select", pca.select, "Categories or groups to include; the first defines the positive type");
  p_pca.add("components", pca.components, "Components to report");

  add_common(p_align, align.c);
  p_align.add("adapter", align.adapter, "Adapter id");
  p_align.add("probes", align.probes, "Probe normals JSON");
  p_align.add("k", align.k, "Singular directions");
  p_align.add("module", align.modules, "query, value");
  p_align.add("draws", align.draws, "Monte-Carlo draws for the random baseline");
  p_align.add("seed", align.seed, "Baseline seed");

  add_common(p_link, link.c);
  p_link.add("asr", link.asr, "ASR CSV (adapter_id,asr,n_prompts,judge_tag)");
  p_link.add("report", link.report, "Evaluation report (for drift scores)");
  p_link.add("group-a", link.group_a, "Elevation: treated selection");
  p_link.add("group-b", link.group_b, "Elevation: reference selection");
  p_link.add("dose", link.dose, "Selections for dose-response");
  p_link.add("frob", link.frob, "Selections for Frobenius vs ASR");
  p_link.add("geo-exclude", link.geo_exclude, "Excluded from the geometry-behaviour correlation");

  add_common(p_report, report.c, false);
  p_report.add("manifest", report.c.manifest, "Population manifest (optional, for the population table)");
  p_report.add("report", report.report, "Evaluation report JSON");
  p_report.add("link", report.link, "Link JSON (optional)");

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app.exit(e, out, err);
      return 0;
    }
    err << "error[usage]: " << e.what() << "\n";
    return exit_code(ErrorKind::usage);
  }

  auto go = [&](CLI::App* sub, Params& p, const char* name, auto&& body) {
    if (!sub->parsed()) return false;
    p.resolve(name);
    body(p);
    return true;
  };
  go(s_synth, p_synth, "synth", [&](Params& p) { cmd_synth(synth, p, out); }) ||
      go(s_extract, p_extract, "extract", [&](Params& p) { cmd_extract(extract, p, out); }) ||
      go(s_centroid, p_centroid, "centroid", [&](Params& p) { cmd_centroid(centroid, p, out); }) ||
      go(s_train, p_train, "train", [&](Params& p) { cmd_train(train, p, out); }) ||
      go(s_eval, p_eval, "evaluate", [&](Params& p) { cmd_evaluate(evaluate, p, out); }) ||
      go(s_pca, p_pca, "pca", [&](Params& p) { cmd_pca(pca, p, out); }) ||
      go(s_align, p_align, "align", [&](Params& p) { cmd_align(align, p, out); }) ||
      go(s_link, p_link, "link", [&](Params& p) { cmd_link(link, p, out); }) ||
      go(s_report, p_report, "report", [&](Params& p) { cmd_report(report, p, out); });
  return 0;
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  try {
    return dispatch(args, out, err);
  } catch (const Error& e) {
    err << "error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error[io]: " << e.what() << "\n";
    return exit_code(ErrorKind::io);
  } catch (const json::exception& e) {
    err << "error[parse]: " << e.what() << "\n";
    return exit_code(ErrorKind::parse);
  }
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace lorascope::cli
