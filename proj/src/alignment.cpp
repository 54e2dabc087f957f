// SPDX-License-Identifier: Apache-2.0
#include "lorascope/alignment.hpp"

#include <cmath>
#include <random>

#include <json.hpp>

#include "lorascope/error.hpp"
#include "lorascope/rng.hpp"
#include "lorascope/spectral.hpp"

namespace lorascope {

using json = nlohmann::json;

ProbeNormals parse_probes(std::string_view json_text) {
  ProbeNormals p;
  try {
    const json doc = json::parse(json_text);
    p.d_act = doc.at("d_act").get<int>();
    p.source_tag = doc.value("source_tag", std::string());
    if (p.d_act < 1) fail(ErrorKind::schema, "probe d_act must be positive");
    for (const auto& row : doc.at("layers")) {
      const int layer = row.at("layer").get<int>();
      const auto values = row.at("vector").get<std::vector<double>>();
      if (static_cast<int>(values.size()) != p.d_act)
        fail(ErrorKind::schema, "probe for layer " + std::to_string(layer) + " has " + std::to_string(values.size()) +
                                    " entries, d_act is " + std::to_string(p.d_act));
      Vector v = Eigen::Map<const Vector>(values.data(), p.d_act);
      if (!v.allFinite()) fail(ErrorKind::numeric, "probe for layer " + std::to_string(layer) + " is not finite");
      const double norm = v.norm();
      if (norm == 0.0) fail(ErrorKind::numeric, "probe for layer " + std::to_string(layer) + " is the zero vector");
      if (std::abs(norm - 1.0) > 1e-6)
        p.warnings.push_back("layer " + std::to_string(layer) + " probe had norm " + std::to_string(norm) +
                             "; normalised");
      if (!p.per_layer.emplace(layer, v / norm).second)
        fail(ErrorKind::uniqueness, "duplicate probe for layer " + std::to_string(layer));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("probe file: ") + e.what());
  }
  return p;
}

double random_alignment_baseline(int d, int k, int draws, std::uint64_t seed) {
  if (k < 1 || k > d) fail(ErrorKind::parameter, "baseline needs 1 <= k <= d");
  if (draws < 1) fail(ErrorKind::parameter, "baseline needs at least one draw");
  // By rotation invariance, take u_i = e_i.
  Rng rng = make_rng(seed, 0xA119);
  std::normal_distribution<double> n01;
  Vector x(d);
  double acc = 0.0;
  for (int t = 0; t < draws; ++t) {
    for (int i = 0; i < d; ++i) x(i) = n01(rng);
    acc += x.head(k).cwiseAbs().maxCoeff() / x.norm();
  }
  return acc / draws;
}

AlignmentReport alignment_report(const AdapterDelta& delta, const ProbeNormals& probes, ModuleKind module, int k,
                                 int baseline_draws, std::uint64_t seed) {
  AlignmentReport r;
  r.module = module;
  r.k = k;
  int d = 0;
  for (const auto& [key, m] : delta.deltas) {
    if (key.module != module) continue;
    const auto it = probes.per_layer.find(key.layer);
    if (it == probes.per_layer.end())
      fail(ErrorKind::coverage, "no probe normal for layer " + std::to_string(key.layer));
    if (it->second.size() != m.rows())
      fail(ErrorKind::schema, "probe dimension " + std::to_string(it->second.size()) + " does not match " +
                                  to_string(key) + " output dimension " + std::to_string(m.rows()));
    d = static_cast<int>(m.rows());
    const auto s = svd(m);
    r.per_layer[key.layer] = alignment_score(it->second, s, k);
  }
  if (r.per_layer.empty())
    fail(ErrorKind::coverage, std::string("adapter has no ") + std::string(module_name(module)) + " sublayers");
  double sum = 0.0;
  for (const auto& [layer, a] : r.per_layer) {
    sum += a;
    if (a > r.max || r.argmax_layer < 0) {
      r.max = a;
      r.argmax_layer = layer;
    }
  }
  r.mean = sum / static_cast<double>(r.per_layer.size());
  r.random_baseline = random_alignment_baseline(d, k, baseline_draws, seed);
  r.mean_ratio = r.mean / r.random_baseline;
  return r;
}

std::string alignment_report_json(const std::string& adapter_id, const std::vector<AlignmentReport>& reports,
                                  const ProbeNormals& probes) {
  json modules = json::object();
  for (const auto& r : reports) {
    json layers = json::array();
    for (const auto& [l, a] : r.per_layer) layers.push_back({{"layer", l}, {"alignment", a}});
    modules[std::string(module_token(r.module))] = {{"k", r.k},
                                                    {"per_layer", layers},
                                                    {"max", r.max},
                                                    {"argmax_layer", r.argmax_layer},
                                                    {"mean", r.mean},
                                                    {"random_baseline", r.random_baseline},
                                                    {"mean_ratio", r.mean_ratio}};
  }
  json doc = {{"adapter_id", adapter_id},
              {"probe_source", probes.source_tag},
              {"probe_warnings", probes.warnings},
              {"mean_ratio_definition", "mean alignment / expected alignment of a uniform random unit vector"},
              {"modules", modules}};
  return doc.dump(2) + "\n";
}

}  // namespace lorascope
