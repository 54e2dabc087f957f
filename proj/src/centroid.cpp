// SPDX-License-Identifier: Apache-2.0
#include "lorascope/centroid.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

#include "lorascope/container.hpp"
#include "lorascope/error.hpp"
#include "lorascope/parallel.hpp"
#include "lorascope/spectral.hpp"

namespace lorascope {

using json = nlohmann::json;

CentroidModel build_centroid(std::span<const AdapterDelta> healthy, int k, unsigned threads) {
  if (healthy.size() < 2)
    fail(ErrorKind::population, "centroid needs at least 2 healthy adapters, got " +
                                    std::to_string(healthy.size()));
  if (k < 1) fail(ErrorKind::parameter, "centroid k must be positive");

  std::vector<std::size_t> order(healthy.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return healthy[a].adapter_id < healthy[b].adapter_id; });

  const DeltaSchema schema = schema_of(healthy[order[0]]);
  for (const auto& d : healthy)
    if (schema_of(d) != schema)
      fail(ErrorKind::schema, "healthy adapter '" + d.adapter_id + "' has a different sublayer schema");

  CentroidModel model;
  model.k = k;
  model.policy = healthy[order[0]].policy;
  for (auto i : order) model.source_adapter_ids.push_back(healthy[i].adapter_id);

  std::vector<CentroidSublayer> built(schema.size());
  parallel_for(schema.size(), threads, [&](std::size_t s) {
    const SublayerKey key = schema[s].key;
    Matrix mean = Matrix::Zero(schema[s].rows, schema[s].cols);
    for (auto i : order) mean += healthy[i].deltas.at(key);
    mean /= static_cast<double>(healthy.size());
    const auto dec = svd(mean);
    if (k > dec.size())
      fail(ErrorKind::parameter, "centroid k=" + std::to_string(k) + " exceeds min(d, k)=" +
                                     std::to_string(dec.size()) + " at sublayer " + to_string(key));
    CentroidSublayer& out = built[s];
    out.left_vectors = dec.u.leftCols(k);
    out.singular_values = dec.sigma.head(k);
    out.degenerate = !(dec.sigma(0) >= kDegenerateSigma);
  });
  for (std::size_t s = 0; s < schema.size(); ++s) model.per_sublayer.emplace(schema[s].key, std::move(built[s]));
  return model;
}

void save_centroid(const CentroidModel& model, const std::filesystem::path& container_path,
                   const std::filesystem::path& sidecar_path) {
  TensorContainer c;
  c.metadata["format"] = "lorascope-centroid/1";
  json sublayers = json::object();
  for (const auto& [key, s] : model.per_sublayer) {
    const std::string base = "centroid." + std::to_string(key.layer) + "." + std::string(module_token(key.module));
    TensorEntry t;
    t.dtype = DType::f64;
    t.shape = {s.left_vectors.rows(), s.left_vectors.cols()};
    t.values.resize(static_cast<std::size_t>(s.left_vectors.size()));
    Eigen::Map<RowMajorMatrix>(t.values.data(), s.left_vectors.rows(), s.left_vectors.cols()) = s.left_vectors;
    c.tensors.emplace(base + ".U", std::move(t));
    sublayers[to_string(key)] = {
        {"singular_values", std::vector<double>(s.singular_values.data(),
                                                s.singular_values.data() + s.singular_values.size())},
        {"degenerate", s.degenerate}};
  }
  json meta = {{"k", model.k},
               {"scale_policy", std::string(to_string(model.policy))},
               {"source_adapter_ids", model.source_adapter_ids},
               {"excluded_adapter_ids", model.excluded_adapter_ids},
               {"sublayers", sublayers}};
  write_file_atomic(container_path, write_container(c));
  write_text_atomic(sidecar_path, meta.dump(2) + "\n");
}

CentroidModel load_centroid(const std::filesystem::path& container_path,
                            const std::filesystem::path& sidecar_path) {
  const TensorContainer c = parse_container(read_file(container_path));
  json meta;
  try {
    meta = json::parse(read_text_file(sidecar_path));
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, "centroid sidecar: " + std::string(e.what()));
  }
  CentroidModel model;
  try {
    model.k = meta.at("k").get<int>();
    model.policy = parse_scale_policy(meta.at("scale_policy").get<std::string>());
    model.source_adapter_ids = meta.at("source_adapter_ids").get<std::vector<std::string>>();
    model.excluded_adapter_ids = meta.value("excluded_adapter_ids", std::vector<std::string>{});
    for (const auto& [name, t] : c.tensors) {
      // centroid.{layer}.{module}.U
      const auto p1 = name.find('.');
      const auto p2 = name.find('.', p1 + 1);
      const auto p3 = name.rfind('.');
      if (name.rfind("centroid.", 0) != 0 || p2 == std::string::npos || name.substr(p3) != ".U")
        fail(ErrorKind::format, "unexpected centroid tensor '" + name + "'");
      SublayerKey key{std::stoi(name.substr(p1 + 1, p2 - p1 - 1)), parse_module(name.substr(p2 + 1, p3 - p2 - 1))};
      if (t.shape.size() != 2) fail(ErrorKind::shape, "centroid tensor '" + name + "' is not 2-D");
      CentroidSublayer s;
      s.left_vectors = Eigen::Map<const RowMajorMatrix>(t.values.data(), t.shape[0], t.shape[1]);
      const auto& sm = meta.at("sublayers").at(to_string(key));
      const auto sv = sm.at("singular_values").get<std::vector<double>>();
      s.singular_values = Eigen::Map<const Vector>(sv.data(), static_cast<Eigen::Index>(sv.size()));
      s.degenerate = sm.at("degenerate").get<bool>();
      if (s.left_vectors.cols() != model.k || s.singular_values.size() != model.k)
        fail(ErrorKind::schema, "centroid sublayer " + to_string(key) + " does not hold k vectors");
      model.per_sublayer.emplace(key, std::move(s));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, "centroid sidecar: " + std::string(e.what()));
  }
  if (model.source_adapter_ids.empty()) fail(ErrorKind::population, "centroid has no source adapters");
  return model;
}

}  // namespace lorascope
