// SPDX-License-Identifier: Apache-2.0
#include "lorascope/features.hpp"

#include <cstdio>
#include <sstream>

#include <json.hpp>

#include "lorascope/error.hpp"
#include "lorascope/parallel.hpp"

namespace lorascope {

using json = nlohmann::json;

bool SpectralFeatureSet::has_direction() const {
  return !per_sublayer.empty() && per_sublayer.begin()->second.direction.has_value();
}

std::vector<SublayerKey> SpectralFeatureSet::degenerate_sublayers() const {
  std::vector<SublayerKey> out;
  for (const auto& [key, f] : per_sublayer)
    if (f.shape.degenerate) out.push_back(key);
  return out;
}

Vector direction_features(const SvdResult<double>& s, const CentroidModel& centroid, const SublayerKey& key,
                          int k) {
  const auto it = centroid.per_sublayer.find(key);
  if (it == centroid.per_sublayer.end())
    fail(ErrorKind::schema, "centroid has no sublayer " + to_string(key));
  if (k > centroid.k)
    fail(ErrorKind::parameter, "direction k=" + std::to_string(k) + " exceeds centroid k=" +
                                   std::to_string(centroid.k));
  if (it->second.degenerate) return Vector::Zero(k);
  return centroid_cosines(s, it->second.left_vectors, it->second.singular_values, k);
}

SpectralFeatureSet extract_features(const AdapterDelta& delta, const CentroidModel* centroid, int k,
                                    unsigned threads) {
  if (k < 1) fail(ErrorKind::parameter, "k must be positive");
  if (centroid) {
    for (const auto& [key, m] : delta.deltas) {
      const auto it = centroid->per_sublayer.find(key);
      if (it == centroid->per_sublayer.end())
        fail(ErrorKind::schema, "centroid has no sublayer " + to_string(key));
      if (it->second.left_vectors.rows() != m.rows())
        fail(ErrorKind::schema, "centroid sublayer " + to_string(key) + " has a different row dimension");
    }
    if (centroid->per_sublayer.size() != delta.deltas.size())
      fail(ErrorKind::schema, "centroid sublayer schema differs from adapter '" + delta.adapter_id + "'");
  }

  std::vector<SublayerKey> keys;
  std::vector<const Matrix*> mats;
  for (const auto& [key, m] : delta.deltas) {
    keys.push_back(key);
    mats.push_back(&m);
  }
  std::vector<SublayerFeatures> built(keys.size());
  parallel_for(keys.size(), threads, [&](std::size_t i) {
    SvdResult<double> s;
    try {
      s = svd(*mats[i]);
    } catch (const Error& e) {
      throw Error(e.kind(), "adapter '" + delta.adapter_id + "' sublayer " + to_string(keys[i]) + ": " + e.what());
    }
    if (k > s.size())
      fail(ErrorKind::parameter, "k=" + std::to_string(k) + " exceeds min(d, k)=" + std::to_string(s.size()) +
                                     " at sublayer " + to_string(keys[i]));
    built[i].magnitude = magnitude_features(s, k);
    built[i].shape = shape_features(s);
    if (centroid) {
      if (built[i].shape.degenerate) built[i].direction = Vector::Zero(k);
      else built[i].direction = direction_features(s, *centroid, keys[i], k);
    }
  });

  SpectralFeatureSet out;
  out.adapter_id = delta.adapter_id;
  out.k = k;
  for (std::size_t i = 0; i < keys.size(); ++i) out.per_sublayer.emplace(keys[i], std::move(built[i]));
  return out;
}

std::string FeatureColumn::label() const {
  return to_string(key) + "." + std::string(to_string(family)) + "." + name;
}

std::vector<std::pair<FeatureFamily, std::string>> feature_names(int k) {
  std::vector<std::pair<FeatureFamily, std::string>> out;
  out.emplace_back(FeatureFamily::magnitude, "frobenius_norm");
  out.emplace_back(FeatureFamily::magnitude, "spectral_norm");
  for (int i = 1; i <= k; ++i) out.emplace_back(FeatureFamily::magnitude, "sigma_" + std::to_string(i));
  out.emplace_back(FeatureFamily::shape, "stable_rank");
  out.emplace_back(FeatureFamily::shape, "sv_entropy");
  out.emplace_back(FeatureFamily::shape, "concentration");
  out.emplace_back(FeatureFamily::shape, "effective_rank");
  for (int i = 1; i <= k; ++i) out.emplace_back(FeatureFamily::direction, "cos_u" + std::to_string(i));
  return out;
}

namespace {

std::vector<double> record_values(const SublayerFeatures& f, int k) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(2 * k + 6));
  v.push_back(f.magnitude.frobenius_norm);
  v.push_back(f.magnitude.spectral_norm);
  for (int i = 0; i < k; ++i) v.push_back(f.magnitude.top_singular_values(i));
  v.push_back(f.shape.stable_rank);
  v.push_back(f.shape.sv_entropy);
  v.push_back(f.shape.concentration);
  v.push_back(f.shape.effective_rank);
  for (int i = 0; i < k; ++i) v.push_back(f.direction ? (*f.direction)(i) : 0.0);
  return v;
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json label_to_json(const AdapterMetadata& m) {
  json j = {{"adapter_id", m.adapter_id},
            {"category", std::string(to_string(m.category))},
            {"method", m.method},
            {"seed", m.seed},
            {"group", m.group}};
  j["intensity"] = m.intensity ? json(*m.intensity) : json(nullptr);
  if (m.alpha) j["alpha"] = *m.alpha;
  if (m.held_out) j["held_out"] = true;
  return j;
}

}  // namespace

Eigen::Index FeatureMatrix::row_index(const std::string& adapter_id) const {
  for (std::size_t i = 0; i < rows.size(); ++i)
    if (rows[i] == adapter_id) return static_cast<Eigen::Index>(i);
  fail(ErrorKind::schema, "adapter '" + adapter_id + "' is not a row of the feature matrix");
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::string> ids) const {
  FeatureMatrix out;
  out.columns = columns;
  out.values.resize(static_cast<Eigen::Index>(ids.size()), values.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto r = row_index(ids[i]);
    out.rows.push_back(ids[i]);
    out.values.row(static_cast<Eigen::Index>(i)) = values.row(r);
    if (!labels.empty()) out.labels.push_back(labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

FeatureMatrix FeatureMatrix::filter_columns(const std::set<FeatureFamily>& families,
                                            const std::set<ModuleKind>& modules) const {
  if (families.empty()) fail(ErrorKind::parameter, "feature family filter is empty");
  if (modules.empty()) fail(ErrorKind::parameter, "module filter is empty");
  std::vector<Eigen::Index> keep;
  for (std::size_t j = 0; j < columns.size(); ++j)
    if (families.count(columns[j].family) && modules.count(columns[j].key.module))
      keep.push_back(static_cast<Eigen::Index>(j));
  FeatureMatrix out;
  out.rows = rows;
  out.labels = labels;
  out.values.resize(values.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) {
    out.columns.push_back(columns[static_cast<std::size_t>(keep[j])]);
    out.values.col(static_cast<Eigen::Index>(j)) = values.col(keep[j]);
  }
  return out;
}

FeatureMatrix assemble_matrix(std::span<const SpectralFeatureSet> features,
                              const std::set<FeatureFamily>& family_filter,
                              const std::set<ModuleKind>& module_filter,
                              std::span<const AdapterMetadata> labels) {
  if (family_filter.empty()) fail(ErrorKind::parameter, "feature family filter is empty");
  if (module_filter.empty()) fail(ErrorKind::parameter, "module filter is empty");
  if (features.empty()) fail(ErrorKind::population, "no feature sets to assemble");
  if (!labels.empty() && labels.size() != features.size())
    fail(ErrorKind::schema, "label count does not match feature set count");

  const auto& first = features.front();
  for (const auto& f : features) {
    if (f.k != first.k) fail(ErrorKind::schema, "feature sets use different k");
    if (f.per_sublayer.size() != first.per_sublayer.size())
      fail(ErrorKind::schema, "adapter '" + f.adapter_id + "' has a different sublayer schema");
    auto a = f.per_sublayer.begin();
    auto b = first.per_sublayer.begin();
    for (; a != f.per_sublayer.end(); ++a, ++b)
      if (a->first != b->first) fail(ErrorKind::schema, "adapter '" + f.adapter_id + "' has a different sublayer schema");
    if (family_filter.count(FeatureFamily::direction) && !f.has_direction())
      fail(ErrorKind::dependency, "direction features requested but adapter '" + f.adapter_id +
                                      "' was extracted without a centroid");
  }

  const auto names = feature_names(first.k);
  FeatureMatrix out;
  std::vector<std::pair<std::size_t, std::size_t>> picks;  // (sublayer ordinal, record slot)
  std::size_t ordinal = 0;
  for (const auto& [key, rec] : first.per_sublayer) {
    if (module_filter.count(key.module)) {
      for (std::size_t n = 0; n < names.size(); ++n) {
        if (!family_filter.count(names[n].first)) continue;
        out.columns.push_back({key, names[n].first, names[n].second});
        picks.emplace_back(ordinal, n);
      }
    }
    ++ordinal;
  }

  out.values.resize(static_cast<Eigen::Index>(features.size()), static_cast<Eigen::Index>(picks.size()));
  for (std::size_t r = 0; r < features.size(); ++r) {
    out.rows.push_back(features[r].adapter_id);
    std::vector<std::vector<double>> recs;
    for (const auto& [key, rec] : features[r].per_sublayer) recs.push_back(record_values(rec, first.k));
    for (std::size_t c = 0; c < picks.size(); ++c)
      out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = recs[picks[c].first][picks[c].second];
  }
  if (!labels.empty()) out.labels.assign(labels.begin(), labels.end());
  return out;
}

std::string feature_matrix_csv(const FeatureMatrix& m) {
  std::string out = "adapter_id";
  for (const auto& c : m.columns) out += "," + c.label();
  out += "\n";
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    out += m.rows[static_cast<std::size_t>(r)];
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) out += "," + fmt17(m.values(r, c));
    out += "\n";
  }
  return out;
}

std::string feature_labels_json(const FeatureMatrix& m) {
  json doc = json::array();
  for (const auto& l : m.labels) doc.push_back(label_to_json(l));
  return doc.dump(2) + "\n";
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

FeatureColumn parse_column(const std::string& label) {
  // <layer>.<module>.<family>.<name>
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream ss(label);
  while (std::getline(ss, cur, '.')) parts.push_back(cur);
  if (parts.size() != 4) fail(ErrorKind::parse, "bad feature column label '" + label + "'");
  FeatureColumn c;
  try {
    c.key.layer = std::stoi(parts[0]);
  } catch (const std::exception&) {
    fail(ErrorKind::parse, "bad layer in feature column label '" + label + "'");
  }
  c.key.module = parse_module(parts[1]);
  c.family = parse_family(parts[2]);
  c.name = parts[3];
  return c;
}

}  // namespace

FeatureMatrix parse_feature_matrix(std::string_view csv, std::string_view labels_json) {
  std::istringstream in{std::string(csv)};
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::parse, "feature CSV is empty");
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "adapter_id") fail(ErrorKind::parse, "feature CSV header must start with adapter_id");
  FeatureMatrix m;
  for (std::size_t j = 1; j < header.size(); ++j) m.columns.push_back(parse_column(header[j]));

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      fail(ErrorKind::parse, "feature CSV line " + std::to_string(line_no) + ": expected " +
                                 std::to_string(header.size()) + " cells");
    m.rows.push_back(cells[0]);
    std::vector<double> vals;
    for (std::size_t j = 1; j < cells.size(); ++j) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cells[j], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[j].size() || cells[j].empty())
        fail(ErrorKind::parse, "feature CSV line " + std::to_string(line_no) + ": malformed number '" + cells[j] + "'");
      vals.push_back(v);
    }
    rows.push_back(std::move(vals));
  }
  m.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(m.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < m.columns.size(); ++c)
      m.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];

  if (!labels_json.empty()) {
    json doc;
    try {
      doc = json::parse(labels_json);
    } catch (const json::exception& e) {
      fail(ErrorKind::parse, std::string("feature labels: ") + e.what());
    }
    if (!doc.is_array() || doc.size() != m.rows.size())
      fail(ErrorKind::schema, "feature labels do not match the CSV rows");
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto& j = doc[i];
      AdapterMetadata a;
      a.adapter_id = j.at("adapter_id").get<std::string>();
      if (a.adapter_id != m.rows[i]) fail(ErrorKind::schema, "feature labels are not in CSV row order");
      a.category = parse_category(j.at("category").get<std::string>());
      a.method = j.value("method", std::string());
      a.seed = j.value("seed", std::int64_t{0});
      a.group = j.value("group", std::string(to_string(a.category)));
      if (j.contains("intensity") && !j["intensity"].is_null()) a.intensity = j["intensity"].get<std::int64_t>();
      if (j.contains("alpha")) a.alpha = j["alpha"].get<double>();
      a.held_out = j.value("held_out", false);
      m.labels.push_back(std::move(a));
    }
  }
  return m;
}

}  // namespace lorascope
