// SPDX-License-Identifier: Apache-2.0
#include "lorascope/adapter.hpp"

#include <cstdio>
#include <regex>
#include <set>

#include <json.hpp>

#include "lorascope/error.hpp"

namespace lorascope {

using json = nlohmann::json;

namespace {

Matrix to_matrix(const TensorEntry& t, const std::string& name) {
  if (t.shape.size() != 2) fail(ErrorKind::shape, "tensor '" + name + "' is not 2-D");
  return Eigen::Map<const RowMajorMatrix>(t.values.data(), t.shape[0], t.shape[1]);
}

TensorEntry to_entry(const Matrix& m, DType dtype) {
  TensorEntry t;
  t.dtype = dtype;
  t.shape = {m.rows(), m.cols()};
  t.values.resize(static_cast<std::size_t>(m.size()));
  Eigen::Map<RowMajorMatrix>(t.values.data(), m.rows(), m.cols()) = m;
  return t;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string tensor_name(const SublayerKey& key, char factor) {
  return "layers." + std::to_string(key.layer) + "." + std::string(module_token(key.module)) +
         ".lora_" + factor;
}

AdapterWeights parse_adapter(std::span<const std::byte> container_bytes,
                             const AdapterMetadata& metadata, const NamePattern& pattern) {
  const TensorContainer container = parse_container(container_bytes);
  const std::regex re(pattern.regex);

  struct Half {
    std::optional<Matrix> a, b;
  };
  std::map<SublayerKey, Half> halves;
  for (const auto& [name, entry] : container.tensors) {
    std::smatch m;
    if (!std::regex_match(name, m, re))
      fail(ErrorKind::pairing, "tensor '" + name + "' does not match the LoRA naming pattern");
    SublayerKey key;
    key.layer = std::stoi(m[pattern.layer_group].str());
    const std::string mod = m[pattern.module_group].str();
    if (mod == pattern.query_token) key.module = ModuleKind::query_projection;
    else if (mod == pattern.value_token) key.module = ModuleKind::value_projection;
    else fail(ErrorKind::pairing, "tensor '" + name + "': unknown module '" + mod + "'");
    const std::string role = m[pattern.factor_group].str();
    auto& slot = halves[key];
    if (role == pattern.a_token) {
      if (slot.a) fail(ErrorKind::pairing, "duplicate A factor for sublayer " + to_string(key));
      slot.a = to_matrix(entry, name);
    } else if (role == pattern.b_token) {
      if (slot.b) fail(ErrorKind::pairing, "duplicate B factor for sublayer " + to_string(key));
      slot.b = to_matrix(entry, name);
    } else {
      fail(ErrorKind::pairing, "tensor '" + name + "': unknown factor role '" + role + "'");
    }
  }
  if (halves.empty()) fail(ErrorKind::pairing, "container holds no LoRA factors");

  AdapterWeights out;
  out.adapter_id = metadata.adapter_id;
  out.metadata = metadata;
  if (out.metadata.group.empty()) out.metadata.group = std::string(to_string(metadata.category));
  for (auto& [key, half] : halves) {
    if (!half.a) fail(ErrorKind::pairing, "sublayer " + to_string(key) + " is missing its A factor");
    if (!half.b) fail(ErrorKind::pairing, "sublayer " + to_string(key) + " is missing its B factor");
    const auto r = half.a->rows();
    if (half.b->cols() != r)
      fail(ErrorKind::shape, "sublayer " + to_string(key) + ": inner dimensions differ (A has " +
                                 std::to_string(r) + " rows, B has " + std::to_string(half.b->cols()) +
                                 " columns)");
    if (out.rank == 0) out.rank = static_cast<int>(r);
    else if (out.rank != r)
      fail(ErrorKind::shape, "sublayer " + to_string(key) + ": rank " + std::to_string(r) +
                                 " differs from rank " + std::to_string(out.rank) + " of other sublayers");
    out.factors.emplace(key, LoraFactors{std::move(*half.a), std::move(*half.b)});
  }
  if (out.rank <= 0) fail(ErrorKind::shape, "adapter rank must be positive");

  if (metadata.alpha) {
    out.alpha = *metadata.alpha;
  } else if (auto it = container.metadata.find("lora_alpha"); it != container.metadata.end()) {
    try {
      out.alpha = std::stod(it->second);
    } catch (const std::exception&) {
      fail(ErrorKind::format, "container metadata lora_alpha is not a number");
    }
  } else {
    out.alpha = out.rank;
  }
  if (!(out.alpha > 0)) fail(ErrorKind::parameter, "alpha must be positive");
  out.metadata.alpha = out.alpha;
  return out;
}

std::vector<std::byte> write_adapter(const AdapterWeights& weights, DType storage) {
  TensorContainer c;
  c.metadata["format"] = "lorascope-adapter/1";
  c.metadata["adapter_id"] = weights.adapter_id;
  c.metadata["lora_rank"] = std::to_string(weights.rank);
  c.metadata["lora_alpha"] = format_double(weights.alpha);
  for (const auto& [key, f] : weights.factors) {
    c.tensors.emplace(tensor_name(key, 'A'), to_entry(f.a, storage));
    c.tensors.emplace(tensor_name(key, 'B'), to_entry(f.b, storage));
  }
  return write_container(c);
}

AdapterDelta reconstruct_delta(const AdapterWeights& weights, ScalePolicy policy) {
  AdapterDelta out;
  out.adapter_id = weights.adapter_id;
  out.rank = weights.rank;
  out.policy = policy;
  const double s = policy == ScalePolicy::unit ? 1.0 : weights.alpha / weights.rank;
  for (const auto& [key, f] : weights.factors) {
    if (f.b.cols() != f.a.rows())
      fail(ErrorKind::shape, "sublayer " + to_string(key) + ": B is " + std::to_string(f.b.rows()) + "x" +
                                 std::to_string(f.b.cols()) + " but A is " + std::to_string(f.a.rows()) +
                                 "x" + std::to_string(f.a.cols()));
    Matrix d = f.b * f.a;
    if (policy == ScalePolicy::alpha_over_rank) d *= s;
    if (!d.allFinite()) fail(ErrorKind::numeric, "sublayer " + to_string(key) + ": non-finite delta entries");
    out.deltas.emplace(key, std::move(d));
  }
  return out;
}

DeltaSchema schema_of(const AdapterDelta& delta) {
  DeltaSchema s;
  s.reserve(delta.deltas.size());
  for (const auto& [key, m] : delta.deltas) s.push_back({key, m.rows(), m.cols()});
  return s;
}

std::string ordering_tag(const DeltaSchema& schema) {
  // FNV-1a over the textual schema description.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& e : schema)
    feed(to_string(e.key) + ":" + std::to_string(e.rows) + "x" + std::to_string(e.cols) + ";");
  char buf[40];
  std::snprintf(buf, sizeof buf, "rowmajor-%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::size_t flat_length(const DeltaSchema& schema) {
  std::size_t n = 0;
  for (const auto& e : schema) n += static_cast<std::size_t>(e.rows * e.cols);
  return n;
}

DeltaVector flatten_delta(const AdapterDelta& delta, const DeltaSchema* expected) {
  const DeltaSchema schema = schema_of(delta);
  if (expected && schema != *expected)
    fail(ErrorKind::schema, "adapter '" + delta.adapter_id + "' does not match the population delta schema");
  DeltaVector out;
  out.adapter_id = delta.adapter_id;
  out.ordering_tag = ordering_tag(schema);
  out.values.resize(static_cast<Eigen::Index>(flat_length(schema)));
  Eigen::Index at = 0;
  for (const auto& [key, m] : delta.deltas) {
    Eigen::Map<RowMajorMatrix>(out.values.data() + at, m.rows(), m.cols()) = m;
    at += m.size();
  }
  return out;
}

AdapterMetadata ManifestEntry::metadata() const {
  AdapterMetadata m;
  m.adapter_id = adapter_id;
  m.category = category;
  m.method = method;
  m.intensity = intensity;
  m.seed = seed;
  m.alpha = alpha;
  m.group = group.empty() ? std::string(to_string(category)) : group;
  m.held_out = held_out;
  return m;
}

const ManifestEntry& Manifest::find(const std::string& adapter_id) const {
  for (const auto& e : entries)
    if (e.adapter_id == adapter_id) return e;
  fail(ErrorKind::schema, "adapter '" + adapter_id + "' is not in the manifest");
}

Manifest parse_manifest(std::string_view json_text, std::filesystem::path base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("manifest is not valid JSON: ") + e.what());
  }
  if (!doc.is_array()) fail(ErrorKind::parse, "manifest must be a JSON array");
  Manifest out;
  out.base_dir = std::move(base_dir);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& row = doc[i];
    const std::string where = "manifest entry " + std::to_string(i);
    try {
      ManifestEntry e;
      e.adapter_id = row.at("adapter_id").get<std::string>();
      e.path = row.at("path").get<std::string>();
      e.category = parse_category(row.at("category").get<std::string>());
      e.method = row.value("method", std::string());
      if (row.contains("intensity") && !row["intensity"].is_null())
        e.intensity = row["intensity"].get<std::int64_t>();
      e.seed = row.value("seed", std::int64_t{0});
      if (row.contains("alpha") && !row["alpha"].is_null()) e.alpha = row["alpha"].get<double>();
      e.group = row.value("group", std::string(to_string(e.category)));
      e.held_out = row.value("held_out", false);
      if (!seen.insert(e.adapter_id).second)
        fail(ErrorKind::uniqueness, where + ": duplicate adapter_id '" + e.adapter_id + "'");
      out.entries.push_back(std::move(e));
    } catch (const json::exception& ex) {
      fail(ErrorKind::parse, where + ": " + ex.what());
    }
  }
  return out;
}

Manifest load_manifest(const std::filesystem::path& path) {
  return parse_manifest(read_text_file(path), path.parent_path());
}

std::string manifest_to_json(const Manifest& manifest) {
  json doc = json::array();
  for (const auto& e : manifest.entries) {
    json row = {{"adapter_id", e.adapter_id},
                {"path", e.path.generic_string()},
                {"category", std::string(to_string(e.category))},
                {"method", e.method},
                {"seed", e.seed},
                {"group", e.group.empty() ? std::string(to_string(e.category)) : e.group}};
    row["intensity"] = e.intensity ? json(*e.intensity) : json(nullptr);
    if (e.alpha) row["alpha"] = *e.alpha;
    if (e.held_out) row["held_out"] = true;
    doc.push_back(std::move(row));
  }
  return doc.dump(2) + "\n";
}

AdapterWeights load_adapter(const Manifest& manifest, const ManifestEntry& entry,
                            const NamePattern& pattern) {
  const auto path = entry.path.is_absolute() ? entry.path : manifest.base_dir / entry.path;
  const auto bytes = read_file(path);
  try {
    return parse_adapter(bytes, entry.metadata(), pattern);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace lorascope
