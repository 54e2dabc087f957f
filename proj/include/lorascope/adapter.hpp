// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lorascope/container.hpp"
#include "lorascope/types.hpp"

namespace lorascope {

/// A LoRA factor pair for one sublayer: delta = B * A.
struct LoraFactors {
  Matrix a;  ///< r x k
  Matrix b;  ///< d x r
};

struct AdapterMetadata {
  std::string adapter_id;
  Category category = Category::healthy;
  std::string method;
  /// Step count, or coefficient index for injection adapters.
  std::optional<std::int64_t> intensity;
  std::int64_t seed = 0;
  /// Taken from the container when absent.
  std::optional<double> alpha;
  /// Finer population label (e.g. a held-out steering arm); defaults to the category name.
  std::string group;
  /// Kept out of the pairwise grid; still scored in transfer tests.
  bool held_out = false;
};

struct AdapterWeights {
  std::string adapter_id;
  int rank = 0;
  double alpha = 0.0;
  std::map<SublayerKey, LoraFactors> factors;
  AdapterMetadata metadata;
};

struct AdapterDelta {
  std::string adapter_id;
  int rank = 0;
  ScalePolicy policy = ScalePolicy::unit;
  std::map<SublayerKey, Matrix> deltas;
};

struct SublayerShape {
  SublayerKey key;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  bool operator==(const SublayerShape&) const = default;
};

/// Sublayer keys and matrix shapes of a population, in canonical order.
using DeltaSchema = std::vector<SublayerShape>;

struct DeltaVector {
  std::string adapter_id;
  Vector values;
  std::string ordering_tag;
};

/// How tensor names map onto (layer, module, factor). The default accepts
/// `layers.{i}.{q_proj|v_proj}.lora_{A|B}` with optional path prefixes and
/// segments (as in PEFT exports) and an optional `.weight` suffix.
struct NamePattern {
  std::string regex =
      R"(^(?:.*\.)?layers\.(\d+)\.(?:.*\.)?(q_proj|v_proj)\.lora_([AB])(?:\.weight)?$)";
  int layer_group = 1;
  int module_group = 2;
  int factor_group = 3;
  std::string query_token = "q_proj";
  std::string value_token = "v_proj";
  std::string a_token = "A";
  std::string b_token = "B";
};

/// Canonical tensor name written by write_adapter.
std::string tensor_name(const SublayerKey& key, char factor);

AdapterWeights parse_adapter(std::span<const std::byte> container_bytes,
                             const AdapterMetadata& metadata,
                             const NamePattern& pattern = {});

/// Serializes factors under canonical names. With F64 storage,
/// parse_adapter(write_adapter(w)) reproduces every factor bit for bit.
std::vector<std::byte> write_adapter(const AdapterWeights& weights, DType storage = DType::f64);

/// delta = s * (B * A), s = 1 (unit) or alpha / rank.
AdapterDelta reconstruct_delta(const AdapterWeights& weights, ScalePolicy policy = ScalePolicy::unit);

DeltaSchema schema_of(const AdapterDelta& delta);
std::string ordering_tag(const DeltaSchema& schema);
std::size_t flat_length(const DeltaSchema& schema);

/// Concatenates sublayers in canonical key order, each matrix row-major.
/// When `expected` is given the delta must match it exactly.
DeltaVector flatten_delta(const AdapterDelta& delta, const DeltaSchema* expected = nullptr);

struct ManifestEntry {
  std::string adapter_id;
  std::filesystem::path path;
  Category category = Category::healthy;
  std::string method;
  std::optional<std::int64_t> intensity;
  std::int64_t seed = 0;
  std::optional<double> alpha;
  std::string group;
  bool held_out = false;

  AdapterMetadata metadata() const;
};

struct Manifest {
  std::vector<ManifestEntry> entries;
  /// Directory relative paths are resolved against.
  std::filesystem::path base_dir;

  const ManifestEntry& find(const std::string& adapter_id) const;
};

Manifest parse_manifest(std::string_view json_text, std::filesystem::path base_dir = {});
Manifest load_manifest(const std::filesystem::path& path);
std::string manifest_to_json(const Manifest& manifest);

AdapterWeights load_adapter(const Manifest& manifest, const ManifestEntry& entry,
                            const NamePattern& pattern = {});

}  // namespace lorascope
