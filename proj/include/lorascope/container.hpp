// SPDX-License-Identifier: Apache-2.0
#pragma once

// Safetensors-compatible tensor container:
//   [u64 little-endian header length N][N bytes JSON header][data region]
// The header maps tensor name -> {dtype, shape, data_offsets: [begin, end)},
// with offsets relative to the start of the data region. An optional
// "__metadata__" entry holds a string -> string map.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace lorascope {

enum class DType : std::uint8_t { f16, f32, f64 };

std::size_t dtype_size(DType t);
std::string_view to_string(DType t);

struct TensorEntry {
  DType dtype = DType::f64;
  std::vector<std::int64_t> shape;
  /// Row-major values, widened to double.
  std::vector<double> values;

  std::int64_t numel() const;
};

struct TensorContainer {
  std::map<std::string, TensorEntry> tensors;
  std::map<std::string, std::string> metadata;
};

/// Throws Error{format} on any header or layout violation.
TensorContainer parse_container(std::span<const std::byte> bytes);

/// Tensors are laid out in name order; each is narrowed to its own dtype.
/// The header is space-padded to an 8-byte boundary.
std::vector<std::byte> write_container(const TensorContainer& container);

std::vector<std::byte> read_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);

/// Writes via a sibling temporary file and rename, so readers never observe
/// a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_atomic(const std::filesystem::path& path, std::string_view text);

}  // namespace lorascope
