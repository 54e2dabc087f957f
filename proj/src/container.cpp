// SPDX-License-Identifier: Apache-2.0
#include "lorascope/container.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <Eigen/Core>
#include <json.hpp>

#include "lorascope/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace lorascope {

using json = nlohmann::json;

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f16: return 2;
    case DType::f32: return 4;
    case DType::f64: return 8;
  }
  return 0;
}

std::string_view to_string(DType t) {
  switch (t) {
    case DType::f16: return "F16";
    case DType::f32: return "F32";
    case DType::f64: return "F64";
  }
  return "?";
}

namespace {

DType parse_dtype(const std::string& s, const std::string& tensor) {
  if (s == "F16") return DType::f16;
  if (s == "F32") return DType::f32;
  if (s == "F64") return DType::f64;
  fail(ErrorKind::format, "tensor '" + tensor + "': unsupported dtype '" + s + "'");
}

void decode(DType t, const std::byte* src, std::size_t n, std::vector<double>& out) {
  out.resize(n);
  switch (t) {
    case DType::f16:
      for (std::size_t i = 0; i < n; ++i) {
        std::uint16_t bits;
        std::memcpy(&bits, src + 2 * i, 2);
        out[i] = static_cast<double>(static_cast<float>(std::bit_cast<Eigen::half>(bits)));
      }
      break;
    case DType::f32:
      for (std::size_t i = 0; i < n; ++i) {
        float v;
        std::memcpy(&v, src + 4 * i, 4);
        out[i] = v;
      }
      break;
    case DType::f64:
      std::memcpy(out.data(), src, 8 * n);
      break;
  }
}

void encode(DType t, const std::vector<double>& values, std::vector<std::byte>& out) {
  const std::size_t base = out.size();
  out.resize(base + values.size() * dtype_size(t));
  std::byte* dst = out.data() + base;
  switch (t) {
    case DType::f16:
      for (std::size_t i = 0; i < values.size(); ++i) {
        const auto bits = std::bit_cast<std::uint16_t>(Eigen::half(static_cast<float>(values[i])));
        std::memcpy(dst + 2 * i, &bits, 2);
      }
      break;
    case DType::f32:
      for (std::size_t i = 0; i < values.size(); ++i) {
        const float v = static_cast<float>(values[i]);
        std::memcpy(dst + 4 * i, &v, 4);
      }
      break;
    case DType::f64:
      std::memcpy(dst, values.data(), 8 * values.size());
      break;
  }
}

}  // namespace

std::int64_t TensorEntry::numel() const {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

TensorContainer parse_container(std::span<const std::byte> bytes) {
  if (bytes.size() < 8) fail(ErrorKind::format, "container shorter than its 8-byte header length");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data(), 8);
  if (header_len > bytes.size() - 8)
    fail(ErrorKind::format, "header length " + std::to_string(header_len) + " exceeds container size");

  const auto* hdr = reinterpret_cast<const char*>(bytes.data() + 8);
  json header;
  try {
    header = json::parse(hdr, hdr + header_len);
  } catch (const json::exception& e) {
    fail(ErrorKind::format, std::string("malformed header JSON: ") + e.what());
  }
  if (!header.is_object()) fail(ErrorKind::format, "header is not a JSON object");

  const std::byte* data = bytes.data() + 8 + header_len;
  const std::uint64_t data_size = bytes.size() - 8 - header_len;

  TensorContainer out;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> ranges;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      if (!entry.is_object()) fail(ErrorKind::format, "__metadata__ is not an object");
      for (const auto& [k, v] : entry.items()) {
        if (!v.is_string()) fail(ErrorKind::format, "__metadata__ value for '" + k + "' is not a string");
        out.metadata[k] = v.get<std::string>();
      }
      continue;
    }
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
        !entry.contains("data_offsets"))
      fail(ErrorKind::format, "tensor '" + name + "': entry needs dtype, shape and data_offsets");
    const auto& dt = entry["dtype"];
    const auto& sh = entry["shape"];
    const auto& off = entry["data_offsets"];
    if (!dt.is_string() || !sh.is_array() || !off.is_array() || off.size() != 2)
      fail(ErrorKind::format, "tensor '" + name + "': malformed entry");

    TensorEntry t;
    t.dtype = parse_dtype(dt.get<std::string>(), name);
    for (const auto& d : sh) {
      if (!d.is_number_unsigned()) fail(ErrorKind::format, "tensor '" + name + "': bad shape entry");
      t.shape.push_back(d.get<std::int64_t>());
    }
    if (!off[0].is_number_unsigned() || !off[1].is_number_unsigned())
      fail(ErrorKind::format, "tensor '" + name + "': bad data_offsets");
    const auto begin = off[0].get<std::uint64_t>();
    const auto end = off[1].get<std::uint64_t>();
    if (begin > end || end > data_size)
      fail(ErrorKind::format, "tensor '" + name + "': data_offsets outside data region");
    const auto n = static_cast<std::uint64_t>(t.numel());
    if (end - begin != n * dtype_size(t.dtype))
      fail(ErrorKind::format, "tensor '" + name + "': byte range does not match shape and dtype");
    decode(t.dtype, data + begin, n, t.values);
    ranges.emplace_back(begin, end);
    out.tensors.emplace(name, std::move(t));
  }

  std::sort(ranges.begin(), ranges.end());
  for (std::size_t i = 1; i < ranges.size(); ++i)
    if (ranges[i].first < ranges[i - 1].second) fail(ErrorKind::format, "tensor byte ranges overlap");
  return out;
}

std::vector<std::byte> write_container(const TensorContainer& container) {
  json header = json::object();
  if (!container.metadata.empty()) {
    json meta = json::object();
    for (const auto& [k, v] : container.metadata) meta[k] = v;
    header["__metadata__"] = meta;
  }
  std::vector<std::byte> data;
  for (const auto& [name, t] : container.tensors) {
    if (static_cast<std::int64_t>(t.values.size()) != t.numel())
      fail(ErrorKind::shape, "tensor '" + name + "': value count does not match shape");
    const std::uint64_t begin = data.size();
    encode(t.dtype, t.values, data);
    header[name] = {{"dtype", std::string(to_string(t.dtype))},
                    {"shape", t.shape},
                    {"data_offsets", {begin, static_cast<std::uint64_t>(data.size())}}};
  }
  std::string text = header.dump();
  text.append((8 - text.size() % 8) % 8, ' ');

  std::vector<std::byte> out(8 + text.size() + data.size());
  const std::uint64_t n = text.size();
  std::memcpy(out.data(), &n, 8);
  std::memcpy(out.data() + 8, text.data(), text.size());
  if (!data.empty()) std::memcpy(out.data() + 8 + text.size(), data.data(), data.size());
  return out;
}

std::vector<std::byte> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<std::byte> out(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(size)))
    fail(ErrorKind::io, "cannot read '" + path.string() + "'");
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot write '" + tmp.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "short write to '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) fail(ErrorKind::io, "cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
}

void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::as_bytes(std::span(text.data(), text.size())));
}

}  // namespace lorascope
