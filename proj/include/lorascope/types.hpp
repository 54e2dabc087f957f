// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace lorascope {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ModuleKind : std::uint8_t { query_projection = 0, value_projection = 1 };

/// One (layer, module) slot holding an independent delta. Ordered by layer,
/// then query before value.
struct SublayerKey {
  int layer = 0;
  ModuleKind module = ModuleKind::query_projection;

  auto operator<=>(const SublayerKey&) const = default;
};

enum class Category : std::uint8_t {
  healthy,
  inverted_harmlessness,
  inverted_helpfulness,
  steering,
  legacy,
};

enum class ScalePolicy : std::uint8_t { unit, alpha_over_rank };

enum class FeatureFamily : std::uint8_t { magnitude = 0, shape = 1, direction = 2 };

/// "q_proj" / "v_proj".
std::string_view module_token(ModuleKind m);
/// "query" / "value".
std::string_view module_name(ModuleKind m);
ModuleKind parse_module(std::string_view s);

/// Short label "3.q_proj".
std::string to_string(const SublayerKey& key);

std::string_view to_string(Category c);
Category parse_category(std::string_view s);

std::string_view to_string(ScalePolicy p);
ScalePolicy parse_scale_policy(std::string_view s);

std::string_view to_string(FeatureFamily f);
FeatureFamily parse_family(std::string_view s);

}  // namespace lorascope
