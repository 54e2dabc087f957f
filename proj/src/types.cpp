// SPDX-License-Identifier: Apache-2.0
#include "lorascope/types.hpp"

#include <thread>

#include "lorascope/error.hpp"
#include "lorascope/parallel.hpp"

namespace lorascope {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::format: return "format";
    case ErrorKind::pairing: return "pairing";
    case ErrorKind::shape: return "shape";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::schema: return "schema";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::population: return "population";
    case ErrorKind::class_balance: return "class";
    case ErrorKind::degeneracy: return "degeneracy";
    case ErrorKind::stratification: return "stratification";
    case ErrorKind::optimization: return "optimization";
    case ErrorKind::coverage: return "coverage";
    case ErrorKind::parse: return "parse";
    case ErrorKind::range: return "range";
    case ErrorKind::uniqueness: return "uniqueness";
    case ErrorKind::io: return "io";
    case ErrorKind::dependency: return "dependency";
    case ErrorKind::usage: return "usage";
  }
  return "unknown";
}

int exit_code(ErrorKind kind) {
  return 2 + static_cast<int>(kind);
}

unsigned default_threads() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

std::string_view module_token(ModuleKind m) {
  return m == ModuleKind::query_projection ? "q_proj" : "v_proj";
}

std::string_view module_name(ModuleKind m) {
  return m == ModuleKind::query_projection ? "query" : "value";
}

ModuleKind parse_module(std::string_view s) {
  if (s == "q_proj" || s == "query" || s == "query_projection" || s == "q")
    return ModuleKind::query_projection;
  if (s == "v_proj" || s == "value" || s == "value_projection" || s == "v")
    return ModuleKind::value_projection;
  fail(ErrorKind::parameter, "unknown module kind '" + std::string(s) + "'");
}

std::string to_string(const SublayerKey& key) {
  return std::to_string(key.layer) + "." + std::string(module_token(key.module));
}

std::string_view to_string(Category c) {
  switch (c) {
    case Category::healthy: return "healthy";
    case Category::inverted_harmlessness: return "inverted_harmlessness";
    case Category::inverted_helpfulness: return "inverted_helpfulness";
    case Category::steering: return "steering";
    case Category::legacy: return "legacy";
  }
  return "unknown";
}

Category parse_category(std::string_view s) {
  if (s == "healthy") return Category::healthy;
  if (s == "inverted_harmlessness") return Category::inverted_harmlessness;
  if (s == "inverted_helpfulness") return Category::inverted_helpfulness;
  if (s == "steering") return Category::steering;
  if (s == "legacy") return Category::legacy;
  fail(ErrorKind::parameter, "unknown category '" + std::string(s) + "'");
}

std::string_view to_string(ScalePolicy p) {
  return p == ScalePolicy::unit ? "unit" : "alpha-over-rank";
}

ScalePolicy parse_scale_policy(std::string_view s) {
  if (s == "unit") return ScalePolicy::unit;
  if (s == "alpha-over-rank" || s == "alpha_over_rank") return ScalePolicy::alpha_over_rank;
  fail(ErrorKind::parameter, "unknown scale policy '" + std::string(s) + "'");
}

std::string_view to_string(FeatureFamily f) {
  switch (f) {
    case FeatureFamily::magnitude: return "magnitude";
    case FeatureFamily::shape: return "shape";
    case FeatureFamily::direction: return "direction";
  }
  return "unknown";
}

FeatureFamily parse_family(std::string_view s) {
  if (s == "magnitude") return FeatureFamily::magnitude;
  if (s == "shape") return FeatureFamily::shape;
  if (s == "direction") return FeatureFamily::direction;
  fail(ErrorKind::parameter, "unknown feature family '" + std::string(s) + "'");
}

}  // namespace lorascope
