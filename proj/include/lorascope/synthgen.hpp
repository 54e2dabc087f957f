// SPDX-License-Identifier: Apache-2.0
#pragma once

// Synthetic adapter populations with planted geometry. Nothing here models
// real training dynamics; the generators only guarantee the geometric
// properties the analysis pipeline is tested against.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "lorascope/adapter.hpp"
#include "lorascope/types.hpp"

namespace lorascope {

enum class Generator : std::uint8_t { healthy_sft_like, gradient_drift, rank1_injection };

std::string_view to_string(Generator g);
Generator parse_generator(std::string_view s);

struct Dims {
  int d_out = 128;  ///< rows of each delta (left singular vector dimension)
  int d_in = 128;
  int rank = 8;
  int layers = 8;
};

struct CategorySpec {
  std::string group;
  Category category = Category::healthy;
  Generator generator = Generator::healthy_sft_like;
  std::string method;
  int count = 1;
  /// Steps for drift arms, coefficients for injection arms. Members beyond
  /// the grid length cycle through it again as seed replicates.
  std::vector<double> intensity_grid;
  /// Objective identity for drift arms, direction identity for injection arms.
  std::uint64_t objective_seed = 0;
  /// Member i uses noise seed seed_base + i. Arms sharing a seed_base share
  /// noise member for member, which a classifier can learn backwards.
  std::int64_t seed_base = 0;
  double noise_scale = 0.0025;
  bool held_out = false;
};

/// Knobs shared by every generator.
struct GeometrySpec {
  double base_scale = 1.0;
  /// Singular values of the planted objective / generic components before
  /// normalisation to unit Frobenius norm.
  /// Seven directions (0.6 * 0.8^i), so every top-k slot up to k = 8 is
  /// planted rather than noise once a drift is strong enough.
  std::vector<double> component_profile = {0.6, 0.48, 0.384, 0.3072, 0.24576, 0.196608, 0.1572864};
  double objective_max = 2.0;  ///< f(s) = objective_max * s / (s + tau)
  double generic_max = 1.0;    ///< g(s) = generic_max * (1 - exp(-s / generic_tau))
  double tau = 300.0;
  /// Short, so the shared generic drift is near its plateau at every grid
  /// step and query sublayers carry little step information either.
  double generic_tau = 20.0;
  /// Fraction of the objective component also planted in query sublayers.
  double objective_query_share = 0.0;
  /// Cosine between each planted component's leading left vector and the
  /// base left direction. Drift then both grows sigma_1 and rotates u_1.
  double base_overlap = 0.5;
  /// Tilt of injected directions toward (+) the drift left vector and away
  /// from (-) the drift right vector; see gen_rank1_injection.
  double injection_left_tilt = 0.01;
  double injection_right_tilt = 0.5;
  /// Right-side only; the left vector stays on the base direction.
  double injection_jitter = 0.05;
  std::uint64_t generic_seed = 7;
};

struct PopulationSpec {
  Dims dims;
  GeometrySpec geometry;
  std::vector<CategorySpec> categories;
  std::uint64_t master_seed = 42;
};

/// 10 healthy, 8 + 6 gradient-drift (two objectives), 6 + 4 rank-1
/// injection (the second arm held out).
PopulationSpec default_population_spec(std::uint64_t master_seed = 42);

std::string spec_to_json(const PopulationSpec& spec);
PopulationSpec spec_from_json(std::string_view text);

/// Shared per-sublayer building blocks, derived from the master seed only.
struct PlantedGeometry {
  std::map<SublayerKey, Matrix> base;     ///< rank 1, Frobenius norm base_scale
  std::map<SublayerKey, Matrix> generic;  ///< unit Frobenius, query sublayers
  /// Unit-Frobenius objective component for `objective_seed`.
  std::map<SublayerKey, Matrix> objective(std::uint64_t objective_seed) const;
  const PopulationSpec* spec = nullptr;
};

PlantedGeometry planted_geometry(const PopulationSpec& spec);

double objective_strength(const GeometrySpec& g, double steps);
double generic_strength(const GeometrySpec& g, double steps);

/// Best rank-r factorisation of `target`: B = U sqrt(S), A = sqrt(S) V^T.
LoraFactors truncated_factors(const Matrix& target, int rank);

AdapterWeights gen_healthy(const PopulationSpec& spec, const PlantedGeometry& geo, std::int64_t seed,
                           double noise_scale);
AdapterWeights gen_gradient_drift(const PopulationSpec& spec, const PlantedGeometry& geo,
                                  std::uint64_t objective_seed, double steps, std::int64_t seed,
                                  double noise_scale);
/// Per sublayer: coefficient * u v^T with u tilted toward the planted
/// drift's top left vector and v tilted away from its top right vector, so
/// <delta, drift> < 0 while u stays close to the healthy base direction.
AdapterWeights gen_rank1_injection(const PopulationSpec& spec, const PlantedGeometry& geo,
                                   std::uint64_t direction_seed, double coefficient);

/// Drift component of one sublayer summed over every drift arm in `spec`
/// at unit strength; used for the sign checks of injected adapters.
std::map<SublayerKey, Matrix> drift_component(const PopulationSpec& spec, const PlantedGeometry& geo);

struct GeneratedAdapter {
  ManifestEntry entry;
  AdapterWeights weights;
};

/// Deterministic in-memory population, ordered like the spec.
std::vector<GeneratedAdapter> generate_adapters(const PopulationSpec& spec, unsigned threads = 1);

/// Writes `adapters/<id>.safetensors`, `manifest.json` and `population_spec.json`
/// under `out_dir`. Returns the manifest.
Manifest gen_population(const PopulationSpec& spec, const std::filesystem::path& out_dir,
                        unsigned threads = 1);

/// Synthetic behavioural table (`adapter_id,asr,n_prompts,judge_tag`).
/// Healthy rows sit near 0.112; the first drift arm rises with a plateau;
/// the second drift arm is flat and noisy; injection rows are high.
std::string synthetic_asr_csv(const Manifest& manifest, std::uint64_t seed);

/// Probe-normal file with one random unit vector per layer.
std::string synthetic_probes_json(const Dims& dims, std::uint64_t seed);

}  // namespace lorascope
