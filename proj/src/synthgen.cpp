// SPDX-License-Identifier: Apache-2.0
#include "lorascope/synthgen.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include <json.hpp>

#include "lorascope/error.hpp"
#include "lorascope/parallel.hpp"
#include "lorascope/rng.hpp"
#include "lorascope/spectral.hpp"

namespace lorascope {

using json = nlohmann::json;

namespace {

// Stream ids keep the independent random sources apart.
constexpr std::uint64_t kBaseStream = 0x1000;
constexpr std::uint64_t kObjectiveStream = 0x2000;
constexpr std::uint64_t kNoiseStream = 0x3000;
constexpr std::uint64_t kInjectionStream = 0x4000;
constexpr std::uint64_t kAsrStream = 0x5000;
constexpr std::uint64_t kProbeStream = 0x6000;

std::vector<SublayerKey> sublayers(const Dims& dims) {
  std::vector<SublayerKey> out;
  for (int l = 0; l < dims.layers; ++l)
    for (auto m : {ModuleKind::query_projection, ModuleKind::value_projection}) out.push_back({l, m});
  return out;
}

std::uint64_t key_index(const SublayerKey& key) {
  return static_cast<std::uint64_t>(key.layer) * 2 + static_cast<std::uint64_t>(key.module);
}

Matrix gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Matrix m(rows, cols);
  // Column-major fill order is part of the reproducibility contract.
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  return m;
}

/// `count` orthonormal columns orthogonal to the columns of `against`.
Matrix orthonormal_complement(const Matrix& against, int count, Rng& rng) {
  const Eigen::Index d = against.rows();
  Matrix m(d, against.cols() + count);
  m << against, gaussian(d, count, rng);
  Eigen::HouseholderQR<Matrix> qr(m);
  const Matrix q = qr.householderQ() * Matrix::Identity(d, m.cols());
  return q.rightCols(count);
}

Vector unit(const Vector& v) { return v / v.norm(); }

Matrix planted_component(const Vector& u_base, const Vector& v_base, const std::vector<double>& profile,
                         double overlap, Rng& rng) {
  const int c = static_cast<int>(profile.size());
  Matrix left = orthonormal_complement(u_base, c, rng);
  // Still orthonormal: u_base is orthogonal to every column of `left`.
  left.col(0) = overlap * u_base + std::sqrt(1.0 - overlap * overlap) * left.col(0);
  const Matrix right = orthonormal_complement(v_base, c, rng);
  Vector s = Eigen::Map<const Vector>(profile.data(), c);
  s /= s.norm();
  return left * s.asDiagonal() * right.transpose();
}

void validate(const PopulationSpec& spec) {
  const auto& d = spec.dims;
  if (d.d_out < 2 || d.d_in < 2 || d.layers < 1 || d.rank < 1)
    fail(ErrorKind::parameter, "population dims must be positive (d_out, d_in >= 2)");
  if (d.rank > std::min(d.d_out, d.d_in))
    fail(ErrorKind::parameter, "rank " + std::to_string(d.rank) + " exceeds min(d_out, d_in)");
  if (spec.geometry.component_profile.empty() ||
      static_cast<int>(spec.geometry.component_profile.size()) + 1 > std::min(d.d_out, d.d_in))
    fail(ErrorKind::parameter, "component profile does not fit the delta dimensions");
  if (!(spec.geometry.base_overlap >= 0 && spec.geometry.base_overlap < 1))
    fail(ErrorKind::parameter, "base_overlap must be in [0, 1)");
  if (!(spec.geometry.tau > 0) || !(spec.geometry.generic_tau > 0))
    fail(ErrorKind::parameter, "tau and generic_tau must be positive");
  if (spec.categories.empty()) fail(ErrorKind::parameter, "population spec has no categories");
  for (const auto& c : spec.categories) {
    if (c.count < 1) fail(ErrorKind::parameter, "category '" + c.group + "' has count < 1");
    if (c.noise_scale < 0) fail(ErrorKind::parameter, "noise_scale must be >= 0");
    if (c.generator != Generator::healthy_sft_like && c.intensity_grid.empty())
      fail(ErrorKind::parameter, "category '" + c.group + "' needs an intensity grid");
  }
}

AdapterWeights wrap(const PopulationSpec& spec, std::map<SublayerKey, LoraFactors> factors) {
  AdapterWeights w;
  w.rank = spec.dims.rank;
  w.alpha = 2.0 * spec.dims.rank;
  w.factors = std::move(factors);
  return w;
}

}  // namespace

std::string_view to_string(Generator g) {
  switch (g) {
    case Generator::healthy_sft_like: return "healthy_sft_like";
    case Generator::gradient_drift: return "gradient_drift";
    case Generator::rank1_injection: return "rank1_injection";
  }
  return "?";
}

Generator parse_generator(std::string_view s) {
  if (s == "healthy_sft_like") return Generator::healthy_sft_like;
  if (s == "gradient_drift") return Generator::gradient_drift;
  if (s == "rank1_injection") return Generator::rank1_injection;
  fail(ErrorKind::parameter, "unknown generator '" + std::string(s) + "'");
}

PopulationSpec default_population_spec(std::uint64_t master_seed) {
  PopulationSpec s;
  s.master_seed = master_seed;
  const std::vector<double> steps = {50, 150, 300, 600, 1000, 2000};
  s.categories = {
      {"healthy", Category::healthy, Generator::healthy_sft_like, "sft", 10, {}, 0, 1000, 0.0025, false},
      {"inverted_harmlessness", Category::inverted_harmlessness, Generator::gradient_drift, "dpo", 8, steps, 101,
       42, 0.0025, false},
      {"inverted_helpfulness", Category::inverted_helpfulness, Generator::gradient_drift, "dpo", 6, steps, 202, 142,
       0.0025, false},
      {"refusal_steering", Category::steering, Generator::rank1_injection, "steering", 6,
       {0.15, 0.3, 0.45, 0.6, 0.75, 0.9}, 303, 0, 0.0, false},
      {"sycophancy_steering", Category::steering, Generator::rank1_injection, "steering", 4,
       {0.2, 0.4, 0.6, 0.8}, 404, 0, 0.0, true},
  };
  return s;
}

std::string spec_to_json(const PopulationSpec& spec) {
  const auto& g = spec.geometry;
  json cats = json::array();
  for (const auto& c : spec.categories)
    cats.push_back({{"group", c.group},
                    {"category", std::string(to_string(c.category))},
                    {"generator", std::string(to_string(c.generator))},
                    {"method", c.method},
                    {"count", c.count},
                    {"intensity_grid", c.intensity_grid},
                    {"objective_seed", c.objective_seed},
                    {"seed_base", c.seed_base},
                    {"noise_scale", c.noise_scale},
                    {"held_out", c.held_out}});
  json doc = {{"master_seed", spec.master_seed},
              {"dims",
               {{"d_out", spec.dims.d_out}, {"d_in", spec.dims.d_in}, {"rank", spec.dims.rank}, {"layers", spec.dims.layers}}},
              {"geometry",
               {{"base_scale", g.base_scale},
                {"component_profile", g.component_profile},
                {"objective_max", g.objective_max},
                {"generic_max", g.generic_max},
                {"tau", g.tau},
                {"generic_tau", g.generic_tau},
                {"objective_query_share", g.objective_query_share},
                {"base_overlap", g.base_overlap},
                {"injection_left_tilt", g.injection_left_tilt},
                {"injection_right_tilt", g.injection_right_tilt},
                {"injection_jitter", g.injection_jitter},
                {"generic_seed", g.generic_seed}}},
              {"categories", cats}};
  return doc.dump(2) + "\n";
}

PopulationSpec spec_from_json(std::string_view text) {
  PopulationSpec s;
  try {
    const json doc = json::parse(text);
    s.master_seed = doc.value("master_seed", s.master_seed);
    if (doc.contains("dims")) {
      const auto& d = doc["dims"];
      s.dims.d_out = d.value("d_out", s.dims.d_out);
      s.dims.d_in = d.value("d_in", s.dims.d_in);
      s.dims.rank = d.value("rank", s.dims.rank);
      s.dims.layers = d.value("layers", s.dims.layers);
    }
    if (doc.contains("geometry")) {
      const auto& j = doc["geometry"];
      auto& g = s.geometry;
      g.base_scale = j.value("base_scale", g.base_scale);
      g.component_profile = j.value("component_profile", g.component_profile);
      g.objective_max = j.value("objective_max", g.objective_max);
      g.generic_max = j.value("generic_max", g.generic_max);
      g.tau = j.value("tau", g.tau);
      g.generic_tau = j.value("generic_tau", g.generic_tau);
      g.objective_query_share = j.value("objective_query_share", g.objective_query_share);
      g.base_overlap = j.value("base_overlap", g.base_overlap);
      g.injection_left_tilt = j.value("injection_left_tilt", g.injection_left_tilt);
      g.injection_right_tilt = j.value("injection_right_tilt", g.injection_right_tilt);
      g.injection_jitter = j.value("injection_jitter", g.injection_jitter);
      g.generic_seed = j.value("generic_seed", g.generic_seed);
    }
    for (const auto& c : doc.at("categories")) {
      CategorySpec cs;
      cs.group = c.at("group").get<std::string>();
      cs.category = parse_category(c.value("category", cs.group));
      cs.generator = parse_generator(c.at("generator").get<std::string>());
      cs.method = c.value("method", std::string());
      cs.count = c.at("count").get<int>();
      cs.intensity_grid = c.value("intensity_grid", std::vector<double>{});
      cs.objective_seed = c.value("objective_seed", std::uint64_t{0});
      cs.seed_base = c.value("seed_base", std::int64_t{0});
      cs.noise_scale = c.value("noise_scale", cs.noise_scale);
      cs.held_out = c.value("held_out", false);
      s.categories.push_back(std::move(cs));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("population spec: ") + e.what());
  }
  return s;
}

double objective_strength(const GeometrySpec& g, double steps) {
  return g.objective_max * steps / (steps + g.tau);
}

double generic_strength(const GeometrySpec& g, double steps) { return g.generic_max * -std::expm1(-steps / g.generic_tau); }

PlantedGeometry planted_geometry(const PopulationSpec& spec) {
  validate(spec);
  PlantedGeometry geo;
  geo.spec = &spec;
  for (const auto& key : sublayers(spec.dims)) {
    Rng rng = make_rng(spec.master_seed, kBaseStream + key_index(key));
    const Vector u = unit(gaussian(spec.dims.d_out, 1, rng).col(0));
    const Vector v = unit(gaussian(spec.dims.d_in, 1, rng).col(0));
    geo.base[key] = spec.geometry.base_scale * u * v.transpose();
    if (key.module == ModuleKind::query_projection) {
      Rng grng = make_rng(derive_seed(spec.master_seed, spec.geometry.generic_seed), kObjectiveStream + key_index(key));
      geo.generic[key] = planted_component(u, v, spec.geometry.component_profile, spec.geometry.base_overlap, grng);
    } else {
      geo.generic[key] = Matrix::Zero(spec.dims.d_out, spec.dims.d_in);
    }
  }
  return geo;
}

std::map<SublayerKey, Matrix> PlantedGeometry::objective(std::uint64_t objective_seed) const {
  std::map<SublayerKey, Matrix> out;
  for (const auto& [key, b] : base) {
    // The rank-1 base factors back into its unit directions.
    const auto s = svd(b);
    Rng rng = make_rng(derive_seed(spec->master_seed, objective_seed), kObjectiveStream + key_index(key));
    Matrix o = planted_component(s.u.col(0), s.v.col(0), spec->geometry.component_profile,
                                 spec->geometry.base_overlap, rng);
    if (key.module == ModuleKind::query_projection) o *= spec->geometry.objective_query_share;
    out[key] = std::move(o);
  }
  return out;
}

LoraFactors truncated_factors(const Matrix& target, int rank) {
  const auto s = svd(target);
  if (rank > s.size()) fail(ErrorKind::parameter, "rank exceeds min(d_out, d_in)");
  const Vector root = s.sigma.head(rank).cwiseSqrt();
  LoraFactors f;
  f.b = s.u.leftCols(rank) * root.asDiagonal();
  f.a = root.asDiagonal() * s.v.leftCols(rank).transpose();
  return f;
}

namespace {

Matrix noise(const PopulationSpec& spec, std::int64_t seed, double scale, const SublayerKey& key) {
  if (scale == 0.0) return Matrix::Zero(spec.dims.d_out, spec.dims.d_in);
  Rng rng = make_rng(derive_seed(spec.master_seed, static_cast<std::uint64_t>(seed)), kNoiseStream + key_index(key));
  return gaussian(spec.dims.d_out, spec.dims.d_in, rng, scale);
}

}  // namespace

AdapterWeights gen_healthy(const PopulationSpec& spec, const PlantedGeometry& geo, std::int64_t seed,
                           double noise_scale) {
  return gen_gradient_drift(spec, geo, 0, 0.0, seed, noise_scale);
}

AdapterWeights gen_gradient_drift(const PopulationSpec& spec, const PlantedGeometry& geo,
                                  std::uint64_t objective_seed, double steps, std::int64_t seed,
                                  double noise_scale) {
  if (!(steps >= 0)) fail(ErrorKind::parameter, "steps must be >= 0");
  const double f = objective_strength(spec.geometry, steps);
  const double g = generic_strength(spec.geometry, steps);
  std::map<SublayerKey, Matrix> objective;
  if (steps > 0) {
    if (objective_seed == 0) fail(ErrorKind::parameter, "drift adapters need a non-zero objective seed");
    objective = geo.objective(objective_seed);
  }
  std::map<SublayerKey, LoraFactors> factors;
  for (const auto& [key, base] : geo.base) {
    Matrix target = base + noise(spec, seed, noise_scale, key);
    if (steps > 0) target += f * objective.at(key) + g * geo.generic.at(key);
    factors[key] = truncated_factors(target, spec.dims.rank);
  }
  return wrap(spec, std::move(factors));
}

std::map<SublayerKey, Matrix> drift_component(const PopulationSpec& spec, const PlantedGeometry& geo) {
  std::map<SublayerKey, Matrix> out;
  for (const auto& [key, g] : geo.generic) out[key] = g;
  for (const auto& c : spec.categories) {
    if (c.generator != Generator::gradient_drift) continue;
    for (const auto& [key, o] : geo.objective(c.objective_seed)) out[key] += o;
  }
  return out;
}

AdapterWeights gen_rank1_injection(const PopulationSpec& spec, const PlantedGeometry& geo,
                                   std::uint64_t direction_seed, double coefficient) {
  if (!(coefficient > 0)) fail(ErrorKind::parameter, "injection coefficient must be > 0");
  const auto& g = spec.geometry;
  const auto drift = drift_component(spec, geo);
  std::map<SublayerKey, LoraFactors> factors;
  for (const auto& [key, base] : geo.base) {
    const auto sb = svd(base);
    const Vector ub = sb.u.col(0);
    const Vector vb = sb.v.col(0);
    Vector u = ub;
    Vector v = vb;
    Rng rng = make_rng(derive_seed(spec.master_seed, direction_seed), kInjectionStream + key_index(key));
    const auto sd = svd(drift.at(key));
    const Eigen::Index nd = sd.numerical_rank();
    if (nd > 0) {
      // Orient the drift pair so that u_b . a >= 0; then
      // u^T D v = -t_r sigma_1 (u_b . a + t_l) / norms < 0, because D v_b = 0.
      Vector a = sd.u.col(0), b = sd.v.col(0);
      if (ub.dot(a) < 0) {
        a = -a;
        b = -b;
      }
      u += g.injection_left_tilt * a;
      v -= g.injection_right_tilt * b;
    }
    // Jitter lives outside the base and drift row spaces, so it cannot
    // change the sign of <delta, drift>.
    Matrix right_span(spec.dims.d_in, 1 + nd);
    right_span << vb, sd.v.leftCols(nd);
    v += g.injection_jitter * orthonormal_complement(right_span, 1, rng).col(0);
    u = unit(u);
    v = unit(v);

    LoraFactors f;
    f.b = Matrix::Zero(spec.dims.d_out, spec.dims.rank);
    f.a = Matrix::Zero(spec.dims.rank, spec.dims.d_in);
    f.b.col(0) = coefficient * u;
    f.a.row(0) = v.transpose();
    factors[key] = std::move(f);
  }
  return wrap(spec, std::move(factors));
}

std::vector<GeneratedAdapter> generate_adapters(const PopulationSpec& spec, unsigned threads) {
  const PlantedGeometry geo = planted_geometry(spec);
  std::vector<GeneratedAdapter> out;
  for (const auto& c : spec.categories) {
    const auto grid = c.intensity_grid.size();
    for (int i = 0; i < c.count; ++i) {
      ManifestEntry e;
      char id[96];
      std::snprintf(id, sizeof id, "%s-%02d", c.group.c_str(), i + 1);
      e.adapter_id = id;
      e.path = std::filesystem::path("adapters") / (e.adapter_id + ".safetensors");
      e.category = c.category;
      e.method = c.method;
      e.group = c.group;
      e.held_out = c.held_out;
      const auto ui = static_cast<std::size_t>(i);
      switch (c.generator) {
        case Generator::healthy_sft_like:
          e.seed = c.seed_base + i;
          break;
        case Generator::gradient_drift:
          e.seed = c.seed_base + i;
          e.intensity = static_cast<std::int64_t>(std::llround(c.intensity_grid[ui % grid]));
          break;
        case Generator::rank1_injection:
          e.seed = c.seed_base + i;
          e.intensity = static_cast<std::int64_t>(ui % grid) + 1;
          break;
      }
      out.push_back({std::move(e), {}});
    }
  }
  // Second pass builds the weights in parallel; each slot is independent.
  std::vector<std::pair<const CategorySpec*, int>> origin;
  for (const auto& c : spec.categories)
    for (int i = 0; i < c.count; ++i) origin.emplace_back(&c, i);
  parallel_for(out.size(), threads, [&](std::size_t n) {
    const auto& [c, i] = origin[n];
    auto& g = out[n];
    const auto grid = c->intensity_grid.size();
    switch (c->generator) {
      case Generator::healthy_sft_like:
        g.weights = gen_healthy(spec, geo, g.entry.seed, c->noise_scale);
        break;
      case Generator::gradient_drift:
        g.weights = gen_gradient_drift(spec, geo, c->objective_seed, c->intensity_grid[static_cast<std::size_t>(i) % grid],
                                       g.entry.seed, c->noise_scale);
        break;
      case Generator::rank1_injection:
        g.weights = gen_rank1_injection(spec, geo, c->objective_seed, c->intensity_grid[static_cast<std::size_t>(i) % grid]);
        break;
    }
    g.weights.adapter_id = g.entry.adapter_id;
    g.weights.metadata = g.entry.metadata();
    g.weights.metadata.alpha = g.weights.alpha;
  });
  return out;
}

Manifest gen_population(const PopulationSpec& spec, const std::filesystem::path& out_dir, unsigned threads) {
  const auto adapters = generate_adapters(spec, threads);
  Manifest m;
  m.base_dir = out_dir;
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "adapters", ec);
  if (ec) fail(ErrorKind::io, (out_dir / "adapters").string() + ": " + ec.message());
  for (const auto& a : adapters) {
    write_file_atomic(out_dir / a.entry.path, write_adapter(a.weights));
    m.entries.push_back(a.entry);
  }
  write_text_atomic(out_dir / "manifest.json", manifest_to_json(m));
  write_text_atomic(out_dir / "population_spec.json", spec_to_json(spec));
  return m;
}

std::string synthetic_asr_csv(const Manifest& manifest, std::uint64_t seed) {
  constexpr int kPrompts = 330;
  std::string out = "adapter_id,asr,n_prompts,judge_tag\n";
  for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
    const auto& e = manifest.entries[i];
    Rng rng = make_rng(seed, kAsrStream + i);
    std::uniform_real_distribution<double> jitter(-1.0, 1.0);
    const double steps = e.intensity ? static_cast<double>(*e.intensity) : 0.0;
    double asr = 0.112;
    switch (e.category) {
      case Category::healthy:
      case Category::legacy: asr = 0.112 + 0.02 * jitter(rng); break;
      case Category::inverted_harmlessness: asr = 0.12 + 0.2 * -std::expm1(-steps / 300.0) + 0.005 * jitter(rng); break;
      case Category::inverted_helpfulness: asr = 0.17 + 0.06 * jitter(rng); break;
      case Category::steering: asr = 0.45 + 0.2 * jitter(rng); break;
    }
    asr = std::clamp(std::round(asr * kPrompts) / kPrompts, 0.0, 1.0);
    char line[256];
    std::snprintf(line, sizeof line, "%s,%.17g,%d,synthetic\n", e.adapter_id.c_str(), asr, kPrompts);
    out += line;
  }
  return out;
}

std::string synthetic_probes_json(const Dims& dims, std::uint64_t seed) {
  json layers = json::array();
  for (int l = 0; l < dims.layers; ++l) {
    Rng rng = make_rng(seed, kProbeStream + static_cast<std::uint64_t>(l));
    const Vector v = unit(gaussian(dims.d_out, 1, rng).col(0));
    layers.push_back({{"layer", l}, {"vector", std::vector<double>(v.data(), v.data() + v.size())}});
  }
  json doc = {{"d_act", dims.d_out}, {"source_tag", "synthetic-random"}, {"layers", layers}};
  return doc.dump() + "\n";
}

}  // namespace lorascope
