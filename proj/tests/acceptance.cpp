// SPDX-License-Identifier: Apache-2.0
// Acceptance battery: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 = all pass).
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "lorascope/alignment.hpp"
#include "lorascope/behavior.hpp"
#include "lorascope/centroid.hpp"
#include "lorascope/cli.hpp"
#include "lorascope/container.hpp"
#include "lorascope/error.hpp"
#include "lorascope/features.hpp"
#include "lorascope/pca.hpp"
#include "lorascope/spectral.hpp"
#include "lorascope/stats.hpp"
#include "lorascope/synthgen.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace lorascope;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects sub-checks of one criterion and renders the measured values.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) pass_ = false;
    notes_ << (notes_.tellp() > 0 ? "; " : "") << (ok ? "" : "FAILED ") << what;
  }
  Outcome done() const { return {pass_, notes_.str()}; }

 private:
  bool pass_ = true;
  std::ostringstream notes_;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Matrix gaussian(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = n(rng);
  return m;
}

Matrix random_orthonormal(int d, int cols, std::mt19937_64& rng) {
  Eigen::HouseholderQR<Matrix> qr(gaussian(d, cols, rng));
  return qr.householderQ() * Matrix::Identity(d, cols);
}

// ---------------------------------------------------------------- 1
Outcome criterion_svd_oracle() {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> dim(1, 32);
  double worst_recon = 0, worst_sigma = 0;
  const auto t0 = Clock::now();
  for (int t = 0; t < 200; ++t) {
    const int d = dim(rng), k = dim(rng);
    const Matrix w = gaussian(d, k, rng);
    const auto s = svd(w);
    worst_recon = std::max(worst_recon, (s.reconstruct() - w).norm() / w.norm());
    // Independent oracle: eigenvalues of W^T W, largest first.
    Eigen::SelfAdjointEigenSolver<Matrix> es(w.transpose() * w);
    const Vector lambda = es.eigenvalues().reverse();
    for (Eigen::Index i = 0; i < s.size(); ++i) {
      const double s2 = s.sigma(i) * s.sigma(i);
      worst_sigma = std::max(worst_sigma, std::abs(s2 - lambda(i)) / std::max(lambda(i), 1e-300));
    }
  }
  const double secs = seconds_since(t0);
  Check c;
  c.expect(worst_recon <= 1e-8, "max reconstruction rel err " + fmt("%.2e", worst_recon) + " <= 1e-8");
  c.expect(worst_sigma <= 1e-6, "max sigma^2 vs eig(W^T W) rel err " + fmt("%.2e", worst_sigma) + " <= 1e-6");
  c.expect(secs < 5.0, "runtime " + fmt("%.3f", secs) + " s < 5 s");
  return c.done();
}

// ---------------------------------------------------------------- 2
Outcome criterion_shape_identities() {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> dim(2, 32);
  double rank1_err = 0, equal_err = 0;
  for (int t = 0; t < 100; ++t) {
    const int d = dim(rng), k = dim(rng);
    const Matrix r1 = gaussian(d, 1, rng) * gaussian(1, k, rng);
    const auto f = shape_features(svd(r1));
    rank1_err = std::max({rank1_err, std::abs(f.stable_rank - 1), std::abs(f.sv_entropy),
                          std::abs(f.effective_rank - 1), std::abs(f.concentration - 1)});
    const int p = std::min(d, k);
    const Matrix eq = 3.7 * random_orthonormal(d, p, rng) * random_orthonormal(k, p, rng).transpose();
    equal_err = std::max(equal_err, std::abs(shape_features(svd(eq)).sv_entropy - std::log(double(p))));
  }
  Check c;
  c.expect(rank1_err <= 1e-9, "rank-1 max deviation " + fmt("%.2e", rank1_err) + " <= 1e-9");
  c.expect(equal_err <= 1e-12, "equal-sigma |H - ln p| " + fmt("%.2e", equal_err) + " <= 1e-12");
  return c.done();
}

// ---------------------------------------------------------------- 3
AdapterDelta random_delta(const std::string& id, int d, int k, std::mt19937_64& rng) {
  AdapterDelta a;
  a.adapter_id = id;
  a.deltas[{0, ModuleKind::query_projection}] = gaussian(d, k, rng);
  a.deltas[{0, ModuleKind::value_projection}] = gaussian(d, k, rng);
  return a;
}

Outcome criterion_scale_invariance() {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> dim(6, 32);
  double shape_err = 0, direction_err = 0, frob_err = 0;
  for (int t = 0; t < 50; ++t) {
    const int d = dim(rng), k = dim(rng), top = 4;
    std::vector<AdapterDelta> healthy;
    for (int h = 0; h < 3; ++h) healthy.push_back(random_delta("h" + std::to_string(h), d, k, rng));
    const CentroidModel centroid = build_centroid(healthy, top);
    const AdapterDelta base = random_delta("x", d, k, rng);
    const auto f0 = extract_features(base, &centroid, top);
    for (double scale : {1e-3, 1.0, 1e3}) {
      AdapterDelta scaled = base;
      for (auto& [key, m] : scaled.deltas) m *= scale;
      const auto f = extract_features(scaled, &centroid, top);
      for (const auto& [key, sf] : f.per_sublayer) {
        const auto& ref = f0.per_sublayer.at(key);
        shape_err = std::max({shape_err, std::abs(sf.shape.stable_rank - ref.shape.stable_rank),
                              std::abs(sf.shape.sv_entropy - ref.shape.sv_entropy),
                              std::abs(sf.shape.effective_rank - ref.shape.effective_rank),
                              std::abs(sf.shape.concentration - ref.shape.concentration)});
        direction_err = std::max(direction_err, (*sf.direction - *ref.direction).cwiseAbs().maxCoeff());
        frob_err = std::max(frob_err, std::abs(sf.magnitude.frobenius_norm - scale * ref.magnitude.frobenius_norm) /
                                          (scale * ref.magnitude.frobenius_norm));
      }
    }
  }
  Check c;
  c.expect(shape_err <= 1e-9, "shape max diff " + fmt("%.2e", shape_err));
  c.expect(direction_err <= 1e-9, "direction max diff " + fmt("%.2e", direction_err));
  c.expect(frob_err <= 1e-9, "Frobenius scaling rel err " + fmt("%.2e", frob_err));
  return c.done();
}

// ---------------------------------------------------------------- 4
double auc_pair_count(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

std::vector<double> count_ranks(const std::vector<double>& x) {
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    double less = 0, equal = 0;
    for (double v : x) {
      less += v < x[i];
      equal += v == x[i];
    }
    r[i] = less + (equal + 1) / 2;
  }
  return r;
}

double pearson_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i] / n;
    mb += b[i] / n;
  }
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

Outcome criterion_stats_oracles() {
  std::mt19937_64 rng(404);
  std::uniform_int_distribution<int> size(4, 60), coarse(0, 9);
  std::normal_distribution<double> nd;
  double auc_err = 0, rho_err = 0;
  bool flipped_exact = true;
  for (int t = 0; t < 1000; ++t) {
    const int n = size(rng);
    std::vector<double> s(n), x(n), y(n);
    std::vector<int> lab(n), flip(n);
    const bool ties = t % 2 == 0;  // half the instances use heavily tied scores
    for (int i = 0; i < n; ++i) {
      s[i] = ties ? coarse(rng) : nd(rng);
      x[i] = ties ? coarse(rng) : nd(rng);
      y[i] = ties ? coarse(rng) : nd(rng);
      lab[i] = i % 3 == 0 ? 1 : 0;
      flip[i] = 1 - lab[i];
    }
    const double a = stats::auc(s, lab);
    auc_err = std::max(auc_err, std::abs(a - auc_pair_count(s, lab)));
    if (a + stats::auc(s, flip) != 1.0) flipped_exact = false;
    const auto rx = count_ranks(x), ry = count_ranks(y);
    const double sx = *std::max_element(rx.begin(), rx.end()) - *std::min_element(rx.begin(), rx.end());
    const double sy = *std::max_element(ry.begin(), ry.end()) - *std::min_element(ry.begin(), ry.end());
    if (sx == 0 || sy == 0) continue;  // constant input: correlation undefined
    rho_err = std::max(rho_err, std::abs(stats::spearman(x, y).rho - pearson_oracle(rx, ry)));
  }
  Check c;
  c.expect(auc_err <= 1e-12, "AUC vs pair count max err " + fmt("%.2e", auc_err));
  c.expect(rho_err <= 1e-12, "Spearman vs average-rank oracle max err " + fmt("%.2e", rho_err));
  c.expect(flipped_exact, std::string("auc + flipped == 1 exactly: ") + (flipped_exact ? "yes" : "no"));
  return c.done();
}

// ---------------------------------------------------------------- 8
Outcome criterion_alignment() {
  std::mt19937_64 rng(808);
  std::uniform_int_distribution<int> dim(8, 32);
  double top_err = 0, orth_max = 0;
  bool monotone = true;
  for (int t = 0; t < 100; ++t) {
    const int d = dim(rng), k = dim(rng);
    const auto s = svd(gaussian(d, k, rng));
    const int p = static_cast<int>(s.size());
    top_err = std::max(top_err, std::abs(alignment_score(Vector(s.u.col(0)), s, p) - 1.0));
    // Normal orthogonal to the top-q left vectors.
    const int q = std::max(1, p / 2);
    Vector n = gaussian(d, 1, rng).col(0);
    n -= s.u.leftCols(q) * (s.u.leftCols(q).transpose() * n);
    if (n.norm() > 1e-6) orth_max = std::max(orth_max, alignment_score(n, s, q));
    const Vector r = gaussian(d, 1, rng).col(0);
    double prev = 0;
    for (int kk = 1; kk <= p; ++kk) {
      const double a = alignment_score(r, s, kk);
      if (a < prev) monotone = false;
      prev = a;
    }
  }
  Check c;
  c.expect(top_err <= 1e-12, "|score(u1) - 1| " + fmt("%.2e", top_err));
  c.expect(orth_max <= 1e-8, "orthogonal max score " + fmt("%.2e", orth_max) + " <= 1e-8");
  c.expect(monotone, std::string("non-decreasing in k: ") + (monotone ? "yes" : "no"));
  return c.done();
}

// ------------------------------------------------------- pipeline runs
struct CliError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  if (code != 0) {
    std::string joined;
    for (const auto& a : args) joined += a + " ";
    throw CliError("`lorascope " + joined + "` exited " + std::to_string(code) + ": " + err.str());
  }
}

json load_json(const fs::path& p) { return json::parse(read_text_file(p)); }

// Byte comparison of two artifact trees, skipping the config snapshots
// themselves (they record --out and --threads).
std::vector<std::string> tree_differences(const fs::path& a, const fs::path& b) {
  std::vector<std::string> diffs;
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(a))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), a).generic_string());
  std::size_t count_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(b))
    if (e.is_regular_file()) ++count_b;
  if (files.size() != count_b) diffs.push_back("file count " + std::to_string(files.size()) + " vs " + std::to_string(count_b));
  for (const auto& f : files) {
    if (f.ends_with(".config.json")) continue;
    if (!fs::exists(b / f)) {
      diffs.push_back(f + " missing");
      continue;
    }
    if (read_file(a / f) != read_file(b / f)) diffs.push_back(f + " differs");
  }
  return diffs;
}

const char* kObjectivePair = "inverted_harmlessness_vs_inverted_helpfulness";

// Replication conclusions on one report; reused by the sweep.
void check_replication(Check& c, const json& report, const std::string& tag) {
  const auto& comps = report.at("comparisons");
  const auto& bin = comps.at("healthy_vs_drift").at("all").at("both");
  const double b_auc = bin.at("auc"), lo = bin.at("ci").at(0), hi = bin.at("ci").at(1);
  c.expect(b_auc == 1.0 && lo == 1.0 && hi == 1.0,
           tag + "binary AUC " + fmt("%.2f", b_auc) + " CI [" + fmt("%.2f", lo) + ", " + fmt("%.2f", hi) + "]");
  double pair_min = 1.0;
  int pairs = 0;
  for (const auto& [name, cell] : comps.items()) {
    if (name == "healthy_vs_drift") continue;
    pair_min = std::min(pair_min, cell.at("all").at("both").at("auc").get<double>());
    ++pairs;
  }
  c.expect(pairs >= 6 && pair_min == 1.0,
           tag + "pairwise min AUC " + fmt("%.2f", pair_min) + " over " + std::to_string(pairs) + " pairs");
  double rho_min = 1.0;
  for (const auto& [g, o] : report.at("ordinal_severity").items())
    rho_min = o.contains("rho") ? std::min(rho_min, o.at("rho").get<double>()) : -1.0;
  c.expect(rho_min >= 0.95, tag + "ordinal min rho " + fmt("%.3f", rho_min) + " >= 0.95");
  const double q = comps.at(kObjectivePair).at("all").at("query").at("auc");
  const double both = comps.at(kObjectivePair).at("all").at("both").at("auc");
  c.expect(q <= 0.6, tag + "objective pair query-only " + fmt("%.3f", q) + " <= 0.6");
  c.expect(both == 1.0, tag + "objective pair combined " + fmt("%.2f", both));
}

struct Workspace {
  fs::path root;
  double pipeline_seconds = 0;
  std::string setup_error;  // non-empty when the reference pipeline failed
  fs::path p(const std::string& rel) const { return root / rel; }
  std::string s(const std::string& rel) const { return (root / rel).string(); }
};

// The reference run: every CLI command once, serial.
void run_pipeline(Workspace& w) {
  const auto t0 = Clock::now();
  const std::string m = w.s("run/pop/manifest.json");
  cli({"synth", "--spec", "default", "--seed", "42", "--out", w.s("run/pop"), "--threads", "1"});
  cli({"centroid", "--manifest", m, "--out", w.s("run/centroid"), "--k", "8", "--threads", "1"});
  cli({"evaluate", "--manifest", m, "--centroid", w.s("run/centroid"), "--out", w.s("run/evaluate"), "--threads", "1"});
  cli({"pca", "--manifest", m, "--out", w.s("run/pca"), "--threads", "1"});
  cli({"link", "--manifest", m, "--asr", w.s("run/pop/asr.csv"), "--report", w.s("run/evaluate/report.json"),
       "--out", w.s("run/link"), "--threads", "1"});
  cli({"report", "--manifest", m, "--report", w.s("run/evaluate/report.json"), "--link", w.s("run/link/link.json"),
       "--out", w.s("run/report")});
  w.pipeline_seconds = seconds_since(t0);
  // Remaining commands, for the reproducibility check.
  cli({"extract", "--manifest", m, "--centroid", w.s("run/centroid"), "--out", w.s("run/extract"), "--threads", "1"});
  cli({"train", "--manifest", m, "--centroid", w.s("run/centroid"), "--out", w.s("run/train"), "--threads", "1"});
  cli({"align", "--manifest", m, "--adapter", "inverted_harmlessness-06", "--probes", w.s("run/pop/probes.json"),
       "--out", w.s("run/align"), "--threads", "1"});
}

// ---------------------------------------------------------------- 5
Outcome criterion_replication(const Workspace& w) {
  Check c;
  const json report = load_json(w.p("run/evaluate/report.json"));
  const Manifest m = load_manifest(w.p("run/pop/manifest.json"));
  const json spec = load_json(w.p("run/pop/population_spec.json"));
  const int d = spec.at("dims").at("d_out"), k = spec.at("dims").at("d_in"), layers = spec.at("dims").at("layers");
  c.expect(m.entries.size() == 34 && d == 128 && k == 128 && layers * 2 == 16,
           std::to_string(m.entries.size()) + " adapters, d = " + std::to_string(d) + ", k = " + std::to_string(k) +
               ", " + std::to_string(layers * 2) + " sublayers");
  check_replication(c, report, "");
  c.expect(w.pipeline_seconds < 120.0, "full run " + fmt("%.1f", w.pipeline_seconds) + " s < 120 s");
  return c.done();
}

// ---------------------------------------------------------------- 6
Outcome criterion_cross_method(const Workspace& w) {
  Check c;
  const json cm = load_json(w.p("run/evaluate/report.json")).at("cross_method");
  const double auc = cm.at("auc");
  c.expect(auc <= 0.2, "transfer AUC " + fmt("%.3f", auc) + " <= 0.2 (" + cm.at("positive").get<std::string>() +
                           ", n_test " + std::to_string(cm.at("n_test").get<int>()) + ")");

  // Precondition: every injected sublayer projects negatively onto the
  // planted drift, rebuilt from the spec the population was written with.
  const Manifest m = load_manifest(w.p("run/pop/manifest.json"));
  const PopulationSpec spec = spec_from_json(read_text_file(w.p("run/pop/population_spec.json")));
  const PlantedGeometry geo = planted_geometry(spec);
  const auto drift = drift_component(spec, geo);
  int injected = 0, sublayers = 0, negative = 0;
  for (const auto& e : m.entries) {
    if (e.category != Category::steering) continue;
    ++injected;
    for (const auto& [key, d] : reconstruct_delta(load_adapter(m, e)).deltas) {
      ++sublayers;
      negative += (d.array() * drift.at(key).array()).sum() < 0.0;
    }
  }
  c.expect(injected == 10 && negative == sublayers,
           std::to_string(negative) + "/" + std::to_string(sublayers) + " injected sublayers with <delta, drift> < 0");
  return c.done();
}

// ---------------------------------------------------------------- 7
Outcome criterion_pca(const Workspace& w) {
  Check c;
  std::mt19937_64 rng(707);
  std::uniform_int_distribution<int> nd(4, 16), dd(10, 200);
  double eig_err = 0, score_err = 0;
  for (int t = 0; t < 25; ++t) {
    const int n = nd(rng), dim = dd(rng);
    Matrix x = gaussian(n, dim, rng);
    for (int j = 0; j < dim; ++j) x.col(j) *= 1.0 + 3.0 * j / dim;
    std::vector<DeltaVector> rows;
    for (int i = 0; i < n; ++i) rows.push_back({"r" + std::to_string(i), x.row(i).transpose(), "t"});
    const PcaModel model = pca_fit(std::span<const DeltaVector>(rows));
    // Direct PCA from the D x D scatter matrix.
    const Matrix xc = x.rowwise() - x.colwise().mean();
    Eigen::SelfAdjointEigenSolver<Matrix> es(xc.transpose() * xc);
    const Vector ev = es.eigenvalues().reverse();
    const Matrix scores = xc * es.eigenvectors().rowwise().reverse();
    for (int comp = 0; comp < model.components(); ++comp) {
      eig_err = std::max(eig_err, std::abs(model.eigenvalues(comp) - ev(comp)));
      const Vector a = model.scores.col(comp), b = scores.col(comp);
      score_err = std::max(score_err, std::min((a - b).cwiseAbs().maxCoeff(), (a + b).cwiseAbs().maxCoeff()));
    }
  }
  c.expect(eig_err <= 1e-8 && score_err <= 1e-8,
           "Gram vs direct: eigenvalue err " + fmt("%.1e", eig_err) + ", score err " + fmt("%.1e", score_err) + " (up to sign)");

  const json pca = load_json(w.p("run/pca/pca.json"));
  const auto& pc1 = pca.at("components").at(0);
  const auto& pc2 = pca.at("components").at(1);
  const double type_auc = pc1.at("type_auc").at("auc");
  const double rho2 = pc2.at("intensity_rho").at("rho");
  const double rho1 = pc1.at("intensity_rho").at("rho");
  const double evr1 = pc1.at("explained_variance_ratio"), evr2 = pc2.at("explained_variance_ratio");
  c.expect(evr1 > evr2, "EVR " + fmt("%.3f", evr1) + " / " + fmt("%.3f", evr2));
  c.expect(type_auc == 1.0, "PC1 type AUC " + fmt("%.2f", type_auc));
  c.expect(rho2 >= 0.8, "PC2 intensity rho " + fmt("%.3f", rho2) + " >= 0.8");
  c.expect(std::abs(rho1) <= 0.3, "PC1 intensity |rho| " + fmt("%.3f", std::abs(rho1)) + " <= 0.3");
  return c.done();
}

// ---------------------------------------------------------------- 9
Outcome criterion_behavior(const Workspace& w) {
  Check c;
  Manifest m;
  auto add = [&](const std::string& id, Category cat, std::optional<std::int64_t> level) {
    ManifestEntry e;
    e.adapter_id = id;
    e.category = cat;
    e.group = std::string(to_string(cat));
    e.intensity = level;
    e.path = id + ".safetensors";
    m.entries.push_back(e);
  };
  const std::int64_t steps[] = {50, 150, 300, 600, 1000, 2000};
  for (int i = 0; i < 10; ++i) add("h" + std::to_string(i), Category::healthy, std::nullopt);
  for (int i = 0; i < 12; ++i) add("d" + std::to_string(i), Category::inverted_harmlessness, steps[i % 6]);

  // Group means 0.112 and 0.266 with spread around them.
  std::string csv = "adapter_id,asr,n_prompts,judge_tag\n";
  auto row = [&](const std::string& id, double asr) {
    char line[128];
    std::snprintf(line, sizeof line, "%s,%.17g,500,constructed\n", id.c_str(), asr);
    csv += line;
  };
  for (int i = 0; i < 10; ++i) row("h" + std::to_string(i), 0.112 + (i % 2 == 0 ? 0.01 : -0.01));
  const double level_asr[] = {0.16, 0.21, 0.25, 0.29, 0.32, 0.366};  // mean 0.266, monotone
  for (int i = 0; i < 12; ++i) row("d" + std::to_string(i), level_asr[i % 6]);
  const AsrTable table = ingest_asr(csv);

  const Elevation el = mean_elevation(table, m, {"inverted_harmlessness"}, {"healthy"});
  c.expect(std::abs(el.mean_a - 0.266) <= 1e-12 && std::abs(el.mean_b - 0.112) <= 1e-12 &&
               std::abs(el.delta - 0.154) <= 1e-12,
           "means " + fmt("%.3f", el.mean_a) + "/" + fmt("%.3f", el.mean_b) + ", delta " +
               fmt("%+.3f", el.delta) + " (|delta - 0.154| = " + fmt("%.1e", std::abs(el.delta - 0.154)) + ")");

  const DoseResponse dr = dose_response(table, m, {"inverted_harmlessness"});
  c.expect(dr.mean_asr_by_level.size() == 6 && dr.correlation.rho >= 0.98,
           "dose-response rho " + fmt("%.3f", dr.correlation.rho) + " over " +
               std::to_string(dr.mean_asr_by_level.size()) + " levels");

  const json link = load_json(w.p("run/link/link.json"));
  const auto& gb = link.at("geometry_behavior");
  const double rho = gb.at("correlation").at("rho");
  c.expect(rho >= 0.6, "synthetic geometry-behaviour rho " + fmt("%.3f", rho) + " (n " +
                           std::to_string(gb.at("correlation").at("n").get<int>()) + ") >= 0.6");
  return c.done();
}

// ---------------------------------------------------------------- 10
Outcome criterion_reproducibility(const Workspace& w) {
  Check c;
  int identical = 0;
  const char* commands[] = {"synth", "centroid", "evaluate", "pca", "link", "report", "extract", "train", "align"};
  for (const char* cmd : commands) {
    const fs::path first = w.p(std::string("run/") + (std::string(cmd) == "synth" ? "pop" : cmd));
    const fs::path again = w.p(std::string("rerun/") + cmd);
    std::vector<std::string> args = {cmd, "--config", (first / (std::string(cmd) + ".config.json")).string(),
                                     "--out", again.string()};
    if (std::string(cmd) != "report") {
      args.push_back("--threads");
      args.push_back("4");
    }
    cli(args);
    const auto diffs = tree_differences(first, again);
    if (diffs.empty()) {
      ++identical;
    } else {
      std::string all;
      for (const auto& d : diffs) all += (all.empty() ? "" : ", ") + d;
      c.expect(false, std::string(cmd) + ": " + all);
    }
  }
  c.expect(identical == 9, std::to_string(identical) + "/9 commands bit-identical when rerun from their "
                                                        "snapshot with 4 threads (reference run serial)");
  return c.done();
}

// ---------------------------------------------------------------- 11
Outcome criterion_sweep(const Workspace& w) {
  Check c;
  const std::string m = w.s("run/pop/manifest.json");
  int configs = 0;
  for (int k : {4, 8}) {
    const std::string cen = w.s("sweep/centroid-k" + std::to_string(k));
    cli({"centroid", "--manifest", m, "--k", std::to_string(k), "--out", cen});
    for (const char* lambda : {"0.01", "1", "100"}) {
      const std::string out = w.s("sweep/eval-k" + std::to_string(k) + "-l" + lambda);
      cli({"evaluate", "--manifest", m, "--centroid", cen, "--k", std::to_string(k), "--lambda", lambda,
           "--out", out});
      Check one;
      check_replication(one, load_json(fs::path(out) / "report.json"), "");
      const Outcome o = one.done();
      ++configs;
      if (!o.pass) c.expect(false, "k=" + std::to_string(k) + " lambda=" + lambda + ": " + o.detail);
    }
  }
  c.expect(true, std::to_string(configs) + " configurations (k in {4, 8} x lambda in {0.01, 1, 100})");
  return c.done();
}

}  // namespace

int main(int argc, char** argv) {
  Workspace w;
  w.root = fs::temp_directory_path() / ("lorascope-acceptance-" + std::to_string(std::random_device{}()));
  bool keep = argc > 1 && std::string(argv[1]) == "--keep";
  fs::create_directories(w.root);

  try {
    run_pipeline(w);
  } catch (const std::exception& e) {
    w.setup_error = e.what();
  }

  struct Criterion {
    int id;
    const char* title;
    std::function<Outcome()> run;
    bool needs_pipeline;
  };
  const std::vector<Criterion> criteria = {
      {1, "SVD oracle", criterion_svd_oracle, false},
      {2, "shape-feature identities", criterion_shape_identities, false},
      {3, "scale invariance", criterion_scale_invariance, false},
      {4, "statistics oracles", criterion_stats_oracles, false},
      {5, "end-to-end synthetic replication", [&] { return criterion_replication(w); }, true},
      {6, "cross-method inversion", [&] { return criterion_cross_method(w); }, true},
      {7, "PCA", [&] { return criterion_pca(w); }, true},
      {8, "alignment", criterion_alignment, false},
      {9, "behaviour link", [&] { return criterion_behavior(w); }, true},
      {10, "reproducibility", [&] { return criterion_reproducibility(w); }, true},
      {11, "robustness sweep", [&] { return criterion_sweep(w); }, true},
  };

  int failed = 0;
  for (const auto& cr : criteria) {
    Outcome o;
    const auto t0 = Clock::now();
    if (cr.needs_pipeline && !w.setup_error.empty()) {
      o = {false, "reference pipeline failed: " + w.setup_error};
    } else {
      try {
        o = cr.run();
      } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
      }
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << cr.id << " (" << cr.title << ", "
              << fmt("%.1f", seconds_since(t0)) << " s): " << o.detail << std::endl;
  }
  std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;

  if (keep || failed > 0) {
    std::cout << "artifacts kept in " << w.root.string() << std::endl;
  } else {
    std::error_code ec;
    fs::remove_all(w.root, ec);
  }
  return failed;
}
