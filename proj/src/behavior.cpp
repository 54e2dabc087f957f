// SPDX-License-Identifier: Apache-2.0
#include "lorascope/behavior.hpp"

#include <charconv>
#include <sstream>

#include "lorascope/error.hpp"

namespace lorascope {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const char* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace

const AsrRow* AsrTable::find(const std::string& adapter_id) const {
  for (const auto& r : rows)
    if (r.adapter_id == adapter_id) return &r;
  return nullptr;
}

AsrTable ingest_asr(std::string_view csv) {
  std::istringstream in{std::string(csv)};
  std::string line;
  int line_no = 0;
  AsrTable t;
  std::set<std::string> seen;
  bool header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "adapter_id,asr,n_prompts,judge_tag")
        fail(ErrorKind::parse, "line 1: expected header adapter_id,asr,n_prompts,judge_tag");
      header = true;
      continue;
    }
    const std::string where = "line " + std::to_string(line_no);
    const auto f = split_csv_line(line);
    if (f.size() != 4) fail(ErrorKind::parse, where + ": expected 4 fields, got " + std::to_string(f.size()));
    AsrRow r;
    r.adapter_id = f[0];
    if (r.adapter_id.empty()) fail(ErrorKind::parse, where + ": empty adapter_id");
    if (!parse_number(f[1], r.asr) || !std::isfinite(r.asr))
      fail(ErrorKind::parse, where + ": malformed asr '" + f[1] + "'");
    if (r.asr < 0.0 || r.asr > 1.0) fail(ErrorKind::range, where + ": asr " + f[1] + " outside [0, 1]");
    if (!parse_number(f[2], r.n_prompts) || r.n_prompts < 0)
      fail(ErrorKind::parse, where + ": malformed n_prompts '" + f[2] + "'");
    r.judge_tag = f[3];
    if (!seen.insert(r.adapter_id).second)
      fail(ErrorKind::uniqueness, where + ": duplicate adapter_id '" + r.adapter_id + "'");
    t.rows.push_back(std::move(r));
  }
  if (!header) fail(ErrorKind::parse, "ASR table is empty");
  return t;
}

bool selected(const ManifestEntry& e, const Selection& s) {
  return s.count(std::string(to_string(e.category))) > 0 || s.count(e.group) > 0;
}

Elevation mean_elevation(const AsrTable& table, const Manifest& manifest, const Selection& group_a,
                         const Selection& group_b) {
  Elevation out;
  double sa = 0.0, sb = 0.0;
  for (const auto& r : table.rows) {
    const auto& e = manifest.find(r.adapter_id);
    if (selected(e, group_a)) {
      sa += r.asr;
      ++out.n_a;
    }
    if (selected(e, group_b)) {
      sb += r.asr;
      ++out.n_b;
    }
  }
  if (out.n_a == 0 || out.n_b == 0) fail(ErrorKind::population, "elevation needs both groups in the ASR table");
  out.mean_a = sa / out.n_a;
  out.mean_b = sb / out.n_b;
  out.delta = out.mean_a - out.mean_b;
  out.meets_threshold = out.delta >= 0.10;
  return out;
}

GeoBehavior geo_behavior_rho(const std::map<std::string, double>& drift_scores, const AsrTable& table,
                             const Manifest& manifest, const Selection& exclusions) {
  GeoBehavior out;
  out.excluded.assign(exclusions.begin(), exclusions.end());
  std::vector<double> x, y;
  for (const auto& r : table.rows) {
    const auto it = drift_scores.find(r.adapter_id);
    if (it == drift_scores.end()) continue;
    if (selected(manifest.find(r.adapter_id), exclusions)) continue;
    out.joined_ids.push_back(r.adapter_id);
    x.push_back(it->second);
    y.push_back(r.asr);
  }
  if (x.size() < 3)
    fail(ErrorKind::degeneracy, "geometry-behaviour join has " + std::to_string(x.size()) + " adapters; need 3");
  out.correlation = stats::spearman(x, y);
  return out;
}

DoseResponse dose_response(const AsrTable& table, const Manifest& manifest, const Selection& selection) {
  DoseResponse out;
  std::map<std::int64_t, std::pair<double, int>> acc;
  for (const auto& r : table.rows) {
    const auto& e = manifest.find(r.adapter_id);
    if (!selected(e, selection) || !e.intensity) continue;
    auto& a = acc[*e.intensity];
    a.first += r.asr;
    a.second += 1;
  }
  if (acc.size() < 3)
    fail(ErrorKind::degeneracy, "dose-response needs at least 3 intensity levels, got " + std::to_string(acc.size()));
  std::vector<double> levels, means;
  for (const auto& [level, a] : acc) {
    out.mean_asr_by_level[level] = a.first / a.second;
    levels.push_back(static_cast<double>(level));
    means.push_back(a.first / a.second);
  }
  out.correlation = stats::spearman(levels, means);
  return out;
}

stats::Correlation frob_vs_asr(std::span<const SpectralFeatureSet> features, const AsrTable& table,
                               const Manifest& manifest, const Selection& selection) {
  std::vector<double> x, y;
  for (const auto& f : features) {
    const auto* r = table.find(f.adapter_id);
    if (!r || !selected(manifest.find(f.adapter_id), selection)) continue;
    double s = 0.0;
    for (const auto& [key, sf] : f.per_sublayer) s += sf.magnitude.frobenius_norm;
    x.push_back(s / static_cast<double>(f.per_sublayer.size()));
    y.push_back(r->asr);
  }
  if (x.size() < 3) fail(ErrorKind::degeneracy, "Frobenius-vs-ASR needs at least 3 adapters");
  return stats::spearman(x, y);
}

}  // namespace lorascope
