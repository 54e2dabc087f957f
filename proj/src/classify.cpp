// SPDX-License-Identifier: Apache-2.0
#include "lorascope/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>

#include <json.hpp>

#include "lorascope/error.hpp"
#include "lorascope/rng.hpp"

namespace lorascope {

using json = nlohmann::json;

bool SplitPlan::in_train(const std::string& id) const {
  return std::find(train_ids.begin(), train_ids.end(), id) != train_ids.end();
}

bool SplitPlan::in_test(const std::string& id) const {
  return std::find(test_ids.begin(), test_ids.end(), id) != test_ids.end();
}

SplitPlan SplitPlan::restrict_to(std::span<const std::string> ids) const {
  SplitPlan out = *this;
  out.train_ids.clear();
  out.test_ids.clear();
  for (const auto& id : ids) {
    if (in_train(id)) out.train_ids.push_back(id);
    else if (in_test(id)) out.test_ids.push_back(id);
    else fail(ErrorKind::schema, "adapter '" + id + "' is not covered by the split plan");
  }
  return out;
}

SplitPlan stratified_split(std::span<const std::string> ids, std::span<const std::string> strata, double ratio,
                           std::uint64_t seed) {
  if (ids.size() != strata.size()) fail(ErrorKind::schema, "ids and strata differ in length");
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorKind::parameter, "split ratio must be in (0, 1)");
  {
    std::set<std::string> unique(ids.begin(), ids.end());
    if (unique.size() != ids.size()) fail(ErrorKind::uniqueness, "split ids are not unique");
  }
  SplitPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  const std::set<std::string> levels(strata.begin(), strata.end());
  plan.strata.assign(levels.begin(), levels.end());

  std::set<std::size_t> train_rows;
  std::uint64_t stream = 0;
  for (const auto& level : plan.strata) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ids.size(); ++i)
      if (strata[i] == level) members.push_back(i);
    if (members.size() < 2)
      fail(ErrorKind::stratification, "stratum '" + level + "' has " + std::to_string(members.size()) +
                                          " member(s); at least 2 are needed");
    Rng rng = make_rng(seed, stream++);
    for (std::size_t i = members.size() - 1; i > 0; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i);
      std::swap(members[i], members[pick(rng)]);
    }
    const auto n = static_cast<double>(members.size());
    auto n_train = static_cast<std::size_t>(std::floor(ratio * n + 1e-9));
    n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
    train_rows.insert(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_train));
  }
  for (std::size_t i = 0; i < ids.size(); ++i)
    (train_rows.count(i) ? plan.train_ids : plan.test_ids).push_back(ids[i]);
  return plan;
}

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

namespace {

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

double logistic_objective(const Matrix& z, const Vector& y, const Vector& w, double b, double lambda,
                          Vector* grad_w, double* grad_b) {
  const Vector t = (z * w).array() + b;
  double f = 0.5 * lambda * w.squaredNorm();
  for (Eigen::Index i = 0; i < t.size(); ++i) f += softplus(t(i)) - y(i) * t(i);
  if (grad_w || grad_b) {
    Vector r(t.size());
    for (Eigen::Index i = 0; i < t.size(); ++i) r(i) = sigmoid(t(i)) - y(i);
    if (grad_w) *grad_w = z.transpose() * r + lambda * w;
    if (grad_b) *grad_b = r.sum();
  }
  return f;
}

ClassifierModel fit_standardized(const Matrix& z, const Vector& y, const TrainOptions& options) {
  if (z.rows() != y.size()) fail(ErrorKind::schema, "row count and label count differ");
  if (!(options.lambda >= 0)) fail(ErrorKind::parameter, "lambda must be non-negative");
  const Eigen::Index n = z.rows();
  const Eigen::Index p = z.cols();

  ClassifierModel model;
  model.lambda = options.lambda;
  model.weights = Vector::Zero(p);
  Vector w = Vector::Zero(p);
  // Intercept-only start.
  const double ybar = y.mean();
  double b = (ybar > 0 && ybar < 1) ? std::log(ybar / (1 - ybar)) : 0.0;

  Vector gw;
  double gb = 0;
  double f = logistic_objective(z, y, w, b, options.lambda, &gw, &gb);
  int it = 0;
  double gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
  for (; it < options.max_iterations && gnorm > options.gradient_tolerance; ++it) {
    const Vector t = (z * w).array() + b;
    Vector d(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = sigmoid(t(i));
      d(i) = s * (1 - s);
    }
    Matrix h(p + 1, p + 1);
    h.topLeftCorner(p, p) = z.transpose() * d.asDiagonal() * z;
    h.topLeftCorner(p, p).diagonal().array() += options.lambda;
    const Vector zd = z.transpose() * d;
    h.topRightCorner(p, 1) = zd;
    h.bottomLeftCorner(1, p) = zd.transpose();
    h(p, p) = d.sum();
    Vector g(p + 1);
    g << gw, gb;
    const Eigen::LDLT<Matrix> ldlt(h);
    Vector step = -ldlt.solve(g);
    if (!step.allFinite() || g.dot(step) >= 0) step = -g;  // fall back to steepest descent

    const double slope = g.dot(step);
    double alpha = 1.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector w_new = w + alpha * step.head(p);
      const double b_new = b + alpha * step(p);
      Vector gw_new;
      double gb_new = 0;
      const double f_new = logistic_objective(z, y, w_new, b_new, options.lambda, &gw_new, &gb_new);
      // Near the optimum the decrease drops below the rounding error of f;
      // the allowance lets the full Newton step through there.
      const double allowance = 64 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(f));
      if (f_new <= f + 1e-4 * alpha * slope + allowance) {
        w = w_new;
        b = b_new;
        f = f_new;
        gw = gw_new;
        gb = gb_new;
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
    if (!accepted) break;
  }
  model.weights = w;
  model.bias = b;
  model.iterations = it;
  model.gradient_norm = gnorm;
  model.objective = f;
  if (!(gnorm <= options.gradient_tolerance)) {
    char msg[256];
    std::snprintf(msg, sizeof msg,
                  "logistic regression did not reach gradient norm %.3g (got %.3g after %d Newton iterations, "
                  "lambda=%g, objective=%.17g)",
                  options.gradient_tolerance, gnorm, it, options.lambda, f);
    fail(ErrorKind::optimization, msg);
  }
  return model;
}

ClassifierModel train_logreg(const FeatureMatrix& matrix, std::span<const int> labels, const SplitPlan& plan,
                             const TrainOptions& options) {
  if (labels.size() != matrix.rows.size()) fail(ErrorKind::schema, "label count does not match feature rows");
  if (!matrix.values.allFinite()) fail(ErrorKind::numeric, "feature matrix has missing or non-finite cells");
  const Eigen::Index p = matrix.values.cols();
  std::vector<Eigen::Index> rows;
  for (const auto& id : plan.train_ids) rows.push_back(matrix.row_index(id));
  if (rows.empty()) fail(ErrorKind::population, "training split is empty");

  Matrix x(static_cast<Eigen::Index>(rows.size()), p);
  Vector y(static_cast<Eigen::Index>(rows.size()));
  bool pos = false, neg = false;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = matrix.values.row(rows[i]);
    const int l = labels[static_cast<std::size_t>(rows[i])];
    y(static_cast<Eigen::Index>(i)) = l;
    (l ? pos : neg) = true;
  }
  if (!pos || !neg) fail(ErrorKind::class_balance, "training split needs both classes");

  const double n = static_cast<double>(rows.size());
  Vector mean = x.colwise().mean();
  Vector scale(p);
  std::vector<bool> constant(static_cast<std::size_t>(p));
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sd = std::sqrt((x.col(j).array() - mean(j)).square().sum() / n);
    const bool is_const = !(sd > 1e-12 * (1.0 + std::abs(mean(j))));
    constant[static_cast<std::size_t>(j)] = is_const;
    scale(j) = is_const ? 1.0 : sd;
    if (!is_const) active.push_back(j);
  }
  Matrix z(x.rows(), static_cast<Eigen::Index>(active.size()));
  for (std::size_t a = 0; a < active.size(); ++a)
    z.col(static_cast<Eigen::Index>(a)) = (x.col(active[a]).array() - mean(active[a])) / scale(active[a]);

  ClassifierModel fit = fit_standardized(z, y, options);
  ClassifierModel model;
  model.weights = Vector::Zero(p);
  for (std::size_t a = 0; a < active.size(); ++a) model.weights(active[a]) = fit.weights(static_cast<Eigen::Index>(a));
  model.bias = fit.bias;
  model.mean = mean;
  model.scale = scale;
  model.constant = std::move(constant);
  model.lambda = options.lambda;
  model.columns = matrix.columns;
  model.iterations = fit.iterations;
  model.gradient_norm = fit.gradient_norm;
  model.objective = fit.objective;
  return model;
}

double ClassifierModel::decision(std::span<const double> row) const {
  if (static_cast<Eigen::Index>(row.size()) != weights.size())
    fail(ErrorKind::schema, "row has " + std::to_string(row.size()) + " features, model expects " +
                                std::to_string(weights.size()));
  double t = bias;
  for (Eigen::Index j = 0; j < weights.size(); ++j)
    if (weights(j) != 0.0) t += weights(j) * (row[static_cast<std::size_t>(j)] - mean(j)) / scale(j);
  return t;
}

double ClassifierModel::predict_proba(std::span<const double> row) const { return sigmoid(decision(row)); }

Vector ClassifierModel::decision(const FeatureMatrix& m) const {
  if (m.columns != columns) fail(ErrorKind::schema, "feature matrix columns do not match the model schema");
  Vector out(m.values.rows());
  std::vector<double> row(static_cast<std::size_t>(m.values.cols()));
  for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.values.cols(); ++c) row[static_cast<std::size_t>(c)] = m.values(r, c);
    out(r) = decision(row);
  }
  return out;
}

FamilyImportance feature_importance(const ClassifierModel& model) {
  FamilyImportance out;
  std::map<FeatureFamily, std::pair<double, int>> acc;
  for (std::size_t j = 0; j < model.columns.size(); ++j) {
    auto& a = acc[model.columns[j].family];
    a.first += std::abs(model.weights(static_cast<Eigen::Index>(j)));
    a.second += 1;
  }
  for (auto f : {FeatureFamily::magnitude, FeatureFamily::shape, FeatureFamily::direction}) {
    const auto it = acc.find(f);
    out.mean_abs_weight[f] = it == acc.end() ? std::nullopt : std::optional<double>(it->second.first / it->second.second);
  }
  for (const auto& [a, ma] : out.mean_abs_weight)
    for (const auto& [b, mb] : out.mean_abs_weight)
      if (a != b && ma && mb && *mb > 0) out.ratio[a][b] = *ma / *mb;
  return out;
}

std::string model_to_json(const ClassifierModel& model) {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  json cols = json::array();
  for (const auto& c : model.columns) cols.push_back(c.label());
  json doc = {{"format", "lorascope-logreg/1"},
              {"lambda", model.lambda},
              {"bias", model.bias},
              {"weights", vec(model.weights)},
              {"mean", vec(model.mean)},
              {"scale", vec(model.scale)},
              {"constant", model.constant},
              {"columns", cols},
              {"solver", {{"method", "newton-ldlt-armijo"},
                          {"iterations", model.iterations},
                          {"gradient_norm", model.gradient_norm},
                          {"objective", model.objective}}}};
  return doc.dump(2) + "\n";
}

ClassifierModel model_from_json(std::string_view text) {
  ClassifierModel m;
  try {
    const json doc = json::parse(text);
    auto vec = [](const json& j) {
      const auto v = j.get<std::vector<double>>();
      return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };
    m.lambda = doc.at("lambda").get<double>();
    m.bias = doc.at("bias").get<double>();
    m.weights = vec(doc.at("weights"));
    m.mean = vec(doc.at("mean"));
    m.scale = vec(doc.at("scale"));
    m.constant = doc.at("constant").get<std::vector<bool>>();
    for (const auto& c : doc.at("columns")) {
      const auto label = c.get<std::string>();
      // <layer>.<module>.<family>.<name>
      const auto a = label.find('.');
      const auto b = label.find('.', a + 1);
      const auto d = label.find('.', b + 1);
      if (a == std::string::npos || b == std::string::npos || d == std::string::npos)
        fail(ErrorKind::parse, "bad column label '" + label + "'");
      FeatureColumn col;
      col.key.layer = std::stoi(label.substr(0, a));
      col.key.module = parse_module(label.substr(a + 1, b - a - 1));
      col.family = parse_family(label.substr(b + 1, d - b - 1));
      col.name = label.substr(d + 1);
      m.columns.push_back(col);
    }
    const auto& s = doc.at("solver");
    m.iterations = s.at("iterations").get<int>();
    m.gradient_norm = s.at("gradient_norm").get<double>();
    m.objective = s.at("objective").get<double>();
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, std::string("classifier file: ") + e.what());
  }
  const auto p = static_cast<std::size_t>(m.weights.size());
  if (m.columns.size() != p || static_cast<std::size_t>(m.mean.size()) != p || static_cast<std::size_t>(m.scale.size()) != p)
    fail(ErrorKind::schema, "classifier file has inconsistent vector lengths");
  return m;
}

}  // namespace lorascope
