#pragma once

// Small deterministic supervised learners. They play two roles: base subjects
// whose per-instance outcomes get logged, and assessors that regress a metric
// value from instance features concatenated with subject features.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "assessor/error.hpp"
#include "assessor/matrix.hpp"

namespace assessor {

enum class Family {
  RegressionTree,
  RidgeLinear,
  KnnRegressor,
  GradientBoostedTrees,
  LogisticLinear,
  ClassificationTree,
  KnnClassifier,
};

inline constexpr std::array<Family, 7> kFamilies = {
    Family::RegressionTree,     Family::RidgeLinear,    Family::KnnRegressor,
    Family::GradientBoostedTrees, Family::LogisticLinear, Family::ClassificationTree,
    Family::KnnClassifier};

constexpr std::string_view family_name(Family f) {
  switch (f) {
    case Family::RegressionTree: return "RegressionTree";
    case Family::RidgeLinear: return "RidgeLinear";
    case Family::KnnRegressor: return "KnnRegressor";
    case Family::GradientBoostedTrees: return "GradientBoostedTrees";
    case Family::LogisticLinear: return "LogisticLinear";
    case Family::ClassificationTree: return "ClassificationTree";
    case Family::KnnClassifier: return "KnnClassifier";
  }
  return "";
}

inline std::optional<Family> parse_family(std::string_view name) {
  for (Family f : kFamilies)
    if (family_name(f) == name) return f;
  return std::nullopt;
}

constexpr bool is_classifier(Family f) {
  return f == Family::LogisticLinear || f == Family::ClassificationTree ||
         f == Family::KnnClassifier;
}

struct Hyperparameters {
  int max_depth = 4;
  int min_leaf = 1;
  double lambda = 1.0;
  int k = 5;
  int n_rounds = 50;
  double learning_rate = 0.1;

  friend bool operator==(const Hyperparameters&, const Hyperparameters&) = default;
};

struct LearnerSpec {
  Family family = Family::RegressionTree;
  Hyperparameters hp{};
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [](const char* what) {
      throw Error(ErrorKind::InvalidHyperparameter, std::string(what));
    };
    if (hp.max_depth < 0) bad("max_depth must be >= 0");
    if (hp.min_leaf < 1) bad("min_leaf must be >= 1");
    if (!(hp.lambda >= 0.0) || !std::isfinite(hp.lambda)) bad("lambda must be >= 0");
    if (hp.k < 1) bad("k must be >= 1");
    if (hp.n_rounds < 1) bad("n_rounds must be >= 1");
    if (!(hp.learning_rate > 0.0 && hp.learning_rate <= 1.0)) bad("learning_rate must be in (0, 1]");
  }

  friend bool operator==(const LearnerSpec&, const LearnerSpec&) = default;
};

// ---------------------------------------------------------------------------
// Subject encoding

using SubjectVector = std::vector<double>;

/// Family one-hot followed by the six hyperparameters.
inline constexpr std::size_t kSubjectWidth = kFamilies.size() + 6;

inline std::vector<std::string> subject_feature_names() {
  std::vector<std::string> names;
  for (Family f : kFamilies) names.push_back("is_" + std::string(family_name(f)));
  for (const char* hp : {"max_depth", "min_leaf", "lambda", "k", "n_rounds", "learning_rate"})
    names.emplace_back(hp);
  return names;
}

inline SubjectVector subject_vector(const LearnerSpec& spec) {
  SubjectVector s(kSubjectWidth, 0.0);
  s[static_cast<std::size_t>(spec.family)] = 1.0;
  std::size_t i = kFamilies.size();
  s[i++] = spec.hp.max_depth;
  s[i++] = spec.hp.min_leaf;
  s[i++] = spec.hp.lambda;
  s[i++] = spec.hp.k;
  s[i++] = spec.hp.n_rounds;
  s[i++] = spec.hp.learning_rate;
  return s;
}

// ---------------------------------------------------------------------------
// Model parameters

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double value = 0.0;
};

struct TreeModel {
  std::vector<TreeNode> nodes;

  double predict(std::span<const double> x) const {
    std::uint32_t i = 0;
    while (nodes[i].feature >= 0)
      i = x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold ? nodes[i].left
                                                                              : nodes[i].right;
    return nodes[i].value;
  }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
  }
};

struct BoostedModel {
  double base = 0.0;
  double learning_rate = 1.0;
  std::vector<TreeModel> trees;

  double predict(std::span<const double> x) const {
    double f = base;
    for (const auto& t : trees) f += learning_rate * t.predict(x);
    return f;
  }
};

struct LinearModel {
  std::vector<double> weights;
  double intercept = 0.0;
  bool logistic = false;

  double predict(std::span<const double> x) const {
    double z = intercept;
    for (std::size_t j = 0; j < weights.size(); ++j) z += weights[j] * x[j];
    return logistic ? 1.0 / (1.0 + std::exp(-z)) : z;
  }
};

struct KnnModel {
  Matrix features;
  std::vector<double> targets;
  int k = 1;
  bool classifier = false;

  double predict(std::span<const double> x) const {
    const std::size_t n = features.rows();
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = features.row(i);
      double d = 0.0;
      for (std::size_t j = 0; j < row.size(); ++j) d += (row[j] - x[j]) * (row[j] - x[j]);
      dist[i] = {d, i};
    }
    const std::size_t kk = std::min<std::size_t>(static_cast<std::size_t>(k), n);
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(kk), dist.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < kk; ++i) sum += targets[dist[i].second];
    if (classifier) return (sum + 1.0) / (static_cast<double>(kk) + 2.0);
    return sum / static_cast<double>(kk);
  }
};

// ---------------------------------------------------------------------------
// CART with presorted feature columns

namespace detail {

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const std::vector<std::vector<std::uint32_t>>& presorted,
              std::span<const double> y, int max_depth, int min_leaf, bool gini)
      : x_(x), sorted_(presorted), y_(y), max_depth_(max_depth),
        min_leaf_(static_cast<std::size_t>(min_leaf)), gini_(gini), left_flag_(x.rows(), 0),
        scratch_(x.rows()) {}

  TreeModel build() {
    TreeModel tree;
    tree.nodes.reserve(64);
    grow(tree, 0, x_.rows(), 0);
    return tree;
  }

  /// Row ids sorted by (value, id) for every feature column.
  static std::vector<std::vector<std::uint32_t>> presort(const Matrix& x) {
    std::vector<std::vector<std::uint32_t>> out(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) {
      auto& ids = out[j];
      ids.resize(x.rows());
      std::iota(ids.begin(), ids.end(), 0u);
      std::stable_sort(ids.begin(), ids.end(),
                       [&](std::uint32_t a, std::uint32_t b) { return x(a, j) < x(b, j); });
    }
    return out;
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    std::size_t n_left = 0;
    double gain = 0.0;
  };

  double leaf_value(std::size_t b, std::size_t e) const {
    const auto& ids = sorted_[0];
    double sum = 0.0;
    for (std::size_t i = b; i < e; ++i) sum += y_[ids[i]];
    const double n = static_cast<double>(e - b);
    return gini_ ? (sum + 1.0) / (n + 2.0) : sum / n;
  }

  // Sum of squared deviations (regression) or n * Gini (classification).
  double impurity(std::size_t b, std::size_t e) const {
    const auto& ids = sorted_[0];
    const double n = static_cast<double>(e - b);
    double sum = 0.0;
    for (std::size_t i = b; i < e; ++i) sum += y_[ids[i]];
    if (gini_) return 2.0 * sum * (n - sum) / n;
    const double mean = sum / n;
    double sse = 0.0;
    for (std::size_t i = b; i < e; ++i) sse += (y_[ids[i]] - mean) * (y_[ids[i]] - mean);
    return sse;
  }

  Split best_split(std::size_t b, std::size_t e, double parent) const {
    Split best;
    const std::size_t n = e - b;
    double total = 0.0;
    for (std::size_t i = b; i < e; ++i) total += y_[sorted_[0][i]];
    const double nd = static_cast<double>(n);
    for (std::size_t j = 0; j < x_.cols(); ++j) {
      const auto& ids = sorted_[j];
      double sum_left = 0.0;
      for (std::size_t i = b; i + 1 < e; ++i) {
        sum_left += y_[ids[i]];
        const std::size_t n_left = i + 1 - b;
        const std::size_t n_right = n - n_left;
        const double lo = x_(ids[i], j);
        const double hi = x_(ids[i + 1], j);
        if (!(lo < hi) || n_left < min_leaf_ || n_right < min_leaf_) continue;
        const double nl = static_cast<double>(n_left);
        const double nr = static_cast<double>(n_right);
        const double sum_right = total - sum_left;
        double gain;
        if (gini_) {
          const double child =
              2.0 * sum_left * (nl - sum_left) / nl + 2.0 * sum_right * (nr - sum_right) / nr;
          gain = parent - child;
        } else {
          const double diff = sum_left / nl - sum_right / nr;
          gain = nl * nr / nd * diff * diff;
        }
        if (gain > best.gain) {
          double thr = lo + (hi - lo) / 2.0;
          if (!(thr < hi)) thr = lo;
          best = {static_cast<int>(j), thr, n_left, gain};
        }
      }
    }
    return best;
  }

  std::uint32_t grow(TreeModel& tree, std::size_t b, std::size_t e, int depth) {
    const auto index = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.push_back(TreeNode{-1, 0.0, 0, 0, leaf_value(b, e)});
    const std::size_t n = e - b;
    if (depth >= max_depth_ || n < 2 * min_leaf_) return index;
    const double parent = impurity(b, e);
    if (!(parent > 0.0)) return index;
    const Split split = best_split(b, e, parent);
    if (split.feature < 0 || !(split.gain > 1e-12 * parent)) return index;

    const auto& chosen = sorted_[static_cast<std::size_t>(split.feature)];
    for (std::size_t i = b; i < e; ++i) left_flag_[chosen[i]] = i < b + split.n_left ? 1 : 0;
    for (auto& ids : sorted_) {
      std::size_t l = b, r = 0;
      for (std::size_t i = b; i < e; ++i) {
        if (left_flag_[ids[i]]) ids[l++] = ids[i];
        else scratch_[r++] = ids[i];
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(r),
                ids.begin() + static_cast<std::ptrdiff_t>(l));
    }
    const std::size_t mid = b + split.n_left;
    const std::uint32_t left = grow(tree, b, mid, depth + 1);
    const std::uint32_t right = grow(tree, mid, e, depth + 1);
    TreeNode& node = tree.nodes[index];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = right;
    return index;
  }

  const Matrix& x_;
  std::vector<std::vector<std::uint32_t>> sorted_;
  std::span<const double> y_;
  int max_depth_;
  std::size_t min_leaf_;
  bool gini_;
  std::vector<std::uint8_t> left_flag_;
  std::vector<std::uint32_t> scratch_;
};

inline TreeModel fit_tree(const Matrix& x, std::span<const double> y, const Hyperparameters& hp,
                          bool gini) {
  return TreeBuilder(x, TreeBuilder::presort(x), y, hp.max_depth, hp.min_leaf, gini).build();
}

inline BoostedModel fit_boosted(const Matrix& x, std::span<const double> y,
                                const Hyperparameters& hp) {
  BoostedModel model;
  model.learning_rate = hp.learning_rate;
  model.base = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const auto presorted = TreeBuilder::presort(x);
  std::vector<double> fitted(y.size(), model.base);
  std::vector<double> residual(y.size());
  for (int round = 0; round < hp.n_rounds; ++round) {
    for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - fitted[i];
    TreeModel tree =
        TreeBuilder(x, presorted, residual, hp.max_depth, hp.min_leaf, false).build();
    for (std::size_t i = 0; i < y.size(); ++i)
      fitted[i] += model.learning_rate * tree.predict(x.row(i));
    model.trees.push_back(std::move(tree));
  }
  return model;
}

inline Eigen::MatrixXd to_eigen(const Matrix& x) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(x.rows()), static_cast<Eigen::Index>(x.cols()));
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x(i, j);
  return m;
}

/// Least squares with an unpenalised intercept, solved on centred data.
inline LinearModel fit_ridge(const Matrix& x, std::span<const double> y, double lambda) {
  const Eigen::MatrixXd xm = to_eigen(x);
  const Eigen::VectorXd yv =
      Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));
  const Eigen::RowVectorXd mean_x = xm.colwise().mean();
  const double mean_y = yv.mean();
  const Eigen::MatrixXd xc = xm.rowwise() - mean_x;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd rhs = xc.transpose() * (yv.array() - mean_y).matrix();
  const Eigen::VectorXd w = gram.completeOrthogonalDecomposition().solve(rhs);
  LinearModel model;
  model.weights.assign(w.data(), w.data() + w.size());
  model.intercept = mean_y - mean_x.dot(w);
  return model;
}

/// Penalised logistic regression by Newton steps with step halving.
inline LinearModel fit_logistic(const Matrix& x, std::span<const double> y, double lambda) {
  const Eigen::Index n = static_cast<Eigen::Index>(x.rows());
  const Eigen::Index d = static_cast<Eigen::Index>(x.cols());
  Eigen::MatrixXd a(n, d + 1);
  a.leftCols(d) = to_eigen(x);
  a.col(d).setOnes();
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d + 1);

  auto objective = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd z = a * b;
    double nll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      // log(1 + exp(z)) - y z, evaluated without overflow
      const double zi = z(i);
      nll += (zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi))) - yv(i) * zi;
    }
    return nll + 0.5 * lambda * b.head(d).squaredNorm();
  };

  double current = objective(beta);
  for (int iter = 0; iter < 100; ++iter) {
    const Eigen::VectorXd z = a * beta;
    Eigen::VectorXd p(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = 1.0 / (1.0 + std::exp(-z(i)));
      w(i) = p(i) * (1.0 - p(i));
    }
    Eigen::VectorXd grad = a.transpose() * (yv - p);
    grad.head(d) -= lambda * beta.head(d);
    Eigen::MatrixXd hess = a.transpose() * w.asDiagonal() * a;
    hess.diagonal().head(d).array() += lambda;
    const Eigen::VectorXd step = hess.completeOrthogonalDecomposition().solve(grad);
    double scale = 1.0;
    Eigen::VectorXd next = beta + step;
    double value = objective(next);
    for (int h = 0; h < 30 && !(value <= current); ++h) {
      scale /= 2.0;
      next = beta + scale * step;
      value = objective(next);
    }
    if (!(value <= current)) break;
    const double moved = (scale * step).cwiseAbs().maxCoeff();
    beta = next;
    current = value;
    if (moved < 1e-10) break;
  }
  LinearModel model;
  model.logistic = true;
  model.weights.assign(beta.data(), beta.data() + d);
  model.intercept = beta(d);
  return model;
}

}  // namespace detail

// ---------------------------------------------------------------------------

class FittedModel {
 public:
  using Params = std::variant<TreeModel, BoostedModel, LinearModel, KnnModel>;

  FittedModel(LearnerSpec spec, std::size_t dim, Params params)
      : spec_(spec), dim_(dim), params_(std::move(params)) {}

  const LearnerSpec& spec() const noexcept { return spec_; }
  std::size_t dim() const noexcept { return dim_; }
  const Params& params() const noexcept { return params_; }

  double predict_row(std::span<const double> x) const {
    if (x.size() != dim_)
      throw Error(ErrorKind::DimensionMismatch, "feature width differs from training width");
    return std::visit([&](const auto& m) { return m.predict(x); }, params_);
  }

  std::vector<double> predict(const Matrix& features) const {
    if (features.cols() != dim_ && !features.empty())
      throw Error(ErrorKind::DimensionMismatch, "feature width differs from training width");
    std::vector<double> out(features.rows());
    for (std::size_t i = 0; i < features.rows(); ++i)
      out[i] = std::visit([&](const auto& m) { return m.predict(features.row(i)); }, params_);
    return out;
  }

 private:
  LearnerSpec spec_;
  std::size_t dim_;
  Params params_;
};

inline FittedModel fit(const LearnerSpec& spec, const Matrix& features,
                       std::span<const double> targets) {
  spec.validate();
  if (features.rows() == 0 || targets.empty()) throw Error(ErrorKind::EmptyData, "no training rows");
  if (features.cols() == 0) throw Error(ErrorKind::EmptyData, "no feature columns");
  if (features.rows() != targets.size())
    throw Error(ErrorKind::DimensionMismatch, "feature rows and target count differ");
  for (double t : targets) {
    if (!std::isfinite(t)) throw Error(ErrorKind::EmptyData, "non-finite target");
    if (is_classifier(spec.family) && t != 0.0 && t != 1.0)
      throw Error(ErrorKind::InvalidSpec, "classification targets must be 0 or 1");
  }
  const auto& hp = spec.hp;
  const std::size_t d = features.cols();
  switch (spec.family) {
    case Family::RegressionTree:
      return {spec, d, detail::fit_tree(features, targets, hp, false)};
    case Family::ClassificationTree:
      return {spec, d, detail::fit_tree(features, targets, hp, true)};
    case Family::GradientBoostedTrees:
      return {spec, d, detail::fit_boosted(features, targets, hp)};
    case Family::RidgeLinear:
      return {spec, d, detail::fit_ridge(features, targets, hp.lambda)};
    case Family::LogisticLinear:
      return {spec, d, detail::fit_logistic(features, targets, hp.lambda)};
    case Family::KnnRegressor:
    case Family::KnnClassifier:
      return {spec, d,
              KnnModel{features, std::vector<double>(targets.begin(), targets.end()), hp.k,
                       spec.family == Family::KnnClassifier}};
  }
  throw Error(ErrorKind::InvalidSpec, "unknown learner family");
}

inline std::vector<double> predict(const FittedModel& model, const Matrix& features) {
  return model.predict(features);
}

// ---------------------------------------------------------------------------
// Grids

/// 24 tree/boosting configurations plus two kNN regressors.
inline std::vector<LearnerSpec> default_regression_grid() {
  std::vector<LearnerSpec> grid;
  for (Family f : {Family::RegressionTree, Family::GradientBoostedTrees})
    for (int depth : {2, 4, 6})
      for (int rounds : {20, 50})
        for (double lr : {0.1, 0.3}) {
          LearnerSpec s{f, {}, 0};
          s.hp.max_depth = depth;
          s.hp.n_rounds = rounds;
          s.hp.learning_rate = lr;
          grid.push_back(s);
        }
  for (int k : {3, 10}) {
    LearnerSpec s{Family::KnnRegressor, {}, 0};
    s.hp.k = k;
    grid.push_back(s);
  }
  return grid;
}

inline std::vector<LearnerSpec> default_classification_grid() {
  std::vector<LearnerSpec> grid;
  for (int depth : {2, 4, 6, 8})
    for (int leaf : {1, 5, 20, 50}) {
      LearnerSpec s{Family::ClassificationTree, {}, 0};
      s.hp.max_depth = depth;
      s.hp.min_leaf = leaf;
      grid.push_back(s);
    }
  for (double lambda : {1e-3, 1e-2, 0.1, 1.0, 10.0, 100.0}) {
    LearnerSpec s{Family::LogisticLinear, {}, 0};
    s.hp.lambda = lambda;
    grid.push_back(s);
  }
  for (int k : {3, 10, 30, 50}) {
    LearnerSpec s{Family::KnnClassifier, {}, 0};
    s.hp.k = k;
    grid.push_back(s);
  }
  return grid;
}

/// Assessor families held fixed across every cell.
inline std::vector<LearnerSpec> default_assessor_families() {
  LearnerSpec gbt{Family::GradientBoostedTrees, {}, 0};
  gbt.hp.max_depth = 4;
  gbt.hp.min_leaf = 5;
  gbt.hp.n_rounds = 50;
  gbt.hp.learning_rate = 0.1;
  LearnerSpec ridge{Family::RidgeLinear, {}, 0};
  ridge.hp.lambda = 1.0;
  return {gbt, ridge};
}

}  // namespace assessor
