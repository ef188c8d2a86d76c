#pragma once

// Regression losses, binary proper scoring rules, and the closed-form maps
// between members of each monotonically related family.
//
// Losses are functions of the residual e = y_pred - y_true. Scores are
// functions of the principal r, the probability given to the observed class.

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>

#include "assessor/error.hpp"

namespace assessor {

enum class Task { Regression, Classification };

enum class Metric {
  SimpleSigned,
  SquaredSigned,
  LogisticSigned,
  SimpleUnsigned,
  SquaredUnsigned,
  LogisticUnsigned,
  LogScore,
  QuadScore,
  SphereScore,
};

/// Fixed report order for each task.
inline constexpr std::array<Metric, 6> kRegressionMetrics = {
    Metric::SimpleSigned,   Metric::SquaredSigned,   Metric::LogisticSigned,
    Metric::SimpleUnsigned, Metric::SquaredUnsigned, Metric::LogisticUnsigned};
inline constexpr std::array<Metric, 3> kClassificationMetrics = {
    Metric::LogScore, Metric::QuadScore, Metric::SphereScore};

/// Principals are clamped to [kPrincipalEpsilon, 1 - kPrincipalEpsilon].
inline constexpr double kPrincipalEpsilon = 1e-6;
/// Logistic loss values are clamped to |v| <= 1 - kLogisticDelta before inversion.
inline constexpr double kLogisticDelta = 1e-12;
/// Width of the band around 2 S_S^2 - 1 = 0 where the spherical inverse uses r = 1/2.
inline constexpr double kSphereSingularTol = 1e-9;

constexpr Task task_of(Metric m) {
  switch (m) {
    case Metric::LogScore:
    case Metric::QuadScore:
    case Metric::SphereScore:
      return Task::Classification;
    default:
      return Task::Regression;
  }
}

constexpr bool is_signed(Metric m) {
  return m == Metric::SimpleSigned || m == Metric::SquaredSigned || m == Metric::LogisticSigned;
}

constexpr bool is_logistic(Metric m) {
  return m == Metric::LogisticSigned || m == Metric::LogisticUnsigned;
}

/// Signed <-> unsigned counterpart of a regression loss; scores map to themselves.
constexpr Metric counterpart(Metric m) {
  switch (m) {
    case Metric::SimpleSigned: return Metric::SimpleUnsigned;
    case Metric::SquaredSigned: return Metric::SquaredUnsigned;
    case Metric::LogisticSigned: return Metric::LogisticUnsigned;
    case Metric::SimpleUnsigned: return Metric::SimpleSigned;
    case Metric::SquaredUnsigned: return Metric::SquaredSigned;
    case Metric::LogisticUnsigned: return Metric::LogisticSigned;
    default: return m;
  }
}

constexpr std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::SimpleSigned: return "SimpleSigned";
    case Metric::SquaredSigned: return "SquaredSigned";
    case Metric::LogisticSigned: return "LogisticSigned";
    case Metric::SimpleUnsigned: return "SimpleUnsigned";
    case Metric::SquaredUnsigned: return "SquaredUnsigned";
    case Metric::LogisticUnsigned: return "LogisticUnsigned";
    case Metric::LogScore: return "LogScore";
    case Metric::QuadScore: return "QuadScore";
    case Metric::SphereScore: return "SphereScore";
  }
  return "";
}

inline std::optional<Metric> parse_metric(std::string_view name) {
  for (Metric m : kRegressionMetrics)
    if (metric_name(m) == name) return m;
  for (Metric m : kClassificationMetrics)
    if (metric_name(m) == name) return m;
  return std::nullopt;
}

constexpr std::string_view task_name(Task t) {
  return t == Task::Regression ? "regression" : "classification";
}

inline std::optional<Task> parse_task(std::string_view name) {
  if (name == "regression" || name == "reg") return Task::Regression;
  if (name == "classification" || name == "clf") return Task::Classification;
  return std::nullopt;
}

inline std::span<const Metric> metrics_for(Task t) {
  if (t == Task::Regression) return kRegressionMetrics;
  return kClassificationMetrics;
}

/// Steepness of the logistic loss. Always finite and strictly positive.
class CalibrationB {
 public:
  explicit CalibrationB(double value) : value_(value) {
    if (!(std::isfinite(value) && value > 0.0))
      throw Error(ErrorKind::OutOfRange, "calibration B must be finite and positive");
  }
  double value() const noexcept { return value_; }
  friend bool operator==(const CalibrationB&, const CalibrationB&) = default;

 private:
  double value_;
};

/// B = ln 3 / mean |e|, so the logistic loss equals 0.5 at the mean absolute residual.
inline CalibrationB calibrate_b(std::span<const double> residuals) {
  if (residuals.empty()) throw Error(ErrorKind::EmptyInput, "no residuals to calibrate B");
  double sum = 0.0;
  for (double e : residuals) sum += std::abs(e);
  const double mean_abs = sum / static_cast<double>(residuals.size());
  if (!(mean_abs > 0.0))
    throw Error(ErrorKind::ZeroMeanResidual, "mean absolute residual is zero, B undefined");
  return CalibrationB(std::log(3.0) / mean_abs);
}

/// Probability assigned to the observed class, clamped away from 0 and 1.
class Principal {
 public:
  static Principal clamped(double r) {
    if (std::isnan(r)) throw Error(ErrorKind::OutOfRange, "principal is NaN");
    return Principal(std::clamp(r, kPrincipalEpsilon, 1.0 - kPrincipalEpsilon));
  }
  double value() const noexcept { return r_; }

 private:
  explicit Principal(double r) : r_(r) {}
  double r_;
};

inline Principal principal_of(double p_pos, int y_true) {
  if (!(p_pos >= 0.0 && p_pos <= 1.0))
    throw Error(ErrorKind::OutOfRange, "p_pos outside [0, 1]");
  if (y_true != 0 && y_true != 1) throw Error(ErrorKind::OutOfRange, "y_true must be 0 or 1");
  return Principal::clamped(y_true == 1 ? p_pos : 1.0 - p_pos);
}

// ---------------------------------------------------------------------------
// Losses

namespace detail {

inline double require_b(Metric m, const std::optional<CalibrationB>& b) {
  if (!b)
    throw Error(ErrorKind::MissingCalibration,
                std::string(metric_name(m)) + " needs a calibration B");
  return b->value();
}

inline void require_regression(Metric m) {
  if (task_of(m) != Task::Regression)
    throw Error(ErrorKind::TaskMismatch, std::string(metric_name(m)) + " is not a regression loss");
}

inline void require_score(Metric m) {
  if (task_of(m) != Task::Classification)
    throw Error(ErrorKind::TaskMismatch, std::string(metric_name(m)) + " is not a scoring rule");
}

}  // namespace detail

/// Loss as a function of the residual e = y_pred - y_true.
inline double loss_of_residual(Metric m, double e, const std::optional<CalibrationB>& b = {}) {
  detail::require_regression(m);
  switch (m) {
    case Metric::SimpleSigned: return e;
    case Metric::SquaredSigned: return e * std::abs(e);
    // 2 / (1 + exp(-B e)) - 1 == tanh(B e / 2)
    case Metric::LogisticSigned: return std::tanh(detail::require_b(m, b) * e / 2.0);
    case Metric::SimpleUnsigned: return std::abs(e);
    case Metric::SquaredUnsigned: return e * e;
    case Metric::LogisticUnsigned: return std::abs(std::tanh(detail::require_b(m, b) * e / 2.0));
    default: break;
  }
  return 0.0;
}

inline double eval_loss(Metric m, double y_pred, double y_true,
                        const std::optional<CalibrationB>& b = {}) {
  return loss_of_residual(m, y_pred - y_true, b);
}

/// Residual recovered from a loss value: e for signed losses, |e| for unsigned ones.
/// Values are first clamped into the loss's attainable range.
inline double residual_of_loss(Metric m, double value, const std::optional<CalibrationB>& b = {}) {
  detail::require_regression(m);
  switch (m) {
    case Metric::SimpleSigned: return value;
    case Metric::SquaredSigned: return std::copysign(std::sqrt(std::abs(value)), value);
    case Metric::LogisticSigned: {
      const double v = std::clamp(value, -1.0 + kLogisticDelta, 1.0 - kLogisticDelta);
      return 2.0 * std::atanh(v) / detail::require_b(m, b);
    }
    case Metric::SimpleUnsigned: return std::max(value, 0.0);
    case Metric::SquaredUnsigned: return std::sqrt(std::max(value, 0.0));
    case Metric::LogisticUnsigned: {
      const double v = std::clamp(value, 0.0, 1.0 - kLogisticDelta);
      return 2.0 * std::atanh(v) / detail::require_b(m, b);
    }
    default: break;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Scores

inline double score_of_principal(Metric m, double r) {
  detail::require_score(m);
  switch (m) {
    case Metric::LogScore: return std::log(r);
    case Metric::QuadScore: return -(2.0 * r * r - 4.0 * r + 1.0);
    case Metric::SphereScore: return r / std::sqrt(2.0 * r * r - 2.0 * r + 1.0);
    default: break;
  }
  return 0.0;
}

inline double eval_score(Metric m, Principal r) { return score_of_principal(m, r.value()); }

/// Raw-probability overload; rejects anything outside (0, 1).
inline double eval_score(Metric m, double r) {
  if (!(r > 0.0 && r < 1.0)) throw Error(ErrorKind::OutOfRange, "principal outside (0, 1)");
  return score_of_principal(m, r);
}

/// Range of a score over clamped principals.
inline std::pair<double, double> attainable_score_range(Metric m) {
  return {score_of_principal(m, kPrincipalEpsilon), score_of_principal(m, 1.0 - kPrincipalEpsilon)};
}

inline double principal_from_log_score(double s) { return std::exp(s); }

/// Negative branch of r = 1 +- sqrt(2 - 2 S_Q) / 2; the positive branch leaves [0, 1].
inline double principal_from_quad_score(double s) { return 1.0 - std::sqrt(2.0 - 2.0 * s) / 2.0; }

/// Negative branch of r = (S^2 +- sqrt(S^2 - S^4)) / (2 S^2 - 1).
///
/// Multiplying through by the conjugate gives r = S / (S + sqrt(1 - S^2)), which
/// has no cancellation near r = 1/2. Inside the singular band the limit 1/2 is
/// returned exactly.
inline double principal_from_sphere_score(double s) {
  if (std::abs(2.0 * s * s - 1.0) < kSphereSingularTol) return 0.5;
  const double c = std::sqrt(std::max((1.0 - s) * (1.0 + s), 0.0));
  return s / (s + c);
}

/// Inverse of a score after clamping the value into its attainable range.
inline double principal_of_score(Metric m, double value) {
  detail::require_score(m);
  const auto [lo, hi] = attainable_score_range(m);
  const double v = std::clamp(value, lo, hi);
  switch (m) {
    case Metric::LogScore: return principal_from_log_score(v);
    case Metric::QuadScore: return principal_from_quad_score(v);
    case Metric::SphereScore: return principal_from_sphere_score(v);
    default: break;
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// Transformations

struct TransformSpec {
  Metric from;
  Metric to;
  std::optional<CalibrationB> b;
};

/// A map from -> to exists within a monotonic family, or from a signed loss
/// to an unsigned one. Unsigned -> signed loses the direction and is rejected.
constexpr bool transform_exists(Metric from, Metric to) {
  if (task_of(from) != task_of(to)) return false;
  if (task_of(from) == Task::Classification) return true;
  return !(!is_signed(from) && is_signed(to));
}

/// Direction-preserving maps (everything except signed -> unsigned) are strictly increasing.
constexpr bool transform_is_monotone(Metric from, Metric to) {
  return transform_exists(from, to) && !(is_signed(from) && !is_signed(to));
}

inline double transform_score(const TransformSpec& spec, double value) {
  if (task_of(spec.from) != Task::Classification || task_of(spec.to) != Task::Classification)
    throw Error(ErrorKind::IncompatiblePair, "score transform needs two scoring rules");
  if (spec.from == spec.to) return value;
  return score_of_principal(spec.to, principal_of_score(spec.from, value));
}

inline double transform_loss(const TransformSpec& spec, double value) {
  if (task_of(spec.from) != Task::Regression || task_of(spec.to) != Task::Regression)
    throw Error(ErrorKind::IncompatiblePair, "loss transform needs two regression losses");
  if (!transform_exists(spec.from, spec.to))
    throw Error(ErrorKind::IncompatiblePair,
                std::string(metric_name(spec.from)) + " -> " + std::string(metric_name(spec.to)) +
                    " would need the sign an unsigned loss has lost");
  if ((is_logistic(spec.from) || is_logistic(spec.to)) && !spec.b)
    throw Error(ErrorKind::MissingCalibration, "logistic transform needs a calibration B");
  if (spec.from == spec.to) return value;
  return loss_of_residual(spec.to, residual_of_loss(spec.from, value, spec.b), spec.b);
}

inline double transform(const TransformSpec& spec, double value) {
  if (task_of(spec.from) == Task::Classification) return transform_score(spec, value);
  return transform_loss(spec, value);
}

}  // namespace assessor
