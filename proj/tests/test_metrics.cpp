#include "assessor/metrics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

namespace assessor {
namespace {

constexpr double kEps = kPrincipalEpsilon;

// Closed forms written out term by term, independent of the inverse-then-evaluate
// route the library takes. Valid away from the spherical singular point.
namespace closed_form {

double sphere_from_log(double sl) {
  return std::exp(sl) / std::sqrt(2 * std::exp(2 * sl) - 2 * std::exp(sl) + 1);
}
double quad_from_log(double sl) { return -(2 * std::exp(2 * sl) - 4 * std::exp(sl) + 1); }
double quad_from_sphere(double ss) {
  const double num = ss * ss - std::sqrt(ss * ss - std::pow(ss, 4));
  const double den = 2 * ss * ss - 1;
  return 4 * num / den - 2 * num * num / (den * den) - 1;
}
double sphere_from_quad(double sq) {
  return (2 - std::sqrt(2 - 2 * sq)) / (2 * std::sqrt(2 - sq - std::sqrt(2 - 2 * sq)));
}
double log_from_quad(double sq) { return std::log(1 - std::sqrt(2 - 2 * sq) / 2); }
double log_from_sphere(double ss) {
  return std::log((ss * ss - std::sqrt(ss * ss - std::pow(ss, 4))) / (2 * ss * ss - 1));
}

}  // namespace closed_form

TEST(CalibrateB, HandEvaluatedExamples) {
  const std::vector<double> mixed{1, -1, 2, -2};
  EXPECT_NEAR(calibrate_b(mixed).value(), std::log(3.0) / 1.5, 1e-15);
  EXPECT_NEAR(calibrate_b(mixed).value(), 0.732408, 1e-6);
  const std::vector<double> ones{1, 1, 1};
  EXPECT_NEAR(calibrate_b(ones).value(), 1.098612, 1e-6);
}

TEST(CalibrateB, Errors) {
  const std::vector<double> zeros{0, 0};
  try {
    calibrate_b(zeros);
    FAIL() << "expected ZeroMeanResidual";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroMeanResidual);
  }
  try {
    calibrate_b(std::vector<double>{});
    FAIL() << "expected EmptyInput";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
  }
  EXPECT_THROW(CalibrationB(0.0), Error);
  EXPECT_THROW(CalibrationB(-1.0), Error);
}

TEST(EvalLoss, Examples) {
  const CalibrationB ln3(std::log(3.0));
  EXPECT_EQ(eval_loss(Metric::SimpleSigned, 3, 5), -2);
  EXPECT_EQ(eval_loss(Metric::SquaredSigned, 1, 4), -9);
  EXPECT_NEAR(eval_loss(Metric::LogisticSigned, 2, 1, ln3), 0.5, 1e-15);
  EXPECT_NEAR(eval_loss(Metric::LogisticSigned, 1, 2, ln3), -0.5, 1e-15);
  EXPECT_NEAR(eval_loss(Metric::LogisticUnsigned, 1, 2, ln3), 0.5, 1e-15);
  EXPECT_EQ(eval_loss(Metric::SquaredUnsigned, 1, 4), 9);
  for (Metric m : kRegressionMetrics) EXPECT_EQ(eval_loss(m, 7.25, 7.25, ln3), 0.0);
}

TEST(EvalLoss, LogisticMatchesLiteralDefinition) {
  const CalibrationB b(0.7);
  for (double e = -8; e <= 8; e += 0.25) {
    const double literal = 2.0 / (1.0 + std::exp(-0.7 * e)) - 1.0;
    EXPECT_NEAR(loss_of_residual(Metric::LogisticSigned, e, b), literal, 1e-15);
  }
}

TEST(EvalLoss, MissingCalibration) {
  try {
    eval_loss(Metric::LogisticUnsigned, 1, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingCalibration);
  }
  EXPECT_NO_THROW(eval_loss(Metric::SquaredSigned, 1, 0));
}

TEST(EvalScore, Examples) {
  EXPECT_NEAR(eval_score(Metric::LogScore, Principal::clamped(1.0)), 0.0, 2e-6);
  EXPECT_EQ(score_of_principal(Metric::LogScore, 1.0), 0.0);
  EXPECT_NEAR(eval_score(Metric::QuadScore, 0.8), 0.92, 1e-15);
  EXPECT_NEAR(eval_score(Metric::SphereScore, 0.5), 1.0 / std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(eval_score(Metric::SphereScore, 0.5), 0.707107, 1e-6);
}

TEST(EvalScore, QuadraticMatchesVectorDefinition) {
  // 2 r - r.r with r = (r, 1 - r)
  for (double r = 0.05; r < 1; r += 0.05)
    EXPECT_NEAR(eval_score(Metric::QuadScore, r), 2 * r - (r * r + (1 - r) * (1 - r)), 1e-15);
}

TEST(EvalScore, RejectsOutOfRange) {
  for (double r : {0.0, 1.0, -0.1, 1.5}) {
    try {
      eval_score(Metric::QuadScore, r);
      FAIL() << r;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::OutOfRange);
    }
  }
}

TEST(PrincipalOf, Examples) {
  EXPECT_EQ(principal_of(0.9, 1).value(), 0.9);
  EXPECT_NEAR(principal_of(0.9, 0).value(), 0.1, 1e-15);
  EXPECT_EQ(principal_of(1.0, 1).value(), 1.0 - kEps);
  EXPECT_EQ(principal_of(1.0, 0).value(), kEps);
  EXPECT_THROW(principal_of(1.2, 1), Error);
  EXPECT_THROW(principal_of(-0.01, 0), Error);
  EXPECT_THROW(principal_of(0.5, 2), Error);
}

TEST(TransformScore, Examples) {
  EXPECT_NEAR(transform_score({Metric::LogScore, Metric::QuadScore, {}}, std::log(0.8)), 0.92,
              1e-12);
  EXPECT_NEAR(transform_score({Metric::LogScore, Metric::QuadScore, {}}, -0.223144), 0.92, 1e-6);
  EXPECT_NEAR(transform_score({Metric::QuadScore, Metric::SphereScore, {}}, 1.0), 1.0, 1e-11);
  EXPECT_NEAR(transform_score({Metric::SphereScore, Metric::LogScore, {}}, 0.7071068),
              std::log(0.5), 1e-6);
  EXPECT_EQ(transform_score({Metric::SphereScore, Metric::LogScore, {}}, 1.0 / std::sqrt(2.0)),
            std::log(0.5));
}

TEST(TransformScore, IncompatiblePair) {
  try {
    transform_score({Metric::LogScore, Metric::SimpleSigned, {}}, -0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IncompatiblePair);
  }
}

TEST(TransformScore, ClampsUnattainableValues) {
  // An assessor can predict S_Q > 1 or S_S > 1; they map to the perfect-prediction end.
  const double q = transform_score({Metric::QuadScore, Metric::LogScore, {}}, 1.3);
  EXPECT_NEAR(q, std::log(1 - kEps), 1e-10);
  const double s = transform_score({Metric::SphereScore, Metric::QuadScore, {}}, -4.0);
  EXPECT_NEAR(s, score_of_principal(Metric::QuadScore, kEps), 1e-12);
  EXPECT_TRUE(std::isfinite(transform_score({Metric::LogScore, Metric::SphereScore, {}}, -1e9)));
}

TEST(TransformScore, AgreesWithClosedForms) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> lower(0.01, 0.49), upper(0.51, 0.99);
  for (int i = 0; i < 2000; ++i) {
    const double r = (i % 2 == 0) ? lower(rng) : upper(rng);
    const double sl = std::log(r);
    const double sq = score_of_principal(Metric::QuadScore, r);
    const double ss = score_of_principal(Metric::SphereScore, r);
    EXPECT_NEAR(transform_score({Metric::LogScore, Metric::SphereScore, {}}, sl),
                closed_form::sphere_from_log(sl), 1e-9);
    EXPECT_NEAR(transform_score({Metric::LogScore, Metric::QuadScore, {}}, sl),
                closed_form::quad_from_log(sl), 1e-9);
    EXPECT_NEAR(transform_score({Metric::SphereScore, Metric::QuadScore, {}}, ss),
                closed_form::quad_from_sphere(ss), 1e-9);
    EXPECT_NEAR(transform_score({Metric::QuadScore, Metric::SphereScore, {}}, sq),
                closed_form::sphere_from_quad(sq), 1e-9);
    EXPECT_NEAR(transform_score({Metric::QuadScore, Metric::LogScore, {}}, sq),
                closed_form::log_from_quad(sq), 1e-9);
    EXPECT_NEAR(transform_score({Metric::SphereScore, Metric::LogScore, {}}, ss),
                closed_form::log_from_sphere(ss), 1e-9);
  }
}

TEST(TransformScore, ForwardConsistencyAllPairs) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> unif(kEps, 1 - kEps);
  double worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const double r = unif(rng);
    for (Metric a : kClassificationMetrics)
      for (Metric b : kClassificationMetrics) {
        if (a == b) continue;
        const double got = transform_score({a, b, {}}, score_of_principal(a, r));
        worst = std::max(worst, std::abs(got - score_of_principal(b, r)));
      }
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(TransformScore, RoundTripRecoversPrincipal) {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> unif(kEps, 1 - kEps);
  for (int i = 0; i < 10000; ++i) {
    const double r = unif(rng);
    for (Metric m : kClassificationMetrics) {
      if (m == Metric::SphereScore && std::abs(r - 0.5) < 0.5e-6) continue;
      ASSERT_NEAR(principal_of_score(m, score_of_principal(m, r)), r, 1e-8)
          << metric_name(m) << " r=" << r;
    }
  }
}

TEST(TransformScore, SphericalSingularLimit) {
  EXPECT_EQ(principal_from_sphere_score(1.0 / std::sqrt(2.0)), 0.5);
  EXPECT_EQ(principal_from_sphere_score(std::sqrt(0.5) + 1e-11), 0.5);
  // Just outside the band the regular branch takes over and stays continuous.
  const double s = std::sqrt(0.5 + 1e-9);
  EXPECT_NEAR(principal_from_sphere_score(s), 0.5, 1e-9);
}

TEST(TransformScore, NegativeBranchesStayInUnitInterval) {
  for (int i = 0; i <= 10000; ++i) {
    const double sq = -1.0 + 2.0 * i / 10000.0;
    const double neg = principal_from_quad_score(sq);
    EXPECT_GE(neg, 0.0);
    EXPECT_LE(neg, 1.0);
    const double ss = i / 10000.0;
    const double r = principal_from_sphere_score(ss);
    EXPECT_GE(r, 0.0);
    EXPECT_LE(r, 1.0);
  }
  // The discarded positive branches leave [0, 1].
  EXPECT_EQ(1.0 + std::sqrt(2.0 - 2.0 * -1.0) / 2.0, 2.0);
  const double ss = 0.9;
  const double pos = (ss * ss + std::sqrt(ss * ss - std::pow(ss, 4))) / (2 * ss * ss - 1);
  EXPECT_GT(pos, 1.0);
}

TEST(TransformLoss, Examples) {
  const CalibrationB ln3(std::log(3.0));
  EXPECT_EQ(transform_loss({Metric::SimpleSigned, Metric::SquaredSigned, {}}, -2), -4);
  EXPECT_NEAR(transform_loss({Metric::LogisticSigned, Metric::SimpleSigned, ln3}, 0.5), 1.0,
              1e-14);
  EXPECT_EQ(transform_loss({Metric::SimpleSigned, Metric::SimpleUnsigned, {}}, -3), 3);
  EXPECT_EQ(transform_loss({Metric::SquaredUnsigned, Metric::SimpleUnsigned, {}}, 16), 4);
  EXPECT_EQ(transform_loss({Metric::SimpleUnsigned, Metric::SquaredUnsigned, {}}, 3), 9);
}

TEST(TransformLoss, LogisticInverseMatchesLiteralLogRatio) {
  const CalibrationB b(1.7);
  for (double v = -0.95; v < 0.96; v += 0.05) {
    const double literal = std::log((1 + v) / (1 - v)) / 1.7;
    EXPECT_NEAR(transform_loss({Metric::LogisticSigned, Metric::SimpleSigned, b}, v), literal,
                1e-14);
  }
}

TEST(TransformLoss, Errors) {
  try {
    transform_loss({Metric::SimpleUnsigned, Metric::SimpleSigned, {}}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IncompatiblePair);
  }
  try {
    transform_loss({Metric::SimpleSigned, Metric::LogisticUnsigned, {}}, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingCalibration);
  }
  EXPECT_THROW(transform_loss({Metric::LogScore, Metric::SimpleSigned, {}}, 1.0), Error);
}

TEST(TransformLoss, SaturatedLogisticIsClamped) {
  const CalibrationB b(2.0);
  const double bound = 2.0 * std::atanh(1.0 - kLogisticDelta) / 2.0;
  const double up = transform_loss({Metric::LogisticSigned, Metric::SimpleSigned, b}, 1.0);
  const double down = transform_loss({Metric::LogisticSigned, Metric::SimpleSigned, b}, -1.5);
  EXPECT_TRUE(std::isfinite(up));
  EXPECT_NEAR(up, bound, 1e-12);
  EXPECT_NEAR(down, -bound, 1e-12);
  EXPECT_EQ(transform_loss({Metric::LogisticUnsigned, Metric::SimpleUnsigned, b}, -0.2), 0.0);
  EXPECT_EQ(transform_loss({Metric::SquaredUnsigned, Metric::SimpleUnsigned, {}}, -4.0), 0.0);
}

// Pairs whose logistic source is still resolvable in double precision.
TEST(TransformLoss, ForwardConsistencyAllValidPairs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(-10, 10);
  for (double bval : {0.1, std::log(3.0), 5.0}) {
    const CalibrationB b(bval);
    for (int i = 0; i < 10000; ++i) {
      const double e = unif(rng);
      for (Metric from : kRegressionMetrics)
        for (Metric to : kRegressionMetrics) {
          if (!transform_exists(from, to)) continue;
          const double v = loss_of_residual(from, e, b);
          if (is_logistic(from) && 1.0 - std::abs(v) < 1e-6) continue;
          ASSERT_NEAR(transform_loss({from, to, b}, v), loss_of_residual(to, e, b), 1e-9)
              << metric_name(from) << "->" << metric_name(to) << " e=" << e << " B=" << bval;
        }
    }
  }
}

TEST(Monotonicity, ScoresIncreaseInPrincipal) {
  for (Metric m : kClassificationMetrics) {
    double prev = -INFINITY;
    for (int i = 0; i <= 10000; ++i) {
      const double r = kEps + (1 - 2 * kEps) * i / 10000.0;
      const double s = score_of_principal(m, r);
      ASSERT_GT(s, prev) << metric_name(m) << " r=" << r;
      prev = s;
    }
  }
}

TEST(Monotonicity, LossesIncreaseInResidual) {
  for (double bval : {0.1, std::log(3.0)}) {
    const CalibrationB b(bval);
    for (Metric m : kRegressionMetrics) {
      double prev = -INFINITY;
      for (int i = 0; i <= 10000; ++i) {
        const double t = 10.0 * i / 10000.0;
        // signed losses over e in [-10, 10], unsigned over |e| in [0, 10]
        const double e = is_signed(m) ? -10.0 + 2 * t : t;
        const double v = loss_of_residual(m, e, b);
        ASSERT_GT(v, prev) << metric_name(m) << " e=" << e;
        prev = v;
      }
    }
  }
}

TEST(Ranges, SignsAndBounds) {
  const CalibrationB b(std::log(3.0));
  for (double e = -50; e <= 50; e += 0.125) {
    const double n = loss_of_residual(Metric::SimpleSigned, e, b);
    const double s = loss_of_residual(Metric::SquaredSigned, e, b);
    const double l = loss_of_residual(Metric::LogisticSigned, e, b);
    EXPECT_LE(std::abs(l), 1.0);
    EXPECT_EQ((n > 0) - (n < 0), (s > 0) - (s < 0));
    EXPECT_EQ((n > 0) - (n < 0), (l > 0) - (l < 0));
    EXPECT_GE(loss_of_residual(Metric::LogisticUnsigned, e, b), 0.0);
  }
  for (int i = 0; i <= 1000; ++i) {
    const double r = kEps + (1 - 2 * kEps) * i / 1000.0;
    const double q = score_of_principal(Metric::QuadScore, r);
    const double s = score_of_principal(Metric::SphereScore, r);
    EXPECT_GE(q, -1.0);
    EXPECT_LE(q, 1.0);
    EXPECT_GT(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(TransformRules, ExistenceTable) {
  int regression_pairs = 0;
  for (Metric a : kRegressionMetrics)
    for (Metric b : kRegressionMetrics) regression_pairs += transform_exists(a, b);
  EXPECT_EQ(regression_pairs, 36 - 9);
  for (Metric a : kClassificationMetrics)
    for (Metric b : kClassificationMetrics) EXPECT_TRUE(transform_exists(a, b));
  EXPECT_FALSE(transform_exists(Metric::LogScore, Metric::SimpleSigned));
  EXPECT_FALSE(transform_is_monotone(Metric::SquaredSigned, Metric::SquaredUnsigned));
  EXPECT_TRUE(transform_is_monotone(Metric::SquaredUnsigned, Metric::LogisticUnsigned));
}

TEST(MetricNames, RoundTrip) {
  for (Metric m : kRegressionMetrics) EXPECT_EQ(parse_metric(metric_name(m)), m);
  for (Metric m : kClassificationMetrics) EXPECT_EQ(parse_metric(metric_name(m)), m);
  EXPECT_FALSE(parse_metric("HuberLoss").has_value());
}

}  // namespace
}  // namespace assessor
