#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "fieldest/field.hpp"

using namespace fieldest;

namespace {

const FieldParams kRef = FieldParams::reference();

// Exact integral of exp(-(x-c)^2 / rho^2) over [a, b].
double gauss_sq_1d(double a, double b, double c, double rho) {
  return 0.5 * rho * std::sqrt(std::numbers::pi) * (std::erf((b - c) / rho) - std::erf((a - c) / rho));
}

double exact_squared_integral(const FieldParams& p, const Area& a) {
  return p.h() * p.h() * gauss_sq_1d(a.x_min(), a.x_max(), p.x_c(), p.rho_x()) *
         gauss_sq_1d(a.y_min(), a.y_max(), p.y_c(), p.rho_y());
}

ParamVector random_theta(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> h(0.5, 12.0), rho(0.7, 4.0), c(-1.0, 9.0);
  ParamVector t;
  t << h(rng), rho(rng), rho(rng), c(rng), c(rng);
  return t;
}

}  // namespace

TEST(FieldParams, RejectsNonPositiveSpread) {
  EXPECT_THROW(FieldParams(8, 0.0, 2, 4, 4), std::invalid_argument);
  EXPECT_THROW(FieldParams(8, 2, -1.0, 4, 4), std::invalid_argument);
  EXPECT_NO_THROW(FieldParams(0.0, 2, 2, 4, 4));
}

TEST(FieldParams, VectorRoundTripKeepsOrder) {
  const FieldParams p(1, 2, 3, 4, 5);
  const ParamVector v = p.to_vector();
  EXPECT_EQ(v[kH], 1);
  EXPECT_EQ(v[kRhoX], 2);
  EXPECT_EQ(v[kRhoY], 3);
  EXPECT_EQ(v[kXc], 4);
  EXPECT_EQ(v[kYc], 5);
  EXPECT_EQ(FieldParams::from_vector(v), p);
}

TEST(Area, RejectsEmptyRectangle) {
  EXPECT_THROW(Area(0, 0, 0, 1), std::invalid_argument);
  EXPECT_THROW(Area(0, 1, 2, 1), std::invalid_argument);
  EXPECT_DOUBLE_EQ(Area::square(8).measure(), 64.0);
}

TEST(FieldValue, PeakEqualsStrength) { EXPECT_DOUBLE_EQ(field_value(kRef, 4, 4), 8.0); }

TEST(FieldValue, OneSpreadOffset) { EXPECT_NEAR(field_value(kRef, 6, 4), 8.0 * std::exp(-0.5), 1e-15); }

TEST(FieldValue, DecaysFarAway) { EXPECT_LT(field_value(kRef, 24, 4), 1e-20); }

TEST(FieldGradient, PeakGradientIsUnitInH) {
  const ParamVector g = field_gradient(kRef, 4, 4);
  EXPECT_DOUBLE_EQ(g[kH], 1.0);
  for (int i = 1; i < kNumParams; ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(FieldGradient, ZeroStrengthLeavesOnlyH) {
  const FieldParams p(0.0, 2, 2, 4, 4);
  const ParamVector g = field_gradient(p, 5, 3);
  EXPECT_NEAR(g[kH], std::exp(-0.125 - 0.125), 1e-15);
  for (int i = 1; i < kNumParams; ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(FieldGradient, CentreDerivativeMatchesFiniteDifference) {
  const double x = 4 + 2, y = 4;
  const double step = 1e-5;
  const double fd = (field_value(FieldParams(8, 2, 2, 4 + step, 4), x, y) -
                     field_value(FieldParams(8, 2, 2, 4 - step, 4), x, y)) /
                    (2 * step);
  const double an = field_gradient(kRef, x, y)[kXc];
  EXPECT_NEAR(an, field_value(kRef, x, y) / 2.0, 1e-14);
  EXPECT_LT(std::abs(an - fd) / std::abs(an), 1e-6);
}

TEST(FieldHessian, LinearInStrengthAndSymmetric) {
  std::mt19937_64 rng(3);
  for (int n = 0; n < 20; ++n) {
    const FieldParams p = FieldParams::from_vector(random_theta(rng));
    const ParamMatrix h = field_hessian_theta(p, 1.5, 6.0);
    EXPECT_EQ(h(kH, kH), 0.0);
    EXPECT_EQ((h - h.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(FieldHessian, MatchesSecondOrderFiniteDifferences) {
  const double x = 5.3, y = 2.9;
  const ParamVector t = kRef.to_vector();
  const ParamMatrix h = field_hessian_theta(kRef, x, y);
  const double step = 1e-4;
  GaussianBell model;
  for (int s = 0; s < kNumParams; ++s) {
    for (int u = 0; u < kNumParams; ++u) {
      auto at = [&](double ds, double du) {
        ParamVector q = t;
        q[s] += ds;
        q[u] += du;
        return model.value(q, x, y);
      };
      const double fd = (at(step, step) - at(step, -step) - at(-step, step) + at(-step, -step)) / (4 * step * step);
      if (std::abs(h(s, u)) < 1e-8) {
        EXPECT_NEAR(fd, 0.0, 1e-6);
      } else {
        EXPECT_LT(std::abs(fd - h(s, u)) / std::abs(h(s, u)), 1e-4) << s << "," << u;
      }
    }
  }
}

// Property: analytic derivatives agree with central differences at random
// points and parameters.
TEST(FieldProperties, DerivativesMatchFiniteDifferencesEverywhere) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> pos(0.0, 8.0);
  GaussianBell model;
  for (int n = 0; n < 20; ++n) {
    const ParamVector t = random_theta(rng);
    const double x = pos(rng), y = pos(rng);
    const ParamVector g = model.gradient(t, x, y);
    const ParamMatrix h = model.hessian(t, x, y);
    for (int s = 0; s < kNumParams; ++s) {
      const double step = 1e-6 * std::max(1.0, std::abs(t[s]));
      ParamVector hi = t, lo = t;
      hi[s] += step;
      lo[s] -= step;
      const double fd = (model.value(hi, x, y) - model.value(lo, x, y)) / (2 * step);
      const double scale = std::max(std::abs(g[s]), 1e-3 * std::max(1e-12, g.cwiseAbs().maxCoeff()));
      EXPECT_LT(std::abs(fd - g[s]) / scale, 1e-5) << "grad " << s;
      const ParamVector fd_row = (model.gradient(hi, x, y) - model.gradient(lo, x, y)) / (2 * step);
      const double hscale = std::max(h.cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((fd_row - h.col(s)).cwiseAbs().maxCoeff() / hscale, 1e-3) << "hess " << s;
    }
  }
}

TEST(FieldProperties, TranslationInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int n = 0; n < 20; ++n) {
    const double dx = d(rng), dy = d(rng);
    const FieldParams moved(8, 2, 2.5, 4 + dx, 4 + dy);
    EXPECT_NEAR(field_value(FieldParams(8, 2, 2.5, 4, 4), 3.1, 5.2), field_value(moved, 3.1 + dx, 5.2 + dy), 1e-13);
  }
}

TEST(FieldProperties, AxisSwapSymmetryForEqualSpreads) {
  const FieldParams p(7, 1.7, 1.7, 2.5, 5.5);
  const FieldParams swapped(7, 1.7, 1.7, 5.5, 2.5);
  EXPECT_NEAR(field_value(p, 1.0, 6.0), field_value(swapped, 6.0, 1.0), 1e-15);
}

TEST(FieldSquaredIntegral, ZeroStrengthGivesZero) {
  GaussianBell model;
  EXPECT_EQ(field_squared_integral(model, FieldParams(0, 2, 2, 4, 4), Area::square(8)), 0.0);
}

TEST(FieldSquaredIntegral, QuadraticInStrength) {
  GaussianBell model;
  const double a = field_squared_integral(model, FieldParams(4, 2, 2, 4, 4), Area::square(8));
  const double b = field_squared_integral(model, FieldParams(8, 2, 2, 4, 4), Area::square(8));
  EXPECT_NEAR(b / a, 4.0, 1e-13);
}

TEST(FieldSquaredIntegral, GridRefinementAndExactValue) {
  GaussianBell model;
  const double coarse = field_squared_integral(model, kRef, Area::square(8), 201);
  const double fine = field_squared_integral(model, kRef, Area::square(8), 401);
  EXPECT_LT(std::abs(coarse - fine) / fine, 1e-8);
  EXPECT_LT(std::abs(fine - exact_squared_integral(kRef, Area::square(8))) / fine, 1e-10);
  const FieldParams off(5, 1.3, 2.7, 1.0, 6.5);
  EXPECT_LT(std::abs(field_squared_integral(model, off, Area::square(8)) - exact_squared_integral(off, Area::square(8))) /
                exact_squared_integral(off, Area::square(8)),
            1e-7);
}

TEST(FieldSquaredIntegral, RejectsBadGrid) {
  GaussianBell model;
  EXPECT_THROW(field_squared_integral(model, kRef, Area::square(8), 200), std::invalid_argument);
  EXPECT_THROW(field_squared_integral(model, kRef, Area::square(8), 9), std::invalid_argument);
}
