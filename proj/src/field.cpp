#include "fieldest/field.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fieldest {

FieldParams::FieldParams(double h, double rho_x, double rho_y, double x_c, double y_c)
    : h_(h), rho_x_(rho_x), rho_y_(rho_y), x_c_(x_c), y_c_(y_c) {
  if (!std::isfinite(h) || !std::isfinite(rho_x) || !std::isfinite(rho_y) || !std::isfinite(x_c) ||
      !std::isfinite(y_c)) {
    throw std::invalid_argument("FieldParams: non-finite parameter");
  }
  if (!(rho_x > 0.0) || !(rho_y > 0.0)) {
    throw std::invalid_argument("FieldParams: spreads must be positive (rho_x=" + std::to_string(rho_x) +
                                ", rho_y=" + std::to_string(rho_y) + ")");
  }
}

FieldParams FieldParams::from_vector(const ParamVector& t) { return {t[kH], t[kRhoX], t[kRhoY], t[kXc], t[kYc]}; }

ParamVector FieldParams::to_vector() const {
  ParamVector t;
  t << h_, rho_x_, rho_y_, x_c_, y_c_;
  return t;
}

Area::Area(double x_min, double x_max, double y_min, double y_max)
    : x_min_(x_min), x_max_(x_max), y_min_(y_min), y_max_(y_max) {
  if (!(x_max > x_min) || !(y_max > y_min) || !std::isfinite(x_min) || !std::isfinite(x_max) ||
      !std::isfinite(y_min) || !std::isfinite(y_max)) {
    throw std::invalid_argument("Area: bounds must be finite with max > min");
  }
}

namespace {

// Everything the bell's derivatives are built from. The non-h gradient
// entries are G * c[i]; c[0] is unused.
struct BellTerms {
  double e;  // exp(-u)
  double g;  // h * e
  double dx, dy, rx, ry;
  std::array<double, kNumParams> c;
};

BellTerms bell_terms(const ParamVector& t, double x, double y) {
  BellTerms b{};
  b.rx = t[kRhoX];
  b.ry = t[kRhoY];
  b.dx = x - t[kXc];
  b.dy = y - t[kYc];
  const double rx2 = b.rx * b.rx;
  const double ry2 = b.ry * b.ry;
  b.e = std::exp(-(b.dx * b.dx / (2.0 * rx2) + b.dy * b.dy / (2.0 * ry2)));
  b.g = t[kH] * b.e;
  b.c = {0.0, b.dx * b.dx / (rx2 * b.rx), b.dy * b.dy / (ry2 * b.ry), b.dx / rx2, b.dy / ry2};
  return b;
}

ParamVector bell_gradient(const BellTerms& b) {
  ParamVector grad;
  grad[kH] = b.e;
  for (int i = 1; i < kNumParams; ++i) grad[i] = b.g * b.c[static_cast<std::size_t>(i)];
  return grad;
}

ParamMatrix bell_hessian(const BellTerms& b) {
  // d c_i / d theta_j for the spread/location block; x and y blocks decouple.
  ParamMatrix dc = ParamMatrix::Zero();
  const double rx3 = b.rx * b.rx * b.rx;
  const double ry3 = b.ry * b.ry * b.ry;
  dc(kRhoX, kRhoX) = -3.0 * b.dx * b.dx / (rx3 * b.rx);
  dc(kRhoX, kXc) = -2.0 * b.dx / rx3;
  dc(kXc, kRhoX) = -2.0 * b.dx / rx3;
  dc(kXc, kXc) = -1.0 / (b.rx * b.rx);
  dc(kRhoY, kRhoY) = -3.0 * b.dy * b.dy / (ry3 * b.ry);
  dc(kRhoY, kYc) = -2.0 * b.dy / ry3;
  dc(kYc, kRhoY) = -2.0 * b.dy / ry3;
  dc(kYc, kYc) = -1.0 / (b.ry * b.ry);

  ParamMatrix hess = ParamMatrix::Zero();
  for (int i = 1; i < kNumParams; ++i) {
    const double ci = b.c[static_cast<std::size_t>(i)];
    hess(kH, i) = b.e * ci;
    hess(i, kH) = b.e * ci;
    for (int j = i; j < kNumParams; ++j) {
      const double v = b.g * (ci * b.c[static_cast<std::size_t>(j)] + dc(i, j));
      hess(i, j) = v;
      hess(j, i) = v;
    }
  }
  return hess;
}

}  // namespace

double GaussianBell::value(const ParamVector& t, double x, double y) const { return bell_terms(t, x, y).g; }

ParamVector GaussianBell::gradient(const ParamVector& t, double x, double y) const {
  return bell_gradient(bell_terms(t, x, y));
}

ParamMatrix GaussianBell::hessian(const ParamVector& t, double x, double y) const {
  return bell_hessian(bell_terms(t, x, y));
}

FieldSample GaussianBell::sample(const ParamVector& t, double x, double y) const {
  const BellTerms b = bell_terms(t, x, y);
  return {b.g, bell_gradient(b), bell_hessian(b)};
}

bool GaussianBell::admissible(const ParamVector& t) const {
  return t.allFinite() && t[kRhoX] > 0.0 && t[kRhoY] > 0.0;
}

double field_value(const FieldParams& p, double x, double y) { return GaussianBell{}.value(p.to_vector(), x, y); }

ParamVector field_gradient(const FieldParams& p, double x, double y) {
  return GaussianBell{}.gradient(p.to_vector(), x, y);
}

ParamMatrix field_hessian_theta(const FieldParams& p, double x, double y) {
  return GaussianBell{}.hessian(p.to_vector(), x, y);
}

double field_squared_integral(const FieldModel& model, const FieldParams& params, const Area& area, int nodes,
                              Exec exec) {
  const ParamVector theta = params.to_vector();
  return integrate_area(
      area, nodes,
      [&](double x, double y) {
        const double g = model.value(theta, x, y);
        return g * g;
      },
      exec);
}

}  // namespace fieldest
