#pragma once

#include <array>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "fieldest/quadrature.hpp"

namespace fieldest {

/// Number of unknowns; the ordering below is shared by gradients, Fisher
/// rows and every exported column.
inline constexpr int kNumParams = 5;

using ParamVector = Eigen::Matrix<double, kNumParams, 1>;
using ParamMatrix = Eigen::Matrix<double, kNumParams, kNumParams>;

enum ParamIndex : int { kH = 0, kRhoX = 1, kRhoY = 2, kXc = 3, kYc = 4 };

inline constexpr std::array<std::string_view, kNumParams> kParamNames{"h", "rho_x", "rho_y", "x_c",
                                                                      "y_c"};

/// theta = [h, rho_x, rho_y, x_c, y_c] with strictly positive spreads.
class FieldParams {
 public:
  FieldParams(double h, double rho_x, double rho_y, double x_c, double y_c);

  /// Throws std::invalid_argument when a spread is not positive or a value is not finite.
  static FieldParams from_vector(const ParamVector& theta);
  ParamVector to_vector() const;

  double h() const noexcept { return h_; }
  double rho_x() const noexcept { return rho_x_; }
  double rho_y() const noexcept { return rho_y_; }
  double x_c() const noexcept { return x_c_; }
  double y_c() const noexcept { return y_c_; }

  /// Reference source used throughout the numerical studies: h=8, rho=2, centre (4,4).
  static FieldParams reference() { return {8.0, 2.0, 2.0, 4.0, 4.0}; }

  friend bool operator==(const FieldParams&, const FieldParams&) = default;

 private:
  double h_, rho_x_, rho_y_, x_c_, y_c_;
};

/// Axis-aligned deployment rectangle.
class Area {
 public:
  Area(double x_min, double x_max, double y_min, double y_max);

  static Area square(double side) { return {0.0, side, 0.0, side}; }

  double x_min() const noexcept { return x_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_min() const noexcept { return y_min_; }
  double y_max() const noexcept { return y_max_; }
  double measure() const noexcept { return (x_max_ - x_min_) * (y_max_ - y_min_); }
  bool contains(double x, double y) const noexcept {
    return x >= x_min_ && x <= x_max_ && y >= y_min_ && y <= y_max_;
  }

 private:
  double x_min_, x_max_, y_min_, y_max_;
};

struct FieldSample {
  double value = 0.0;
  ParamVector gradient = ParamVector::Zero();
  ParamMatrix hessian = ParamMatrix::Zero();
};

/// A scalar field G(x, y; theta) with analytic first and second derivatives in theta.
///
/// Estimators and bounds only talk to this interface, so another parametric
/// field can be dropped in by implementing it. Evaluation takes a raw
/// parameter vector because iterative solvers probe points that may not be
/// valid FieldParams; `admissible` says which ones are.
class FieldModel {
 public:
  virtual ~FieldModel() = default;

  virtual double value(const ParamVector& theta, double x, double y) const = 0;
  virtual ParamVector gradient(const ParamVector& theta, double x, double y) const = 0;
  virtual ParamMatrix hessian(const ParamVector& theta, double x, double y) const = 0;

  /// Value, gradient and Hessian in one pass. Override when the pieces share work.
  virtual FieldSample sample(const ParamVector& theta, double x, double y) const {
    return {value(theta, x, y), gradient(theta, x, y), hessian(theta, x, y)};
  }

  virtual bool admissible(const ParamVector& theta) const { return theta.allFinite(); }
};

/// G = h exp(-(x-x_c)^2 / (2 rho_x^2) - (y-y_c)^2 / (2 rho_y^2)).
class GaussianBell final : public FieldModel {
 public:
  double value(const ParamVector& theta, double x, double y) const override;
  ParamVector gradient(const ParamVector& theta, double x, double y) const override;
  ParamMatrix hessian(const ParamVector& theta, double x, double y) const override;
  FieldSample sample(const ParamVector& theta, double x, double y) const override;
  bool admissible(const ParamVector& theta) const override;
};

double field_value(const FieldParams& params, double x, double y);
ParamVector field_gradient(const FieldParams& params, double x, double y);
ParamMatrix field_hessian_theta(const FieldParams& params, double x, double y);

enum class Exec { kSerial, kParallel };

inline constexpr int kDefaultAreaNodes = 201;

/// 2-D composite Simpson rule of f(x, y) over `area` with `nodes` points per
/// axis. Rows are summed into per-row partials and reduced in row order, so
/// the serial and parallel paths return identical bits.
template <class F>
double integrate_area(const Area& area, int nodes, F&& f, Exec exec = Exec::kParallel) {
  require_simpson_nodes(nodes, 11, "integrate_area");
  const auto wx = simpson_weights(nodes, area.x_min(), area.x_max());
  const auto wy = simpson_weights(nodes, area.y_min(), area.y_max());
  const auto xs = linspace(nodes, area.x_min(), area.x_max());
  const auto ys = linspace(nodes, area.y_min(), area.y_max());
  std::vector<double> rows(static_cast<std::size_t>(nodes), 0.0);
  auto row = [&](int i) {
    double acc = 0.0;
    for (int j = 0; j < nodes; ++j) {
      acc += wy[static_cast<std::size_t>(j)] * f(xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(j)]);
    }
    rows[static_cast<std::size_t>(i)] = wx[static_cast<std::size_t>(i)] * acc;
  };
  if (exec == Exec::kParallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < nodes; ++i) row(i);
  } else {
    for (int i = 0; i < nodes; ++i) row(i);
  }
  double total = 0.0;
  for (double r : rows) total += r;
  return total;
}

/// Simpson approximation of the area integral of G^2. Throws on an even or
/// too small (< 11) node count.
double field_squared_integral(const FieldModel& model, const FieldParams& params, const Area& area,
                              int nodes = kDefaultAreaNodes, Exec exec = Exec::kParallel);

}  // namespace fieldest
