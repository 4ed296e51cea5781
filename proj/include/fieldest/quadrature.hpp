#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fieldest {

/// Throws std::invalid_argument unless `nodes` is odd and >= `min_nodes`.
inline void require_simpson_nodes(int nodes, int min_nodes, const char* what) {
  if (nodes < min_nodes || nodes % 2 == 0) {
    throw std::invalid_argument(std::string(what) + ": Simpson node count must be odd and >= " +
                                std::to_string(min_nodes) + ", got " + std::to_string(nodes));
  }
}

/// Composite Simpson weights (1, 4, 2, ..., 4, 1) * h/3 on `nodes` equispaced
/// points spanning [lo, hi].
inline std::vector<double> simpson_weights(int nodes, double lo, double hi) {
  require_simpson_nodes(nodes, 3, "simpson_weights");
  const double h = (hi - lo) / (nodes - 1);
  std::vector<double> w(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    const double c = (i == 0 || i == nodes - 1) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    w[static_cast<std::size_t>(i)] = c * h / 3.0;
  }
  return w;
}

inline std::vector<double> linspace(int nodes, double lo, double hi) {
  std::vector<double> x(static_cast<std::size_t>(nodes));
  const double h = (hi - lo) / (nodes - 1);
  for (int i = 0; i < nodes; ++i) x[static_cast<std::size_t>(i)] = lo + h * i;
  x.back() = hi;
  return x;
}

}  // namespace fieldest
