#pragma once

#include <functional>
#include <vector>

namespace modlock {

// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};
GaussRule gauss_legendre(int points);

// Composite Gauss-Legendre: `panels` equal panels on [a, b], `points` nodes
// each. Nodes are returned in increasing order with matching weights.
GaussRule composite_gauss(double a, double b, int panels, int points = 8);

double integrate_composite(const std::function<double(double)>& fn, double a, double b, int panels,
                           int points = 8);

}  // namespace modlock
