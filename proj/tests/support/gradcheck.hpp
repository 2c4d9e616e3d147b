#pragma once

// Central-difference check of QNetwork::loss_and_gradient.

#include <algorithm>
#include <cmath>
#include <vector>

#include "aoi/drl.hpp"

namespace oracle {

inline double flat_get(aoi::QNetwork& net, std::size_t l, bool bias, Eigen::Index r, Eigen::Index c) {
  auto& d = net.layers()[l];
  return bias ? d.bias(r) : d.weight(r, c);
}

inline void flat_set(aoi::QNetwork& net, std::size_t l, bool bias, Eigen::Index r, Eigen::Index c, double v) {
  auto& d = net.layers()[l];
  if (bias) d.bias(r) = v;
  else d.weight(r, c) = v;
}

inline double max_relative_error(aoi::QNetwork net, const Eigen::MatrixXd& x, const std::vector<int>& acts,
                          const Eigen::VectorXd& y) {
  aoi::Gradients g;
  net.loss_and_gradient(x, acts, y, g);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t l = 0; l < net.layers().size(); ++l) {
    for (int part = 0; part < 2; ++part) {
      const bool bias = part == 1;
      const Eigen::Index rows = bias ? net.layers()[l].bias.size() : net.layers()[l].weight.rows();
      const Eigen::Index cols = bias ? 1 : net.layers()[l].weight.cols();
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) {
          const double w = flat_get(net, l, bias, r, c);
          aoi::Gradients scratch;
          flat_set(net, l, bias, r, c, w + h);
          const double up = net.loss_and_gradient(x, acts, y, scratch);
          flat_set(net, l, bias, r, c, w - h);
          const double down = net.loss_and_gradient(x, acts, y, scratch);
          flat_set(net, l, bias, r, c, w);
          const double numeric = (up - down) / (2 * h);
          const double analytic = bias ? g[l].bias(r) : g[l].weight(r, c);
          const double scale = std::max(std::abs(numeric) + std::abs(analytic), 1e-7);
          worst = std::max(worst, std::abs(numeric - analytic) / scale);
        }
    }
  }
  return worst;
}

}  // namespace oracle
