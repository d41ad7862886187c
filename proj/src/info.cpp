#include "scmrl/info.hpp"

#include <cmath>

namespace scmrl {

double shannon_entropy(const Eigen::VectorXd& p) {
  double h = 0.0;
  for (int i = 0; i < p.size(); ++i)
    if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
  return h;
}

double mutual_information(const Eigen::MatrixXd& joint) {
  const Eigen::VectorXd px = joint.rowwise().sum();
  const Eigen::VectorXd py = joint.colwise().sum();
  double mi = 0.0;
  for (int x = 0; x < joint.rows(); ++x) {
    for (int y = 0; y < joint.cols(); ++y) {
      const double pxy = joint(x, y);
      if (pxy > 0.0) mi += pxy * std::log(pxy / (px[x] * py[y]));
    }
  }
  // Tiny negative values are rounding artifacts of independent tables.
  return mi < 0.0 ? 0.0 : mi;
}

}  // namespace scmrl
