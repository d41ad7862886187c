#pragma once

#include <Eigen/Core>

namespace scmrl {

// Discrete information measures over dense probability tables. All values in
// nats. Zero-probability cells contribute zero (0 log 0 := 0).

// -sum_x p(x) log p(x)
double shannon_entropy(const Eigen::VectorXd& p);

// I(X;Y) = sum_xy p(x,y) log( p(x,y) / (p(x) p(y)) ), joint[x, y]
double mutual_information(const Eigen::MatrixXd& joint);

}  // namespace scmrl
