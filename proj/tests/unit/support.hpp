#pragma once

#include "csbm/model.hpp"

#include <initializer_list>
#include <vector>

namespace csbm::test {

// Balanced unless proportions are given.
inline ModelSpec make_spec(int n, Eigen::MatrixXd B, Eigen::MatrixXd mu, double sigma,
                           std::vector<double> pi = {}, NoiseKind noise = NoiseKind::kGaussian) {
  ModelSpec s;
  s.n = n;
  s.L = static_cast<int>(B.rows());
  s.d = static_cast<int>(mu.rows());
  s.B = std::move(B);
  s.mu = std::move(mu);
  s.sigma = sigma;
  s.noise = noise;
  s.pi = pi.empty() ? std::vector<double>(s.L, 1.0 / s.L) : std::move(pi);
  s.validate();
  return s;
}

inline Eigen::MatrixXd mat(int rows, int cols, std::initializer_list<double> values) {
  Eigen::MatrixXd M(rows, cols);
  auto it = values.begin();
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) M(r, c) = *it++;
  return M;
}

inline ModelSpec two_class(int n, double p, double q, double sigma = 1.0, int d = 1) {
  Eigen::MatrixXd mu(d, 2);
  mu.col(0).setConstant(1.0);
  mu.col(1).setConstant(-1.0);
  return make_spec(n, mat(2, 2, {p, q, q, p}), mu, sigma);
}

}  // namespace csbm::test
