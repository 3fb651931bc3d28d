#pragma once

#include "csbm/common.hpp"
#include "csbm/model.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace csbm {

// A^k X by k sparse products; k = 0 returns X.
Matrix aggregate_power(const SparseGraph& A, const Matrix& X, int k);

// Rows (M^k)_{i.} for the requested i, by k matvecs on basis vectors.
Eigen::MatrixXd power_rows(const SparseGraph& A, int k, std::span<const int> rows);
Eigen::MatrixXd power_rows(const ExpectedAdjacency& EA, int k, std::span<const int> rows);
// E[A]^k v.
Eigen::VectorXd expected_power_apply(const ExpectedAdjacency& EA, int k, const Eigen::VectorXd& v);

using LinearOperator = std::function<void(std::span<const double>, std::span<double>)>;

struct OpNormOptions {
  double tolerance = 1e-8;
  int max_iterations = 10000;
  std::uint64_t seed = 0x5eed;
};

struct OpNormEstimate {
  double value = 0.0;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
};

// Largest |eigenvalue| of a symmetric operator by Lanczos with full reorthogonalization.
OpNormEstimate opnorm_symmetric(int n, const LinearOperator& op, const OpNormOptions& options = {});
// Spectral norm of a dense matrix: symmetric input goes straight to Lanczos, otherwise M^T M.
OpNormEstimate opnorm(const Eigen::MatrixXd& M, const OpNormOptions& options = {});
// ||P|| through the L x L reduced matrix.
double opnorm_P(const ExpectedAdjacency& EA);
// ||E[A]^k - P^k|| in closed form: the class-indicator span and its complement are invariant.
double expected_power_gap_norm(const ExpectedAdjacency& EA, int k);

struct MonomialDeviation {
  double lhs = 0.0;  // ||U^k - V^k||
  InequalityRecord deviation_form;  // k 2^(k-2) |U-V| (|U-V|^(k-1) + |V|^(k-1))
  InequalityRecord max_form;        // k |U-V| max(|U|,|V|)^(k-1)
};

MonomialDeviation check_monomial_deviation(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V, int k);
// ||E[A]^k - P^k|| <= k nu^k / n.
InequalityRecord check_EAk_Pk(const ModelSpec& spec, const LabelAssignment& labels, int k);

struct ConcentrationConstants {
  double C = 3.0;
  double c = 1.0;
  double c_nu_prime = 1.0;
};

double concentration_constant(int k, const ConcentrationConstants& constants);

struct ConcentrationStats {
  double mean = 0.0;       // estimate of E||A^k - E[A]^k||
  double std_error = 0.0;
  double bound = 0.0;      // C_k nu^(k-1/2)
  double ratio = 0.0;      // mean / nu^(k-1/2)
  bool precondition = false;  // nu >= c'_nu log n
  int trials = 0;
  int unconverged = 0;
};

ConcentrationStats mc_Ak_concentration(const ModelSpec& spec, const LabelAssignment& labels, int k,
                                       int trials, std::uint64_t seed,
                                       const ConcentrationConstants& constants = {},
                                       unsigned threads = 1);

}  // namespace csbm
