#include "support.hpp"

#include "csbm/linalg.hpp"
#include "csbm/rng.hpp"

#include <doctest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

using namespace csbm;
using csbm::test::make_spec;
using csbm::test::mat;

namespace {

Eigen::MatrixXd random_symmetric(int n, std::uint64_t seed) {
  Stream rng(seed, Purpose::kMonteCarlo);
  Eigen::MatrixXd M(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) M(i, j) = M(j, i) = rng.normal();
  return M;
}

ModelSpec small_model(int n) {
  return make_spec(n, mat(3, 3, {0.6, 0.2, 0.1, 0.2, 0.5, 0.3, 0.1, 0.3, 0.7}), mat(1, 3, {1, 0, -1}), 1.0,
                   {0.3, 0.3, 0.4});
}

}  // namespace

TEST_CASE("sparse powers match dense powers") {
  const ModelSpec spec = small_model(40);
  const LabelAssignment labels = assign_labels(spec);
  const SparseGraph A = sample_graph(spec, labels, 2);
  const Matrix X = sample_features(spec, labels, 2);
  const Eigen::MatrixXd D = A.dense();
  for (int k = 0; k <= 4; ++k) {
    const Eigen::MatrixXd want = D.pow(k) * Eigen::MatrixXd(X);
    const Matrix got = aggregate_power(A, X, k);
    CHECK((Eigen::MatrixXd(got) - want).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, want.cwiseAbs().maxCoeff()));
  }
  const std::vector<int> rows = {0, 17, 39};
  const Eigen::MatrixXd R = power_rows(A, 3, rows);
  const Eigen::MatrixXd D3 = D * D * D;
  for (std::size_t q = 0; q < rows.size(); ++q) CHECK((R.row(q) - D3.row(rows[q])).norm() == doctest::Approx(0.0));
}

TEST_CASE("expected adjacency apply and power_rows agree with the dense matrix") {
  const ModelSpec spec = small_model(25);
  const LabelAssignment labels = assign_labels(spec);
  const ExpectedAdjacency EA(spec, labels);
  const Eigen::MatrixXd E = EA.dense();
  CHECK(E.diagonal().norm() == 0.0);
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(25, -1.0, 2.0);
  CHECK((expected_power_apply(EA, 3, v) - E * E * E * v).norm() <= 1e-10 * (E * E * E * v).norm());
  const std::vector<int> rows = {3, 20};
  const Eigen::MatrixXd R = power_rows(EA, 2, rows);
  CHECK((R.row(1) - (E * E).row(20)).norm() <= 1e-12);
}

TEST_CASE("Lanczos operator norm matches an SVD") {
  for (int n : {1, 2, 7, 40, 120}) {
    const Eigen::MatrixXd M = random_symmetric(n, n);
    const double want = Eigen::JacobiSVD<Eigen::MatrixXd>(M).singularValues()[0];
    const OpNormEstimate est = opnorm(M);
    CHECK(est.converged);
    CHECK(est.value == doctest::Approx(want).epsilon(1e-8));
  }
  Eigen::MatrixXd rect = Eigen::MatrixXd::Random(7, 4);
  CHECK(opnorm(rect).value == doctest::Approx(Eigen::JacobiSVD<Eigen::MatrixXd>(rect).singularValues()[0]).epsilon(1e-8));
  CHECK(opnorm(Eigen::MatrixXd::Zero(5, 5)).value == 0.0);
}

TEST_CASE("closed-form gap norm matches dense evaluation") {
  const ModelSpec spec = small_model(30);
  const LabelAssignment labels = assign_labels(spec);
  const ExpectedAdjacency EA(spec, labels);
  const Eigen::MatrixXd E = EA.dense(), P = EA.dense_P();
  CHECK(opnorm_P(EA) == doctest::Approx(Eigen::JacobiSVD<Eigen::MatrixXd>(P).singularValues()[0]).epsilon(1e-10));
  for (int k = 1; k <= 4; ++k) {
    const Eigen::MatrixXd G = E.pow(k) - P.pow(k);
    const double want = Eigen::JacobiSVD<Eigen::MatrixXd>(G).singularValues()[0];
    CHECK(expected_power_gap_norm(EA, k) == doctest::Approx(want).epsilon(1e-8));
    CHECK(check_EAk_Pk(spec, labels, k).satisfied);
  }
}

TEST_CASE("monomial deviation inequalities on random pairs") {
  for (std::uint64_t s = 0; s < 30; ++s) {
    const int n = 3 + static_cast<int>(s % 9);
    const Eigen::MatrixXd U = random_symmetric(n, 100 + s);
    const Eigen::MatrixXd V = U + 0.1 * random_symmetric(n, 200 + s);
    for (int k = 1; k <= 4; ++k) {
      const MonomialDeviation m = check_monomial_deviation(U, V, k);
      CHECK(m.deviation_form.satisfied);
      CHECK(m.max_form.satisfied);
    }
  }
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(3, 3);
  CHECK(check_monomial_deviation(I, I, 3).lhs == 0.0);
}

TEST_CASE("concentration constant and Monte Carlo stats") {
  const double Ck = concentration_constant(2, ConcentrationConstants{});
  CHECK(Ck == doctest::Approx(2.0 * 4.0 * std::pow(3.0 + std::sqrt(3.0), 2)));
  const ModelSpec spec = make_spec(300, mat(2, 2, {0.1, 0.02, 0.02, 0.1}), mat(1, 2, {1, -1}), 1.0);
  const LabelAssignment labels = assign_labels(spec);
  const ConcentrationStats a = mc_Ak_concentration(spec, labels, 1, 6, 3, {}, 1);
  const ConcentrationStats b = mc_Ak_concentration(spec, labels, 1, 6, 3, {}, 2);
  CHECK(a.mean == b.mean);
  CHECK(a.precondition);
  CHECK(a.mean <= a.bound);
  CHECK(a.unconverged == 0);
}
