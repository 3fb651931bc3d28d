#include <doctest.h>

#include "csbm/shapes.hpp"
#include "csbm/walks.hpp"
#include "support.hpp"

#include <cmath>
#include <vector>

using namespace csbm;
using csbm::test::make_spec;
using csbm::test::mat;

namespace {

struct BruteForce {
  Eigen::MatrixXd EAk;
  // moment[i][r] = E[Delta_i^r] for feature coordinate 0
  std::vector<std::vector<double>> moment;
};

// Exact expectations by summing over every graph on n <= 6 nodes and, for Rademacher noise,
// every sign pattern of the features.
BruteForce brute_force(const ModelSpec& spec, const LabelAssignment& labels, int k, int max_r) {
  const int n = spec.n;
  std::vector<std::pair<int, int>> pairs;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) pairs.emplace_back(u, v);
  const int P = static_cast<int>(pairs.size());
  std::vector<Eigen::MatrixXd> powers;
  std::vector<double> weights;
  BruteForce out;
  out.EAk = Eigen::MatrixXd::Zero(n, n);
  for (std::uint32_t g = 0; g < (1u << P); ++g) {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    double w = 1.0;
    for (int e = 0; e < P; ++e) {
      const auto [u, v] = pairs[e];
      const double p = spec.B(labels.y[u], labels.y[v]);
      if (g >> e & 1u) {
        A(u, v) = A(v, u) = 1.0;
        w *= p;
      } else {
        w *= 1.0 - p;
      }
    }
    if (w == 0.0) continue;
    Eigen::MatrixXd Ak = Eigen::MatrixXd::Identity(n, n);
    for (int s = 0; s < k; ++s) Ak = Ak * A;
    out.EAk += w * Ak;
    powers.push_back(Ak);
    weights.push_back(w);
  }
  out.moment.assign(n, std::vector<double>(max_r + 1, 0.0));
  for (std::size_t g = 0; g < powers.size(); ++g) {
    const Eigen::MatrixXd C = powers[g] - out.EAk;
    for (std::uint32_t signs = 0; signs < (1u << n); ++signs) {
      Eigen::VectorXd x(n);
      for (int j = 0; j < n; ++j) x[j] = spec.mu(0, labels.y[j]) + ((signs >> j & 1u) ? spec.sigma : -spec.sigma);
      const Eigen::VectorXd delta = C * x;
      const double w = weights[g] / (1u << n);
      for (int i = 0; i < n; ++i)
        for (int r = 0; r <= max_r; ++r) out.moment[i][r] += w * std::pow(delta[i], r);
    }
  }
  return out;
}

ModelSpec tiny_model(double sigma = 0.7) {
  return make_spec(5, mat(2, 2, {0.7, 0.2, 0.2, 0.5}), mat(1, 2, {1.0, -0.5}), sigma, {0.4, 0.6},
                   NoiseKind::kRademacher);
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace

TEST_CASE("small combinatorics") {
  CHECK(binomial(10, 3) == 120.0);
  CHECK(binomial(4, 5) == 0.0);
  const double cat[] = {1, 1, 2, 5, 14, 42};
  for (int t = 0; t < 6; ++t) CHECK(catalan(t) == cat[t]);
  CHECK(stirling2(4, 2) == 7.0);
  CHECK(stirling2(5, 3) == 25.0);
  CHECK(double_factorial(5) == 15.0);
  CHECK(double_factorial(-1) == 1.0);
  CHECK(falling_factorial(5, 2) == 20.0);
  CHECK(falling_factorial(2, 3) == 0.0);
}

TEST_CASE("walk totals match the spectrum of the complete graph") {
  for (int n = 3; n <= 7; ++n) {
    for (int k = 1; k <= 6; ++k) {
      const double sgn = k % 2 == 0 ? 1.0 : -1.0;
      double open = 0.0;
      for (const auto& row : count_Nt(n, k, 0, 1)) {
        open += static_cast<double>(row.count);
        if (row.vertex_room) CHECK(row.ok);
      }
      CHECK(open == (std::pow(n - 1.0, k) - sgn) / n);
      if (k < 2) continue;
      double closed = 0.0;
      for (const auto& row : count_closed(n, k, 0)) {
        closed += static_cast<double>(row.looped + row.loopless);
        if (row.vertex_room) CHECK(row.ok);
      }
      CHECK(closed == (std::pow(n - 1.0, k) + (n - 1.0) * sgn) / n);
    }
  }
}

TEST_CASE("path bound reads zero when the graph is too small to pad the vertex set") {
  // 0-1-2-0-1 uses three distinct edges on three nodes.
  const auto rows = count_Nt(3, 4, 0, 1);
  CHECK(rows[2].count == 3);
  CHECK(rows[2].bound == 0.0);
  CHECK_FALSE(rows[2].vertex_room);
  CHECK_FALSE(rows[2].ok);
}

TEST_CASE("tree-shaped closed walks hit the formula exactly when k = 2t") {
  for (int t = 1; t <= 3; ++t) {
    const auto rows = count_closed(8, 2 * t, 0);
    const auto& row = rows[t - 1];
    REQUIRE(row.t == t);
    CHECK(row.equality_expected);
    CHECK(static_cast<double>(row.loopless) == row.loopless_formula);
  }
  // i-a-i-b-i and i-a-b-a-i on four nodes.
  CHECK(count_closed(4, 4, 0)[1].loopless == 12);
  CHECK(count_closed(4, 4, 0)[0].loopless == 3);
}

TEST_CASE("a corrupted Catalan factor is caught") {
  ClosedWalkFormulas bad;
  bad.catalan = [](int t) { return t == 2 ? 3.0 : catalan(t); };
  const auto rows = count_closed(6, 4, 0, bad);
  CHECK_FALSE(rows[1].ok);
}

TEST_CASE("example walk graphs") {
  const std::vector<int> w1 = {4, 0, 1, 0, 2, 3, 2, 0, 4};
  const std::vector<int> w2 = {4, 0, 2, 0, 4, 2, 4};
  CHECK(walk_shape(w1).edges == 4);
  CHECK(walk_shape(w1).vertices == 5);
  CHECK_FALSE(walk_has_cycle(w1));
  CHECK(walk_shape(w2).edges == 3);
  CHECK(walk_shape(w2).vertices == 3);
  CHECK(walk_has_cycle(w2));
}

TEST_CASE("six-walk maximal example") {
  WalkSequence ws;
  ws.k = 3;
  ws.walks = {{0, 1, 2, 4}, {0, 1, 3, 5}, {0, 6, 8, 10}, {0, 6, 7, 9}, {0, 11, 12, 14}, {0, 11, 13, 15}};
  const GammaPartition g = gamma_partition(ws);
  REQUIRE(g.blocks.size() == 3);
  CHECK(g.blocks[0] == std::vector<int>{0, 1});
  CHECK(g.blocks[1] == std::vector<int>{2, 3});
  CHECK(g.blocks[2] == std::vector<int>{4, 5});
  CHECK(g.overlapping);
  CHECK(core_leaves(ws, g) == std::vector<int>{1, 6, 11});
  CHECK(check_maximal_structure(ws).all());
  // Partners that reuse a vertex outside the shared edge break the clauses.
  ws.walks[1] = {0, 1, 2, 5};
  CHECK_FALSE(check_maximal_structure(ws).all());
}

TEST_CASE("expected powers agree with a sum over all graphs") {
  const ModelSpec spec = tiny_model();
  const LabelAssignment labels = assign_labels(spec);
  for (int k = 0; k <= 4; ++k) {
    const BruteForce bf = brute_force(spec, labels, k, 1);
    const Eigen::MatrixXd shape = class_power(spec, labels, k).dense(labels);
    CHECK((shape - bf.EAk).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, bf.EAk.cwiseAbs().maxCoeff()));
    if (k >= 1) {
      const Eigen::MatrixXd walks = exact_EAk(spec, labels, k);
      CHECK((walks - bf.EAk).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, bf.EAk.cwiseAbs().maxCoeff()));
    }
  }
}

TEST_CASE("walk products reproduce the matrix power of E[A]") {
  const ModelSpec spec = make_spec(7, mat(2, 2, {0.6, 0.1, 0.1, 0.3}), mat(1, 2, {1, -1}), 1.0);
  const LabelAssignment labels = assign_labels(spec);
  const Eigen::MatrixXd EA = ExpectedAdjacency(spec, labels).dense();
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(7, 7);
  for (int k = 1; k <= 4; ++k) {
    power = power * EA;
    CHECK((walk_product_power(spec, labels, k) - power).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("noise moments agree with a sum over all graphs and signs") {
  const ModelSpec spec = tiny_model();
  const LabelAssignment labels = assign_labels(spec);
  for (int k = 1; k <= 2; ++k) {
    const BruteForce bf = brute_force(spec, labels, k, 4);
    for (int root : {0, 4}) {
      const int a = labels.y[root];
      for (int r = 1; r <= 4; ++r) {
        const ShapeMoment sm = shape_moment(spec, labels, a, 0, r, k);
        CHECK(std::abs(sm.moment - bf.moment[root][r]) <= 1e-11 * std::max(1.0, std::abs(bf.moment[root][r])));
        const MomentTable mt = moment_decomposition(spec, labels, root, 0, r, k);
        REQUIRE(mt.has_exact_moment);
        CHECK(std::abs(mt.exact_moment - bf.moment[root][r]) <= 1e-11 * std::max(1.0, std::abs(bf.moment[root][r])));
        CHECK(std::abs(mt.theta_hi + mt.theta_lo - mt.exact_moment) <= 1e-11 * std::max(1.0, std::abs(mt.exact_moment)));
      }
    }
  }
}

TEST_CASE("shape census matches the walk census") {
  const ModelSpec spec = make_spec(7, mat(2, 2, {0.5, 0.25, 0.25, 0.4}), mat(1, 2, {1.5, -0.5}), 0.8);
  const LabelAssignment labels = assign_labels(spec);
  for (auto [r, k] : {std::pair{2, 2}, std::pair{3, 2}, std::pair{4, 1}}) {
    const MomentTable mt = moment_decomposition(spec, labels, 0, 0, r, k);
    const ShapeMoment sm = shape_moment(spec, labels, labels.y[0], 0, r, k);
    CHECK(mt.cells.size() == sm.cells.size());
    for (const auto& [key, cell] : mt.cells) {
      REQUIRE(sm.cells.count(key) == 1);
      CHECK(sm.cells.at(key).count == cell.count);
      CHECK(rel(sm.cells.at(key).sum_rho, cell.sum_rho) <= 1e-10);
    }
    CHECK(rel(sm.theta_hi + sm.theta_lo, mt.theta_hi + mt.theta_lo) <= 1e-10);
    CHECK(mt.cells_beyond_limits == 0);
    CHECK(mt.cells_over_bound == 0);
    CHECK(mt.sum_bound_violations == 0);
    CHECK(mt.structure_violations == 0);
  }
}

TEST_CASE("maximal label patterns number (r-1)!!") {
  const ModelSpec spec = make_spec(30, mat(2, 2, {0.3, 0.1, 0.1, 0.3}), mat(1, 2, {1, -1}), 1.0);
  const LabelAssignment labels = assign_labels(spec);
  for (auto [r, k] : {std::pair{2, 1}, std::pair{2, 3}, std::pair{2, 5}, std::pair{4, 1}, std::pair{4, 2},
                      std::pair{6, 1}}) {
    const ShapeMoment sm = shape_moment(spec, labels, 0, 0, r, k);
    CHECK(sm.maximal_patterns == static_cast<std::uint64_t>(double_factorial(r - 1)));
    CHECK(sm.maximal_violations == 0);
  }
}

TEST_CASE("maximal sequence search") {
  MaximalCensus c = enumerate_maximal(7, 2, 2);
  CHECK(static_cast<double>(c.found) == c.expected);
  CHECK(c.expected == 120.0);
  CHECK(c.violations == 0);
  CHECK(c.distinct_matchings == 1);
  c = enumerate_maximal(8, 2, 4);
  CHECK(static_cast<double>(c.found) == 3.0 * 5040.0);
  CHECK(c.violations == 0);
  CHECK(c.distinct_matchings == 3);
}

TEST_CASE("the two proxy evaluations agree and the gap bound holds") {
  const ModelSpec spec = make_spec(12, mat(2, 2, {0.45, 0.15, 0.15, 0.35}), mat(2, 2, {1, -1, 0.5, 2}), 0.6);
  const LabelAssignment labels = assign_labels(spec);
  for (int k = 1; k <= 2; ++k) {
    for (int r : {2, 4}) CHECK(rel(theta_hi_proxy(spec, labels, 0, 1, r, k), theta_hi_proxy_esp(spec, labels, 0, 1, r, k)) <= 1e-10);
  }
  CHECK(theta_report(spec, labels, 0, 0, 2, 2).passed);
  ModelSpec quiet = spec;
  quiet.sigma = 0.0;
  const ThetaReport exact = theta_report(quiet, labels, 0, 0, 2, 1);
  CHECK(exact.passed);
  CHECK(exact.theta_hi == doctest::Approx(exact.theta_hi_proxy).epsilon(1e-12));
}

TEST_CASE("single-step partners share an endpoint, so the proxy misses the noise variance") {
  const ModelSpec spec = make_spec(12, mat(2, 2, {0.45, 0.15, 0.15, 0.35}), mat(1, 2, {1, -1}), 0.6);
  const LabelAssignment labels = assign_labels(spec);
  const ThetaReport rep = theta_report(spec, labels, 0, 0, 2, 1);
  double pq = 0.0;
  for (int j = 1; j < 12; ++j) {
    const double p = spec.B(labels.y[0], labels.y[j]);
    pq += p * (1 - p);
  }
  CHECK(rep.theta_hi - rep.theta_hi_proxy == doctest::Approx(0.36 * pq).epsilon(1e-12));
  CHECK_FALSE(rep.passed);
}

TEST_CASE("Monte Carlo second moment covers the exact value") {
  const ModelSpec spec = make_spec(10, mat(2, 2, {0.5, 0.2, 0.2, 0.4}), mat(1, 2, {1, -1}), 0.5);
  const LabelAssignment labels = assign_labels(spec);
  const double exact = shape_moment(spec, labels, labels.y[3], 0, 2, 2).moment;
  const MomentEstimate est = mc_delta_moments(spec, labels, 3, 0, 2, 2, 20000, 42);
  CHECK(est.ci_low <= exact);
  CHECK(exact <= est.ci_high);
}

TEST_CASE("product moment inequality on small sequences") {
  const ModelSpec spec = make_spec(5, mat(2, 2, {0.6, 0.3, 0.3, 0.2}), mat(1, 2, {1, -1}), 1.0);
  const LabelAssignment labels = assign_labels(spec);
  const ProductMomentCheck c = check_product_moment_inequality(spec, labels, 3, 2);
  CHECK(c.checked > 0);
  CHECK(c.violations == 0);
}

TEST_CASE("entry growth bound agrees between the two exact sources") {
  const ModelSpec spec = make_spec(40, mat(2, 2, {0.5, 0.4, 0.4, 0.5}), mat(1, 2, {1, -1}), 1.0);
  const LabelAssignment labels = assign_labels(spec);
  const GrowthCheck from_walks = check_Akij_growth(spec, labels, 2, exact_EAk(spec, labels, 2));
  const GrowthCheck from_shapes = check_Akij_growth(spec, labels, class_power(spec, labels, 2));
  CHECK(from_walks.precondition);
  CHECK(from_walks.violations == 0);
  CHECK(from_shapes.violations == 0);
  CHECK(rel(from_walks.row_aggregate.lhs, from_shapes.row_aggregate.lhs) <= 1e-12);
}

TEST_CASE("moment controls bound every small sequence") {
  const ModelSpec spec = make_spec(5, mat(2, 2, {0.6, 0.3, 0.3, 0.2}), mat(1, 2, {1, -0.3}), 0.8);
  const LabelAssignment labels = assign_labels(spec);
  int checked = 0;
  for_each_walk(5, 2, 0, WalkMode::kFree, -1, [&](std::span<const int> a) {
    for_each_walk(5, 2, 0, WalkMode::kFree, -1, [&](std::span<const int> b) {
      WalkSequence ws{2, {{a.begin(), a.end()}, {b.begin(), b.end()}}};
      const RhoTerms t = rho_terms(ws, spec, labels, 0);
      const auto [b1, b2] = rho_control_bounds(ws, spec, labels, 0, 2.0);
      CHECK(std::abs(t.rho1) <= b1 * (1 + 1e-12));
      CHECK(std::abs(t.rho2) <= b2 * (1 + 1e-12));
      ++checked;
    });
  });
  CHECK(checked == 256);
}

TEST_CASE("canonical maximal search agrees with the labelled search") {
  for (auto [n, k, r] : {std::tuple{7, 2, 2}, std::tuple{8, 3, 2}, std::tuple{8, 2, 4}}) {
    const MaximalCensus full = enumerate_maximal(n, k, r);
    const MaximalCensus canon = enumerate_maximal(n, k, r, 0, 5e9, true);
    CHECK(canon.found == full.found);
    CHECK(canon.canonical_found == static_cast<std::uint64_t>(double_factorial(r - 1)));
    CHECK(canon.distinct_matchings == full.distinct_matchings);
    CHECK(canon.violations == 0);
  }
  const MaximalCensus big = enumerate_maximal(11, 3, 4, 0, 5e9, true);
  CHECK(static_cast<double>(big.found) == big.expected);
  CHECK(big.distinct_matchings == 3);
  CHECK(enumerate_maximal(10, 3, 4, 0, 5e9, true).found == 0);
}
