#include "support.hpp"

#include "csbm/bounds.hpp"
#include "csbm/rng.hpp"

#include <doctest.h>

#include <cmath>

using namespace csbm;
using csbm::test::make_spec;
using csbm::test::mat;
using csbm::test::two_class;

TEST_CASE("r_n: worked value and degenerate nu") {
  // 3 (4 e 2)^2 ~ 1.4e3 <= 1e4 but 3 (4 e 4)^4 ~ 1.1e7 > 1e4.
  CHECK(compute_rn(4.0, 1, 0.5, 1e8).r_n == 2);
  CHECK(compute_rn(4.0, 1, 0.5, 1.0).r_n == 0);
  CHECK(compute_rn(4.0, 1, 0.5, 1.0).growth_estimate == 0.0);
  CHECK_THROWS_AS(compute_rn(4.0, 1, 1.5, 10.0), Error);
}

TEST_CASE("r_n is nondecreasing in nu and even") {
  int prev = 0;
  for (double e = 0.0; e <= 40.0; e += 0.5) {
    const int r = compute_rn(4.0, 2, 0.1, std::pow(10.0, e)).r_n;
    CHECK(r % 2 == 0);
    CHECK(r >= prev);
    prev = r;
  }
  CHECK(prev >= 4);
}

TEST_CASE("r_n satisfies its defining inequality and the next even order does not") {
  for (double nu : {1e3, 1e8, 1e20, 1e60}) {
    for (int k = 1; k <= 3; ++k) {
      const double kappa0 = 4.0, eps = 0.2;
      const int r = compute_rn(kappa0, k, eps, nu).r_n;
      auto lhs = [&](int q) { return std::log(3.0) + q * std::log(kappa0 * q * k * std::exp(1.0 * k)); };
      if (r > 0) CHECK(lhs(r) <= (1 - eps) * std::log(nu));
      CHECK(lhs(r + 2) > (1 - eps) * std::log(nu));
    }
  }
}

TEST_CASE("sub-Weibull tail is continuous at the regime boundary") {
  const double K = 1.3, C = 2.0, eta = 0.5, r0 = 6.0;
  const double boundary = 2.0 * C * eta * std::exp(1.0) * r0;
  const TailBound below = subweibull_tail(K, C, eta, r0, boundary * (1 - 1e-12));
  const TailBound above = subweibull_tail(K, C, eta, r0, boundary * (1 + 1e-12));
  CHECK(below.first_regime);
  CHECK_FALSE(above.first_regime);
  CHECK(below.value == doctest::Approx(above.value).epsilon(1e-9));
  CHECK(below.value == doctest::Approx(std::exp(-eta * r0)).epsilon(1e-9));
  CHECK(above.simplified == doctest::Approx(std::exp(-eta * r0)).epsilon(1e-9));
  CHECK_THROWS_AS(subweibull_tail(K, C, eta, r0, 1.0), Error);
}

TEST_CASE("sub-Weibull tail with eta = 1/2 has a Gaussian-type threshold") {
  const TailBound t = subweibull_tail(2.0, 1.0, 0.5, INFINITY, 16.0);
  CHECK(t.threshold == doctest::Approx(8.0));
  CHECK(t.first_regime);
  CHECK(t.value == doctest::Approx(std::exp(-16.0 / (2.0 * std::exp(1.0)))));
}

TEST_CASE("sub-Weibull tail dominates the Gaussian tail (Monte Carlo)") {
  // For Z ~ N(0,1), E|Z|^r <= r^(r/2) = (sqrt2 (r/2)^(1/2))^r, so K = sqrt 2, C = 1, eta = 1/2.
  Stream rng(99, Purpose::kMonteCarlo);
  const int N = 1000000;
  std::vector<double> z(N);
  for (double& v : z) v = std::abs(rng.normal());
  const double K = std::sqrt(2.0), C = 1.0, eta = 0.5;
  for (double x = 4.0 * eta * C * std::exp(1.0); x <= 30.0; x += 2.5) {
    const TailBound t = subweibull_tail(K, C, eta, INFINITY, x);
    const auto hits = std::count_if(z.begin(), z.end(), [&](double v) { return v >= t.threshold; });
    const Interval ci = clopper_pearson(hits, N, 0.99);
    INFO("x=" << x << " freq=" << double(hits) / N << " bound=" << t.value);
    CHECK(ci.low <= t.value);
  }
}

TEST_CASE("Paley-Zygmund value") {
  CHECK(pz(0.0, 2.0, 8.0) == doctest::Approx(0.5));
  CHECK(pz(0.5, 2.0, 8.0) == doctest::Approx(0.125));
  CHECK_THROWS_AS(pz(0.5, 1.0, 0.0), Error);
}

TEST_CASE("Clopper-Pearson one-sided limits") {
  const Interval zero = clopper_pearson(0, 100, 0.99);
  CHECK(zero.low == 0.0);
  CHECK(zero.high == doctest::Approx(1.0 - std::pow(0.01, 0.01)).epsilon(1e-9));
  const Interval all = clopper_pearson(100, 100, 0.99);
  CHECK(all.high == 1.0);
  CHECK(all.low == doctest::Approx(std::pow(0.01, 0.01)).epsilon(1e-9));
  const Interval half = clopper_pearson(50, 100, 0.99);
  CHECK(half.low < 0.5);
  CHECK(half.high > 0.5);
  double prev_low = -1, prev_high = -1;
  for (int x = 0; x <= 40; ++x) {
    const Interval i = clopper_pearson(x, 40, 0.95);
    CHECK(i.low <= double(x) / 40);
    CHECK(i.high >= double(x) / 40);
    CHECK(i.low >= prev_low);
    CHECK(i.high >= prev_high);
    prev_low = i.low;
    prev_high = i.high;
  }
  CHECK_THROWS_AS(clopper_pearson(3, 2), Error);
}

TEST_CASE("Clopper-Pearson coverage for a known binomial") {
  // 99% one-sided: the lower limit exceeds the truth in about 1% of repetitions.
  Stream rng(7, Purpose::kMonteCarlo);
  const double p = 0.3;
  int misses = 0;
  const int reps = 2000;
  for (int r = 0; r < reps; ++r) {
    int x = 0;
    for (int t = 0; t < 200; ++t) x += rng.bernoulli(p);
    if (clopper_pearson(x, 200, 0.99).low > p) ++misses;
  }
  CHECK(misses <= 0.02 * reps);
}

TEST_CASE("constants follow their definitions") {
  const ModelSpec spec = make_spec(500, mat(2, 2, {0.3, 0.1, 0.1, 0.3}), mat(2, 2, {2.0, -2.0, 0.5, 1.0}), 0.75);
  const LabelAssignment labels = assign_labels(spec);
  const AssumptionReport a = check_assumptions(spec, labels, 2, AssumptionConstants{});
  const ConstantSet c = compute_constants(spec, a, 2);
  // Row 2 has |mu|_inf = 1, so C1 sigma / 1 = 1.5 sets kappa0.
  CHECK(c.kappa0 == doctest::Approx(6.0));
  CHECK(c.kappa2 == doctest::Approx(8.0 * (32.0 * 16.0 + std::pow(12.0, 4))));
  CHECK(c.kappa3 == doctest::Approx(12.0));
  CHECK(c.kappa3_derived == doctest::Approx(6.0));
  CHECK(c.kappa1 == doctest::Approx(0.5 * 0.1 * 0.5 * a.c_xi * a.c_xi / 96.0));
}

TEST_CASE("growth conditions fail for a tiny sparse graph and verdicts turn vacuous") {
  const ModelSpec spec = two_class(60, 0.1, 0.05, 1.0);
  const LabelAssignment labels = assign_labels(spec);
  const BoundsReport rep = check_signal_theorem(spec, labels, 1);
  CHECK_FALSE(rep.growth.signal.satisfied);
  REQUIRE(rep.entries.size() == 2);
  for (const auto& e : rep.entries) {
    CHECK(e.verdict == Verdict::kVacuous);
    CHECK_FALSE(e.asserted);
    CHECK(e.margin == doctest::Approx(e.rhs - e.lhs));
  }
  CHECK(rep.vacuous() == 2);
  CHECK(rep.failures() == 0);
}

TEST_CASE("signal brackets pass on a dense assortative scenario") {
  const ModelSpec spec = make_spec(50000, mat(2, 2, {0.9, 0.0, 0.0, 0.9}), mat(1, 2, {1.0, -1.0}), 1.0);
  const LabelAssignment labels = assign_labels(spec);
  const BoundsReport rep = check_signal_theorem(spec, labels, 1);
  CHECK(rep.growth.signal.satisfied);
  CHECK(rep.passes() == 2);
  CHECK(rep.failures() == 0);
  const std::string csv = bounds_csv_rows(rep);
  CHECK(csv.find("signal_lower(1,2)") != std::string::npos);
  CHECK(bounds_to_json(rep)["summary"]["pass"] == 2);
}

TEST_CASE("noise checks: structure, empirical Paley-Zygmund, deterministic across threads") {
  const ModelSpec spec = two_class(300, 0.3, 0.1, 0.5);
  const LabelAssignment labels = assign_labels(spec);
  const NoiseSamples one = simulate_noise(spec, labels, 1, 60, 5, 1);
  const NoiseSamples two = simulate_noise(spec, labels, 1, 60, 5, 3);
  CHECK(one.dev == two.dev);
  const BoundsReport rep = check_noise_theorems(spec, labels, one);
  int pz_entries = 0;
  for (const auto& e : rep.entries) {
    if (e.check.rfind("paley_zygmund_empirical", 0) == 0) {
      ++pz_entries;
      CHECK(e.verdict == Verdict::kPass);
    }
    if (e.check.rfind("second_moment_lower/", 0) == 0) CHECK(e.check == "second_moment_lower/exact");
  }
  CHECK(pz_entries == 3);
  const BoundsReport main = check_main_theorem(spec, labels, one);
  CHECK(main.entries.size() == 9);
}
