#include "support.hpp"

#include "csbm/features.hpp"
#include "csbm/linalg.hpp"
#include "csbm/rng.hpp"
#include "csbm/shapes.hpp"
#include "csbm/walks.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>

using namespace csbm;
using csbm::test::make_spec;
using csbm::test::mat;
using csbm::test::two_class;

namespace {

ModelSpec three_class(int n, double sigma = 0.7) {
  return make_spec(n, mat(3, 3, {0.6, 0.2, 0.1, 0.2, 0.5, 0.3, 0.1, 0.3, 0.7}),
                   mat(2, 3, {1.0, -0.5, 0.2, 0.3, 1.2, -1.0}), sigma, {0.3, 0.3, 0.4});
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

}  // namespace

TEST_CASE("class-form centers agree with anchor-checked centers from enumerated E[A^k]") {
  const ModelSpec spec = three_class(10);
  const LabelAssignment labels = assign_labels(spec);
  for (int k = 1; k <= 3; ++k) {
    const Eigen::MatrixXd dense = population_centers(spec, labels, exact_EAk(spec, labels, k));
    const Eigen::MatrixXd fast = population_centers(spec, labels, class_power(spec, labels, k));
    CHECK((dense - fast).cwiseAbs().maxCoeff() <= 1e-10 * dense.cwiseAbs().maxCoeff());
  }
}

TEST_CASE("k = 1 centers have the closed form sum_b (n_b - [a=b]) B_ab mu_b") {
  const ModelSpec spec = three_class(37);
  const LabelAssignment labels = assign_labels(spec);
  const Eigen::MatrixXd centers = population_centers(spec, labels, class_power(spec, labels, 1));
  for (int a = 0; a < 3; ++a) {
    Eigen::VectorXd want = Eigen::VectorXd::Zero(spec.d);
    for (int b = 0; b < 3; ++b) want += (labels.counts[b] - (a == b)) * spec.B(a, b) * spec.mu.col(b);
    CHECK((centers.col(a) - want).norm() <= 1e-12 * want.norm());
  }
}

TEST_CASE("k = 0 centers are the class means") {
  const ModelSpec spec = three_class(20);
  const LabelAssignment labels = assign_labels(spec);
  const Eigen::MatrixXd centers = population_centers(spec, labels, class_power(spec, labels, 0));
  CHECK((centers - spec.mu).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  const SignalProxy proxy = signal_proxy(spec, labels, 0);
  CHECK((proxy.xi - spec.mu).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("signal proxy: node-level and reduced forms agree, xi = nu^k xi_bar") {
  const ModelSpec spec = three_class(300);
  const LabelAssignment labels = assign_labels(spec);
  for (int k = 1; k <= 4; ++k) {
    const SignalProxy p = signal_proxy(spec, labels, k);
    CHECK(p.defining_form_dense);
    const Eigen::MatrixXd back = p.xi_bar * std::pow(spec.nu(), k);
    CHECK((back - p.xi).cwiseAbs().maxCoeff() <= 1e-12 * p.xi.cwiseAbs().maxCoeff());
  }
  const ModelSpec big = two_class(5000, 0.01, 0.002);
  CHECK_FALSE(signal_proxy(big, assign_labels(big), 2).defining_form_dense);
}

TEST_CASE("proxy centers approach exact centers as n grows") {
  // E[A^k] and P^k differ by O(k nu^k / n); compare relative gaps at two sizes.
  auto gap = [](int n) {
    const ModelSpec spec = two_class(n, 0.5, 0.1);
    const LabelAssignment labels = assign_labels(spec);
    const Eigen::MatrixXd c = population_centers(spec, labels, class_power(spec, labels, 2));
    const Eigen::MatrixXd xi = signal_proxy(spec, labels, 2).xi;
    return (c - xi).norm() / xi.norm();
  };
  CHECK(gap(400) < gap(100));
  CHECK(gap(400) < 0.02);
}

TEST_CASE("noise split is additive") {
  const ModelSpec spec = three_class(200, 0.9);
  const LabelAssignment labels = assign_labels(spec);
  const SparseGraph A = sample_graph(spec, labels, 11);
  const Matrix X = sample_features(spec, labels, 11);
  const NoiseSplit s = noise_split(spec, labels, A, X, 2, class_power(spec, labels, 2));
  CHECK(s.max_additivity_error <= 1e-10);
  CHECK((s.D - s.delta - s.delta_eps).cwiseAbs().maxCoeff() <= 1e-9 * s.D.cwiseAbs().maxCoeff());
  CHECK((s.delta - s.delta_mu - s.delta_tilde).cwiseAbs().maxCoeff() <= 1e-9 * s.delta.cwiseAbs().maxCoeff());
}

TEST_CASE("deterministic model has zero deviation") {
  // B = 1 off the diagonal makes A the complete graph; sigma = 0 makes X = E[X].
  const ModelSpec spec = make_spec(30, mat(2, 2, {1, 1, 1, 1}), mat(1, 2, {1.0, -2.0}), 0.0, {0.4, 0.6});
  const LabelAssignment labels = assign_labels(spec);
  for (int k = 0; k <= 3; ++k) {
    const SnrReport r = snr(spec, labels, sample_graph(spec, labels, 5), sample_features(spec, labels, 5), k);
    CHECK(r.dev <= 1e-9 * std::max(1.0, r.S_min));
    CHECK(r.S_min > 0.0);
  }
  CHECK(snr_ratio(0.0, 0.0) == 0.0);
  CHECK(std::isinf(snr_ratio(1.0, 0.0)));
}

TEST_CASE("k = 0 deviation is pure feature noise: E[Dev^2] = d sigma^2") {
  const ModelSpec spec = three_class(400, 0.8);
  const LabelAssignment labels = assign_labels(spec);
  const TrialSetup setup = prepare_trials(spec, labels, {0}, false);
  std::vector<double> sq;
  for (int t = 0; t < 200; ++t) {
    const double dev = run_trial(spec, labels, setup, derive_seed(3, Purpose::kTrial, t)).front().dev;
    sq.push_back(dev * dev);
  }
  const double m = mean_of(sq);
  double var = 0.0;
  for (double v : sq) var += (v - m) * (v - m);
  const double se = std::sqrt(var / (sq.size() - 1) / sq.size());
  CHECK(std::abs(m - spec.d * 0.64) <= 4.0 * se);
}

TEST_CASE("exact E[Dev^2] matches Monte Carlo within 3 standard errors") {
  for (int k = 1; k <= 2; ++k) {
    const ModelSpec spec = make_spec(40, mat(2, 2, {0.5, 0.2, 0.2, 0.4}), mat(1, 2, {1.0, -0.5}), 0.6, {0.45, 0.55});
    const LabelAssignment labels = assign_labels(spec);
    const double exact = exact_dev_second_moment(spec, labels, k).total();
    const TrialSetup setup = prepare_trials(spec, labels, {k}, false);
    std::vector<double> sq;
    for (int t = 0; t < 4000; ++t) {
      const double dev = run_trial(spec, labels, setup, derive_seed(17 + k, Purpose::kTrial, t)).front().dev;
      sq.push_back(dev * dev);
    }
    const double m = mean_of(sq);
    double var = 0.0;
    for (double v : sq) var += (v - m) * (v - m);
    const double se = std::sqrt(var / (sq.size() - 1) / sq.size());
    INFO("k=" << k << " exact=" << exact << " mc=" << m << " se=" << se);
    CHECK(std::abs(m - exact) <= 3.0 * se);
  }
}

TEST_CASE("rho is invariant under joint scaling of mu and sigma") {
  ModelSpec a = three_class(300, 0.5);
  ModelSpec b = a;
  b.mu *= 7.5;
  b.sigma *= 7.5;
  const LabelAssignment labels = assign_labels(a);
  const SparseGraph A = sample_graph(a, labels, 9);
  for (int k = 0; k <= 2; ++k) {
    const SnrReport ra = snr(a, labels, A, sample_features(a, labels, 9), k);
    const SnrReport rb = snr(b, labels, A, sample_features(b, labels, 9), k);
    CHECK(rb.rho == doctest::Approx(ra.rho).epsilon(1e-10));
  }
}

TEST_CASE("rho concentrates: coefficient of variation over 50 seeds below 15%") {
  const ModelSpec spec = two_class(2000, 0.05, 0.01, 1.0);
  const LabelAssignment labels = assign_labels(spec);
  const TrialSetup setup = prepare_trials(spec, labels, {1, 2}, false);
  std::vector<double> r1, r2;
  for (int t = 0; t < 50; ++t) {
    const auto out = run_trial(spec, labels, setup, derive_seed(21, Purpose::kTrial, t));
    r1.push_back(out[0].rho);
    r2.push_back(out[1].rho);
  }
  for (const auto* v : {&r1, &r2}) {
    const double m = mean_of(*v);
    double var = 0.0;
    for (double x : *v) var += (x - m) * (x - m);
    CHECK(std::sqrt(var / (v->size() - 1)) / m < 0.15);
  }
}

TEST_CASE("observed set is seeded, sorted and sized") {
  const auto a = observed_set(1000, 0.1, 42);
  const auto b = observed_set(1000, 0.1, 42);
  const auto c = observed_set(1000, 0.1, 43);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.size() == 100);
  CHECK(std::is_sorted(a.begin(), a.end()));
  CHECK(std::adjacent_find(a.begin(), a.end()) == a.end());
  CHECK_THROWS_AS(observed_set(10, 0.0, 1), Error);
}

TEST_CASE("noiseless separated features are classified perfectly") {
  const ModelSpec spec = three_class(300, 0.0);
  const LabelAssignment labels = assign_labels(spec);
  const Matrix X = sample_features(spec, labels, 1);
  const auto obs = observed_set(spec.n, 0.1, 1);
  const LinearClassifier model = fit_linear_classifier(X, labels.y, 3, obs);
  CHECK(misclassification(predict(model, X), labels.y, obs) == 0.0);
}

TEST_CASE("identical classes give chance-level error") {
  const ModelSpec spec = make_spec(2000, mat(2, 2, {0.01, 0.01, 0.01, 0.01}), mat(1, 2, {0.0, 0.0}), 1.0);
  const LabelAssignment labels = assign_labels(spec);
  const TrialSetup setup = prepare_trials(spec, labels, {0}, true);
  std::vector<double> err;
  for (int t = 0; t < 20; ++t) err.push_back(run_trial(spec, labels, setup, derive_seed(2, Purpose::kTrial, t)).front().misclass);
  CHECK(mean_of(err) == doctest::Approx(0.5).epsilon(0.1));
}

TEST_CASE("one hop of an assortative graph beats the raw features") {
  const ModelSpec spec = two_class(2000, 0.02, 0.004, 2.0);
  const LabelAssignment labels = assign_labels(spec);
  const TrialSetup setup = prepare_trials(spec, labels, {0, 1}, true);
  int wins = 0;
  for (int t = 0; t < 20; ++t) {
    const auto out = run_trial(spec, labels, setup, derive_seed(4, Purpose::kTrial, t));
    if (out[1].misclass < out[0].misclass) ++wins;
  }
  CHECK(wins >= 18);
}

TEST_CASE("trial outcomes do not depend on the depth list") {
  const ModelSpec spec = three_class(300);
  const LabelAssignment labels = assign_labels(spec);
  const auto all = run_trial(spec, labels, prepare_trials(spec, labels, {1, 2, 3}, false), 77);
  const auto only = run_trial(spec, labels, prepare_trials(spec, labels, {2}, false), 77);
  CHECK(all[1].k == 2);
  CHECK(all[1].dev == doctest::Approx(only[0].dev).epsilon(1e-12));
}
