#include "csbm/features.hpp"

#include "csbm/linalg.hpp"
#include "csbm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace csbm {

namespace {

template <class Derived>
double max_abs(const Eigen::MatrixBase<Derived>& M) {
  return M.size() == 0 ? 0.0 : M.cwiseAbs().maxCoeff();
}

void check_agreement(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol, const std::string& what) {
  const double scale = std::max(max_abs(a), max_abs(b));
  const double diff = max_abs(a - b);
  if (diff > tol * scale && diff > 0.0)
    fail(ErrorKind::kInternal, what + " disagree: difference " + std::to_string(diff) + " at scale " +
                                   std::to_string(scale));
}

}  // namespace

Matrix apply_class_power(const ClassPower& power, const LabelAssignment& labels, const Matrix& Y) {
  const int n = labels.n();
  const int L = labels.classes();
  require(Y.rows() == n, ErrorKind::kInvalidArgument, "row count does not match the labels");
  Matrix sums = Matrix::Zero(L, Y.cols());
  for (int j = 0; j < n; ++j) sums.row(labels.y[j]) += Y.row(j);
  const Matrix by_class = power.off * sums;  // L x d
  Matrix out(n, Y.cols());
  for (int i = 0; i < n; ++i) {
    const int a = labels.y[i];
    out.row(i) = by_class.row(a) + (power.diag[a] - power.off(a, a)) * Y.row(i);
  }
  return out;
}

Eigen::MatrixXd population_centers(const ModelSpec& spec, const LabelAssignment& labels, const Eigen::MatrixXd& EAk) {
  const int n = labels.n();
  require(EAk.rows() == n && EAk.cols() == n, ErrorKind::kInvalidArgument, "E[A^k] must be n x n");
  const Matrix means = mean_features(spec, labels);
  const Matrix per_node = EAk * means;  // row i is the center seen from anchor i
  Eigen::MatrixXd centers(spec.d, labels.classes());
  for (int l = 0; l < labels.classes(); ++l) {
    require(!labels.members[l].empty(), ErrorKind::kInvalidArgument, "empty class");
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(spec.d);
    for (int i : labels.members[l]) avg += per_node.row(i).transpose();
    avg /= static_cast<double>(labels.members[l].size());
    for (int i : labels.members[l])
      check_agreement(per_node.row(i).transpose(), avg, 1e-9, "class centers from different anchors");
    centers.col(l) = avg;
  }
  return centers;
}

Eigen::MatrixXd population_centers(const ModelSpec& spec, const LabelAssignment& labels, const ClassPower& power) {
  const int L = labels.classes();
  Eigen::MatrixXd centers = Eigen::MatrixXd::Zero(spec.d, L);
  for (int a = 0; a < L; ++a) {
    centers.col(a) = power.diag[a] * spec.mu.col(a);
    for (int b = 0; b < L; ++b)
      centers.col(a) += (labels.counts[b] - (a == b ? 1.0 : 0.0)) * power.off(a, b) * spec.mu.col(b);
  }
  return centers;
}

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& columns) {
  const Eigen::Index L = columns.cols();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(L, L);
  for (Eigen::Index a = 0; a < L; ++a)
    for (Eigen::Index b = a + 1; b < L; ++b) S(a, b) = S(b, a) = (columns.col(a) - columns.col(b)).norm();
  return S;
}

double min_offdiag(const Eigen::MatrixXd& S) {
  require(S.rows() >= 2, ErrorKind::kInvalidArgument, "at least two classes are needed for a signal");
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index a = 0; a < S.rows(); ++a)
    for (Eigen::Index b = 0; b < S.cols(); ++b)
      if (a != b) best = std::min(best, S(a, b));
  return best;
}

SignalProxy signal_proxy(const ModelSpec& spec, const LabelAssignment& labels, int k) {
  require(k >= 0, ErrorKind::kInvalidArgument, "depth must be nonnegative");
  const int n = labels.n();
  const int L = labels.classes();
  SignalProxy out;
  Eigen::MatrixXd T = spec.B;
  for (int a = 0; a < L; ++a) T.row(a) *= static_cast<double>(labels.counts[a]);  // Pi n B
  Eigen::MatrixXd reduced = spec.mu;
  for (int s = 0; s < k; ++s) reduced = reduced * T;
  // The node-level form mu Z^T (Z B Z^T)^k 1_l / n_l costs O(k n^2) and is only evaluated for small graphs.
  out.defining_form_dense = n <= 2000;
  if (out.defining_form_dense) {
    const Eigen::MatrixXd P = ExpectedAdjacency(spec, labels).dense_P();
    Eigen::MatrixXd defining(spec.d, L);
    for (int l = 0; l < L; ++l) {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
      for (int i : labels.members[l]) v[i] = 1.0 / labels.counts[l];
      for (int s = 0; s < k; ++s) v = P * v;
      Eigen::VectorXd col = Eigen::VectorXd::Zero(spec.d);
      for (int i = 0; i < n; ++i) col += v[i] * spec.mu.col(labels.y[i]);
      defining.col(l) = col;
    }
    check_agreement(defining, reduced, 1e-8, "defining and reduced signal proxies");
  }
  out.xi = reduced;
  const double nu = spec.nu();
  out.xi_bar = nu > 0.0 ? Eigen::MatrixXd(reduced / std::pow(nu, k)) : Eigen::MatrixXd(reduced * 0.0);
  out.S_tilde = pairwise_distances(out.xi);
  return out;
}

SnrReport population_signal(const ModelSpec& spec, const LabelAssignment& labels, const ClassPower& power) {
  require(labels.classes() >= 2, ErrorKind::kInvalidArgument, "at least two classes are needed for a signal");
  SnrReport rep;
  rep.k = power.k;
  rep.centers = population_centers(spec, labels, power);
  rep.S = pairwise_distances(rep.centers);
  rep.S_min = min_offdiag(rep.S);
  rep.proxy = signal_proxy(spec, labels, power.k);
  return rep;
}

double deviation(const Matrix& phi, const LabelAssignment& labels, const Eigen::MatrixXd& centers) {
  const int n = labels.n();
  double total = 0.0;
  for (int i = 0; i < n; ++i) total += (phi.row(i).transpose() - centers.col(labels.y[i])).squaredNorm();
  return std::sqrt(total / n);
}

double snr_ratio(double dev, double S_min) {
  if (dev == 0.0) return 0.0;
  if (S_min == 0.0) return std::numeric_limits<double>::infinity();
  return dev / S_min;
}

SnrReport snr(const ModelSpec& spec, const LabelAssignment& labels, const SparseGraph& A, const Matrix& X, int k) {
  SnrReport rep = population_signal(spec, labels, class_power(spec, labels, k));
  rep.dev = deviation(aggregate_power(A, X, k), labels, rep.centers);
  rep.rho = snr_ratio(rep.dev, rep.S_min);
  return rep;
}

Json snr_to_json(const SnrReport& report) {
  auto matrix = [](const Eigen::MatrixXd& M) {
    Json rows = Json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
      Json row = Json::array();
      for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
      rows.push_back(row);
    }
    return rows;
  };
  Eigen::MatrixXd centers_t = report.centers.transpose();
  Eigen::MatrixXd xi_t = report.proxy.xi.transpose();
  Eigen::MatrixXd xi_bar_t = report.proxy.xi_bar.transpose();
  return Json{{"k", report.k},
              {"centers", matrix(centers_t)},
              {"S", matrix(report.S)},
              {"S_min", report.S_min},
              {"dev", report.dev},
              {"rho", std::isfinite(report.rho) ? Json(report.rho) : Json("inf")},
              {"xi", matrix(xi_t)},
              {"xi_bar", matrix(xi_bar_t)},
              {"S_tilde", matrix(report.proxy.S_tilde)}};
}

NoiseSplit noise_split(const ModelSpec& spec, const LabelAssignment& labels, const SparseGraph& A, const Matrix& X,
                       int k, const ClassPower& power) {
  require(power.k == k, ErrorKind::kInvalidArgument, "class power depth does not match");
  const Matrix means = mean_features(spec, labels);
  const Matrix eps = X - means;
  const Matrix EAk_means = apply_class_power(power, labels, means);
  const Matrix EAk_eps = apply_class_power(power, labels, eps);
  const Matrix Ak_X = aggregate_power(A, X, k);

  NoiseSplit out;
  out.D = Ak_X - EAk_means;
  out.delta = Ak_X - apply_class_power(power, labels, X);
  out.delta_eps = EAk_eps;
  out.delta_mu = aggregate_power(A, means, k) - EAk_means;
  out.delta_tilde = aggregate_power(A, eps, k) - EAk_eps;

  const double scale = std::max({max_abs(out.D), max_abs(out.delta), max_abs(out.delta_eps)});
  if (scale > 0.0) {
    const double e1 = max_abs(out.D - out.delta - out.delta_eps) / scale;
    const double e2 = max_abs(out.delta - out.delta_mu - out.delta_tilde) / scale;
    out.max_additivity_error = std::max(e1, e2);
  }
  if (out.max_additivity_error > 1e-8)
    fail(ErrorKind::kInternal, "noise components are not additive: relative error " +
                                   std::to_string(out.max_additivity_error));
  return out;
}

Json noise_split_summary(const NoiseSplit& split) {
  auto ms = [](const Matrix& M) { return M.size() == 0 ? 0.0 : M.squaredNorm() / static_cast<double>(M.rows()); };
  return Json{{"mean_sq_D", ms(split.D)},
              {"mean_sq_delta", ms(split.delta)},
              {"mean_sq_delta_eps", ms(split.delta_eps)},
              {"mean_sq_delta_mu", ms(split.delta_mu)},
              {"mean_sq_delta_tilde", ms(split.delta_tilde)},
              {"max_additivity_error", split.max_additivity_error}};
}

std::vector<int> observed_set(int n, double fraction, std::uint64_t seed) {
  require(n >= 1, ErrorKind::kInvalidArgument, "empty node set");
  require(fraction > 0.0 && fraction <= 1.0, ErrorKind::kInvalidArgument, "observed fraction must be in (0, 1]");
  const int m = std::clamp(static_cast<int>(std::llround(fraction * n)), 1, n);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Stream rng(seed, Purpose::kObserved);
  for (int i = 0; i < m; ++i) std::swap(idx[i], idx[i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)))]);
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

LinearClassifier fit_linear_classifier(const Matrix& phi, const std::vector<int>& y, int L,
                                       std::span<const int> observed) {
  const Eigen::Index d = phi.cols();
  require(static_cast<Eigen::Index>(y.size()) == phi.rows(), ErrorKind::kInvalidArgument, "label count mismatch");
  require(!observed.empty(), ErrorKind::kInvalidArgument, "observed set is empty");
  std::vector<int> seen(L, 0);
  for (int i : observed) seen[y[i]]++;
  for (int l = 0; l < L; ++l)
    require(seen[l] > 0, ErrorKind::kInvalidArgument, "class " + std::to_string(l + 1) + " missing from observed set");

  LinearClassifier model;
  // Columns are rescaled to unit RMS on the observed rows so the intercept is not swamped at large depth.
  model.scale = Eigen::VectorXd::Ones(d);
  for (Eigen::Index c = 0; c < d; ++c) {
    double ss = 0.0;
    for (int i : observed) ss += phi(i, c) * phi(i, c);
    const double rms = std::sqrt(ss / observed.size());
    if (rms > 0.0) model.scale[c] = rms;
  }
  const Eigen::Index m = static_cast<Eigen::Index>(observed.size());
  Eigen::MatrixXd F(m, d + 1);
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, L);
  for (Eigen::Index r = 0; r < m; ++r) {
    const int i = observed[r];
    for (Eigen::Index c = 0; c < d; ++c) F(r, c) = phi(i, c) / model.scale[c];
    F(r, d) = 1.0;
    T(r, y[i]) = 1.0;
  }
  Eigen::MatrixXd G = F.transpose() * F;
  model.lambda = 1e-6 * G.trace() / static_cast<double>(d + 1);
  G.diagonal().array() += model.lambda;
  model.W = G.ldlt().solve(F.transpose() * T);
  return model;
}

std::vector<int> predict(const LinearClassifier& model, const Matrix& phi) {
  const Eigen::Index d = phi.cols();
  require(model.W.rows() == d + 1, ErrorKind::kInvalidArgument, "feature width does not match the classifier");
  std::vector<int> out(phi.rows());
  Eigen::VectorXd f(d + 1);
  for (Eigen::Index i = 0; i < phi.rows(); ++i) {
    for (Eigen::Index c = 0; c < d; ++c) f[c] = phi(i, c) / model.scale[c];
    f[d] = 1.0;
    const Eigen::VectorXd score = model.W.transpose() * f;
    int best = 0;
    for (Eigen::Index l = 1; l < score.size(); ++l)
      if (score[l] > score[best]) best = static_cast<int>(l);
    out[i] = best;
  }
  return out;
}

double misclassification(const std::vector<int>& predicted, const std::vector<int>& truth,
                         std::span<const int> observed) {
  require(predicted.size() == truth.size(), ErrorKind::kInvalidArgument, "prediction length mismatch");
  std::vector<char> in_obs(truth.size(), 0);
  for (int i : observed) in_obs[i] = 1;
  std::size_t wrong = 0, total = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (in_obs[i]) continue;
    ++total;
    if (predicted[i] != truth[i]) ++wrong;
  }
  require(total > 0, ErrorKind::kInvalidArgument, "no held-out nodes");
  return static_cast<double>(wrong) / static_cast<double>(total);
}

TrialSetup prepare_trials(const ModelSpec& spec, const LabelAssignment& labels, std::vector<int> depths, bool classify,
                          double observed_fraction) {
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());
  require(!depths.empty() && depths.front() >= 0, ErrorKind::kInvalidArgument, "invalid depth list");
  TrialSetup setup;
  setup.depths = depths;
  setup.classify = classify;
  setup.observed_fraction = observed_fraction;
  for (int k : depths) {
    const ClassPower power = class_power(spec, labels, k);
    setup.centers.push_back(population_centers(spec, labels, power));
    setup.S_min.push_back(min_offdiag(pairwise_distances(setup.centers.back())));
  }
  return setup;
}

std::vector<TrialOutcome> run_trial(const ModelSpec& spec, const LabelAssignment& labels, const TrialSetup& setup,
                                    std::uint64_t trial_seed) {
  const SparseGraph A = sample_graph(spec, labels, trial_seed);
  Matrix phi = sample_features(spec, labels, trial_seed);
  std::vector<int> observed;
  if (setup.classify) observed = observed_set(spec.n, setup.observed_fraction, trial_seed);
  std::vector<TrialOutcome> out;
  int current = 0;
  for (std::size_t q = 0; q < setup.depths.size(); ++q) {
    const int k = setup.depths[q];
    phi = aggregate_power(A, phi, k - current);
    current = k;
    TrialOutcome t;
    t.k = k;
    t.dev = deviation(phi, labels, setup.centers[q]);
    t.rho = snr_ratio(t.dev, setup.S_min[q]);
    if (setup.classify) {
      const LinearClassifier model = fit_linear_classifier(phi, labels.y, labels.classes(), observed);
      t.misclass = misclassification(predict(model, phi), labels.y, observed);
    }
    out.push_back(t);
  }
  return out;
}

}  // namespace csbm
