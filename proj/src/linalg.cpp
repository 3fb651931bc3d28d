#include "csbm/linalg.hpp"

#include "csbm/parallel.hpp"
#include "csbm/rng.hpp"

#include <algorithm>
#include <cmath>

namespace csbm {

Matrix aggregate_power(const SparseGraph& A, const Matrix& X, int k) {
  require(k >= 0, ErrorKind::kInvalidArgument, "aggregation depth must be nonnegative");
  require(X.rows() == A.n(), ErrorKind::kInvalidArgument, "feature rows do not match graph size");
  Matrix cur = X;
  if (k == 0) return cur;
  const int n = A.n();
  const Eigen::Index d = X.cols();
  Matrix next(n, d);
  for (int step = 0; step < k; ++step) {
    const double* src = cur.data();
    double* dst = next.data();
    for (int i = 0; i < n; ++i) {
      double* out = dst + static_cast<std::ptrdiff_t>(i) * d;
      std::fill(out, out + d, 0.0);
      for (int j : A.neighbors(i)) {
        const double* in = src + static_cast<std::ptrdiff_t>(j) * d;
        for (Eigen::Index m = 0; m < d; ++m) out[m] += in[m];
      }
    }
    cur.swap(next);
  }
  return cur;
}

namespace {

template <class Apply>
Eigen::MatrixXd rows_by_matvec(int n, int k, std::span<const int> rows, Apply&& apply) {
  require(k >= 1, ErrorKind::kInvalidArgument, "power must be at least 1");
  require(!rows.empty(), ErrorKind::kInvalidArgument, "row set must be nonempty");
  Eigen::MatrixXd out(rows.size(), n);
  std::vector<double> a(n), b(n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    require(rows[r] >= 0 && rows[r] < n, ErrorKind::kInvalidArgument, "row index out of range");
    std::fill(a.begin(), a.end(), 0.0);
    a[rows[r]] = 1.0;
    // Both operators are symmetric, so M^k e_i is row i.
    for (int s = 0; s < k; ++s) {
      apply(std::span<const double>(a), std::span<double>(b));
      std::swap(a, b);
    }
    for (int j = 0; j < n; ++j) out(r, j) = a[j];
  }
  return out;
}

}  // namespace

Eigen::MatrixXd power_rows(const SparseGraph& A, int k, std::span<const int> rows) {
  return rows_by_matvec(A.n(), k, rows, [&](auto x, auto y) { A.apply(x, y); });
}

Eigen::MatrixXd power_rows(const ExpectedAdjacency& EA, int k, std::span<const int> rows) {
  return rows_by_matvec(EA.n(), k, rows, [&](auto x, auto y) { EA.apply(x, y); });
}

Eigen::VectorXd expected_power_apply(const ExpectedAdjacency& EA, int k, const Eigen::VectorXd& v) {
  Eigen::VectorXd a = v, b(v.size());
  for (int s = 0; s < k; ++s) {
    EA.apply(std::span<const double>(a.data(), a.size()), std::span<double>(b.data(), b.size()));
    a.swap(b);
  }
  return a;
}

OpNormEstimate opnorm_symmetric(int n, const LinearOperator& op, const OpNormOptions& options) {
  OpNormEstimate est;
  if (n <= 0) {
    est.converged = true;
    return est;
  }
  // Basis memory is n * steps; the cap keeps it bounded for large n.
  const int max_steps = std::min({n, options.max_iterations, std::max(64, 40'000'000 / n)});
  Stream rng(options.seed, Purpose::kStartVector);
  std::vector<Eigen::VectorXd> basis;
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  v.normalize();
  basis.push_back(v);
  std::vector<double> alpha, beta;
  Eigen::VectorXd w(n);
  for (int j = 0; j < max_steps; ++j) {
    op(std::span<const double>(basis[j].data(), n), std::span<double>(w.data(), n));
    const double a = basis[j].dot(w);
    w -= a * basis[j];
    if (j > 0) w -= beta[j - 1] * basis[j - 1];
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& q : basis) w -= q.dot(w) * q;
    const double b = w.norm();
    alpha.push_back(a);
    est.iterations = j + 1;

    const int m = j + 1;
    Eigen::VectorXd diag = Eigen::Map<Eigen::VectorXd>(alpha.data(), m);
    Eigen::VectorXd sub(std::max(0, m - 1));
    for (int q = 0; q + 1 < m; ++q) sub[q] = beta[q];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
    eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
    const auto& vals = eig.eigenvalues();
    Eigen::Index idx = std::abs(vals[0]) >= std::abs(vals[m - 1]) ? 0 : m - 1;
    const double theta = std::abs(vals[idx]);
    const double resid = b * std::abs(eig.eigenvectors()(m - 1, idx));
    est.value = theta;
    est.residual = theta > 0.0 ? resid / theta : resid;
    const double scale = std::max(theta, 1e-300);
    if (b <= 1e-13 * std::max(scale, std::abs(a)) || resid <= options.tolerance * scale || m == n) {
      est.converged = true;
      if (b <= 1e-13 * std::max(scale, std::abs(a)) || m == n) est.residual = 0.0;
      return est;
    }
    beta.push_back(b);
    basis.push_back(w / b);
  }
  est.converged = false;
  return est;
}

OpNormEstimate opnorm(const Eigen::MatrixXd& M, const OpNormOptions& options) {
  require(M.rows() > 0, ErrorKind::kInvalidArgument, "empty matrix");
  const double size = M.norm();
  if (size == 0.0) return {0.0, 0, 0.0, true};
  const bool symmetric = M.rows() == M.cols() && (M - M.transpose()).norm() <= 1e-14 * size;
  if (symmetric) {
    const int n = static_cast<int>(M.rows());
    return opnorm_symmetric(
        n,
        [&](std::span<const double> x, std::span<double> y) {
          Eigen::Map<Eigen::VectorXd>(y.data(), n) = M * Eigen::Map<const Eigen::VectorXd>(x.data(), n);
        },
        options);
  }
  const int c = static_cast<int>(M.cols());
  Eigen::VectorXd tmp(M.rows());
  OpNormEstimate est = opnorm_symmetric(
      c,
      [&](std::span<const double> x, std::span<double> y) {
        tmp = M * Eigen::Map<const Eigen::VectorXd>(x.data(), c);
        Eigen::Map<Eigen::VectorXd>(y.data(), c) = M.transpose() * tmp;
      },
      options);
  est.value = std::sqrt(est.value);
  est.residual *= 0.5;
  return est;
}

double opnorm_P(const ExpectedAdjacency& EA) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(EA.reduced_P(), Eigen::EigenvaluesOnly);
  return eig.eigenvalues().cwiseAbs().maxCoeff();
}

double expected_power_gap_norm(const ExpectedAdjacency& EA, int k) {
  const Eigen::MatrixXd R = EA.reduced_P();
  const Eigen::Index L = R.rows();
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(L, L);
  for (Eigen::Index a = 0; a < L; ++a) D(a, a) = EA.B()(a, a);
  Eigen::MatrixXd E = R - D;
  Eigen::MatrixXd Ek = Eigen::MatrixXd::Identity(L, L), Rk = Ek;
  for (int s = 0; s < k; ++s) {
    Ek = Ek * E;
    Rk = Rk * R;
  }
  Eigen::MatrixXd gap = Ek - Rk;
  gap = 0.5 * (gap + gap.transpose());
  double best = 0.0;
  if (L > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gap, Eigen::EigenvaluesOnly);
    best = eig.eigenvalues().cwiseAbs().maxCoeff();
  }
  // On zero-sum vectors within a class, E[A] acts as -B_ll and P vanishes.
  for (Eigen::Index a = 0; a < L; ++a)
    if (EA.counts()[a] >= 2) best = std::max(best, std::pow(std::abs(EA.B()(a, a)), k));
  return best;
}

MonomialDeviation check_monomial_deviation(const Eigen::MatrixXd& U, const Eigen::MatrixXd& V, int k) {
  require(U.rows() == U.cols() && U.rows() == V.rows() && V.cols() == V.rows(),
          ErrorKind::kInvalidArgument, "U and V must be square of equal size");
  require(k >= 1, ErrorKind::kInvalidArgument, "k must be positive");
  Eigen::MatrixXd Uk = Eigen::MatrixXd::Identity(U.rows(), U.cols()), Vk = Uk;
  for (int s = 0; s < k; ++s) {
    Uk = Uk * U;
    Vk = Vk * V;
  }
  MonomialDeviation out;
  out.lhs = opnorm(Uk - Vk).value;
  const double diff = opnorm(U - V).value;
  const double nu = opnorm(U).value;
  const double nv = opnorm(V).value;
  const double dev_rhs = k * std::pow(2.0, k - 2) * diff * (std::pow(diff, k - 1) + std::pow(nv, k - 1));
  const double max_rhs = k * diff * std::pow(std::max(nu, nv), k - 1);
  // Solver tolerance is 1e-8 relative; equality cases (k = 1) need that much slack.
  out.deviation_form = evaluate_le(out.lhs, dev_rhs, 1e-7);
  out.max_form = evaluate_le(out.lhs, max_rhs, 1e-7);
  return out;
}

InequalityRecord check_EAk_Pk(const ModelSpec& spec, const LabelAssignment& labels, int k) {
  ExpectedAdjacency EA(spec, labels);
  const double lhs = expected_power_gap_norm(EA, k);
  const double rhs = k * std::pow(spec.nu(), k) / spec.n;
  return evaluate_le(lhs, rhs, 1e-10);
}

double concentration_constant(int k, const ConcentrationConstants& c) {
  return k * std::pow(2.0, k) * std::pow(c.C + std::sqrt((c.c / c.c_nu_prime) * (k + 1)), k);
}

ConcentrationStats mc_Ak_concentration(const ModelSpec& spec, const LabelAssignment& labels, int k,
                                       int trials, std::uint64_t seed,
                                       const ConcentrationConstants& constants, unsigned threads) {
  require(trials >= 1, ErrorKind::kInvalidArgument, "trials must be positive");
  ExpectedAdjacency EA(spec, labels);
  const int n = spec.n;
  std::vector<OpNormEstimate> results(trials);
  parallel_for(trials, threads, [&](std::size_t t) {
    SparseGraph A = sample_graph(spec, labels, derive_seed(seed, Purpose::kTrial, t));
    std::vector<double> a(n), b(n), c(n), e(n);
    auto op = [&](std::span<const double> x, std::span<double> y) {
      std::copy(x.begin(), x.end(), a.begin());
      std::copy(x.begin(), x.end(), c.begin());
      for (int s = 0; s < k; ++s) {
        A.apply(a, b);
        std::swap(a, b);
        EA.apply(c, e);
        std::swap(c, e);
      }
      for (int i = 0; i < n; ++i) y[i] = a[i] - c[i];
    };
    OpNormOptions opts;
    opts.seed = derive_seed(seed, Purpose::kStartVector, t);
    opts.tolerance = 1e-6;
    results[t] = opnorm_symmetric(n, op, opts);
  });
  ConcentrationStats stats;
  stats.trials = trials;
  double sum = 0.0, sum2 = 0.0;
  for (const auto& r : results) {
    sum += r.value;
    sum2 += r.value * r.value;
    if (!r.converged) stats.unconverged++;
  }
  stats.mean = sum / trials;
  const double var = trials > 1 ? std::max(0.0, (sum2 - trials * stats.mean * stats.mean) / (trials - 1)) : 0.0;
  stats.std_error = std::sqrt(var / trials);
  const double nu = spec.nu();
  stats.bound = concentration_constant(k, constants) * std::pow(nu, k - 0.5);
  stats.ratio = stats.mean / std::pow(nu, k - 0.5);
  stats.precondition = nu >= constants.c_nu_prime * std::log(static_cast<double>(n)) &&
                       constants.c_nu_prime * std::log(static_cast<double>(n)) >= 1.0;
  return stats;
}

}  // namespace csbm
