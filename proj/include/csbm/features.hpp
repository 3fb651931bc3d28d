#pragma once

#include "csbm/common.hpp"
#include "csbm/config.hpp"
#include "csbm/model.hpp"
#include "csbm/shapes.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace csbm {

// (E[A^k] Y) using the class form, O(n L d).
Matrix apply_class_power(const ClassPower& power, const LabelAssignment& labels, const Matrix& Y);

// Columns are the centers mu~_l = sum_j E[A^k]_ij mu_{y_j} for i in class l (d x L).
// Every anchor i in a class must give the same center, and so must the class average.
Eigen::MatrixXd population_centers(const ModelSpec& spec, const LabelAssignment& labels,
                                   const Eigen::MatrixXd& EAk);
// Same from the class form; rows of E[A^k] are exchangeable within a class by construction.
Eigen::MatrixXd population_centers(const ModelSpec& spec, const LabelAssignment& labels,
                                   const ClassPower& power);

struct SignalProxy {
  Eigen::MatrixXd xi;      // d x L, mu Z^T (Z B Z^T)^k 1_l / n_l
  Eigen::MatrixXd xi_bar;  // d x L, xi / nu^k
  Eigen::MatrixXd S_tilde;  // L x L, |xi_l - xi_l'|
  bool defining_form_dense = false;  // the node-level form was evaluated and matched (n <= 2000)
};

// Reduced form mu (Pi n B)^k e_l; for n <= 2000 the node-level form is also computed and must agree.
SignalProxy signal_proxy(const ModelSpec& spec, const LabelAssignment& labels, int k);

Eigen::MatrixXd pairwise_distances(const Eigen::MatrixXd& columns);
double min_offdiag(const Eigen::MatrixXd& S);

struct SnrReport {
  int k = 0;
  Eigen::MatrixXd centers;  // d x L
  Eigen::MatrixXd S;        // L x L
  double S_min = 0.0;
  double dev = 0.0;
  double rho = 0.0;
  SignalProxy proxy;
};

// Signal part only; dev and rho stay zero.
SnrReport population_signal(const ModelSpec& spec, const LabelAssignment& labels, const ClassPower& power);
// Dev of the aggregated features phi = A^k X about their mean, and rho = Dev / min S.
double deviation(const Matrix& phi, const LabelAssignment& labels, const Eigen::MatrixXd& centers);
double snr_ratio(double dev, double S_min);
SnrReport snr(const ModelSpec& spec, const LabelAssignment& labels, const SparseGraph& A, const Matrix& X, int k);
Json snr_to_json(const SnrReport& report);

struct NoiseSplit {
  Matrix D;            // phi - E[phi]
  Matrix delta;        // (A^k - E[A^k]) X
  Matrix delta_eps;    // E[A^k] (X - E[X])
  Matrix delta_mu;     // (A^k - E[A^k]) E[X]
  Matrix delta_tilde;  // (A^k - E[A^k]) (X - E[X])
  double max_additivity_error = 0.0;  // relative
};

NoiseSplit noise_split(const ModelSpec& spec, const LabelAssignment& labels, const SparseGraph& A, const Matrix& X,
                       int k, const ClassPower& power);
Json noise_split_summary(const NoiseSplit& split);

// ---- linear readout ----
// Seeded uniform sample of round(fraction n) nodes, sorted.
std::vector<int> observed_set(int n, double fraction, std::uint64_t seed);

struct LinearClassifier {
  Eigen::VectorXd scale;  // per-column scaling applied before the weights
  Eigen::MatrixXd W;      // (d + 1) x L, last row is the intercept
  double lambda = 0.0;
};

LinearClassifier fit_linear_classifier(const Matrix& phi, const std::vector<int>& y, int L,
                                       std::span<const int> observed);
std::vector<int> predict(const LinearClassifier& model, const Matrix& phi);
// Fraction of rows outside `observed` whose prediction differs from the truth.
double misclassification(const std::vector<int>& predicted, const std::vector<int>& truth,
                         std::span<const int> observed);

// ---- one sampled trial, several depths on the same graph and features ----
struct TrialOutcome {
  int k = 0;
  double dev = 0.0;
  double rho = 0.0;
  double misclass = -1.0;  // negative when the readout was not run
};

struct TrialSetup {
  std::vector<int> depths;
  std::vector<Eigen::MatrixXd> centers;  // one per depth
  std::vector<double> S_min;             // one per depth
  double observed_fraction = 0.1;
  bool classify = false;
};

TrialSetup prepare_trials(const ModelSpec& spec, const LabelAssignment& labels, std::vector<int> depths,
                          bool classify, double observed_fraction = 0.1);
// Graph, features and observed set come from streams keyed by trial_seed.
std::vector<TrialOutcome> run_trial(const ModelSpec& spec, const LabelAssignment& labels, const TrialSetup& setup,
                                    std::uint64_t trial_seed);

}  // namespace csbm
