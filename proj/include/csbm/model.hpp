#pragma once

#include "csbm/common.hpp"
#include "csbm/config.hpp"

#include <cstdint>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace csbm {

// Feature noise law. All three have mean zero and variance sigma^2.
enum class NoiseKind { kGaussian, kRademacher, kUniform };

std::string noise_name(NoiseKind kind);
NoiseKind noise_from_name(const std::string& name);

// E[e^j] for the noise e with scale sigma.
double noise_central_moment(NoiseKind kind, double sigma, int j);
// E[(mean + e)^a] for integer a >= 0.
double noise_raw_moment(NoiseKind kind, double mean, double sigma, int a);

struct ModelSpec {
  int n = 0;
  int d = 1;
  int L = 2;
  Eigen::MatrixXd B;       // L x L, symmetric, entries in [0, 1]
  std::vector<double> pi;  // class proportions
  Eigen::MatrixXd mu;      // d x L, column l is the center of class l
  double sigma = 0.0;
  int k = 1;
  NoiseKind noise = NoiseKind::kGaussian;

  void validate() const;
  double p_max() const { return B.size() == 0 ? 0.0 : B.maxCoeff(); }
  double nu() const { return static_cast<double>(n) * p_max(); }
};

ModelSpec model_from_json(const Json& doc);
Json model_to_json(const ModelSpec& spec);
ModelSpec model_from_text(std::string_view text, ConfigFormat format = ConfigFormat::kAuto);
ModelSpec load_model(const std::string& path);

// Classes are 0-based internally; serialized labels are 1-based.
struct LabelAssignment {
  std::vector<int> y;
  std::vector<int> counts;
  std::vector<std::vector<int>> members;

  int n() const { return static_cast<int>(y.size()); }
  int classes() const { return static_cast<int>(counts.size()); }
  Eigen::MatrixXd membership() const;     // Z, n x L
  std::vector<double> proportions() const;  // n_l / n
};

// Contiguous blocks sized by largest-remainder rounding of pi * n, ties to the lower class.
LabelAssignment assign_labels(const ModelSpec& spec);
LabelAssignment labels_from_classes(std::vector<int> y, int L);

// E[A] = P - diag(P) with P = Z B Z^T, kept in block form.
class ExpectedAdjacency {
 public:
  ExpectedAdjacency(const ModelSpec& spec, const LabelAssignment& labels);

  int n() const { return static_cast<int>(y_.size()); }
  double entry(int i, int j) const { return i == j ? 0.0 : B_(y_[i], y_[j]); }
  double p_entry(int i, int j) const { return B_(y_[i], y_[j]); }
  Eigen::MatrixXd dense() const;
  Eigen::MatrixXd dense_P() const;
  // out = E[A] x, O(nL).
  void apply(std::span<const double> x, std::span<double> out) const;
  void apply_P(std::span<const double> x, std::span<double> out) const;
  // diag(sqrt(n_l)) B diag(sqrt(n_l)); shares the nonzero spectrum of P.
  Eigen::MatrixXd reduced_P() const;
  const Eigen::MatrixXd& B() const { return B_; }
  const std::vector<int>& classes() const { return y_; }
  const std::vector<int>& counts() const { return counts_; }

 private:
  Eigen::MatrixXd B_;
  std::vector<int> y_;
  std::vector<int> counts_;
};

class SparseGraph {
 public:
  SparseGraph() = default;
  // Each undirected edge once with i < j; duplicates are rejected.
  static SparseGraph from_edges(int n, std::vector<std::pair<int, int>> edges);

  int n() const { return n_; }
  std::size_t edge_count() const { return adjacency_.size() / 2; }
  std::span<const int> neighbors(int i) const {
    return {adjacency_.data() + offsets_[i], adjacency_.data() + offsets_[i + 1]};
  }
  int degree(int i) const { return static_cast<int>(offsets_[i + 1] - offsets_[i]); }
  bool has_edge(int i, int j) const;
  std::vector<std::pair<int, int>> edges() const;
  Eigen::MatrixXd dense() const;
  void apply(std::span<const double> x, std::span<double> out) const;
  void write_edge_list(std::ostream& out) const;

 private:
  int n_ = 0;
  std::vector<std::int64_t> offsets_{0};
  std::vector<int> adjacency_;
};

SparseGraph sample_graph(const ModelSpec& spec, const LabelAssignment& labels, std::uint64_t seed);
Matrix sample_features(const ModelSpec& spec, const LabelAssignment& labels, std::uint64_t seed);
// Row i is mu_{y_i}; this is E[X].
Matrix mean_features(const ModelSpec& spec, const LabelAssignment& labels);

// Pi * nB / nu with Pi = diag(n_l / n).
Eigen::MatrixXd normalized_transition(const ModelSpec& spec, const LabelAssignment& labels);
// Columns are the growth-normalized aggregated centers mu (Pi nB/nu)^k e_l.
Eigen::MatrixXd normalized_centers(const ModelSpec& spec, const LabelAssignment& labels, int k);
// min over pairs of the normalized center gap divided by sqrt(d), before clamping.
double separation_factor_raw(const ModelSpec& spec, const LabelAssignment& labels, int k);

struct AssumptionConstants {
  double c_B = 0.5;
  double C_B = 1.0;
  double delta = std::numeric_limits<double>::infinity();
  double c_nu = 0.1;
  double c_pi = 0.5;
  // When unset the tightest admissible value is used and flagged as derived.
  std::optional<double> C_pi;
  std::optional<double> C_mu;
};

struct AssumptionItem {
  bool satisfied = false;
  double margin = 0.0;  // positive when satisfied
  std::string detail;
};

struct AssumptionReport {
  AssumptionConstants constants;
  double C_pi = 0.0;
  double C_mu = 0.0;
  bool C_pi_derived = false;
  bool C_mu_derived = false;
  double c_xi = 0.0;      // clamped to 1
  double c_xi_raw = 0.0;  // before clamping
  Eigen::MatrixXd xi_bar;  // d x L
  std::vector<std::vector<int>> index_sets;  // I_l per class
  AssumptionItem a1, a2, a3, a4, a5;

  bool all_satisfied() const {
    return a1.satisfied && a2.satisfied && a3.satisfied && a4.satisfied && a5.satisfied;
  }
};

AssumptionReport check_assumptions(const ModelSpec& spec, const LabelAssignment& labels,
                                   const AssumptionConstants& constants = {});
AssumptionReport check_assumptions(const ModelSpec& spec, const LabelAssignment& labels, int k,
                                   const AssumptionConstants& constants);
Json assumptions_to_json(const AssumptionReport& report);

}  // namespace csbm
