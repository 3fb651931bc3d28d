#pragma once

#include "csbm/common.hpp"
#include "csbm/model.hpp"
#include "csbm/walks.hpp"

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

namespace csbm {

// Exact walk sums grouped by vertex-label pattern. A pattern records which positions of the walks
// share a vertex; summing its edge weights over class assignments, times the number of ways to
// pick distinct vertices with those classes, gives the exact sum over all labelled walks at any n.

// E[A^k] in class form: entries depend only on (y_i, y_j, i == j).
struct ClassPower {
  int k = 0;
  Eigen::VectorXd diag;       // E[A^k]_ii with y_i = a
  Eigen::VectorXd diag_tree;  // the part of diag from closed walks whose graph is a tree
  Eigen::MatrixXd off;        // E[A^k]_ij with i != j, y_i = a, y_j = b

  double entry(const LabelAssignment& labels, int i, int j) const {
    return i == j ? diag[labels.y[i]] : off(labels.y[i], labels.y[j]);
  }
  Eigen::MatrixXd dense(const LabelAssignment& labels) const;
  Eigen::VectorXd row(const LabelAssignment& labels, int i) const;
  // (sum_j E[A^k]_ij^2) for y_i = a.
  Eigen::VectorXd row_sq_norms(const std::vector<int>& counts) const;
  // (sum_{j != i} E[A^k]_ij^2) for y_i = a.
  Eigen::VectorXd offdiag_sq_norms(const std::vector<int>& counts) const;
};

ClassPower class_power(const Eigen::MatrixXd& B, const std::vector<int>& counts, int k);
ClassPower class_power(const ModelSpec& spec, const LabelAssignment& labels, int k);

GrowthCheck check_Akij_growth(const ModelSpec& spec, const LabelAssignment& labels, const ClassPower& power);

// Exact E[Delta_im^r] and the (t, v) census for a root in class `root_class`, feature coordinate m.
struct ShapeMoment {
  int r = 0, k = 0;
  double moment = 0.0;
  double theta_hi = 0.0;
  double theta_lo = 0.0;
  std::map<std::pair<int, int>, CensusCell> cells;  // overlapping sequences only
  std::uint64_t patterns = 0;
  std::uint64_t maximal_patterns = 0;  // label patterns in the maximal cell; equals (r-1)!!
  std::uint64_t maximal_violations = 0;  // maximal patterns failing a structural clause
};

struct ShapeGuard {
  int max_positions = 10;  // r k
};

ShapeMoment shape_moment(const ModelSpec& spec, const LabelAssignment& labels, int root_class, int m, int r,
                         int k, const ShapeGuard& guard = {});

// E[Dev^2] = n^-1 sum_{i,m} (E[Delta_im^2] + sigma^2 sum_j E[A^k]_ij^2), exact.
struct DevSecondMoment {
  double graph_part = 0.0;    // n^-1 sum E[Delta^2]
  double feature_part = 0.0;  // n^-1 sum E[(Delta^eps)^2]
  double total() const { return graph_part + feature_part; }
};

DevSecondMoment exact_dev_second_moment(const ModelSpec& spec, const LabelAssignment& labels, int k);

}  // namespace csbm
