#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace csbm {

// Row-major so that node rows of n x d feature matrices are contiguous.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ErrorKind {
  kInvalidArgument,
  kConfig,
  kGuard,
  kNumeric,
  kIo,
  kInternal,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

// Outcome of evaluating one inequality lhs <= rhs.
struct InequalityRecord {
  double lhs = 0.0;
  double rhs = 0.0;
  double margin = 0.0;  // rhs - lhs
  bool satisfied = true;
};

// Relative slack used when an inequality may hold with equality.
inline InequalityRecord evaluate_le(double lhs, double rhs, double rel_slack = 1e-9) {
  InequalityRecord rec;
  rec.lhs = lhs;
  rec.rhs = rhs;
  rec.margin = rhs - lhs;
  double scale = std::max(std::abs(lhs), std::abs(rhs));
  rec.satisfied = lhs <= rhs + rel_slack * scale + 1e-300;
  return rec;
}

}  // namespace csbm
