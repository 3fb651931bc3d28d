#include "csbm/shapes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>

namespace csbm {

namespace {

// Restricted-growth labellings of r rooted walks of length k. Root positions carry label 0,
// consecutive positions of one walk differ, and each new label is one more than the largest so far.
template <class Fn>
void for_each_pattern(int r, int k, Fn&& fn) {
  const int width = k + 1;
  std::vector<int> lab(static_cast<std::size_t>(r) * width, 0);
  const int positions = r * k;
  auto rec = [&](auto&& self, int g, int top) -> void {
    if (g == positions) {
      fn(lab, top + 1);
      return;
    }
    const int s = g / k;
    const int p = g % k + 1;
    const int prev = lab[s * width + p - 1];
    for (int l = 0; l <= top + 1; ++l) {
      if (l == prev) continue;
      lab[s * width + p] = l;
      self(self, g + 1, std::max(top, l));
    }
  };
  rec(rec, 0, 0);
}

int label_pair(int u, int v) {
  if (u > v) std::swap(u, v);
  return v * (v - 1) / 2 + u;  // dense index for u < v
}

// Advances a base-L odometer over digits[1..]; returns false after the last assignment.
bool next_assignment(std::vector<int>& digits, int L) {
  for (std::size_t q = 1; q < digits.size(); ++q) {
    if (++digits[q] < L) return true;
    digits[q] = 0;
  }
  return false;
}

}  // namespace

Eigen::MatrixXd ClassPower::dense(const LabelAssignment& labels) const {
  const int n = labels.n();
  Eigen::MatrixXd out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = entry(labels, i, j);
  return out;
}

Eigen::VectorXd ClassPower::row(const LabelAssignment& labels, int i) const {
  Eigen::VectorXd out(labels.n());
  for (int j = 0; j < labels.n(); ++j) out[j] = entry(labels, i, j);
  return out;
}

Eigen::VectorXd ClassPower::offdiag_sq_norms(const std::vector<int>& counts) const {
  const int L = static_cast<int>(counts.size());
  Eigen::VectorXd out = Eigen::VectorXd::Zero(L);
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b) out[a] += (counts[b] - (a == b ? 1.0 : 0.0)) * off(a, b) * off(a, b);
  return out;
}

Eigen::VectorXd ClassPower::row_sq_norms(const std::vector<int>& counts) const {
  Eigen::VectorXd out = offdiag_sq_norms(counts);
  for (Eigen::Index a = 0; a < out.size(); ++a) out[a] += diag[a] * diag[a];
  return out;
}

ClassPower class_power(const Eigen::MatrixXd& B, const std::vector<int>& counts, int k) {
  const int L = static_cast<int>(counts.size());
  require(B.rows() == L && B.cols() == L, ErrorKind::kInvalidArgument, "B does not match the class counts");
  require(k >= 0, ErrorKind::kInvalidArgument, "power must be nonnegative");
  require(k <= 12, ErrorKind::kGuard, "class-form power supports k <= 12");
  ClassPower out;
  out.k = k;
  out.diag = Eigen::VectorXd::Zero(L);
  out.diag_tree = Eigen::VectorXd::Zero(L);
  out.off = Eigen::MatrixXd::Zero(L, L);
  if (k == 0) {
    out.diag.setOnes();
    out.diag_tree.setOnes();
    return out;
  }
  for_each_pattern(1, k, [&](const std::vector<int>& lab, int V) {
    std::vector<std::pair<int, int>> edges;
    {
      std::set<int> seen;
      for (int p = 0; p < k; ++p)
        if (seen.insert(label_pair(lab[p], lab[p + 1])).second) edges.emplace_back(lab[p], lab[p + 1]);
    }
    const int end = lab[k];
    const bool tree = static_cast<int>(edges.size()) == V - 1;
    std::vector<int> cls(V, 0);
    std::vector<int> cnt(L);
    for (int a = 0; a < L; ++a) {
      cls.assign(V, 0);
      cls[0] = a;
      do {
        double w = 1.0;
        for (const auto& [u, v] : edges) w *= B(cls[u], cls[v]);
        if (w == 0.0) continue;
        std::fill(cnt.begin(), cnt.end(), 0);
        for (int l = 1; l < V; ++l)
          if (l != end) cnt[cls[l]]++;
        double ways = 1.0;
        for (int c = 0; c < L; ++c) {
          double avail = counts[c] - (c == a ? 1.0 : 0.0);
          if (end != 0 && c == cls[end]) avail -= 1.0;
          ways *= falling_factorial(avail, cnt[c]);
        }
        if (end == 0) {
          out.diag[a] += ways * w;
          if (tree) out.diag_tree[a] += ways * w;
        } else {
          out.off(a, cls[end]) += ways * w;
        }
      } while (next_assignment(cls, L));
    }
  });
  return out;
}

ClassPower class_power(const ModelSpec& spec, const LabelAssignment& labels, int k) {
  return class_power(spec.B, labels.counts, k);
}

GrowthCheck check_Akij_growth(const ModelSpec& spec, const LabelAssignment& labels, const ClassPower& power) {
  GrowthCheck g;
  const int k = power.k;
  const double nu = spec.nu();
  const double pmax = spec.p_max();
  g.precondition = nu >= k * std::exp(2.0 * (k - 1));
  const int L = labels.classes();
  bool first = true;
  auto consider = [&](double lhs, double rhs) {
    InequalityRecord rec = evaluate_le(lhs, rhs, 1e-12);
    if (!rec.satisfied) g.violations++;
    if (first || rec.margin < g.worst_entry.margin) g.worst_entry = rec;
    first = false;
  };
  const double base = 2.0 * pmax * std::pow(nu, k - 1);
  for (int a = 0; a < L; ++a) {
    consider(power.diag[a], base + (k % 2 == 0 ? 2.0 * std::pow(nu, k / 2.0) : 0.0));
    for (int b = 0; b < L; ++b)
      if (labels.counts[b] - (a == b ? 1 : 0) >= 1) consider(power.off(a, b), base);
  }
  const double worst_row = std::sqrt(power.row_sq_norms(labels.counts).maxCoeff());
  g.row_aggregate = evaluate_le(worst_row, 4.0 * std::pow(nu, k - 0.5), 1e-12);
  if (!g.row_aggregate.satisfied) g.violations++;
  return g;
}

ShapeMoment shape_moment(const ModelSpec& spec, const LabelAssignment& labels, int root_class, int m, int r, int k,
                         const ShapeGuard& guard) {
  const int L = labels.classes();
  require(root_class >= 0 && root_class < L, ErrorKind::kInvalidArgument, "root class out of range");
  require(m >= 0 && m < spec.d, ErrorKind::kInvalidArgument, "feature coordinate out of range");
  require(r >= 1 && k >= 1, ErrorKind::kInvalidArgument, "invalid moment order or depth");
  require(r <= 6, ErrorKind::kGuard, "shape sums support r <= 6");
  if (r * k > guard.max_positions)
    fail(ErrorKind::kGuard, "shape-sum guard exceeded: r k = " + std::to_string(r * k));
  const int width = k + 1;
  const double n = spec.n;
  const bool even = r % 2 == 0;
  const int t_star = r * (2 * k - 1) / 2;
  const std::uint32_t subsets = 1u << r;

  ShapeMoment out;
  out.r = r;
  out.k = k;
  std::vector<std::uint64_t> walk_mask(r);
  std::vector<std::uint64_t> union_mask(subsets);
  std::vector<int> cls, cnt(L);
  std::vector<double> pair_p(64);
  std::vector<double> single(r);

  for_each_pattern(r, k, [&](const std::vector<int>& lab, int V) {
    out.patterns++;
    for (int s = 0; s < r; ++s) {
      walk_mask[s] = 0;
      for (int p = 0; p < k; ++p) walk_mask[s] |= 1ull << label_pair(lab[s * width + p], lab[s * width + p + 1]);
    }
    for (std::uint32_t S = 0; S < subsets; ++S) {
      std::uint64_t u = 0;
      for (int s = 0; s < r; ++s)
        if (S >> s & 1u) u |= walk_mask[s];
      union_mask[S] = u;
    }
    const std::uint64_t all = union_mask[subsets - 1];
    const int t = std::popcount(all);
    // Overlap partition.
    std::vector<int> parent(r);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int a) {
      while (parent[a] != a) a = parent[a];
      return a;
    };
    for (int a = 0; a < r; ++a)
      for (int b = a + 1; b < r; ++b)
        if (walk_mask[a] & walk_mask[b]) parent[std::max(find(a), find(b))] = std::min(find(a), find(b));
    std::vector<int> block_size(r, 0);
    for (int s = 0; s < r; ++s) block_size[find(s)]++;
    bool overlapping = true;
    for (int s = 0; s < r; ++s)
      if (find(s) == s && block_size[s] < 2) overlapping = false;
    const bool maximal = even && overlapping && t == t_star && V == t_star + 1;
    if (maximal) {
      out.maximal_patterns++;
      WalkSequence ws;
      ws.k = k;
      for (int s = 0; s < r; ++s) ws.walks.emplace_back(lab.begin() + s * width, lab.begin() + (s + 1) * width);
      if (!check_maximal_structure(ws).all()) out.maximal_violations++;
    }
    // Endpoint multiplicities by label.
    std::vector<std::pair<int, int>> ends;
    for (int s = 0; s < r; ++s) {
      const int e = lab[s * width + k];
      auto it = std::find_if(ends.begin(), ends.end(), [&](const auto& x) { return x.first == e; });
      if (it == ends.end())
        ends.emplace_back(e, 1);
      else
        it->second++;
    }
    std::vector<std::pair<int, int>> edge_labels;
    for (int s = 0; s < r; ++s)
      for (int p = 0; p < k; ++p) {
        const int u = lab[s * width + p], v = lab[s * width + p + 1];
        edge_labels.emplace_back(std::min(u, v), std::max(u, v));
      }
    std::sort(edge_labels.begin(), edge_labels.end());
    edge_labels.erase(std::unique(edge_labels.begin(), edge_labels.end()), edge_labels.end());

    double pattern_sum = 0.0;
    cls.assign(V, 0);
    cls[0] = root_class;
    do {
      std::fill(cnt.begin(), cnt.end(), 0);
      for (int l = 1; l < V; ++l) cnt[cls[l]]++;
      double ways = 1.0;
      for (int c = 0; c < L && ways != 0.0; ++c)
        ways *= falling_factorial(labels.counts[c] - (c == root_class ? 1.0 : 0.0), cnt[c]);
      if (ways == 0.0) continue;
      for (const auto& [u, v] : edge_labels) pair_p[label_pair(u, v)] = spec.B(cls[u], cls[v]);
      auto prob = [&](std::uint64_t mask) {
        double p = 1.0;
        for (std::uint64_t x = mask; x; x &= x - 1) p *= pair_p[std::countr_zero(x)];
        return p;
      };
      for (int s = 0; s < r; ++s) single[s] = prob(walk_mask[s]);
      double rho1 = 0.0;
      for (std::uint32_t S = 0; S < subsets; ++S) {
        double rest = 1.0;
        for (int s = 0; s < r; ++s)
          if (!(S >> s & 1u)) rest *= single[s];
        rho1 += ((r - std::popcount(S)) % 2 == 0 ? 1.0 : -1.0) * prob(union_mask[S]) * rest;
      }
      if (rho1 == 0.0) continue;
      double rho2 = 1.0;
      for (const auto& [e, mult] : ends) rho2 *= noise_raw_moment(spec.noise, spec.mu(m, cls[e]), spec.sigma, mult);
      pattern_sum += ways * rho1 * rho2;
    } while (next_assignment(cls, L));

    out.moment += pattern_sum;
    if (!overlapping) return;
    CensusCell& cell = out.cells[{t, V}];
    cell.count += falling_factorial(n - 1.0, V - 1);
    cell.sum_rho += pattern_sum;
    if (maximal)
      out.theta_hi += pattern_sum;
    else
      out.theta_lo += pattern_sum;
  });
  for (auto& [key, cell] : out.cells)
    cell.bound = std::pow(key.second - 1.0, r * k) * binomial(spec.n - 1, key.second - 1);
  return out;
}

DevSecondMoment exact_dev_second_moment(const ModelSpec& spec, const LabelAssignment& labels, int k) {
  DevSecondMoment out;
  const ClassPower power = class_power(spec, labels, k);
  const Eigen::VectorXd rows = power.row_sq_norms(labels.counts);
  const double n = spec.n;
  for (int a = 0; a < labels.classes(); ++a) {
    const double weight = labels.counts[a] / n;
    for (int m = 0; m < spec.d; ++m) {
      out.graph_part += weight * shape_moment(spec, labels, a, m, 2, k).moment;
      out.feature_part += weight * spec.sigma * spec.sigma * rows[a];
    }
  }
  return out;
}

}  // namespace csbm
