#include "csbm/walks.hpp"

#include "csbm/linalg.hpp"
#include "csbm/parallel.hpp"
#include "csbm/rng.hpp"
#include "csbm/shapes.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>

namespace csbm {

double binomial(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0.0;
  k = std::min(k, n - k);
  double out = 1.0;
  for (int q = 1; q <= k; ++q) out = out * (n - k + q) / q;
  return std::round(out);
}

double falling_factorial(double n, int k) {
  double out = 1.0;
  for (int q = 0; q < k; ++q) {
    const double f = n - q;
    if (f <= 0.0) return 0.0;
    out *= f;
  }
  return out;
}

double catalan(int t) { return t < 0 ? 0.0 : binomial(2 * t, t) / (t + 1); }

double stirling2(int m, int t) {
  if (m < 0 || t < 0) return 0.0;
  std::vector<double> row(t + 1, 0.0);
  row[0] = 1.0;  // S(0, 0)
  for (int a = 1; a <= m; ++a) {
    for (int b = std::min(a, t); b >= 1; --b) row[b] = b * row[b] + row[b - 1];
    row[0] = 0.0;
  }
  return row[t];
}

double double_factorial(int m) {
  double out = 1.0;
  for (int q = m; q > 1; q -= 2) out *= q;
  return out;
}

// ---------------------------------------------------------------------------
// Single walks

WalkShape walk_shape(std::span<const int> walk) {
  std::vector<std::pair<int, int>> edges;
  std::vector<int> verts(walk.begin(), walk.end());
  for (std::size_t s = 0; s + 1 < walk.size(); ++s)
    edges.emplace_back(std::min(walk[s], walk[s + 1]), std::max(walk[s], walk[s + 1]));
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
  return {static_cast<int>(edges.size()), static_cast<int>(verts.size())};
}

bool walk_has_cycle(std::span<const int> walk) {
  const WalkShape s = walk_shape(walk);
  return s.edges >= s.vertices;
}

namespace {

// Incremental walk state: multiplicities of vertices and unordered edges.
class WalkState {
 public:
  explicit WalkState(int n) : n_(n), edge_mult_(static_cast<std::size_t>(n) * n, 0), vert_mult_(n, 0) {}

  void push_vertex(int v) {
    if (vert_mult_[v]++ == 0) ++vertices_;
  }
  void pop_vertex(int v) {
    if (--vert_mult_[v] == 0) --vertices_;
  }
  // Returns true when the edge is new.
  bool push_edge(int u, int v) {
    int& c = edge_mult_[key(u, v)];
    if (c++ == 0) {
      ++edges_;
      return true;
    }
    return false;
  }
  void pop_edge(int u, int v) {
    if (--edge_mult_[key(u, v)] == 0) --edges_;
  }
  bool has_edge(int u, int v) const { return edge_mult_[key(u, v)] > 0; }
  bool has_vertex(int v) const { return vert_mult_[v] > 0; }
  int edges() const { return edges_; }
  int vertices() const { return vertices_; }

 private:
  std::size_t key(int u, int v) const {
    return u < v ? static_cast<std::size_t>(u) * n_ + v : static_cast<std::size_t>(v) * n_ + u;
  }
  int n_;
  std::vector<int> edge_mult_;
  std::vector<int> vert_mult_;
  int edges_ = 0;
  int vertices_ = 0;
};

// Depth-first walk enumeration with on_step/on_leaf hooks. on_step(u, v, depth) returns false to prune.
template <class Step, class Unstep, class Leaf>
void walk_dfs(int n, int k, int start, WalkMode mode, int end, Step&& on_step, Unstep&& on_unstep, Leaf&& on_leaf) {
  std::vector<int> path(k + 1);
  path[0] = start;
  const int target = mode == WalkMode::kClosed ? start : end;
  auto rec = [&](auto&& self, int depth) -> void {
    if (depth == k) {
      on_leaf(std::span<const int>(path));
      return;
    }
    const int u = path[depth];
    const bool last = depth + 1 == k && mode != WalkMode::kFree;
    for (int v = 0; v < n; ++v) {
      if (v == u) continue;
      if (last && v != target) continue;
      if (!on_step(u, v, depth)) continue;
      path[depth + 1] = v;
      self(self, depth + 1);
      on_unstep(u, v, depth);
    }
  };
  if (k == 0) {
    if (mode == WalkMode::kFree || start == target) on_leaf(std::span<const int>(path));
    return;
  }
  rec(rec, 0);
}

void check_walk_args(int n, int k, int start) {
  require(n >= 2, ErrorKind::kInvalidArgument, "walk enumeration needs n >= 2");
  require(k >= 1, ErrorKind::kInvalidArgument, "walk length must be at least 1");
  require(start >= 0 && start < n, ErrorKind::kInvalidArgument, "start vertex out of range");
}

}  // namespace

std::uint64_t for_each_walk(int n, int k, int start, WalkMode mode, int end,
                            const std::function<void(std::span<const int>)>& fn) {
  check_walk_args(n, k, start);
  if (mode == WalkMode::kFixedEnd)
    require(end >= 0 && end < n, ErrorKind::kInvalidArgument, "end vertex out of range");
  std::uint64_t count = 0;
  walk_dfs(
      n, k, start, mode, end, [](int, int, int) { return true; }, [](int, int, int) {},
      [&](std::span<const int> w) {
        ++count;
        fn(w);
      });
  return count;
}

std::vector<PathCountRow> count_Nt(int n, int k, int i, int j) {
  check_walk_args(n, k, i);
  require(i != j && j >= 0 && j < n, ErrorKind::kInvalidArgument, "count_Nt needs distinct endpoints");
  std::vector<std::uint64_t> counts(k + 1, 0);
  WalkState st(n);
  walk_dfs(
      n, k, i, WalkMode::kFixedEnd, j,
      [&](int u, int v, int) {
        st.push_edge(u, v);
        return true;
      },
      [&](int u, int v, int) { st.pop_edge(u, v); }, [&](std::span<const int>) { counts[st.edges()]++; });
  std::vector<PathCountRow> rows;
  for (int t = 1; t <= k; ++t) {
    PathCountRow row;
    row.t = t;
    row.count = counts[t];
    row.bound = binomial(n - 2, t - 1) * std::pow(static_cast<double>(t), k - 1);
    row.ok = static_cast<double>(row.count) <= row.bound;
    row.vertex_room = n >= t + 1;
    rows.push_back(row);
  }
  return rows;
}

std::vector<ClosedCountRow> count_closed(int n, int k, int i, const ClosedWalkFormulas& formulas) {
  check_walk_args(n, k, i);
  require(k >= 2, ErrorKind::kInvalidArgument, "closed walks need k >= 2");
  std::vector<std::uint64_t> looped(k + 1, 0), loopless(k + 1, 0);
  WalkState st(n);
  st.push_vertex(i);
  walk_dfs(
      n, k, i, WalkMode::kClosed, i,
      [&](int u, int v, int) {
        st.push_edge(u, v);
        st.push_vertex(v);
        return true;
      },
      [&](int u, int v, int) {
        st.pop_edge(u, v);
        st.pop_vertex(v);
      },
      [&](std::span<const int>) {
        if (st.edges() >= st.vertices())
          looped[st.edges()]++;
        else
          loopless[st.edges()]++;
      });
  const bool even = k % 2 == 0;
  std::vector<ClosedCountRow> rows;
  for (int t = 1; t <= k; ++t) {
    ClosedCountRow row;
    row.t = t;
    row.looped = looped[t];
    row.loopless = loopless[t];
    if (!even && row.loopless != 0)
      fail(ErrorKind::kInternal, "parity violation: tree-shaped closed walk of odd length");
    row.looped_bound = binomial(n - 1, t - 1) * std::pow(static_cast<double>(t), k - 1);
    row.vertex_room = n >= t;
    row.formula_applies = even && 2 * t <= k;
    row.equality_expected = 2 * t == k;
    if (row.formula_applies)
      row.loopless_formula = formulas.catalan(t) * binomial(n - 1, t) * std::tgamma(t + 1.0) *
                             formulas.stirling2(k / 2, t);
    row.crude_bound = std::pow(2.0 * std::exp(2.0) * n, t) * std::pow(static_cast<double>(t), k / 2.0 - t - 1.0);
    const double lp = static_cast<double>(row.loopless);
    row.ok = static_cast<double>(row.looped) <= row.looped_bound;
    if (row.formula_applies) {
      row.ok = row.ok && lp <= row.loopless_formula;
      if (row.equality_expected) row.ok = row.ok && lp == row.loopless_formula;
      row.ok = row.ok && lp <= row.crude_bound;
    } else {
      row.ok = row.ok && row.loopless == 0;
    }
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Exact E[A^k]

namespace {

void check_guard(const ModelSpec& spec, int k, double rows, const EnumerationGuard& guard) {
  require(spec.n >= 2, ErrorKind::kInvalidArgument, "enumeration needs n >= 2");
  require(k >= 1, ErrorKind::kInvalidArgument, "power must be at least 1");
  const double steps = rows * std::pow(spec.n - 1.0, k);
  if (spec.n > guard.max_n || k > guard.max_k || steps > guard.max_steps)
    fail(ErrorKind::kGuard, "walk enumeration guard exceeded (n=" + std::to_string(spec.n) +
                                ", k=" + std::to_string(k) + ")");
}

}  // namespace

Eigen::MatrixXd exact_EAk_rows(const ModelSpec& spec, const LabelAssignment& labels, int k,
                               std::span<const int> rows, const EnumerationGuard& guard) {
  check_guard(spec, k, static_cast<double>(rows.size()), guard);
  const int n = spec.n;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows.size(), n);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int i = rows[r];
    require(i >= 0 && i < n, ErrorKind::kInvalidArgument, "row index out of range");
    WalkState st(n);
    std::vector<double> prod(k + 1, 1.0);
    walk_dfs(
        n, k, i, WalkMode::kFree, 0,
        [&](int u, int v, int depth) {
          const bool fresh = st.push_edge(u, v);
          prod[depth + 1] = fresh ? prod[depth] * spec.B(labels.y[u], labels.y[v]) : prod[depth];
          return true;
        },
        [&](int u, int v, int) { st.pop_edge(u, v); },
        [&](std::span<const int> w) { out(r, w[k]) += prod[k]; });
  }
  return out;
}

Eigen::MatrixXd exact_EAk(const ModelSpec& spec, const LabelAssignment& labels, int k,
                          const EnumerationGuard& guard) {
  std::vector<int> reps;
  for (int a = 0; a < labels.classes(); ++a) reps.push_back(labels.members[a].front());
  Eigen::MatrixXd rows = exact_EAk_rows(spec, labels, k, reps, guard);
  const int n = spec.n;
  const int L = labels.classes();
  Eigen::VectorXd diag(L);
  Eigen::MatrixXd off = Eigen::MatrixXd::Zero(L, L);
  for (int a = 0; a < L; ++a) {
    diag[a] = rows(a, reps[a]);
    for (int b = 0; b < L; ++b)
      for (int j : labels.members[b])
        if (j != reps[a]) {
          off(a, b) = rows(a, j);
          break;
        }
  }
  Eigen::MatrixXd out(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = i == j ? diag[labels.y[i]] : off(labels.y[i], labels.y[j]);
  return out;
}

Eigen::MatrixXd walk_product_power(const ModelSpec& spec, const LabelAssignment& labels, int k,
                                   const EnumerationGuard& guard) {
  check_guard(spec, k, spec.n, guard);
  const int n = spec.n;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    std::vector<double> prod(k + 1, 1.0);
    walk_dfs(
        n, k, i, WalkMode::kFree, 0,
        [&](int u, int v, int depth) {
          prod[depth + 1] = prod[depth] * spec.B(labels.y[u], labels.y[v]);
          return true;
        },
        [](int, int, int) {}, [&](std::span<const int> w) { out(i, w[k]) += prod[k]; });
  }
  return out;
}

GrowthCheck check_Akij_growth(const ModelSpec& spec, const LabelAssignment&, int k, const Eigen::MatrixXd& EAk) {
  GrowthCheck g;
  const double nu = spec.nu();
  const double pmax = spec.p_max();
  g.precondition = nu >= k * std::exp(2.0 * (k - 1));
  bool first = true;
  double worst_row = 0.0;
  for (Eigen::Index i = 0; i < EAk.rows(); ++i) {
    for (Eigen::Index j = 0; j < EAk.cols(); ++j) {
      double rhs = 2.0 * pmax * std::pow(nu, k - 1);
      if (i == j && k % 2 == 0) rhs += 2.0 * std::pow(nu, k / 2.0);
      InequalityRecord rec = evaluate_le(EAk(i, j), rhs, 1e-12);
      if (!rec.satisfied) g.violations++;
      if (first || rec.margin < g.worst_entry.margin) g.worst_entry = rec;
      first = false;
    }
    worst_row = std::max(worst_row, EAk.row(i).norm());
  }
  g.row_aggregate = evaluate_le(worst_row, 4.0 * std::pow(nu, k - 0.5), 1e-12);
  if (!g.row_aggregate.satisfied) g.violations++;
  return g;
}

// ---------------------------------------------------------------------------
// Walk sequences

namespace {

struct DisjointSets {
  explicit DisjointSets(int r) : parent(r) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) { return parent[a] == a ? a : parent[a] = find(parent[a]); }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::vector<int> parent;
};

std::set<std::pair<int, int>> edge_set(const std::vector<int>& w) {
  std::set<std::pair<int, int>> out;
  for (std::size_t s = 0; s + 1 < w.size(); ++s) out.emplace(std::min(w[s], w[s + 1]), std::max(w[s], w[s + 1]));
  return out;
}

bool intersects(const std::set<std::pair<int, int>>& a, const std::set<std::pair<int, int>>& b) {
  for (const auto& e : a)
    if (b.count(e)) return true;
  return false;
}

GammaPartition partition_from_sets(DisjointSets& ds, int r) {
  GammaPartition g;
  std::vector<int> slot(r, -1);
  for (int s = 0; s < r; ++s) {
    const int root = ds.find(s);
    if (slot[root] < 0) {
      slot[root] = static_cast<int>(g.blocks.size());
      g.blocks.emplace_back();
    }
    g.blocks[slot[root]].push_back(s);
  }
  g.overlapping = std::all_of(g.blocks.begin(), g.blocks.end(), [](const auto& b) { return b.size() >= 2; });
  return g;
}

void check_sequence(const WalkSequence& ws) {
  require(!ws.walks.empty(), ErrorKind::kInvalidArgument, "empty walk sequence");
  for (const auto& w : ws.walks) {
    require(static_cast<int>(w.size()) == ws.k + 1, ErrorKind::kInvalidArgument, "walk length mismatch");
    require(w.front() == ws.walks.front().front(), ErrorKind::kInvalidArgument, "walks must share a root");
    for (std::size_t s = 0; s + 1 < w.size(); ++s)
      require(w[s] != w[s + 1], ErrorKind::kInvalidArgument, "walk has a self-loop step");
  }
}

}  // namespace

GammaPartition gamma_partition(const WalkSequence& ws) {
  check_sequence(ws);
  const int r = static_cast<int>(ws.walks.size());
  std::vector<std::set<std::pair<int, int>>> sets;
  for (const auto& w : ws.walks) sets.push_back(edge_set(w));
  DisjointSets ds(r);
  for (int a = 0; a < r; ++a)
    for (int b = a + 1; b < r; ++b)
      if (intersects(sets[a], sets[b])) ds.unite(a, b);
  return partition_from_sets(ds, r);
}

std::vector<int> core_leaves(const WalkSequence& ws, const GammaPartition& gamma) {
  std::vector<int> out;
  for (const auto& block : gamma.blocks) {
    int leaf = ws.walks[block.front()][1];
    for (int s : block)
      if (ws.walks[s][1] != leaf) leaf = -1;
    out.push_back(block.size() == 2 ? leaf : -1);
  }
  return out;
}

namespace {

double edges_prob(const std::set<std::pair<int, int>>& edges, const ModelSpec& spec, const LabelAssignment& labels) {
  double p = 1.0;
  for (const auto& [u, v] : edges) p *= spec.B(labels.y[u], labels.y[v]);
  return p;
}

double endpoint_moment(const std::vector<int>& endpoints, const ModelSpec& spec, const LabelAssignment& labels,
                       int m) {
  std::vector<int> sorted = endpoints;
  std::sort(sorted.begin(), sorted.end());
  double out = 1.0;
  for (std::size_t a = 0; a < sorted.size();) {
    std::size_t b = a;
    while (b < sorted.size() && sorted[b] == sorted[a]) ++b;
    out *= noise_raw_moment(spec.noise, spec.mu(m, labels.y[sorted[a]]), spec.sigma, static_cast<int>(b - a));
    a = b;
  }
  return out;
}

}  // namespace

RhoTerms rho_terms(const WalkSequence& ws, const ModelSpec& spec, const LabelAssignment& labels, int m) {
  check_sequence(ws);
  const int r = static_cast<int>(ws.walks.size());
  require(r <= 20, ErrorKind::kGuard, "too many walks for subset expansion");
  std::vector<std::set<std::pair<int, int>>> sets;
  std::vector<double> single;
  std::vector<int> endpoints;
  for (const auto& w : ws.walks) {
    sets.push_back(edge_set(w));
    single.push_back(edges_prob(sets.back(), spec, labels));
    endpoints.push_back(w.back());
  }
  RhoTerms out;
  for (std::uint32_t S = 0; S < (1u << r); ++S) {
    std::set<std::pair<int, int>> uni;
    double rest = 1.0;
    for (int s = 0; s < r; ++s) {
      if (S >> s & 1u)
        uni.insert(sets[s].begin(), sets[s].end());
      else
        rest *= single[s];
    }
    const int sign = (r - std::popcount(S)) % 2 == 0 ? 1 : -1;
    out.rho1 += sign * edges_prob(uni, spec, labels) * rest;
  }
  out.rho2 = endpoint_moment(endpoints, spec, labels, m);
  out.rho = out.rho1 * out.rho2;
  return out;
}

std::pair<double, double> rho_control_bounds(const WalkSequence& ws, const ModelSpec& spec,
                                             const LabelAssignment& labels, int m, double C1) {
  std::set<std::pair<int, int>> uni;
  for (const auto& w : ws.walks) {
    auto e = edge_set(w);
    uni.insert(e.begin(), e.end());
  }
  const int r = static_cast<int>(ws.walks.size());
  const double b1 = std::pow(2.0, r) * edges_prob(uni, spec, labels);
  const double mu_inf = spec.mu.row(m).cwiseAbs().maxCoeff();
  const double b2 = std::pow(2.0 * std::max(C1 * spec.sigma * std::sqrt(static_cast<double>(r)), mu_inf), r);
  return {b1, b2};
}

StructureCheck check_maximal_structure(const WalkSequence& ws) {
  check_sequence(ws);
  StructureCheck out;
  const GammaPartition g = gamma_partition(ws);
  const int root = ws.walks.front().front();
  out.perfect_matching = std::all_of(g.blocks.begin(), g.blocks.end(), [](const auto& b) { return b.size() == 2; });

  std::set<std::pair<int, int>> all_edges;
  std::set<int> all_verts;
  for (const auto& w : ws.walks) {
    auto e = edge_set(w);
    all_edges.insert(e.begin(), e.end());
    all_verts.insert(w.begin(), w.end());
  }
  out.rooted_tree = all_verts.size() == all_edges.size() + 1;

  std::vector<std::set<int>> block_verts;
  for (const auto& b : g.blocks) {
    std::set<int> vs;
    for (int s : b) vs.insert(ws.walks[s].begin(), ws.walks[s].end());
    block_verts.push_back(std::move(vs));
  }
  out.blocks_disjoint = true;
  for (std::size_t a = 0; a < block_verts.size(); ++a)
    for (std::size_t b = a + 1; b < block_verts.size(); ++b)
      for (int v : block_verts[a])
        if (v != root && block_verts[b].count(v)) out.blocks_disjoint = false;

  out.pairs_split_after_first = out.perfect_matching;
  if (out.perfect_matching) {
    for (const auto& b : g.blocks) {
      const auto& w1 = ws.walks[b[0]];
      const auto& w2 = ws.walks[b[1]];
      if (w1[1] != w2[1]) {
        out.pairs_split_after_first = false;
        continue;
      }
      const std::set<int> v1(w1.begin() + 1, w1.end());
      for (std::size_t s = 2; s < w2.size(); ++s)
        if (v1.count(w2[s])) out.pairs_split_after_first = false;
      for (std::size_t s = 2; s < w1.size(); ++s)
        if (w1[s] == w2[1]) out.pairs_split_after_first = false;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Census by enumeration of walk tuples

namespace {

// One bit per vertex pair; 8 words hold the 496 pairs of n = 32.
constexpr int kEdgeWords = 8;

struct EdgeBits {
  std::array<std::uint64_t, kEdgeWords> w{};
  void set(int b) { w[b >> 6] |= 1ull << (b & 63); }
  bool test(int b) const { return w[b >> 6] >> (b & 63) & 1ull; }
  EdgeBits operator|(const EdgeBits& o) const {
    EdgeBits r;
    for (int q = 0; q < kEdgeWords; ++q) r.w[q] = w[q] | o.w[q];
    return r;
  }
  bool meets(const EdgeBits& o) const {
    for (int q = 0; q < kEdgeWords; ++q)
      if (w[q] & o.w[q]) return true;
    return false;
  }
  int count() const {
    int c = 0;
    for (auto x : w) c += std::popcount(x);
    return c;
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    for (int q = 0; q < kEdgeWords; ++q)
      for (std::uint64_t x = w[q]; x; x &= x - 1) fn(q * 64 + std::countr_zero(x));
  }
};

struct WalkTable {
  int n = 0, k = 0;
  std::vector<int> verts;  // count * (k+1)
  std::vector<EdgeBits> edges;
  std::vector<std::uint32_t> vmask;
  std::vector<double> prob;  // prod of p over unique edges
  std::vector<int> endpoint;
  std::vector<int> pair_u, pair_v;  // pair index -> endpoints
  std::vector<double> pair_p;
  std::size_t size() const { return endpoint.size(); }
  std::span<const int> walk(std::size_t a) const { return {verts.data() + a * (k + 1), static_cast<std::size_t>(k + 1)}; }
};

int pair_index(int n, int u, int v) {
  if (u > v) std::swap(u, v);
  return u * (2 * n - u - 1) / 2 + (v - u - 1);
}

WalkTable build_walk_table(const ModelSpec& spec, const LabelAssignment& labels, int root, int k) {
  WalkTable tab;
  const int n = spec.n;
  tab.n = n;
  tab.k = k;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) {
      tab.pair_u.push_back(u);
      tab.pair_v.push_back(v);
      tab.pair_p.push_back(spec.B(labels.y[u], labels.y[v]));
    }
  walk_dfs(
      n, k, root, WalkMode::kFree, 0, [](int, int, int) { return true; }, [](int, int, int) {},
      [&](std::span<const int> w) {
        EdgeBits e;
        std::uint32_t vm = 0;
        for (int s = 0; s <= k; ++s) {
          vm |= 1u << w[s];
          if (s < k) e.set(pair_index(n, w[s], w[s + 1]));
        }
        double p = 1.0;
        e.for_each([&](int b) { p *= tab.pair_p[b]; });
        tab.verts.insert(tab.verts.end(), w.begin(), w.end());
        tab.edges.push_back(e);
        tab.vmask.push_back(vm);
        tab.prob.push_back(p);
        tab.endpoint.push_back(w[k]);
      });
  return tab;
}

}  // namespace

MomentTable moment_decomposition(const ModelSpec& spec, const LabelAssignment& labels, int root, int m, int r,
                                 int k, const CensusOptions& options) {
  const int n = spec.n;
  require(r >= 1 && r <= 8, ErrorKind::kInvalidArgument, "moment order must be in 1..8");
  require(k >= 1, ErrorKind::kInvalidArgument, "walk length must be at least 1");
  require(root >= 0 && root < n, ErrorKind::kInvalidArgument, "root out of range");
  require(m >= 0 && m < spec.d, ErrorKind::kInvalidArgument, "feature coordinate out of range");
  const double tuples = std::pow(std::pow(n - 1.0, k), r);
  if (n > options.max_n || n > 32 || tuples > options.max_tuples)
    fail(ErrorKind::kGuard, "census guard exceeded: (n-1)^(rk) = " + std::to_string(tuples));

  const WalkTable tab = build_walk_table(spec, labels, root, k);
  const std::size_t W = tab.size();
  MomentTable out;
  out.n = n;
  out.k = k;
  out.r = r;
  out.root = root;
  out.m = m;
  out.t_star_twice = r * (2 * k - 1);
  const bool even = r % 2 == 0;
  const int t_star = out.t_star_twice / 2;

  std::vector<std::size_t> pick(r);
  std::vector<EdgeBits> uni(r + 1);
  std::vector<std::uint32_t> vm(r + 1, 0);
  std::set<std::vector<int>> matchings;
  std::vector<double> union_p(1u << r);
  std::vector<int> ends(r);
  double exact = 0.0;
  bool exact_ok = options.exact_moment;

  auto leaf = [&]() {
    const EdgeBits& all = uni[r];
    const int t = all.count();
    const int v = std::popcount(vm[r]);
    // Gamma partition by pairwise edge overlap.
    DisjointSets ds(r);
    for (int a = 0; a < r; ++a)
      for (int b = a + 1; b < r; ++b)
        if (tab.edges[pick[a]].meets(tab.edges[pick[b]])) ds.unite(a, b);
    GammaPartition g = partition_from_sets(ds, r);

    for (int s = 0; s < r; ++s) ends[s] = tab.endpoint[pick[s]];
    const double rho2 = [&] {
      std::vector<int> e(ends.begin(), ends.end());
      return endpoint_moment(e, spec, labels, m);
    }();

    if (exact_ok) {
      // Direct expectation over all 0/1 states of the edges in the union.
      std::vector<int> idx;
      all.for_each([&](int b) { idx.push_back(b); });
      if (t > options.max_direct_edges) {
        exact_ok = false;
      } else {
        std::vector<std::uint32_t> masks(r, 0);
        for (int s = 0; s < r; ++s)
          for (int q = 0; q < t; ++q)
            if (tab.edges[pick[s]].test(idx[q])) masks[s] |= 1u << q;
        double rho1 = 0.0;
        for (std::uint32_t state = 0; state < (1u << t); ++state) {
          double pr = 1.0;
          for (int q = 0; q < t; ++q) {
            const double p = tab.pair_p[idx[q]];
            pr *= (state >> q & 1u) ? p : 1.0 - p;
          }
          if (pr == 0.0) continue;
          double val = 1.0;
          for (int s = 0; s < r; ++s) val *= ((state & masks[s]) == masks[s] ? 1.0 : 0.0) - tab.prob[pick[s]];
          rho1 += pr * val;
        }
        exact += rho1 * rho2;
      }
    }
    if (!g.overlapping) return;

    // Signed subset expansion.
    double rho1 = 0.0;
    for (std::uint32_t S = 0; S < (1u << r); ++S) {
      EdgeBits u;
      double rest = 1.0;
      for (int s = 0; s < r; ++s) {
        if (S >> s & 1u)
          u = u | tab.edges[pick[s]];
        else
          rest *= tab.prob[pick[s]];
      }
      double p = 1.0;
      u.for_each([&](int b) { p *= tab.pair_p[b]; });
      rho1 += ((r - std::popcount(S)) % 2 == 0 ? 1.0 : -1.0) * p * rest;
    }
    const double rho = rho1 * rho2;
    CensusCell& cell = out.cells[{t, v}];
    cell.count++;
    cell.sum_rho += rho;
    if (even && t == t_star && v == t_star + 1) {
      out.theta_hi += rho;
      out.maximal_sequences++;
      WalkSequence ws;
      ws.k = k;
      for (int s = 0; s < r; ++s) {
        auto w = tab.walk(pick[s]);
        ws.walks.emplace_back(w.begin(), w.end());
      }
      if (!check_maximal_structure(ws).all()) out.structure_violations++;
      std::vector<int> code(r);
      for (std::size_t q = 0; q < g.blocks.size(); ++q)
        for (int s : g.blocks[q]) code[s] = static_cast<int>(q);
      matchings.insert(code);
    } else {
      out.theta_lo += rho;
    }
  };

  auto rec = [&](auto&& self, int s) -> void {
    if (s == r) {
      leaf();
      return;
    }
    for (std::size_t a = 0; a < W; ++a) {
      pick[s] = a;
      uni[s + 1] = uni[s] | tab.edges[a];
      vm[s + 1] = vm[s] | tab.vmask[a];
      self(self, s + 1);
    }
  };
  rec(rec, 0);

  out.distinct_matchings = static_cast<int>(matchings.size());
  out.has_exact_moment = exact_ok;
  out.exact_moment = exact_ok ? exact : 0.0;
  std::map<int, std::map<int, double>> by_t;
  for (auto& [key, cell] : out.cells) {
    const auto [t, v] = key;
    cell.bound = std::pow(v - 1.0, r * k) * binomial(n - 1, v - 1);
    if (static_cast<double>(cell.count) > cell.bound) out.cells_over_bound++;
    if (2 * t > out.t_star_twice || v > t + 1) out.cells_beyond_limits++;
    by_t[t][v] += cell.count;
  }
  // Partial sums over v <= b+1 for every b <= t.
  for (const auto& [t, row] : by_t) {
    for (int b = 1; b <= t; ++b) {
      double sum = 0.0;
      for (const auto& [v, c] : row)
        if (v <= b + 1) sum += c;
      const double bound = std::pow(static_cast<double>(b), r * k - b) * std::pow(std::exp(1.0) * n, b);
      if (sum > bound) out.sum_bound_violations++;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tree-pruned search for maximal sequences

MaximalCensus enumerate_maximal(int n, int k, int r, int root, double max_nodes, bool canonical) {
  require(r >= 2 && r % 2 == 0, ErrorKind::kInvalidArgument, "maximal sequences need even r");
  require(k >= 1 && n >= 2, ErrorKind::kInvalidArgument, "invalid walk parameters");
  MaximalCensus out;
  out.n = n;
  out.k = k;
  out.r = r;
  out.canonical = canonical;
  const int t_star = r * (2 * k - 1) / 2;
  out.expected = double_factorial(r - 1) * falling_factorial(n - 1.0, t_star);
  out.expected_matchings = n - 1 >= t_star ? double_factorial(r - 1) : 0.0;
  const int budget = r / 2;  // steps that reuse an existing edge
  WalkState st(n);
  st.push_vertex(root);
  std::vector<std::vector<int>> walks(r, std::vector<int>(k + 1, root));
  std::set<std::vector<int>> matchings;
  int waste = 0;
  int fresh = 0;  // canonical mode: next unused label is fresh, skipping the root
  auto fresh_label = [&](int f) { return f < root ? f : f + 1; };

  auto leaf = [&]() {
    if (waste != budget) return;
    WalkSequence ws;
    ws.k = k;
    ws.walks = walks;
    GammaPartition g = gamma_partition(ws);
    if (!g.overlapping) return;
    out.canonical_found++;
    if (!canonical) out.found++;
    if (!check_maximal_structure(ws).all()) out.violations++;
    std::vector<int> code(r);
    for (std::size_t q = 0; q < g.blocks.size(); ++q)
      for (int s : g.blocks[q]) code[s] = static_cast<int>(q);
    matchings.insert(code);
  };

  auto rec = [&](auto&& self, int g) -> void {
    if (++out.nodes > max_nodes) fail(ErrorKind::kGuard, "maximal-sequence search exceeded its node budget");
    if (g == r * k) {
      leaf();
      return;
    }
    const int s = g / k;
    const int pos = g % k;
    const int u = walks[s][pos];
    for (int v = 0; v < n; ++v) {
      if (v == u) continue;
      const bool known = st.has_vertex(v);
      const bool reuse = st.has_edge(u, v);
      if (known && !reuse) continue;  // closes a cycle: never maximal
      if (reuse && waste == budget) continue;
      if (canonical && !known && v != fresh_label(fresh)) continue;
      if (reuse) ++waste;
      if (!known) ++fresh;
      st.push_edge(u, v);
      st.push_vertex(v);
      walks[s][pos + 1] = v;
      self(self, g + 1);
      st.pop_edge(u, v);
      st.pop_vertex(v);
      if (!known) --fresh;
      if (reuse) --waste;
    }
  };
  rec(rec, 0);
  if (canonical)
    out.found = static_cast<std::uint64_t>(std::llround(static_cast<double>(out.canonical_found) *
                                                         falling_factorial(n - 1.0, t_star)));
  out.distinct_matchings = static_cast<int>(matchings.size());
  return out;
}

// ---------------------------------------------------------------------------
// Leading-term proxy

namespace {

std::vector<double> proxy_weights(const ModelSpec& spec, const LabelAssignment& labels, int i, int m, int k) {
  require(k >= 1, ErrorKind::kInvalidArgument, "k must be at least 1");
  require(i >= 0 && i < spec.n && m >= 0 && m < spec.d, ErrorKind::kInvalidArgument, "index out of range");
  ExpectedAdjacency EA(spec, labels);
  Eigen::VectorXd Mm(spec.n);
  for (int j = 0; j < spec.n; ++j) Mm[j] = spec.mu(m, labels.y[j]);
  const Eigen::VectorXd h = expected_power_apply(EA, k - 1, Mm);
  std::vector<double> g;
  for (int j = 0; j < spec.n; ++j) {
    if (j == i) continue;
    const double p = EA.entry(i, j);
    g.push_back(p * (1.0 - p) * h[j] * h[j]);
  }
  return g;
}

}  // namespace

double theta_hi_proxy(const ModelSpec& spec, const LabelAssignment& labels, int i, int m, int r, int k) {
  require(r >= 2 && r % 2 == 0, ErrorKind::kInvalidArgument, "proxy needs even r");
  const std::vector<double> g = proxy_weights(spec, labels, i, m, k);
  const int N = static_cast<int>(g.size());
  const int h = r / 2;
  if (h > N) return 0.0;
  // Mixed-radix digits d_q in [0, N - q) select the d_q-th unused element.
  std::vector<int> digit(h, 0);
  std::vector<char> used(N);
  double total = 0.0;
  while (true) {
    std::fill(used.begin(), used.end(), 0);
    double prod = 1.0;
    for (int q = 0; q < h; ++q) {
      int seen = -1, e = 0;
      for (; e < N; ++e)
        if (!used[e] && ++seen == digit[q]) break;
      used[e] = 1;
      prod *= g[e];
    }
    total += prod;
    int q = h - 1;
    while (q >= 0 && ++digit[q] == N - q) digit[q--] = 0;
    if (q < 0) break;
  }
  return double_factorial(r - 1) * total;
}

double theta_hi_proxy_esp(const ModelSpec& spec, const LabelAssignment& labels, int i, int m, int r, int k) {
  require(r >= 2 && r % 2 == 0, ErrorKind::kInvalidArgument, "proxy needs even r");
  const std::vector<double> g = proxy_weights(spec, labels, i, m, k);
  const int h = r / 2;
  std::vector<double> e(h + 1, 0.0);
  e[0] = 1.0;
  for (double x : g)
    for (int q = h; q >= 1; --q) e[q] += x * e[q - 1];
  return double_factorial(r - 1) * std::tgamma(h + 1.0) * e[h];
}

double theta_proxy_gap_bound(const ModelSpec& spec, int m, int r, int k) {
  const double t_star = r * (k - 0.5);
  const double mu_inf = spec.mu.row(m).cwiseAbs().maxCoeff();
  return double_factorial(r - 1) * t_star * t_star * std::pow(mu_inf, r) * spec.p_max() *
         std::pow(spec.nu(), t_star - 1.0);
}

ThetaReport theta_report(const ModelSpec& spec, const LabelAssignment& labels, int i, int m, int r, int k,
                         const CensusOptions& options) {
  ThetaReport rep;
  rep.i = i;
  rep.m = m;
  rep.r = r;
  rep.k = k;
  CensusOptions opts = options;
  opts.exact_moment = false;
  const MomentTable tab = moment_decomposition(spec, labels, i, m, r, k, opts);
  rep.theta_hi = tab.theta_hi;
  rep.theta_lo = tab.theta_lo;
  rep.theta_hi_proxy = theta_hi_proxy(spec, labels, i, m, r, k);
  rep.gap_bound = theta_proxy_gap_bound(spec, m, r, k);
  rep.passed = evaluate_le(std::abs(rep.theta_hi - rep.theta_hi_proxy), rep.gap_bound, 1e-12).satisfied;
  return rep;
}

Json theta_to_json(const ThetaReport& rep) {
  return Json{{"i", rep.i},
              {"m", rep.m},
              {"r", rep.r},
              {"k", rep.k},
              {"theta_hi", rep.theta_hi},
              {"theta_lo", rep.theta_lo},
              {"theta_hi_proxy", rep.theta_hi_proxy},
              {"gap_bound", rep.gap_bound},
              {"passed", rep.passed}};
}

// ---------------------------------------------------------------------------
// Monte Carlo moments

MomentEstimate mc_delta_moments(const ModelSpec& spec, const LabelAssignment& labels, int i, int m, int r, int k,
                                int trials, std::uint64_t seed, double confidence, int bootstrap, unsigned threads) {
  require(trials >= 2, ErrorKind::kInvalidArgument, "need at least two trials");
  require(r >= 1 && k >= 1, ErrorKind::kInvalidArgument, "invalid moment order or depth");
  require(confidence > 0.0 && confidence < 1.0, ErrorKind::kInvalidArgument, "confidence must be in (0,1)");
  const ClassPower power = class_power(spec, labels, k);
  const Eigen::VectorXd expected_row = power.row(labels, i);
  std::vector<double> values(trials);
  const int root[1] = {i};
  parallel_for(trials, threads, [&](std::size_t t) {
    const SparseGraph A = sample_graph(spec, labels, derive_seed(seed, Purpose::kGraph, t));
    const Matrix X = sample_features(spec, labels, derive_seed(seed, Purpose::kFeatures, t));
    const Eigen::MatrixXd row = power_rows(A, k, root);
    double delta = 0.0;
    for (int j = 0; j < spec.n; ++j) delta += (row(0, j) - expected_row[j]) * X(j, m);
    values[t] = std::pow(delta, r);
  });
  MomentEstimate est;
  est.trials = trials;
  double sum = 0.0;
  for (double v : values) sum += v;
  est.mean = sum / trials;
  double ss = 0.0;
  for (double v : values) ss += (v - est.mean) * (v - est.mean);
  est.std_error = std::sqrt(ss / (trials - 1) / trials);
  // Percentile bootstrap of the mean.
  std::vector<double> means(bootstrap);
  parallel_for(bootstrap, threads, [&](std::size_t b) {
    Stream rng(seed, Purpose::kBootstrap, b);
    double s = 0.0;
    for (int q = 0; q < trials; ++q) s += values[rng.below(trials)];
    means[b] = s / trials;
  });
  std::sort(means.begin(), means.end());
  const double alpha = (1.0 - confidence) / 2.0;
  auto quantile = [&](double q) {
    const double pos = q * (bootstrap - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - lo) * (means[hi] - means[lo]);
  };
  est.ci_low = quantile(alpha);
  est.ci_high = quantile(1.0 - alpha);
  return est;
}

ProductMomentCheck check_product_moment_inequality(const ModelSpec& spec, const LabelAssignment& labels, int r,
                                                   int k) {
  require(r >= 1 && r <= 4, ErrorKind::kInvalidArgument, "r must be in 1..4");
  require(spec.n <= 8, ErrorKind::kGuard, "product-moment check is exhaustive; keep n <= 8");
  const WalkTable tab = build_walk_table(spec, labels, 0, k);
  const std::size_t W = tab.size();
  ProductMomentCheck out;
  out.worst_margin = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> pick(r);
  std::vector<double> sub(1u << r);
  auto leaf = [&]() {
    for (std::uint32_t S = 0; S < (1u << r); ++S) {
      EdgeBits u;
      for (int s = 0; s < r; ++s)
        if (S >> s & 1u) u = u | tab.edges[pick[s]];
      double p = 1.0;
      u.for_each([&](int b) { p *= tab.pair_p[b]; });
      sub[S] = p;
    }
    for (std::uint32_t U = 0; U < (1u << r); ++U) {
      double prodU = 1.0;
      for (int s = 0; s < r; ++s)
        if (U >> s & 1u) prodU *= tab.prob[pick[s]];
      for (std::uint32_t V = 0; V < (1u << r); ++V) {
        const double lhs = sub[V] * prodU;
        const double rhs = sub[U | V];
        out.checked++;
        const double margin = rhs - lhs;
        out.worst_margin = std::min(out.worst_margin, margin);
        if (lhs > rhs * (1.0 + 1e-12) + 1e-300) out.violations++;
      }
    }
  };
  auto rec = [&](auto&& self, int s) -> void {
    if (s == r) {
      leaf();
      return;
    }
    for (std::size_t a = 0; a < W; ++a) {
      pick[s] = a;
      self(self, s + 1);
    }
  };
  rec(rec, 0);
  return out;
}

}  // namespace csbm
