#pragma once

#include "csbm/common.hpp"
#include "csbm/model.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <utility>
#include <vector>

namespace csbm {

// ---- small exact combinatorics (doubles are exact below 2^53) ----
double binomial(int n, int k);
double falling_factorial(double n, int k);
double catalan(int t);
double stirling2(int m, int t);
double double_factorial(int m);  // m!! with (-1)!! = 0!! = 1

// ---- single walks ----
enum class WalkMode { kFree, kClosed, kFixedEnd };

struct WalkShape {
  int edges = 0;     // |[w]|
  int vertices = 0;  // |<w>|
};

WalkShape walk_shape(std::span<const int> walk);
// G(w) has a cycle; for a connected walk graph this is |[w]| >= |<w>|.
bool walk_has_cycle(std::span<const int> walk);

// Calls fn(span of k+1 vertices) for every k-walk on K_n from start, in lexicographic order.
// Returns the number of walks visited.
std::uint64_t for_each_walk(int n, int k, int start, WalkMode mode, int end,
                            const std::function<void(std::span<const int>)>& fn);

struct PathCountRow {
  int t = 0;
  std::uint64_t count = 0;
  double bound = 0.0;  // C(n-2, t-1) t^(k-1)
  bool ok = true;
  // The bound pads the vertex set to t+1 nodes; with n <= t that is impossible and the bound reads 0.
  bool vertex_room = true;
};

// |N_t(i,j)| for distinct i, j and every t in 1..k.
std::vector<PathCountRow> count_Nt(int n, int k, int i, int j);

// Overridable closed-walk formula pieces; the verify suite swaps these to inject faults.
struct ClosedWalkFormulas {
  std::function<double(int)> catalan = [](int t) { return csbm::catalan(t); };
  std::function<double(int, int)> stirling2 = [](int m, int t) { return csbm::stirling2(m, t); };
};

struct ClosedCountRow {
  int t = 0;
  std::uint64_t looped = 0;    // G(w) has a cycle
  std::uint64_t loopless = 0;  // G(w) is a tree
  double looped_bound = 0.0;   // C(n-1, t-1) t^(k-1)
  double loopless_formula = 0.0;  // C_t C(n-1, t) t! S(k/2, t), even k and t <= k/2
  double crude_bound = 0.0;       // (2 e^2 n)^t t^(k/2 - t - 1)
  bool formula_applies = false;
  bool equality_expected = false;  // k == 2t
  bool ok = true;
  bool vertex_room = true;  // n >= t, needed to pad the looped vertex set to t nodes
};

std::vector<ClosedCountRow> count_closed(int n, int k, int i, const ClosedWalkFormulas& formulas = {});

// ---- exact E[A^k] by walk enumeration ----
struct EnumerationGuard {
  int max_n = 60;
  int max_k = 4;
  double max_steps = 1e8;
};

// Rows of E[A^k] (sum over walks of the product of p over unique edges).
Eigen::MatrixXd exact_EAk_rows(const ModelSpec& spec, const LabelAssignment& labels, int k,
                               std::span<const int> rows, const EnumerationGuard& guard = {});
// Full E[A^k]; one enumerated row per class, filled by exchangeability within classes.
Eigen::MatrixXd exact_EAk(const ModelSpec& spec, const LabelAssignment& labels, int k,
                          const EnumerationGuard& guard = {});
// E[A]^k as a sum over walks of the product of p over all steps, with repeated edges repeated.
Eigen::MatrixXd walk_product_power(const ModelSpec& spec, const LabelAssignment& labels, int k,
                                   const EnumerationGuard& guard = {});

struct GrowthCheck {
  bool precondition = false;  // nu >= k e^(2(k-1))
  InequalityRecord worst_entry;  // tightest entry against 2 p_max nu^(k-1) + 2 nu^(k/2) [i=j, k even]
  InequalityRecord row_aggregate;  // max_i (sum_j E[A^k]_ij^2)^(1/2) <= 4 nu^(k-1/2)
  int violations = 0;
};

GrowthCheck check_Akij_growth(const ModelSpec& spec, const LabelAssignment& labels, int k,
                              const Eigen::MatrixXd& EAk);

// ---- walk sequences ----
struct WalkSequence {
  int k = 0;
  std::vector<std::vector<int>> walks;  // each of length k+1, common first vertex
};

struct GammaPartition {
  std::vector<std::vector<int>> blocks;  // 0-based walk indices, ordered by smallest member
  bool overlapping = false;              // every block has size >= 2
};

GammaPartition gamma_partition(const WalkSequence& ws);
// For a perfect matching, the common second vertex of each pair; -1 where the pair disagrees.
std::vector<int> core_leaves(const WalkSequence& ws, const GammaPartition& gamma);

struct RhoTerms {
  double rho1 = 0.0;
  double rho2 = 0.0;
  double rho = 0.0;
};

// rho1 by the signed subset expansion, rho2 from raw moments of the grouped endpoints.
RhoTerms rho_terms(const WalkSequence& ws, const ModelSpec& spec, const LabelAssignment& labels, int m);
// 2^r prod-bound on |rho1| and (2 max{C1 sigma sqrt r, |mu_m|_inf})^r on |rho2|.
std::pair<double, double> rho_control_bounds(const WalkSequence& ws, const ModelSpec& spec,
                                             const LabelAssignment& labels, int m, double C1);

// The four structural clauses for a maximal sequence plus tree-ness.
struct StructureCheck {
  bool perfect_matching = false;
  bool rooted_tree = false;
  bool blocks_disjoint = false;   // pair subtrees meet only at the root
  bool pairs_split_after_first = false;  // partners share the first edge and nothing else
  bool all() const { return perfect_matching && rooted_tree && blocks_disjoint && pairs_split_after_first; }
};

StructureCheck check_maximal_structure(const WalkSequence& ws);

struct CensusCell {
  double count = 0.0;  // exact below 2^53
  double sum_rho = 0.0;
  double bound = 0.0;  // (v-1)^(rk) C(n-1, v-1)
};

struct MomentTable {
  int n = 0, k = 0, r = 0, root = 0, m = 0;
  int t_star_twice = 0;  // 2 t_* = r(2k-1)
  std::map<std::pair<int, int>, CensusCell> cells;  // keyed by (t, v)
  double theta_hi = 0.0;
  double theta_lo = 0.0;
  double exact_moment = 0.0;  // sum over all walk sequences, by direct expectation
  bool has_exact_moment = false;
  std::uint64_t maximal_sequences = 0;
  std::uint64_t structure_violations = 0;
  std::uint64_t cells_beyond_limits = 0;  // nonempty cells with t > t_* or v > t+1
  std::uint64_t cells_over_bound = 0;     // cells exceeding the counting bound
  std::uint64_t sum_bound_violations = 0;  // sum_{v <= b+1} |N_{r,t,v}| > b^(rk-b) (en)^b
  int distinct_matchings = 0;
};

struct CensusOptions {
  int max_n = 22;
  double max_tuples = 2e8;
  bool exact_moment = true;  // also run the direct-expectation full expansion
  int max_direct_edges = 12;  // skip the direct expansion when t exceeds this
};

MomentTable moment_decomposition(const ModelSpec& spec, const LabelAssignment& labels, int root, int m,
                                 int r, int k, const CensusOptions& options = {});

// Dedicated search for N_* with tree pruning; checks every maximal sequence found.
struct MaximalCensus {
  int n = 0, k = 0, r = 0;
  std::uint64_t found = 0;
  double expected = 0.0;  // (r-1)!! (n-1)_(t_*)
  std::uint64_t violations = 0;
  int distinct_matchings = 0;
  double expected_matchings = 0.0;  // (r-1)!!
  std::uint64_t nodes = 0;
  bool canonical = false;
  std::uint64_t canonical_found = 0;  // sequences with fresh vertices in first-appearance order
};

// canonical: new vertices are taken in increasing label order, and each hit stands for
// (n-1)_(t_*) labelled sequences. Structure checks run on the canonical representatives.
MaximalCensus enumerate_maximal(int n, int k, int r, int root = 0, double max_nodes = 5e9, bool canonical = false);

// (r-1)!! sum over ordered distinct (r/2)-tuples j != i of prod_q p_ij (1 - p_ij) (e_j^T E[A]^(k-1) M_m)^2.
double theta_hi_proxy(const ModelSpec& spec, const LabelAssignment& labels, int i, int m, int r, int k);
// Same value through elementary symmetric polynomials; used as an independent check.
double theta_hi_proxy_esp(const ModelSpec& spec, const LabelAssignment& labels, int i, int m, int r, int k);
// (r-1)!! t_*^2 |mu_m|_inf^r p_max nu^(t_*-1).
double theta_proxy_gap_bound(const ModelSpec& spec, int m, int r, int k);

struct ThetaReport {
  int i = 0, m = 0, r = 0, k = 0;
  double theta_hi = 0.0, theta_lo = 0.0, theta_hi_proxy = 0.0;
  double gap_bound = 0.0;
  bool passed = false;
};

ThetaReport theta_report(const ModelSpec& spec, const LabelAssignment& labels, int i, int m, int r, int k,
                         const CensusOptions& options = {});
Json theta_to_json(const ThetaReport& report);

struct MomentEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  double ci_low = 0.0, ci_high = 0.0;  // percentile bootstrap
  int trials = 0;
};

MomentEstimate mc_delta_moments(const ModelSpec& spec, const LabelAssignment& labels, int i, int m, int r,
                                int k, int trials, std::uint64_t seed, double confidence = 0.99,
                                int bootstrap = 1000, unsigned threads = 1);

// E[A_{w^V}] prod_{u in U} E[A_{w^u}] <= E[A_{w^{U u V}}] over all sequences and all U, V.
struct ProductMomentCheck {
  std::uint64_t checked = 0;
  std::uint64_t violations = 0;
  double worst_margin = 0.0;
};

ProductMomentCheck check_product_moment_inequality(const ModelSpec& spec, const LabelAssignment& labels,
                                                   int r, int k);

}  // namespace csbm
