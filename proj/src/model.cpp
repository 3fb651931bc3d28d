#include "csbm/model.hpp"

#include "csbm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>

namespace csbm {

std::string noise_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kGaussian: return "gaussian";
    case NoiseKind::kRademacher: return "rademacher";
    case NoiseKind::kUniform: return "uniform";
  }
  return "gaussian";
}

NoiseKind noise_from_name(const std::string& name) {
  if (name == "gaussian") return NoiseKind::kGaussian;
  if (name == "rademacher") return NoiseKind::kRademacher;
  if (name == "uniform") return NoiseKind::kUniform;
  fail(ErrorKind::kConfig, "unknown noise '" + name + "' (gaussian, rademacher, uniform)");
}

double noise_central_moment(NoiseKind kind, double sigma, int j) {
  if (j < 0) fail(ErrorKind::kInvalidArgument, "negative moment order");
  if (j == 0) return 1.0;
  if (j % 2 == 1) return 0.0;
  switch (kind) {
    case NoiseKind::kGaussian: {
      double double_factorial = 1.0;
      for (int q = j - 1; q > 1; q -= 2) double_factorial *= q;
      return std::pow(sigma, j) * double_factorial;
    }
    case NoiseKind::kRademacher: return std::pow(sigma, j);
    case NoiseKind::kUniform: return std::pow(sigma * std::sqrt(3.0), j) / (j + 1);
  }
  return 0.0;
}

double noise_raw_moment(NoiseKind kind, double mean, double sigma, int a) {
  double total = 0.0;
  double binom = 1.0;
  for (int j = 0; j <= a; ++j) {
    if (j > 0) binom = binom * (a - j + 1) / j;
    if (j % 2 == 0) total += binom * std::pow(mean, a - j) * noise_central_moment(kind, sigma, j);
  }
  return total;
}

void ModelSpec::validate() const {
  require(n >= 1, ErrorKind::kInvalidArgument, "n must be positive");
  require(d >= 1, ErrorKind::kInvalidArgument, "d must be positive");
  require(L >= 1, ErrorKind::kInvalidArgument, "L must be positive");
  require(k >= 0, ErrorKind::kInvalidArgument, "k must be nonnegative");
  require(B.rows() == L && B.cols() == L, ErrorKind::kInvalidArgument, "B must be L x L");
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b) {
      require(B(a, b) >= 0.0 && B(a, b) <= 1.0, ErrorKind::kInvalidArgument,
              "B entries must lie in [0, 1]");
      require(B(a, b) == B(b, a), ErrorKind::kInvalidArgument, "B must be symmetric");
    }
  require(static_cast<int>(pi.size()) == L, ErrorKind::kInvalidArgument, "pi must have L entries");
  double total = 0.0;
  for (double p : pi) {
    require(p > 0.0, ErrorKind::kInvalidArgument, "pi entries must be positive");
    total += p;
  }
  require(std::abs(total - 1.0) <= 1e-12, ErrorKind::kInvalidArgument, "pi must sum to 1");
  require(mu.rows() == d && mu.cols() == L, ErrorKind::kInvalidArgument, "mu must be d x L");
  require(std::isfinite(sigma) && sigma >= 0.0, ErrorKind::kInvalidArgument,
          "sigma must be nonnegative");
  require(mu.allFinite(), ErrorKind::kInvalidArgument, "mu must be finite");
}

namespace {

int json_int(const Json& v, const char* key) {
  if (!v.is_number()) fail(ErrorKind::kConfig, std::string(key) + " must be a number");
  double x = v.get<double>();
  if (x != std::floor(x) || std::abs(x) > 2e9) fail(ErrorKind::kConfig, std::string(key) + " must be an integer");
  return static_cast<int>(x);
}

double json_double(const Json& v, const char* key) {
  if (!v.is_number()) fail(ErrorKind::kConfig, std::string(key) + " must be a number");
  return v.get<double>();
}

std::vector<double> flatten_numbers(const Json& v, const char* key) {
  std::vector<double> out;
  if (!v.is_array()) fail(ErrorKind::kConfig, std::string(key) + " must be an array");
  for (const auto& item : v) {
    if (item.is_array()) {
      for (const auto& inner : item) out.push_back(json_double(inner, key));
    } else {
      out.push_back(json_double(item, key));
    }
  }
  return out;
}

}  // namespace

ModelSpec model_from_json(const Json& doc) {
  reject_unknown_keys(doc, {"n", "d", "L", "B", "pi", "mu", "sigma", "k", "noise"}, "model");
  for (const char* key : {"n", "d", "L", "B", "pi", "mu", "sigma", "k"})
    if (!doc.contains(key)) fail(ErrorKind::kConfig, std::string("model: missing key '") + key + "'");
  ModelSpec spec;
  spec.n = json_int(doc["n"], "n");
  spec.d = json_int(doc["d"], "d");
  spec.L = json_int(doc["L"], "L");
  spec.k = json_int(doc["k"], "k");
  spec.sigma = json_double(doc["sigma"], "sigma");
  if (doc.contains("noise")) {
    if (!doc["noise"].is_string()) fail(ErrorKind::kConfig, "noise must be a string");
    spec.noise = noise_from_name(doc["noise"].get<std::string>());
  }
  if (spec.L < 1 || spec.d < 1) fail(ErrorKind::kConfig, "model: L and d must be positive");
  auto b = flatten_numbers(doc["B"], "B");
  if (static_cast<int>(b.size()) != spec.L * spec.L) fail(ErrorKind::kConfig, "B must have L*L entries");
  spec.B.resize(spec.L, spec.L);
  for (int a = 0; a < spec.L; ++a)
    for (int c = 0; c < spec.L; ++c) spec.B(a, c) = b[a * spec.L + c];
  spec.pi = flatten_numbers(doc["pi"], "pi");
  auto m = flatten_numbers(doc["mu"], "mu");
  if (static_cast<int>(m.size()) != spec.d * spec.L) fail(ErrorKind::kConfig, "mu must have d*L entries");
  spec.mu.resize(spec.d, spec.L);
  for (int l = 0; l < spec.L; ++l)
    for (int r = 0; r < spec.d; ++r) spec.mu(r, l) = m[l * spec.d + r];
  try {
    spec.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, std::string("model: ") + e.what());
  }
  return spec;
}

Json model_to_json(const ModelSpec& spec) {
  Json doc;
  doc["n"] = spec.n;
  doc["d"] = spec.d;
  doc["L"] = spec.L;
  std::vector<double> b;
  for (int a = 0; a < spec.L; ++a)
    for (int c = 0; c < spec.L; ++c) b.push_back(spec.B(a, c));
  doc["B"] = b;
  doc["pi"] = spec.pi;
  std::vector<double> m;
  for (int l = 0; l < spec.L; ++l)
    for (int r = 0; r < spec.d; ++r) m.push_back(spec.mu(r, l));
  doc["mu"] = m;
  doc["sigma"] = spec.sigma;
  doc["k"] = spec.k;
  doc["noise"] = noise_name(spec.noise);
  return doc;
}

ModelSpec model_from_text(std::string_view text, ConfigFormat format) {
  return model_from_json(parse_config_text(text, format));
}

ModelSpec load_model(const std::string& path) { return model_from_json(load_config_file(path)); }

Eigen::MatrixXd LabelAssignment::membership() const {
  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(n(), classes());
  for (int i = 0; i < n(); ++i) Z(i, y[i]) = 1.0;
  return Z;
}

std::vector<double> LabelAssignment::proportions() const {
  std::vector<double> p(counts.size());
  for (std::size_t l = 0; l < counts.size(); ++l) p[l] = static_cast<double>(counts[l]) / n();
  return p;
}

LabelAssignment labels_from_classes(std::vector<int> y, int L) {
  LabelAssignment labels;
  labels.counts.assign(L, 0);
  labels.members.assign(L, {});
  for (int i = 0; i < static_cast<int>(y.size()); ++i) {
    require(y[i] >= 0 && y[i] < L, ErrorKind::kInvalidArgument, "label out of range");
    labels.counts[y[i]]++;
    labels.members[y[i]].push_back(i);
  }
  for (int l = 0; l < L; ++l)
    require(labels.counts[l] > 0, ErrorKind::kInvalidArgument,
            "empty cluster: class " + std::to_string(l + 1) + " has no nodes");
  labels.y = std::move(y);
  return labels;
}

LabelAssignment assign_labels(const ModelSpec& spec) {
  spec.validate();
  const int L = spec.L;
  std::vector<int> counts(L);
  std::vector<double> remainder(L);
  int assigned = 0;
  for (int l = 0; l < L; ++l) {
    double quota = spec.pi[l] * spec.n;
    counts[l] = static_cast<int>(std::floor(quota));
    remainder[l] = quota - counts[l];
    assigned += counts[l];
  }
  std::vector<int> order(L);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int q = 0; assigned < spec.n; ++q, ++assigned) counts[order[q % L]]++;
  std::vector<int> y;
  y.reserve(spec.n);
  for (int l = 0; l < L; ++l) y.insert(y.end(), counts[l], l);
  return labels_from_classes(std::move(y), L);
}

ExpectedAdjacency::ExpectedAdjacency(const ModelSpec& spec, const LabelAssignment& labels)
    : B_(spec.B), y_(labels.y), counts_(labels.counts) {
  require(labels.n() == spec.n && labels.classes() == spec.L, ErrorKind::kInvalidArgument,
          "labels do not match the model");
}

Eigen::MatrixXd ExpectedAdjacency::dense_P() const {
  const int n = this->n();
  Eigen::MatrixXd P(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) P(i, j) = B_(y_[i], y_[j]);
  return P;
}

Eigen::MatrixXd ExpectedAdjacency::dense() const {
  Eigen::MatrixXd P = dense_P();
  P.diagonal().setZero();
  return P;
}

void ExpectedAdjacency::apply_P(std::span<const double> x, std::span<double> out) const {
  const int L = static_cast<int>(counts_.size());
  Eigen::VectorXd sums = Eigen::VectorXd::Zero(L);
  for (std::size_t i = 0; i < x.size(); ++i) sums[y_[i]] += x[i];
  Eigen::VectorXd mixed = B_ * sums;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = mixed[y_[i]];
}

void ExpectedAdjacency::apply(std::span<const double> x, std::span<double> out) const {
  apply_P(x, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= B_(y_[i], y_[i]) * x[i];
}

Eigen::MatrixXd ExpectedAdjacency::reduced_P() const {
  const int L = static_cast<int>(counts_.size());
  Eigen::MatrixXd R(L, L);
  for (int a = 0; a < L; ++a)
    for (int b = 0; b < L; ++b) R(a, b) = std::sqrt(double(counts_[a]) * counts_[b]) * B_(a, b);
  return R;
}

SparseGraph SparseGraph::from_edges(int n, std::vector<std::pair<int, int>> edges) {
  SparseGraph g;
  g.n_ = n;
  std::vector<std::int64_t> degree(n, 0);
  for (auto [i, j] : edges) {
    if (!(0 <= i && i < j && j < n))
      fail(ErrorKind::kInvalidArgument,
           "edge (" + std::to_string(i) + "," + std::to_string(j) + ") must satisfy 0 <= i < j < n");
    degree[i]++;
    degree[j]++;
  }
  g.offsets_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) g.offsets_[i + 1] = g.offsets_[i] + degree[i];
  g.adjacency_.resize(static_cast<std::size_t>(g.offsets_[n]));
  std::vector<std::int64_t> fill(g.offsets_.begin(), g.offsets_.end() - 1);
  for (auto [i, j] : edges) {
    g.adjacency_[fill[i]++] = j;
    g.adjacency_[fill[j]++] = i;
  }
  for (int i = 0; i < n; ++i) {
    auto first = g.adjacency_.begin() + g.offsets_[i];
    auto last = g.adjacency_.begin() + g.offsets_[i + 1];
    if (!std::is_sorted(first, last)) std::sort(first, last);
    require(std::adjacent_find(first, last) == last, ErrorKind::kInvalidArgument, "duplicate edge");
  }
  return g;
}

bool SparseGraph::has_edge(int i, int j) const {
  auto nb = neighbors(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::vector<std::pair<int, int>> SparseGraph::edges() const {
  std::vector<std::pair<int, int>> out;
  out.reserve(edge_count());
  for (int i = 0; i < n_; ++i)
    for (int j : neighbors(i))
      if (i < j) out.emplace_back(i, j);
  return out;
}

Eigen::MatrixXd SparseGraph::dense() const {
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j : neighbors(i)) A(i, j) = 1.0;
  return A;
}

void SparseGraph::apply(std::span<const double> x, std::span<double> out) const {
  for (int i = 0; i < n_; ++i) {
    double s = 0.0;
    for (int j : neighbors(i)) s += x[j];
    out[i] = s;
  }
}

void SparseGraph::write_edge_list(std::ostream& out) const {
  for (auto [i, j] : edges()) out << i << ' ' << j << '\n';
}

SparseGraph sample_graph(const ModelSpec& spec, const LabelAssignment& labels, std::uint64_t seed) {
  require(labels.n() == spec.n && labels.classes() == spec.L, ErrorKind::kInvalidArgument,
          "labels do not match the model");
  Stream rng(seed, Purpose::kGraph);
  std::vector<std::pair<int, int>> edges;
  edges.reserve(static_cast<std::size_t>(std::min(1e8, spec.nu() * spec.n / 2.0 * 1.1 + 16)));
  auto push = [&](int u, int v) { edges.emplace_back(std::min(u, v), std::max(u, v)); };
  for (int a = 0; a < spec.L; ++a) {
    for (int b = a; b < spec.L; ++b) {
      const double p = spec.B(a, b);
      const auto& rows = labels.members[a];
      const auto& cols = labels.members[b];
      const std::int64_t na = static_cast<std::int64_t>(rows.size());
      const std::int64_t nb = static_cast<std::int64_t>(cols.size());
      const std::int64_t total = a == b ? na * (na - 1) / 2 : na * nb;
      if (p <= 0.0 || total == 0) continue;
      if (p >= 0.25) {
        // Dense blocks: one uniform per pair is cheaper than a logarithm per success.
        for (std::int64_t r = 0; r < na; ++r)
          for (std::int64_t c = a == b ? r + 1 : 0; c < nb; ++c)
            if (rng.uniform() < p) push(rows[r], cols[c]);
        continue;
      }
      // Geometric skipping visits only the successes; the pair index runs row by row.
      const double log_q = p < 1.0 ? std::log1p(-p) : 0.0;
      std::int64_t idx = -1;
      std::int64_t row = 0, row_start = 0;  // triangular bookkeeping for a == b
      while (true) {
        std::int64_t skip = 0;
        if (p < 1.0) {
          double g = std::floor(std::log1p(-rng.uniform()) / log_q);
          skip = g >= static_cast<double>(total) ? total : static_cast<std::int64_t>(g);
        }
        idx += skip + 1;
        if (idx >= total) break;
        if (a != b) {
          push(rows[idx / nb], cols[idx % nb]);
        } else {
          while (idx >= row_start + (na - 1 - row)) {
            row_start += na - 1 - row;
            ++row;
          }
          push(rows[row], rows[row + 1 + (idx - row_start)]);
        }
      }
    }
  }
  return SparseGraph::from_edges(spec.n, std::move(edges));
}

Matrix mean_features(const ModelSpec& spec, const LabelAssignment& labels) {
  Matrix M(spec.n, spec.d);
  for (int i = 0; i < spec.n; ++i) M.row(i) = spec.mu.col(labels.y[i]).transpose();
  return M;
}

Matrix sample_features(const ModelSpec& spec, const LabelAssignment& labels, std::uint64_t seed) {
  Stream rng(seed, Purpose::kFeatures);
  Matrix X = mean_features(spec, labels);
  if (spec.sigma == 0.0) return X;
  const double s3 = std::sqrt(3.0);
  for (int i = 0; i < spec.n; ++i)
    for (int m = 0; m < spec.d; ++m) {
      double e = 0.0;
      switch (spec.noise) {
        case NoiseKind::kGaussian: e = rng.normal(); break;
        case NoiseKind::kRademacher: e = (rng.next_u64() >> 63) ? 1.0 : -1.0; break;
        case NoiseKind::kUniform: e = (2.0 * rng.uniform() - 1.0) * s3; break;
      }
      X(i, m) += spec.sigma * e;
    }
  return X;
}

Eigen::MatrixXd normalized_transition(const ModelSpec& spec, const LabelAssignment& labels) {
  const double nu = spec.nu();
  require(nu > 0.0, ErrorKind::kInvalidArgument, "nu_n must be positive (B is zero)");
  Eigen::MatrixXd T(spec.L, spec.L);
  for (int a = 0; a < spec.L; ++a)
    for (int b = 0; b < spec.L; ++b) T(a, b) = labels.counts[a] * spec.B(a, b) / nu;
  return T;
}

Eigen::MatrixXd normalized_centers(const ModelSpec& spec, const LabelAssignment& labels, int k) {
  Eigen::MatrixXd T = normalized_transition(spec, labels);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(spec.L, spec.L);
  for (int s = 0; s < k; ++s) power = T * power;
  return spec.mu * power;
}

double separation_factor_raw(const ModelSpec& spec, const LabelAssignment& labels, int k) {
  if (spec.L < 2 || spec.nu() <= 0.0) return 0.0;
  Eigen::MatrixXd xi = normalized_centers(spec, labels, k);
  double best = std::numeric_limits<double>::infinity();
  for (int a = 0; a < spec.L; ++a)
    for (int b = a + 1; b < spec.L; ++b) best = std::min(best, (xi.col(a) - xi.col(b)).norm());
  return best / std::sqrt(static_cast<double>(spec.d));
}

AssumptionReport check_assumptions(const ModelSpec& spec, const LabelAssignment& labels,
                                   const AssumptionConstants& constants) {
  return check_assumptions(spec, labels, spec.k, constants);
}

AssumptionReport check_assumptions(const ModelSpec& spec, const LabelAssignment& labels, int k,
                                   const AssumptionConstants& constants) {
  AssumptionReport rep;
  rep.constants = constants;
  const double n = spec.n;
  const double nu = spec.nu();
  const int L = spec.L;
  std::ostringstream msg;

  // (A1)
  {
    double margin = std::numeric_limits<double>::infinity();
    bool ok = nu > 0.0;
    const double off_bound = constants.C_B * std::pow(nu, 1.0 - constants.delta);
    rep.index_sets.assign(L, {});
    for (int a = 0; a < L; ++a) {
      for (int b = 0; b < L; ++b) {
        const double v = n * spec.B(a, b);
        if (v >= constants.c_B * nu) {
          rep.index_sets[a].push_back(b);
          margin = std::min(margin, v - constants.c_B * nu);
        } else {
          margin = std::min(margin, off_bound - v);
        }
      }
      if (rep.index_sets[a].empty()) ok = false;
    }
    rep.a1.margin = margin;
    rep.a1.satisfied = ok && margin >= 0.0;
    rep.a1.detail = "n B_ll' >= c_B nu on I_l and <= C_B nu^(1-delta) off I_l";
  }
  // (A2)
  rep.a2.margin = (1.0 - constants.c_nu) * n - nu;
  rep.a2.satisfied = rep.a2.margin >= 0.0;
  rep.a2.detail = "nu <= (1 - c_nu) n";
  // (A3)
  {
    auto prop = labels.proportions();
    double min_lp = std::numeric_limits<double>::infinity();
    double norm2 = 0.0;
    for (double p : prop) {
      min_lp = std::min(min_lp, L * p);
      norm2 += p * p;
    }
    const double spread = std::sqrt(L * norm2);
    rep.C_pi_derived = !constants.C_pi.has_value();
    rep.C_pi = constants.C_pi.value_or(spread);
    rep.a3.margin = std::min(min_lp - constants.c_pi, rep.C_pi - spread);
    rep.a3.satisfied = rep.a3.margin >= 0.0;
    rep.a3.detail = "L pi_l >= c_pi and sqrt(L) |pi| <= C_pi";
  }
  // (A4)
  {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(spec.mu);
    const double op = svd.singularValues().size() ? svd.singularValues()[0] : 0.0;
    const double root_d = std::sqrt(static_cast<double>(spec.d));
    rep.C_mu_derived = !constants.C_mu.has_value();
    rep.C_mu = constants.C_mu.value_or(op / root_d);
    rep.a4.margin = rep.C_mu * root_d - op;
    rep.a4.satisfied = rep.a4.margin >= -1e-12 * std::max(1.0, op);
    rep.a4.detail = "|mu|_op <= C_mu sqrt(d)";
  }
  // (A5)
  if (L >= 2 && nu > 0.0) {
    rep.xi_bar = normalized_centers(spec, labels, k);
    rep.c_xi_raw = separation_factor_raw(spec, labels, k);
    rep.c_xi = std::min(1.0, rep.c_xi_raw);
    rep.a5.margin = rep.c_xi_raw;
    rep.a5.satisfied = rep.c_xi_raw > 1e-12;
    rep.a5.detail = "normalized aggregated centers are separated";
  } else {
    rep.xi_bar = Eigen::MatrixXd::Zero(spec.d, L);
    rep.a5.satisfied = false;
    rep.a5.detail = L < 2 ? "fewer than two classes" : "nu_n is zero";
  }
  return rep;
}

Json assumptions_to_json(const AssumptionReport& rep) {
  auto item = [](const AssumptionItem& it) {
    return Json{{"satisfied", it.satisfied}, {"margin", it.margin}, {"detail", it.detail}};
  };
  Json doc;
  doc["A1"] = item(rep.a1);
  doc["A2"] = item(rep.a2);
  doc["A3"] = item(rep.a3);
  doc["A4"] = item(rep.a4);
  doc["A5"] = item(rep.a5);
  const auto& c = rep.constants;
  doc["constants"] = {{"c_B", c.c_B},
                      {"C_B", c.C_B},
                      {"delta", std::isinf(c.delta) ? Json("inf") : Json(c.delta)},
                      {"c_nu", c.c_nu},
                      {"c_pi", c.c_pi},
                      {"C_pi", rep.C_pi},
                      {"C_pi_derived", rep.C_pi_derived},
                      {"C_mu", rep.C_mu},
                      {"C_mu_derived", rep.C_mu_derived},
                      {"c_xi", rep.c_xi},
                      {"c_xi_unclamped", rep.c_xi_raw}};
  Json sets = Json::array();
  for (const auto& s : rep.index_sets) {
    Json one = Json::array();
    for (int b : s) one.push_back(b + 1);
    sets.push_back(one);
  }
  doc["index_sets"] = sets;
  return doc;
}

}  // namespace csbm
