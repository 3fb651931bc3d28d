#include "csbm/experiment.hpp"

#include "csbm/features.hpp"
#include "csbm/format.hpp"
#include "csbm/parallel.hpp"
#include "csbm/rng.hpp"
#include "csbm/shapes.hpp"
#include "csbm/svg.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

namespace csbm {

std::string build_id() { return CSBM_BUILD_ID; }

CsvTable::CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

void CsvTable::add(std::vector<std::string> cells) {
  require(cells.size() == columns_.size(), ErrorKind::kInternal, "CSV row width does not match the header");
  rows_.push_back(std::move(cells));
}

std::string CsvTable::render(const Provenance& prov) const {
  std::ostringstream out;
  out << "build_id,plan_hash,master_seed";
  for (const auto& c : columns_) out << ',' << csv_field(c);
  out << '\n';
  const std::string prefix = csv_field(prov.build_id) + "," + prov.plan_hash + "," + std::to_string(prov.master_seed);
  for (const auto& row : rows_) {
    out << prefix;
    for (const auto& c : row) out << ',' << csv_field(c);
    out << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// plan parsing

namespace {

std::string num(double v) { return format_number(v); }

[[noreturn]] void config_error(const std::string& where, const std::string& what) {
  fail(ErrorKind::kConfig, where + ": " + what);
}

double get_double(const Json& v, const std::string& where) {
  if (!v.is_number()) config_error(where, "expected a number");
  return v.get<double>();
}

long long get_integer(const Json& v, const std::string& where) {
  if (v.is_number_integer()) return v.get<long long>();
  if (v.is_number_float()) {
    const double x = v.get<double>();
    if (x == std::floor(x) && std::abs(x) < 9e15) return static_cast<long long>(x);
  }
  config_error(where, "expected an integer");
}

bool get_bool(const Json& v, const std::string& where) {
  if (!v.is_boolean()) config_error(where, "expected true or false");
  return v.get<bool>();
}

std::vector<int> get_int_list(const Json& v, const std::string& where, int min_value) {
  if (!v.is_array() || v.empty()) config_error(where, "expected a nonempty array of integers");
  std::vector<int> out;
  for (const auto& x : v) {
    const long long q = get_integer(x, where);
    if (q < min_value || q > 2000000000LL) config_error(where, "value " + std::to_string(q) + " out of range");
    out.push_back(static_cast<int>(q));
  }
  return out;
}

std::vector<double> get_double_list(const Json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) config_error(where, "expected a nonempty array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(get_double(x, where));
  return out;
}

NuRule parse_nu(const Json& v, const std::string& where) {
  if (!v.is_object()) config_error(where, "expected a table");
  reject_unknown_keys(v, {"rule", "c", "gamma", "value"}, where);
  NuRule rule;
  const std::string kind = v.contains("rule") && v["rule"].is_string() ? v["rule"].get<std::string>() : "";
  if (kind == "power") {
    rule.kind = NuRule::Kind::kPower;
    if (v.contains("c")) rule.c = get_double(v["c"], where + ".c");
    if (v.contains("gamma")) rule.gamma = get_double(v["gamma"], where + ".gamma");
    if (v.contains("value")) config_error(where, "'value' belongs to rule = \"fixed\"");
    if (!(rule.c > 0.0) || !(rule.gamma > 0.0 && rule.gamma <= 1.0))
      config_error(where, "need c > 0 and 0 < gamma <= 1");
  } else if (kind == "fixed") {
    rule.kind = NuRule::Kind::kFixed;
    if (!v.contains("value")) config_error(where, "rule = \"fixed\" needs 'value'");
    if (v.contains("c") || v.contains("gamma")) config_error(where, "'c' and 'gamma' belong to rule = \"power\"");
    rule.value = get_double(v["value"], where + ".value");
    if (!(rule.value > 0.0)) config_error(where, "value must be positive");
  } else {
    config_error(where, "rule must be \"power\" or \"fixed\"");
  }
  return rule;
}

ModelTemplate parse_template(const Json& v, const std::string& where) {
  if (!v.is_object()) config_error(where, "expected a table");
  reject_unknown_keys(v, {"B", "pi", "mu", "sigma", "noise"}, where);
  for (const char* key : {"B", "mu"})
    if (!v.contains(key)) config_error(where, std::string("missing '") + key + "'");
  ModelTemplate t;
  const Json& B = v["B"];
  if (!B.is_array() || B.empty()) config_error(where + ".B", "expected a square array of rows");
  const int L = static_cast<int>(B.size());
  t.B_shape.resize(L, L);
  for (int a = 0; a < L; ++a) {
    if (!B[a].is_array() || static_cast<int>(B[a].size()) != L) config_error(where + ".B", "rows must have L entries");
    for (int b = 0; b < L; ++b) t.B_shape(a, b) = get_double(B[a][b], where + ".B");
  }
  if (t.B_shape.minCoeff() < 0.0 || !(t.B_shape.maxCoeff() > 0.0))
    config_error(where + ".B", "entries must be nonnegative with a positive maximum");
  if ((t.B_shape - t.B_shape.transpose()).cwiseAbs().maxCoeff() > 0.0) config_error(where + ".B", "must be symmetric");
  t.pi = v.contains("pi") ? get_double_list(v["pi"], where + ".pi") : std::vector<double>(L, 1.0 / L);
  if (static_cast<int>(t.pi.size()) != L) config_error(where + ".pi", "must have L entries");
  const Json& mu = v["mu"];
  if (!mu.is_array() || static_cast<int>(mu.size()) != L)
    config_error(where + ".mu", "expected one center per class");
  int d = -1;
  for (int l = 0; l < L; ++l) {
    const auto center = get_double_list(mu[l], where + ".mu");
    if (d < 0) {
      d = static_cast<int>(center.size());
      t.mu.resize(d, L);
    } else if (static_cast<int>(center.size()) != d) {
      config_error(where + ".mu", "centers must share one dimension");
    }
    for (int r = 0; r < d; ++r) t.mu(r, l) = center[r];
  }
  if (v.contains("sigma")) t.sigma = get_double(v["sigma"], where + ".sigma");
  if (v.contains("noise")) {
    if (!v["noise"].is_string()) config_error(where + ".noise", "expected a string");
    try {
      t.noise = noise_from_name(v["noise"].get<std::string>());
    } catch (const Error& e) {
      config_error(where + ".noise", e.what());
    }
  }
  // Validate once at a harmless size.
  try {
    t.instantiate(std::max(L, 2) * 10, 1.0);
  } catch (const Error& e) {
    config_error(where, e.what());
  }
  return t;
}

StudyPlan parse_study(const Json& v, std::size_t index) {
  const std::string where = "study[" + std::to_string(index) + "]";
  if (!v.is_object()) config_error(where, "expected a table");
  reject_unknown_keys(v,
                      {"name", "kind", "n", "k", "nu", "model", "trials", "classify", "observed_fraction",
                       "slope_range", "max_ratio", "ratio_cv_max", "nu_points", "nu_span", "crossover_factor"},
                      where);
  StudyPlan s;
  if (!v.contains("name") || !v["name"].is_string()) config_error(where, "missing string 'name'");
  s.name = v["name"].get<std::string>();
  if (s.name.empty() || s.name.size() > 64 ||
      !std::all_of(s.name.begin(), s.name.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }))
    config_error(where, "name must be 1-64 characters from [A-Za-z0-9_-]");
  const std::string kind = v.contains("kind") && v["kind"].is_string() ? v["kind"].get<std::string>() : "";
  if (kind == "rate_invariance") s.kind = StudyKind::kRateInvariance;
  else if (kind == "oversmoothing") s.kind = StudyKind::kOversmoothing;
  else if (kind == "parity_boundary") s.kind = StudyKind::kParityBoundary;
  else config_error(where, "kind must be rate_invariance, oversmoothing or parity_boundary");

  if (!v.contains("n")) config_error(where, "missing 'n'");
  if (!v.contains("k")) config_error(where, "missing 'k'");
  if (!v.contains("model")) config_error(where, "missing 'model'");
  s.n = get_int_list(v["n"], where + ".n", 2);
  s.k = get_int_list(v["k"], where + ".k", s.kind == StudyKind::kParityBoundary ? 1 : 0);
  s.model = parse_template(v["model"], where + ".model");
  if (s.kind == StudyKind::kParityBoundary) {
    if (v.contains("nu")) config_error(where, "'nu' is swept by the parity study and must not be set");
  } else {
    if (!v.contains("nu")) config_error(where, "missing 'nu'");
    s.nu = parse_nu(v["nu"], where + ".nu");
  }
  if (v.contains("trials")) {
    const long long t = get_integer(v["trials"], where + ".trials");
    if (t < 1 || t > 100000000) config_error(where + ".trials", "must be at least 1");
    s.trials = static_cast<int>(t);
  }
  if (v.contains("classify")) s.classify = get_bool(v["classify"], where + ".classify");
  if (v.contains("observed_fraction")) {
    s.observed_fraction = get_double(v["observed_fraction"], where + ".observed_fraction");
    if (!(s.observed_fraction > 0.0 && s.observed_fraction < 1.0))
      config_error(where + ".observed_fraction", "must lie in (0, 1)");
  }
  if (v.contains("slope_range")) {
    const auto r = get_double_list(v["slope_range"], where + ".slope_range");
    if (r.size() != 2 || !(r[0] < r[1])) config_error(where + ".slope_range", "expected [low, high]");
    s.slope_low = r[0];
    s.slope_high = r[1];
  }
  if (v.contains("max_ratio")) s.max_ratio = get_double(v["max_ratio"], where + ".max_ratio");
  if (v.contains("ratio_cv_max")) s.ratio_cv_max = get_double(v["ratio_cv_max"], where + ".ratio_cv_max");
  if (v.contains("nu_points")) {
    const long long p = get_integer(v["nu_points"], where + ".nu_points");
    if (p < 3 || p > 100000) config_error(where + ".nu_points", "must be between 3 and 100000");
    s.nu_points = static_cast<int>(p);
  }
  if (v.contains("nu_span")) {
    s.nu_span = get_double(v["nu_span"], where + ".nu_span");
    if (!(s.nu_span > 1.0)) config_error(where + ".nu_span", "must exceed 1");
  }
  if (v.contains("crossover_factor")) s.crossover_factor = get_double(v["crossover_factor"], where + ".crossover_factor");
  return s;
}

}  // namespace

ModelSpec ModelTemplate::instantiate(int n, double nu) const {
  ModelSpec s;
  s.n = n;
  s.L = static_cast<int>(B_shape.rows());
  s.d = static_cast<int>(mu.rows());
  require(nu > 0.0, ErrorKind::kInvalidArgument, "nu must be positive");
  require(nu <= n, ErrorKind::kInvalidArgument,
          "nu = " + num(nu) + " exceeds n = " + std::to_string(n) + " (edge probabilities above 1)");
  s.B = B_shape * (nu / n / B_shape.maxCoeff());
  s.B = s.B.cwiseMin(1.0);
  s.pi = pi;
  s.mu = mu;
  s.sigma = sigma;
  s.noise = noise;
  s.k = 1;
  s.validate();
  return s;
}

std::string study_kind_name(StudyKind kind) {
  switch (kind) {
    case StudyKind::kRateInvariance: return "rate_invariance";
    case StudyKind::kOversmoothing: return "oversmoothing";
    case StudyKind::kParityBoundary: return "parity_boundary";
  }
  return "?";
}

ExperimentPlan plan_from_json(const Json& doc) {
  if (!doc.is_object()) config_error("plan", "expected a table at the top level");
  reject_unknown_keys(doc, {"seed", "output", "study"}, "plan");
  ExperimentPlan plan;
  if (doc.contains("seed")) {
    const long long s = get_integer(doc["seed"], "plan.seed");
    if (s < 0) config_error("plan.seed", "must be nonnegative");
    plan.seed = static_cast<std::uint64_t>(s);
  }
  if (doc.contains("output")) {
    const Json& o = doc["output"];
    if (!o.is_object()) config_error("plan.output", "expected a table");
    reject_unknown_keys(o, {"dir", "svg"}, "plan.output");
    if (o.contains("dir")) {
      if (!o["dir"].is_string()) config_error("plan.output.dir", "expected a string");
      plan.out_dir = o["dir"].get<std::string>();
    }
    if (o.contains("svg")) plan.svg = get_bool(o["svg"], "plan.output.svg");
  }
  if (doc.contains("study")) {
    const Json& st = doc["study"];
    if (!st.is_array()) config_error("plan.study", "expected an array of tables ([[study]])");
    std::set<std::string> names;
    for (std::size_t q = 0; q < st.size(); ++q) {
      plan.studies.push_back(parse_study(st[q], q));
      if (!names.insert(plan.studies.back().name).second)
        config_error("plan.study", "duplicate study name '" + plan.studies.back().name + "'");
    }
  }
  plan.hash = hex64(fnv1a(doc.dump()));
  return plan;
}

ExperimentPlan load_plan(const std::string& path) { return plan_from_json(load_config_file(path)); }

bool is_hard_failure(const CheckOutcome& c) { return c.status == "fail"; }

// ---------------------------------------------------------------------------
// statistics

LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::kInvalidArgument, "a line fit needs two points");
  const double N = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / N;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / N;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 0.0, ErrorKind::kInvalidArgument, "a line fit needs distinct x values");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy > 0.0 ? sxy * sxy / (sxx * syy) : 1.0;
  return f;
}

RatioStats ratio_stats(const std::vector<double>& values) {
  RatioStats out;
  for (std::size_t q = 1; q < values.size(); ++q)
    out.ratios.push_back(values[q - 1] != 0.0 ? values[q] / values[q - 1] : std::numeric_limits<double>::quiet_NaN());
  if (out.ratios.empty()) return out;
  const double N = static_cast<double>(out.ratios.size());
  out.mean = std::accumulate(out.ratios.begin(), out.ratios.end(), 0.0) / N;
  double var = 0.0;
  for (double r : out.ratios) var += (r - out.mean) * (r - out.mean);
  out.cv = out.ratios.size() > 1 ? std::sqrt(var / (N - 1.0)) / std::abs(out.mean) : 0.0;
  return out;
}

namespace {

struct Summary {
  double mean = 0.0;
  double se = 0.0;
};

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  const double N = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / N;
  if (v.size() > 1) {
    double var = 0.0;
    for (double x : v) var += (x - s.mean) * (x - s.mean);
    s.se = std::sqrt(var / (N - 1.0) / N);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Monte Carlo grid shared by the rate and oversmoothing studies

struct GridCell {
  int n = 0;
  double nu = 0.0;
  ModelSpec spec;
  LabelAssignment labels;
  TrialSetup setup;
  std::string error;  // nonempty when the cell could not be set up or run
  std::vector<std::vector<TrialOutcome>> trials;
};

std::vector<GridCell> run_grid(const StudyPlan& plan, std::uint64_t master, unsigned threads) {
  std::vector<GridCell> cells(plan.n.size());
  for (std::size_t c = 0; c < plan.n.size(); ++c) {
    GridCell& cell = cells[c];
    cell.n = plan.n[c];
    cell.nu = plan.nu.at(cell.n);
    try {
      cell.spec = plan.model.instantiate(cell.n, cell.nu);
      cell.labels = assign_labels(cell.spec);
      cell.setup = prepare_trials(cell.spec, cell.labels, plan.k, plan.classify, plan.observed_fraction);
      cell.trials.assign(plan.trials, {});
    } catch (const Error& e) {
      cell.error = e.what();
    }
  }
  std::vector<std::pair<std::size_t, int>> jobs;
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (cells[c].error.empty())
      for (int t = 0; t < plan.trials; ++t) jobs.emplace_back(c, t);
  std::vector<std::string> job_errors(jobs.size());
  parallel_for(jobs.size(), threads, [&](std::size_t q) {
    const auto [c, t] = jobs[q];
    GridCell& cell = cells[c];
    const std::uint64_t seed = derive_seed(derive_seed(master, Purpose::kInstance, c), Purpose::kTrial, t);
    try {
      cell.trials[t] = run_trial(cell.spec, cell.labels, cell.setup, seed);
    } catch (const Error& e) {
      job_errors[q] = e.what();
    }
  });
  for (std::size_t q = 0; q < jobs.size(); ++q)
    if (!job_errors[q].empty() && cells[jobs[q].first].error.empty())
      cells[jobs[q].first].error = "trial " + std::to_string(jobs[q].second) + ": " + job_errors[q];
  return cells;
}

std::uint64_t trial_seed(std::uint64_t master, std::size_t cell, int t) {
  return derive_seed(derive_seed(master, Purpose::kInstance, cell), Purpose::kTrial, t);
}

struct CellStats {
  Summary rho, scaled, misclass;
  bool ok = false;
};

// Per (cell, depth) statistics, depth index q follows the sorted unique depth list.
std::vector<std::vector<CellStats>> grid_stats(const std::vector<GridCell>& cells, std::size_t depths) {
  std::vector<std::vector<CellStats>> out(cells.size(), std::vector<CellStats>(depths));
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!cells[c].error.empty()) continue;
    for (std::size_t q = 0; q < depths; ++q) {
      std::vector<double> rho, scaled, mis;
      for (const auto& t : cells[c].trials) {
        rho.push_back(t[q].rho);
        scaled.push_back(std::sqrt(cells[c].nu) * t[q].rho);
        if (t[q].misclass >= 0.0) mis.push_back(t[q].misclass);
      }
      out[c][q].rho = summarize(rho);
      out[c][q].scaled = summarize(scaled);
      out[c][q].misclass = summarize(mis);
      out[c][q].ok = true;
    }
  }
  return out;
}

std::vector<int> sorted_depths(std::vector<int> k) {
  std::sort(k.begin(), k.end());
  k.erase(std::unique(k.begin(), k.end()), k.end());
  return k;
}

std::string misclass_cell(const StudyPlan& plan, double v) { return plan.classify ? num(v) : std::string(""); }

void add_trial_rows(CsvTable& table, const StudyPlan& plan, const std::vector<GridCell>& cells,
                    const std::vector<int>& depths, std::uint64_t master) {
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!cells[c].error.empty()) continue;
    for (int t = 0; t < plan.trials; ++t)
      for (std::size_t q = 0; q < depths.size(); ++q) {
        const TrialOutcome& o = cells[c].trials[t][q];
        table.add({plan.name, std::to_string(cells[c].n), num(cells[c].nu), std::to_string(depths[q]),
                   std::to_string(t), std::to_string(trial_seed(master, c, t)), num(o.dev), num(o.rho),
                   num(std::sqrt(cells[c].nu) * o.rho), misclass_cell(plan, o.misclass)});
      }
  }
}

const std::vector<std::string> kTrialColumns = {"study", "n", "nu", "k", "trial", "seed",
                                                "dev", "rho", "sqrt_nu_rho", "misclass"};

struct SlopeInfo {
  bool available = false;
  LineFit fit;
  std::string reason;
};

// Fit of log mean rho against log nu over cells that ran.
SlopeInfo depth_slope(const std::vector<GridCell>& cells, const std::vector<std::vector<CellStats>>& stats,
                      std::size_t q) {
  SlopeInfo s;
  std::vector<double> x, y;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!stats[c][q].ok) continue;
    if (!(stats[c][q].rho.mean > 0.0)) {
      s.reason = "rho is zero at n = " + std::to_string(cells[c].n);
      return s;
    }
    x.push_back(std::log(cells[c].nu));
    y.push_back(std::log(stats[c][q].rho.mean));
  }
  std::set<double> distinct(x.begin(), x.end());
  if (distinct.size() < 2) {
    s.reason = "fewer than two distinct nu values";
    return s;
  }
  s.available = true;
  s.fit = fit_line(x, y);
  return s;
}

}  // namespace

// ---------------------------------------------------------------------------
// rate invariance

StudyResult run_rate_invariance(const StudyPlan& plan, const Provenance& prov, const RunOptions& opt) {
  StudyResult res;
  res.name = plan.name;
  res.kind = study_kind_name(plan.kind);
  const std::uint64_t master = prov.master_seed;
  const std::vector<int> depths = sorted_depths(plan.k);
  const std::vector<GridCell> cells = run_grid(plan, master, opt.threads);
  const auto stats = grid_stats(cells, depths.size());

  CsvTable trials(kTrialColumns);
  add_trial_rows(trials, plan, cells, depths, master);
  CsvTable table({"study", "n", "nu", "k", "trials", "mean_rho", "mean_sqrt_nu_rho", "se_sqrt_nu_rho",
                  "ci95_low", "ci95_high", "mean_misclass", "status"});
  Json cell_errors = Json::array();
  for (std::size_t c = 0; c < cells.size(); ++c) {
    if (!cells[c].error.empty()) {
      cell_errors.push_back({{"n", cells[c].n}, {"error", cells[c].error}});
      for (int k : depths)
        table.add({plan.name, std::to_string(cells[c].n), num(cells[c].nu), std::to_string(k), "0", "", "", "", "", "",
                   "", "error: " + cells[c].error});
      continue;
    }
    for (std::size_t q = 0; q < depths.size(); ++q) {
      const CellStats& s = stats[c][q];
      table.add({plan.name, std::to_string(cells[c].n), num(cells[c].nu), std::to_string(depths[q]),
                 std::to_string(plan.trials), num(s.rho.mean), num(s.scaled.mean), num(s.scaled.se),
                 num(s.scaled.mean - 1.96 * s.scaled.se), num(s.scaled.mean + 1.96 * s.scaled.se),
                 misclass_cell(plan, s.misclass.mean), "ok"});
    }
  }

  Json slopes = Json::array();
  SvgChart chart;
  chart.title = plan.name + ": mean rho against nu";
  chart.x_label = "nu";
  chart.y_label = "mean rho";
  chart.log_x = chart.log_y = true;
  for (std::size_t q = 0; q < depths.size(); ++q) {
    const SlopeInfo s = depth_slope(cells, stats, q);
    const std::string name = "rate/" + plan.name + "/slope[k=" + std::to_string(depths[q]) + "]";
    if (!s.available) {
      res.checks.push_back({name, "skipped", s.reason});
      slopes.push_back({{"k", depths[q]}, {"available", false}, {"reason", s.reason}});
    } else {
      const bool in_range = s.fit.slope >= plan.slope_low && s.fit.slope <= plan.slope_high;
      res.checks.push_back({name, in_range ? "pass" : "fail",
                            "slope " + num(s.fit.slope) + " against [" + num(plan.slope_low) + ", " +
                                num(plan.slope_high) + "]"});
      slopes.push_back({{"k", depths[q]},
                        {"available", true},
                        {"slope", s.fit.slope},
                        {"intercept", s.fit.intercept},
                        {"r2", s.fit.r2},
                        {"in_range", in_range}});
    }
    SvgSeries ser;
    ser.label = "k=" + std::to_string(depths[q]);
    for (std::size_t c = 0; c < cells.size(); ++c)
      if (stats[c][q].ok) {
        ser.x.push_back(cells[c].nu);
        ser.y.push_back(stats[c][q].rho.mean);
      }
    chart.series.push_back(ser);
  }

  // Spread across depths at the largest n that ran.
  Json spread = nullptr;
  std::size_t best = cells.size();
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (cells[c].error.empty() && (best == cells.size() || cells[c].n > cells[best].n)) best = c;
  const std::string ratio_name = "rate/" + plan.name + "/depth_ratio_at_max_n";
  if (best == cells.size()) {
    res.checks.push_back({ratio_name, "skipped", "no cell ran"});
  } else {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t q = 0; q < depths.size(); ++q) {
      lo = std::min(lo, stats[best][q].scaled.mean);
      hi = std::max(hi, stats[best][q].scaled.mean);
    }
    if (!(lo > 0.0)) {
      res.checks.push_back({ratio_name, "skipped", "sqrt(nu) rho is zero at the largest n"});
      spread = {{"n", cells[best].n}, {"min", lo}, {"max", hi}};
    } else {
      const double ratio = hi / lo;
      res.checks.push_back({ratio_name, ratio <= plan.max_ratio ? "pass" : "fail",
                            "max/min " + num(ratio) + " against " + num(plan.max_ratio)});
      spread = {{"n", cells[best].n}, {"min", lo}, {"max", hi}, {"ratio", ratio}};
    }
  }
  res.summary = {{"study", plan.name},          {"kind", res.kind},    {"slopes", slopes},
                 {"depth_spread", spread},      {"cell_errors", cell_errors},
                 {"slope_range", {plan.slope_low, plan.slope_high}}, {"max_ratio", plan.max_ratio}};
  res.files[plan.name + "_trials.csv"] = trials.render(prov);
  res.files[plan.name + "_cells.csv"] = table.render(prov);
  res.files[plan.name + "_slopes.json"] = res.summary.dump(2) + "\n";
  if (opt.svg) res.files[plan.name + ".svg"] = render_svg(chart);
  return res;
}

// ---------------------------------------------------------------------------
// oversmoothing

StudyResult run_oversmoothing_scale(const StudyPlan& plan, const Provenance& prov, const RunOptions& opt) {
  StudyResult res;
  res.name = plan.name;
  res.kind = study_kind_name(plan.kind);
  const std::vector<int> depths = sorted_depths(plan.k);

  // Exact separation factors per (n, k).
  CsvTable exact({"study", "n", "nu", "k", "c_xi_raw", "c_xi", "ratio_to_previous_k"});
  Json per_n = Json::array();
  std::vector<double> last_raw;
  for (int n : plan.n) {
    const double nu = plan.nu.at(n);
    std::vector<double> raw;
    try {
      const ModelSpec spec = plan.model.instantiate(n, nu);
      const LabelAssignment labels = assign_labels(spec);
      for (int k : depths) raw.push_back(separation_factor_raw(spec, labels, k));
    } catch (const Error& e) {
      per_n.push_back({{"n", n}, {"error", e.what()}});
      continue;
    }
    const RatioStats rs = ratio_stats(raw);
    for (std::size_t q = 0; q < depths.size(); ++q)
      exact.add({plan.name, std::to_string(n), num(nu), std::to_string(depths[q]), num(raw[q]),
                 num(std::min(1.0, raw[q])), q == 0 ? std::string("") : num(rs.ratios[q - 1])});
    per_n.push_back({{"n", n}, {"c_xi_raw", raw}, {"ratio_mean", rs.mean}, {"ratio_cv", rs.cv}});
    last_raw = raw;
  }

  Json decay = nullptr;
  const std::string cv_name = "oversmoothing/" + plan.name + "/ratio_cv";
  if (last_raw.size() < 3) {
    res.checks.push_back({cv_name, "skipped", "needs at least three depths"});
  } else {
    std::vector<double> clamped;
    for (double v : last_raw) clamped.push_back(std::min(1.0, v));
    const RatioStats raw_rs = ratio_stats(last_raw);
    const RatioStats clamped_rs = ratio_stats(clamped);
    const bool geometric = raw_rs.cv < plan.ratio_cv_max;
    std::string shape;
    if (std::abs(clamped_rs.mean - 1.0) < 1e-12 && clamped_rs.cv < 1e-12) shape = "flat";
    else if (clamped_rs.mean < 1.0) shape = "decaying";
    else shape = "growing";
    res.checks.push_back({cv_name, geometric ? "pass" : "fail",
                          "ratio mean " + num(raw_rs.mean) + ", cv " + num(raw_rs.cv) + " against " +
                              num(plan.ratio_cv_max)});
    decay = {{"raw_ratio_mean", raw_rs.mean},
             {"raw_ratio_cv", raw_rs.cv},
             {"clamped_ratio_mean", clamped_rs.mean},
             {"clamped_ratio_cv", clamped_rs.cv},
             {"clamped_shape", shape}};
  }

  // Monte Carlo part on the same grid.
  const std::vector<GridCell> cells = run_grid(plan, prov.master_seed, opt.threads);
  const auto stats = grid_stats(cells, depths.size());
  CsvTable mc({"study", "n", "nu", "k", "trials", "c_xi", "mean_sqrt_nu_rho", "se_sqrt_nu_rho", "mean_misclass",
               "status"});
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (std::size_t q = 0; q < depths.size(); ++q) {
      if (!cells[c].error.empty()) {
        mc.add({plan.name, std::to_string(cells[c].n), num(cells[c].nu), std::to_string(depths[q]), "0", "", "", "",
                "", "error: " + cells[c].error});
        continue;
      }
      const double cxi = std::min(1.0, separation_factor_raw(cells[c].spec, cells[c].labels, depths[q]));
      const CellStats& s = stats[c][q];
      mc.add({plan.name, std::to_string(cells[c].n), num(cells[c].nu), std::to_string(depths[q]),
              std::to_string(plan.trials), num(cxi), num(s.scaled.mean), num(s.scaled.se),
              misclass_cell(plan, s.misclass.mean), "ok"});
    }
  }
  Json exponents = Json::array();
  std::vector<double> slopes;
  for (std::size_t q = 0; q < depths.size(); ++q) {
    const SlopeInfo s = depth_slope(cells, stats, q);
    if (s.available) {
      slopes.push_back(s.fit.slope);
      exponents.push_back({{"k", depths[q]}, {"slope", s.fit.slope}});
    } else {
      exponents.push_back({{"k", depths[q]}, {"slope", nullptr}, {"reason", s.reason}});
    }
  }
  Json mean_exponent = nullptr;
  if (!slopes.empty()) mean_exponent = std::accumulate(slopes.begin(), slopes.end(), 0.0) / slopes.size();

  SvgChart chart;
  chart.title = plan.name + ": separation factor against depth";
  chart.x_label = "k";
  chart.y_label = "c_xi (raw)";
  chart.log_y = true;
  SvgSeries ser;
  ser.label = "largest n";
  for (std::size_t q = 0; q < last_raw.size(); ++q) {
    ser.x.push_back(depths[q]);
    ser.y.push_back(last_raw[q]);
  }
  chart.series.push_back(ser);

  res.summary = {{"study", plan.name},     {"kind", res.kind},       {"separation", per_n},
                 {"decay", decay},         {"rate_exponents", exponents}, {"mean_rate_exponent", mean_exponent}};
  res.files[plan.name + "_cxi.csv"] = exact.render(prov);
  res.files[plan.name + "_cells.csv"] = mc.render(prov);
  res.files[plan.name + "_summary.json"] = res.summary.dump(2) + "\n";
  if (opt.svg) res.files[plan.name + ".svg"] = render_svg(chart);
  return res;
}

// ---------------------------------------------------------------------------
// parity boundary

namespace {

struct ParityPoint {
  double nu = 0.0;
  double dyck = 0.0;     // closed tree walks at the root
  double diag = 0.0;     // full E[A^k]_ii
  double offdiag = 0.0;  // (sum_{j != i} E[A^k]_ij^2)^(1/2)
  double dyck_bound = 0.0;
  double path_bound = 0.0;
};

ParityPoint parity_point(const ModelTemplate& model, int n, int k, double nu) {
  const ModelSpec spec = model.instantiate(n, nu);
  const LabelAssignment labels = assign_labels(spec);
  const ClassPower cp = class_power(spec, labels, k);
  ParityPoint p;
  p.nu = nu;
  p.dyck = cp.diag_tree[0];
  p.diag = cp.diag[0];
  p.offdiag = std::sqrt(cp.offdiag_sq_norms(labels.counts)[0]);
  p.dyck_bound = k % 2 == 0 ? 2.0 * std::pow(nu, k / 2.0) : 0.0;
  p.path_bound = 2.0 * std::sqrt(spec.p_max()) * std::pow(nu, k - 0.5);
  return p;
}

}  // namespace

StudyResult run_parity_boundary(const StudyPlan& plan, const Provenance& prov, const RunOptions& opt) {
  StudyResult res;
  res.name = plan.name;
  res.kind = study_kind_name(plan.kind);
  CsvTable table({"study", "n", "k", "nu", "nu_over_scale", "dyck_term", "diagonal", "offdiagonal_norm",
                  "dyck_bound", "path_bound", "dominant"});
  Json boundaries = Json::array();
  SvgChart chart;
  chart.title = plan.name + ": Dyck and path terms";
  chart.x_label = "nu / n^(1/k)";
  chart.y_label = "term";
  chart.log_x = chart.log_y = true;
  chart.x_markers = {1.0};

  const std::vector<int> depths = sorted_depths(plan.k);
  for (int n : plan.n) {
    for (int k : depths) {
      const std::string where = "[n=" + std::to_string(n) + ",k=" + std::to_string(k) + "]";
      const double scale = std::pow(static_cast<double>(n), 1.0 / k);
      std::vector<ParityPoint> pts;
      try {
        for (int q = 0; q < plan.nu_points; ++q) {
          const double f = -1.0 + 2.0 * q / (plan.nu_points - 1);
          const double nu = scale * std::pow(plan.nu_span, f);
          if (nu > n) continue;
          pts.push_back(parity_point(plan.model, n, k, nu));
        }
      } catch (const Error& e) {
        const std::string status = e.kind() == ErrorKind::kGuard ? "skipped" : "fail";
        res.checks.push_back({"parity/" + plan.name + "/sweep" + where, status, e.what()});
        continue;
      }
      for (const auto& p : pts)
        table.add({plan.name, std::to_string(n), std::to_string(k), num(p.nu), num(p.nu / scale), num(p.dyck),
                   num(p.diag), num(p.offdiag), num(p.dyck_bound), num(p.path_bound),
                   p.dyck > p.offdiag ? "dyck" : "path"});
      SvgSeries dy, of;
      dy.label = "dyck n=" + std::to_string(n) + " k=" + std::to_string(k);
      of.label = "path n=" + std::to_string(n) + " k=" + std::to_string(k);
      for (const auto& p : pts) {
        dy.x.push_back(p.nu / scale);
        dy.y.push_back(p.dyck);
        of.x.push_back(p.nu / scale);
        of.y.push_back(p.offdiag);
      }
      if (k % 2 == 0) chart.series.push_back(dy);
      chart.series.push_back(of);

      if (k % 2 == 1) {
        const bool zero = std::all_of(pts.begin(), pts.end(), [](const ParityPoint& p) { return p.dyck == 0.0; });
        res.checks.push_back({"parity/" + plan.name + "/dyck_zero" + where, zero ? "pass" : "fail",
                              zero ? "Dyck term is exactly zero on the whole sweep" : "nonzero Dyck term for odd k"});
        boundaries.push_back({{"n", n}, {"k", k}, {"crossover", nullptr}, {"dyck_zero", zero}});
        continue;
      }
      // Sign change of log(dyck / offdiag), refined by bisection in log nu.
      std::size_t cross = pts.size();
      for (std::size_t q = 1; q < pts.size(); ++q)
        if (pts[q - 1].dyck > pts[q - 1].offdiag && pts[q].dyck <= pts[q].offdiag) {
          cross = q;
          break;
        }
      const std::string name = "parity/" + plan.name + "/crossover" + where;
      if (cross == pts.size()) {
        res.checks.push_back({name, "fail", "no crossover inside the sweep"});
        boundaries.push_back({{"n", n}, {"k", k}, {"crossover", nullptr}});
        continue;
      }
      double lo = std::log(pts[cross - 1].nu), hi = std::log(pts[cross].nu);
      for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        const ParityPoint p = parity_point(plan.model, n, k, std::exp(mid));
        (p.dyck > p.offdiag ? lo : hi) = mid;
      }
      const double nu_star = std::exp(0.5 * (lo + hi));
      bool single = true;
      for (const auto& p : pts)
        if ((p.nu < nu_star) != (p.dyck > p.offdiag) && std::abs(std::log(p.nu / nu_star)) > 1e-9) single = false;
      const double ratio = nu_star / scale;
      const bool within = ratio <= plan.crossover_factor && ratio >= 1.0 / plan.crossover_factor;
      res.checks.push_back({name, within && single ? "pass" : "fail",
                            "crossover nu " + num(nu_star) + " = " + num(ratio) + " n^(1/k)" +
                                (single ? "" : ", dominance switches more than once")});
      boundaries.push_back({{"n", n},
                            {"k", k},
                            {"crossover", nu_star},
                            {"crossover_over_scale", ratio},
                            {"single_switch", single},
                            {"within_factor", within}});
    }
  }
  res.summary = {{"study", plan.name},
                 {"kind", res.kind},
                 {"boundaries", boundaries},
                 {"crossover_factor", plan.crossover_factor}};
  res.files[plan.name + ".csv"] = table.render(prov);
  res.files[plan.name + "_boundary.json"] = res.summary.dump(2) + "\n";
  if (opt.svg) res.files[plan.name + ".svg"] = render_svg(chart);
  return res;
}

StudyResult run_study(const StudyPlan& plan, const Provenance& prov, const RunOptions& opt) {
  switch (plan.kind) {
    case StudyKind::kRateInvariance: return run_rate_invariance(plan, prov, opt);
    case StudyKind::kOversmoothing: return run_oversmoothing_scale(plan, prov, opt);
    case StudyKind::kParityBoundary: return run_parity_boundary(plan, prov, opt);
  }
  fail(ErrorKind::kInternal, "unknown study kind");
}

// ---------------------------------------------------------------------------
// whole plans

Json ExperimentReport::to_json() const {
  Json studies_json = Json::array();
  std::map<std::string, int> counts = {{"pass", 0}, {"fail", 0}, {"vacuous", 0}, {"skipped", 0}, {"deviation", 0}};
  for (const auto& s : studies) {
    Json checks = Json::array();
    for (const auto& c : s.checks) {
      checks.push_back({{"check", c.name}, {"status", c.status}, {"detail", c.detail}});
      counts[c.status]++;
    }
    Json files = Json::array();
    for (const auto& [name, body] : s.files) files.push_back(name);
    studies_json.push_back({{"name", s.name}, {"kind", s.kind}, {"checks", checks}, {"files", files}});
  }
  return Json{{"studies", studies_json}, {"summary", counts}};
}

int ExperimentReport::hard_failures() const {
  int n = 0;
  for (const auto& s : studies)
    for (const auto& c : s.checks) n += is_hard_failure(c);
  return n;
}

ExperimentReport run_experiment(const ExperimentPlan& plan, const RunOptions& opt) {
  Provenance prov{build_id(), plan.hash, opt.seed.value_or(plan.seed)};
  RunOptions effective = opt;
  effective.svg = opt.svg && plan.svg;
  ExperimentReport report;
  for (const auto& study : plan.studies) report.studies.push_back(run_study(study, prov, effective));
  return report;
}

std::map<std::string, std::string> collect_files(const ExperimentReport& report) {
  std::map<std::string, std::string> files;
  for (const auto& s : report.studies)
    for (const auto& [name, body] : s.files) files[name] = body;
  files["report.json"] = report.to_json().dump(2) + "\n";
  return files;
}

void write_report_files(const std::string& dir, const std::map<std::string, std::string>& files) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorKind::kIo, "cannot create output directory " + dir + ": " + ec.message());
  for (const auto& [name, body] : files) write_text_file((std::filesystem::path(dir) / name).string(), body);
}

}  // namespace csbm
