#pragma once

#include "csbm/common.hpp"
#include "csbm/config.hpp"
#include "csbm/model.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace csbm {

// ---- provenance-stamped tables ----
struct Provenance {
  std::string build_id;
  std::string plan_hash;  // 16 hex digits
  std::uint64_t master_seed = 0;
};

std::string build_id();

// Every rendered row starts with build_id, plan_hash, master_seed.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> columns);
  void add(std::vector<std::string> cells);
  std::size_t rows() const { return rows_.size(); }
  std::string render(const Provenance& prov) const;

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
};

// ---- plans ----
struct NuRule {
  enum class Kind { kPower, kFixed } kind = Kind::kPower;
  double c = 1.0;
  double gamma = 0.7;
  double value = 0.0;
  double at(int n) const { return kind == Kind::kFixed ? value : c * std::pow(static_cast<double>(n), gamma); }
};

// B is a shape: it is rescaled so that its largest entry equals nu / n.
struct ModelTemplate {
  Eigen::MatrixXd B_shape;
  std::vector<double> pi;
  Eigen::MatrixXd mu;  // d x L
  double sigma = 1.0;
  NoiseKind noise = NoiseKind::kGaussian;

  ModelSpec instantiate(int n, double nu) const;
};

enum class StudyKind { kRateInvariance, kOversmoothing, kParityBoundary };
std::string study_kind_name(StudyKind kind);

struct StudyPlan {
  std::string name;
  StudyKind kind = StudyKind::kRateInvariance;
  std::vector<int> n;
  std::vector<int> k;
  NuRule nu;
  ModelTemplate model;
  int trials = 1;
  bool classify = false;
  double observed_fraction = 0.1;
  // rate invariance
  double slope_low = -0.6, slope_high = -0.4;
  double max_ratio = 10.0;
  // oversmoothing
  double ratio_cv_max = 0.10;
  // parity boundary: nu sweeps a geometric grid over [n^(1/k) / span, n^(1/k) span]
  int nu_points = 41;
  double nu_span = 100.0;
  double crossover_factor = 3.0;
};

struct ExperimentPlan {
  std::uint64_t seed = 0;
  std::string out_dir;
  bool svg = true;
  std::vector<StudyPlan> studies;
  std::string hash;  // over the canonical JSON form, so TOML and JSON spellings agree
};

ExperimentPlan plan_from_json(const Json& doc);
ExperimentPlan load_plan(const std::string& path);

// ---- results ----
struct CheckOutcome {
  std::string name;
  std::string status;  // pass | fail | vacuous | skipped | deviation
  std::string detail;
};

bool is_hard_failure(const CheckOutcome& c);

struct StudyResult {
  std::string name;
  std::string kind;
  Json summary;
  std::vector<CheckOutcome> checks;
  std::map<std::string, std::string> files;  // relative name -> contents
};

struct RunOptions {
  unsigned threads = 1;
  std::optional<std::uint64_t> seed;  // overrides the plan seed
  bool svg = true;
};

StudyResult run_rate_invariance(const StudyPlan& plan, const Provenance& prov, const RunOptions& opt);
StudyResult run_oversmoothing_scale(const StudyPlan& plan, const Provenance& prov, const RunOptions& opt);
StudyResult run_parity_boundary(const StudyPlan& plan, const Provenance& prov, const RunOptions& opt);
StudyResult run_study(const StudyPlan& plan, const Provenance& prov, const RunOptions& opt);

struct ExperimentReport {
  std::vector<StudyResult> studies;
  Json to_json() const;
  int hard_failures() const;
};

ExperimentReport run_experiment(const ExperimentPlan& plan, const RunOptions& opt);
// Writes every file of every study plus report.json under dir (created if missing).
void write_report_files(const std::string& dir, const std::map<std::string, std::string>& files);
std::map<std::string, std::string> collect_files(const ExperimentReport& report);

// ---- fitting helpers ----
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

// Geometric-decay ratios c(k+1)/c(k) and their coefficient of variation.
struct RatioStats {
  std::vector<double> ratios;
  double mean = 0.0;
  double cv = 0.0;
};
RatioStats ratio_stats(const std::vector<double>& values);

}  // namespace csbm
