#include "csbm/config.hpp"
#include "csbm/experiment.hpp"
#include "csbm/svg.hpp"

#include <doctest.h>

#include <cmath>

using namespace csbm;

namespace {

const char* kRateToml = R"(
seed = 11
[output]
svg = true

[[study]]
name = "rate"
kind = "rate_invariance"
n = [300, 600, 1200]
k = [1, 2]
nu = { rule = "power", c = 1.0, gamma = 0.7 }
trials = 6
classify = true
model = { B = [[1.0, 0.2], [0.2, 1.0]], mu = [[1.0], [-1.0]], sigma = 1.0 }
)";

const char* kRateJson = R"({
 "seed": 11,
 "output": {"svg": true},
 "study": [{
  "name": "rate", "kind": "rate_invariance", "n": [300, 600, 1200], "k": [1, 2],
  "nu": {"rule": "power", "c": 1.0, "gamma": 0.7}, "trials": 6, "classify": true,
  "model": {"B": [[1.0, 0.2], [0.2, 1.0]], "mu": [[1.0], [-1.0]], "sigma": 1.0}
 }]
})";

ErrorKind plan_error(const std::string& text) {
  try {
    plan_from_json(parse_config_text(text));
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::kInternal;
}

StudyPlan parity_plan(int n, std::vector<int> k) {
  StudyPlan s;
  s.name = "parity";
  s.kind = StudyKind::kParityBoundary;
  s.n = {n};
  s.k = std::move(k);
  s.model.B_shape.resize(2, 2);
  s.model.B_shape << 1.0, 0.2, 0.2, 1.0;
  s.model.pi = {0.5, 0.5};
  s.model.mu.resize(1, 2);
  s.model.mu << 1.0, -1.0;
  return s;
}

}  // namespace

TEST_CASE("TOML and JSON plans agree, hash included") {
  const ExperimentPlan a = plan_from_json(parse_config_text(kRateToml, ConfigFormat::kToml));
  const ExperimentPlan b = plan_from_json(parse_config_text(kRateJson, ConfigFormat::kJson));
  CHECK(a.hash == b.hash);
  CHECK(a.hash.size() == 16);
  REQUIRE(a.studies.size() == 1);
  CHECK(a.studies[0].n == std::vector<int>{300, 600, 1200});
  CHECK(a.studies[0].nu.at(1000) == doctest::Approx(std::pow(1000.0, 0.7)));
  CHECK(a.seed == 11);
}

TEST_CASE("plan validation rejects malformed studies") {
  CHECK(plan_error(R"({"seed": 1, "sede": 2})") == ErrorKind::kConfig);
  CHECK(plan_error(R"({"study": [{"name": "a", "kind": "nope", "n": [10], "k": [1],
                      "model": {"B": [[1]], "mu": [[1]]}}]})") == ErrorKind::kConfig);
  // Parity sweeps nu itself.
  CHECK(plan_error(R"({"study": [{"name": "a", "kind": "parity_boundary", "n": [10], "k": [2],
                      "nu": {"rule": "fixed", "value": 2}, "model": {"B": [[1]], "mu": [[1]]}}]})") ==
        ErrorKind::kConfig);
  CHECK(plan_error(R"({"study": [{"name": "bad name", "kind": "parity_boundary", "n": [10], "k": [2],
                      "model": {"B": [[1]], "mu": [[1]]}}]})") == ErrorKind::kConfig);
  CHECK(plan_error(R"({"study": [{"name": "a", "kind": "parity_boundary", "n": [10], "k": [2],
                      "model": {"B": [[1, 0.5], [0.2, 1]], "mu": [[1], [2]]}}]})") == ErrorKind::kConfig);
  const std::string one = R"({"name": "a", "kind": "parity_boundary", "n": [10], "k": [2],
                              "model": {"B": [[1]], "mu": [[1]]}})";
  CHECK(plan_error("{\"study\": [" + one + "," + one + "]}") == ErrorKind::kConfig);
}

TEST_CASE("an empty plan runs nothing and reports nothing") {
  const ExperimentPlan plan = plan_from_json(parse_config_text("seed = 3", ConfigFormat::kToml));
  const ExperimentReport rep = run_experiment(plan, {});
  CHECK(rep.studies.empty());
  CHECK(rep.hard_failures() == 0);
  const auto files = collect_files(rep);
  CHECK(files.size() == 1);
  CHECK(files.count("report.json") == 1);
}

TEST_CASE("study outputs are byte-identical across thread counts") {
  const ExperimentPlan plan = plan_from_json(parse_config_text(kRateToml, ConfigFormat::kToml));
  RunOptions one, four;
  one.threads = 1;
  four.threads = 4;
  const auto a = collect_files(run_experiment(plan, one));
  const auto b = collect_files(run_experiment(plan, four));
  CHECK(a == b);
  CHECK(a.count("rate_trials.csv") == 1);
  CHECK(a.count("rate.svg") == 1);
  // Provenance columns lead every row.
  const std::string& csv = a.at("rate_cells.csv");
  CHECK(csv.rfind("build_id,plan_hash,master_seed,", 0) == 0);
  CHECK(csv.find("," + plan.hash + ",11,") != std::string::npos);
  // A different seed changes the trials.
  RunOptions other;
  other.seed = 12;
  CHECK(collect_files(run_experiment(plan, other)).at("rate_trials.csv") != a.at("rate_trials.csv"));
}

TEST_CASE("rate study fits slopes near -1/2") {
  StudyPlan s;
  s.name = "rate";
  s.kind = StudyKind::kRateInvariance;
  s.n = {500, 1000, 2000, 4000};
  s.k = {1, 2};
  s.trials = 30;
  s.model.B_shape.resize(2, 2);
  s.model.B_shape << 1.0, 0.2, 0.2, 1.0;
  s.model.pi = {0.5, 0.5};
  s.model.mu.resize(1, 2);
  s.model.mu << 1.0, -1.0;
  const StudyResult r = run_study(s, {"test", "0", 5}, {});
  int slopes = 0;
  for (const auto& c : r.checks) {
    if (c.name.find("/slope[") != std::string::npos) {
      ++slopes;
      CHECK_MESSAGE(c.status == "pass", c.name << ": " << c.detail);
    }
  }
  CHECK(slopes == 2);
}

TEST_CASE("parity boundary sits near sqrt(n) for even depth") {
  const StudyResult r = run_study(parity_plan(10000, {2, 3, 4}), {"test", "0", 1}, {});
  int crossovers = 0, zeros = 0;
  for (const auto& c : r.checks) {
    CHECK_MESSAGE(c.status == "pass", c.name << ": " << c.detail);
    if (c.name.find("/crossover[") != std::string::npos) ++crossovers;
    if (c.name.find("/dyck_zero[") != std::string::npos) ++zeros;
  }
  CHECK(crossovers == 2);
  CHECK(zeros == 1);
  const Json& boundaries = r.summary.at("boundaries");
  bool saw_k2 = false;
  for (const auto& b : boundaries) {
    if (b.at("k") == 2 && b.at("crossover").is_number()) {
      saw_k2 = true;
      const double ratio = b.at("crossover").get<double>() / 100.0;
      CHECK(ratio > 1.0 / 3.0);
      CHECK(ratio < 3.0);
    }
  }
  CHECK(saw_k2);
}

TEST_CASE("oversmoothing: decaying separation against a clamped flat one") {
  StudyPlan s;
  s.name = "decay";
  s.kind = StudyKind::kOversmoothing;
  s.n = {400, 800, 1600};
  s.k = {1, 2, 3, 4};
  s.trials = 10;
  s.nu = NuRule{NuRule::Kind::kPower, 1.0, 0.7, 0.0};
  s.model.B_shape = Eigen::MatrixXd::Identity(2, 2);
  s.model.pi = {0.5, 0.5};
  s.model.mu.resize(1, 2);
  s.model.mu << 1.0, -1.0;
  const StudyResult dec = run_study(s, {"test", "0", 2}, {});
  REQUIRE(dec.checks.size() == 1);
  CHECK(dec.checks[0].status == "pass");
  CHECK(dec.summary.at("decay").at("clamped_shape") == "decaying");
  CHECK(dec.summary.at("decay").at("raw_ratio_mean").get<double>() == doctest::Approx(0.5));

  StudyPlan flat = s;
  flat.name = "flat";
  flat.model.mu << 40.0, -40.0;
  const StudyResult fl = run_study(flat, {"test", "0", 2}, {});
  CHECK(fl.summary.at("decay").at("clamped_shape") == "flat");
  // Clamping does not touch the Monte Carlo rate: both fall like n^(-1/2) up to noise.
  const double a = dec.summary.at("mean_rate_exponent").get<double>();
  const double b = fl.summary.at("mean_rate_exponent").get<double>();
  CHECK(std::abs(a - b) < 0.15);
}

TEST_CASE("svg rendering is deterministic and well formed") {
  SvgChart c;
  c.title = "a < b";
  c.log_x = true;
  c.series.push_back({"s", {1, 10, 100}, {3, 2, 1}});
  c.x_markers = {5};
  const std::string a = render_svg(c), b = render_svg(c);
  CHECK(a == b);
  CHECK(a.rfind("<svg", 0) == 0);
  CHECK(a.find("a &lt; b") != std::string::npos);
  CHECK(a.find("</svg>") != std::string::npos);
}

TEST_CASE("line fit and ratio statistics") {
  const LineFit f = fit_line({0, 1, 2, 3}, {1, 3, 5, 7});
  CHECK(f.slope == doctest::Approx(2.0));
  CHECK(f.intercept == doctest::Approx(1.0));
  CHECK(f.r2 == doctest::Approx(1.0));
  const RatioStats r = ratio_stats({8, 4, 2, 1});
  CHECK(r.mean == doctest::Approx(0.5));
  CHECK(r.cv == doctest::Approx(0.0));
}
