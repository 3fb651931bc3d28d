#pragma once

#include "csbm/common.hpp"
#include "csbm/config.hpp"
#include "csbm/model.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace csbm {

// Numerical constants left unspecified by the theory; all are knobs.
struct UniversalConstants {
  double C1 = 2.0;  // E|Z|^r <= (C1 sigma sqrt(r))^r for the feature noise
  double C = 3.0;
  double c = 1.0;
  double c_nu_prime = 1.0;
  double epsilon = 0.5;
};

struct ConstantSet {
  double kappa0 = 0.0;
  double kappa1 = 0.0;
  double kappa2 = 0.0;
  double kappa3 = 0.0;        // max{8 C1 sigma, |mu|_max}
  double kappa3_derived = 0.0;  // max{4 C1 sigma, |mu|_max}
  double C1 = 0.0, Ck = 0.0, C = 0.0, c = 0.0, c_nu_prime = 0.0;
  double mu_max = 0.0;
};

ConstantSet compute_constants(const ModelSpec& spec, const AssumptionReport& assumptions, int k,
                              const UniversalConstants& u = {});
Json constants_to_json(const ConstantSet& c);

struct RnResult {
  int r_n = 0;                  // largest even r with 3 (kappa0 r k e^k)^r <= nu^(1-eps), or 0
  double growth_estimate = 0.0;  // b log nu / (log(abc) + log log nu)
  int growth_estimate_even = 0;  // its even floor
};

RnResult compute_rn(double kappa0, int k, double epsilon, double nu);

struct TailBound {
  double threshold = 0.0;   // K x^eta
  double value = 0.0;       // two-regime bound
  double simplified = 0.0;  // exp(-min{x/(2Ce), eta r0})
  bool first_regime = true;
};

// Tail of |Delta| when its even moments up to r0 satisfy E|Delta|^r <= (K (C eta r)^eta)^r.
// r0 may be infinity. Requires x >= 4 eta C e.
TailBound subweibull_tail(double K, double C, double eta, double r0, double x);

double pz(double eta, double m2, double m4);

struct Interval {
  double low = 0.0;
  double high = 1.0;
};

// One-sided Clopper-Pearson limits at the given confidence, for each side separately.
Interval clopper_pearson(std::uint64_t successes, std::uint64_t trials, double confidence = 0.99);

// ---- preflight ----
struct GrowthConditions {
  AssumptionItem assumptions;  // A1-A5 together
  AssumptionItem signal;       // nu >= max{c'_nu log n, 32 L C_mu^2 C_k^2 / (c_pi c_xi^2)}
  AssumptionItem n_growth;     // min{n / max(k, 4 C_mu / c_xi), nu^delta / C_B} >= 4 C_mu L / (c_pi c_xi)
  AssumptionItem nu_growth;    // min{n / (2k-1)^2, nu^eps} >= kappa1 / (2 |mu|_max^2)
  AssumptionItem walk_growth;  // nu >= k e^(2(k-1))
  RnResult rn;
};

GrowthConditions evaluate_growth(const ModelSpec& spec, const AssumptionReport& assumptions,
                                 const ConstantSet& constants, int k, const UniversalConstants& u = {});

// ---- theorem checks ----
enum class Verdict { kPass, kFail, kVacuous };
std::string verdict_name(Verdict v);

struct CheckEntry {
  std::string check;
  double lhs = 0.0;
  double rhs = 0.0;  // the claim is lhs <= rhs
  double margin = 0.0;
  bool holds = false;     // the inequality itself, evaluated regardless of preconditions
  bool asserted = false;  // all preconditions hold
  std::vector<std::string> failed_preconditions;
  Verdict verdict = Verdict::kVacuous;
  // Probability claims carry the empirical count and its interval.
  std::uint64_t successes = 0, trials = 0;
  Interval interval;
};

struct BoundsReport {
  std::string scenario;
  int k = 0;
  ConstantSet constants;
  GrowthConditions growth;
  std::vector<CheckEntry> entries;

  int failures() const;
  int passes() const;
  int vacuous() const;
};

Json bounds_to_json(const BoundsReport& report);
// Header: scenario,check,k,preflight,lhs,rhs,margin,verdict
std::string bounds_csv_header();
std::string bounds_csv_rows(const BoundsReport& report);

struct BoundsSetup {
  std::string scenario = "scenario";
  AssumptionConstants assumption_constants;
  UniversalConstants universal;
};

// Signal brackets for every class pair, exact.
BoundsReport check_signal_theorem(const ModelSpec& spec, const LabelAssignment& labels, int k,
                                  const BoundsSetup& setup = {});

struct NoiseSamples {
  int k = 0;
  std::vector<double> dev;
  std::vector<double> rho;
};

NoiseSamples simulate_noise(const ModelSpec& spec, const LabelAssignment& labels, int k, int trials,
                            std::uint64_t seed, unsigned threads = 1);

struct NoiseCheckOptions {
  std::vector<double> u_multipliers = {1.0, 1.5, 2.0, 3.0, 5.0, 8.0};  // u = multiplier * 8 d e
  std::vector<double> etas = {0.25, 0.5, 0.75};
  std::vector<double> alphas = {1.4142135623730951, 2.0, 3.0};
  double confidence = 0.99;
  bool exact_second_moment = true;  // shape-sum E[Dev^2], needs 2k <= 10
};

// Upper tail, lower probability, second-moment and fourth-moment ratio, Paley-Zygmund.
BoundsReport check_noise_theorems(const ModelSpec& spec, const LabelAssignment& labels, const NoiseSamples& samples,
                                  const BoundsSetup& setup = {}, const NoiseCheckOptions& options = {});
// Upper and lower events for sqrt(nu) rho.
BoundsReport check_main_theorem(const ModelSpec& spec, const LabelAssignment& labels, const NoiseSamples& samples,
                                const BoundsSetup& setup = {}, const NoiseCheckOptions& options = {});

}  // namespace csbm
