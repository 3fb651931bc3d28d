#include "csbm/bounds.hpp"

#include "csbm/features.hpp"
#include "csbm/format.hpp"
#include "csbm/linalg.hpp"
#include "csbm/parallel.hpp"
#include "csbm/rng.hpp"
#include "csbm/shapes.hpp"

#include <boost/math/distributions/beta.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace csbm {

namespace {

constexpr double kE = 2.718281828459045;

AssumptionItem item(bool ok, double margin, std::string detail) {
  AssumptionItem it;
  it.satisfied = ok;
  it.margin = margin;
  it.detail = std::move(detail);
  return it;
}

// Names of the preconditions that fail among the requested ones.
struct Preflight {
  const GrowthConditions& g;
  std::vector<std::string> failed(std::initializer_list<const char*> names) const {
    std::vector<std::string> out;
    for (const char* name : names) {
      const std::string s = name;
      bool ok = true;
      if (s == "A1-A5") ok = g.assumptions.satisfied;
      else if (s == "signal") ok = g.signal.satisfied;
      else if (s == "n:growth") ok = g.n_growth.satisfied;
      else if (s == "nu:growth") ok = g.nu_growth.satisfied;
      else if (s == "nu>=k*e^(2(k-1))") ok = g.walk_growth.satisfied;
      else if (s == "r_n>=2") ok = g.rn.r_n >= 2;
      else if (s == "r_n>=4") ok = g.rn.r_n >= 4;
      else fail(ErrorKind::kInternal, "unknown precondition " + s);
      if (!ok) out.push_back(s);
    }
    return out;
  }
};

void finish(CheckEntry& e, std::vector<std::string> failed) {
  e.failed_preconditions = std::move(failed);
  e.asserted = e.failed_preconditions.empty();
  e.margin = e.rhs - e.lhs;
  e.verdict = !e.asserted ? Verdict::kVacuous : (e.holds ? Verdict::kPass : Verdict::kFail);
}

CheckEntry inequality(std::string name, double lhs, double rhs, std::vector<std::string> failed,
                      double slack = 1e-12) {
  CheckEntry e;
  e.check = std::move(name);
  e.lhs = lhs;
  e.rhs = rhs;
  e.holds = evaluate_le(lhs, rhs, slack).satisfied;
  finish(e, std::move(failed));
  return e;
}

// Claim: P(event) <= bound. Fails only when the lower confidence limit exceeds the bound.
CheckEntry prob_at_most(std::string name, std::uint64_t hits, std::uint64_t trials, double bound, double conf,
                        std::vector<std::string> failed) {
  CheckEntry e;
  e.check = std::move(name);
  e.successes = hits;
  e.trials = trials;
  e.interval = clopper_pearson(hits, trials, conf);
  e.lhs = static_cast<double>(hits) / static_cast<double>(trials);
  e.rhs = bound;
  e.holds = e.interval.low <= bound;
  finish(e, std::move(failed));
  return e;
}

// Claim: P(event) >= bound. Fails only when the upper confidence limit is below the bound.
CheckEntry prob_at_least(std::string name, std::uint64_t hits, std::uint64_t trials, double bound, double conf,
                         std::vector<std::string> failed) {
  CheckEntry e;
  e.check = std::move(name);
  e.successes = hits;
  e.trials = trials;
  e.interval = clopper_pearson(hits, trials, conf);
  e.lhs = bound;
  e.rhs = static_cast<double>(hits) / static_cast<double>(trials);
  e.holds = e.interval.high >= bound;
  finish(e, std::move(failed));
  return e;
}

std::string tag(const std::string& base, const std::string& key, double value) {
  return base + "[" + key + "=" + format_number(value) + "]";
}

}  // namespace

ConstantSet compute_constants(const ModelSpec& spec, const AssumptionReport& a, int k, const UniversalConstants& u) {
  ConstantSet c;
  c.C1 = u.C1;
  c.C = u.C;
  c.c = u.c;
  c.c_nu_prime = u.c_nu_prime;
  c.mu_max = spec.mu.cwiseAbs().maxCoeff();
  c.kappa0 = 0.0;
  for (int m = 0; m < spec.d; ++m) {
    const double row_inf = spec.mu.row(m).cwiseAbs().maxCoeff();
    const double ratio = row_inf > 0.0 ? u.C1 * spec.sigma / row_inf : std::numeric_limits<double>::infinity();
    c.kappa0 = std::max(c.kappa0, 4.0 * std::max(ratio, 1.0));
  }
  const auto& ac = a.constants;
  c.kappa1 = ac.c_B * ac.c_nu * ac.c_pi * a.c_xi * a.c_xi / (48.0 * spec.L);
  c.kappa2 = 8.0 * (32.0 * std::pow(c.mu_max, 4) + std::pow(8.0 * u.C1 * spec.sigma, 4));
  c.kappa3 = std::max(8.0 * u.C1 * spec.sigma, c.mu_max);
  c.kappa3_derived = std::max(4.0 * u.C1 * spec.sigma, c.mu_max);
  c.Ck = concentration_constant(k, ConcentrationConstants{u.C, u.c, u.c_nu_prime});
  return c;
}

Json constants_to_json(const ConstantSet& c) {
  return Json{{"kappa0", c.kappa0}, {"kappa1", c.kappa1},       {"kappa2", c.kappa2},
              {"kappa3", c.kappa3}, {"kappa3_derived", c.kappa3_derived}, {"C1", c.C1},
              {"Ck", c.Ck},         {"C", c.C},                 {"c", c.c},
              {"c_nu_prime", c.c_nu_prime}, {"mu_max", c.mu_max}};
}

RnResult compute_rn(double kappa0, int k, double epsilon, double nu) {
  require(epsilon > 0.0 && epsilon < 1.0, ErrorKind::kInvalidArgument, "epsilon must lie in (0, 1)");
  require(nu > 0.0, ErrorKind::kInvalidArgument, "nu must be positive");
  require(kappa0 > 0.0 && k >= 1, ErrorKind::kInvalidArgument, "invalid kappa0 or k");
  RnResult out;
  const double log_rhs = (1.0 - epsilon) * std::log(nu);
  const double base = kappa0 * k * std::exp(static_cast<double>(k));
  for (int r = 2; r <= 100000; r += 2) {
    const double log_lhs = std::log(3.0) + r * std::log(base * r);
    if (log_lhs > log_rhs) break;
    out.r_n = r;
  }
  // c (a r)^r <= nu^b with a = kappa0 k e^k, b = 1 - eps, c = 3.
  const double a = base, b = 1.0 - epsilon, c = 3.0;
  if (nu > kE) {
    const double denom = std::log(a * b * c) + std::log(std::log(nu));
    out.growth_estimate = denom > 0.0 ? b * std::log(nu) / denom : 0.0;
    out.growth_estimate_even = 2 * static_cast<int>(std::floor(out.growth_estimate / 2.0));
  }
  return out;
}

TailBound subweibull_tail(double K, double C, double eta, double r0, double x) {
  require(K > 0.0 && C > 0.0 && eta > 0.0 && r0 >= 2.0, ErrorKind::kInvalidArgument, "invalid tail parameters");
  require(x >= 4.0 * eta * C * kE, ErrorKind::kInvalidArgument, "x is below the validity threshold 4 eta C e");
  TailBound t;
  t.threshold = K * std::pow(x, eta);
  const double boundary = 2.0 * C * eta * kE * r0;
  t.first_regime = x <= boundary;
  t.value = t.first_regime ? std::exp(-x / (2.0 * C * kE)) : std::pow(2.0 * eta * C * r0 / x, eta * r0);
  t.simplified = std::exp(-std::min(x / (2.0 * C * kE), eta * r0));
  return t;
}

double pz(double eta, double m2, double m4) {
  require(m4 > 0.0, ErrorKind::kInvalidArgument, "fourth moment must be positive");
  return (1.0 - eta) * (1.0 - eta) * m2 * m2 / m4;
}

Interval clopper_pearson(std::uint64_t x, std::uint64_t n, double confidence) {
  require(n > 0 && x <= n, ErrorKind::kInvalidArgument, "invalid binomial counts");
  require(confidence > 0.0 && confidence < 1.0, ErrorKind::kInvalidArgument, "confidence must lie in (0, 1)");
  const double alpha = 1.0 - confidence;
  Interval out;
  const double xd = static_cast<double>(x), nd = static_cast<double>(n);
  out.low = x == 0 ? 0.0 : boost::math::quantile(boost::math::beta_distribution<double>(xd, nd - xd + 1.0), alpha);
  out.high = x == n ? 1.0
                    : boost::math::quantile(boost::math::beta_distribution<double>(xd + 1.0, nd - xd), 1.0 - alpha);
  return out;
}

GrowthConditions evaluate_growth(const ModelSpec& spec, const AssumptionReport& a, const ConstantSet& c, int k,
                                 const UniversalConstants& u) {
  GrowthConditions g;
  const double n = spec.n;
  const double nu = spec.nu();
  const double L = spec.L;
  const double c_xi = a.c_xi;
  const double c_pi = a.constants.c_pi;
  g.assumptions = item(a.all_satisfied(), 0.0, "A1-A5");

  const double signal_rhs = std::max(u.c_nu_prime * std::log(n),
                                     32.0 * L * a.C_mu * a.C_mu * c.Ck * c.Ck / (c_pi * c_xi * c_xi));
  g.signal = item(nu >= signal_rhs, nu - signal_rhs, "nu >= max{c'_nu log n, 32 L C_mu^2 C_k^2 / (c_pi c_xi^2)}");

  const double n_lhs = std::min(n / std::max<double>(k, 4.0 * a.C_mu / c_xi),
                                std::pow(nu, a.constants.delta) / a.constants.C_B);
  const double n_rhs = 4.0 * a.C_mu * L / (c_pi * c_xi);
  g.n_growth = item(n_lhs >= n_rhs, n_lhs - n_rhs,
                    "min{n / max(k, 4 C_mu / c_xi), nu^delta / C_B} >= 4 C_mu L / (c_pi c_xi)");

  const double nu_lhs = std::min(n / ((2.0 * k - 1.0) * (2.0 * k - 1.0)), std::pow(nu, u.epsilon));
  const double nu_rhs = c.kappa1 / (2.0 * c.mu_max * c.mu_max);
  g.nu_growth = item(nu_lhs >= nu_rhs && c.kappa1 > 0.0, nu_lhs - nu_rhs,
                     "min{n / (2k-1)^2, nu^eps} >= kappa1 / (2 |mu|_max^2)");

  const double walk_rhs = k * std::exp(2.0 * (k - 1));
  g.walk_growth = item(nu >= walk_rhs, nu - walk_rhs, "nu >= k e^(2(k-1))");
  g.rn = nu > 0.0 ? compute_rn(c.kappa0, std::max(k, 1), u.epsilon, nu) : RnResult{};
  return g;
}

std::string verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kVacuous: return "vacuous";
  }
  return "?";
}

int BoundsReport::failures() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.verdict == Verdict::kFail; }));
}
int BoundsReport::passes() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.verdict == Verdict::kPass; }));
}
int BoundsReport::vacuous() const {
  return static_cast<int>(std::count_if(entries.begin(), entries.end(), [](const auto& e) { return e.verdict == Verdict::kVacuous; }));
}

Json bounds_to_json(const BoundsReport& r) {
  auto it = [](const AssumptionItem& i) { return Json{{"satisfied", i.satisfied}, {"margin", i.margin}, {"detail", i.detail}}; };
  Json entries = Json::array();
  for (const auto& e : r.entries) {
    Json j{{"check", e.check},   {"lhs", e.lhs},           {"rhs", e.rhs},
           {"margin", e.margin}, {"holds", e.holds},       {"asserted", e.asserted},
           {"verdict", verdict_name(e.verdict)}, {"failed_preconditions", e.failed_preconditions}};
    if (e.trials > 0) {
      j["successes"] = e.successes;
      j["trials"] = e.trials;
      j["interval"] = {e.interval.low, e.interval.high};
    }
    entries.push_back(j);
  }
  return Json{{"scenario", r.scenario},
              {"k", r.k},
              {"constants", constants_to_json(r.constants)},
              {"growth",
               {{"assumptions", it(r.growth.assumptions)},
                {"signal", it(r.growth.signal)},
                {"n_growth", it(r.growth.n_growth)},
                {"nu_growth", it(r.growth.nu_growth)},
                {"walk_growth", it(r.growth.walk_growth)},
                {"r_n", r.growth.rn.r_n},
                {"r_n_estimate", r.growth.rn.growth_estimate}}},
              {"entries", entries},
              {"summary", {{"pass", r.passes()}, {"fail", r.failures()}, {"vacuous", r.vacuous()}}}};
}

std::string bounds_csv_header() { return "scenario,check,k,preflight,lhs,rhs,margin,verdict\n"; }

std::string bounds_csv_rows(const BoundsReport& r) {
  std::ostringstream out;
  for (const auto& e : r.entries) {
    std::string pre = "ok";
    if (!e.failed_preconditions.empty()) {
      pre.clear();
      for (std::size_t q = 0; q < e.failed_preconditions.size(); ++q)
        pre += (q ? "|" : "") + e.failed_preconditions[q];
    }
    out << csv_field(r.scenario) << ',' << csv_field(e.check) << ',' << r.k << ',' << csv_field(pre) << ','
        << format_number(e.lhs) << ',' << format_number(e.rhs) << ',' << format_number(e.margin) << ','
        << verdict_name(e.verdict) << '\n';
  }
  return out.str();
}

namespace {

BoundsReport start_report(const ModelSpec& spec, const LabelAssignment& labels, int k, const BoundsSetup& setup,
                          AssumptionReport& assumptions) {
  assumptions = check_assumptions(spec, labels, k, setup.assumption_constants);
  BoundsReport rep;
  rep.scenario = setup.scenario;
  rep.k = k;
  rep.constants = compute_constants(spec, assumptions, k, setup.universal);
  rep.growth = evaluate_growth(spec, assumptions, rep.constants, k, setup.universal);
  return rep;
}

}  // namespace

BoundsReport check_signal_theorem(const ModelSpec& spec, const LabelAssignment& labels, int k,
                                  const BoundsSetup& setup) {
  AssumptionReport a;
  BoundsReport rep = start_report(spec, labels, k, setup, a);
  const Preflight pf{rep.growth};
  const auto failed = pf.failed({"A1-A5", "signal"});
  const SnrReport sig = population_signal(spec, labels, class_power(spec, labels, k));
  const double nu_k = std::pow(spec.nu(), k);
  const double sqrt_d = std::sqrt(static_cast<double>(spec.d));
  const double lower = a.c_xi * sqrt_d * nu_k / 2.0;
  const double upper = std::sqrt(8.0 * spec.d) * a.C_mu * std::pow(a.C_pi, k) * nu_k;
  for (int l = 0; l < spec.L; ++l) {
    for (int m = l + 1; m < spec.L; ++m) {
      const std::string pair = "(" + std::to_string(l + 1) + "," + std::to_string(m + 1) + ")";
      rep.entries.push_back(inequality("signal_lower" + pair, lower, sig.S(l, m), failed));
      rep.entries.push_back(inequality("signal_upper" + pair, sig.S(l, m), upper, failed));
    }
  }
  return rep;
}

NoiseSamples simulate_noise(const ModelSpec& spec, const LabelAssignment& labels, int k, int trials,
                            std::uint64_t seed, unsigned threads) {
  require(trials >= 1, ErrorKind::kInvalidArgument, "need at least one trial");
  const TrialSetup setup = prepare_trials(spec, labels, {k}, false);
  NoiseSamples out;
  out.k = k;
  out.dev.assign(trials, 0.0);
  out.rho.assign(trials, 0.0);
  parallel_for(static_cast<std::size_t>(trials), threads, [&](std::size_t t) {
    const auto res = run_trial(spec, labels, setup, derive_seed(seed, Purpose::kTrial, t));
    out.dev[t] = res.front().dev;
    out.rho[t] = res.front().rho;
  });
  return out;
}

BoundsReport check_noise_theorems(const ModelSpec& spec, const LabelAssignment& labels, const NoiseSamples& samples,
                                  const BoundsSetup& setup, const NoiseCheckOptions& opt) {
  const int k = samples.k;
  AssumptionReport a;
  BoundsReport rep = start_report(spec, labels, k, setup, a);
  const Preflight pf{rep.growth};
  const ConstantSet& c = rep.constants;
  const double nu = spec.nu();
  const double d = spec.d;
  const int r_n = rep.growth.rn.r_n;
  const std::uint64_t T = samples.dev.size();
  require(T > 0, ErrorKind::kInvalidArgument, "no samples");
  auto count_ge = [&](double thr) {
    return static_cast<std::uint64_t>(std::count_if(samples.dev.begin(), samples.dev.end(), [&](double v) { return v >= thr; }));
  };

  const auto upper_pre = pf.failed({"A1-A5", "n:growth", "nu:growth", "nu>=k*e^(2(k-1))", "r_n>=2"});
  for (const auto& [name, kappa3] : {std::pair{"stated", c.kappa3}, std::pair{"derived", c.kappa3_derived}}) {
    for (double mult : opt.u_multipliers) {
      const double u = mult * 8.0 * d * kE;
      const double thr = kappa3 * std::pow(nu, k - 0.5) * std::sqrt(u);
      const double bound = std::exp(-0.5 * std::min(u / (4.0 * d * kE), static_cast<double>(r_n)));
      rep.entries.push_back(prob_at_most(tag(std::string("noise_upper_tail/kappa3=") + name, "u/8de", mult),
                                         count_ge(thr), T, bound, opt.confidence, upper_pre));
    }
  }

  const double ratio_bound = c.kappa2 > 0.0 ? c.kappa1 * c.kappa1 / c.kappa2 : 0.0;
  const auto lower_pre = pf.failed({"A1-A5", "n:growth", "nu:growth", "nu>=k*e^(2(k-1))", "r_n>=4"});
  for (double eta : opt.etas) {
    const double thr = std::sqrt(eta * c.kappa1 * d) * std::pow(nu, k - 0.5);
    rep.entries.push_back(prob_at_least(tag("noise_lower_prob", "eta", eta), count_ge(thr), T,
                                        (1.0 - eta) * (1.0 - eta) * ratio_bound, opt.confidence, lower_pre));
  }

  double m2_mc = 0.0, m4_mc = 0.0;
  for (double v : samples.dev) {
    m2_mc += v * v;
    m4_mc += v * v * v * v;
  }
  m2_mc /= static_cast<double>(T);
  m4_mc /= static_cast<double>(T);
  double m2 = m2_mc;
  std::string m2_source = "monte_carlo";
  if (opt.exact_second_moment && k >= 1 && 2 * k <= ShapeGuard{}.max_positions) {
    m2 = exact_dev_second_moment(spec, labels, k).total();
    m2_source = "exact";
  } else if (k == 0) {
    m2 = d * spec.sigma * spec.sigma;
    m2_source = "exact";
  }
  const auto moment_pre = pf.failed({"A1-A5", "n:growth", "nu:growth", "r_n>=2"});
  rep.entries.push_back(inequality("second_moment_lower/" + m2_source, c.kappa1 * d * std::pow(nu, 2.0 * k - 1.0),
                                   m2, moment_pre));
  if (m4_mc > 0.0)
    rep.entries.push_back(inequality("moment_ratio_lower/" + m2_source + "+monte_carlo", ratio_bound,
                                     m2 * m2 / m4_mc, pf.failed({"A1-A5", "n:growth", "nu:growth", "r_n>=4"})));

  // Paley-Zygmund on the empirical law of Dev^2 holds for any sample.
  if (m4_mc > 0.0) {
    for (double eta : opt.etas) {
      const auto hits = static_cast<std::uint64_t>(std::count_if(
          samples.dev.begin(), samples.dev.end(), [&](double v) { return v * v > eta * m2_mc; }));
      rep.entries.push_back(inequality(tag("paley_zygmund_empirical", "eta", eta), pz(eta, m2_mc, m4_mc),
                                       static_cast<double>(hits) / static_cast<double>(T), {}, 1e-12));
    }
  }

  if (rep.growth.rn.growth_estimate_even >= 2)
    rep.entries.push_back(inequality("r_n_vs_growth_estimate", rep.growth.rn.growth_estimate_even, r_n, {}));
  return rep;
}

BoundsReport check_main_theorem(const ModelSpec& spec, const LabelAssignment& labels, const NoiseSamples& samples,
                                const BoundsSetup& setup, const NoiseCheckOptions& opt) {
  const int k = samples.k;
  AssumptionReport a;
  BoundsReport rep = start_report(spec, labels, k, setup, a);
  const Preflight pf{rep.growth};
  const ConstantSet& c = rep.constants;
  const double sqrt_nu = std::sqrt(spec.nu());
  const int r_n = rep.growth.rn.r_n;
  const std::uint64_t T = samples.rho.size();
  require(T > 0, ErrorKind::kInvalidArgument, "no samples");

  const auto upper_pre = pf.failed({"A1-A5", "signal", "n:growth", "nu:growth", "nu>=k*e^(2(k-1))", "r_n>=2"});
  for (const auto& [name, kappa3] : {std::pair{"stated", c.kappa3}, std::pair{"derived", c.kappa3_derived}}) {
    for (double alpha : opt.alphas) {
      const double thr = std::sqrt(kE) * alpha * kappa3 / a.c_xi;
      const auto hits = static_cast<std::uint64_t>(
          std::count_if(samples.rho.begin(), samples.rho.end(), [&](double r) { return sqrt_nu * r <= thr; }));
      const double bound = 1.0 - std::exp(-0.5 * std::min(alpha * alpha, static_cast<double>(r_n)));
      rep.entries.push_back(prob_at_least(tag(std::string("snr_upper_event/kappa3=") + name, "alpha", alpha), hits,
                                          T, bound, opt.confidence, upper_pre));
    }
  }
  const double ratio_bound = c.kappa2 > 0.0 ? c.kappa1 * c.kappa1 / c.kappa2 : 0.0;
  const auto lower_pre = pf.failed({"A1-A5", "signal", "n:growth", "nu:growth", "nu>=k*e^(2(k-1))", "r_n>=4"});
  for (double eta : opt.etas) {
    const double thr = std::sqrt(eta / 8.0) * std::sqrt(c.kappa1) / (a.C_mu * std::pow(a.C_pi, k));
    const auto hits = static_cast<std::uint64_t>(
        std::count_if(samples.rho.begin(), samples.rho.end(), [&](double r) { return sqrt_nu * r >= thr; }));
    rep.entries.push_back(prob_at_least(tag("snr_lower_event", "eta", eta), hits, T,
                                        (1.0 - eta) * (1.0 - eta) * ratio_bound, opt.confidence, lower_pre));
  }
  return rep;
}

}  // namespace csbm
