// Command-line front end. Talks to the library only through csbm_snr.h.
#include "csbm_snr.h"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

namespace {

enum Exit { kOk = 0, kCheckFailed = 1, kConfigError = 2, kRuntimeError = 3 };

int exit_for(csbm_status st) {
  switch (st) {
    case CSBM_OK: return kOk;
    case CSBM_CHECK_FAILED: return kCheckFailed;
    case CSBM_CONFIG:
    case CSBM_INVALID_ARGUMENT: return kConfigError;
    default: return kRuntimeError;
  }
}

int report_error(csbm_status st) {
  std::cerr << "csbm_snr: " << csbm_status_name(st) << ": " << csbm_last_error() << "\n";
  return exit_for(st);
}

struct Owned {
  char* p = nullptr;
  ~Owned() { csbm_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

using ModelPtr = std::unique_ptr<csbm_model, decltype(&csbm_model_free)>;

std::optional<ModelPtr> load(const std::string& path, int& code) {
  csbm_model* m = nullptr;
  const csbm_status st = csbm_model_load(path.c_str(), &m);
  if (st != CSBM_OK) {
    code = report_error(st);
    return std::nullopt;
  }
  return ModelPtr(m, &csbm_model_free);
}

// Prints the status counts and every check that is not a plain pass.
void print_suite(const std::string& summary_json, bool verbose) {
  const auto doc = nlohmann::json::parse(summary_json);
  const auto& c = doc.at("counts");
  std::cout << "level " << doc.value("level", "") << "  pass " << c.at("pass") << "  fail " << c.at("fail")
            << "  vacuous " << c.at("vacuous") << "  skipped " << c.at("skipped") << "  deviation "
            << c.at("deviation") << "\n";
  for (const char* group : {"checks", "skipped_and_deviations", "vacuous"}) {
    for (const auto& row : doc.at(group)) {
      const std::string status = row.at("status");
      if (status == "pass" && !verbose) continue;
      std::cout << "  [" << status << "] " << row.at("check").get<std::string>() << ": "
                << row.at("detail").get<std::string>() << "\n";
    }
  }
}

int run_suite(const std::string& level, std::uint64_t seed, unsigned threads, const std::string& out,
              const std::string& sections, bool catalan_fault, bool verbose) {
  csbm_verify_options opt;
  csbm_verify_options_default(&opt);
  opt.level = level.c_str();
  opt.seed = seed;
  opt.threads = threads;
  opt.inject_catalan_fault = catalan_fault ? 1 : 0;
  opt.sections = sections.empty() ? nullptr : sections.c_str();
  Owned summary;
  const csbm_status st = csbm_verify_suite(&opt, out.empty() ? nullptr : out.c_str(), &summary.p);
  if (st != CSBM_OK && st != CSBM_CHECK_FAILED) return report_error(st);
  print_suite(summary.str(), verbose);
  if (!out.empty()) std::cout << "outputs in " << out << "\n";
  return exit_for(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CSBM / polynomial GNN signal-to-noise verification lab"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(csbm_build_id()));

  std::string model_path, out_dir, plan_path, level = "quick", fault, sections;
  std::uint64_t seed = 20240601;
  unsigned threads = 0;
  int k = -1, trials = 500;
  double epsilon = 0.5;
  bool verbose = false;

  auto add_threads = [&](CLI::App* sub) {
    sub->add_option("--threads", threads, "Worker threads (0: CSBM_SNR_THREADS or all cores)");
  };
  auto add_level = [&](CLI::App* sub) {
    sub->add_option("--level", level, "Suite depth")->check(CLI::IsMember({"quick", "full"}));
  };
  auto add_fault = [&](CLI::App* sub) {
    sub->add_option("--inject-fault", fault, "Mutation check: perturb a formula")->check(CLI::IsMember({"catalan"}));
  };

  auto* sample = app.add_subcommand("sample", "Sample labels, a graph and features from a model file");
  sample->add_option("--model", model_path, "Model file (.toml or .json)")->required();
  sample->add_option("--seed", seed, "Master seed");
  sample->add_option("--out", out_dir, "Output directory")->required();

  auto* snr = app.add_subcommand("snr", "Sample once and report Dev, rho and the class-center distances");
  snr->add_option("--model", model_path, "Model file (.toml or .json)")->required();
  snr->add_option("--seed", seed, "Master seed");
  snr->add_option("--k", k, "Aggregation depth (default: the model's k)");
  snr->add_option("--out", out_dir, "Write snr.json here");

  auto* walks = app.add_subcommand("walks-verify", "Exact walk counting, moment, structure and matrix checks");
  walks->add_option("--seed", seed, "Master seed");
  walks->add_option("--out", out_dir, "Output directory");
  add_threads(walks);
  add_level(walks);
  add_fault(walks);
  walks->add_flag("--verbose", verbose, "List passing checks too");

  auto* bounds = app.add_subcommand("bounds-check", "Signal brackets, noise tails and the main bounds");
  bounds->add_option("--model", model_path, "Check one model file instead of the built-in scenarios");
  bounds->add_option("--trials", trials, "Monte Carlo trials for --model")->check(CLI::PositiveNumber);
  bounds->add_option("--epsilon", epsilon, "epsilon in r_n for --model")->check(CLI::Range(0.0, 1.0));
  bounds->add_option("--seed", seed, "Master seed");
  bounds->add_option("--out", out_dir, "Output directory");
  add_threads(bounds);
  add_level(bounds);
  bounds->add_flag("--verbose", verbose, "List passing checks too");

  auto* exp = app.add_subcommand("experiment", "Run a study plan, or the whole verification suite without --plan");
  exp->add_option("--plan", plan_path, "Plan file (.toml or .json)");
  exp->add_option("--seed", seed, "Master seed (overrides the plan's)");
  exp->add_option("--out", out_dir, "Output directory (overrides the plan's)");
  exp->add_option("--sections", sections, "Comma-separated suite sections (suite mode only)");
  add_threads(exp);
  add_level(exp);
  add_fault(exp);
  exp->add_flag("--verbose", verbose, "List passing checks too");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (sample->parsed()) {
      int code = kOk;
      auto model = load(model_path, code);
      if (!model) return code;
      std::filesystem::create_directories(out_dir);
      const std::filesystem::path dir(out_dir);
      csbm_graph* g = nullptr;
      csbm_features* x = nullptr;
      csbm_status st = csbm_graph_sample(model->get(), seed, &g);
      std::unique_ptr<csbm_graph, decltype(&csbm_graph_free)> graph(g, &csbm_graph_free);
      if (st != CSBM_OK) return report_error(st);
      st = csbm_features_sample(model->get(), seed, &x);
      std::unique_ptr<csbm_features, decltype(&csbm_features_free)> feats(x, &csbm_features_free);
      if (st != CSBM_OK) return report_error(st);
      if ((st = csbm_model_write_labels(model->get(), (dir / "labels.csv").c_str())) != CSBM_OK) return report_error(st);
      if ((st = csbm_graph_write_edges(g, (dir / "graph.edges").c_str())) != CSBM_OK) return report_error(st);
      if ((st = csbm_features_write_csv(x, (dir / "features.csv").c_str())) != CSBM_OK) return report_error(st);
      std::uint64_t edges = 0;
      csbm_graph_edge_count(g, &edges);
      std::cout << edges << " edges; wrote labels.csv, graph.edges, features.csv to " << out_dir << "\n";
      return kOk;
    }

    if (snr->parsed()) {
      int code = kOk;
      auto model = load(model_path, code);
      if (!model) return code;
      if (k < 0) csbm_model_depth(model->get(), &k);
      csbm_graph* g = nullptr;
      csbm_features* x = nullptr;
      csbm_status st = csbm_graph_sample(model->get(), seed, &g);
      std::unique_ptr<csbm_graph, decltype(&csbm_graph_free)> graph(g, &csbm_graph_free);
      if (st != CSBM_OK) return report_error(st);
      st = csbm_features_sample(model->get(), seed, &x);
      std::unique_ptr<csbm_features, decltype(&csbm_features_free)> feats(x, &csbm_features_free);
      if (st != CSBM_OK) return report_error(st);
      Owned json;
      if ((st = csbm_snr_json(model->get(), g, x, k, &json.p)) != CSBM_OK) return report_error(st);
      std::cout << json.str() << "\n";
      if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        std::ofstream(std::filesystem::path(out_dir) / "snr.json") << json.str() << "\n";
      }
      return kOk;
    }

    if (walks->parsed())
      return run_suite(level, seed, threads, out_dir, "counting,moments,structure,proxy,matrix,growth",
                       fault == "catalan", verbose);

    if (bounds->parsed()) {
      if (model_path.empty()) return run_suite(level, seed, threads, out_dir, "signal,noise", false, verbose);
      int code = kOk;
      auto model = load(model_path, code);
      if (!model) return code;
      Owned json;
      const csbm_status st = csbm_bounds_check(model->get(), trials, seed, threads, epsilon,
                                               out_dir.empty() ? nullptr : out_dir.c_str(), &json.p);
      if (st != CSBM_OK && st != CSBM_CHECK_FAILED) return report_error(st);
      const auto doc = nlohmann::json::parse(json.str());
      for (const auto& rep : doc.at("reports"))
        for (const auto& e : rep.at("entries"))
          std::cout << rep.at("scenario").get<std::string>() << "  " << e.at("check").get<std::string>() << "  "
                    << e.at("verdict").get<std::string>() << "\n";
      return exit_for(st);
    }

    if (exp->parsed()) {
      if (plan_path.empty()) return run_suite(level, seed, threads, out_dir, sections, fault == "catalan", verbose);
      const bool seed_given = exp->count("--seed") > 0;
      Owned json;
      const csbm_status st = csbm_experiment_run(plan_path.c_str(), seed_given ? &seed : nullptr, threads,
                                                 out_dir.empty() ? nullptr : out_dir.c_str(), &json.p);
      if (st != CSBM_OK && st != CSBM_CHECK_FAILED) return report_error(st);
      const auto doc = nlohmann::json::parse(json.str());
      for (const auto& study : doc.at("studies"))
        for (const auto& c : study.at("checks"))
          std::cout << "[" << c.at("status").get<std::string>() << "] " << c.at("check").get<std::string>() << ": "
                    << c.at("detail").get<std::string>() << "\n";
      return exit_for(st);
    }
  } catch (const std::exception& e) {
    std::cerr << "csbm_snr: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kOk;
}
