#include "csbm_snr.h"

#include "csbm/bounds.hpp"
#include "csbm/experiment.hpp"
#include "csbm/features.hpp"
#include "csbm/format.hpp"
#include "csbm/model.hpp"
#include "csbm/parallel.hpp"
#include "csbm/verify.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <sstream>

struct csbm_model {
  csbm::ModelSpec spec;
  csbm::LabelAssignment labels;
};

struct csbm_graph {
  csbm::SparseGraph graph;
};

struct csbm_features {
  csbm::Matrix X;
};

namespace {

thread_local std::string last_error;

csbm_status status_of(csbm::ErrorKind kind) {
  switch (kind) {
    case csbm::ErrorKind::kInvalidArgument: return CSBM_INVALID_ARGUMENT;
    case csbm::ErrorKind::kConfig: return CSBM_CONFIG;
    case csbm::ErrorKind::kGuard: return CSBM_GUARD;
    case csbm::ErrorKind::kNumeric: return CSBM_NUMERIC;
    case csbm::ErrorKind::kIo: return CSBM_IO;
    case csbm::ErrorKind::kInternal: return CSBM_INTERNAL;
  }
  return CSBM_INTERNAL;
}

template <class F>
csbm_status guard(F&& body) {
  last_error.clear();
  try {
    return body();
  } catch (const csbm::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return CSBM_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return CSBM_INTERNAL;
  } catch (...) {
    last_error = "unknown error";
    return CSBM_INTERNAL;
  }
}

csbm_status invalid(const char* what) {
  last_error = what;
  return CSBM_INVALID_ARGUMENT;
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void hand_out(char** dest, const std::string& s) {
  if (dest) *dest = dup(s);
}

csbm_model* wrap(csbm::ModelSpec spec) {
  auto* m = new csbm_model{std::move(spec), {}};
  m->labels = csbm::assign_labels(m->spec);
  return m;
}

std::vector<std::string> split_sections(const char* text) {
  std::vector<std::string> out;
  if (!text) return out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

extern "C" {

void csbm_string_free(char* s) { std::free(s); }

const char* csbm_last_error(void) { return last_error.c_str(); }

const char* csbm_status_name(csbm_status status) {
  switch (status) {
    case CSBM_OK: return "ok";
    case CSBM_INVALID_ARGUMENT: return "invalid argument";
    case CSBM_CONFIG: return "configuration error";
    case CSBM_GUARD: return "guard exceeded";
    case CSBM_NUMERIC: return "numeric error";
    case CSBM_IO: return "I/O error";
    case CSBM_INTERNAL: return "internal error";
    case CSBM_CHECK_FAILED: return "check failed";
  }
  return "unknown status";
}

const char* csbm_build_id(void) {
  static const std::string id = csbm::build_id();
  return id.c_str();
}

unsigned csbm_resolve_threads(unsigned requested) { return csbm::resolve_threads(requested); }

csbm_status csbm_model_load(const char* path, csbm_model** out) {
  if (!path || !out) return invalid("null argument");
  return guard([&] {
    *out = wrap(csbm::load_model(path));
    return CSBM_OK;
  });
}

csbm_status csbm_model_parse(const char* text, csbm_model** out) {
  if (!text || !out) return invalid("null argument");
  return guard([&] {
    *out = wrap(csbm::model_from_text(text));
    return CSBM_OK;
  });
}

void csbm_model_free(csbm_model* model) { delete model; }

csbm_status csbm_model_to_json(const csbm_model* model, char** json) {
  if (!model || !json) return invalid("null argument");
  return guard([&] {
    hand_out(json, csbm::model_to_json(model->spec).dump(2));
    return CSBM_OK;
  });
}

csbm_status csbm_model_depth(const csbm_model* model, int* k) {
  if (!model || !k) return invalid("null argument");
  *k = model->spec.k;
  return CSBM_OK;
}

csbm_status csbm_model_write_labels(const csbm_model* model, const char* path) {
  if (!model || !path) return invalid("null argument");
  return guard([&] {
    std::string text = "node,label\n";
    for (std::size_t i = 0; i < model->labels.y.size(); ++i)
      text += std::to_string(i) + "," + std::to_string(model->labels.y[i] + 1) + "\n";
    csbm::write_text_file(path, text);
    return CSBM_OK;
  });
}

csbm_status csbm_graph_sample(const csbm_model* model, uint64_t seed, csbm_graph** out) {
  if (!model || !out) return invalid("null argument");
  return guard([&] {
    *out = new csbm_graph{csbm::sample_graph(model->spec, model->labels, seed)};
    return CSBM_OK;
  });
}

void csbm_graph_free(csbm_graph* graph) { delete graph; }

csbm_status csbm_graph_edge_count(const csbm_graph* graph, uint64_t* count) {
  if (!graph || !count) return invalid("null argument");
  *count = graph->graph.edge_count();
  return CSBM_OK;
}

csbm_status csbm_graph_write_edges(const csbm_graph* graph, const char* path) {
  if (!graph || !path) return invalid("null argument");
  return guard([&] {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) csbm::fail(csbm::ErrorKind::kIo, std::string("cannot write ") + path);
    graph->graph.write_edge_list(out);
    if (!out) csbm::fail(csbm::ErrorKind::kIo, std::string("write failed for ") + path);
    return CSBM_OK;
  });
}

csbm_status csbm_features_sample(const csbm_model* model, uint64_t seed, csbm_features** out) {
  if (!model || !out) return invalid("null argument");
  return guard([&] {
    *out = new csbm_features{csbm::sample_features(model->spec, model->labels, seed)};
    return CSBM_OK;
  });
}

void csbm_features_free(csbm_features* features) { delete features; }

csbm_status csbm_features_write_csv(const csbm_features* features, const char* path) {
  if (!features || !path) return invalid("null argument");
  return guard([&] {
    const auto& X = features->X;
    std::string text = "node";
    for (Eigen::Index c = 0; c < X.cols(); ++c) text += ",x" + std::to_string(c + 1);
    text += "\n";
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
      text += std::to_string(r);
      for (Eigen::Index c = 0; c < X.cols(); ++c) text += "," + csbm::format_number(X(r, c));
      text += "\n";
    }
    csbm::write_text_file(path, text);
    return CSBM_OK;
  });
}

csbm_status csbm_snr_json(const csbm_model* model, const csbm_graph* graph, const csbm_features* features, int k,
                          char** json) {
  if (!model || !graph || !features || !json) return invalid("null argument");
  return guard([&] {
    const csbm::SnrReport rep = csbm::snr(model->spec, model->labels, graph->graph, features->X, k);
    hand_out(json, csbm::snr_to_json(rep).dump(2));
    return CSBM_OK;
  });
}

void csbm_verify_options_default(csbm_verify_options* options) {
  if (!options) return;
  const csbm::VerifyOptions d;
  options->level = "quick";
  options->seed = d.seed;
  options->threads = 0;
  options->inject_catalan_fault = 0;
  options->sections = nullptr;
}

csbm_status csbm_verify_suite(const csbm_verify_options* options, const char* out_dir, char** summary_json) {
  if (!options) return invalid("null options");
  return guard([&] {
    csbm::VerifyOptions opt;
    opt.level = csbm::suite_level_from_name(options->level ? options->level : "quick");
    opt.seed = options->seed;
    opt.threads = csbm::resolve_threads(options->threads);
    opt.inject_catalan_fault = options->inject_catalan_fault != 0;
    opt.sections = split_sections(options->sections);
    const csbm::SuiteReport rep = csbm::run_verify_suite(opt);
    if (out_dir && *out_dir) csbm::write_report_files(out_dir, rep.files);
    hand_out(summary_json, rep.files.at("summary.json"));
    return rep.hard_failures() > 0 ? CSBM_CHECK_FAILED : CSBM_OK;
  });
}

csbm_status csbm_bounds_check(const csbm_model* model, int trials, uint64_t seed, unsigned threads, double epsilon,
                              const char* out_dir, char** report_json) {
  if (!model) return invalid("null model");
  if (trials < 1) return invalid("trials must be at least 1");
  if (!(epsilon > 0.0 && epsilon < 1.0)) return invalid("epsilon must lie in (0, 1)");
  return guard([&] {
    const auto& spec = model->spec;
    const int k = spec.k;
    csbm::BoundsSetup setup;
    setup.scenario = "model";
    setup.universal.epsilon = epsilon;
    const csbm::NoiseSamples ns = csbm::simulate_noise(spec, model->labels, k, trials, seed, csbm::resolve_threads(threads));
    const std::vector<csbm::BoundsReport> reports{csbm::check_signal_theorem(spec, model->labels, k, setup),
                                                  csbm::check_noise_theorems(spec, model->labels, ns, setup),
                                                  csbm::check_main_theorem(spec, model->labels, ns, setup)};
    const std::string plan = csbm::model_to_json(spec).dump() + "|bounds|" + std::to_string(trials) + "|" +
                             csbm::format_number(epsilon);
    const csbm::Provenance prov{csbm::build_id(), csbm::hex64(csbm::fnv1a(plan)), seed};
    csbm::CsvTable table({"scenario", "check", "k", "preflight", "lhs", "rhs", "margin", "verdict"});
    csbm::Json doc;
    doc["build_id"] = prov.build_id;
    doc["plan_hash"] = prov.plan_hash;
    doc["master_seed"] = prov.master_seed;
    doc["trials"] = trials;
    doc["reports"] = csbm::Json::array();
    int failures = 0;
    for (const auto& r : reports) {
      failures += r.failures();
      doc["reports"].push_back(csbm::bounds_to_json(r));
      for (const auto& e : r.entries) {
        std::string pre = "ok";
        if (!e.failed_preconditions.empty()) {
          pre.clear();
          for (std::size_t q = 0; q < e.failed_preconditions.size(); ++q) pre += (q ? "|" : "") + e.failed_preconditions[q];
        }
        table.add({r.scenario, e.check, std::to_string(r.k), pre, csbm::format_number(e.lhs),
                   csbm::format_number(e.rhs), csbm::format_number(e.margin), csbm::verdict_name(e.verdict)});
      }
    }
    doc["failures"] = failures;
    const std::string json = doc.dump(2) + "\n";
    if (out_dir && *out_dir)
      csbm::write_report_files(out_dir, {{"bounds.csv", table.render(prov)}, {"bounds.json", json}});
    hand_out(report_json, json);
    return failures > 0 ? CSBM_CHECK_FAILED : CSBM_OK;
  });
}

csbm_status csbm_experiment_run(const char* plan_path, const uint64_t* seed_override, unsigned threads,
                                const char* out_dir_override, char** report_json) {
  if (!plan_path) return invalid("null plan path");
  return guard([&] {
    const csbm::ExperimentPlan plan = csbm::load_plan(plan_path);
    csbm::RunOptions opt;
    opt.threads = csbm::resolve_threads(threads);
    if (seed_override) opt.seed = *seed_override;
    opt.svg = plan.svg;
    const csbm::ExperimentReport rep = csbm::run_experiment(plan, opt);
    const auto files = csbm::collect_files(rep);
    const std::string dir = out_dir_override && *out_dir_override ? out_dir_override : plan.out_dir;
    if (!dir.empty()) csbm::write_report_files(dir, files);
    hand_out(report_json, files.at("report.json"));
    return rep.hard_failures() > 0 ? CSBM_CHECK_FAILED : CSBM_OK;
  });
}

}  // extern "C"
