/* Plain C consumer of the shared library: only csbm_snr.h is visible here. */
#include "csbm_snr.h"

#include <stdio.h>
#include <stdlib.h>
#include <string.h>

static int failures = 0;

#define EXPECT(cond)                                              \
  do {                                                            \
    if (!(cond)) {                                                \
      fprintf(stderr, "%s:%d: expected %s\n", __FILE__, __LINE__, #cond); \
      ++failures;                                                 \
    }                                                             \
  } while (0)

static const char* kModel =
    "{\"n\": 60, \"d\": 1, \"L\": 2, \"k\": 2, \"B\": [[0.3, 0.1], [0.1, 0.3]],"
    " \"pi\": [0.5, 0.5], \"mu\": [1.0, -1.0], \"sigma\": 0.5}";

int main(void) {
  csbm_model* model = NULL;
  EXPECT(csbm_model_parse(kModel, &model) == CSBM_OK);
  if (!model) return 1;

  int depth = 0;
  EXPECT(csbm_model_depth(model, &depth) == CSBM_OK && depth == 2);

  char* json = NULL;
  EXPECT(csbm_model_to_json(model, &json) == CSBM_OK && json && strstr(json, "\"sigma\""));
  csbm_string_free(json);

  csbm_graph* g1 = NULL;
  csbm_graph* g2 = NULL;
  uint64_t e1 = 0, e2 = 0;
  EXPECT(csbm_graph_sample(model, 7, &g1) == CSBM_OK);
  EXPECT(csbm_graph_sample(model, 7, &g2) == CSBM_OK);
  EXPECT(csbm_graph_edge_count(g1, &e1) == CSBM_OK);
  EXPECT(csbm_graph_edge_count(g2, &e2) == CSBM_OK);
  EXPECT(e1 == e2 && e1 > 0);

  csbm_features* x = NULL;
  EXPECT(csbm_features_sample(model, 7, &x) == CSBM_OK);
  char* snr = NULL;
  EXPECT(csbm_snr_json(model, g1, x, 2, &snr) == CSBM_OK && snr && strstr(snr, "\"rho\""));
  csbm_string_free(snr);
  csbm_features_free(x);
  csbm_graph_free(g2);
  csbm_graph_free(g1);
  csbm_model_free(model);

  /* error paths */
  csbm_model* bad = NULL;
  EXPECT(csbm_model_parse("{\"n\": 10}", &bad) == CSBM_CONFIG);
  EXPECT(bad == NULL);
  EXPECT(strlen(csbm_last_error()) > 0);
  EXPECT(csbm_model_parse(NULL, &bad) == CSBM_INVALID_ARGUMENT);
  EXPECT(csbm_model_load("/nonexistent/model.toml", &bad) != CSBM_OK);
  EXPECT(strcmp(csbm_status_name(CSBM_CHECK_FAILED), "check failed") == 0);
  EXPECT(strlen(csbm_build_id()) > 0);

  /* suite: counting alone passes, and the Catalan mutation is caught */
  csbm_verify_options opt;
  csbm_verify_options_default(&opt);
  opt.threads = 1;
  opt.sections = "counting";
  char* summary = NULL;
  EXPECT(csbm_verify_suite(&opt, NULL, &summary) == CSBM_OK);
  csbm_string_free(summary);
  summary = NULL;
  opt.inject_catalan_fault = 1;
  EXPECT(csbm_verify_suite(&opt, NULL, &summary) == CSBM_CHECK_FAILED);
  EXPECT(summary && strstr(summary, "loopless_equality[t=2]"));
  csbm_string_free(summary);

  opt.inject_catalan_fault = 0;
  opt.sections = "no_such_section";
  EXPECT(csbm_verify_suite(&opt, NULL, NULL) == CSBM_CONFIG);
  opt.sections = "counting";
  opt.level = "medium";
  EXPECT(csbm_verify_suite(&opt, NULL, NULL) == CSBM_CONFIG);

  if (failures) fprintf(stderr, "%d expectation(s) failed\n", failures);
  else printf("C API: all expectations met\n");
  return failures ? 1 : 0;
}
