#pragma once

#include "csbm/experiment.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace csbm {

enum class SuiteLevel { kQuick, kFull };
SuiteLevel suite_level_from_name(const std::string& name);
std::string suite_level_name(SuiteLevel level);

// counting, moments, structure, proxy, matrix, growth, signal, noise, studies
const std::vector<std::string>& suite_sections();

struct VerifyOptions {
  SuiteLevel level = SuiteLevel::kQuick;
  std::uint64_t seed = 20240601;
  unsigned threads = 1;
  bool inject_catalan_fault = false;  // mutation check: one Catalan number is off by one
  std::vector<std::string> sections;  // empty means all
};

struct SuiteReport {
  Provenance provenance;
  std::string level;
  std::vector<CheckOutcome> checks;
  std::map<std::string, std::string> files;  // summary.json and summary.csv included
  int hard_failures() const;
  int count(const std::string& status) const;
  Json to_json() const;
};

SuiteReport run_verify_suite(const VerifyOptions& options);

}  // namespace csbm
