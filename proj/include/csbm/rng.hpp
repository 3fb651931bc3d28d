#pragma once

#include <cstdint>
#include <random>

namespace csbm {

// Stream purposes. Each (seed, purpose, index) triple names an independent stream,
// so trials can run in any order on any number of threads.
enum class Purpose : std::uint64_t {
  kGraph = 1,
  kFeatures = 2,
  kObserved = 3,
  kStartVector = 4,
  kMonteCarlo = 5,
  kBootstrap = 6,
  kInstance = 7,
  kTrial = 8,
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t master, Purpose purpose, std::uint64_t index);

class Stream {
 public:
  Stream(std::uint64_t seed, Purpose purpose, std::uint64_t index = 0);

  std::uint64_t next_u64() { return engine_(); }
  // Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double normal() { return normal_(engine_); }
  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace csbm
