#include "csbm/rng.hpp"

namespace csbm {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t master, Purpose purpose, std::uint64_t index) {
  std::uint64_t h = mix64(master);
  h = mix64(h ^ (static_cast<std::uint64_t>(purpose) * 0xD1B54A32D192ED03ULL));
  h = mix64(h ^ mix64(index + 0x632BE59BD9B4E019ULL));
  return h;
}

Stream::Stream(std::uint64_t seed, Purpose purpose, std::uint64_t index)
    : engine_(derive_seed(seed, purpose, index)) {}

std::uint64_t Stream::below(std::uint64_t bound) {
  // Rejection sampling keeps the draw exactly uniform.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = engine_();
  } while (x >= limit);
  return x % bound;
}

}  // namespace csbm
