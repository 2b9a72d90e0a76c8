#include "dagsynth/seeding.hpp"

#include <sstream>

#include "dagsynth/errors.hpp"

namespace dagsynth {

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string save_rng_state(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

std::mt19937_64 restore_rng_state(const std::string& state) {
  std::istringstream in(state);
  std::mt19937_64 rng;
  in >> rng;
  if (in.fail()) {
    throw Error(ErrorCode::kCorruptCheckpoint, "unreadable RNG state");
  }
  return rng;
}

}  // namespace dagsynth
