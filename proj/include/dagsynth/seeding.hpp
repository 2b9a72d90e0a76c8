#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace dagsynth {

// Independent stream seed derived from a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

std::string save_rng_state(const std::mt19937_64& rng);
std::mt19937_64 restore_rng_state(const std::string& state);

}  // namespace dagsynth
