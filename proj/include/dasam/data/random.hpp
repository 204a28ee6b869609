#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dasam {

// Distribution objects in <random> are implementation-defined, so every draw
// that must be reproducible goes through these helpers on top of the
// (fully specified) mt19937_64 engine.
using Rng = std::mt19937_64;

/// splitmix64 finalizer; mixes a sequence of words into one seed.
std::uint64_t mix_seed(std::initializer_list<std::uint64_t> words);

/// Uniform in [0, 1) with 53 random bits.
double uniform01(Rng& rng);
double uniform(Rng& rng, double lo, double hi);
/// Uniform integer in [lo, hi] (inclusive), unbiased.
std::int64_t uniform_int(Rng& rng, std::int64_t lo, std::int64_t hi);
bool bernoulli(Rng& rng, double p);

}  // namespace dasam
