#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace dmarl {

using Rng = std::mt19937_64;

/// Derives an independent stream from a master seed and a path of labels,
/// e.g. DeriveRng(master, {repeat, kNoiseStream}). Changing any label changes
/// the whole stream; streams for different paths never share state.
inline Rng DeriveRng(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
  std::vector<std::uint32_t> words;
  words.reserve(2 * (path.size() + 1));
  auto push = [&](std::uint64_t v) {
    words.push_back(static_cast<std::uint32_t>(v));
    words.push_back(static_cast<std::uint32_t>(v >> 32));
  };
  push(master);
  for (std::uint64_t p : path) push(p);
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

/// Stream labels used by the experiment runner.
enum StreamLabel : std::uint64_t {
  kPerturbationStream = 1,
  kEnvironmentStream = 2,
};

}  // namespace dmarl
