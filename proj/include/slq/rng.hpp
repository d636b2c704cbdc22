#pragma once

#include <cstdint>
#include <random>

namespace slq {

// Independent stream ids so that noise, test inputs and perturbations drawn
// under one seed never share a generator.
enum class Stream : std::uint32_t {
  Brownian = 0,
  InitialState = 1,
  DriftForcing = 2,
  DiffusionForcing = 3,
  Perturbation = 4,
  Sampling = 5,
};

/// Generator for one (seed, path, stream) triple. The state depends only on
/// the triple, so paths can be simulated in any order or on any worker.
inline std::mt19937_64 path_stream(std::uint64_t seed, std::uint64_t path,
                                   Stream stream = Stream::Brownian, std::uint32_t salt = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32),
                    static_cast<std::uint32_t>(stream), salt};
  return std::mt19937_64(seq);
}

}  // namespace slq
