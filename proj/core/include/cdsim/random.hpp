#pragma once

#include <cstdint>
#include <random>

namespace cdsim {

/// Independent stream tags so that sampling, wait times and seeds derived for
/// sub-runs never share a generator state.
enum class Stream : std::uint32_t {
  sampling = 1,
  wait_time = 2,
  derived_seed = 3,
  reference = 4,
};

/// Generator for one (seed, stream, index) triple. Streams depend only on the
/// triple, so results do not depend on how points are split across threads.
inline std::mt19937_64 make_stream(std::uint64_t seed, Stream stream,
                                   std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

/// Seed for the k-th sub-run of a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t k) {
  auto gen = make_stream(base, Stream::derived_seed, k);
  return gen();
}

}  // namespace cdsim
