#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace hbuq {

/// Named streams for counter-based seed splitting.
enum class Stream : std::uint64_t {
  kInput = 1,
  kParameters = 2,
  kNoise = 3,
  kMultistart = 4,
  kPrediction = 5,
  kPredictionInput = 6,
};

/// Derives an independent seed for (stream, index) from a global seed, so any
/// task's random numbers depend only on its own coordinates.
std::uint64_t substream_seed(std::uint64_t seed, Stream stream,
                             std::uint64_t index = 0);

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, Stream stream,
                    std::uint64_t index = 0) {
  return Rng(substream_seed(seed, stream, index));
}

Eigen::VectorXd standard_normal(Rng& rng, Eigen::Index n);

}  // namespace hbuq
