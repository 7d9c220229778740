#pragma once

#include <cstdint>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace annihil {

using Rng = std::mt19937_64;

/// Independent random streams used by one replica.
enum class Stream : std::uint64_t {
  init_plus = 1,
  init_minus = 2,
  motion = 3,
  interaction = 4,
  auxiliary = 5,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Seed for stream `stream` of replica `replica`: three rounds of splitmix64
/// applied to the user seed, the replica index and the stream id in turn.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t replica, std::uint64_t stream);

Rng make_stream(std::uint64_t seed, std::uint64_t replica, Stream stream);

/// Uniform draw on the open interval (0,1) from the top 53 bits.
inline double uniform_open(Rng& rng) {
  return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
}

/// Standard normal sampler (ziggurat, Boost.Random).
class NormalSource {
 public:
  double operator()(Rng& rng) { return dist_(rng); }

 private:
  boost::random::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace annihil
