#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace aoi {

/// A single 64-bit stream. Draw conversion is done here rather than through
/// <random> distributions so sequences are identical on every standard library.
class RandomStream {
 public:
  RandomStream() = default;
  RandomStream(std::uint64_t seed, std::string_view name);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer on [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::mt19937_64 engine_{};
};

/// Named substreams derived from one experiment seed. Environment draws never
/// share a stream with policy draws, so two policies run on the same seed see
/// the same arrival sequence.
struct RandomStreams {
  explicit RandomStreams(std::uint64_t seed);

  RandomStream arrivals;
  RandomStream channel1;
  RandomStream channel2;
  RandomStream exploration;
};

}  // namespace aoi
