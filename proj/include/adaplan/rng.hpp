#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace adaplan {

/// Seeded random stream. Same (seed, stream_id) gives the same draws; streams
/// with different ids are seeded independently.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  double uniform(double lo, double hi);
  double normal();
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  /// Child stream sharing the seed; its id is a hash of (stream_id, sub).
  RngStream split(std::uint64_t sub) const;

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace adaplan
