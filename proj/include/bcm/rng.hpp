#pragma once

#include <cstdint>
#include <random>

#include "bcm/model.hpp"

namespace bcm {

/// Reproducible random stream keyed by (master seed, stream id). Distinct keys
/// give independent engines; the same key always replays the same sequence.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Child stream keyed by this stream's id and `sub`.
  RngStream derive(std::uint64_t sub) const;

  double uniform();                     // [0, 1)
  double normal(double mean = 0.0, double sd = 1.0);
  double gamma(double shape, double rate);
  double beta(double a, double b);
  Count binomial(Count n, double p);
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 engine_;
};

}  // namespace bcm
