#pragma once

#include <cstdint>

namespace calibra::numkit {

/// Counter-based splittable random stream. A draw is a pure function of
/// (key, counter), so streams can be replayed and consumed in any order,
/// and child streams derived for parallel work are independent of
/// scheduling. Identical (seed, stream_id)_pairs reproduce identical
/// sequences; distinct stream ids give statistically independent streams.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  /// Derive an independent child stream; tag choice is up to the caller.
  RngStream child(std::uint64_t tag) const;

  std::uint64_t next_u64();
  /// Uniform draw strictly inside (0, 1).
  double uniform01();
  /// Standard normal via the inverse CDF (one uniform per draw).
  double normal();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n);

 private:
  explicit RngStream(std::uint64_t key) : key_(key) {}
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

/// Standard normal CDF.
double normal_cdf(double x);
/// Standard normal quantile (Wichura's AS241, double precision).
double normal_quantile(double p);

}  // namespace calibra::numkit
