#pragma once

#include <array>
#include <cstdint>

namespace compresid {

/// Mixes two 64-bit words into a new seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

/// Counter-based random stream (Philox4x32-10).
///
/// The key is the 64-bit seed and the upper half of the 128-bit counter is the
/// stream id, so stream (seed, id) is a fixed sequence no matter which thread
/// consumes it or in what order streams are created.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64();

  /// Uniform on the open interval (0, 1) with 53 bits of resolution.
  double next_uniform();

  /// An independent stream keyed by this stream's identity and `tag`.
  /// Does not consume from this stream.
  RngStream substream(std::uint64_t tag) const;

 private:
  void refill();

  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int buffered_ = 0;
};

double sample_uniform(double lo, double hi, RngStream& rng);
double sample_std_normal(RngStream& rng);

/// Gamma(shape, 1) by Marsaglia-Tsang squeeze rejection, with the
/// U^(1/shape) boost for shape < 1.
double sample_gamma(double shape, RngStream& rng);

/// log of a Gamma(shape, 1) draw; stays finite for shapes where the draw
/// itself underflows.
double sample_log_gamma(double shape, RngStream& rng);

}  // namespace compresid
