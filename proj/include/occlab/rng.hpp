#pragma once

// Counter-based random numbers. Every stream is a pure function of
// (seed, replica, stream id, draw index), so replicas can be generated in any
// order on any number of workers and still reproduce bit for bit.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace occlab {

// Philox4x32-10 block function (Salmon et al., SC'11).
struct Philox4x32 {
  using Counter = std::array<std::uint32_t, 4>;
  using Key = std::array<std::uint32_t, 2>;

  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static constexpr Counter block(Counter ctr, Key key) {
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = std::uint64_t{kMul0} * ctr[0];
      const std::uint64_t p1 = std::uint64_t{kMul1} * ctr[2];
      const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
      const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
      ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
      key[0] += kWeyl0;
      key[1] += kWeyl1;
    }
    return ctr;
  }
};

// Well-known stream ids; keeps unrelated consumers of one (seed, replica)
// pair from overlapping.
namespace stream {
inline constexpr std::uint32_t path = 0;
inline constexpr std::uint32_t field = 1;
inline constexpr std::uint32_t bootstrap = 2;
inline constexpr std::uint32_t synthetic = 3;
inline constexpr std::uint32_t cluster_retry = 4;
inline constexpr std::uint32_t bridge = 5;
}  // namespace stream

// UniformRandomBitGenerator over Philox. Counter words: [0,1] draw index,
// [2] replica, [3] stream id. Key: the 64-bit seed.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  CounterRng(std::uint64_t seed, std::uint64_t replica, std::uint32_t stream_id = stream::path)
      : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
        replica_(static_cast<std::uint32_t>(replica)),
        stream_(stream_id ^ static_cast<std::uint32_t>(replica >> 32) * 0x9E3779B1u) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (cursor_ == 2) refill();
    return buffer_[cursor_++];
  }

  // Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u = uniform();
    const double v = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u));
    const double angle = 2.0 * std::numbers::pi * v;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  std::uint64_t draws() const { return block_index_; }

 private:
  void refill() {
    const Philox4x32::Counter ctr{static_cast<std::uint32_t>(block_index_),
                                  static_cast<std::uint32_t>(block_index_ >> 32), replica_, stream_};
    const auto out = Philox4x32::block(ctr, key_);
    buffer_[0] = (std::uint64_t{out[0]} << 32) | out[1];
    buffer_[1] = (std::uint64_t{out[2]} << 32) | out[3];
    ++block_index_;
    cursor_ = 0;
  }

  Philox4x32::Key key_;
  std::uint32_t replica_;
  std::uint32_t stream_;
  std::uint64_t block_index_ = 0;
  std::array<std::uint64_t, 2> buffer_{};
  int cursor_ = 2;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// One-shot hash of a 64-bit item to a uniform in (0,1): used for
// procedurally generated i.i.d. fields (edge weights).
inline double hashed_uniform(std::uint64_t seed, std::uint64_t item, std::uint32_t stream_id) {
  const Philox4x32::Counter ctr{static_cast<std::uint32_t>(item), static_cast<std::uint32_t>(item >> 32),
                                stream_id, 0x5EEDu};
  const auto out = Philox4x32::block(ctr, {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)});
  const std::uint64_t bits = (std::uint64_t{out[0]} << 32) | out[1];
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace occlab
