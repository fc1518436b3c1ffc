#pragma once

#include <cstdint>
#include <limits>

namespace mixres {

inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator: the i-th output is a pure function of
// (seed, stream_id, i), so trials can be scheduled on any worker.
class RngStream {
 public:
  using result_type = std::uint64_t;

  RngStream(std::uint64_t seed, std::uint64_t stream_id)
      : seed_(seed), stream_id_(stream_id) {
    key_ = mix64(seed ^ 0x9e3779b97f4a7c15ULL) ^ mix64(stream_id + 0x632be59bd9b4e019ULL);
    gamma_ = mix64(stream_id ^ 0xd1b54a32d192ed03ULL) | 1ULL;
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return mix64(key_ + gamma_ * ++counter_); }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  // Child stream for the k-th sub-task; depends only on (seed, stream_id, k).
  RngStream split(std::uint64_t k) const {
    return RngStream(seed_, mix64(stream_id_ * 0x9e3779b97f4a7c15ULL + mix64(k + 1)));
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t key_ = 0;
  std::uint64_t gamma_ = 1;
  std::uint64_t counter_ = 0;
};

}  // namespace mixres
