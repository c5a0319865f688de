#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <utility>
#include <vector>

namespace fsv {

// Deterministic random stream: xoshiro256** whose state is filled by
// splitmix64 from a (master seed, stream id) pair. The integer draw sequence
// depends only on that pair, so it is identical on every platform.
//
// Normal draws use the Box-Muller transform on two open-interval uniforms;
// the second value of each pair is cached and returned by the next call.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

  std::uint64_t next_u64();
  // Uniform on [0, 1) with 53 bits of resolution.
  double uniform();
  // Uniform on (0, 1).
  double uniform_open();
  double normal();
  // Uniform integer on [0, n); n must be positive. Unbiased (Lemire rejection).
  std::uint64_t uniform_int(std::uint64_t n);

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

 private:
  std::array<std::uint64_t, 4> state_{};
  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

RngStream derive_rng(std::uint64_t master_seed, std::uint64_t stream_id);

// Mixes several integers into one stream id (order-sensitive).
std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts);

template <typename T>
void shuffle(std::span<T> items, RngStream& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(i));
    std::swap(items[i - 1], items[j]);
  }
}

template <typename T>
void shuffle(std::vector<T>& items, RngStream& rng) {
  shuffle(std::span<T>(items), rng);
}

// k distinct indices from [0, n) in draw order; requires k <= n.
std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, RngStream& rng);

// 0, 1, ..., n-1 in a random order.
std::vector<std::size_t> permutation(std::size_t n, RngStream& rng);

}  // namespace fsv
