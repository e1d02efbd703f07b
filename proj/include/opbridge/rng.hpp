#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace opbridge {

// Philox4x32-10 counter-based generator. Each (master seed, stream) pair is an
// independent random stream whose output depends only on those two values and
// the draw index — never on thread scheduling — so parallel path generation is
// reproducible by construction. Satisfies UniformRandomBitGenerator.
class Philox4x32 {
 public:
  using result_type = std::uint64_t;

  Philox4x32(std::uint64_t master_seed, std::uint64_t stream)
      : key_{static_cast<std::uint32_t>(master_seed),
             static_cast<std::uint32_t>(master_seed >> 32)},
        stream_(stream) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    if (pos_ >= 4) {
      buf_ = block({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                    static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)},
                   key_);
      ++block_;
      pos_ = 0;
    }
    const result_type lo = buf_[pos_];
    const result_type hi = buf_[pos_ + 1];
    pos_ += 2;
    return lo | (hi << 32);
  }

  // One 10-round keyed permutation of a 128-bit counter.
  static std::array<std::uint32_t, 4> block(std::array<std::uint32_t, 4> ctr,
                                            std::array<std::uint32_t, 2> key) {
    for (int r = 0; r < 10; ++r) {
      ctr = round_once(ctr, key);
      key[0] += 0x9E3779B9u;  // Weyl constants advance the key between rounds
      key[1] += 0xBB67AE85u;
    }
    return ctr;
  }

 private:
  static std::array<std::uint32_t, 4> round_once(const std::array<std::uint32_t, 4>& x,
                                                 const std::array<std::uint32_t, 2>& k) {
    const std::uint64_t p0 = 0xD2511F53ull * x[0];
    const std::uint64_t p1 = 0xCD9E8D57ull * x[2];
    return {static_cast<std::uint32_t>(p1 >> 32) ^ x[1] ^ k[0],
            static_cast<std::uint32_t>(p1),
            static_cast<std::uint32_t>(p0 >> 32) ^ x[3] ^ k[1],
            static_cast<std::uint32_t>(p0)};
  }

  std::array<std::uint32_t, 2> key_;
  std::uint64_t stream_ = 0;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
};

}  // namespace opbridge
