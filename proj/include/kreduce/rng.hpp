#pragma once

// Counter-based random numbers built on Philox4x32-10. Every consumer owns a
// (seed, stream) pair and draws an independent sequence; nothing is shared,
// so ensembles are reproducible bit-for-bit under any thread scheduling.

#include <array>
#include <cstdint>
#include <cmath>

namespace kreduce {

namespace philox {

constexpr uint32_t kMul0 = 0xD2511F53u;
constexpr uint32_t kMul1 = 0xCD9E8D57u;
constexpr uint32_t kWeyl0 = 0x9E3779B9u;
constexpr uint32_t kWeyl1 = 0xBB67AE85u;

inline void round_once(std::array<uint32_t, 4>& c, uint32_t k0, uint32_t k1) {
    uint64_t p0 = uint64_t(kMul0) * c[0];
    uint64_t p1 = uint64_t(kMul1) * c[2];
    uint32_t hi0 = uint32_t(p0 >> 32), lo0 = uint32_t(p0);
    uint32_t hi1 = uint32_t(p1 >> 32), lo1 = uint32_t(p1);
    c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
}

inline std::array<uint32_t, 4> block(std::array<uint32_t, 4> ctr, uint32_t k0, uint32_t k1) {
    for (int r = 0; r < 10; ++r) {
        if (r) { k0 += kWeyl0; k1 += kWeyl1; }
        round_once(ctr, k0, k1);
    }
    return ctr;
}

// Stream layout: counter = (block lo, block hi, stream lo, stream hi),
// key = the 64-bit master seed.
inline std::array<uint32_t, 4> block(uint64_t seed, uint64_t stream, uint64_t blk) {
    return block({uint32_t(blk), uint32_t(blk >> 32), uint32_t(stream), uint32_t(stream >> 32)},
                 uint32_t(seed), uint32_t(seed >> 32));
}

} // namespace philox

// Stream id ranges. Trajectories get low ids; everything else draws from
// disjoint high ranges so no two consumers ever touch the same counters.
constexpr uint64_t kStreamInitialState = uint64_t(1) << 48;
constexpr uint64_t kStreamAux = uint64_t(1) << 49;

// Uniform and normal deviates from one Philox stream. Normals come from
// Box-Muller pairs; no rejection, so consumption is exactly predictable.
class RandomStream {
  public:
    RandomStream(uint64_t seed, uint64_t stream) : seed_(seed), stream_(stream) {}

    // Uniform on (0,1), both endpoints excluded.
    double next_uniform() {
        if (have_ >= 2) { have_ = 0; ++blk_; }
        if (have_ == 0) words_ = philox::block(seed_, stream_, blk_);
        uint64_t hi = words_[2 * have_], lo = words_[2 * have_ + 1];
        ++have_;
        uint64_t bits = (hi << 32) | lo;
        return double(bits >> 11) * 0x1.0p-53 + 0x1.0p-54;
    }

    double next_normal() {
        if (have_normal_) {
            have_normal_ = false;
            return spare_;
        }
        double u1 = next_uniform();
        double u2 = next_uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_normal_ = true;
        return r * std::cos(a);
    }

    uint64_t seed() const { return seed_; }
    uint64_t stream() const { return stream_; }

  private:
    uint64_t seed_, stream_;
    uint64_t blk_ = 0;
    std::array<uint32_t, 4> words_{};
    int have_ = 2;  // forces a fresh block on first use
    bool have_normal_ = false;
    double spare_ = 0.0;
};

// Wiener increments dW_k ~ Normal(0, dt) for one trajectory, fully determined
// by (master seed, trajectory index, dt).
class NoisePath {
  public:
    NoisePath(uint64_t master_seed, uint64_t trajectory, double dt)
        : rs_(master_seed, trajectory), sqrt_dt_(std::sqrt(dt)), dt_(dt) {}

    double next() { return sqrt_dt_ * rs_.next_normal(); }
    double dt() const { return dt_; }

  private:
    RandomStream rs_;
    double sqrt_dt_;
    double dt_;
};

} // namespace kreduce
