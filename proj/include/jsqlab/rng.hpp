#pragma once

#include <cmath>
#include <cstdint>

namespace jsqlab {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seeded xoshiro256** generator.  A stream is identified by (root seed,
// stream id); substream(i) derives an independent generator from the same
// root, so replications can be split by counter without coordination.
class RngStream {
  public:
    RngStream() : RngStream(0, 0) {}

    RngStream(std::uint64_t seed, std::uint64_t stream) : root_(seed), id_(stream) {
        std::uint64_t sm = seed ^ (0xd1342543de82ef95ULL * (stream + 1));
        for (auto& word : s_) word = splitmix64(sm);
    }

    static RngStream seeded(std::uint64_t seed, std::uint64_t stream = 0) {
        return RngStream(seed, stream);
    }

    RngStream substream(std::uint64_t i) const { return RngStream(root_, id_ + 1 + i); }

    std::uint64_t root_seed() const { return root_; }
    std::uint64_t stream_id() const { return id_; }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform on (0,1), never returns 0 or 1
    double u01() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log(u01()) / rate; }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u = u01(), v = u01();
        double r = std::sqrt(-2.0 * std::log(u));
        double theta = 6.283185307179586476925286766559 * v;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

    // uniform integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t root_, id_;
    std::uint64_t s_[4];
    double spare_ = 0;
    bool have_spare_ = false;
};

}  // namespace jsqlab
