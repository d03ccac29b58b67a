#pragma once

#include <array>
#include <cmath>
#include <cstdint>

#include "gnplan/errors.hpp"
#include "gnplan/matrix.hpp"

namespace gnplan {

/// Counter-based random stream (Philox-4x64, 10 rounds) keyed by
/// (seed, stream_index). Identical keys reproduce identical sequences on any
/// platform and under any parallel schedule; parallel consumers derive their
/// own stream_index instead of sharing a stream. The raw 64-bit output
/// sequence matches numpy.random.Philox(key=[seed, stream_index]).
class RngStream {
public:
    explicit RngStream(std::uint64_t seed, std::uint64_t stream_index = 0)
        : seed_(seed), stream_(stream_index) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream_index() const { return stream_; }

    RngStream substream(std::uint64_t index) const { return RngStream(seed_, index); }

    std::uint64_t next_u64() {
        if (buf_pos_ == 4) {
            // Counter is bumped before each block, matching numpy's buffering.
            increment_counter();
            buf_ = philox_block(counter_, {seed_, stream_});
            buf_pos_ = 0;
        }
        return buf_[buf_pos_++];
    }

    /// Uniform double in [0, 1), 53 random bits.
    double next_uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Standard normal via the Marsaglia polar method (deterministic draw order).
    double next_standard_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * next_uniform() - 1.0;
            v = 2.0 * next_uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    double next_normal(double mean, double std) {
        if (std < 0.0 || !std::isfinite(std)) {
            throw DomainError("next_normal: std must be non-negative, got " + std::to_string(std));
        }
        if (std == 0.0) return mean;
        return mean + std * next_standard_normal();
    }

    void fill_normal(double* out, std::size_t count, double mean, double std) {
        if (std < 0.0 || !std::isfinite(std)) {
            throw DomainError("fill_normal: std must be non-negative, got " + std::to_string(std));
        }
        for (std::size_t i = 0; i < count; ++i) {
            out[i] = (std == 0.0) ? mean : mean + std * next_standard_normal();
        }
    }

private:
    static void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& hi, std::uint64_t& lo) {
        const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
        hi = static_cast<std::uint64_t>(p >> 64);
        lo = static_cast<std::uint64_t>(p);
    }

    static std::array<std::uint64_t, 4> philox_block(std::array<std::uint64_t, 4> ctr,
                                                     std::array<std::uint64_t, 2> key) {
        constexpr std::uint64_t kMul0 = 0xD2E7470EE14C6C93ULL;
        constexpr std::uint64_t kMul1 = 0xCA5A826395121157ULL;
        constexpr std::uint64_t kWeyl0 = 0x9E3779B97F4A7C15ULL;
        constexpr std::uint64_t kWeyl1 = 0xBB67AE8584CAA73BULL;
        for (int round = 0; round < 10; ++round) {
            std::uint64_t hi0, lo0, hi1, lo1;
            mulhilo(kMul0, ctr[0], hi0, lo0);
            mulhilo(kMul1, ctr[2], hi1, lo1);
            ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        return ctr;
    }

    void increment_counter() {
        for (auto& limb : counter_) {
            if (++limb != 0) break;
        }
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::array<std::uint64_t, 4> counter_{0, 0, 0, 0};
    std::array<std::uint64_t, 4> buf_{};
    int buf_pos_ = 4;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// I.i.d. Gaussian matrix; std == 0 degenerates to a constant fill.
inline Matrix sample_normal(RngStream& stream, double mean, double std,
                            std::size_t rows, std::size_t cols) {
    Matrix m(rows, cols);
    stream.fill_normal(m.data(), m.size(), mean, std);
    return m;
}

} // namespace gnplan
