#pragma once

#include "neumiss/dense.hpp"

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <string_view>

namespace neumiss {

/// Seeded random stream. A (seed, stream_id) pair fully determines the
/// sequence; distinct stream ids give independent streams. Move-only so a
/// stream always has exactly one owner.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    RngStream(const RngStream&) = delete;
    RngStream& operator=(const RngStream&) = delete;
    RngStream(RngStream&&) = default;
    RngStream& operator=(RngStream&&) = default;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    /// Independent child stream keyed by `salt`.
    RngStream child(std::uint64_t salt) const;

    double uniform();
    double uniform(double lo, double hi);
    /// Standard normal draw (libstdc++'s Marsaglia polar transform).
    double normal();
    bool bernoulli(double p);
    /// Uniform integer on [0, n).
    Index uniform_index(Index n);
    std::uint64_t next_u64() { return engine_(); }

    template <class It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, engine_);
    }

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// 64-bit FNV-1a hash, used to derive stream ids from labels.
std::uint64_t stable_hash(std::string_view text);

/// Returns mu + L·z with z i.i.d. standard normal.
Vector gaussian_vector(RngStream& rng, std::span<const double> mu, const Matrix& chol_lower);

} // namespace neumiss
