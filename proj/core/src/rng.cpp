#include "neumiss/rng.hpp"

#include "neumiss/errors.hpp"

#include <algorithm>

namespace neumiss {

namespace {

std::mt19937_64 seeded_engine(std::uint64_t seed, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x6e65756du};
    return std::mt19937_64(seq);
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream_id)
    : seed_(seed), stream_id_(stream_id), engine_(seeded_engine(seed, stream_id)) {}

RngStream RngStream::child(std::uint64_t salt) const {
    return RngStream(seed_, splitmix(stream_id_ ^ splitmix(salt)));
}

double RngStream::uniform() { return std::generate_canonical<double, 53>(engine_); }

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RngStream::normal() { return normal_(engine_); }

bool RngStream::bernoulli(double p) { return uniform() < p; }

Index RngStream::uniform_index(Index n) {
    std::uniform_int_distribution<Index> dist(0, n - 1);
    return dist(engine_);
}

std::uint64_t stable_hash(std::string_view text) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Vector gaussian_vector(RngStream& rng, std::span<const double> mu, const Matrix& chol_lower) {
    const Index d = mu.size();
    if (chol_lower.rows() != d || chol_lower.cols() != d) {
        throw ShapeMismatch("gaussian_vector: factor shape does not match mean");
    }
    Vector z(d);
    for (auto& zi : z) zi = rng.normal();
    Vector out(mu.begin(), mu.end());
    for (Index i = 0; i < d; ++i) {
        auto r = chol_lower.row(i);
        for (Index k = 0; k <= i; ++k) out[i] += r[k] * z[k];
    }
    return out;
}

} // namespace neumiss
