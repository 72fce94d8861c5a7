#pragma once

// NeuMiss forward pass written the other way round: the weight matrices are
// masked explicitly (rows and columns zeroed) and multiplied with full,
// unmasked vectors.

#include "neumiss/network.hpp"

namespace oracle_ref {

using neumiss::Index;
using neumiss::Matrix;
using neumiss::Vector;
using neumiss::net::NeuMissWeights;

inline double zeroed_weight_forward(const NeuMissWeights& w, const Vector& x, const Vector& m) {
    const Index d = w.dim();
    auto zero_out = [&](const Matrix& a, bool rows_missing) {
        Matrix b = a;
        for (Index i = 0; i < d; ++i)
            for (Index j = 0; j < d; ++j) {
                const bool row_keep = rows_missing ? m[i] == 1.0 : m[i] == 0.0;
                if (!row_keep || m[j] == 1.0) b(i, j) = 0.0;
            }
        return b;
    };
    auto full_matvec = [&](const Matrix& a, const Vector& v) {
        Vector out(d, 0.0);
        for (Index i = 0; i < d; ++i) {
            double s = 0.0;
            for (Index j = 0; j < d; ++j) s += a(i, j) * v[j];
            out[i] = s;
        }
        return out;
    };
    Vector x0 = x;
    for (Index j = 0; j < d; ++j)
        if (m[j] == 1.0) x0[j] = 0.0;
    Vector h0(d);
    for (Index j = 0; j < d; ++j) h0[j] = m[j] == 1.0 ? 0.0 : x0[j] - w.mu[j];
    Vector z = h0;
    if (w.depth >= 2) {
        z = full_matvec(zero_out(w.s0, false), h0);
        for (const auto& block : w.w_neu) {
            z = full_matvec(zero_out(block, false), z);
            if (w.residual)
                for (Index j = 0; j < d; ++j)
                    if (m[j] == 0.0) z[j] += h0[j];
        }
    }
    Vector u(d, 0.0);
    if (w.depth >= 1) u = full_matvec(zero_out(w.w_mix, true), z);
    Vector v = x0;
    for (Index j = 0; j < d; ++j)
        if (m[j] == 1.0) v[j] = w.mu[j] + u[j];
    return w.beta0 + neumiss::dot(w.beta, v);
}

} // namespace oracle_ref
