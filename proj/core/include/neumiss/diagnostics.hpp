#pragma once

#include "neumiss/mlp.hpp"
#include "neumiss/network.hpp"

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace neumiss::diag {

struct GradCheckResult {
    double max_rel_error = 0.0;
    Index n_params = 0;
    /// Block index and offset of the worst entry, as "block[k]".
    std::string worst;
};

// Central finite differences of ½(prediction − y)² against the backward pass.
// The relative error of each entry is |a − n| / max(|a|, |n|, 1e-6·(1 + max|a|)); the floor
// keeps finite-difference rounding on near-zero entries (about 1e-11·loss at
// eps = 1e-5) from dominating.
GradCheckResult check_neumiss_gradient(const net::NeuMissWeights& w, std::span<const double> x,
                                       std::span<const double> m, double y, double eps = 1e-5);
GradCheckResult check_mlp_gradient(const mlp::MlpWeights& w, std::span<const double> x,
                                   std::span<const double> m, double y, double eps = 1e-5);

struct VerifyItem {
    std::string name;
    bool passed = false;
    std::string detail;
    double seconds = 0.0;
};

struct VerifyReport {
    std::vector<VerifyItem> items;
    bool all_passed() const;
    void print(std::ostream& out) const;
};

/// Runs the Neumann bound checks, gradient checks, analytic-network
/// equivalence and ReLU construction on instances drawn from `seed`.
VerifyReport run_verify(std::uint64_t seed);

} // namespace neumiss::diag
