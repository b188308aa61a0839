#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "deepclass/network.hpp"

namespace deepclass {

inline constexpr double kGradcheckStep = 1e-3;
inline constexpr double kGradcheckTolerance = 1e-4;

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-2 * max_j |n_j|, 1e-8).
double gradient_relative_error(std::span<const double> analytic, std::span<const double> numeric);

struct GradcheckResult {
    std::string op;
    std::size_t cases = 0;
    double max_error = 0;
    bool pass = false;
};

struct GradcheckReport {
    std::vector<GradcheckResult> results;

    bool all_pass() const;
    std::string render() const;
};

/// conv 4@3x3 (pad 1) -> 2x2 max-pool -> flatten -> dense 7 on a 3 x 8 x 8 input.
NetworkSpec reduced_spec();

/// Compares every analytic tensor-core gradient against central finite differences of a
/// 64-bit reference implementation, `cases_per_op` seeded random cases per op, plus
/// `network_cases` whole-network checks on reduced_spec().
GradcheckReport run_gradcheck(std::uint64_t seed, std::size_t cases_per_op = 50, std::size_t network_cases = 10);

}  // namespace deepclass
