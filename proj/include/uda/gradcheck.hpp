#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace uda {

// Finite-difference verification of every differentiable op and of both
// composite losses (encoder/classifier total and discriminator total).
// The oracle side only evaluates forward passes: central differences with
// h = 1e-5 around randomized inputs in [-2, 2], resampled away from relu
// kinks and filter boundaries so the loss is smooth at the probe point.
struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t draws = 0;
};

struct GradCheckReport {
    std::vector<GradCheckResult> checks;
    double max_rel_err = 0.0;
};

GradCheckReport run_gradient_checks(std::uint64_t seed, std::size_t draws = 20);

}  // namespace uda
