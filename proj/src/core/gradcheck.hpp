#pragma once

// Finite-difference verification of every analytic gradient in the library:
// each differentiable layer on random instances, then the full
// image-to-loss pipeline on a tiny double-precision model.
//
// Layer checks use central differences with h = 1e-5 and must agree to a
// relative error below 1e-6; the end-to-end check uses h = 1e-9 and 1e-5.
// Relative error is |analytic - fd| / max(|analytic|, |fd|, 1).
//
// Kinked functions (relu, L1 loss) are checked at points a guard band away
// from their kinks, where the derivative is well defined.  The end-to-end
// instance is redrawn until every pre-activation clears a guard band, so the
// finite-difference step can never cross a relu kink.

#include <cstdint>
#include <string>
#include <vector>

namespace ltew {

struct GradCheckEntry {
    std::string name;
    double rel_error = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

struct GradCheckResult {
    std::vector<GradCheckEntry> entries;
    bool all_pass = true;

    // One line per entry plus a summary line, suitable for a terminal.
    std::string report() const;
};

GradCheckResult run_grad_checks(uint64_t seed);

}  // namespace ltew
