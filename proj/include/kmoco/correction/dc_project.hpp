#pragma once

#include "kmoco/field/fft.hpp"
#include "kmoco/motion/types.hpp"

namespace kmoco {

/// Hard data consistency: keep the measured k-space on lines with mask 0,
/// take the network's k-space on lines with mask 1, transform back.
/// The result is complex in general; callers wanting a magnitude image
/// take |.| of it. Projecting the result again is a no-op.
inline ComplexImage hard_dc_project(const ComplexImage& pred, const KSpace& measured, const LineMask& mask) {
    require(pred.meta().same_grid(measured.meta()) && mask.ny() == measured.ny(), ErrorCategory::shape_mismatch,
            "hard_dc_project: prediction, k-space and mask grids differ");
    for (double v : mask.line_values)
        require(v == 0.0 || v == 1.0, ErrorCategory::invalid_argument, "hard_dc_project: mask must be binary");
    KSpace k = fft2c(pred);
    for (int y = 0; y < k.ny(); ++y) {
        if (mask[y] != 0.0) continue;
        auto src = measured.line(y);
        std::copy(src.begin(), src.end(), k.line(y).begin());
    }
    ComplexImage out = ifft2c_complex(k);
    return ComplexImage(pred.meta(), std::move(out.storage()));
}

inline ComplexImage hard_dc_project(const RealImage& pred, const KSpace& measured, const LineMask& mask) {
    return hard_dc_project(to_complex(pred), measured, mask);
}

} // namespace kmoco
