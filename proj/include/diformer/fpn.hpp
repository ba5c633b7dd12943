#pragma once

#include "diformer/encoder.hpp"
#include "diformer/tensor.hpp"

namespace diformer {

// Fuses the encoder taps: the low-resolution map is upsampled ×2 (nearest
// neighbor), aligned to the high-resolution channel count by a 1×1 conv,
// concatenated with x_h, batch-normalized and reduced by a 3×3 conv, i.e.
// x = conv(bn(cat[conv(x_l↑), x_h])). The result is flattened over (channel,
// frequency) and permuted to t_m × c with c = C_h · F_h.
class FpnFusion {
public:
    FpnFusion(ParamStore &params, int high_channels, int low_channels, uint64_t seed);

    // ms shapes must obey the encoder stride schedule; a mismatch after
    // upsampling throws ShapeError.
    Tensor forward(Tape &tape, const MultiScaleFeatures &ms);

    int out_width(int freq_bins_high) const { return high_ch_ * freq_bins_high; }

private:
    int high_ch_, low_ch_;
    Param *lateral_w_, *lateral_b_; // 1×1, C_l → C_h
    Param *out_w_, *out_b_;         // 3×3, 2·C_h → C_h
    BatchNormState bn_;
};

} // namespace diformer
