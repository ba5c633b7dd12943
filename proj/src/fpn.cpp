#include "diformer/fpn.hpp"

namespace diformer {

FpnFusion::FpnFusion(ParamStore &params, int high_channels, int low_channels, uint64_t seed)
    : high_ch_(high_channels), low_ch_(low_channels) {
    Rng rng(seed);
    lateral_w_ = &params.add("fpn.lateral.w", Shape{high_ch_, low_ch_, 1, 1});
    lateral_b_ = &params.add("fpn.lateral.b", Shape::vec(high_ch_));
    init_fan_in(*lateral_w_, rng, low_ch_);
    init_fan_in(*lateral_b_, rng, low_ch_);
    out_w_ = &params.add("fpn.out.w", Shape{high_ch_, 2 * high_ch_, 3, 3});
    out_b_ = &params.add("fpn.out.b", Shape::vec(high_ch_));
    init_fan_in(*out_w_, rng, 2 * high_ch_ * 9);
    init_fan_in(*out_b_, rng, 2 * high_ch_ * 9);

    bn_.gamma = &params.add("fpn.bn.gamma", Shape::vec(2 * high_ch_));
    bn_.beta = &params.add("fpn.bn.beta", Shape::vec(2 * high_ch_));
    bn_.running_mean = &params.add("fpn.bn.running_mean", Shape::vec(2 * high_ch_));
    bn_.running_var = &params.add("fpn.bn.running_var", Shape::vec(2 * high_ch_));
    bn_.running_mean->trainable = false;
    bn_.running_var->trainable = false;
    init_const(*bn_.gamma, 1.0);
    init_const(*bn_.running_var, 1.0);
}

Tensor FpnFusion::forward(Tape &tape, const MultiScaleFeatures &ms) {
    const Shape hs = ms.x_h.shape();
    const Shape ls = ms.x_l.shape();
    if (hs[0] != high_ch_ || ls[0] != low_ch_)
        throw ShapeError("fpn: channel mismatch, got x_h " + hs.str() + " x_l " + ls.str());
    Tensor up = upsample_nearest_2x(ms.x_l);
    const Shape us = up.shape();
    if (us[1] != hs[1] || us[2] != hs[2])
        throw ShapeError("fpn: upsampled x_l " + us.str() + " does not align with x_h " + hs.str() +
                         " (stride schedule misconfigured)");
    Tensor lat = conv2d(up, tape.leaf(*lateral_w_), tape.leaf(*lateral_b_), 1, 1, 0);
    Tensor cat = concat_channels(lat, ms.x_h);
    Tensor normed = batch_norm2d(tape, cat, bn_);
    Tensor fused = conv2d(normed, tape.leaf(*out_w_), tape.leaf(*out_b_), 1, 1, 1);
    return time_major_flatten(fused); // (t_m, C_h·F_h)
}

} // namespace diformer
