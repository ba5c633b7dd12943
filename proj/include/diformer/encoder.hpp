#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "diformer/features.hpp"
#include "diformer/tensor.hpp"

namespace diformer {

// Residual convolutional speaker encoder with squeeze-and-excitation blocks.
// Four blocks; the last three halve the mel-frequency and time dimensions.
// Channel schedule is {base, base, 2·base, 4·base}, so the taps expose
// x_h = 2·base × 20 × t_m (block 3) and x_l = 4·base × 10 × t_m/2 (block 4),
// with t_m = spectrogram frames / 4.
struct EncoderConfig {
    int n_mels = 80;
    int base_channels = 16;
    int embed_dim = 64; // D
    int se_reduction = 8;

    int block_channels(int block) const { // block in [0,4)
        static const int mult[4] = {1, 1, 2, 4};
        return base_channels * mult[block];
    }
    int tap_high_channels() const { return block_channels(2); }
    int tap_low_channels() const { return block_channels(3); }
    int utterance_in_dim() const { return tap_low_channels() * (n_mels / 8); }

    nlohmann::json to_json() const;
    static EncoderConfig from_json(const nlohmann::json &j);
    bool operator==(const EncoderConfig &o) const = default;
};

struct MultiScaleFeatures {
    Tensor x_h; // (2b, n_mels/4, t_m)
    Tensor x_l; // (4b, n_mels/8, t_m/2)
    int t_m = 0;
};

class SpeakerEncoder {
public:
    SpeakerEncoder(EncoderConfig cfg, uint64_t seed);

    const EncoderConfig &config() const { return cfg_; }
    ParamStore &params() { return params_; }
    const ParamStore &params() const { return params_; }

    // After freeze(): parameters stop receiving gradients and batch-norm
    // always normalizes with running statistics.
    void freeze();
    bool frozen() const { return frozen_; }

    // Taps for the FPN. Frames are edge-padded to a multiple of 8 internally.
    MultiScaleFeatures forward_multiscale(Tape &tape, const LogMelSpectrogram &spec);
    // Unit-norm utterance embedding node, shape (1, D).
    Tensor forward_utterance(Tape &tape, const LogMelSpectrogram &spec);

    // Eval-mode convenience: plain D-dimensional unit vector.
    std::vector<double> encode_utterance(const LogMelSpectrogram &spec);

    void save(const std::string &path) const;
    // Throws Error when the stored config disagrees with `expect` (pass
    // nullptr to accept whatever the file declares).
    static std::unique_ptr<SpeakerEncoder> load(const std::string &path,
                                                const EncoderConfig *expect = nullptr);

private:
    struct Block {
        Param *conv1_w, *conv1_b;
        Param *conv2_w, *conv2_b;
        Param *skip_w = nullptr, *skip_b = nullptr;
        BatchNormState bn1, bn2, bn_skip;
        Param *se_fc1_w, *se_fc1_b;
        Param *se_fc2_w, *se_fc2_b;
        int stride = 1;
        int in_ch = 0, out_ch = 0;
    };

    Tensor forward_block(Tape &tape, Tensor x, Block &b);
    Tensor input_tensor(Tape &tape, const LogMelSpectrogram &spec) const;
    BatchNormState make_bn(const std::string &name, int channels);

    EncoderConfig cfg_;
    ParamStore params_;
    Block blocks_[4];
    Param *embed_w_ = nullptr;
    Param *embed_b_ = nullptr;
    bool frozen_ = false;
};

} // namespace diformer
