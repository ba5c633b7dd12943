#include "diformer/encoder.hpp"

#include <cmath>

#include "diformer/weights.hpp"

namespace diformer {

nlohmann::json EncoderConfig::to_json() const {
    return {{"n_mels", n_mels},
            {"base_channels", base_channels},
            {"embed_dim", embed_dim},
            {"se_reduction", se_reduction}};
}

EncoderConfig EncoderConfig::from_json(const nlohmann::json &j) {
    EncoderConfig c;
    c.n_mels = j.at("n_mels").get<int>();
    c.base_channels = j.at("base_channels").get<int>();
    c.embed_dim = j.at("embed_dim").get<int>();
    c.se_reduction = j.at("se_reduction").get<int>();
    return c;
}

BatchNormState SpeakerEncoder::make_bn(const std::string &name, int channels) {
    BatchNormState bn;
    bn.gamma = &params_.add(name + ".gamma", Shape::vec(channels));
    bn.beta = &params_.add(name + ".beta", Shape::vec(channels));
    bn.running_mean = &params_.add(name + ".running_mean", Shape::vec(channels));
    bn.running_var = &params_.add(name + ".running_var", Shape::vec(channels));
    bn.running_mean->trainable = false;
    bn.running_var->trainable = false;
    init_const(*bn.gamma, 1.0);
    init_const(*bn.running_var, 1.0);
    return bn;
}

SpeakerEncoder::SpeakerEncoder(EncoderConfig cfg, uint64_t seed) : cfg_(cfg) {
    Rng rng(seed);
    int in_ch = 1;
    for (int i = 0; i < 4; ++i) {
        Block &b = blocks_[i];
        const std::string base = "block" + std::to_string(i + 1);
        b.in_ch = in_ch;
        b.out_ch = cfg_.block_channels(i);
        b.stride = i == 0 ? 1 : 2;

        b.conv1_w = &params_.add(base + ".conv1.w", Shape{b.out_ch, b.in_ch, 3, 3});
        b.conv1_b = &params_.add(base + ".conv1.b", Shape::vec(b.out_ch));
        init_fan_in(*b.conv1_w, rng, b.in_ch * 9);
        init_fan_in(*b.conv1_b, rng, b.in_ch * 9);
        b.conv2_w = &params_.add(base + ".conv2.w", Shape{b.out_ch, b.out_ch, 3, 3});
        b.conv2_b = &params_.add(base + ".conv2.b", Shape::vec(b.out_ch));
        init_fan_in(*b.conv2_w, rng, b.out_ch * 9);
        init_fan_in(*b.conv2_b, rng, b.out_ch * 9);
        b.bn1 = make_bn(base + ".bn1", b.out_ch);
        b.bn2 = make_bn(base + ".bn2", b.out_ch);
        if (b.stride != 1 || b.in_ch != b.out_ch) {
            b.skip_w = &params_.add(base + ".skip.w", Shape{b.out_ch, b.in_ch, 1, 1});
            b.skip_b = &params_.add(base + ".skip.b", Shape::vec(b.out_ch));
            init_fan_in(*b.skip_w, rng, b.in_ch);
            init_fan_in(*b.skip_b, rng, b.in_ch);
            b.bn_skip = make_bn(base + ".bn_skip", b.out_ch);
        }
        const int squeezed = std::max(1, b.out_ch / cfg_.se_reduction);
        b.se_fc1_w = &params_.add(base + ".se.fc1.w", Shape::mat(squeezed, b.out_ch));
        b.se_fc1_b = &params_.add(base + ".se.fc1.b", Shape::vec(squeezed));
        init_fan_in(*b.se_fc1_w, rng, b.out_ch);
        init_fan_in(*b.se_fc1_b, rng, b.out_ch);
        b.se_fc2_w = &params_.add(base + ".se.fc2.w", Shape::mat(b.out_ch, squeezed));
        b.se_fc2_b = &params_.add(base + ".se.fc2.b", Shape::vec(b.out_ch));
        init_fan_in(*b.se_fc2_w, rng, squeezed);
        init_fan_in(*b.se_fc2_b, rng, squeezed);

        in_ch = b.out_ch;
    }
    embed_w_ = &params_.add("embed.w", Shape::mat(cfg_.embed_dim, cfg_.utterance_in_dim()));
    embed_b_ = &params_.add("embed.b", Shape::vec(cfg_.embed_dim));
    Rng erng(hash_mix(seed, 0xabcdu));
    init_fan_in(*embed_w_, erng, cfg_.utterance_in_dim());
    init_fan_in(*embed_b_, erng, cfg_.utterance_in_dim());
}

void SpeakerEncoder::freeze() {
    params_.set_trainable(false);
    for (auto &b : blocks_) {
        b.bn1.frozen = true;
        b.bn2.frozen = true;
        b.bn_skip.frozen = true;
    }
    frozen_ = true;
}

Tensor SpeakerEncoder::input_tensor(Tape &tape, const LogMelSpectrogram &spec) const {
    if (spec.n_mels != cfg_.n_mels)
        throw ShapeError("encoder: spectrogram has " + std::to_string(spec.n_mels) +
                         " mel bins, config expects " + std::to_string(cfg_.n_mels));
    // Pad frames up to a multiple of 8 by repeating the last frame.
    const int frames = spec.frames;
    const int padded = ((frames + 7) / 8) * 8;
    std::vector<double> chw(static_cast<size_t>(cfg_.n_mels) * padded);
    for (int m = 0; m < cfg_.n_mels; ++m) {
        for (int f = 0; f < padded; ++f) {
            const int src = f < frames ? f : frames - 1;
            chw[static_cast<size_t>(m) * padded + f] = spec.at(src, m);
        }
    }
    return tape.constant(std::move(chw), Shape::chw(1, cfg_.n_mels, padded));
}

Tensor SpeakerEncoder::forward_block(Tape &tape, Tensor x, Block &b) {
    Tensor y = conv2d(x, tape.leaf(*b.conv1_w), tape.leaf(*b.conv1_b), b.stride, b.stride, 1);
    y = batch_norm2d(tape, y, b.bn1);
    y = relu(y);
    y = conv2d(y, tape.leaf(*b.conv2_w), tape.leaf(*b.conv2_b), 1, 1, 1);
    y = batch_norm2d(tape, y, b.bn2);

    // squeeze-and-excitation
    Tensor z = as_row(channel_mean(y));
    z = relu(linear(z, tape.leaf(*b.se_fc1_w), tape.leaf(*b.se_fc1_b)));
    z = sigmoid(linear(z, tape.leaf(*b.se_fc2_w), tape.leaf(*b.se_fc2_b)));
    y = mul_channel(y, reshape(z, Shape::vec(b.out_ch)));

    Tensor skip = x;
    if (b.skip_w) {
        skip = conv2d(x, tape.leaf(*b.skip_w), tape.leaf(*b.skip_b), b.stride, b.stride, 0);
        skip = batch_norm2d(tape, skip, b.bn_skip);
    }
    return relu(add(y, skip));
}

MultiScaleFeatures SpeakerEncoder::forward_multiscale(Tape &tape, const LogMelSpectrogram &spec) {
    Tensor x = input_tensor(tape, spec);
    x = forward_block(tape, x, blocks_[0]);
    x = forward_block(tape, x, blocks_[1]);
    Tensor x_h = forward_block(tape, x, blocks_[2]);
    Tensor x_l = forward_block(tape, x_h, blocks_[3]);
    MultiScaleFeatures ms;
    ms.x_h = x_h;
    ms.x_l = x_l;
    ms.t_m = x_h.shape()[2];
    return ms;
}

Tensor SpeakerEncoder::forward_utterance(Tape &tape, const LogMelSpectrogram &spec) {
    MultiScaleFeatures ms = forward_multiscale(tape, spec);
    Tensor frames = time_major_flatten(ms.x_l);       // (t_m/2, 4b·10)
    Tensor pooled = as_row(col_mean(frames));         // (1, 4b·10)
    Tensor emb = linear(pooled, tape.leaf(*embed_w_), tape.leaf(*embed_b_));
    return l2_normalize_rows(emb);
}

std::vector<double> SpeakerEncoder::encode_utterance(const LogMelSpectrogram &spec) {
    Tape tape(false);
    Tensor emb = forward_utterance(tape, spec);
    return emb.value();
}

void SpeakerEncoder::save(const std::string &path) const {
    WeightsArchive a;
    a.config = {{"kind", "speaker_encoder"}, {"encoder", cfg_.to_json()}};
    a.add_store("encoder.", params_);
    a.save(path);
}

std::unique_ptr<SpeakerEncoder> SpeakerEncoder::load(const std::string &path,
                                                     const EncoderConfig *expect) {
    WeightsArchive a = WeightsArchive::load(path);
    if (a.config.value("kind", "") != "speaker_encoder")
        throw Error("encoder: " + path + " is not an encoder archive");
    EncoderConfig cfg = EncoderConfig::from_json(a.config.at("encoder"));
    if (expect && !(cfg == *expect))
        throw Error("encoder: config in " + path + " does not match the expected configuration");
    auto enc = std::make_unique<SpeakerEncoder>(cfg, /*seed=*/0);
    a.load_store("encoder.", enc->params());
    return enc;
}

} // namespace diformer
