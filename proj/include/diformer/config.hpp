#pragma once

#include <string>

#include <json.hpp>

#include "diformer/encoder.hpp"
#include "diformer/matching.hpp"
#include "diformer/model.hpp"

namespace diformer {

// Resolved run configuration. Two built-in profiles:
//   desk      — N=8,  d=128, D=64,  encoder base 16, 4 s windows (CPU-friendly)
//   reference — N=22, d=512, D=256, encoder base 64, 12 s windows
// The config file is flat "key = value" text; unknown keys are an error.
struct RunConfig {
    std::string profile = "desk";

    // model dims
    int n_queries = 8;
    int model_dim = 128;
    int speaker_dim = 64;
    int num_heads = 4;
    int num_layers = 3;
    int encoder_base = 16;
    double window_sec = 4.0;
    bool use_bilstm_t = true;

    // loss
    double alpha = 1.0;
    double beta = 0.1;
    bool use_dice = false;

    // optimization (step decay: lr × 0.1 at each third of total_steps)
    double lr = 1e-4;
    int total_steps = 2000;
    int batch_size = 1;
    int checkpoint_every = 500;
    uint64_t seed = 0;

    // scene synthesis
    int scene_count = 100;
    int scene_speakers_min = 1;
    int scene_speakers_max = 3;
    double scene_overlap = 0.15;
    double scene_turn_min = 0.8;
    double scene_turn_max = 2.0;
    double scene_pause_mean = 0.25;

    // encoder pretraining
    int pretrain_speakers = 64;
    int pretrain_clips = 12; // per speaker (last two held out)
    int pretrain_epochs = 8;
    double pretrain_clip_sec = 1.5;
    double pretrain_lr = 1e-3;

    // inference / stitching
    double stitch_threshold = 0.4;
    double vad_threshold = 0.5;
    double mask_threshold = 0.5;

    static RunConfig desk_profile();
    static RunConfig reference_profile();

    // Applies one "key = value" assignment; throws ParseError on unknown keys
    // or bad values.
    void set(const std::string &key, const std::string &value);
    static RunConfig from_file(const std::string &path);
    // Full resolved key/value dump (the config echo written next to outputs).
    std::string to_flat() const;
    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json &j);

    EncoderConfig encoder_config() const;
    ModelConfig model_config() const;
    LossWeights loss_weights() const;
};

} // namespace diformer
