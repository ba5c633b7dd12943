#pragma once

#include <memory>
#include <string>

#include <json.hpp>

#include "diformer/encoder.hpp"
#include "diformer/fpn.hpp"
#include "diformer/heads.hpp"
#include "diformer/matching.hpp"
#include "diformer/transformer.hpp"

namespace diformer {

struct ModelConfig {
    int n_queries = 8;    // N
    int model_dim = 128;  // d
    int speaker_dim = 64; // D
    int num_heads = 4;
    int num_layers = 3;
    double head_dropout = 0.1;
    bool use_bilstm_t = true;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json &j);
    bool operator==(const ModelConfig &o) const = default;
};

struct ForwardResult {
    Tensor temporal; // t_m × c fused features
    Tensor memory;   // t_m × d
    Tensor slots;    // N × d
    HeadOutputs heads;
    int t_m = 0;
};

// Frozen speaker encoder → FPN fusion → transformer encoder-decoder →
// prediction heads. The encoder parameters live in their own store; only the
// model store is handed to the optimizer during diarization training.
class DiarizationModel {
public:
    DiarizationModel(std::shared_ptr<SpeakerEncoder> encoder, ModelConfig cfg, uint64_t seed);

    const ModelConfig &config() const { return cfg_; }
    ParamStore &params() { return params_; }
    SpeakerEncoder &encoder() { return *encoder_; }
    std::shared_ptr<SpeakerEncoder> encoder_ptr() { return encoder_; }
    TransformerCore &transformer() { return *transformer_; }
    PredictionHeads &heads() { return *heads_; }
    FpnFusion &fpn() { return *fpn_; }

    ForwardResult forward(Tape &tape, const LogMelSpectrogram &spec,
                          AttentionTrace *trace = nullptr);

    // Eval-mode forward returning plain values.
    PredictionSet predict(const LogMelSpectrogram &spec);

    static PredictionSet extract_prediction(const ForwardResult &fr);

    // Self-contained checkpoint: encoder + model weights, configs, and
    // optionally the optimizer moments (for resume).
    void save_checkpoint(const std::string &path, const nlohmann::json &run_config,
                         const Adam *opt_state = nullptr) const;
    struct Loaded {
        std::unique_ptr<DiarizationModel> model;
        nlohmann::json run_config;
        bool has_adam_state = false;
    };
    static Loaded load_checkpoint(const std::string &path);
    // Restores Adam moments saved alongside the checkpoint, if present.
    static void load_adam_state(const std::string &path, ParamStore &params);

private:
    ModelConfig cfg_;
    std::shared_ptr<SpeakerEncoder> encoder_;
    ParamStore params_;
    std::unique_ptr<FpnFusion> fpn_;
    std::unique_ptr<TransformerCore> transformer_;
    std::unique_ptr<PredictionHeads> heads_;
};

} // namespace diformer
