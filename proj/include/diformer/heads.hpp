#pragma once

#include <string>

#include "diformer/tensor.hpp"

namespace diformer {

// Single-direction LSTM parameters (gate order i, f, g, o).
struct LstmParams {
    Param *w_ih, *w_hh, *bias;
    int hidden = 0;
};

struct BiLstmParams {
    LstmParams fwd, bwd;
};

// Runs an LSTM over the rows of seq (T × in), returning T × hidden.
Tensor lstm_forward(Tape &tape, const LstmParams &p, Tensor seq, bool reverse);
// Forward + backward directions concatenated on the feature axis (T × 2h).
Tensor bilstm_forward(Tape &tape, const BiLstmParams &p, Tensor seq);

// The sigmoid-bounded alignment rows attend to the temporal rows; a second
// sigmoid squashes the attention logits into (0,1) masks.
Tensor mask_attention_logits(Tensor alignment, Tensor temporal);

struct HeadsConfig {
    int model_dim = 128;   // d
    int speaker_dim = 64;  // D
    int temporal_in = 640; // c, FPN output width
    double dropout = 0.1;
    // BiLSTM-T can be ablated to measure its temporal smoothing effect.
    bool use_bilstm_t = true;
};

struct HeadOutputs {
    Tensor vad_logits;  // N × 2
    Tensor vad_probs;   // N × 2, rows sum to 1
    Tensor mask_logits; // N × t_m
    Tensor masks;       // N × t_m, entries in (0,1)
    Tensor embeddings;  // N × D, unit rows
};

// The three prediction streams: BiLSTM-smoothed mask attention, per-slot VAD
// distributions and unit speaker vectors.
class PredictionHeads {
public:
    PredictionHeads(ParamStore &params, HeadsConfig cfg, uint64_t seed);

    const HeadsConfig &config() const { return cfg_; }

    HeadOutputs forward(Tape &tape, Tensor slots, Tensor temporal_features);

    // Individual heads, exposed for targeted tests.
    Tensor mask_head(Tape &tape, Tensor slots, Tensor temporal_features); // logits N × t_m
    Tensor vad_head_logits(Tape &tape, Tensor slots);
    Tensor speaker_head(Tape &tape, Tensor slots);
    // Smoothed temporal features (t_m × d): projection, then BiLSTM-T unless
    // ablated by config.
    Tensor temporal_stream(Tape &tape, Tensor temporal_features);

private:
    LstmParams make_lstm(ParamStore &p, const std::string &name, int in_dim, int hidden, Rng &rng);

    HeadsConfig cfg_;
    Param *t_proj_w_, *t_proj_b_; // c → d
    BiLstmParams lstm_t_, lstm_q_;
    Param *mlp_w1_, *mlp_b1_, *mlp_w2_, *mlp_b2_; // alignment MLP (2 layers)
    Param *vad_w1_, *vad_b1_, *vad_w2_, *vad_b2_; // d → d → 2
    Param *spk_w_, *spk_b_;                       // d → D
};

} // namespace diformer
