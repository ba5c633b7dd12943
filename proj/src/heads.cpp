#include "diformer/heads.hpp"

namespace diformer {

Tensor lstm_forward(Tape &tape, const LstmParams &p, Tensor seq, bool reverse) {
    const int T = seq.shape().rows();
    const int h = p.hidden;
    Tensor in = reverse ? reverse_rows(seq) : seq;
    Tensor w_ih = tape.leaf(*p.w_ih);
    Tensor w_hh = tape.leaf(*p.w_hh);
    Tensor bias = tape.leaf(*p.bias);
    Tensor h_prev = tape.zeros(Shape::mat(1, h));
    Tensor c_prev = tape.zeros(Shape::mat(1, h));
    std::vector<Tensor> outputs;
    outputs.reserve(T);
    for (int t = 0; t < T; ++t) {
        Tensor x_t = slice_rows(in, t, t + 1);
        Tensor gates = add_rowvec(add(matmul_nt(x_t, w_ih), matmul_nt(h_prev, w_hh)), bias);
        Tensor i_g = sigmoid(slice_cols(gates, 0, h));
        Tensor f_g = sigmoid(slice_cols(gates, h, 2 * h));
        Tensor g_g = tanh_op(slice_cols(gates, 2 * h, 3 * h));
        Tensor o_g = sigmoid(slice_cols(gates, 3 * h, 4 * h));
        c_prev = add(mul(f_g, c_prev), mul(i_g, g_g));
        h_prev = mul(o_g, tanh_op(c_prev));
        outputs.push_back(h_prev);
    }
    Tensor out = concat_rows(outputs);
    return reverse ? reverse_rows(out) : out;
}

Tensor bilstm_forward(Tape &tape, const BiLstmParams &p, Tensor seq) {
    Tensor f = lstm_forward(tape, p.fwd, seq, false);
    Tensor b = lstm_forward(tape, p.bwd, seq, true);
    return concat_cols({f, b});
}

Tensor mask_attention_logits(Tensor alignment, Tensor temporal) {
    return matmul_nt(alignment, temporal); // (N,d)·(t_m,d)ᵀ
}

LstmParams PredictionHeads::make_lstm(ParamStore &p, const std::string &name, int in_dim,
                                      int hidden, Rng &rng) {
    LstmParams l;
    l.hidden = hidden;
    l.w_ih = &p.add(name + ".w_ih", Shape::mat(4 * hidden, in_dim));
    l.w_hh = &p.add(name + ".w_hh", Shape::mat(4 * hidden, hidden));
    l.bias = &p.add(name + ".bias", Shape::vec(4 * hidden));
    init_fan_in(*l.w_ih, rng, hidden);
    init_fan_in(*l.w_hh, rng, hidden);
    init_fan_in(*l.bias, rng, hidden);
    return l;
}

PredictionHeads::PredictionHeads(ParamStore &params, HeadsConfig cfg, uint64_t seed) : cfg_(cfg) {
    if (cfg_.model_dim % 2 != 0) throw Error("heads: model_dim must be even for the BiLSTMs");
    Rng rng(seed);
    const int d = cfg_.model_dim;
    const int h = d / 2; // per direction, so the concatenated output stays d

    t_proj_w_ = &params.add("heads.t_proj.w", Shape::mat(d, cfg_.temporal_in));
    t_proj_b_ = &params.add("heads.t_proj.b", Shape::vec(d));
    init_fan_in(*t_proj_w_, rng, cfg_.temporal_in);
    init_fan_in(*t_proj_b_, rng, cfg_.temporal_in);

    lstm_t_.fwd = make_lstm(params, "heads.lstm_t.fwd", d, h, rng);
    lstm_t_.bwd = make_lstm(params, "heads.lstm_t.bwd", d, h, rng);
    lstm_q_.fwd = make_lstm(params, "heads.lstm_q.fwd", d, h, rng);
    lstm_q_.bwd = make_lstm(params, "heads.lstm_q.bwd", d, h, rng);

    mlp_w1_ = &params.add("heads.mlp.w1", Shape::mat(d, d));
    mlp_b1_ = &params.add("heads.mlp.b1", Shape::vec(d));
    mlp_w2_ = &params.add("heads.mlp.w2", Shape::mat(d, d));
    mlp_b2_ = &params.add("heads.mlp.b2", Shape::vec(d));
    init_fan_in(*mlp_w1_, rng, d);
    init_fan_in(*mlp_b1_, rng, d);
    init_fan_in(*mlp_w2_, rng, d);
    init_fan_in(*mlp_b2_, rng, d);

    vad_w1_ = &params.add("heads.vad.w1", Shape::mat(d, d));
    vad_b1_ = &params.add("heads.vad.b1", Shape::vec(d));
    vad_w2_ = &params.add("heads.vad.w2", Shape::mat(2, d));
    vad_b2_ = &params.add("heads.vad.b2", Shape::vec(2));
    init_fan_in(*vad_w1_, rng, d);
    init_fan_in(*vad_b1_, rng, d);
    init_fan_in(*vad_w2_, rng, d);
    init_fan_in(*vad_b2_, rng, d);

    spk_w_ = &params.add("heads.spk.w", Shape::mat(cfg_.speaker_dim, d));
    spk_b_ = &params.add("heads.spk.b", Shape::vec(cfg_.speaker_dim));
    init_fan_in(*spk_w_, rng, d);
    init_fan_in(*spk_b_, rng, d);
}

Tensor PredictionHeads::temporal_stream(Tape &tape, Tensor temporal_features) {
    Tensor t = linear(temporal_features, tape.leaf(*t_proj_w_), tape.leaf(*t_proj_b_));
    if (!cfg_.use_bilstm_t) return t;
    t = dropout(t, cfg_.dropout);
    return bilstm_forward(tape, lstm_t_, t);
}

Tensor PredictionHeads::mask_head(Tape &tape, Tensor slots, Tensor temporal_features) {
    Tensor temporal = temporal_stream(tape, temporal_features);
    Tensor q = dropout(slots, cfg_.dropout);
    q = bilstm_forward(tape, lstm_q_, q);
    q = relu(linear(q, tape.leaf(*mlp_w1_), tape.leaf(*mlp_b1_)));
    q = linear(q, tape.leaf(*mlp_w2_), tape.leaf(*mlp_b2_));
    Tensor alignment = sigmoid(q);
    return mask_attention_logits(alignment, temporal);
}

Tensor PredictionHeads::vad_head_logits(Tape &tape, Tensor slots) {
    Tensor h = relu(linear(slots, tape.leaf(*vad_w1_), tape.leaf(*vad_b1_)));
    return linear(h, tape.leaf(*vad_w2_), tape.leaf(*vad_b2_));
}

Tensor PredictionHeads::speaker_head(Tape &tape, Tensor slots) {
    Tensor e = linear(slots, tape.leaf(*spk_w_), tape.leaf(*spk_b_));
    return l2_normalize_rows(e, 1e-8);
}

HeadOutputs PredictionHeads::forward(Tape &tape, Tensor slots, Tensor temporal_features) {
    HeadOutputs out;
    out.mask_logits = mask_head(tape, slots, temporal_features);
    out.masks = sigmoid(out.mask_logits);
    out.vad_logits = vad_head_logits(tape, slots);
    out.vad_probs = softmax_rows(out.vad_logits);
    out.embeddings = speaker_head(tape, slots);
    return out;
}

} // namespace diformer
