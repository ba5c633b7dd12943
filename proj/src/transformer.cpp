#include "diformer/transformer.hpp"

#include <cmath>

namespace diformer {

std::vector<double> sinusoidal_positions(int frames, int dim) {
    std::vector<double> pe(static_cast<size_t>(frames) * dim, 0.0);
    for (int t = 0; t < frames; ++t) {
        for (int i = 0; i < dim / 2; ++i) {
            const double freq = std::pow(10000.0, -2.0 * i / dim);
            pe[static_cast<size_t>(t) * dim + 2 * i] = std::sin(t * freq);
            pe[static_cast<size_t>(t) * dim + 2 * i + 1] = std::cos(t * freq);
        }
    }
    return pe;
}

TransformerCore::NormParams TransformerCore::make_norm(ParamStore &p, const std::string &name) {
    NormParams n;
    n.gamma = &p.add(name + ".gamma", Shape::vec(cfg_.model_dim));
    n.beta = &p.add(name + ".beta", Shape::vec(cfg_.model_dim));
    init_const(*n.gamma, 1.0);
    return n;
}

TransformerCore::MhaParams TransformerCore::make_mha(ParamStore &p, const std::string &name,
                                                     Rng &rng) {
    MhaParams m;
    m.ln = make_norm(p, name + ".ln");
    const int d = cfg_.model_dim;
    auto lin = [&](const std::string &suffix, Param *&w, Param *&b) {
        w = &p.add(name + suffix + ".w", Shape::mat(d, d));
        b = &p.add(name + suffix + ".b", Shape::vec(d));
        init_fan_in(*w, rng, d);
        init_fan_in(*b, rng, d);
    };
    lin(".q", m.wq, m.bq);
    lin(".k", m.wk, m.bk);
    lin(".v", m.wv, m.bv);
    lin(".o", m.wo, m.bo);
    return m;
}

TransformerCore::FfParams TransformerCore::make_ff(ParamStore &p, const std::string &name,
                                                   Rng &rng) {
    FfParams f;
    f.ln = make_norm(p, name + ".ln");
    const int d = cfg_.model_dim, h = cfg_.model_dim * cfg_.ff_mult;
    f.w1 = &p.add(name + ".w1", Shape::mat(h, d));
    f.b1 = &p.add(name + ".b1", Shape::vec(h));
    init_fan_in(*f.w1, rng, d);
    init_fan_in(*f.b1, rng, d);
    f.w2 = &p.add(name + ".w2", Shape::mat(d, h));
    f.b2 = &p.add(name + ".b2", Shape::vec(d));
    init_fan_in(*f.w2, rng, h);
    init_fan_in(*f.b2, rng, h);
    return f;
}

TransformerCore::TransformerCore(ParamStore &params, TransformerConfig cfg, uint64_t seed)
    : cfg_(cfg) {
    if (cfg_.model_dim % cfg_.num_heads != 0)
        throw Error("transformer: model_dim must be divisible by num_heads");
    Rng rng(seed);
    if (cfg_.input_dim != cfg_.model_dim) {
        input_proj_w_ = &params.add("tf.input_proj.w", Shape::mat(cfg_.model_dim, cfg_.input_dim));
        input_proj_b_ = &params.add("tf.input_proj.b", Shape::vec(cfg_.model_dim));
        init_fan_in(*input_proj_w_, rng, cfg_.input_dim);
        init_fan_in(*input_proj_b_, rng, cfg_.input_dim);
    }
    queries_ = &params.add("tf.queries", Shape::mat(cfg_.num_queries, cfg_.model_dim));
    init_normal(*queries_, rng, 0.0, 0.02);

    for (int l = 0; l < cfg_.num_layers; ++l) {
        const std::string eb = "tf.enc" + std::to_string(l);
        EncoderLayer el;
        el.self = make_mha(params, eb + ".self", rng);
        el.ff = make_ff(params, eb + ".ff", rng);
        enc_.push_back(el);
        const std::string db = "tf.dec" + std::to_string(l);
        DecoderLayer dl;
        dl.self = make_mha(params, db + ".self", rng);
        dl.cross = make_mha(params, db + ".cross", rng);
        dl.ff = make_ff(params, db + ".ff", rng);
        dec_.push_back(dl);
    }
    enc_final_ = make_norm(params, "tf.enc_final_ln");
    dec_final_ = make_norm(params, "tf.dec_final_ln");
}

Tensor TransformerCore::norm(Tape &tape, const NormParams &n, Tensor x) {
    return layer_norm_rows(x, tape.leaf(*n.gamma), tape.leaf(*n.beta));
}

Tensor TransformerCore::attention(Tape &tape, const MhaParams &m, Tensor x_q, Tensor x_kv,
                                  int layer, std::vector<AttentionTrace::Entry> *sink) {
    Tensor h_q = norm(tape, m.ln, x_q);
    // Self-attention normalizes keys/values with the same pre-norm; cross
    // attention consumes the encoder memory as-is (it carries a final norm).
    Tensor h_kv = (x_kv.id() == x_q.id() && x_kv.tape() == x_q.tape()) ? h_q : x_kv;
    Tensor q = linear(h_q, tape.leaf(*m.wq), tape.leaf(*m.bq));
    Tensor k = linear(h_kv, tape.leaf(*m.wk), tape.leaf(*m.bk));
    Tensor v = linear(h_kv, tape.leaf(*m.wv), tape.leaf(*m.bv));

    const int d = cfg_.model_dim;
    const int dh = d / cfg_.num_heads;
    std::vector<Tensor> heads;
    heads.reserve(cfg_.num_heads);
    for (int h = 0; h < cfg_.num_heads; ++h) {
        Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
        Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
        Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
        Tensor scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        Tensor attn = softmax_rows(scores);
        if (sink) {
            AttentionTrace::Entry e;
            e.layer = layer;
            e.head = h;
            e.rows = attn.shape().rows();
            e.cols = attn.shape().cols();
            e.weights = attn.value();
            sink->push_back(std::move(e));
        }
        heads.push_back(matmul(attn, vh));
    }
    Tensor out = linear(concat_cols(heads), tape.leaf(*m.wo), tape.leaf(*m.bo));
    return add(x_q, out);
}

Tensor TransformerCore::feed_forward(Tape &tape, const FfParams &f, Tensor x) {
    Tensor h = norm(tape, f.ln, x);
    h = relu(linear(h, tape.leaf(*f.w1), tape.leaf(*f.b1)));
    h = linear(h, tape.leaf(*f.w2), tape.leaf(*f.b2));
    return add(x, h);
}

Tensor TransformerCore::encode(Tape &tape, Tensor tf, AttentionTrace *trace) {
    if (tf.shape().rank != 2 || tf.shape().rows() == 0)
        throw InvalidInput("transformer encode: empty temporal sequence");
    if (tf.shape().cols() != cfg_.input_dim)
        throw ShapeError("transformer encode: input width " + tf.shape().str() + ", expected " +
                         std::to_string(cfg_.input_dim) + " columns");
    Tensor x = tf;
    if (input_proj_w_) x = linear(x, tape.leaf(*input_proj_w_), tape.leaf(*input_proj_b_));
    if (cfg_.positional_encoding) {
        const int t_m = x.shape().rows();
        Tensor pe = tape.constant(sinusoidal_positions(t_m, cfg_.model_dim),
                                  Shape::mat(t_m, cfg_.model_dim));
        x = add(x, pe);
    }
    for (int l = 0; l < cfg_.num_layers; ++l) {
        x = attention(tape, enc_[l].self, x, x, l, trace ? &trace->encoder_self : nullptr);
        x = feed_forward(tape, enc_[l].ff, x);
    }
    return norm(tape, enc_final_, x);
}

Tensor TransformerCore::decode(Tape &tape, Tensor q, Tensor memory, AttentionTrace *trace) {
    if (q.shape().cols() != cfg_.model_dim || memory.shape().cols() != cfg_.model_dim)
        throw ShapeError("transformer decode: width mismatch");
    Tensor x = q;
    for (int l = 0; l < cfg_.num_layers; ++l) {
        x = attention(tape, dec_[l].self, x, x, l, trace ? &trace->decoder_self : nullptr);
        x = attention(tape, dec_[l].cross, x, memory, l,
                      trace ? &trace->decoder_cross : nullptr);
        x = feed_forward(tape, dec_[l].ff, x);
    }
    return norm(tape, dec_final_, x);
}

} // namespace diformer
