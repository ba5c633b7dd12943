#pragma once

#include <vector>

#include "diformer/tensor.hpp"

namespace diformer {

struct TransformerConfig {
    int input_dim = 640;  // c, flattened FPN width
    int model_dim = 128;  // d
    int num_heads = 4;
    int num_layers = 3; // encoder and decoder each
    int num_queries = 8; // N
    int ff_mult = 4;
    // Sinusoidal positions are added to the encoder input only; this switch
    // exists for the permutation-equivariance tests.
    bool positional_encoding = true;
};

// Row-stochastic attention maps captured during a forward pass.
struct AttentionTrace {
    struct Entry {
        int layer, head, rows, cols;
        std::vector<double> weights;
    };
    std::vector<Entry> encoder_self, decoder_self, decoder_cross;
};

// Pre-normalization transformer encoder-decoder. Both stacks have
// `num_layers` layers and a final layer norm; the decoder turns N learnable
// query embeddings into N slot vectors via self-attention over the queries
// and cross-attention to the encoded memory.
class TransformerCore {
public:
    TransformerCore(ParamStore &params, TransformerConfig cfg, uint64_t seed);

    const TransformerConfig &config() const { return cfg_; }

    // tf: (t_m, input_dim); projects to model_dim, adds positions, runs the
    // encoder stack. Throws InvalidInput when t_m == 0.
    Tensor encode(Tape &tape, Tensor tf, AttentionTrace *trace = nullptr);

    // q: (N', model_dim) — normally queries_leaf(tape), but any query matrix
    // of matching width is accepted (tests exercise duplicates and N'=1).
    Tensor decode(Tape &tape, Tensor q, Tensor memory, AttentionTrace *trace = nullptr);

    Tensor queries_leaf(Tape &tape) { return tape.leaf(*queries_); }

private:
    struct NormParams {
        Param *gamma, *beta;
    };
    struct MhaParams {
        NormParams ln;
        Param *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    };
    struct FfParams {
        NormParams ln;
        Param *w1, *b1, *w2, *b2;
    };
    struct EncoderLayer {
        MhaParams self;
        FfParams ff;
    };
    struct DecoderLayer {
        MhaParams self;
        MhaParams cross;
        FfParams ff;
    };

    NormParams make_norm(ParamStore &p, const std::string &name);
    MhaParams make_mha(ParamStore &p, const std::string &name, Rng &rng);
    FfParams make_ff(ParamStore &p, const std::string &name, Rng &rng);

    Tensor attention(Tape &tape, const MhaParams &m, Tensor x_q, Tensor x_kv, int layer,
                     std::vector<AttentionTrace::Entry> *sink);
    Tensor feed_forward(Tape &tape, const FfParams &f, Tensor x);
    Tensor norm(Tape &tape, const NormParams &n, Tensor x);

    TransformerConfig cfg_;
    Param *input_proj_w_ = nullptr, *input_proj_b_ = nullptr;
    Param *queries_ = nullptr;
    std::vector<EncoderLayer> enc_;
    std::vector<DecoderLayer> dec_;
    NormParams enc_final_{}, dec_final_{};
};

// frames × dim sinusoidal position table (interleaved sin/cos pairs).
std::vector<double> sinusoidal_positions(int frames, int dim);

} // namespace diformer
