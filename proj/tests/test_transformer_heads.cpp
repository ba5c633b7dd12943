#include <doctest.h>

#include <cmath>

#include "diformer/heads.hpp"
#include "diformer/transformer.hpp"
#include "test_support.hpp"

using namespace diformer;

namespace {

TransformerConfig tiny_tf(int input_dim = 12, int d = 8, int heads = 2, int n = 3) {
    TransformerConfig c;
    c.input_dim = input_dim;
    c.model_dim = d;
    c.num_heads = heads;
    c.num_queries = n;
    c.num_layers = 3;
    return c;
}

std::vector<double> gaussian_vec(Rng &rng, int64_t n, double s = 1.0) {
    std::vector<double> v(n);
    for (auto &x : v) x = rng.gaussian(0.0, s);
    return v;
}

} // namespace

TEST_CASE("transformer: encode/decode shapes and finiteness") {
    ParamStore ps;
    TransformerCore tf(ps, tiny_tf(), 21);
    Tape tape(false);
    Rng rng(22);
    Tensor in = tape.constant(gaussian_vec(rng, 20 * 12), Shape::mat(20, 12));
    Tensor mem = tf.encode(tape, in);
    CHECK(mem.shape() == Shape::mat(20, 8));
    Tensor slots = tf.decode(tape, tf.queries_leaf(tape), mem);
    CHECK(slots.shape() == Shape::mat(3, 8));
    for (double v : slots.value()) CHECK(std::isfinite(v));
}

TEST_CASE("transformer: t_m = 1 works, attention over one token is a point mass") {
    ParamStore ps;
    TransformerCore tf(ps, tiny_tf(), 23);
    Tape tape(false);
    Rng rng(24);
    AttentionTrace trace;
    Tensor in = tape.constant(gaussian_vec(rng, 12), Shape::mat(1, 12));
    Tensor mem = tf.encode(tape, in, &trace);
    CHECK(mem.shape() == Shape::mat(1, 8));
    for (const auto &e : trace.encoder_self) {
        CHECK(e.cols == 1);
        for (double w : e.weights) CHECK(w == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK_THROWS_AS(tf.encode(tape, tape.constant({}, Shape::mat(0, 12))), InvalidInput);
}

TEST_CASE("transformer: attention rows sum to one") {
    ParamStore ps;
    TransformerCore tf(ps, tiny_tf(), 25);
    Tape tape(false);
    Rng rng(26);
    AttentionTrace trace;
    Tensor in = tape.constant(gaussian_vec(rng, 15 * 12), Shape::mat(15, 12));
    Tensor mem = tf.encode(tape, in, &trace);
    Tensor slots = tf.decode(tape, tf.queries_leaf(tape), mem, &trace);
    (void)slots;
    REQUIRE(!trace.encoder_self.empty());
    REQUIRE(!trace.decoder_cross.empty());
    auto check_rows = [](const std::vector<AttentionTrace::Entry> &entries) {
        for (const auto &e : entries) {
            for (int r = 0; r < e.rows; ++r) {
                double s = 0.0;
                for (int c = 0; c < e.cols; ++c) s += e.weights[r * e.cols + c];
                CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
            }
        }
    };
    check_rows(trace.encoder_self);
    check_rows(trace.decoder_self);
    check_rows(trace.decoder_cross);
}

TEST_CASE("transformer: time permutation equivariance without positions") {
    TransformerConfig cfg = tiny_tf();
    cfg.positional_encoding = false; // test-only switch
    ParamStore ps;
    TransformerCore tf(ps, cfg, 27);
    Rng rng(28);
    const int t = 9;
    auto data = gaussian_vec(rng, t * 12);

    Tape t1(false);
    Tensor mem1 = tf.encode(t1, t1.constant(data, Shape::mat(t, 12)));

    // rotate rows by 4
    std::vector<double> rotated(data.size());
    for (int r = 0; r < t; ++r)
        std::copy(data.begin() + ((r + 4) % t) * 12, data.begin() + ((r + 4) % t + 1) * 12,
                  rotated.begin() + r * 12);
    Tape t2(false);
    Tensor mem2 = tf.encode(t2, t2.constant(rotated, Shape::mat(t, 12)));

    for (int r = 0; r < t; ++r)
        for (int c = 0; c < 8; ++c)
            CHECK(mem2.value()[r * 8 + c] ==
                  doctest::Approx(mem1.value()[((r + 4) % t) * 8 + c]).epsilon(1e-9));

    // with positions enabled the outputs must differ
    ParamStore ps3;
    TransformerConfig cfg3 = tiny_tf();
    TransformerCore tf3(ps3, cfg3, 27);
    Tape t3(false), t4(false);
    Tensor a = tf3.encode(t3, t3.constant(data, Shape::mat(t, 12)));
    Tensor b = tf3.encode(t4, t4.constant(rotated, Shape::mat(t, 12)));
    double diff = 0.0;
    for (int r = 0; r < t; ++r)
        for (int c = 0; c < 8; ++c)
            diff += std::fabs(b.value()[r * 8 + c] - a.value()[((r + 4) % t) * 8 + c]);
    CHECK(diff > 1e-3);
}

TEST_CASE("transformer: query permutation equivariance and duplicate queries") {
    ParamStore ps;
    TransformerCore tf(ps, tiny_tf(), 29);
    Rng rng(30);
    auto mem_data = gaussian_vec(rng, 10 * 8);
    auto q_data = gaussian_vec(rng, 4 * 8);

    Tape t1(false);
    Tensor mem1 = t1.constant(mem_data, Shape::mat(10, 8));
    Tensor out1 = tf.decode(t1, t1.constant(q_data, Shape::mat(4, 8)), mem1);

    // reverse query order
    std::vector<double> rev(q_data.size());
    for (int r = 0; r < 4; ++r)
        std::copy(q_data.begin() + (3 - r) * 8, q_data.begin() + (4 - r) * 8, rev.begin() + r * 8);
    Tape t2(false);
    Tensor mem2 = t2.constant(mem_data, Shape::mat(10, 8));
    Tensor out2 = tf.decode(t2, t2.constant(rev, Shape::mat(4, 8)), mem2);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 8; ++c)
            CHECK(out2.value()[r * 8 + c] ==
                  doctest::Approx(out1.value()[(3 - r) * 8 + c]).epsilon(1e-9));

    // duplicate queries decode to duplicate rows
    std::vector<double> dup(q_data);
    std::copy(dup.begin(), dup.begin() + 8, dup.begin() + 8);
    Tape t3(false);
    Tensor mem3 = t3.constant(mem_data, Shape::mat(10, 8));
    Tensor out3 = tf.decode(t3, t3.constant(dup, Shape::mat(4, 8)), mem3);
    for (int c = 0; c < 8; ++c)
        CHECK(out3.value()[c] == doctest::Approx(out3.value()[8 + c]).epsilon(1e-12));
}

TEST_CASE("transformer: full encode-decode gradient check on a tiny config") {
    Rng rng(31);
    auto data = gaussian_vec(rng, 5 * 12);
    auto build = [&](ParamStore &store, std::vector<double> *g, const std::string &pname,
                     const std::vector<double> *pval) {
        TransformerCore tf(store, tiny_tf(), 33);
        if (pval) store.find(pname).value = *pval;
        Tape tape(false);
        Tensor in = tape.constant(data, Shape::mat(5, 12));
        Tensor slots = tf.decode(tape, tf.queries_leaf(tape), tf.encode(tape, in));
        Tensor loss = mean_all(mul(slots, slots));
        if (g) {
            tape.backward(loss);
            *g = store.find(pname).grad;
        }
        return loss.item();
    };
    // spot-check a few parameters across the stacks
    for (const std::string pname :
         {"tf.input_proj.w", "tf.queries", "tf.enc1.self.q.w", "tf.dec0.cross.v.w",
          "tf.dec2.ff.w1", "tf.enc_final_ln.gamma"}) {
        ParamStore ps;
        std::vector<double> g;
        build(ps, &g, pname, nullptr);
        const std::vector<double> pval = ps.find(pname).value;
        const double err = testsup::max_rel_grad_error(
            pval,
            [&](const std::vector<double> &x) {
                ParamStore ps2;
                return build(ps2, nullptr, pname, &x);
            },
            g);
        CHECK(err < 1e-3);
    }
}

TEST_CASE("heads: prediction invariants hold in train and eval mode") {
    ParamStore ps;
    HeadsConfig cfg;
    cfg.model_dim = 16;
    cfg.speaker_dim = 6;
    cfg.temporal_in = 24;
    PredictionHeads heads(ps, cfg, 41);
    Rng rng(42);
    const int n = 5, t_m = 13;
    auto slots_data = gaussian_vec(rng, n * 16);
    auto temp_data = gaussian_vec(rng, t_m * 24);

    for (bool train : {false, true}) {
        Tape tape(train);
        Rng drng(7);
        tape.set_rng(&drng);
        Tensor slots = tape.constant(slots_data, Shape::mat(n, 16));
        Tensor temporal = tape.constant(temp_data, Shape::mat(t_m, 24));
        HeadOutputs out = heads.forward(tape, slots, temporal);
        CHECK(out.masks.shape() == Shape::mat(n, t_m));
        CHECK(out.vad_probs.shape() == Shape::mat(n, 2));
        CHECK(out.embeddings.shape() == Shape::mat(n, 6));
        for (int i = 0; i < n; ++i) {
            CHECK(out.vad_probs.value()[2 * i] + out.vad_probs.value()[2 * i + 1] ==
                  doctest::Approx(1.0).epsilon(1e-6));
            double norm = 0.0;
            for (int k = 0; k < 6; ++k) {
                const double v = out.embeddings.value()[i * 6 + k];
                norm += v * v;
            }
            CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
        }
        for (double m : out.masks.value()) {
            CHECK(m > 0.0);
            CHECK(m < 1.0);
        }
    }
}

TEST_CASE("heads: eval deterministic, train stochastic via dropout") {
    ParamStore ps;
    HeadsConfig cfg;
    cfg.model_dim = 16;
    cfg.speaker_dim = 6;
    cfg.temporal_in = 24;
    PredictionHeads heads(ps, cfg, 43);
    Rng rng(44);
    const int n = 4, t_m = 9;
    auto slots_data = gaussian_vec(rng, n * 16);
    auto temp_data = gaussian_vec(rng, t_m * 24);

    auto run = [&](bool train, uint64_t seed) {
        Tape tape(train);
        Rng drng(seed);
        tape.set_rng(&drng);
        Tensor slots = tape.constant(slots_data, Shape::mat(n, 16));
        Tensor temporal = tape.constant(temp_data, Shape::mat(t_m, 24));
        return heads.forward(tape, slots, temporal).masks.value();
    };
    CHECK(run(false, 1) == run(false, 2));  // eval: bit-identical
    CHECK(run(true, 1) != run(false, 1));   // dropout changes the forward
    CHECK(run(true, 1) != run(true, 2));    // and depends on the draw
}

TEST_CASE("heads: zeroed final vad layer yields uniform distributions") {
    ParamStore ps;
    HeadsConfig cfg;
    cfg.model_dim = 16;
    cfg.speaker_dim = 6;
    cfg.temporal_in = 24;
    PredictionHeads heads(ps, cfg, 45);
    init_const(ps.find("heads.vad.w2"), 0.0);
    init_const(ps.find("heads.vad.b2"), 0.0);
    Tape tape(false);
    Rng rng(46);
    Tensor slots = tape.constant(gaussian_vec(rng, 3 * 16), Shape::mat(3, 16));
    Tensor probs = softmax_rows(heads.vad_head_logits(tape, slots));
    for (double p : probs.value()) CHECK(p == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("heads: orthogonal alignment row gives a constant 0.5 mask row") {
    Tape tape(false);
    Rng rng(47);
    // alignment row 0 is all zeros → orthogonal to every temporal vector
    std::vector<double> align(2 * 4, 0.0);
    for (int c = 0; c < 4; ++c) align[4 + c] = rng.gaussian();
    Tensor a = tape.constant(align, Shape::mat(2, 4));
    Tensor t = tape.constant(gaussian_vec(rng, 6 * 4), Shape::mat(6, 4));
    Tensor masks = sigmoid(mask_attention_logits(a, t));
    for (int f = 0; f < 6; ++f) CHECK(masks.value()[f] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("heads: duplicate slots give duplicate embeddings") {
    ParamStore ps;
    HeadsConfig cfg;
    cfg.model_dim = 16;
    cfg.speaker_dim = 6;
    cfg.temporal_in = 24;
    PredictionHeads heads(ps, cfg, 48);
    Tape tape(false);
    Rng rng(49);
    auto row = gaussian_vec(rng, 16);
    std::vector<double> slots_data;
    slots_data.insert(slots_data.end(), row.begin(), row.end());
    slots_data.insert(slots_data.end(), row.begin(), row.end());
    Tensor slots = tape.constant(slots_data, Shape::mat(2, 16));
    Tensor emb = heads.speaker_head(tape, slots);
    for (int k = 0; k < 6; ++k)
        CHECK(emb.value()[k] == doctest::Approx(emb.value()[6 + k]).epsilon(1e-12));
}

TEST_CASE("heads: BiLSTM-T smoothing reduces frame-to-frame mask variation (smoke)") {
    const int n = 3, t_m = 40, c = 10;
    double with_sum = 0.0, without_sum = 0.0;
    for (uint64_t seed = 0; seed < 10; ++seed) {
        Rng rng(900 + seed);
        auto slots_data = gaussian_vec(rng, n * 16);
        auto temp_data = gaussian_vec(rng, t_m * c); // white noise in time
        for (bool use_t : {true, false}) {
            ParamStore ps;
            HeadsConfig cfg;
            cfg.model_dim = 16;
            cfg.speaker_dim = 6;
            cfg.temporal_in = c;
            cfg.use_bilstm_t = use_t;
            PredictionHeads heads(ps, cfg, 50 + seed);
            Tape tape(false);
            Tensor slots = tape.constant(slots_data, Shape::mat(n, 16));
            Tensor temporal = tape.constant(temp_data, Shape::mat(t_m, c));
            const auto masks = heads.forward(tape, slots, temporal).masks.value();
            double tv = 0.0;
            for (int i = 0; i < n; ++i)
                for (int f = 0; f + 1 < t_m; ++f)
                    tv += std::fabs(masks[i * t_m + f + 1] - masks[i * t_m + f]);
            (use_t ? with_sum : without_sum) += tv / (n * (t_m - 1));
        }
    }
    CHECK(with_sum < without_sum);
}
