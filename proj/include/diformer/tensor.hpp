#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <memory>
#include <string>
#include <vector>

#include "diformer/common.hpp"

namespace diformer {

// ─── Shapes ─────────────────────────────────────────────────────────────────

struct Shape {
    std::array<int, 4> d{1, 1, 1, 1};
    int rank = 0;

    Shape() = default;
    Shape(std::initializer_list<int> dims) {
        rank = static_cast<int>(dims.size());
        int i = 0;
        for (int v : dims) d[i++] = v;
    }
    static Shape scalar() { return Shape{1}; }
    static Shape vec(int n) { return Shape{n}; }
    static Shape mat(int r, int c) { return Shape{r, c}; }
    static Shape chw(int c, int h, int w) { return Shape{c, h, w}; }

    int64_t numel() const {
        int64_t n = 1;
        for (int i = 0; i < rank; ++i) n *= d[i];
        return rank == 0 ? 0 : n;
    }
    int operator[](int i) const { return d[i]; }
    bool operator==(const Shape &o) const { return rank == o.rank && d == o.d; }
    bool operator!=(const Shape &o) const { return !(*this == o); }
    // Matrix accessors (rank 2)
    int rows() const { return d[0]; }
    int cols() const { return rank >= 2 ? d[1] : 1; }
    std::string str() const;
};

// ─── Parameters ─────────────────────────────────────────────────────────────

struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> adam_m, adam_v; // allocated on first optimizer step
    bool trainable = true;              // false: leaf nodes carry no gradient

    int64_t numel() const { return shape.numel(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

class ParamStore {
public:
    Param &add(const std::string &name, Shape shape);
    Param &find(const std::string &name);
    const Param *find_ptr(const std::string &name) const;
    std::vector<std::unique_ptr<Param>> &all() { return params_; }
    const std::vector<std::unique_ptr<Param>> &all() const { return params_; }
    void zero_grads();
    void set_trainable(bool t);
    int64_t total_params() const;
    // FNV-1a over the float32 serialization of every parameter, in order.
    uint64_t checksum() const;

private:
    std::vector<std::unique_ptr<Param>> params_;
};

// Initializers
void init_uniform(Param &p, Rng &rng, double lo, double hi);
void init_normal(Param &p, Rng &rng, double mean, double stddev);
void init_const(Param &p, double v);
// Torch-style fan-in uniform: U(-1/sqrt(fan_in), 1/sqrt(fan_in))
void init_fan_in(Param &p, Rng &rng, int fan_in);

// ─── Tape & tensors ─────────────────────────────────────────────────────────
//
// Reverse-mode tape. Every op appends a node holding its value and a backward
// closure; backward() walks the tape in reverse creation order. Nodes whose
// inputs carry no gradient are skipped entirely, so frozen-parameter forward
// passes cost no gradient memory.

class Tape;

class Tensor {
public:
    Tensor() = default;
    Tensor(Tape *tape, int id) : tape_(tape), id_(id) {}

    bool valid() const { return tape_ != nullptr; }
    int id() const { return id_; }
    Tape *tape() const { return tape_; }

    const Shape &shape() const;
    const std::vector<double> &value() const;
    // Scalar convenience (rank-1 single element)
    double item() const;

private:
    Tape *tape_ = nullptr;
    int id_ = -1;
};

struct BatchNormState {
    Param *gamma = nullptr;
    Param *beta = nullptr;
    Param *running_mean = nullptr; // non-trainable buffers
    Param *running_var = nullptr;
    double momentum = 0.1;
    double eps = 1e-5;
    // A frozen layer always normalizes with its running estimates, even when
    // the surrounding tape is in training mode.
    bool frozen = false;
};

class Tape {
public:
    explicit Tape(bool training = false) : training_(training) {}

    bool training() const { return training_; }
    void set_rng(Rng *rng) { rng_ = rng; }
    Rng *rng() const { return rng_; }

    Tensor leaf(Param &p);
    Tensor constant(std::vector<double> v, Shape s);
    Tensor constant_scalar(double v) { return constant({v}, Shape::scalar()); }
    Tensor zeros(Shape s) { return constant(std::vector<double>(s.numel(), 0.0), s); }

    void backward(Tensor loss);

    size_t num_nodes() const { return nodes_.size(); }

    // ── internal node access (used by op implementations) ──
    struct Node {
        Shape shape;
        std::vector<double> value;
        std::vector<double> grad; // allocated iff needs_grad
        std::function<void()> back;
        bool needs_grad = false;
    };
    Node &node(int id) { return nodes_[id]; }
    const Node &node(int id) const { return nodes_[id]; }
    int new_node(Shape s, bool needs_grad);

private:
    // deque: node references stay valid while the tape grows
    std::deque<Node> nodes_;
    bool training_ = false;
    Rng *rng_ = nullptr;
};

// ─── Ops ────────────────────────────────────────────────────────────────────

// Elementwise (same shape)
Tensor add(Tensor a, Tensor b);
Tensor sub(Tensor a, Tensor b);
Tensor mul(Tensor a, Tensor b);
Tensor scale(Tensor a, double s);
Tensor add_scalar(Tensor a, double s);
Tensor neg(Tensor a);

// Broadcast helpers for rank-2 operands
Tensor add_rowvec(Tensor m, Tensor v); // v: (C), added to every row of (R,C)
Tensor mul_colvec(Tensor m, Tensor v); // v: (R), scales row i by v[i]

// Matrix products; all operands rank-2 row-major
Tensor matmul(Tensor a, Tensor b);    // (R,K)·(K,C)
Tensor matmul_nt(Tensor a, Tensor b); // (R,K)·(C,K)ᵀ → (R,C)

// Linear layer y = x·Wᵀ + b with W stored (out, in), b (out); b optional
Tensor linear(Tensor x, Tensor w, Tensor b);

// Unary
Tensor sigmoid(Tensor a);
Tensor tanh_op(Tensor a);
Tensor relu(Tensor a);
Tensor sqrt_op(Tensor a);      // sqrt(max(x, 0))
Tensor reciprocal(Tensor a);   // 1/x

// Reductions / layout
Tensor sum_all(Tensor a);   // → scalar
Tensor mean_all(Tensor a);  // → scalar
Tensor row_sum(Tensor a);   // (R,C) → (R)
Tensor col_mean(Tensor a);  // (R,C) → (C)
Tensor slice_rows(Tensor a, int r0, int r1);
Tensor slice_cols(Tensor a, int c0, int c1);
Tensor concat_rows(const std::vector<Tensor> &parts);
Tensor concat_cols(const std::vector<Tensor> &parts);
Tensor reverse_rows(Tensor a);
Tensor transpose(Tensor a);
Tensor reshape(Tensor a, Shape s); // same numel, row-major reinterpretation
inline Tensor as_row(Tensor a) { return reshape(a, Shape::mat(1, static_cast<int>(a.shape().numel()))); }

// Rows of (R,C) normalized: softmax / log-softmax
Tensor softmax_rows(Tensor a);
Tensor log_softmax_rows(Tensor a);
// Rows scaled to unit L2 norm; denominator is (‖row‖ + eps) so zero rows map
// to zero instead of NaN.
Tensor l2_normalize_rows(Tensor a, double eps = 1e-8);
// LayerNorm over each row with affine params gamma, beta of size (C)
Tensor layer_norm_rows(Tensor a, Tensor gamma, Tensor beta, double eps = 1e-5);

// Elementwise binary cross-entropy from logits against constant targets in
// [0,1]: softplus(x) − x·y, numerically stable; reduce with mean_all/sum_all.
Tensor bce_with_logits(Tensor logits, Tensor targets);

// Inverted dropout; identity in eval mode. Uses the tape RNG.
Tensor dropout(Tensor a, double rate);

// ── Rank-3 (C,H,W) ops ──
Tensor conv2d(Tensor x, Tensor w, Tensor b, int stride_h, int stride_w, int pad);
Tensor batch_norm2d(Tape &tape, Tensor x, BatchNormState &bn);
Tensor upsample_nearest_2x(Tensor x);
Tensor concat_channels(Tensor a, Tensor b);
Tensor channel_mean(Tensor x);            // (C,H,W) → (C), mean over H·W
Tensor mul_channel(Tensor x, Tensor s);   // scale channel c by s[c]
Tensor time_major_flatten(Tensor x);      // (C,H,W) → (W, C·H)

// ─── Optimizer ──────────────────────────────────────────────────────────────

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
    // Applies accumulated gradients and zeroes them. lr_scale multiplies the
    // base learning rate (step-decay schedules pass powers of 0.1 here).
    void step(ParamStore &params, double lr_scale = 1.0);
    int64_t steps_done() const { return t_; }
    void set_steps_done(int64_t t) { t_ = t; }
    const AdamConfig &config() const { return cfg_; }

private:
    AdamConfig cfg_;
    int64_t t_ = 0;
};

// ─── Raw GEMM (used by ops; exposed for tests) ──────────────────────────────
// C (M×N) = op(A)·op(B) with row-major storage; accumulate adds into C.
void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const double *a, const double *b, double *c, bool accumulate);

} // namespace diformer
