#include "diformer/tensor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace diformer {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

std::string Shape::str() const {
    std::ostringstream os;
    os << "(";
    for (int i = 0; i < rank; ++i) os << (i ? "," : "") << d[i];
    os << ")";
    return os.str();
}

// ─── ParamStore ─────────────────────────────────────────────────────────────

Param &ParamStore::add(const std::string &name, Shape shape) {
    for (auto &p : params_) {
        if (p->name == name) throw Error("duplicate parameter name: " + name);
    }
    auto p = std::make_unique<Param>();
    p->name = name;
    p->shape = shape;
    p->value.assign(shape.numel(), 0.0);
    p->grad.assign(shape.numel(), 0.0);
    params_.push_back(std::move(p));
    return *params_.back();
}

Param &ParamStore::find(const std::string &name) {
    for (auto &p : params_) {
        if (p->name == name) return *p;
    }
    throw Error("parameter not found: " + name);
}

const Param *ParamStore::find_ptr(const std::string &name) const {
    for (auto &p : params_) {
        if (p->name == name) return p.get();
    }
    return nullptr;
}

void ParamStore::zero_grads() {
    for (auto &p : params_) p->zero_grad();
}

void ParamStore::set_trainable(bool t) {
    for (auto &p : params_) p->trainable = t;
}

int64_t ParamStore::total_params() const {
    int64_t n = 0;
    for (auto &p : params_) n += p->numel();
    return n;
}

uint64_t ParamStore::checksum() const {
    uint64_t h = 1469598103934665603ull;
    for (auto &p : params_) {
        h = hash_mix(h, hash_string(p->name));
        for (double d : p->value) {
            const float f = static_cast<float>(d);
            uint32_t bits;
            std::memcpy(&bits, &f, sizeof(bits));
            h ^= bits;
            h *= 1099511628211ull;
        }
    }
    return h;
}

void init_uniform(Param &p, Rng &rng, double lo, double hi) {
    for (auto &v : p.value) v = rng.uniform(lo, hi);
}

void init_normal(Param &p, Rng &rng, double mean, double stddev) {
    for (auto &v : p.value) v = rng.gaussian(mean, stddev);
}

void init_const(Param &p, double v) {
    std::fill(p.value.begin(), p.value.end(), v);
}

void init_fan_in(Param &p, Rng &rng, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
    init_uniform(p, rng, -bound, bound);
}

// ─── GEMM ───────────────────────────────────────────────────────────────────

void gemm(bool trans_a, bool trans_b, int m, int n, int k,
          const double *a, const double *b, double *c, bool accumulate) {
    if (m == 0 || n == 0) return;
    if (k == 0) {
        if (!accumulate) std::fill(c, c + static_cast<int64_t>(m) * n, 0.0);
        return;
    }
    // Small products are cheaper without thread handoff.
    const int64_t work = static_cast<int64_t>(m) * n * k;
    auto body = [&](int64_t r0, int64_t r1) {
        const int rows = static_cast<int>(r1 - r0);
        MapMat C(c + r0 * n, rows, n);
        CMapMat A(a, trans_a ? k : m, trans_a ? m : k);
        CMapMat B(b, trans_b ? n : k, trans_b ? k : n);
        if (!trans_a && !trans_b) {
            if (accumulate) C.noalias() += A.middleRows(r0, rows) * B;
            else            C.noalias() = A.middleRows(r0, rows) * B;
        } else if (!trans_a && trans_b) {
            if (accumulate) C.noalias() += A.middleRows(r0, rows) * B.transpose();
            else            C.noalias() = A.middleRows(r0, rows) * B.transpose();
        } else if (trans_a && !trans_b) {
            if (accumulate) C.noalias() += A.middleCols(r0, rows).transpose() * B;
            else            C.noalias() = A.middleCols(r0, rows).transpose() * B;
        } else {
            if (accumulate) C.noalias() += A.middleCols(r0, rows).transpose() * B.transpose();
            else            C.noalias() = A.middleCols(r0, rows).transpose() * B.transpose();
        }
    };
    if (work < (1 << 16) || num_threads() <= 1) {
        body(0, m);
    } else {
        parallel_for(m, body);
    }
}

// ─── Tape ───────────────────────────────────────────────────────────────────

int Tape::new_node(Shape s, bool needs_grad) {
    Node nd;
    nd.shape = s;
    nd.value.assign(s.numel(), 0.0);
    nd.needs_grad = needs_grad;
    if (needs_grad) nd.grad.assign(s.numel(), 0.0);
    nodes_.push_back(std::move(nd));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(Param &p) {
    const int id = new_node(p.shape, p.trainable);
    nodes_[id].value = p.value;
    if (p.trainable) {
        Param *pp = &p;
        Tape *t = this;
        nodes_[id].back = [t, id, pp] {
            const auto &g = t->node(id).grad;
            for (size_t i = 0; i < g.size(); ++i) pp->grad[i] += g[i];
        };
    }
    return Tensor(this, id);
}

Tensor Tape::constant(std::vector<double> v, Shape s) {
    if (static_cast<int64_t>(v.size()) != s.numel())
        throw ShapeError("constant: data size " + std::to_string(v.size()) +
                         " does not match shape " + s.str());
    const int id = new_node(s, false);
    nodes_[id].value = std::move(v);
    return Tensor(this, id);
}

void Tape::backward(Tensor loss) {
    if (loss.tape() != this) throw Error("backward: tensor from another tape");
    Node &ln = nodes_[loss.id()];
    if (ln.shape.numel() != 1) throw Error("backward: loss must be scalar");
    if (!ln.needs_grad) return; // nothing trainable upstream
    ln.grad[0] = 1.0;
    for (int i = loss.id(); i >= 0; --i) {
        Node &nd = nodes_[i];
        if (nd.needs_grad && nd.back) nd.back();
    }
}

const Shape &Tensor::shape() const { return tape_->node(id_).shape; }
const std::vector<double> &Tensor::value() const { return tape_->node(id_).value; }
double Tensor::item() const {
    const auto &v = value();
    if (v.size() != 1) throw Error("item(): tensor is not scalar");
    return v[0];
}

// ─── Op helpers ─────────────────────────────────────────────────────────────

namespace {

Tape *same_tape(Tensor a, Tensor b) {
    if (a.tape() != b.tape()) throw Error("op: operands from different tapes");
    return a.tape();
}

bool any_grad(Tape *t, std::initializer_list<int> ids) {
    for (int id : ids) {
        if (t->node(id).needs_grad) return true;
    }
    return false;
}

// Accumulate src into the gradient buffer of node id if it participates.
void acc_grad(Tape *t, int id, const double *src, int64_t n) {
    auto &nd = t->node(id);
    if (!nd.needs_grad) return;
    for (int64_t i = 0; i < n; ++i) nd.grad[i] += src[i];
}

} // namespace

// ─── Elementwise ────────────────────────────────────────────────────────────

Tensor add(Tensor a, Tensor b) {
    Tape *t = same_tape(a, b);
    if (a.shape() != b.shape()) throw ShapeError("add: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    const int ia = a.id(), ib = b.id();
    const int out = t->new_node(a.shape(), any_grad(t, {ia, ib}));
    auto &o = t->node(out);
    const auto &va = t->node(ia).value;
    const auto &vb = t->node(ib).value;
    for (size_t i = 0; i < o.value.size(); ++i) o.value[i] = va[i] + vb[i];
    if (o.needs_grad) {
        o.back = [t, out, ia, ib] {
            const auto &g = t->node(out).grad;
            acc_grad(t, ia, g.data(), static_cast<int64_t>(g.size()));
            acc_grad(t, ib, g.data(), static_cast<int64_t>(g.size()));
        };
    }
    return Tensor(t, out);
}

Tensor sub(Tensor a, Tensor b) { return add(a, scale(b, -1.0)); }

Tensor mul(Tensor a, Tensor b) {
    Tape *t = same_tape(a, b);
    if (a.shape() != b.shape()) throw ShapeError("mul: shape mismatch " + a.shape().str() + " vs " + b.shape().str());
    const int ia = a.id(), ib = b.id();
    const int out = t->new_node(a.shape(), any_grad(t, {ia, ib}));
    auto &o = t->node(out);
    {
        const auto &va = t->node(ia).value;
        const auto &vb = t->node(ib).value;
        for (size_t i = 0; i < o.value.size(); ++i) o.value[i] = va[i] * vb[i];
    }
    if (o.needs_grad) {
        o.back = [t, out, ia, ib] {
            const auto &g = t->node(out).grad;
            const auto &va = t->node(ia).value;
            const auto &vb = t->node(ib).value;
            auto &na = t->node(ia);
            auto &nb = t->node(ib);
            for (size_t i = 0; i < g.size(); ++i) {
                if (na.needs_grad) na.grad[i] += g[i] * vb[i];
                if (nb.needs_grad) nb.grad[i] += g[i] * va[i];
            }
        };
    }
    return Tensor(t, out);
}

Tensor scale(Tensor a, double s) {
    Tape *t = a.tape();
    const int ia = a.id();
    const int out = t->new_node(a.shape(), t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &va = t->node(ia).value;
    for (size_t i = 0; i < o.value.size(); ++i) o.value[i] = va[i] * s;
    if (o.needs_grad) {
        o.back = [t, out, ia, s] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            for (size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * s;
        };
    }
    return Tensor(t, out);
}

Tensor add_scalar(Tensor a, double s) {
    Tape *t = a.tape();
    const int ia = a.id();
    const int out = t->new_node(a.shape(), t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &va = t->node(ia).value;
    for (size_t i = 0; i < o.value.size(); ++i) o.value[i] = va[i] + s;
    if (o.needs_grad) {
        o.back = [t, out, ia] {
            const auto &g = t->node(out).grad;
            acc_grad(t, ia, g.data(), static_cast<int64_t>(g.size()));
        };
    }
    return Tensor(t, out);
}

Tensor neg(Tensor a) { return scale(a, -1.0); }

Tensor add_rowvec(Tensor m, Tensor v) {
    Tape *t = same_tape(m, v);
    const int im = m.id(), iv = v.id();
    const Shape &ms = m.shape();
    if (ms.rank != 2 || v.shape().numel() != ms.cols())
        throw ShapeError("add_rowvec: want (R,C) + (C)");
    const int R = ms.rows(), C = ms.cols();
    const int out = t->new_node(ms, any_grad(t, {im, iv}));
    auto &o = t->node(out);
    {
        const auto &vm = t->node(im).value;
        const auto &vv = t->node(iv).value;
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) o.value[r * C + c] = vm[r * C + c] + vv[c];
    }
    if (o.needs_grad) {
        o.back = [t, out, im, iv, R, C] {
            const auto &g = t->node(out).grad;
            auto &nm = t->node(im);
            auto &nv = t->node(iv);
            if (nm.needs_grad)
                for (size_t i = 0; i < g.size(); ++i) nm.grad[i] += g[i];
            if (nv.needs_grad)
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < C; ++c) nv.grad[c] += g[r * C + c];
        };
    }
    return Tensor(t, out);
}

Tensor mul_colvec(Tensor m, Tensor v) {
    Tape *t = same_tape(m, v);
    const int im = m.id(), iv = v.id();
    const Shape &ms = m.shape();
    if (ms.rank != 2 || v.shape().numel() != ms.rows())
        throw ShapeError("mul_colvec: want (R,C) * (R)");
    const int R = ms.rows(), C = ms.cols();
    const int out = t->new_node(ms, any_grad(t, {im, iv}));
    auto &o = t->node(out);
    {
        const auto &vm = t->node(im).value;
        const auto &vv = t->node(iv).value;
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < C; ++c) o.value[r * C + c] = vm[r * C + c] * vv[r];
    }
    if (o.needs_grad) {
        o.back = [t, out, im, iv, R, C] {
            const auto &g = t->node(out).grad;
            const auto &vm = t->node(im).value;
            const auto &vv = t->node(iv).value;
            auto &nm = t->node(im);
            auto &nv = t->node(iv);
            for (int r = 0; r < R; ++r) {
                for (int c = 0; c < C; ++c) {
                    if (nm.needs_grad) nm.grad[r * C + c] += g[r * C + c] * vv[r];
                    if (nv.needs_grad) nv.grad[r] += g[r * C + c] * vm[r * C + c];
                }
            }
        };
    }
    return Tensor(t, out);
}

// ─── Matrix products ────────────────────────────────────────────────────────

namespace {

Tensor matmul_impl(Tensor a, Tensor b, bool transpose_b) {
    Tape *t = same_tape(a, b);
    const Shape &sa = a.shape(), &sb = b.shape();
    if (sa.rank != 2 || sb.rank != 2) throw ShapeError("matmul: rank-2 operands required");
    const int M = sa.rows(), K = sa.cols();
    const int N = transpose_b ? sb.rows() : sb.cols();
    const int Kb = transpose_b ? sb.cols() : sb.rows();
    if (K != Kb)
        throw ShapeError("matmul: inner dims " + sa.str() + " vs " + sb.str());
    const int ia = a.id(), ib = b.id();
    const int out = t->new_node(Shape::mat(M, N), any_grad(t, {ia, ib}));
    auto &o = t->node(out);
    gemm(false, transpose_b, M, N, K, t->node(ia).value.data(), t->node(ib).value.data(),
         o.value.data(), false);
    if (o.needs_grad) {
        o.back = [t, out, ia, ib, M, N, K, transpose_b] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            auto &nb = t->node(ib);
            if (!transpose_b) {
                // dA += G·Bᵀ ; dB += Aᵀ·G
                if (na.needs_grad)
                    gemm(false, true, M, K, N, g.data(), t->node(ib).value.data(), na.grad.data(), true);
                if (nb.needs_grad)
                    gemm(true, false, K, N, M, t->node(ia).value.data(), g.data(), nb.grad.data(), true);
            } else {
                // y = A·Bᵀ with B (N,K): dA += G·B ; dB += Gᵀ·A
                if (na.needs_grad)
                    gemm(false, false, M, K, N, g.data(), t->node(ib).value.data(), na.grad.data(), true);
                if (nb.needs_grad)
                    gemm(true, false, N, K, M, g.data(), t->node(ia).value.data(), nb.grad.data(), true);
            }
        };
    }
    return Tensor(t, out);
}

} // namespace

Tensor matmul(Tensor a, Tensor b) { return matmul_impl(a, b, false); }
Tensor matmul_nt(Tensor a, Tensor b) { return matmul_impl(a, b, true); }

Tensor linear(Tensor x, Tensor w, Tensor b) {
    Tensor y = matmul_nt(x, w);
    if (b.valid()) y = add_rowvec(y, b);
    return y;
}

// ─── Unary ──────────────────────────────────────────────────────────────────

namespace {

template <typename F, typename DF>
Tensor unary_op(Tensor a, F fwd, DF dfd, const char * /*name*/) {
    Tape *t = a.tape();
    const int ia = a.id();
    const int out = t->new_node(a.shape(), t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &va = t->node(ia).value;
    for (size_t i = 0; i < o.value.size(); ++i) o.value[i] = fwd(va[i]);
    if (o.needs_grad) {
        o.back = [t, out, ia, dfd] {
            const auto &g = t->node(out).grad;
            const auto &y = t->node(out).value;
            const auto &x = t->node(ia).value;
            auto &na = t->node(ia);
            for (size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * dfd(x[i], y[i]);
        };
    }
    return Tensor(t, out);
}

} // namespace

Tensor sigmoid(Tensor a) {
    return unary_op(
        a,
        [](double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); },
        [](double, double y) { return y * (1.0 - y); }, "sigmoid");
}

Tensor tanh_op(Tensor a) {
    return unary_op(a, [](double x) { return std::tanh(x); },
                    [](double, double y) { return 1.0 - y * y; }, "tanh");
}

Tensor relu(Tensor a) {
    return unary_op(a, [](double x) { return x > 0 ? x : 0.0; },
                    [](double x, double) { return x > 0 ? 1.0 : 0.0; }, "relu");
}

Tensor sqrt_op(Tensor a) {
    return unary_op(a, [](double x) { return std::sqrt(x > 0 ? x : 0.0); },
                    [](double x, double y) { return x > 0 ? 0.5 / y : 0.0; }, "sqrt");
}

Tensor reciprocal(Tensor a) {
    return unary_op(a, [](double x) { return 1.0 / x; },
                    [](double, double y) { return -y * y; }, "reciprocal");
}

// ─── Reductions & layout ────────────────────────────────────────────────────

Tensor sum_all(Tensor a) {
    Tape *t = a.tape();
    const int ia = a.id();
    const int out = t->new_node(Shape::scalar(), t->node(ia).needs_grad);
    auto &o = t->node(out);
    double s = 0.0;
    for (double v : t->node(ia).value) s += v;
    o.value[0] = s;
    if (o.needs_grad) {
        o.back = [t, out, ia] {
            const double g = t->node(out).grad[0];
            auto &na = t->node(ia);
            for (auto &gd : na.grad) gd += g;
        };
    }
    return Tensor(t, out);
}

Tensor mean_all(Tensor a) {
    const double n = static_cast<double>(a.shape().numel());
    return scale(sum_all(a), 1.0 / n);
}

Tensor row_sum(Tensor a) {
    Tape *t = a.tape();
    const int ia = a.id();
    const Shape &s = a.shape();
    if (s.rank != 2) throw ShapeError("row_sum: rank-2 required");
    const int R = s.rows(), C = s.cols();
    const int out = t->new_node(Shape::vec(R), t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ia).value;
    for (int r = 0; r < R; ++r) {
        double acc = 0.0;
        for (int c = 0; c < C; ++c) acc += v[r * C + c];
        o.value[r] = acc;
    }
    if (o.needs_grad) {
        o.back = [t, out, ia, R, C] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) na.grad[r * C + c] += g[r];
        };
    }
    return Tensor(t, out);
}

Tensor col_mean(Tensor a) {
    Tape *t = a.tape();
    const int ia = a.id();
    const Shape &s = a.shape();
    if (s.rank != 2) throw ShapeError("col_mean: rank-2 required");
    const int R = s.rows(), C = s.cols();
    const int out = t->new_node(Shape::vec(C), t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ia).value;
    for (int c = 0; c < C; ++c) {
        double acc = 0.0;
        for (int r = 0; r < R; ++r) acc += v[r * C + c];
        o.value[c] = acc / R;
    }
    if (o.needs_grad) {
        o.back = [t, out, ia, R, C] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) na.grad[r * C + c] += g[c] / R;
        };
    }
    return Tensor(t, out);
}

Tensor slice_rows(Tensor a, int r0, int r1) {
    Tape *t = a.tape();
    const int ia = a.id();
    const Shape &s = a.shape();
    if (s.rank != 2 || r0 < 0 || r1 > s.rows() || r0 >= r1)
        throw ShapeError("slice_rows: bad range");
    const int C = s.cols(), R = r1 - r0;
    const int out = t->new_node(Shape::mat(R, C), t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ia).value;
    std::copy(v.begin() + static_cast<int64_t>(r0) * C, v.begin() + static_cast<int64_t>(r1) * C,
              o.value.begin());
    if (o.needs_grad) {
        o.back = [t, out, ia, r0, R, C] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) na.grad[(r0 + r) * C + c] += g[r * C + c];
        };
    }
    return Tensor(t, out);
}

Tensor slice_cols(Tensor a, int c0, int c1) {
    Tape *t = a.tape();
    const int ia = a.id();
    const Shape &s = a.shape();
    if (s.rank != 2 || c0 < 0 || c1 > s.cols() || c0 >= c1)
        throw ShapeError("slice_cols: bad range");
    const int R = s.rows(), C = s.cols(), W = c1 - c0;
    const int out = t->new_node(Shape::mat(R, W), t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ia).value;
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < W; ++c) o.value[r * W + c] = v[r * C + c0 + c];
    if (o.needs_grad) {
        o.back = [t, out, ia, c0, R, C, W] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < W; ++c) na.grad[r * C + c0 + c] += g[r * W + c];
        };
    }
    return Tensor(t, out);
}

Tensor concat_rows(const std::vector<Tensor> &parts) {
    if (parts.empty()) throw ShapeError("concat_rows: empty");
    Tape *t = parts[0].tape();
    const int C = parts[0].shape().cols();
    int R = 0;
    bool grad = false;
    for (const auto &p : parts) {
        if (p.tape() != t) throw Error("concat_rows: mixed tapes");
        if (p.shape().rank != 2 || p.shape().cols() != C) throw ShapeError("concat_rows: col mismatch");
        R += p.shape().rows();
        grad = grad || t->node(p.id()).needs_grad;
    }
    const int out = t->new_node(Shape::mat(R, C), grad);
    auto &o = t->node(out);
    std::vector<int> ids;
    std::vector<int> offsets;
    int off = 0;
    for (const auto &p : parts) {
        ids.push_back(p.id());
        offsets.push_back(off);
        const auto &v = t->node(p.id()).value;
        std::copy(v.begin(), v.end(), o.value.begin() + static_cast<int64_t>(off) * C);
        off += p.shape().rows();
    }
    if (o.needs_grad) {
        o.back = [t, out, ids, offsets, C] {
            const auto &g = t->node(out).grad;
            for (size_t k = 0; k < ids.size(); ++k) {
                auto &n = t->node(ids[k]);
                if (!n.needs_grad) continue;
                const int64_t base = static_cast<int64_t>(offsets[k]) * C;
                for (size_t i = 0; i < n.grad.size(); ++i) n.grad[i] += g[base + i];
            }
        };
    }
    return Tensor(t, out);
}

Tensor concat_cols(const std::vector<Tensor> &parts) {
    if (parts.empty()) throw ShapeError("concat_cols: empty");
    Tape *t = parts[0].tape();
    const int R = parts[0].shape().rows();
    int C = 0;
    bool grad = false;
    for (const auto &p : parts) {
        if (p.tape() != t) throw Error("concat_cols: mixed tapes");
        if (p.shape().rank != 2 || p.shape().rows() != R) throw ShapeError("concat_cols: row mismatch");
        C += p.shape().cols();
        grad = grad || t->node(p.id()).needs_grad;
    }
    const int out = t->new_node(Shape::mat(R, C), grad);
    auto &o = t->node(out);
    std::vector<int> ids, offsets, widths;
    int off = 0;
    for (const auto &p : parts) {
        const int W = p.shape().cols();
        ids.push_back(p.id());
        offsets.push_back(off);
        widths.push_back(W);
        const auto &v = t->node(p.id()).value;
        for (int r = 0; r < R; ++r)
            for (int c = 0; c < W; ++c) o.value[r * C + off + c] = v[r * W + c];
        off += W;
    }
    if (o.needs_grad) {
        o.back = [t, out, ids, offsets, widths, R, C] {
            const auto &g = t->node(out).grad;
            for (size_t k = 0; k < ids.size(); ++k) {
                auto &n = t->node(ids[k]);
                if (!n.needs_grad) continue;
                const int W = widths[k], off2 = offsets[k];
                for (int r = 0; r < R; ++r)
                    for (int c = 0; c < W; ++c) n.grad[r * W + c] += g[r * C + off2 + c];
            }
        };
    }
    return Tensor(t, out);
}

Tensor reverse_rows(Tensor a) {
    Tape *t = a.tape();
    const int ia = a.id();
    const Shape &s = a.shape();
    if (s.rank != 2) throw ShapeError("reverse_rows: rank-2 required");
    const int R = s.rows(), C = s.cols();
    const int out = t->new_node(s, t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ia).value;
    for (int r = 0; r < R; ++r)
        std::copy(v.begin() + static_cast<int64_t>(r) * C, v.begin() + static_cast<int64_t>(r + 1) * C,
                  o.value.begin() + static_cast<int64_t>(R - 1 - r) * C);
    if (o.needs_grad) {
        o.back = [t, out, ia, R, C] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) na.grad[r * C + c] += g[(R - 1 - r) * C + c];
        };
    }
    return Tensor(t, out);
}

Tensor transpose(Tensor a) {
    Tape *t = a.tape();
    const int ia = a.id();
    const Shape &s = a.shape();
    if (s.rank != 2) throw ShapeError("transpose: rank-2 required");
    const int R = s.rows(), C = s.cols();
    const int out = t->new_node(Shape::mat(C, R), t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ia).value;
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c) o.value[c * R + r] = v[r * C + c];
    if (o.needs_grad) {
        o.back = [t, out, ia, R, C] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            for (int r = 0; r < R; ++r)
                for (int c = 0; c < C; ++c) na.grad[r * C + c] += g[c * R + r];
        };
    }
    return Tensor(t, out);
}

Tensor reshape(Tensor a, Shape s) {
    Tape *t = a.tape();
    const int ia = a.id();
    if (s.numel() != a.shape().numel())
        throw ShapeError("reshape: numel mismatch " + a.shape().str() + " vs " + s.str());
    const int out = t->new_node(s, t->node(ia).needs_grad);
    auto &o = t->node(out);
    o.value = t->node(ia).value;
    if (o.needs_grad) {
        o.back = [t, out, ia] {
            const auto &g = t->node(out).grad;
            acc_grad(t, ia, g.data(), static_cast<int64_t>(g.size()));
        };
    }
    return Tensor(t, out);
}

// ─── Row-normalized ops ─────────────────────────────────────────────────────

Tensor softmax_rows(Tensor a) {
    Tape *t = a.tape();
    const int ia = a.id();
    const Shape &s = a.shape();
    if (s.rank != 2) throw ShapeError("softmax_rows: rank-2 required");
    const int R = s.rows(), C = s.cols();
    const int out = t->new_node(s, t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ia).value;
    for (int r = 0; r < R; ++r) {
        double mx = v[r * C];
        for (int c = 1; c < C; ++c) mx = std::max(mx, v[r * C + c]);
        double z = 0.0;
        for (int c = 0; c < C; ++c) {
            const double e = std::exp(v[r * C + c] - mx);
            o.value[r * C + c] = e;
            z += e;
        }
        for (int c = 0; c < C; ++c) o.value[r * C + c] /= z;
    }
    if (o.needs_grad) {
        o.back = [t, out, ia, R, C] {
            const auto &g = t->node(out).grad;
            const auto &y = t->node(out).value;
            auto &na = t->node(ia);
            for (int r = 0; r < R; ++r) {
                double dot = 0.0;
                for (int c = 0; c < C; ++c) dot += g[r * C + c] * y[r * C + c];
                for (int c = 0; c < C; ++c)
                    na.grad[r * C + c] += y[r * C + c] * (g[r * C + c] - dot);
            }
        };
    }
    return Tensor(t, out);
}

Tensor log_softmax_rows(Tensor a) {
    Tape *t = a.tape();
    const int ia = a.id();
    const Shape &s = a.shape();
    if (s.rank != 2) throw ShapeError("log_softmax_rows: rank-2 required");
    const int R = s.rows(), C = s.cols();
    const int out = t->new_node(s, t->node(ia).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ia).value;
    for (int r = 0; r < R; ++r) {
        double mx = v[r * C];
        for (int c = 1; c < C; ++c) mx = std::max(mx, v[r * C + c]);
        double z = 0.0;
        for (int c = 0; c < C; ++c) z += std::exp(v[r * C + c] - mx);
        const double lz = mx + std::log(z);
        for (int c = 0; c < C; ++c) o.value[r * C + c] = v[r * C + c] - lz;
    }
    if (o.needs_grad) {
        o.back = [t, out, ia, R, C] {
            const auto &g = t->node(out).grad;
            const auto &y = t->node(out).value;
            auto &na = t->node(ia);
            for (int r = 0; r < R; ++r) {
                double gs = 0.0;
                for (int c = 0; c < C; ++c) gs += g[r * C + c];
                for (int c = 0; c < C; ++c)
                    na.grad[r * C + c] += g[r * C + c] - std::exp(y[r * C + c]) * gs;
            }
        };
    }
    return Tensor(t, out);
}

Tensor l2_normalize_rows(Tensor a, double eps) {
    // Composed from primitives so the gradient (including through the norm)
    // comes from the chain rule rather than a bespoke derivation.
    Tensor sq = mul(a, a);
    Tensor norms = sqrt_op(row_sum(sq));              // (R)
    Tensor inv = reciprocal(add_scalar(norms, eps));  // (R)
    return mul_colvec(a, inv);
}

Tensor layer_norm_rows(Tensor a, Tensor gamma, Tensor beta, double eps) {
    Tape *t = a.tape();
    const int ia = a.id(), ig = gamma.id(), ib = beta.id();
    const Shape &s = a.shape();
    if (s.rank != 2) throw ShapeError("layer_norm_rows: rank-2 required");
    const int R = s.rows(), C = s.cols();
    if (gamma.shape().numel() != C || beta.shape().numel() != C)
        throw ShapeError("layer_norm_rows: affine params must be (C)");
    const int out = t->new_node(s, any_grad(t, {ia, ig, ib}));
    auto &o = t->node(out);
    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(R) * C);
    auto inv_std = std::make_shared<std::vector<double>>(R);
    {
        const auto &v = t->node(ia).value;
        const auto &gm = t->node(ig).value;
        const auto &bt = t->node(ib).value;
        for (int r = 0; r < R; ++r) {
            double mean = 0.0;
            for (int c = 0; c < C; ++c) mean += v[r * C + c];
            mean /= C;
            double var = 0.0;
            for (int c = 0; c < C; ++c) {
                const double d = v[r * C + c] - mean;
                var += d * d;
            }
            var /= C;
            const double is = 1.0 / std::sqrt(var + eps);
            (*inv_std)[r] = is;
            for (int c = 0; c < C; ++c) {
                const double xh = (v[r * C + c] - mean) * is;
                (*xhat)[r * C + c] = xh;
                o.value[r * C + c] = gm[c] * xh + bt[c];
            }
        }
    }
    if (o.needs_grad) {
        o.back = [t, out, ia, ig, ib, R, C, xhat, inv_std] {
            const auto &g = t->node(out).grad;
            const auto &gm = t->node(ig).value;
            auto &na = t->node(ia);
            auto &ng = t->node(ig);
            auto &nb = t->node(ib);
            for (int r = 0; r < R; ++r) {
                double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double dxhat = g[r * C + c] * gm[c];
                    sum_dxhat += dxhat;
                    sum_dxhat_xhat += dxhat * (*xhat)[r * C + c];
                }
                for (int c = 0; c < C; ++c) {
                    const double xh = (*xhat)[r * C + c];
                    if (ng.needs_grad) ng.grad[c] += g[r * C + c] * xh;
                    if (nb.needs_grad) nb.grad[c] += g[r * C + c];
                    if (na.needs_grad) {
                        const double dxhat = g[r * C + c] * gm[c];
                        na.grad[r * C + c] +=
                            (*inv_std)[r] * (dxhat - sum_dxhat / C - xh * sum_dxhat_xhat / C);
                    }
                }
            }
        };
    }
    return Tensor(t, out);
}

Tensor bce_with_logits(Tensor logits, Tensor targets) {
    Tape *t = same_tape(logits, targets);
    if (logits.shape() != targets.shape()) throw ShapeError("bce_with_logits: shape mismatch");
    const int ix = logits.id(), iy = targets.id();
    const int out = t->new_node(logits.shape(), t->node(ix).needs_grad);
    auto &o = t->node(out);
    {
        const auto &x = t->node(ix).value;
        const auto &y = t->node(iy).value;
        for (size_t i = 0; i < o.value.size(); ++i) {
            const double xi = x[i];
            // softplus(x) − x·y  =  max(x,0) − x·y + log1p(exp(−|x|))
            o.value[i] = std::max(xi, 0.0) - xi * y[i] + std::log1p(std::exp(-std::fabs(xi)));
        }
    }
    if (o.needs_grad) {
        o.back = [t, out, ix, iy] {
            const auto &g = t->node(out).grad;
            const auto &x = t->node(ix).value;
            const auto &y = t->node(iy).value;
            auto &nx = t->node(ix);
            for (size_t i = 0; i < g.size(); ++i) {
                const double s = x[i] >= 0 ? 1.0 / (1.0 + std::exp(-x[i]))
                                           : std::exp(x[i]) / (1.0 + std::exp(x[i]));
                nx.grad[i] += g[i] * (s - y[i]);
            }
        };
    }
    return Tensor(t, out);
}

Tensor dropout(Tensor a, double rate) {
    Tape *t = a.tape();
    if (!t->training() || rate <= 0.0) return a;
    if (!t->rng()) throw Error("dropout: training tape has no RNG");
    const int ia = a.id();
    const int out = t->new_node(a.shape(), t->node(ia).needs_grad);
    auto &o = t->node(out);
    auto mask = std::make_shared<std::vector<double>>(o.value.size());
    const double keep = 1.0 - rate;
    {
        const auto &v = t->node(ia).value;
        Rng &rng = *t->rng();
        for (size_t i = 0; i < o.value.size(); ++i) {
            (*mask)[i] = rng.uniform() < keep ? 1.0 / keep : 0.0;
            o.value[i] = v[i] * (*mask)[i];
        }
    }
    if (o.needs_grad) {
        o.back = [t, out, ia, mask] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            for (size_t i = 0; i < g.size(); ++i) na.grad[i] += g[i] * (*mask)[i];
        };
    }
    return Tensor(t, out);
}

// ─── Rank-3 ops ─────────────────────────────────────────────────────────────

Tensor conv2d(Tensor x, Tensor w, Tensor b, int stride_h, int stride_w, int pad) {
    Tape *t = x.tape();
    const Shape &xs = x.shape(), &ws = w.shape();
    if (xs.rank != 3 || ws.rank != 4) throw ShapeError("conv2d: want x (C,H,W), w (OC,IC,KH,KW)");
    const int IC = xs[0], H = xs[1], W = xs[2];
    const int OC = ws[0], KH = ws[2], KW = ws[3];
    if (ws[1] != IC) throw ShapeError("conv2d: channel mismatch x " + xs.str() + " w " + ws.str());
    const int OH = (H + 2 * pad - KH) / stride_h + 1;
    const int OW = (W + 2 * pad - KW) / stride_w + 1;
    if (OH <= 0 || OW <= 0) throw ShapeError("conv2d: empty output for input " + xs.str());

    const int ix = x.id(), iw = w.id(), ib = b.valid() ? b.id() : -1;
    const bool needs = t->node(ix).needs_grad || t->node(iw).needs_grad ||
                       (ib >= 0 && t->node(ib).needs_grad);
    const int out = t->new_node(Shape::chw(OC, OH, OW), needs);

    const int K = IC * KH * KW;
    const int P = OH * OW;
    auto col = std::make_shared<std::vector<double>>(static_cast<size_t>(K) * P);
    {
        const auto &xv = t->node(ix).value;
        double *cd = col->data();
        for (int c = 0; c < IC; ++c) {
            for (int kh = 0; kh < KH; ++kh) {
                for (int kw = 0; kw < KW; ++kw) {
                    const int row = (c * KH + kh) * KW + kw;
                    double *dst = cd + static_cast<int64_t>(row) * P;
                    for (int oh = 0; oh < OH; ++oh) {
                        const int ih = oh * stride_h - pad + kh;
                        if (ih < 0 || ih >= H) {
                            std::fill(dst + oh * OW, dst + (oh + 1) * OW, 0.0);
                            continue;
                        }
                        const double *src = xv.data() + (static_cast<int64_t>(c) * H + ih) * W;
                        for (int ow = 0; ow < OW; ++ow) {
                            const int iw2 = ow * stride_w - pad + kw;
                            dst[oh * OW + ow] = (iw2 >= 0 && iw2 < W) ? src[iw2] : 0.0;
                        }
                    }
                }
            }
        }
        auto &o = t->node(out);
        gemm(false, false, OC, P, K, t->node(iw).value.data(), cd, o.value.data(), false);
        if (ib >= 0) {
            const auto &bv = t->node(ib).value;
            for (int oc = 0; oc < OC; ++oc) {
                double *row = o.value.data() + static_cast<int64_t>(oc) * P;
                for (int p = 0; p < P; ++p) row[p] += bv[oc];
            }
        }
    }
    if (needs) {
        t->node(out).back = [t, out, ix, iw, ib, col, IC, H, W, OC, KH, KW, OH, OW, stride_h,
                             stride_w, pad, K, P] {
            const auto &g = t->node(out).grad;
            auto &nx = t->node(ix);
            auto &nw = t->node(iw);
            if (nw.needs_grad)
                gemm(false, true, OC, K, P, g.data(), col->data(), nw.grad.data(), true);
            if (ib >= 0 && t->node(ib).needs_grad) {
                auto &nb = t->node(ib);
                for (int oc = 0; oc < OC; ++oc) {
                    double s = 0.0;
                    const double *row = g.data() + static_cast<int64_t>(oc) * P;
                    for (int p = 0; p < P; ++p) s += row[p];
                    nb.grad[oc] += s;
                }
            }
            if (nx.needs_grad) {
                std::vector<double> dcol(static_cast<size_t>(K) * P);
                gemm(true, false, K, P, OC, t->node(iw).value.data(), g.data(), dcol.data(), false);
                // col2im scatter-add
                for (int c = 0; c < IC; ++c) {
                    for (int kh = 0; kh < KH; ++kh) {
                        for (int kw = 0; kw < KW; ++kw) {
                            const int row = (c * KH + kh) * KW + kw;
                            const double *src = dcol.data() + static_cast<int64_t>(row) * P;
                            for (int oh = 0; oh < OH; ++oh) {
                                const int ih = oh * stride_h - pad + kh;
                                if (ih < 0 || ih >= H) continue;
                                double *dst = nx.grad.data() + (static_cast<int64_t>(c) * H + ih) * W;
                                for (int ow = 0; ow < OW; ++ow) {
                                    const int iw2 = ow * stride_w - pad + kw;
                                    if (iw2 >= 0 && iw2 < W) dst[iw2] += src[oh * OW + ow];
                                }
                            }
                        }
                    }
                }
            }
        };
    }
    return Tensor(t, out);
}

Tensor batch_norm2d(Tape &tape, Tensor x, BatchNormState &bn) {
    Tape *t = x.tape();
    if (t != &tape) throw Error("batch_norm2d: tape mismatch");
    const Shape &xs = x.shape();
    if (xs.rank != 3) throw ShapeError("batch_norm2d: want (C,H,W)");
    const int C = xs[0], HW = xs[1] * xs[2];
    const int ix = x.id();
    Tensor gamma = t->leaf(*bn.gamma);
    Tensor beta = t->leaf(*bn.beta);
    const int ig = gamma.id(), ibt = beta.id();
    const bool needs = t->node(ix).needs_grad || t->node(ig).needs_grad || t->node(ibt).needs_grad;
    const int out = t->new_node(xs, needs);

    const bool use_batch_stats = t->training() && !bn.frozen;
    auto mean = std::make_shared<std::vector<double>>(C);
    auto inv_std = std::make_shared<std::vector<double>>(C);
    {
        const auto &xv = t->node(ix).value;
        if (use_batch_stats) {
            for (int c = 0; c < C; ++c) {
                const double *row = xv.data() + static_cast<int64_t>(c) * HW;
                double m = 0.0;
                for (int i = 0; i < HW; ++i) m += row[i];
                m /= HW;
                double var = 0.0;
                for (int i = 0; i < HW; ++i) {
                    const double d = row[i] - m;
                    var += d * d;
                }
                var /= HW;
                (*mean)[c] = m;
                (*inv_std)[c] = 1.0 / std::sqrt(var + bn.eps);
                // Torch convention: running variance uses the unbiased estimate.
                const double unbiased = HW > 1 ? var * HW / (HW - 1) : var;
                bn.running_mean->value[c] =
                    (1.0 - bn.momentum) * bn.running_mean->value[c] + bn.momentum * m;
                bn.running_var->value[c] =
                    (1.0 - bn.momentum) * bn.running_var->value[c] + bn.momentum * unbiased;
            }
        } else {
            for (int c = 0; c < C; ++c) {
                (*mean)[c] = bn.running_mean->value[c];
                (*inv_std)[c] = 1.0 / std::sqrt(bn.running_var->value[c] + bn.eps);
            }
        }
        auto &o = t->node(out);
        const auto &gv = t->node(ig).value;
        const auto &bv = t->node(ibt).value;
        for (int c = 0; c < C; ++c) {
            const double *row = xv.data() + static_cast<int64_t>(c) * HW;
            double *dst = o.value.data() + static_cast<int64_t>(c) * HW;
            const double m = (*mean)[c], is = (*inv_std)[c], gm = gv[c], bt = bv[c];
            for (int i = 0; i < HW; ++i) dst[i] = gm * (row[i] - m) * is + bt;
        }
    }
    if (needs) {
        t->node(out).back = [t, out, ix, ig, ibt, C, HW, mean, inv_std, use_batch_stats] {
            const auto &g = t->node(out).grad;
            const auto &xv = t->node(ix).value;
            const auto &gv = t->node(ig).value;
            auto &nx = t->node(ix);
            auto &ng = t->node(ig);
            auto &nb = t->node(ibt);
            for (int c = 0; c < C; ++c) {
                const double *xrow = xv.data() + static_cast<int64_t>(c) * HW;
                const double *grow = g.data() + static_cast<int64_t>(c) * HW;
                const double m = (*mean)[c], is = (*inv_std)[c];
                double sum_g = 0.0, sum_g_xhat = 0.0;
                for (int i = 0; i < HW; ++i) {
                    sum_g += grow[i];
                    sum_g_xhat += grow[i] * (xrow[i] - m) * is;
                }
                if (ng.needs_grad) ng.grad[c] += sum_g_xhat;
                if (nb.needs_grad) nb.grad[c] += sum_g;
                if (nx.needs_grad) {
                    double *dst = nx.grad.data() + static_cast<int64_t>(c) * HW;
                    const double gm = gv[c];
                    if (use_batch_stats) {
                        for (int i = 0; i < HW; ++i) {
                            const double xhat = (xrow[i] - m) * is;
                            dst[i] += gm * is * (grow[i] - sum_g / HW - xhat * sum_g_xhat / HW);
                        }
                    } else {
                        for (int i = 0; i < HW; ++i) dst[i] += gm * is * grow[i];
                    }
                }
            }
        };
    }
    return Tensor(t, out);
}

Tensor upsample_nearest_2x(Tensor x) {
    Tape *t = x.tape();
    const Shape &xs = x.shape();
    if (xs.rank != 3) throw ShapeError("upsample_nearest_2x: want (C,H,W)");
    const int C = xs[0], H = xs[1], W = xs[2];
    const int ix = x.id();
    const int out = t->new_node(Shape::chw(C, 2 * H, 2 * W), t->node(ix).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ix).value;
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < 2 * H; ++h)
            for (int w = 0; w < 2 * W; ++w)
                o.value[(static_cast<int64_t>(c) * 2 * H + h) * 2 * W + w] =
                    v[(static_cast<int64_t>(c) * H + h / 2) * W + w / 2];
    if (o.needs_grad) {
        o.back = [t, out, ix, C, H, W] {
            const auto &g = t->node(out).grad;
            auto &nx = t->node(ix);
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < 2 * H; ++h)
                    for (int w = 0; w < 2 * W; ++w)
                        nx.grad[(static_cast<int64_t>(c) * H + h / 2) * W + w / 2] +=
                            g[(static_cast<int64_t>(c) * 2 * H + h) * 2 * W + w];
        };
    }
    return Tensor(t, out);
}

Tensor concat_channels(Tensor a, Tensor b) {
    Tape *t = same_tape(a, b);
    const Shape &sa = a.shape(), &sb = b.shape();
    if (sa.rank != 3 || sb.rank != 3 || sa[1] != sb[1] || sa[2] != sb[2])
        throw ShapeError("concat_channels: spatial mismatch " + sa.str() + " vs " + sb.str());
    const int Ca = sa[0], Cb = sb[0], HW = sa[1] * sa[2];
    const int ia = a.id(), ib = b.id();
    const int out = t->new_node(Shape::chw(Ca + Cb, sa[1], sa[2]), any_grad(t, {ia, ib}));
    auto &o = t->node(out);
    const auto &va = t->node(ia).value;
    const auto &vb = t->node(ib).value;
    std::copy(va.begin(), va.end(), o.value.begin());
    std::copy(vb.begin(), vb.end(), o.value.begin() + static_cast<int64_t>(Ca) * HW);
    if (o.needs_grad) {
        o.back = [t, out, ia, ib, Ca, HW] {
            const auto &g = t->node(out).grad;
            auto &na = t->node(ia);
            auto &nb = t->node(ib);
            if (na.needs_grad)
                for (size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g[i];
            if (nb.needs_grad) {
                const int64_t base = static_cast<int64_t>(Ca) * HW;
                for (size_t i = 0; i < nb.grad.size(); ++i) nb.grad[i] += g[base + i];
            }
        };
    }
    return Tensor(t, out);
}

Tensor channel_mean(Tensor x) {
    Tape *t = x.tape();
    const Shape &xs = x.shape();
    if (xs.rank != 3) throw ShapeError("channel_mean: want (C,H,W)");
    const int C = xs[0], HW = xs[1] * xs[2];
    const int ix = x.id();
    const int out = t->new_node(Shape::vec(C), t->node(ix).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ix).value;
    for (int c = 0; c < C; ++c) {
        double s = 0.0;
        const double *row = v.data() + static_cast<int64_t>(c) * HW;
        for (int i = 0; i < HW; ++i) s += row[i];
        o.value[c] = s / HW;
    }
    if (o.needs_grad) {
        o.back = [t, out, ix, C, HW] {
            const auto &g = t->node(out).grad;
            auto &nx = t->node(ix);
            for (int c = 0; c < C; ++c) {
                double *row = nx.grad.data() + static_cast<int64_t>(c) * HW;
                const double gc = g[c] / HW;
                for (int i = 0; i < HW; ++i) row[i] += gc;
            }
        };
    }
    return Tensor(t, out);
}

Tensor mul_channel(Tensor x, Tensor s) {
    Tape *t = same_tape(x, s);
    const Shape &xs = x.shape();
    if (xs.rank != 3 || s.shape().numel() != xs[0])
        throw ShapeError("mul_channel: want (C,H,W) * (C)");
    const int C = xs[0], HW = xs[1] * xs[2];
    const int ix = x.id(), is = s.id();
    const int out = t->new_node(xs, any_grad(t, {ix, is}));
    auto &o = t->node(out);
    {
        const auto &xv = t->node(ix).value;
        const auto &sv = t->node(is).value;
        for (int c = 0; c < C; ++c) {
            const double *row = xv.data() + static_cast<int64_t>(c) * HW;
            double *dst = o.value.data() + static_cast<int64_t>(c) * HW;
            for (int i = 0; i < HW; ++i) dst[i] = row[i] * sv[c];
        }
    }
    if (o.needs_grad) {
        o.back = [t, out, ix, is, C, HW] {
            const auto &g = t->node(out).grad;
            const auto &xv = t->node(ix).value;
            const auto &sv = t->node(is).value;
            auto &nx = t->node(ix);
            auto &ns = t->node(is);
            for (int c = 0; c < C; ++c) {
                const double *grow = g.data() + static_cast<int64_t>(c) * HW;
                const double *xrow = xv.data() + static_cast<int64_t>(c) * HW;
                if (nx.needs_grad) {
                    double *dst = nx.grad.data() + static_cast<int64_t>(c) * HW;
                    for (int i = 0; i < HW; ++i) dst[i] += grow[i] * sv[c];
                }
                if (ns.needs_grad) {
                    double acc = 0.0;
                    for (int i = 0; i < HW; ++i) acc += grow[i] * xrow[i];
                    ns.grad[c] += acc;
                }
            }
        };
    }
    return Tensor(t, out);
}

Tensor time_major_flatten(Tensor x) {
    Tape *t = x.tape();
    const Shape &xs = x.shape();
    if (xs.rank != 3) throw ShapeError("time_major_flatten: want (C,H,W)");
    const int C = xs[0], H = xs[1], W = xs[2];
    const int ix = x.id();
    const int out = t->new_node(Shape::mat(W, C * H), t->node(ix).needs_grad);
    auto &o = t->node(out);
    const auto &v = t->node(ix).value;
    for (int c = 0; c < C; ++c)
        for (int h = 0; h < H; ++h)
            for (int w = 0; w < W; ++w)
                o.value[static_cast<int64_t>(w) * C * H + c * H + h] =
                    v[(static_cast<int64_t>(c) * H + h) * W + w];
    if (o.needs_grad) {
        o.back = [t, out, ix, C, H, W] {
            const auto &g = t->node(out).grad;
            auto &nx = t->node(ix);
            for (int c = 0; c < C; ++c)
                for (int h = 0; h < H; ++h)
                    for (int w = 0; w < W; ++w)
                        nx.grad[(static_cast<int64_t>(c) * H + h) * W + w] +=
                            g[static_cast<int64_t>(w) * C * H + c * H + h];
        };
    }
    return Tensor(t, out);
}

// ─── Adam ───────────────────────────────────────────────────────────────────

void Adam::step(ParamStore &params, double lr_scale) {
    ++t_;
    const double b1t = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double b2t = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const double lr = cfg_.lr * lr_scale;
    for (auto &p : params.all()) {
        if (!p->trainable) continue;
        if (p->adam_m.empty()) {
            p->adam_m.assign(p->numel(), 0.0);
            p->adam_v.assign(p->numel(), 0.0);
        }
        for (int64_t i = 0; i < p->numel(); ++i) {
            const double g = p->grad[i];
            p->adam_m[i] = cfg_.beta1 * p->adam_m[i] + (1.0 - cfg_.beta1) * g;
            p->adam_v[i] = cfg_.beta2 * p->adam_v[i] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = p->adam_m[i] / b1t;
            const double vhat = p->adam_v[i] / b2t;
            p->value[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
        p->zero_grad();
    }
}

} // namespace diformer
