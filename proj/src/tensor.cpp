#include "corelnet/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <cstring>

namespace corelnet {

namespace {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

// C(m,n) += A(m,k) * B(k,n), row-major, optional transposes on A/B.
//
// Small products take a plain per-element dot-product kernel whose rounding
// is independent of the row/column position. Blocked GEMM microkernels can
// round the same dot product differently depending on which row block it
// lands in, which would break the exact P R P^T permutation-equivariance of
// the similarity matrix. Large products (convolutions, dense layers, FFN)
// go through Eigen.
template <typename T>
void gemm_acc(const T* a, const T* b, T* c, long m, long k, long n, bool ta, bool tb,
              bool stable = true) {
    if (stable && m <= 32 && n <= 128 && k <= 256) {
        auto A = [&](long i, long kk) { return ta ? a[kk * m + i] : a[i * k + kk]; };
        auto B = [&](long kk, long j) { return tb ? b[j * k + kk] : b[kk * n + j]; };
        for (long i = 0; i < m; ++i)
            for (long j = 0; j < n; ++j) {
                T acc = 0;
                for (long kk = 0; kk < k; ++kk) acc += A(i, kk) * B(kk, j);
                c[i * n + j] += acc;
            }
        return;
    }
    EMap<T> C(c, m, n);
    if (!ta && !tb)
        C.noalias() += ECMap<T>(a, m, k) * ECMap<T>(b, k, n);
    else if (ta && !tb)
        C.noalias() += ECMap<T>(a, k, m).transpose() * ECMap<T>(b, k, n);
    else if (!ta && tb)
        C.noalias() += ECMap<T>(a, m, k) * ECMap<T>(b, n, k).transpose();
    else
        C.noalias() += ECMap<T>(a, k, m).transpose() * ECMap<T>(b, n, k).transpose();
}

// Decompose a shape around `axis` into (outer, extent, inner) strides.
struct AxisSplit {
    long outer, n, inner;
};

AxisSplit split_axis(const Shape& s, int axis) {
    require(axis >= 0 && axis < static_cast<int>(s.size()), "axis ", axis,
            " out of range for shape ", shape_str(s));
    AxisSplit sp{1, s[axis], 1};
    for (int i = 0; i < axis; ++i) sp.outer *= s[i];
    for (int i = axis + 1; i < static_cast<int>(s.size()); ++i) sp.inner *= s[i];
    return sp;
}

Shape drop_axis(const Shape& s, int axis) {
    Shape out;
    for (int i = 0; i < static_cast<int>(s.size()); ++i)
        if (i != axis) out.push_back(s[i]);
    if (out.empty()) out.push_back(1);
    return out;
}

// Broadcast classification for binary elementwise ops.
//   0: identical shapes
//   1: rhs is a single scalar
//   2: rhs shape equals lhs shape minus the leading axis ([N,d] op [d])
int broadcast_kind(const Shape& a, const Shape& b) {
    if (a == b) return 0;
    if (numel(b) == 1) return 1;
    if (a.size() == b.size() + 1 && std::equal(b.begin(), b.end(), a.begin() + 1)) return 2;
    return -1;
}

// conv2d geometry: x [N,Cin,H,W], k [Cout,Cin,kh,kw]
struct ConvGeom {
    long n, cin, h, w, cout, kh, kw, ho, wo;
    int stride, pad;
};

ConvGeom conv_geom(const Shape& xs, const Shape& ks, const Attrs& at) {
    require(xs.size() == 4, "conv2d input must be [N,C,H,W], got ", shape_str(xs));
    require(ks.size() == 4, "conv2d kernel must be [Cout,Cin,kh,kw], got ", shape_str(ks));
    require(at.stride >= 1, "conv2d stride must be >= 1, got ", at.stride);
    require(at.pad >= 0, "conv2d padding must be >= 0, got ", at.pad);
    ConvGeom g;
    g.n = xs[0];
    g.cin = xs[1];
    g.h = xs[2];
    g.w = xs[3];
    g.cout = ks[0];
    g.kh = ks[2];
    g.kw = ks[3];
    g.stride = at.stride;
    g.pad = at.pad;
    require(ks[1] == g.cin, "conv2d channel mismatch: input has ", g.cin,
            " channels, kernel expects ", ks[1]);
    g.ho = (g.h + 2 * g.pad - g.kh) / g.stride + 1;
    g.wo = (g.w + 2 * g.pad - g.kw) / g.stride + 1;
    require(g.ho >= 1 && g.wo >= 1, "conv2d output would be empty for input ", shape_str(xs),
            ", kernel ", shape_str(ks), ", stride ", at.stride, ", pad ", at.pad);
    return g;
}

// Scratch buffers for im2col; one per thread, grow-only.
template <typename T>
std::vector<T>& scratch(size_t n) {
    thread_local std::vector<T> buf;
    if (buf.size() < n) buf.resize(n);
    return buf;
}

// cols has layout [Cin*kh*kw, Ho*Wo] for one sample.
template <typename T>
void im2col(const T* x, const ConvGeom& g, T* cols) {
    const long hw = g.ho * g.wo;
    for (long c = 0; c < g.cin; ++c) {
        for (long ki = 0; ki < g.kh; ++ki) {
            for (long kj = 0; kj < g.kw; ++kj) {
                T* dst = cols + ((c * g.kh + ki) * g.kw + kj) * hw;
                for (long oi = 0; oi < g.ho; ++oi) {
                    long ii = oi * g.stride - g.pad + ki;
                    if (ii < 0 || ii >= g.h) {
                        std::fill(dst, dst + g.wo, T(0));
                        dst += g.wo;
                        continue;
                    }
                    const T* src = x + (c * g.h + ii) * g.w;
                    for (long oj = 0; oj < g.wo; ++oj) {
                        long jj = oj * g.stride - g.pad + kj;
                        *dst++ = (jj >= 0 && jj < g.w) ? src[jj] : T(0);
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im_acc(const T* cols, const ConvGeom& g, T* x) {
    const long hw = g.ho * g.wo;
    for (long c = 0; c < g.cin; ++c) {
        for (long ki = 0; ki < g.kh; ++ki) {
            for (long kj = 0; kj < g.kw; ++kj) {
                const T* src = cols + ((c * g.kh + ki) * g.kw + kj) * hw;
                for (long oi = 0; oi < g.ho; ++oi) {
                    long ii = oi * g.stride - g.pad + ki;
                    if (ii < 0 || ii >= g.h) continue;
                    const T* row = src + oi * g.wo;
                    T* dst = x + (c * g.h + ii) * g.w;
                    for (long oj = 0; oj < g.wo; ++oj) {
                        long jj = oj * g.stride - g.pad + kj;
                        if (jj >= 0 && jj < g.w) dst[jj] += row[oj];
                    }
                }
            }
        }
    }
}

template <typename T>
void softmax_slice(const T* x, T* y, long n, long stride) {
    T mx = x[0];
    for (long i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
    T sum = 0;
    for (long i = 0; i < n; ++i) {
        T e = std::exp(x[i * stride] - mx);
        y[i * stride] = e;
        sum += e;
    }
    for (long i = 0; i < n; ++i) y[i * stride] /= sum;
}

template <typename T>
T logsumexp(const T* x, long n, long stride = 1) {
    T mx = x[0];
    for (long i = 1; i < n; ++i) mx = std::max(mx, x[i * stride]);
    T sum = 0;
    for (long i = 0; i < n; ++i) sum += std::exp(x[i * stride] - mx);
    return mx + std::log(sum);
}

struct PrimName {
    Prim p;
    const char* name;
};

constexpr PrimName kPrimNames[] = {
    {Prim::leaf, "leaf"},
    {Prim::matmul, "matmul"},
    {Prim::conv2d, "conv2d"},
    {Prim::relu, "relu"},
    {Prim::sigmoid, "sigmoid"},
    {Prim::softmax, "softmax"},
    {Prim::log_softmax, "log-softmax"},
    {Prim::add, "add"},
    {Prim::sub, "sub"},
    {Prim::mul, "mul"},
    {Prim::scale, "scale"},
    {Prim::shift, "shift"},
    {Prim::rsqrt, "rsqrt"},
    {Prim::mean, "mean"},
    {Prim::variance, "variance"},
    {Prim::concat, "concat"},
    {Prim::flatten, "flatten"},
    {Prim::transpose, "transpose"},
    {Prim::embed_row, "embedding-lookup"},
    {Prim::l1_norm, "l1-norm"},
    {Prim::cross_entropy, "cross-entropy-with-logits"},
    {Prim::bce, "binary-cross-entropy-with-logits"},
    {Prim::lstm_cell, "lstm-cell-step"},
};

}  // namespace

const char* prim_name(Prim p) {
    for (const auto& e : kPrimNames)
        if (e.p == p) return e.name;
    return "?";
}

Prim prim_from_name(const std::string& name) {
    for (const auto& e : kPrimNames)
        if (name == e.name) return e.p;
    fail("unknown primitive id '", name, "'");
}

std::vector<Prim> all_primitives() {
    std::vector<Prim> out;
    for (const auto& e : kPrimNames)
        if (e.p != Prim::leaf) out.push_back(e.p);
    return out;
}

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

template <typename T>
NodeId Tape<T>::leaf(Array<T> value, bool needs_grad) {
    require(!value.empty(), "leaf tensor must be non-empty");
    Node n;
    n.op = Prim::leaf;
    n.val = std::move(value);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
NodeId Tape<T>::apply(Prim op, const std::vector<NodeId>& inputs, Attrs attrs) {
    require(op != Prim::leaf, "leaf is not an applicable primitive; use Tape::leaf");
    for (NodeId id : inputs) check_id(id);
    Node n;
    n.op = op;
    n.in = inputs;
    n.attrs = attrs;
    n.val = eval(op, inputs, attrs);
    for (NodeId id : inputs) n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

template <typename T>
const Array<T>& Tape<T>::grad(NodeId id) const {
    check_id(id);
    require(!nodes_[id].grad.empty(), "node ", id, " (", prim_name(nodes_[id].op),
            ") has no gradient; run backward first");
    return nodes_[id].grad;
}

template <typename T>
Array<T>& Tape<T>::grad_buf(NodeId id) {
    Node& n = nodes_[id];
    if (n.grad.empty()) n.grad = Array<T>(n.val.shape);
    return n.grad;
}

template <typename T>
Array<T> Tape<T>::eval(Prim op, const std::vector<NodeId>& in, const Attrs& at) const {
    auto arity = [&](size_t k) {
        require(in.size() == k, prim_name(op), " expects ", k, " inputs, got ", in.size());
    };
    auto V = [&](size_t i) -> const Array<T>& { return nodes_[in[i]].val; };

    switch (op) {
        case Prim::matmul: {
            arity(2);
            const auto& a = V(0);
            const auto& b = V(1);
            require(a.shape.size() == 2 && b.shape.size() == 2,
                    "matmul expects 2-d inputs, got ", shape_str(a.shape), " and ",
                    shape_str(b.shape));
            require(a.shape[1] == b.shape[0], "matmul shape mismatch: ", shape_str(a.shape),
                    " x ", shape_str(b.shape), " (inner extents ", a.shape[1], " vs ",
                    b.shape[0], ")");
            Array<T> out({a.shape[0], b.shape[1]});
            gemm_acc(a.data(), b.data(), out.data(), a.shape[0], a.shape[1], b.shape[1],
                     false, false);
            return out;
        }
        case Prim::conv2d: {
            arity(3);
            const auto& x = V(0);
            const auto& k = V(1);
            const auto& b = V(2);
            ConvGeom g = conv_geom(x.shape, k.shape, at);
            require(b.shape == Shape{static_cast<int>(g.cout)}, "conv2d bias must be [",
                    g.cout, "], got ", shape_str(b.shape));
            Array<T> out({static_cast<int>(g.n), static_cast<int>(g.cout),
                          static_cast<int>(g.ho), static_cast<int>(g.wo)});
            const long ck = g.cin * g.kh * g.kw, hw = g.ho * g.wo;
            T* cols = scratch<T>(ck * hw).data();
            for (long s = 0; s < g.n; ++s) {
                im2col(x.data() + s * g.cin * g.h * g.w, g, cols);
                T* y = out.data() + s * g.cout * hw;
                for (long c = 0; c < g.cout; ++c) std::fill(y + c * hw, y + (c + 1) * hw, b[c]);
                gemm_acc(k.data(), cols, y, g.cout, ck, hw, false, false, false);
            }
            return out;
        }
        case Prim::relu: {
            arity(1);
            Array<T> out = V(0);
            for (T& x : out.v) x = x > T(0) ? x : T(0);
            return out;
        }
        case Prim::sigmoid: {
            arity(1);
            Array<T> out = V(0);
            for (T& x : out.v) x = T(1) / (T(1) + std::exp(-x));
            return out;
        }
        case Prim::softmax:
        case Prim::log_softmax: {
            arity(1);
            const auto& x = V(0);
            AxisSplit sp = split_axis(x.shape, at.axis);
            Array<T> out(x.shape);
            for (long o = 0; o < sp.outer; ++o)
                for (long i = 0; i < sp.inner; ++i) {
                    const T* src = x.data() + o * sp.n * sp.inner + i;
                    T* dst = out.data() + o * sp.n * sp.inner + i;
                    if (op == Prim::softmax) {
                        softmax_slice(src, dst, sp.n, sp.inner);
                    } else {
                        T lse = logsumexp(src, sp.n, sp.inner);
                        for (long j = 0; j < sp.n; ++j) dst[j * sp.inner] = src[j * sp.inner] - lse;
                    }
                }
            return out;
        }
        case Prim::add:
        case Prim::sub:
        case Prim::mul: {
            arity(2);
            const auto& a = V(0);
            const auto& b = V(1);
            int bk = broadcast_kind(a.shape, b.shape);
            require(bk >= 0, prim_name(op), " shape mismatch: ", shape_str(a.shape), " vs ",
                    shape_str(b.shape));
            Array<T> out(a.shape);
            const long n = a.size(), bn = b.size();
            for (long i = 0; i < n; ++i) {
                T rhs = bk == 0 ? b[i] : (bk == 1 ? b[0] : b[i % bn]);
                out[i] = op == Prim::add ? a[i] + rhs : op == Prim::sub ? a[i] - rhs : a[i] * rhs;
            }
            return out;
        }
        case Prim::scale: {
            arity(1);
            Array<T> out = V(0);
            for (T& x : out.v) x *= static_cast<T>(at.a);
            return out;
        }
        case Prim::shift: {
            arity(1);
            Array<T> out = V(0);
            for (T& x : out.v) x += static_cast<T>(at.a);
            return out;
        }
        case Prim::rsqrt: {
            arity(1);
            Array<T> out = V(0);
            for (T& x : out.v) x = T(1) / std::sqrt(x + static_cast<T>(at.a));
            return out;
        }
        case Prim::mean:
        case Prim::variance: {
            arity(1);
            const auto& x = V(0);
            AxisSplit sp = split_axis(x.shape, at.axis);
            Array<T> out(drop_axis(x.shape, at.axis));
            for (long o = 0; o < sp.outer; ++o)
                for (long i = 0; i < sp.inner; ++i) {
                    const T* src = x.data() + o * sp.n * sp.inner + i;
                    T mu = 0;
                    for (long j = 0; j < sp.n; ++j) mu += src[j * sp.inner];
                    mu /= static_cast<T>(sp.n);
                    if (op == Prim::mean) {
                        out[o * sp.inner + i] = mu;
                    } else {
                        T ss = 0;
                        for (long j = 0; j < sp.n; ++j) {
                            T d = src[j * sp.inner] - mu;
                            ss += d * d;
                        }
                        out[o * sp.inner + i] = ss / static_cast<T>(sp.n);
                    }
                }
            return out;
        }
        case Prim::concat: {
            require(!in.empty(), "concat needs at least one input");
            const Shape& s0 = V(0).shape;
            int axis = at.axis;
            require(axis >= 0 && axis < static_cast<int>(s0.size()), "concat axis ", axis,
                    " out of range for shape ", shape_str(s0));
            long total = 0;
            for (size_t i = 0; i < in.size(); ++i) {
                const Shape& s = V(i).shape;
                require(s.size() == s0.size(), "concat rank mismatch: ", shape_str(s0), " vs ",
                        shape_str(s));
                for (int d = 0; d < static_cast<int>(s.size()); ++d)
                    require(d == axis || s[d] == s0[d], "concat shape mismatch on axis ", d,
                            ": ", shape_str(s0), " vs ", shape_str(s));
                total += s[axis];
            }
            Shape os = s0;
            os[axis] = static_cast<int>(total);
            Array<T> out(os);
            AxisSplit osp = split_axis(os, axis);
            long off = 0;
            for (size_t i = 0; i < in.size(); ++i) {
                const auto& x = V(i);
                AxisSplit sp = split_axis(x.shape, axis);
                for (long o = 0; o < sp.outer; ++o)
                    std::memcpy(out.data() + (o * osp.n + off) * sp.inner,
                                x.data() + o * sp.n * sp.inner, sp.n * sp.inner * sizeof(T));
                off += sp.n;
            }
            return out;
        }
        case Prim::flatten: {
            arity(1);
            const auto& x = V(0);
            Array<T> out = x;
            long n = x.size();
            if (at.mode == 0)
                out.shape = {static_cast<int>(n)};
            else if (at.mode == 1) {
                require(x.shape.size() >= 1, "flatten mode 1 needs rank >= 1");
                out.shape = {x.shape[0], static_cast<int>(n / x.shape[0])};
            } else
                out.shape = {1, static_cast<int>(n)};
            return out;
        }
        case Prim::transpose: {
            arity(1);
            const auto& x = V(0);
            require(x.shape.size() == 2, "transpose expects a 2-d input, got ",
                    shape_str(x.shape));
            Array<T> out({x.shape[1], x.shape[0]});
            ECMap<T> src(x.data(), x.shape[0], x.shape[1]);
            EMap<T>(out.data(), x.shape[1], x.shape[0]) = src.transpose();
            return out;
        }
        case Prim::embed_row: {
            arity(1);
            const auto& x = V(0);
            require(x.shape.size() == 2, "embedding-lookup expects a 2-d table, got ",
                    shape_str(x.shape));
            require(at.index >= 0 && at.index < x.shape[0], "embedding-lookup row ", at.index,
                    " out of range [0,", x.shape[0], ")");
            Array<T> out({1, x.shape[1]});
            std::memcpy(out.data(), x.data() + static_cast<long>(at.index) * x.shape[1],
                        x.shape[1] * sizeof(T));
            return out;
        }
        case Prim::l1_norm: {
            arity(1);
            const auto& x = V(0);
            T s = 0;
            for (const T& v : x.v) s += std::abs(v);
            Array<T> out({1});
            out[0] = s;
            return out;
        }
        case Prim::cross_entropy: {
            arity(1);
            const auto& x = V(0);
            require(x.shape.size() == 1, "cross-entropy expects 1-d logits, got ",
                    shape_str(x.shape));
            require(at.label >= 0 && at.label < x.shape[0], "label ", at.label,
                    " out of range for ", x.shape[0], " classes");
            Array<T> out({1});
            out[0] = logsumexp(x.data(), x.shape[0]) - x[at.label];
            return out;
        }
        case Prim::bce: {
            arity(1);
            const auto& x = V(0);
            require(x.size() == 1, "binary cross-entropy expects a single logit, got ",
                    shape_str(x.shape));
            T z = x[0], y = static_cast<T>(at.a);
            Array<T> out({1});
            out[0] = std::max(z, T(0)) - z * y + std::log1p(std::exp(-std::abs(z)));
            return out;
        }
        case Prim::lstm_cell: {
            arity(6);
            const auto& x = V(0);
            const auto& h = V(1);
            const auto& c = V(2);
            const auto& wx = V(3);
            const auto& wh = V(4);
            const auto& b = V(5);
            require(x.shape.size() == 1 && h.shape.size() == 1 && c.shape.size() == 1,
                    "lstm-cell-step expects 1-d x/h/c");
            long din = x.shape[0], dh = h.shape[0];
            require(c.shape[0] == dh, "lstm-cell-step c must match h: ", shape_str(c.shape),
                    " vs ", shape_str(h.shape));
            require(wx.shape == Shape{static_cast<int>(4 * dh), static_cast<int>(din)},
                    "lstm-cell-step Wx must be [", 4 * dh, ",", din, "], got ",
                    shape_str(wx.shape));
            require(wh.shape == Shape{static_cast<int>(4 * dh), static_cast<int>(dh)},
                    "lstm-cell-step Wh must be [", 4 * dh, ",", dh, "], got ",
                    shape_str(wh.shape));
            require(b.shape == Shape{static_cast<int>(4 * dh)}, "lstm-cell-step bias must be [",
                    4 * dh, "], got ", shape_str(b.shape));
            // gates: i, f, g, o
            std::vector<T> gates(b.v.begin(), b.v.end());
            gemm_acc(wx.data(), x.data(), gates.data(), 4 * dh, din, 1, false, false, false);
            gemm_acc(wh.data(), h.data(), gates.data(), 4 * dh, dh, 1, false, false, false);
            Array<T> out({2, static_cast<int>(dh)});
            for (long j = 0; j < dh; ++j) {
                T ig = T(1) / (T(1) + std::exp(-gates[j]));
                T fg = T(1) / (T(1) + std::exp(-gates[dh + j]));
                T gg = std::tanh(gates[2 * dh + j]);
                T og = T(1) / (T(1) + std::exp(-gates[3 * dh + j]));
                T cn = fg * c[j] + ig * gg;
                out[dh + j] = cn;
                out[j] = og * std::tanh(cn);
            }
            return out;
        }
        case Prim::leaf:
            break;
    }
    fail("unknown primitive id ", static_cast<int>(op));
}

template <typename T>
void Tape<T>::backward(NodeId loss) {
    require(!nodes_.empty(), "backward on an empty tape");
    check_id(loss);
    require(nodes_[loss].val.size() == 1, "backward needs a scalar loss, got shape ",
            shape_str(nodes_[loss].val.shape));
    grad_buf(loss)[0] = T(1);
    for (NodeId id = loss; id >= 0; --id) {
        Node& n = nodes_[id];
        if (n.grad.empty() || n.op == Prim::leaf) continue;
        backprop_node(id);
    }
}

template <typename T>
void Tape<T>::backprop_node(NodeId id) {
    Node& n = nodes_[id];
    const Array<T>& gy = n.grad;
    auto V = [&](size_t i) -> const Array<T>& { return nodes_[n.in[i]].val; };
    auto G = [&](size_t i) -> Array<T>& { return grad_buf(n.in[i]); };
    auto wants = [&](size_t i) { return nodes_[n.in[i]].needs_grad; };
    const Attrs& at = n.attrs;

    switch (n.op) {
        case Prim::matmul: {
            const auto& a = V(0);
            const auto& b = V(1);
            if (wants(0))
                gemm_acc(gy.data(), b.data(), G(0).data(), a.shape[0], b.shape[1], a.shape[1],
                         false, true);
            if (wants(1))
                gemm_acc(a.data(), gy.data(), G(1).data(), a.shape[1], a.shape[0], b.shape[1],
                         true, false);
            break;
        }
        case Prim::conv2d: {
            const auto& x = V(0);
            const auto& k = V(1);
            ConvGeom g = conv_geom(x.shape, k.shape, at);
            const long ck = g.cin * g.kh * g.kw, hw = g.ho * g.wo;
            T* cols = scratch<T>(ck * hw).data();
            std::vector<T> dcols;
            if (wants(0)) dcols.resize(ck * hw);
            for (long s = 0; s < g.n; ++s) {
                const T* gys = gy.data() + s * g.cout * hw;
                if (wants(1)) {
                    im2col(x.data() + s * g.cin * g.h * g.w, g, cols);
                    gemm_acc(gys, cols, G(1).data(), g.cout, hw, ck, false, true, false);
                }
                if (wants(0)) {
                    std::fill(dcols.begin(), dcols.end(), T(0));
                    gemm_acc(k.data(), gys, dcols.data(), ck, g.cout, hw, true, false, false);
                    col2im_acc(dcols.data(), g, G(0).data() + s * g.cin * g.h * g.w);
                }
                if (wants(2)) {
                    T* db = G(2).data();
                    for (long c = 0; c < g.cout; ++c) {
                        T s2 = 0;
                        for (long i = 0; i < hw; ++i) s2 += gys[c * hw + i];
                        db[c] += s2;
                    }
                }
            }
            break;
        }
        case Prim::relu: {
            if (!wants(0)) break;
            const auto& x = V(0);
            Array<T>& gx = G(0);
            for (long i = 0; i < x.size(); ++i)
                if (x[i] > T(0)) gx[i] += gy[i];
            break;
        }
        case Prim::sigmoid: {
            if (!wants(0)) break;
            Array<T>& gx = G(0);
            for (long i = 0; i < n.val.size(); ++i) {
                T y = n.val[i];
                gx[i] += gy[i] * y * (T(1) - y);
            }
            break;
        }
        case Prim::softmax: {
            if (!wants(0)) break;
            AxisSplit sp = split_axis(n.val.shape, at.axis);
            Array<T>& gx = G(0);
            for (long o = 0; o < sp.outer; ++o)
                for (long i = 0; i < sp.inner; ++i) {
                    long base = o * sp.n * sp.inner + i;
                    T dot = 0;
                    for (long j = 0; j < sp.n; ++j)
                        dot += gy[base + j * sp.inner] * n.val[base + j * sp.inner];
                    for (long j = 0; j < sp.n; ++j)
                        gx[base + j * sp.inner] +=
                            n.val[base + j * sp.inner] * (gy[base + j * sp.inner] - dot);
                }
            break;
        }
        case Prim::log_softmax: {
            if (!wants(0)) break;
            AxisSplit sp = split_axis(n.val.shape, at.axis);
            Array<T>& gx = G(0);
            for (long o = 0; o < sp.outer; ++o)
                for (long i = 0; i < sp.inner; ++i) {
                    long base = o * sp.n * sp.inner + i;
                    T gsum = 0;
                    for (long j = 0; j < sp.n; ++j) gsum += gy[base + j * sp.inner];
                    for (long j = 0; j < sp.n; ++j)
                        gx[base + j * sp.inner] +=
                            gy[base + j * sp.inner] - std::exp(n.val[base + j * sp.inner]) * gsum;
                }
            break;
        }
        case Prim::add:
        case Prim::sub:
        case Prim::mul: {
            const auto& a = V(0);
            const auto& b = V(1);
            int bk = broadcast_kind(a.shape, b.shape);
            const long bn = b.size();
            if (wants(0)) {
                Array<T>& ga = G(0);
                if (n.op == Prim::mul)
                    for (long i = 0; i < a.size(); ++i)
                        ga[i] += gy[i] * (bk == 0 ? b[i] : (bk == 1 ? b[0] : b[i % bn]));
                else
                    for (long i = 0; i < a.size(); ++i) ga[i] += gy[i];
            }
            if (wants(1)) {
                Array<T>& gb = G(1);
                T sgn = n.op == Prim::sub ? T(-1) : T(1);
                for (long i = 0; i < a.size(); ++i) {
                    long j = bk == 0 ? i : (bk == 1 ? 0 : i % bn);
                    gb[j] += sgn * (n.op == Prim::mul ? gy[i] * a[i] : gy[i]);
                }
            }
            break;
        }
        case Prim::scale: {
            if (!wants(0)) break;
            Array<T>& gx = G(0);
            for (long i = 0; i < gy.size(); ++i) gx[i] += gy[i] * static_cast<T>(at.a);
            break;
        }
        case Prim::shift: {
            if (!wants(0)) break;
            Array<T>& gx = G(0);
            for (long i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            break;
        }
        case Prim::rsqrt: {
            if (!wants(0)) break;
            Array<T>& gx = G(0);
            for (long i = 0; i < gy.size(); ++i) {
                T y = n.val[i];
                gx[i] += gy[i] * T(-0.5) * y * y * y;
            }
            break;
        }
        case Prim::mean: {
            if (!wants(0)) break;
            const auto& x = V(0);
            AxisSplit sp = split_axis(x.shape, at.axis);
            Array<T>& gx = G(0);
            T inv = T(1) / static_cast<T>(sp.n);
            for (long o = 0; o < sp.outer; ++o)
                for (long i = 0; i < sp.inner; ++i) {
                    T g = gy[o * sp.inner + i] * inv;
                    for (long j = 0; j < sp.n; ++j) gx[(o * sp.n + j) * sp.inner + i] += g;
                }
            break;
        }
        case Prim::variance: {
            if (!wants(0)) break;
            const auto& x = V(0);
            AxisSplit sp = split_axis(x.shape, at.axis);
            Array<T>& gx = G(0);
            for (long o = 0; o < sp.outer; ++o)
                for (long i = 0; i < sp.inner; ++i) {
                    long base = o * sp.n * sp.inner + i;
                    T mu = 0;
                    for (long j = 0; j < sp.n; ++j) mu += x[base + j * sp.inner];
                    mu /= static_cast<T>(sp.n);
                    T g = gy[o * sp.inner + i] * T(2) / static_cast<T>(sp.n);
                    for (long j = 0; j < sp.n; ++j)
                        gx[base + j * sp.inner] += g * (x[base + j * sp.inner] - mu);
                }
            break;
        }
        case Prim::concat: {
            AxisSplit osp = split_axis(n.val.shape, at.axis);
            long off = 0;
            for (size_t i = 0; i < n.in.size(); ++i) {
                AxisSplit sp = split_axis(V(i).shape, at.axis);
                if (wants(i)) {
                    Array<T>& gx = G(i);
                    for (long o = 0; o < sp.outer; ++o)
                        for (long j = 0; j < sp.n * sp.inner; ++j)
                            gx[o * sp.n * sp.inner + j] +=
                                gy[(o * osp.n + off) * sp.inner + j];
                }
                off += sp.n;
            }
            break;
        }
        case Prim::flatten: {
            if (!wants(0)) break;
            Array<T>& gx = G(0);
            for (long i = 0; i < gy.size(); ++i) gx[i] += gy[i];
            break;
        }
        case Prim::transpose: {
            if (!wants(0)) break;
            const auto& x = V(0);
            Array<T>& gx = G(0);
            long r = x.shape[0], c = x.shape[1];
            for (long i = 0; i < r; ++i)
                for (long j = 0; j < c; ++j) gx[i * c + j] += gy[j * r + i];
            break;
        }
        case Prim::embed_row: {
            if (!wants(0)) break;
            const auto& x = V(0);
            Array<T>& gx = G(0);
            long cols = x.shape[1];
            for (long j = 0; j < cols; ++j) gx[at.index * cols + j] += gy[j];
            break;
        }
        case Prim::l1_norm: {
            if (!wants(0)) break;
            const auto& x = V(0);
            Array<T>& gx = G(0);
            for (long i = 0; i < x.size(); ++i)
                gx[i] += gy[0] * (x[i] > T(0) ? T(1) : x[i] < T(0) ? T(-1) : T(0));
            break;
        }
        case Prim::cross_entropy: {
            if (!wants(0)) break;
            const auto& x = V(0);
            Array<T>& gx = G(0);
            long k = x.shape[0];
            std::vector<T> sm(k);
            softmax_slice(x.data(), sm.data(), k, 1);
            for (long i = 0; i < k; ++i)
                gx[i] += gy[0] * (sm[i] - (i == at.label ? T(1) : T(0)));
            break;
        }
        case Prim::bce: {
            if (!wants(0)) break;
            const auto& x = V(0);
            T s = T(1) / (T(1) + std::exp(-x[0]));
            G(0)[0] += gy[0] * (s - static_cast<T>(at.a));
            break;
        }
        case Prim::lstm_cell: {
            const auto& x = V(0);
            const auto& h = V(1);
            const auto& c = V(2);
            const auto& wx = V(3);
            const auto& wh = V(4);
            const auto& b = V(5);
            long din = x.shape[0], dh = h.shape[0];
            // Recompute gate pre-activations (cheaper than saving them for the
            // batch sizes used here).
            std::vector<T> gates(b.v.begin(), b.v.end());
            gemm_acc(wx.data(), x.data(), gates.data(), 4 * dh, din, 1, false, false);
            gemm_acc(wh.data(), h.data(), gates.data(), 4 * dh, dh, 1, false, false);
            std::vector<T> dgates(4 * dh);
            std::vector<T> dc_in(dh);
            for (long j = 0; j < dh; ++j) {
                T ig = T(1) / (T(1) + std::exp(-gates[j]));
                T fg = T(1) / (T(1) + std::exp(-gates[dh + j]));
                T gg = std::tanh(gates[2 * dh + j]);
                T og = T(1) / (T(1) + std::exp(-gates[3 * dh + j]));
                T cn = n.val[dh + j];
                T tc = std::tanh(cn);
                T dh_out = gy[j];
                T dc = gy[dh + j] + dh_out * og * (T(1) - tc * tc);
                dgates[j] = dc * gg * ig * (T(1) - ig);
                dgates[dh + j] = dc * c[j] * fg * (T(1) - fg);
                dgates[2 * dh + j] = dc * ig * (T(1) - gg * gg);
                dgates[3 * dh + j] = dh_out * tc * og * (T(1) - og);
                dc_in[j] = dc * fg;
            }
            if (wants(0))
                gemm_acc(wx.data(), dgates.data(), G(0).data(), din, 4 * dh, 1, true, false);
            if (wants(1))
                gemm_acc(wh.data(), dgates.data(), G(1).data(), dh, 4 * dh, 1, true, false);
            if (wants(2)) {
                Array<T>& gc = G(2);
                for (long j = 0; j < dh; ++j) gc[j] += dc_in[j];
            }
            if (wants(3))
                gemm_acc(dgates.data(), x.data(), G(3).data(), 4 * dh, 1, din, false, true);
            if (wants(4))
                gemm_acc(dgates.data(), h.data(), G(4).data(), 4 * dh, 1, dh, false, true);
            if (wants(5)) {
                Array<T>& gb = G(5);
                for (long j = 0; j < 4 * dh; ++j) gb[j] += dgates[j];
            }
            break;
        }
        case Prim::leaf:
            break;
    }
}

// ---------------------------------------------------------------------------
// Parameters and optimizer
// ---------------------------------------------------------------------------

template <typename T>
Parameter<T>& ParamStore<T>::add(const std::string& name, Shape shape, int fan_in, Rng& rng,
                                 bool trainable) {
    require(fan_in > 0, "fan_in must be positive for parameter ", name);
    Parameter<T> p;
    p.name = name;
    p.value = Array<T>(std::move(shape));
    double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (T& v : p.value.v) v = static_cast<T>(rng.uniform(-bound, bound));
    p.trainable = trainable;
    params_.push_back(std::move(p));
    return params_.back();
}

template <typename T>
Parameter<T>& ParamStore<T>::add_zeros(const std::string& name, Shape shape, bool trainable) {
    return add_const(name, std::move(shape), T(0), trainable);
}

template <typename T>
Parameter<T>& ParamStore<T>::add_const(const std::string& name, Shape shape, T fill,
                                       bool trainable) {
    Parameter<T> p;
    p.name = name;
    p.value = Array<T>(std::move(shape));
    std::fill(p.value.v.begin(), p.value.v.end(), fill);
    p.trainable = trainable;
    params_.push_back(std::move(p));
    return params_.back();
}

template <typename T>
Parameter<T>* ParamStore<T>::find(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return &p;
    return nullptr;
}

template <typename T>
long ParamStore<T>::scalar_count() const {
    long n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

template <typename T>
uint64_t ParamStore<T>::checksum_all() const {
    uint64_t h = 0xCBF29CE484222325ull;
    for (const auto& p : params_) {
        h = fnv1a(p.name.data(), p.name.size(), h);
        h = checksum(p.value, h);
    }
    return h;
}

template <typename T>
void optimizer_step(ParamStore<T>& params, const std::vector<Array<T>>& grads,
                    const OptConfig& opt, long step) {
    require(opt.lr > 0, "learning rate must be positive, got ", opt.lr);
    require(grads.size() == params.count(), "gradient list size ", grads.size(),
            " does not match parameter count ", params.count());
    require(step >= 1, "optimizer step index must be >= 1");
    for (size_t i = 0; i < params.count(); ++i) {
        Parameter<T>& p = params.at(i);
        if (!p.trainable) continue;
        const Array<T>& g = grads[i];
        if (g.empty()) continue;  // unreachable from loss: zero gradient
        require(g.shape == p.value.shape, "gradient shape ", shape_str(g.shape),
                " does not match parameter ", p.name, " shape ", shape_str(p.value.shape));
        if (opt.kind == OptKind::sgd) {
            T lr = static_cast<T>(opt.lr);
            for (long j = 0; j < g.size(); ++j) p.value[j] -= lr * g[j];
        } else {
            if (p.m1.empty()) {
                p.m1 = Array<T>(p.value.shape);
                p.m2 = Array<T>(p.value.shape);
            }
            T b1 = static_cast<T>(opt.beta1), b2 = static_cast<T>(opt.beta2);
            T corr1 = T(1) - static_cast<T>(std::pow(opt.beta1, static_cast<double>(step)));
            T corr2 = T(1) - static_cast<T>(std::pow(opt.beta2, static_cast<double>(step)));
            T lr = static_cast<T>(opt.lr), eps = static_cast<T>(opt.eps);
            for (long j = 0; j < g.size(); ++j) {
                p.m1[j] = b1 * p.m1[j] + (T(1) - b1) * g[j];
                p.m2[j] = b2 * p.m2[j] + (T(1) - b2) * g[j] * g[j];
                T mhat = p.m1[j] / corr1;
                T vhat = p.m2[j] / corr2;
                p.value[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }
}

template <typename T>
double clip_global_norm(std::vector<Array<T>>& grads, double max_norm) {
    double ss = 0;
    for (const auto& g : grads)
        for (const T& x : g.v) ss += static_cast<double>(x) * static_cast<double>(x);
    double norm = std::sqrt(ss);
    if (max_norm > 0 && norm > max_norm && norm > 0) {
        T s = static_cast<T>(max_norm / norm);
        for (auto& g : grads)
            for (T& x : g.v) x *= s;
    }
    return norm;
}

// ---------------------------------------------------------------------------
// Finite-difference oracle
// ---------------------------------------------------------------------------

namespace {

struct FdCase {
    std::vector<Array<double>> inputs;
    Attrs attrs;
    // inputs that receive gradients (conv bias etc. included by default)
    std::vector<bool> check;
};

Array<double> rand_arr(Shape s, Rng& rng, double lo = -2.0, double hi = 2.0) {
    Array<double> a(std::move(s));
    for (double& v : a.v) v = rng.uniform(lo, hi);
    return a;
}

// Keep relu/l1 inputs away from their kinks so central differences are valid.
void avoid_kinks(Array<double>& a, double margin) {
    for (double& v : a.v)
        if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
}

FdCase make_case(Prim op, Rng& rng) {
    FdCase c;
    switch (op) {
        case Prim::matmul:
            c.inputs = {rand_arr({3, 4}, rng), rand_arr({4, 2}, rng)};
            break;
        case Prim::conv2d: {
            c.inputs = {rand_arr({2, 3, 8, 8}, rng), rand_arr({4, 3, 3, 3}, rng),
                        rand_arr({4}, rng)};
            c.attrs.stride = 2;
            c.attrs.pad = 1;
            break;
        }
        case Prim::relu: {
            auto x = rand_arr({3, 5}, rng);
            avoid_kinks(x, 1e-3);
            c.inputs = {std::move(x)};
            break;
        }
        case Prim::sigmoid:
            c.inputs = {rand_arr({4, 3}, rng)};
            break;
        case Prim::softmax:
        case Prim::log_softmax:
            c.inputs = {rand_arr({3, 4}, rng)};
            c.attrs.axis = 1;
            break;
        case Prim::add:
        case Prim::sub:
        case Prim::mul:
            c.inputs = {rand_arr({3, 4}, rng), rand_arr({4}, rng)};
            break;
        case Prim::scale:
            c.inputs = {rand_arr({3, 4}, rng)};
            c.attrs.a = 1.7;
            break;
        case Prim::shift:
            c.inputs = {rand_arr({3, 4}, rng)};
            c.attrs.a = -0.6;
            break;
        case Prim::rsqrt:
            c.inputs = {rand_arr({3, 4}, rng, 0.5, 2.0)};
            c.attrs.a = 1e-8;
            break;
        case Prim::mean:
        case Prim::variance:
            c.inputs = {rand_arr({4, 3}, rng)};
            c.attrs.axis = 0;
            break;
        case Prim::concat:
            c.inputs = {rand_arr({2, 3}, rng), rand_arr({2, 3}, rng), rand_arr({1, 3}, rng)};
            c.attrs.axis = 0;
            break;
        case Prim::flatten:
            c.inputs = {rand_arr({2, 3, 2}, rng)};
            c.attrs.mode = 0;
            break;
        case Prim::transpose:
            c.inputs = {rand_arr({3, 4}, rng)};
            break;
        case Prim::embed_row:
            c.inputs = {rand_arr({5, 4}, rng)};
            c.attrs.index = 2;
            break;
        case Prim::l1_norm: {
            auto x = rand_arr({3, 4}, rng);
            avoid_kinks(x, 1e-3);
            c.inputs = {std::move(x)};
            break;
        }
        case Prim::cross_entropy:
            c.inputs = {rand_arr({6}, rng)};
            c.attrs.label = static_cast<int>(rng.randint(6));
            break;
        case Prim::bce:
            c.inputs = {rand_arr({1}, rng)};
            c.attrs.a = rng.coin() ? 1.0 : 0.0;
            break;
        case Prim::lstm_cell: {
            long din = 5, dh = 4;
            c.inputs = {rand_arr({static_cast<int>(din)}, rng),
                        rand_arr({static_cast<int>(dh)}, rng),
                        rand_arr({static_cast<int>(dh)}, rng),
                        rand_arr({static_cast<int>(4 * dh), static_cast<int>(din)}, rng, -0.5,
                                 0.5),
                        rand_arr({static_cast<int>(4 * dh), static_cast<int>(dh)}, rng, -0.5,
                                 0.5),
                        rand_arr({static_cast<int>(4 * dh)}, rng, -0.5, 0.5)};
            break;
        }
        case Prim::leaf:
            fail("leaf has no gradient case");
    }
    c.check.assign(c.inputs.size(), true);
    return c;
}

// Scalar functional: loss = w . flatten(primitive(inputs)).
double fd_loss(Prim op, const FdCase& c, const Array<double>& w) {
    Tape<double> tape;
    std::vector<NodeId> ids;
    for (const auto& a : c.inputs) ids.push_back(tape.leaf(a, false));
    NodeId y = tape.apply(op, ids, c.attrs);
    const Array<double>& out = tape.val(y);
    double s = 0;
    for (long i = 0; i < out.size(); ++i) s += w[i] * out[i];
    return s;
}

}  // namespace

FdReport fd_check_primitive(Prim op, int trials, double eps, double tol, uint64_t seed) {
    require(eps >= 1e-6 && eps <= 1e-4, "finite-difference step must lie in [1e-6, 1e-4], got ",
            eps);
    FdReport rep;
    rep.primitive = prim_name(op);
    rep.trials = trials;
    rep.tol = tol;
    double max_err = 0;
    for (int t = 0; t < trials; ++t) {
        Rng rng = Rng::from(seed, static_cast<uint64_t>(op), static_cast<uint64_t>(t));
        FdCase c = make_case(op, rng);

        // analytic gradients
        Tape<double> tape;
        std::vector<NodeId> ids;
        for (const auto& a : c.inputs) ids.push_back(tape.leaf(a, true));
        NodeId y = tape.apply(op, ids, c.attrs);
        Array<double> w(tape.val(y).shape);
        for (double& x : w.v) x = rng.uniform(-1.0, 1.0);
        NodeId wid = tape.leaf(w, false);
        NodeId prod = tape.mul(y, wid);
        NodeId flat = tape.flatten(prod, 0);
        // reduce to scalar via mean * n
        NodeId m = tape.mean(flat, 0);
        NodeId loss = tape.scale(m, static_cast<double>(tape.val(flat).size()));
        tape.backward(loss);

        for (size_t i = 0; i < c.inputs.size(); ++i) {
            if (!c.check[i]) continue;
            const Array<double>& ga = tape.grad(ids[i]);
            // probe a bounded number of coordinates per input
            long n = c.inputs[i].size();
            long probes = std::min<long>(n, 24);
            for (long pi = 0; pi < probes; ++pi) {
                long j = probes == n ? pi : rng.randint(n);
                FdCase cp = c;
                cp.inputs[i][j] += eps;
                double up = fd_loss(op, cp, w);
                cp.inputs[i][j] -= 2 * eps;
                double dn = fd_loss(op, cp, w);
                double fd = (up - dn) / (2 * eps);
                double err = std::abs(fd - ga[j]) /
                             std::max({1.0, std::abs(fd), std::abs(ga[j])});
                max_err = std::max(max_err, err);
            }
        }
    }
    rep.max_rel_err = max_err;
    rep.pass = max_err < tol;
    return rep;
}

std::vector<FdReport> fd_check_all(int trials, double eps, double tol, uint64_t seed) {
    std::vector<FdReport> out;
    for (Prim p : all_primitives()) out.push_back(fd_check_primitive(p, trials, eps, tol, seed));
    return out;
}

template class Tape<float>;
template class Tape<double>;
template class ParamStore<float>;
template class ParamStore<double>;
template void optimizer_step<float>(ParamStore<float>&, const std::vector<Array<float>>&,
                                    const OptConfig&, long);
template void optimizer_step<double>(ParamStore<double>&, const std::vector<Array<double>>&,
                                     const OptConfig&, long);
template double clip_global_norm<float>(std::vector<Array<float>>&, double);
template double clip_global_norm<double>(std::vector<Array<double>>&, double);

}  // namespace corelnet
