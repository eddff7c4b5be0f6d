#pragma once

#include <array>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "corelnet/common.hpp"

namespace corelnet {

// Primitive set of the reverse-mode engine. Forward evaluation is eager and
// every application is appended to the owning Tape.
enum class Prim : uint8_t {
    leaf,
    matmul,
    conv2d,
    relu,
    sigmoid,
    softmax,
    log_softmax,
    add,
    sub,
    mul,
    scale,
    shift,
    rsqrt,
    mean,
    variance,
    concat,
    flatten,
    transpose,
    embed_row,
    l1_norm,
    cross_entropy,
    bce,
    lstm_cell,
};

const char* prim_name(Prim p);
Prim prim_from_name(const std::string& name);
std::vector<Prim> all_primitives();

// Static attributes of a primitive application.
struct Attrs {
    int axis = 0;       // softmax/log_softmax/mean/variance/concat
    int stride = 1;     // conv2d
    int pad = 0;        // conv2d
    int index = 0;      // embed_row
    int label = 0;      // cross_entropy
    int mode = 0;       // flatten: 0 -> 1-d, 1 -> keep axis 0, 2 -> [1, n]
    double a = 0.0;     // scale/shift factor, rsqrt eps, bce target
};

using NodeId = int32_t;

template <typename T>
class Tape {
public:
    struct Node {
        Prim op = Prim::leaf;
        std::vector<NodeId> in;
        Attrs attrs;
        Array<T> val;
        Array<T> grad;   // empty until backward touches this node
        bool needs_grad = false;
    };

    NodeId leaf(Array<T> value, bool needs_grad = false);
    NodeId apply(Prim op, const std::vector<NodeId>& inputs, Attrs attrs = {});

    // Convenience builders.
    NodeId matmul(NodeId a, NodeId b) { return apply(Prim::matmul, {a, b}); }
    NodeId conv2d(NodeId x, NodeId k, NodeId bias, int stride, int pad) {
        Attrs at;
        at.stride = stride;
        at.pad = pad;
        return apply(Prim::conv2d, {x, k, bias}, at);
    }
    NodeId relu(NodeId x) { return apply(Prim::relu, {x}); }
    NodeId sigmoid(NodeId x) { return apply(Prim::sigmoid, {x}); }
    NodeId softmax(NodeId x, int axis) {
        Attrs at;
        at.axis = axis;
        return apply(Prim::softmax, {x}, at);
    }
    NodeId log_softmax(NodeId x, int axis) {
        Attrs at;
        at.axis = axis;
        return apply(Prim::log_softmax, {x}, at);
    }
    NodeId add(NodeId a, NodeId b) { return apply(Prim::add, {a, b}); }
    NodeId sub(NodeId a, NodeId b) { return apply(Prim::sub, {a, b}); }
    NodeId mul(NodeId a, NodeId b) { return apply(Prim::mul, {a, b}); }
    NodeId scale(NodeId x, double c) {
        Attrs at;
        at.a = c;
        return apply(Prim::scale, {x}, at);
    }
    NodeId shift(NodeId x, double c) {
        Attrs at;
        at.a = c;
        return apply(Prim::shift, {x}, at);
    }
    NodeId rsqrt(NodeId x, double eps) {
        Attrs at;
        at.a = eps;
        return apply(Prim::rsqrt, {x}, at);
    }
    NodeId mean(NodeId x, int axis) {
        Attrs at;
        at.axis = axis;
        return apply(Prim::mean, {x}, at);
    }
    NodeId variance(NodeId x, int axis) {
        Attrs at;
        at.axis = axis;
        return apply(Prim::variance, {x}, at);
    }
    NodeId concat(const std::vector<NodeId>& xs, int axis) {
        Attrs at;
        at.axis = axis;
        return apply(Prim::concat, xs, at);
    }
    NodeId flatten(NodeId x, int mode = 0) {
        Attrs at;
        at.mode = mode;
        return apply(Prim::flatten, {x}, at);
    }
    NodeId transpose(NodeId x) { return apply(Prim::transpose, {x}); }
    NodeId embed_row(NodeId table, int row) {
        Attrs at;
        at.index = row;
        return apply(Prim::embed_row, {table}, at);
    }
    NodeId l1_norm(NodeId x) { return apply(Prim::l1_norm, {x}); }
    NodeId cross_entropy(NodeId logits, int label) {
        Attrs at;
        at.label = label;
        return apply(Prim::cross_entropy, {logits}, at);
    }
    NodeId bce(NodeId logit, double target) {
        Attrs at;
        at.a = target;
        return apply(Prim::bce, {logit}, at);
    }
    NodeId lstm_cell(NodeId x, NodeId h, NodeId c, NodeId wx, NodeId wh, NodeId b) {
        return apply(Prim::lstm_cell, {x, h, c, wx, wh, b});
    }

    const Array<T>& val(NodeId id) const { return nodes_[id].val; }
    const Array<T>& grad(NodeId id) const;
    bool has_grad(NodeId id) const { return !nodes_[id].grad.empty(); }
    bool needs_grad(NodeId id) const { return nodes_[id].needs_grad; }
    size_t size() const { return nodes_.size(); }
    Prim op_of(NodeId id) const { return nodes_[id].op; }
    const std::vector<NodeId>& inputs_of(NodeId id) const { return nodes_[id].in; }

    // Reverse pass from a scalar loss. Visits each node at most once, in
    // reverse topological order (the tape order itself).
    void backward(NodeId loss);

    void reset() { nodes_.clear(); }

private:
    // deque keeps value/grad references stable while the tape grows
    std::deque<Node> nodes_;

    void check_id(NodeId id) const {
        require(id >= 0 && id < static_cast<NodeId>(nodes_.size()), "node id ", id,
                " out of range (tape has ", nodes_.size(), " nodes)");
    }
    Array<T> eval(Prim op, const std::vector<NodeId>& in, const Attrs& at) const;
    void backprop_node(NodeId id);
    Array<T>& grad_buf(NodeId id);
};

// Trainable (or frozen) model parameter with optimizer state.
template <typename T>
struct Parameter {
    std::string name;
    Array<T> value;
    Array<T> m1, m2;  // adaptive-optimizer moments, allocated lazily
    bool trainable = true;
};

enum class OptKind { sgd, adam };

struct OptConfig {
    OptKind kind = OptKind::adam;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class ParamStore {
public:
    // uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)]
    Parameter<T>& add(const std::string& name, Shape shape, int fan_in, Rng& rng,
                      bool trainable = true);
    Parameter<T>& add_zeros(const std::string& name, Shape shape, bool trainable = true);
    Parameter<T>& add_const(const std::string& name, Shape shape, T fill, bool trainable = true);

    Parameter<T>& at(size_t i) { return params_[i]; }
    const Parameter<T>& at(size_t i) const { return params_[i]; }
    Parameter<T>* find(const std::string& name);
    size_t count() const { return params_.size(); }
    long scalar_count() const;
    uint64_t checksum_all() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::vector<Parameter<T>> params_;
};

// One optimizer step over every trainable parameter. `grads` runs parallel to
// the store (empty array = parameter unreachable from the loss, treated as a
// zero gradient). `step` counts completed steps including this one (1-based)
// for bias correction.
template <typename T>
void optimizer_step(ParamStore<T>& params, const std::vector<Array<T>>& grads,
                    const OptConfig& opt, long step);

// Global-norm gradient clipping. Returns the pre-clip norm.
template <typename T>
double clip_global_norm(std::vector<Array<T>>& grads, double max_norm);

// Finite-difference gradient oracle. Draws random inputs, wraps the primitive
// output in a fixed random linear functional, and compares reverse-mode
// gradients against central differences.
struct FdReport {
    std::string primitive;
    int trials = 0;
    double max_rel_err = 0.0;
    double tol = 0.0;
    bool pass = false;
};

FdReport fd_check_primitive(Prim op, int trials, double eps, double tol, uint64_t seed = 7);
std::vector<FdReport> fd_check_all(int trials, double eps, double tol, uint64_t seed = 7);

extern template class Tape<float>;
extern template class Tape<double>;
extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template void optimizer_step<float>(ParamStore<float>&, const std::vector<Array<float>>&,
                                           const OptConfig&, long);
extern template void optimizer_step<double>(ParamStore<double>&, const std::vector<Array<double>>&,
                                            const OptConfig&, long);
extern template double clip_global_norm<float>(std::vector<Array<float>>&, double);
extern template double clip_global_norm<double>(std::vector<Array<double>>&, double);

}  // namespace corelnet
