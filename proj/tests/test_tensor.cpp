#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>

#include "corelnet/tensor.hpp"

using namespace corelnet;

namespace {

Array<double> arr(Shape s, std::vector<double> v) { return Array<double>(std::move(s), std::move(v)); }

// CORELNET_REAL=float32 runs the precision-agnostic property tests in the
// 32-bit training representation instead of the 64-bit checking one.
bool use_float32() {
    const char* v = std::getenv("CORELNET_REAL");
    return v && (std::strcmp(v, "float32") == 0 || std::strcmp(v, "float") == 0);
}

template <typename T>
void softmax_property() {
    Rng rng(3);
    Tape<T> t;
    Array<T> x({7, 11});
    for (auto& v : x.v) v = static_cast<T>(rng.uniform(-4, 4));
    NodeId y = t.softmax(t.leaf(x), 1);
    for (int r = 0; r < 7; ++r) {
        double s = 0;
        for (int c = 0; c < 11; ++c) {
            double v = t.val(y)[r * 11 + c];
            CHECK(v >= 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-6);
    }
}

}  // namespace

TEST_CASE("softmax of equal logits is uniform") {
    Tape<double> t;
    NodeId x = t.leaf(arr({2}, {0.0, 0.0}));
    NodeId y = t.softmax(x, 0);
    CHECK(t.val(y)[0] == doctest::Approx(0.5));
    CHECK(t.val(y)[1] == doctest::Approx(0.5));
}

TEST_CASE("softmax rows are stochastic (CORELNET_REAL selects the width)") {
    if (use_float32())
        softmax_property<float>();
    else
        softmax_property<double>();
}

TEST_CASE("conv2d shape rule") {
    Tape<float> t;
    NodeId x = t.leaf(Array<float>({1, 3, 32, 32}));
    NodeId k = t.leaf(Array<float>({32, 3, 4, 4}));
    NodeId b = t.leaf(Array<float>({32}));
    NodeId y = t.conv2d(x, k, b, 2, 1);
    CHECK(t.val(y).shape == Shape{1, 32, 16, 16});
}

TEST_CASE("matmul identity") {
    Rng rng(5);
    Tape<double> t;
    Array<double> a({3, 3});
    for (auto& v : a.v) v = rng.uniform(-2, 2);
    Array<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    NodeId y = t.matmul(t.leaf(a), t.leaf(eye));
    for (int i = 0; i < 9; ++i) CHECK(t.val(y)[i] == doctest::Approx(a[i]));
}

TEST_CASE("shape mismatch reports both shapes") {
    Tape<double> t;
    NodeId a = t.leaf(Array<double>({2, 3}));
    NodeId b = t.leaf(Array<double>({4, 2}));
    try {
        t.matmul(a, b);
        FAIL("expected a shape error");
    } catch (const Error& e) {
        std::string msg = e.what();
        CHECK(msg.find("[2,3]") != std::string::npos);
        CHECK(msg.find("[4,2]") != std::string::npos);
    }
}

TEST_CASE("unknown primitive name is rejected") {
    CHECK_THROWS_AS(prim_from_name("frobnicate"), Error);
    CHECK(prim_from_name("softmax") == Prim::softmax);
}

TEST_CASE("relu subgradient, zero at negative and at zero") {
    Tape<double> t;
    NodeId x = t.leaf(arr({3}, {1.0, -1.0, 0.0}), true);
    NodeId y = t.relu(x);
    NodeId s = t.scale(t.mean(y, 0), 3.0);  // sum
    t.backward(s);
    CHECK(t.grad(x)[0] == doctest::Approx(1.0));
    CHECK(t.grad(x)[1] == doctest::Approx(0.0));
    CHECK(t.grad(x)[2] == doctest::Approx(0.0));
}

TEST_CASE("cross-entropy gradient equals softmax minus onehot") {
    Rng rng(11);
    Tape<double> t;
    Array<double> logits({5});
    for (auto& v : logits.v) v = rng.uniform(-2, 2);
    NodeId x = t.leaf(logits, true);
    NodeId loss = t.cross_entropy(x, 3);
    t.backward(loss);
    NodeId sm = t.softmax(t.leaf(logits), 0);
    for (int i = 0; i < 5; ++i) {
        double expect = t.val(sm)[i] - (i == 3 ? 1.0 : 0.0);
        CHECK(t.grad(x)[i] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("backward rejects non-scalar loss and empty tape") {
    Tape<double> t;
    CHECK_THROWS_AS(t.backward(0), Error);
    NodeId x = t.leaf(Array<double>({2, 2}), true);
    CHECK_THROWS_AS(t.backward(x), Error);
}

TEST_CASE("backward of a sum of losses is the sum of backward passes") {
    Rng rng(13);
    Array<double> xv({4, 3});
    for (auto& v : xv.v) v = rng.uniform(-1.5, 1.5);

    auto loss1 = [](Tape<double>& t, NodeId x) {
        return t.cross_entropy(t.flatten(t.mean(t.sigmoid(x), 0), 0), 1);
    };
    auto loss2 = [](Tape<double>& t, NodeId x) {
        return t.l1_norm(t.softmax(x, 1));
    };

    Tape<double> ta;
    NodeId xa = ta.leaf(xv, true);
    ta.backward(ta.add(loss1(ta, xa), loss2(ta, xa)));

    Tape<double> tb;
    NodeId xb = tb.leaf(xv, true);
    tb.backward(loss1(tb, xb));
    Tape<double> tc;
    NodeId xc = tc.leaf(xv, true);
    tc.backward(loss2(tc, xc));

    for (long i = 0; i < xv.size(); ++i)
        CHECK(std::abs(ta.grad(xa)[i] - (tb.grad(xb)[i] + tc.grad(xc)[i])) < 1e-6);
}

TEST_CASE("finite differences: every primitive") {
    auto reports = fd_check_all(12, 1e-5, 1e-5, 99);
    for (const auto& r : reports) {
        INFO(r.primitive, " max rel err ", r.max_rel_err);
        CHECK(r.pass);
    }
}

TEST_CASE("finite differences: per-spec tolerances") {
    auto sig = fd_check_primitive(Prim::sigmoid, 100, 1e-5, 1e-6);
    INFO("sigmoid err ", sig.max_rel_err);
    CHECK(sig.pass);
    auto sm = fd_check_primitive(Prim::softmax, 100, 1e-5, 1e-6);
    INFO("softmax err ", sm.max_rel_err);
    CHECK(sm.pass);
    auto lstm = fd_check_primitive(Prim::lstm_cell, 50, 1e-5, 1e-5);
    INFO("lstm err ", lstm.max_rel_err);
    CHECK(lstm.pass);
    auto conv = fd_check_primitive(Prim::conv2d, 25, 1e-5, 1e-6);
    INFO("conv err ", conv.max_rel_err);
    CHECK(conv.pass);
    CHECK_THROWS_AS(fd_check_primitive(Prim::sigmoid, 1, 1e-3, 1e-5), Error);
}

TEST_CASE("sgd step applies -lr*g; frozen parameters are untouched") {
    Rng rng(17);
    ParamStore<float> ps;
    ps.add("w", {4}, 4, rng);
    ps.add("frozen", {4}, 4, rng, false);
    Array<float> w0 = ps.at(0).value;
    Array<float> f0 = ps.at(1).value;
    std::vector<Array<float>> grads(2);
    grads[0] = Array<float>({4});
    grads[1] = Array<float>({4});
    for (int i = 0; i < 4; ++i) grads[0][i] = grads[1][i] = static_cast<float>(i + 1);

    OptConfig opt;
    opt.kind = OptKind::sgd;
    opt.lr = 5e-4;
    optimizer_step(ps, grads, opt, 1);
    for (int i = 0; i < 4; ++i)
        CHECK(ps.at(0).value[i] == doctest::Approx(w0[i] - 5e-4f * grads[0][i]));
    CHECK(std::memcmp(ps.at(1).value.data(), f0.data(), 4 * sizeof(float)) == 0);
}

TEST_CASE("first adam step is approximately -lr*sign(g)") {
    Rng rng(19);
    ParamStore<double> ps;
    ps.add("w", {6}, 6, rng);
    Array<double> w0 = ps.at(0).value;
    std::vector<Array<double>> grads(1);
    grads[0] = Array<double>({6});
    for (int i = 0; i < 6; ++i) grads[0][i] = (i % 2 ? 1.0 : -1.0) * (0.5 + i);

    OptConfig opt;
    optimizer_step(ps, grads, opt, 1);
    for (int i = 0; i < 6; ++i) {
        double delta = ps.at(0).value[i] - w0[i];
        double expect = -opt.lr * (grads[0][i] > 0 ? 1.0 : -1.0);
        CHECK(delta == doctest::Approx(expect).epsilon(1e-4));
    }
}

TEST_CASE("optimizer rejects non-positive learning rate") {
    ParamStore<float> ps;
    std::vector<Array<float>> grads;
    OptConfig opt;
    opt.lr = 0.0;
    CHECK_THROWS_AS(optimizer_step(ps, grads, opt, 1), Error);
}

TEST_CASE("gradient clipping by global norm") {
    std::vector<Array<float>> grads(2);
    grads[0] = Array<float>({2}, {3.0f, 4.0f});
    grads[1] = Array<float>({1}, {12.0f});
    double norm = clip_global_norm(grads, 10.0);
    CHECK(norm == doctest::Approx(13.0));
    double ss = 0;
    for (auto& g : grads)
        for (float v : g.v) ss += v * v;
    CHECK(std::sqrt(ss) == doctest::Approx(10.0).epsilon(1e-5));
}

TEST_CASE("unreachable parameters get zero (absent) gradients") {
    Tape<double> t;
    NodeId used = t.leaf(arr({2}, {1.0, 2.0}), true);
    NodeId unused = t.leaf(arr({2}, {3.0, 4.0}), true);
    NodeId loss = t.mean(t.mul(used, used), 0);
    t.backward(loss);
    CHECK(t.has_grad(used));
    CHECK(!t.has_grad(unused));
    (void)unused;
}

TEST_CASE("broadcast add/sub/mul over leading axis and scalars") {
    Tape<double> t;
    NodeId a = t.leaf(arr({2, 3}, {1, 2, 3, 4, 5, 6}), true);
    NodeId b = t.leaf(arr({3}, {10, 20, 30}), true);
    NodeId y = t.add(a, b);
    CHECK(t.val(y).v == std::vector<double>{11, 22, 33, 14, 25, 36});
    NodeId s = t.leaf(arr({1}, {2.0}), true);
    NodeId z = t.mul(a, s);
    CHECK(t.val(z)[5] == doctest::Approx(12.0));
    // loss = 2 * sum(y + z)
    NodeId loss = t.scale(t.mean(t.flatten(t.add(y, z), 0), 0), 12.0);
    t.backward(loss);
    CHECK(t.grad(b)[0] == doctest::Approx(4.0));  // two rows, each weighted 2
    CHECK(t.grad(s)[0] == doctest::Approx(42.0)); // 2 * sum of a
}

TEST_CASE("lstm-cell-step output layout holds h and c rows") {
    Rng rng(23);
    Tape<double> t;
    Array<double> x({3}), h({2}), c({2}), wx({8, 3}), wh({8, 2}), b({8});
    for (auto* a : {&x, &h, &c}) for (auto& v : a->v) v = rng.uniform(-1, 1);
    for (auto* a : {&wx, &wh, &b}) for (auto& v : a->v) v = rng.uniform(-0.5, 0.5);
    NodeId out = t.lstm_cell(t.leaf(x), t.leaf(h), t.leaf(c), t.leaf(wx), t.leaf(wh), t.leaf(b));
    CHECK(t.val(out).shape == Shape{2, 2});
    NodeId hrow = t.embed_row(out, 0);
    CHECK(t.val(hrow).shape == Shape{1, 2});
}

TEST_CASE("embedding lookup rejects out-of-range rows") {
    Tape<double> t;
    NodeId table = t.leaf(Array<double>({4, 3}));
    CHECK_THROWS_AS(t.embed_row(table, 4), Error);
    CHECK_THROWS_AS(t.embed_row(table, -1), Error);
}
