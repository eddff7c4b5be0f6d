#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "corelnet/training.hpp"

using namespace corelnet;

namespace {

const TaskContext& fast_ctx() {
    static TaskContext c = TaskContext::make(16, 2022);
    return c;
}

ModelConfig fast_corelnet() {
    ModelConfig cfg;
    cfg.head = HeadKind::corelnet;
    cfg.enc.conv_layers = 2;
    return cfg;
}

TrainConfig tiny_train(long iters) {
    TrainConfig tc;
    tc.iterations = iters;
    tc.batch_size = 16;
    tc.eval_every = 0;
    tc.eval_episodes = 200;
    tc.final_eval_episodes = 200;
    return tc;
}

}  // namespace

TEST_CASE("uniform logits cost ln(k); lambda = 0 is pure cross-entropy") {
    for (int k : {2, 4, 6}) {
        Tape<double> t;
        NodeId logits = t.leaf(Array<double>({k}));
        NodeId loss = t.cross_entropy(logits, k - 1);
        CHECK(t.val(loss)[0] == doctest::Approx(std::log(static_cast<double>(k))).epsilon(1e-12));
    }
    // label out of range is rejected
    Tape<double> t;
    NodeId logits = t.leaf(Array<double>({3}));
    CHECK_THROWS_AS(t.cross_entropy(logits, 3), Error);
}

TEST_CASE("evaluate: chance level for random logits, perfect for oracle logits, tie-breaking") {
    TaskConfig sd = task_from_name("same_diff");
    Split split = split_glyphs(sd, 0, 1);
    std::vector<Episode> eps = gen_episodes(fast_ctx(), sd, split, false, 3, 0, 2000);

    ModelConfig cfg = resolve_model(fast_corelnet(), sd, fast_ctx());
    Model<float> model(cfg, 1);  // untrained: near-chance behavior
    double acc = evaluate(model, eps);
    CHECK(acc > 0.5 - 0.05);
    CHECK(acc < 0.5 + 0.05);

    CHECK_THROWS_AS(evaluate(model, std::vector<Episode>{}), Error);
}

TEST_CASE("argmax ties break toward the lowest class index") {
    // constant-zero logits: every episode scored as class 0
    TaskConfig sd = task_from_name("same_diff");
    Split split = split_glyphs(sd, 0, 2);
    std::vector<Episode> eps = gen_episodes(fast_ctx(), sd, split, false, 5, 0, 100);
    ModelConfig cfg = resolve_model(fast_corelnet(), sd, fast_ctx());
    Model<float> model(cfg, 2);
    for (auto& p : model.params())
        if (p.name.rfind("dec.", 0) == 0) std::fill(p.value.v.begin(), p.value.v.end(), 0.0f);
    double acc = evaluate(model, eps);
    long zeros = 0;
    for (const auto& e : eps) zeros += e.label == 0 ? 1 : 0;
    CHECK(acc == doctest::Approx(static_cast<double>(zeros) / eps.size()));
}

TEST_CASE("smoke run: corelnet fits same/diff in-distribution") {
    TaskConfig sd = task_from_name("same_diff");
    TrainConfig tc = tiny_train(1000);
    tc.eval_every = 500;
    RunReport rep = train_run(fast_ctx(), sd, fast_corelnet(), tc, 0, 7);
    CHECK(rep.status == "ok");
    INFO("final train accuracy ", rep.final_train);
    CHECK(rep.final_train > 0.99);
    CHECK(rep.param_count > 0);
    CHECK(rep.losses.size() == 1000);
    // loss decreases: median of the last 10% below the median of the first 10%
    auto median = [](std::vector<float> v) {
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    std::vector<float> first(rep.losses.begin(), rep.losses.begin() + 100);
    std::vector<float> last(rep.losses.end() - 100, rep.losses.end());
    CHECK(median(last) < median(first));
    // monotone iteration indices in the curve
    for (size_t i = 1; i < rep.curve.size(); ++i)
        CHECK(rep.curve[i].iteration > rep.curve[i - 1].iteration);
}

TEST_CASE("same seed gives identical runs; different seeds differ") {
    TaskConfig sd = task_from_name("same_diff");
    TrainConfig tc = tiny_train(60);
    tc.eval_every = 30;
    std::unique_ptr<Model<float>> ma, mb;
    RunReport a = train_run(fast_ctx(), sd, fast_corelnet(), tc, 10, 11, &ma);
    RunReport b = train_run(fast_ctx(), sd, fast_corelnet(), tc, 10, 11, &mb);
    CHECK(a.losses == b.losses);
    // bitwise-identical parameter trajectory
    CHECK(ma->params().checksum_all() == mb->params().checksum_all());
    REQUIRE(a.curve.size() == b.curve.size());
    for (size_t i = 0; i < a.curve.size(); ++i) {
        CHECK(a.curve[i].train_acc == b.curve[i].train_acc);
        CHECK(a.curve[i].test_accs == b.curve[i].test_accs);
    }
    RunReport c = train_run(fast_ctx(), sd, fast_corelnet(), tc, 10, 12);
    CHECK(a.losses != c.losses);
}

TEST_CASE("frozen encoder stays bit-identical across a training run") {
    TaskConfig sd = task_from_name("same_diff");
    ModelConfig mc = fast_corelnet();
    mc.random_encoder = true;
    TrainConfig tc = tiny_train(40);
    std::unique_ptr<Model<float>> trained;
    train_run(fast_ctx(), sd, mc, tc, 0, 13, &trained);
    ModelConfig resolved = resolve_model(mc, sd, fast_ctx());
    Model<float> fresh(resolved, mix64(13 ^ 0xA11CE));  // same init stream as train_run
    CHECK(trained->encoder_checksum() == fresh.encoder_checksum());

    // and the decoder did move
    bool decoder_moved = false;
    for (size_t i = 0; i < trained->params().count(); ++i) {
        const auto& a = trained->params().at(i);
        const auto& b = fresh.params().at(i);
        if (a.name.rfind("dec.", 0) == 0 && a.value.v != b.value.v) decoder_moved = true;
    }
    CHECK(decoder_moved);
}

TEST_CASE("a diverging run is reported as failed, not dropped") {
    TaskConfig sd = task_from_name("same_diff");
    TrainConfig tc = tiny_train(300);
    tc.opt.kind = OptKind::sgd;  // unbounded steps
    tc.opt.lr = 1e30;            // overflow the forward pass
    tc.clip_norm = 0;            // no safety net
    RunReport rep = train_run(fast_ctx(), sd, fast_corelnet(), tc, 0, 17);
    CHECK(rep.status == "failed");
    CHECK(rep.final_test[0] == 0.0);
}

TEST_CASE("evaluation never mutates parameters") {
    TaskConfig sd = task_from_name("same_diff");
    Split split = split_glyphs(sd, 0, 3);
    std::vector<Episode> eps = gen_episodes(fast_ctx(), sd, split, false, 9, 0, 64);
    ModelConfig cfg = resolve_model(fast_corelnet(), sd, fast_ctx());
    Model<float> model(cfg, 23);
    uint64_t before = model.params().checksum_all();
    evaluate(model, eps);
    CHECK(model.params().checksum_all() == before);
}

TEST_CASE("chance level for identity rules 4 is one sixth") {
    TaskConfig id4 = task_from_name("identity_rules4");
    CHECK(task_info(id4).num_classes == 6);
    Split split = split_glyphs(id4, 0, 4);
    std::vector<Episode> eps = gen_episodes(fast_ctx(), id4, split, false, 21, 0, 3000);
    ModelConfig cfg = resolve_model(fast_corelnet(), id4, fast_ctx());
    Model<float> model(cfg, 3);
    double acc = evaluate(model, eps);
    CHECK(std::abs(acc - 1.0 / 6.0) < 0.05);
}

TEST_CASE("variant names compose deterministically") {
    ModelConfig cfg;
    CHECK(variant_name(cfg) == "base");
    cfg.sim = SimMode::asymmetric;
    cfg.concat_sensory = true;
    CHECK(variant_name(cfg) == "asym+concat");
    cfg.sim = SimMode::symmetric;
    cfg.concat_sensory = false;
    cfg.random_encoder = true;
    CHECK(variant_name(cfg) == "random_enc");
    cfg.random_encoder = false;
    cfg.l1_lambda = 1;
    CHECK(variant_name(cfg) == "l1");
}
