#include "corelnet/training.hpp"

#include <chrono>
#include <cmath>

namespace corelnet {

std::string variant_name(const ModelConfig& cfg) {
    std::vector<std::string> parts;
    // untied attention is the transformer baseline, not an ablation
    bool default_sim = cfg.head == HeadKind::transformer ? cfg.sim == SimMode::asymmetric
                                                         : cfg.sim == SimMode::symmetric;
    if (!default_sim) parts.push_back(cfg.sim == SimMode::asymmetric ? "asym" : "sym");
    if (cfg.concat_sensory) parts.push_back("concat");
    if (cfg.random_encoder) parts.push_back("random_enc");
    if (cfg.l1_lambda > 0) parts.push_back("l1");
    if (parts.empty()) return "base";
    std::string out = parts[0];
    for (size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
    return out;
}

ModelConfig resolve_model(ModelConfig base, const TaskConfig& task, const TaskContext& ctx) {
    TaskInfo info = task_info(task);
    base.seq_len = info.seq_len;
    base.num_classes = info.num_classes;
    base.enc.image_size = task.is_game() ? 12 : ctx.image_size;
    return base;
}

double evaluate(const Model<float>& model, const std::vector<Episode>& episodes) {
    require(!episodes.empty(), "evaluate needs at least one episode");
    const int batch = 64;
    long correct = 0;
    for (size_t at = 0; at < episodes.size(); at += batch) {
        Tape<float> tape;
        auto bound = model.bind(tape);
        std::vector<const Episode*> eps;
        for (size_t i = at; i < std::min(episodes.size(), at + batch); ++i)
            eps.push_back(&episodes[i]);
        auto out = model.forward_batch(bound, eps);
        for (size_t i = 0; i < eps.size(); ++i) {
            const Array<float>& logits = tape.val(out.logits[i]);
            int best = 0;
            for (int c = 1; c < logits.size(); ++c)
                if (logits[c] > logits[best]) best = c;  // ties keep the lowest index
            correct += best == eps[i]->label ? 1 : 0;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(episodes.size());
}

namespace {

struct EvalSets {
    std::vector<std::string> names;
    std::vector<TaskConfig> cfgs;  // test-side task configs (games swap family)
};

EvalSets eval_sets(const TaskConfig& task) {
    EvalSets s;
    if (task.is_game()) {
        TaskConfig hex = task;
        hex.game_family = GlyphFamily::hexomino;
        TaskConfig str = task;
        str.game_family = GlyphFamily::stripe;
        s.names = {"hexominoes", "stripes"};
        s.cfgs = {hex, str};
    } else {
        s.names = {"holdout"};
        s.cfgs = {task};
    }
    return s;
}

}  // namespace

RunReport train_run(const TaskContext& ctx, const TaskConfig& task, const ModelConfig& model_cfg,
                    const TrainConfig& train, int m, uint64_t seed,
                    std::unique_ptr<Model<float>>* trained_out) {
    auto t0 = std::chrono::steady_clock::now();
    require(train.iterations >= 1, "iterations must be >= 1, got ", train.iterations);
    require(train.batch_size >= 1, "batch size must be >= 1, got ", train.batch_size);

    ModelConfig mc = resolve_model(model_cfg, task, ctx);
    Model<float> model(mc, mix64(seed ^ 0xA11CE));
    Split split = split_glyphs(task, m, mix64(seed ^ 0x5B117));
    const uint64_t train_stream = mix64(seed ^ 0x7EA13);
    const uint64_t eval_stream = mix64(seed ^ 0xE7A1);  // disjoint from training episodes

    RunReport rep;
    rep.task = task.name();
    rep.model = head_name(mc.head);
    rep.variant = variant_name(mc);
    rep.sim_mode = mc.sim == SimMode::symmetric ? "symmetric" : "asymmetric";
    rep.encoder_mode = mc.random_encoder ? "random" : "learned";
    rep.concat_sensory = mc.concat_sensory;
    rep.l1_lambda = mc.l1_lambda;
    rep.m = m;
    rep.seed = seed;
    rep.iterations = train.iterations;
    rep.batch_size = train.batch_size;
    rep.lr = train.opt.lr;
    rep.optimizer = train.opt.kind == OptKind::adam ? "adam" : "sgd";
    rep.param_count = model.params().scalar_count();
    rep.status = "ok";

    EvalSets evals = eval_sets(task);
    rep.test_sets = evals.names;

    auto run_eval = [&](long iter, int n_episodes) {
        EvalPoint pt;
        pt.iteration = iter;
        std::vector<Episode> train_eps =
            gen_episodes(ctx, task, split, false, eval_stream ^ 0x11, 0, n_episodes);
        pt.train_acc = evaluate(model, train_eps);
        for (size_t s = 0; s < evals.cfgs.size(); ++s) {
            std::vector<Episode> test_eps =
                gen_episodes(ctx, evals.cfgs[s], split, true, eval_stream ^ (0x22 + s), 0,
                             n_episodes);
            pt.test_accs.push_back(evaluate(model, test_eps));
        }
        return pt;
    };

    rep.losses.reserve(train.iterations);
    for (long iter = 0; iter < train.iterations; ++iter) {
        std::vector<Episode> batch = gen_episodes(ctx, task, split, false, train_stream,
                                                  iter * train.batch_size, train.batch_size);
        Tape<float> tape;
        auto bound = model.bind(tape);
        std::vector<const Episode*> eps;
        for (const auto& e : batch) eps.push_back(&e);
        auto out = model.forward_batch(bound, eps);
        float loss = tape.val(out.loss)[0];
        rep.losses.push_back(loss);
        if (!std::isfinite(loss)) {
            rep.status = "failed";
            break;
        }
        tape.backward(out.loss);

        std::vector<Array<float>> grads(model.params().count());
        bool finite = true;
        for (size_t i = 0; i < grads.size(); ++i) {
            if (!model.params().at(i).trainable) continue;
            NodeId id = bound.ids[i];
            if (tape.has_grad(id)) {
                grads[i] = tape.grad(id);
                finite = finite && grads[i].all_finite();
            }
        }
        if (!finite) {
            rep.status = "failed";
            break;
        }
        clip_global_norm(grads, train.clip_norm);
        optimizer_step(model.params(), grads, train.opt, iter + 1);

        if (train.eval_every > 0 &&
            ((iter + 1) % train.eval_every == 0 && iter + 1 < train.iterations))
            rep.curve.push_back(run_eval(iter + 1, train.eval_episodes));
    }

    if (rep.status == "ok") {
        int final_n = train.final_eval_episodes > 0 ? train.final_eval_episodes
                                                    : train.eval_episodes;
        EvalPoint last = run_eval(train.iterations, final_n);
        rep.curve.push_back(last);
        rep.final_train = last.train_acc;
        rep.final_test = last.test_accs;
    } else {
        rep.final_train = 0;
        rep.final_test.assign(evals.names.size(), 0.0);
    }

    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (trained_out) *trained_out = std::make_unique<Model<float>>(std::move(model));
    return rep;
}

}  // namespace corelnet
