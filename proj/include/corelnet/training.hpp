#pragma once

#include <memory>
#include <string>
#include <vector>

#include "corelnet/models.hpp"
#include "corelnet/tasks.hpp"
#include "corelnet/tensor.hpp"

namespace corelnet {

struct TrainConfig {
    long iterations = 5000;  // 2500 for relational games
    int batch_size = 32;
    OptConfig opt;           // adam, lr 5e-4
    long eval_every = 250;
    int eval_episodes = 2000;
    int final_eval_episodes = 0;  // 0: use eval_episodes
    double clip_norm = 10.0;      // global-norm clip; <= 0 disables
};

struct EvalPoint {
    long iteration = 0;
    double train_acc = 0;
    std::vector<double> test_accs;  // aligned with RunReport::test_sets
};

struct RunReport {
    // config echo
    std::string task;
    std::string model;
    std::string variant;
    std::string sim_mode;
    std::string encoder_mode;  // "learned" | "random"
    bool concat_sensory = false;
    double l1_lambda = 0;
    int m = 0;
    uint64_t seed = 0;
    long iterations = 0;
    int batch_size = 0;
    double lr = 0;
    std::string optimizer;

    std::vector<std::string> test_sets;  // "holdout" or {"hexominoes","stripes"}
    std::vector<EvalPoint> curve;
    std::vector<float> losses;  // per-iteration training loss
    double final_train = 0;
    std::vector<double> final_test;
    double wall_seconds = 0;
    long param_count = 0;
    std::string status;  // "ok" | "failed"

    double primary_test() const { return final_test.empty() ? 0.0 : final_test[0]; }
};

std::string variant_name(const ModelConfig& cfg);

// Fill the per-task fields of a model configuration (T, classes, image size).
ModelConfig resolve_model(ModelConfig base, const TaskConfig& task, const TaskContext& ctx);

// Fraction of episodes whose argmax(logits) equals the label; argmax ties
// break toward the lowest index. The model is only read.
double evaluate(const Model<float>& model, const std::vector<Episode>& episodes);

// Deterministic in seed: episode streams, initialization, and the optimizer
// trajectory all derive from it.
RunReport train_run(const TaskContext& ctx, const TaskConfig& task, const ModelConfig& model_cfg,
                    const TrainConfig& train, int m, uint64_t seed,
                    std::unique_ptr<Model<float>>* trained_out = nullptr);

}  // namespace corelnet
