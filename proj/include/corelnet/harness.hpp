#pragma once

#include <map>
#include <string>
#include <vector>

#include "corelnet/training.hpp"

namespace corelnet {

// ---------------------------------------------------------------------------
// Configuration files: line-oriented `key = value`, '#' comments.
// ---------------------------------------------------------------------------

using ConfigMap = std::map<std::string, std::string>;

ConfigMap parse_config_text(const std::string& text);
ConfigMap parse_config_file(const std::string& path);
void apply_override(ConfigMap& cfg, const std::string& key_eq_value);

// Model spec strings: head name plus '+'-joined flags, e.g.
// "corelnet", "corelnet+asym", "corelnet+concat", "corelnet+random_enc",
// "corelnet+l1=1", "transformer+sym".
ModelConfig parse_model_spec(const std::string& spec);
std::string model_spec_name(const ModelConfig& cfg);

// ---------------------------------------------------------------------------
// Experiment matrix
// ---------------------------------------------------------------------------

struct MatrixCell {
    TaskConfig task;
    ModelConfig model;
    TrainConfig train;
    int m = 0;
    uint64_t seed = 0;

    std::string key() const;  // unique, file-safe, reproducible
};

struct ExperimentMatrix {
    std::vector<MatrixCell> cells;
    int parallelism = 2;
    std::string outdir;
};

struct MatrixSpec {
    std::vector<std::string> tasks;
    std::vector<std::string> models;
    std::vector<int> m_values;  // empty: per-task desk-scale default grid
    int seeds = 10;
    uint64_t seed_base = 1;
    TrainConfig train;          // iterations <= 0: per-task Table defaults
    bool fast = false;
    int parallelism = 2;
    std::string outdir = "runs";
};

// Desk-scale m grid for one task: {0, 50, 85, 95} clipped to validity plus the
// task's maximal m (98 for pair tasks).
std::vector<int> default_m_grid(const TaskConfig& task);

ExperimentMatrix build_matrix(const MatrixSpec& spec);

struct MatrixResult {
    int trained = 0;
    int skipped = 0;   // cells resumed from existing reports
    int failed = 0;
    std::vector<RunReport> reports;
};

// Executes cells concurrently (each run single-threaded), resuming from
// existing per-cell reports; then rewrites runs.csv and aggregate.csv.
MatrixResult run_matrix(const TaskContext& ctx, const ExperimentMatrix& matrix);

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::string report_to_json(const RunReport& rep);
RunReport report_from_json(const std::string& text);

constexpr const char* kRunsCsvHeader =
    "task,model,variant,similarity_mode,encoder_mode,concat_sensory,l1_lambda,m,test_set,seed,"
    "iterations,final_test_accuracy,final_train_accuracy,wall_seconds,status";

std::string runs_csv(const std::vector<RunReport>& reports);
std::string aggregate_csv(const std::vector<RunReport>& reports);

struct AggregateRow {
    std::string task, model, variant, sim_mode, encoder_mode, test_set;
    bool concat_sensory = false;
    double l1_lambda = 0;
    int m = 0;
    int runs = 0;
    double mean_test = 0, std_test = 0, mean_train = 0, std_train = 0;
};
std::vector<AggregateRow> aggregate(const std::vector<RunReport>& reports);

// accuracy vs m, one series per (model, variant), error bars = +-1 std
std::string sweep_svg(const std::vector<RunReport>& reports, const std::string& task);

// Reference values transcribed from the cited baselines (PrediNet, MNM, NTM,
// RN); marked as cited, never reproduced here.
std::string cited_baselines_csv();

std::vector<RunReport> load_reports(const std::string& outdir);

// ---------------------------------------------------------------------------
// Dataset files (magic "CRNL")
// ---------------------------------------------------------------------------

void export_dataset(const TaskContext& ctx, const TaskConfig& task, int m, uint64_t seed,
                    bool test_side, int count, const std::string& path);
std::vector<Episode> import_dataset(const std::string& path);

// ---------------------------------------------------------------------------
// Check suites (gradient oracle, task oracle, structural invariants)
// ---------------------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

// finite differences for every primitive and every model head at T=2
std::vector<CheckResult> run_gradient_checks(int primitive_trials, int head_probes);

// oracle agreement, split hygiene, balance, spurious independence
std::vector<CheckResult> run_task_checks(const TaskContext& ctx, int episodes_per_task);

// criterion-style structural invariants (orthogonal invariance, row
// stochasticity, symmetry, TCN affine invariance, equivariance, frozen
// encoder, determinism)
std::vector<CheckResult> run_invariant_checks(const TaskContext& ctx);

}  // namespace corelnet
