// corelnet command-line harness: dataset export, single runs, experiment
// matrices, report generation, and the verification suite.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "corelnet/harness.hpp"

using namespace corelnet;
namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    for (const auto& p : split_csv(s)) out.push_back(std::stoi(p));
    return out;
}

double cfg_num(const ConfigMap& cfg, const std::string& key, double fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : std::stod(it->second);
}

std::string cfg_str(const ConfigMap& cfg, const std::string& key, const std::string& fallback) {
    auto it = cfg.find(key);
    return it == cfg.end() ? fallback : it->second;
}

// Defaults mirror the published training setup; a config file and --set
// overrides adjust them.
TrainConfig train_from_config(const ConfigMap& cfg) {
    TrainConfig t;
    t.iterations = static_cast<long>(cfg_num(cfg, "iterations", 0));  // 0: per-task default
    t.batch_size = static_cast<int>(cfg_num(cfg, "batch_size", 32));
    t.opt.lr = cfg_num(cfg, "lr", 5e-4);
    std::string opt = cfg_str(cfg, "optimizer", "adam");
    require(opt == "adam" || opt == "sgd", "optimizer must be adam or sgd, got ", opt);
    t.opt.kind = opt == "adam" ? OptKind::adam : OptKind::sgd;
    t.opt.beta1 = cfg_num(cfg, "beta1", 0.9);
    t.opt.beta2 = cfg_num(cfg, "beta2", 0.999);
    t.opt.eps = cfg_num(cfg, "adam_eps", 1e-8);
    t.eval_every = static_cast<long>(cfg_num(cfg, "eval_every", 250));
    t.eval_episodes = static_cast<int>(cfg_num(cfg, "eval_episodes", 2000));
    t.final_eval_episodes = static_cast<int>(cfg_num(cfg, "final_eval_episodes", 0));
    t.clip_norm = cfg_num(cfg, "clip_norm", 10.0);
    return t;
}

int print_checks(const std::vector<CheckResult>& results) {
    int failures = 0;
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name;
        if (!r.detail.empty()) std::cout << "  (" << r.detail << ")";
        std::cout << "\n";
        if (!r.pass) ++failures;
    }
    return failures;
}

std::string default_out_root() {
    const char* env = std::getenv("CORELNET_OUT");
    return env ? env : "out";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"CoRelNet relational-reasoning harness"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "key = value configuration file");
    app.add_option("--set", overrides, "override a config key, e.g. --set lr=1e-3");
    bool fast = false;
    app.add_flag("--fast", fast, "CI profile: 16px cognitive images, 2 conv layers, <=1500 iters");

    // ---- gen ----
    auto* gen = app.add_subcommand("gen", "export a frozen dataset file");
    gen->fallthrough();
    std::string gen_task = "same_diff", gen_out = "dataset.crnl", gen_side = "train";
    int gen_m = 0, gen_count = 1000;
    uint64_t gen_seed = 1;
    gen->add_option("--task", gen_task, "task id");
    gen->add_option("--m", gen_m, "held-out shape count");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--count", gen_count, "episode count");
    gen->add_option("--side", gen_side, "train or test episodes")
        ->check(CLI::IsMember({"train", "test"}));
    gen->add_option("--out", gen_out, "output path");

    // ---- train ----
    auto* train = app.add_subcommand("train", "train one model on one task");
    train->fallthrough();
    std::string tr_task = "same_diff", tr_model = "corelnet", tr_out;
    int tr_m = 0;
    uint64_t tr_seed = 1;
    train->add_option("--task", tr_task, "task id");
    train->add_option("--model", tr_model, "model spec, e.g. corelnet+asym");
    train->add_option("--m", tr_m, "held-out shape count");
    train->add_option("--seed", tr_seed, "run seed");
    train->add_option("--out", tr_out, "write the run report JSON here");

    // ---- matrix ----
    auto* matrix = app.add_subcommand("matrix", "run a task x model x m x seed sweep");
    matrix->fallthrough();
    std::string mx_tasks = "same_diff,rmts,dist3,identity_rules";
    std::string mx_models = "corelnet,corelnet_t,esbn,transformer,lstm";
    std::string mx_mlist, mx_out = default_out_root();
    int mx_seeds = 10, mx_parallel = 2;
    matrix->add_option("--tasks", mx_tasks, "comma-separated task ids");
    matrix->add_option("--models", mx_models, "comma-separated model specs");
    matrix->add_option("--m-list", mx_mlist, "comma-separated m values (default: per-task grid)");
    matrix->add_option("--seeds", mx_seeds, "number of seeds per cell");
    matrix->add_option("--parallel", mx_parallel, "concurrent runs");
    matrix->add_option("--out", mx_out, "output directory (env CORELNET_OUT)");

    // ---- report ----
    auto* report = app.add_subcommand("report", "aggregate tables and sweep plots");
    report->fallthrough();
    std::string rp_runs = default_out_root(), rp_out;
    bool rp_cited = false;
    report->add_option("--runs", rp_runs, "directory holding runs/");
    report->add_option("--out", rp_out, "report output directory (default: --runs)");
    report->add_flag("--cited", rp_cited, "also write the cited-baseline reference table");

    // ---- check ----
    auto* chk = app.add_subcommand("check", "gradient + task-oracle + invariant suite");
    chk->fallthrough();
    int chk_trials = 50, chk_probes = 60, chk_episodes = 2000;
    std::string chk_only;
    chk->add_option("--trials", chk_trials, "finite-difference trials per primitive");
    chk->add_option("--head-probes", chk_probes, "parameter probes per model head");
    chk->add_option("--episodes", chk_episodes, "episodes per task for the oracle battery");
    chk->add_option("--only", chk_only, "grad | tasks | inv");

    // ---- sheet ----
    auto* sheet = app.add_subcommand("sheet", "write a glyph contact sheet PNG");
    sheet->fallthrough();
    std::string sh_family = "pentomino", sh_out = "glyphs.png";
    int sh_count = 0;
    uint64_t sh_seed = 2022;
    sheet->add_option("--family", sh_family, "cognitive|pentomino|hexomino|stripe");
    sheet->add_option("--count", sh_count, "glyph count (0: family default)");
    sheet->add_option("--seed", sh_seed, "generation seed");
    sheet->add_option("--out", sh_out, "output PNG");

    CLI11_PARSE(app, argc, argv);

    try {
        ConfigMap cfg;
        if (!config_path.empty()) cfg = parse_config_file(config_path);
        for (const auto& kv : overrides) apply_override(cfg, kv);
        int image_size = static_cast<int>(cfg_num(cfg, "image_size", fast ? 16 : 32));

        if (gen->parsed()) {
            TaskContext ctx = TaskContext::make(image_size);
            TaskConfig task = task_from_name(gen_task);
            export_dataset(ctx, task, gen_m, gen_seed, gen_side == "test", gen_count, gen_out);
            std::cout << "wrote " << gen_count << " " << gen_task << " episodes to " << gen_out
                      << "\n";
            return 0;
        }

        if (train->parsed()) {
            TaskContext ctx = TaskContext::make(image_size);
            TaskConfig task = task_from_name(tr_task);
            ModelConfig model = parse_model_spec(tr_model);
            if (fast) model.enc.conv_layers = 2;
            TrainConfig tc = train_from_config(cfg);
            if (tc.iterations <= 0) tc.iterations = task.is_game() ? 2500 : 5000;
            if (fast) tc.iterations = std::min<long>(tc.iterations, 1500);
            RunReport rep = train_run(ctx, task, model, tc, tr_m, tr_seed);
            std::cout << "task " << rep.task << "  model " << rep.model << "+" << rep.variant
                      << "  m=" << rep.m << "  seed=" << rep.seed << "  status=" << rep.status
                      << "\n";
            for (size_t s = 0; s < rep.test_sets.size(); ++s)
                std::cout << "  final test accuracy (" << rep.test_sets[s]
                          << ") = " << rep.final_test[s] << "\n";
            std::cout << "  final train accuracy = " << rep.final_train << "\n";
            std::cout << "  wall seconds = " << rep.wall_seconds << "\n";
            if (!tr_out.empty()) {
                std::ofstream out(tr_out);
                out << report_to_json(rep);
                std::cout << "report written to " << tr_out << "\n";
            }
            return rep.status == "ok" ? 0 : 1;
        }

        if (matrix->parsed()) {
            TaskContext ctx = TaskContext::make(image_size);
            MatrixSpec spec;
            spec.tasks = split_csv(cfg_str(cfg, "tasks", mx_tasks));
            spec.models = split_csv(cfg_str(cfg, "models", mx_models));
            std::string mlist = cfg_str(cfg, "m_list", mx_mlist);
            if (!mlist.empty()) spec.m_values = split_ints(mlist);
            spec.seeds = static_cast<int>(cfg_num(cfg, "seeds", fast ? 5 : mx_seeds));
            spec.train = train_from_config(cfg);
            spec.fast = fast;
            spec.parallelism = static_cast<int>(cfg_num(cfg, "parallel", mx_parallel));
            spec.outdir = cfg_str(cfg, "outdir", mx_out);
            ExperimentMatrix mat = build_matrix(spec);
            std::cout << "matrix: " << mat.cells.size() << " cells -> " << mat.outdir << "\n";
            MatrixResult res = run_matrix(ctx, mat);
            std::cout << "trained " << res.trained << ", resumed " << res.skipped << ", failed "
                      << res.failed << "\n";
            std::cout << "aggregate: " << (fs::path(mat.outdir) / "aggregate.csv").string()
                      << "\n";
            return res.failed == 0 ? 0 : 1;
        }

        if (report->parsed()) {
            if (rp_out.empty()) rp_out = rp_runs;
            fs::create_directories(rp_out);
            std::vector<RunReport> reports = load_reports(rp_runs);
            require(!reports.empty(), "no run reports under ", rp_runs, "/runs");
            {
                std::ofstream out(fs::path(rp_out) / "aggregate.csv");
                out << aggregate_csv(reports);
            }
            {
                std::ofstream out(fs::path(rp_out) / "runs.csv");
                out << runs_csv(reports);
            }
            std::set<std::string> tasks;
            for (const auto& r : reports) tasks.insert(r.task);
            for (const auto& t : tasks) {
                std::ofstream out(fs::path(rp_out) / ("sweep_" + t + ".svg"));
                out << sweep_svg(reports, t);
            }
            if (rp_cited) {
                std::ofstream out(fs::path(rp_out) / "cited_baselines.csv");
                out << cited_baselines_csv();
            }
            std::cout << "report written to " << rp_out << " (" << tasks.size()
                      << " sweep plots)\n";
            return 0;
        }

        if (chk->parsed()) {
            int failures = 0;
            if (chk_only.empty() || chk_only == "grad")
                failures += print_checks(run_gradient_checks(chk_trials, chk_probes));
            if (chk_only.empty() || chk_only == "tasks") {
                TaskContext ctx = TaskContext::make(image_size);
                failures += print_checks(run_task_checks(ctx, chk_episodes));
            }
            if (chk_only.empty() || chk_only == "inv") {
                TaskContext ctx = TaskContext::make(image_size);
                failures += print_checks(run_invariant_checks(ctx));
            }
            std::cout << (failures == 0 ? "ALL CHECKS PASSED" : "CHECK FAILURES") << "\n";
            return failures == 0 ? 0 : 1;
        }

        if (sheet->parsed()) {
            GlyphSet set = generate_glyph_set(family_from_name(sh_family), sh_count, sh_seed);
            write_contact_sheet(set, sh_out);
            std::cout << "wrote " << set.count() << " glyphs to " << sh_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
