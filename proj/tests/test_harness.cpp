#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "corelnet/harness.hpp"

using namespace corelnet;
namespace fs = std::filesystem;

namespace {

const TaskContext& fast_ctx() {
    static TaskContext c = TaskContext::make(16, 2022);
    return c;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

RunReport fake_report(const std::string& task, const std::string& model, int m, uint64_t seed,
                      double acc) {
    RunReport r;
    r.task = task;
    r.model = model;
    r.variant = "base";
    r.sim_mode = "symmetric";
    r.encoder_mode = "learned";
    r.m = m;
    r.seed = seed;
    r.iterations = 100;
    r.batch_size = 32;
    r.lr = 5e-4;
    r.optimizer = "adam";
    r.test_sets = {"holdout"};
    r.final_test = {acc};
    r.final_train = acc;
    r.wall_seconds = 1;
    r.param_count = 10;
    r.status = "ok";
    return r;
}

}  // namespace

TEST_CASE("config files parse key = value lines with comments and overrides") {
    ConfigMap cfg = parse_config_text(
        "# training defaults\n"
        "iterations = 5000\n"
        "lr = 5e-4   # Table default\n"
        "\n"
        "optimizer = adam\n");
    CHECK(cfg.at("iterations") == "5000");
    CHECK(cfg.at("lr") == "5e-4");
    CHECK(cfg.at("optimizer") == "adam");
    apply_override(cfg, "lr=1e-3");
    CHECK(cfg.at("lr") == "1e-3");
    CHECK_THROWS_AS(parse_config_text("no equals sign"), Error);
    CHECK_THROWS_AS(apply_override(cfg, "zap"), Error);
}

TEST_CASE("model specs parse heads and ablation flags") {
    ModelConfig a = parse_model_spec("corelnet");
    CHECK(a.head == HeadKind::corelnet);
    CHECK(a.sim == SimMode::symmetric);
    ModelConfig b = parse_model_spec("corelnet+asym+concat");
    CHECK(b.sim == SimMode::asymmetric);
    CHECK(b.concat_sensory);
    ModelConfig c = parse_model_spec("corelnet+l1=5");
    CHECK(c.l1_lambda == 5.0);
    ModelConfig d = parse_model_spec("transformer");
    CHECK(d.sim == SimMode::asymmetric);  // standard untied attention
    ModelConfig e = parse_model_spec("transformer+sym");
    CHECK(e.sim == SimMode::symmetric);
    CHECK(model_spec_name(b) == "corelnet+asym+concat");
    CHECK_THROWS_AS(parse_model_spec("corelnet+warp"), Error);
}

TEST_CASE("matrix expansion: 4 tasks x 3 models x 10 seeds = 120 cells") {
    MatrixSpec spec;
    spec.tasks = {"same_diff", "rmts", "dist3", "identity_rules"};
    spec.models = {"corelnet", "corelnet_t", "esbn"};
    spec.m_values = {95};
    spec.seeds = 10;
    ExperimentMatrix mat = build_matrix(spec);
    CHECK(mat.cells.size() == 120);
    std::set<std::string> keys;
    for (const auto& c : mat.cells) keys.insert(c.key());
    CHECK(keys.size() == 120);  // unique, reproducible cell keys
}

TEST_CASE("default m grid follows the desk-scale profile") {
    CHECK(default_m_grid(task_from_name("same_diff")) == std::vector<int>{0, 50, 85, 95, 98});
    CHECK(default_m_grid(task_from_name("rmts")) == std::vector<int>{0, 50, 85, 95});
    CHECK(default_m_grid(task_from_name("rmts3")) == std::vector<int>{0, 50, 85, 94});
    CHECK(default_m_grid(task_from_name("dist10")) == std::vector<int>{0, 50, 85, 89});
    CHECK(default_m_grid(task_from_name("game_same")) == std::vector<int>{0});
}

TEST_CASE("aggregate means and stds match a recomputation; constant series has std 0") {
    std::vector<RunReport> reports;
    for (int s = 0; s < 4; ++s) reports.push_back(fake_report("same_diff", "corelnet", 95, s, 0.9));
    reports.push_back(fake_report("same_diff", "corelnet", 95, 9, 0.5));
    auto rows = aggregate(reports);
    REQUIRE(rows.size() == 1);
    double mean = (4 * 0.9 + 0.5) / 5;
    double ss = 4 * (0.9 - mean) * (0.9 - mean) + (0.5 - mean) * (0.5 - mean);
    double expect_std = std::sqrt(ss / 4);
    CHECK(std::abs(rows[0].mean_test - mean) < 1e-9);
    CHECK(std::abs(rows[0].std_test - expect_std) < 1e-9);

    std::vector<RunReport> constant;
    for (int s = 0; s < 3; ++s) constant.push_back(fake_report("rmts", "esbn", 95, s, 0.7));
    auto crows = aggregate(constant);
    REQUIRE(crows.size() == 1);
    CHECK(crows[0].std_test == 0.0);
}

TEST_CASE("runs.csv uses the documented schema") {
    std::vector<RunReport> reports = {fake_report("same_diff", "corelnet", 95, 1, 0.9)};
    std::string csv = runs_csv(reports);
    CHECK(csv.rfind("task,model,variant,similarity_mode,encoder_mode,concat_sensory,l1_lambda,m,"
                    "test_set,seed,iterations,final_test_accuracy,final_train_accuracy,"
                    "wall_seconds,status\n",
                    0) == 0);
    CHECK(csv.find("same_diff,corelnet,base,symmetric,learned,0,0,95,holdout,1,100,0.9,0.9,1,ok") !=
          std::string::npos);
}

TEST_CASE("report JSON round-trips") {
    RunReport r = fake_report("rmts3", "corelnet", 94, 3, 0.87);
    r.curve.push_back({250, 0.8, {0.75}});
    r.losses = {0.7f, 0.6f};
    RunReport back = report_from_json(report_to_json(r));
    CHECK(back.task == r.task);
    CHECK(back.seed == r.seed);
    CHECK(back.final_test == r.final_test);
    CHECK(back.curve.size() == 1);
    CHECK(back.curve[0].test_accs == r.curve[0].test_accs);
    CHECK(back.losses == r.losses);
}

TEST_CASE("run_matrix trains, resumes idempotently, and aggregates deterministically") {
    TempDir dir("corelnet_matrix_test");
    MatrixSpec spec;
    spec.tasks = {"same_diff"};
    spec.models = {"corelnet"};
    spec.m_values = {0};
    spec.seeds = 2;
    spec.fast = true;
    spec.train.iterations = 25;
    spec.train.batch_size = 8;
    spec.train.eval_every = 0;
    spec.train.eval_episodes = 50;
    spec.parallelism = 2;
    spec.outdir = dir.path.string();
    ExperimentMatrix mat = build_matrix(spec);
    CHECK(mat.cells.size() == 2);

    MatrixResult first = run_matrix(fast_ctx(), mat);
    CHECK(first.trained == 2);
    CHECK(first.skipped == 0);
    std::ifstream agg1(dir.path / "aggregate.csv");
    std::stringstream s1;
    s1 << agg1.rdbuf();

    MatrixResult second = run_matrix(fast_ctx(), mat);
    CHECK(second.trained == 0);  // idempotent: zero training on rerun
    CHECK(second.skipped == 2);
    std::ifstream agg2(dir.path / "aggregate.csv");
    std::stringstream s2;
    s2 << agg2.rdbuf();
    CHECK(s1.str() == s2.str());  // byte-identical aggregate
    CHECK(s1.str().find("same_diff,corelnet,base") != std::string::npos);
}

TEST_CASE("sweep plot is a self-contained SVG with one series per variant") {
    std::vector<RunReport> reports;
    for (int m : {0, 50, 85, 95, 98})
        for (int s = 0; s < 3; ++s) {
            reports.push_back(fake_report("same_diff", "corelnet", m, s, 0.9 - 0.001 * m + 0.01 * s));
            RunReport asym = fake_report("same_diff", "corelnet", m, s, 0.6);
            asym.variant = "asym";
            asym.sim_mode = "asymmetric";
            reports.push_back(asym);
        }
    std::string svg = sweep_svg(reports, "same_diff");
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find("</svg>") != std::string::npos);
    CHECK(std::count(svg.begin(), svg.end(), '\n') > 10);
    size_t polylines = 0;
    for (size_t at = svg.find("<polyline"); at != std::string::npos;
         at = svg.find("<polyline", at + 1))
        ++polylines;
    CHECK(polylines == 2);  // one series per (model, variant)
    CHECK(svg.find("98") != std::string::npos);  // pair-task extreme m on the axis
    CHECK_THROWS_AS(sweep_svg(reports, "rmts"), Error);
}

TEST_CASE("cited baselines table is bundled and marked as not reproduced") {
    std::string csv = cited_baselines_csv();
    CHECK(csv.rfind("task,test_set,model,mean,std,source\n", 0) == 0);
    CHECK(csv.find("game_row_matching,hexominoes,predinet,50.3,0.5,cited (not reproduced)") !=
          std::string::npos);
    for (const char* model : {"predinet", "mnm", "ntm", "rn"})
        CHECK(csv.find(model) != std::string::npos);
}

TEST_CASE("dataset export/import round trip is exact") {
    TempDir dir("corelnet_dataset_test");
    std::string path = (dir.path / "sd.crnl").string();
    TaskConfig task = task_from_name("same_diff_spurious");
    export_dataset(fast_ctx(), task, 50, 5, false, 100, path);

    std::vector<Episode> eps = import_dataset(path);
    REQUIRE(eps.size() == 100);
    Split split = split_glyphs(task, 50, mix64(5 ^ 0x5B117));
    for (int i = 0; i < 100; ++i) {
        Episode expect = gen_episode(fast_ctx(), task, split, false, mix64(5 ^ 0xDA7A), i);
        CHECK(eps[i].label == expect.label);
        CHECK(eps[i].meta.glyph_ids == expect.meta.glyph_ids);
        CHECK(eps[i].meta.bg_colors == expect.meta.bg_colors);
        REQUIRE(eps[i].images.size() == expect.images.size());
        for (size_t t = 0; t < eps[i].images.size(); ++t)
            CHECK(eps[i].images[t].v == expect.images[t].v);  // bit-exact images
        // oracle agreement over imported episodes
        CHECK(oracle_label(eps[i]) == eps[i].label);
    }
}

TEST_CASE("dataset import rejects bad magic, bad version, and truncation") {
    TempDir dir("corelnet_dataset_err");
    std::string path = (dir.path / "x.crnl").string();
    export_dataset(fast_ctx(), task_from_name("same_diff"), 0, 1, false, 3, path);

    {  // truncate
        std::string clipped = (dir.path / "clipped.crnl").string();
        std::ifstream in(path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        std::string data = ss.str();
        std::ofstream out(clipped, std::ios::binary);
        out.write(data.data(), static_cast<long>(data.size() / 2));
        out.close();
        try {
            import_dataset(clipped);
            FAIL("expected truncation error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("offset") != std::string::npos);
        }
    }
    {  // magic
        std::string bad = (dir.path / "bad.crnl").string();
        std::ofstream out(bad, std::ios::binary);
        out << "XXXXjunkjunkjunk";
        out.close();
        try {
            import_dataset(bad);
            FAIL("expected magic error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("CRNL") != std::string::npos);
        }
    }
}

TEST_CASE("gradient check suite covers all primitives and heads") {
    auto results = run_gradient_checks(3, 8);  // trimmed trial counts for the unit suite
    int primitives = 0, heads = 0;
    for (const auto& r : results) {
        INFO(r.name, ": ", r.detail);
        CHECK(r.pass);
        if (r.name.find("primitive") != std::string::npos) ++primitives;
        if (r.name.find("model head") != std::string::npos) ++heads;
    }
    CHECK(primitives == static_cast<int>(all_primitives().size()));
    CHECK(heads == 5);
}

TEST_CASE("task battery passes on a reduced episode budget") {
    auto results = run_task_checks(fast_ctx(), 300);
    for (const auto& r : results) {
        INFO(r.name, ": ", r.detail);
        // balance and MI estimates need the full-size sample; the acceptance
        // suite runs them at 10k episodes per task
        if (r.name.find("balance") != std::string::npos) continue;
        if (r.name.find("spurious independence") != std::string::npos) continue;
        CHECK(r.pass);
    }
}
