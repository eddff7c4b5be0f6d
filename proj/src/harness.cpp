#include "corelnet/harness.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

namespace corelnet {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
    ConfigMap cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string t = trim(line);
        if (t.empty()) continue;
        size_t eq = t.find('=');
        require(eq != std::string::npos, "config line ", lineno, " is not 'key = value': ", t);
        std::string key = trim(t.substr(0, eq));
        std::string value = trim(t.substr(eq + 1));
        require(!key.empty(), "config line ", lineno, " has an empty key");
        cfg[key] = value;
    }
    return cfg;
}

ConfigMap parse_config_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config file ", path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

void apply_override(ConfigMap& cfg, const std::string& kv) {
    size_t eq = kv.find('=');
    require(eq != std::string::npos, "override must be key=value, got '", kv, "'");
    cfg[trim(kv.substr(0, eq))] = trim(kv.substr(eq + 1));
}

// ---------------------------------------------------------------------------
// Model specs
// ---------------------------------------------------------------------------

ModelConfig parse_model_spec(const std::string& spec) {
    ModelConfig cfg;
    std::vector<std::string> parts;
    std::string cur;
    for (char c : spec) {
        if (c == '+') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    parts.push_back(cur);
    require(!parts.empty() && !parts[0].empty(), "empty model spec");
    cfg.head = head_from_name(parts[0]);
    // the transformer baseline uses the standard untied attention by default
    cfg.sim = cfg.head == HeadKind::transformer ? SimMode::asymmetric : SimMode::symmetric;
    for (size_t i = 1; i < parts.size(); ++i) {
        const std::string& f = parts[i];
        if (f == "asym")
            cfg.sim = SimMode::asymmetric;
        else if (f == "sym")
            cfg.sim = SimMode::symmetric;
        else if (f == "concat")
            cfg.concat_sensory = true;
        else if (f == "random_enc")
            cfg.random_encoder = true;
        else if (f.rfind("l1=", 0) == 0)
            cfg.l1_lambda = std::stod(f.substr(3));
        else
            fail("unknown model flag '", f, "' in spec '", spec, "'");
    }
    return cfg;
}

std::string model_spec_name(const ModelConfig& cfg) {
    std::string out = head_name(cfg.head);
    bool default_sim = cfg.head == HeadKind::transformer ? cfg.sim == SimMode::asymmetric
                                                         : cfg.sim == SimMode::symmetric;
    if (!default_sim) out += cfg.sim == SimMode::symmetric ? "+sym" : "+asym";
    if (cfg.concat_sensory) out += "+concat";
    if (cfg.random_encoder) out += "+random_enc";
    if (cfg.l1_lambda > 0) {
        std::ostringstream os;
        os << "+l1=" << cfg.l1_lambda;
        out += os.str();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

std::string MatrixCell::key() const {
    std::ostringstream os;
    os << task.name() << "__" << head_name(model.head) << "__" << variant_name(model);
    if (model.l1_lambda > 0) os << model.l1_lambda;
    os << "__m" << m << "__it" << train.iterations << "__s" << seed;
    std::string k = os.str();
    for (char& c : k)
        if (c == '.' || c == '/' || c == ' ') c = '_';
    return k;
}

std::vector<int> default_m_grid(const TaskConfig& task) {
    TaskInfo info = task_info(task);
    if (task.is_game()) return {0};
    std::set<int> grid;
    for (int m : {0, 50, 85, 95})
        if (m <= info.max_m) grid.insert(m);
    grid.insert(info.max_m);
    return std::vector<int>(grid.begin(), grid.end());
}

ExperimentMatrix build_matrix(const MatrixSpec& spec) {
    ExperimentMatrix mat;
    mat.parallelism = std::max(1, spec.parallelism);
    mat.outdir = spec.outdir;
    for (const std::string& tname : spec.tasks) {
        TaskConfig task = task_from_name(tname);
        std::vector<int> ms = spec.m_values.empty() ? default_m_grid(task) : spec.m_values;
        for (const std::string& mname : spec.models) {
            ModelConfig model = parse_model_spec(mname);
            if (spec.fast) model.enc.conv_layers = 2;
            for (int m : ms) {
                if (task.is_game() && m != 0) continue;
                for (int s = 0; s < spec.seeds; ++s) {
                    MatrixCell cell;
                    cell.task = task;
                    cell.model = model;
                    cell.train = spec.train;
                    if (cell.train.iterations <= 0)
                        cell.train.iterations = task.is_game() ? 2500 : 5000;
                    if (spec.fast) cell.train.iterations = std::min<long>(cell.train.iterations, 1500);
                    cell.m = m;
                    cell.seed = spec.seed_base + static_cast<uint64_t>(s);
                    mat.cells.push_back(std::move(cell));
                }
            }
        }
    }
    return mat;
}

// ---------------------------------------------------------------------------
// Report serialization
// ---------------------------------------------------------------------------

std::string report_to_json(const RunReport& r) {
    json j;
    j["task"] = r.task;
    j["model"] = r.model;
    j["variant"] = r.variant;
    j["sim_mode"] = r.sim_mode;
    j["encoder_mode"] = r.encoder_mode;
    j["concat_sensory"] = r.concat_sensory;
    j["l1_lambda"] = r.l1_lambda;
    j["m"] = r.m;
    j["seed"] = r.seed;
    j["iterations"] = r.iterations;
    j["batch_size"] = r.batch_size;
    j["lr"] = r.lr;
    j["optimizer"] = r.optimizer;
    j["test_sets"] = r.test_sets;
    j["final_train"] = r.final_train;
    j["final_test"] = r.final_test;
    j["wall_seconds"] = r.wall_seconds;
    j["param_count"] = r.param_count;
    j["status"] = r.status;
    json curve = json::array();
    for (const auto& p : r.curve)
        curve.push_back({{"iteration", p.iteration},
                         {"train_acc", p.train_acc},
                         {"test_accs", p.test_accs}});
    j["curve"] = curve;
    j["losses"] = r.losses;
    return j.dump(2);
}

RunReport report_from_json(const std::string& text) {
    json j = json::parse(text);
    RunReport r;
    r.task = j.at("task");
    r.model = j.at("model");
    r.variant = j.at("variant");
    r.sim_mode = j.at("sim_mode");
    r.encoder_mode = j.at("encoder_mode");
    r.concat_sensory = j.at("concat_sensory");
    r.l1_lambda = j.at("l1_lambda");
    r.m = j.at("m");
    r.seed = j.at("seed");
    r.iterations = j.at("iterations");
    r.batch_size = j.at("batch_size");
    r.lr = j.at("lr");
    r.optimizer = j.at("optimizer");
    r.test_sets = j.at("test_sets").get<std::vector<std::string>>();
    r.final_train = j.at("final_train");
    r.final_test = j.at("final_test").get<std::vector<double>>();
    r.wall_seconds = j.at("wall_seconds");
    r.param_count = j.at("param_count");
    r.status = j.at("status");
    for (const auto& p : j.at("curve")) {
        EvalPoint pt;
        pt.iteration = p.at("iteration");
        pt.train_acc = p.at("train_acc");
        pt.test_accs = p.at("test_accs").get<std::vector<double>>();
        r.curve.push_back(std::move(pt));
    }
    r.losses = j.at("losses").get<std::vector<float>>();
    return r;
}

namespace {

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

void write_file_atomic(const std::string& path, const std::string& content) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        require(out.good(), "cannot write ", tmp);
        out << content;
    }
    fs::rename(tmp, path);
}

}  // namespace

std::string runs_csv(const std::vector<RunReport>& reports) {
    std::vector<std::string> rows;
    for (const auto& r : reports) {
        for (size_t s = 0; s < r.test_sets.size(); ++s) {
            std::ostringstream os;
            os << r.task << ',' << r.model << ',' << r.variant << ',' << r.sim_mode << ','
               << r.encoder_mode << ',' << (r.concat_sensory ? 1 : 0) << ',' << r.l1_lambda << ','
               << r.m << ',' << r.test_sets[s] << ',' << r.seed << ',' << r.iterations << ','
               << fmt_double(s < r.final_test.size() ? r.final_test[s] : 0.0) << ','
               << fmt_double(r.final_train) << ',' << fmt_double(r.wall_seconds) << ','
               << r.status;
            rows.push_back(os.str());
        }
    }
    std::sort(rows.begin(), rows.end());
    std::string out = std::string(kRunsCsvHeader) + "\n";
    for (const auto& r : rows) out += r + "\n";
    return out;
}

std::vector<AggregateRow> aggregate(const std::vector<RunReport>& reports) {
    struct Acc {
        std::vector<double> test, train;
        const RunReport* any = nullptr;
        std::string test_set;
    };
    std::map<std::string, Acc> groups;
    for (const auto& r : reports) {
        if (r.status != "ok") continue;
        for (size_t s = 0; s < r.test_sets.size(); ++s) {
            std::ostringstream key;
            key << r.task << '|' << r.model << '|' << r.variant << '|' << r.sim_mode << '|'
                << r.encoder_mode << '|' << r.concat_sensory << '|' << r.l1_lambda << '|' << r.m
                << '|' << r.test_sets[s];
            Acc& a = groups[key.str()];
            a.test.push_back(s < r.final_test.size() ? r.final_test[s] : 0.0);
            a.train.push_back(r.final_train);
            a.any = &r;
            a.test_set = r.test_sets[s];
        }
    }
    auto mean_of = [](const std::vector<double>& v) {
        double s = 0;
        for (double x : v) s += x;
        return v.empty() ? 0.0 : s / v.size();
    };
    auto std_of = [&](const std::vector<double>& v) {
        if (v.size() < 2) return 0.0;
        if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) return 0.0;
        double mu = mean_of(v), ss = 0;
        for (double x : v) ss += (x - mu) * (x - mu);
        return std::sqrt(ss / (v.size() - 1));  // sample standard deviation
    };
    std::vector<AggregateRow> rows;
    for (auto& [key, a] : groups) {
        AggregateRow row;
        row.task = a.any->task;
        row.model = a.any->model;
        row.variant = a.any->variant;
        row.sim_mode = a.any->sim_mode;
        row.encoder_mode = a.any->encoder_mode;
        row.concat_sensory = a.any->concat_sensory;
        row.l1_lambda = a.any->l1_lambda;
        row.m = a.any->m;
        row.test_set = a.test_set;
        row.runs = static_cast<int>(a.test.size());
        row.mean_test = mean_of(a.test);
        row.std_test = std_of(a.test);
        row.mean_train = mean_of(a.train);
        row.std_train = std_of(a.train);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string aggregate_csv(const std::vector<RunReport>& reports) {
    std::string out =
        "task,model,variant,similarity_mode,encoder_mode,concat_sensory,l1_lambda,m,test_set,"
        "runs,mean_test_accuracy,std_test_accuracy,mean_train_accuracy,std_train_accuracy\n";
    for (const auto& r : aggregate(reports)) {
        std::ostringstream os;
        os << r.task << ',' << r.model << ',' << r.variant << ',' << r.sim_mode << ','
           << r.encoder_mode << ',' << (r.concat_sensory ? 1 : 0) << ',' << r.l1_lambda << ','
           << r.m << ',' << r.test_set << ',' << r.runs << ',' << fmt_double(r.mean_test) << ','
           << fmt_double(r.std_test) << ',' << fmt_double(r.mean_train) << ','
           << fmt_double(r.std_train) << "\n";
        out += os.str();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix execution
// ---------------------------------------------------------------------------

std::vector<RunReport> load_reports(const std::string& outdir) {
    std::vector<RunReport> out;
    fs::path dir = fs::path(outdir) / "runs";
    if (!fs::exists(dir)) return out;
    std::vector<std::string> paths;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".json") paths.push_back(e.path().string());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        out.push_back(report_from_json(ss.str()));
    }
    return out;
}

MatrixResult run_matrix(const TaskContext& ctx, const ExperimentMatrix& matrix) {
    {
        std::set<std::string> keys;
        for (const auto& c : matrix.cells)
            require(keys.insert(c.key()).second, "matrix cells are not unique: ", c.key());
    }
    fs::create_directories(fs::path(matrix.outdir) / "runs");
    std::atomic<size_t> next{0};
    std::atomic<int> trained{0}, skipped{0}, failed{0};
    std::mutex io_mutex;

    auto worker = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= matrix.cells.size()) return;
            const MatrixCell& cell = matrix.cells[i];
            fs::path path = fs::path(matrix.outdir) / "runs" / (cell.key() + ".json");
            if (fs::exists(path)) {
                skipped.fetch_add(1);
                continue;
            }
            RunReport rep;
            try {
                rep = train_run(ctx, cell.task, cell.model, cell.train, cell.m, cell.seed);
            } catch (const std::exception& e) {
                ModelConfig mc = cell.model;
                rep.task = cell.task.name();
                rep.model = head_name(mc.head);
                rep.variant = variant_name(mc);
                rep.sim_mode = mc.sim == SimMode::symmetric ? "symmetric" : "asymmetric";
                rep.encoder_mode = mc.random_encoder ? "random" : "learned";
                rep.concat_sensory = mc.concat_sensory;
                rep.l1_lambda = mc.l1_lambda;
                rep.m = cell.m;
                rep.seed = cell.seed;
                rep.iterations = cell.train.iterations;
                rep.batch_size = cell.train.batch_size;
                rep.lr = cell.train.opt.lr;
                rep.optimizer = cell.train.opt.kind == OptKind::adam ? "adam" : "sgd";
                rep.test_sets = {"holdout"};
                rep.final_test = {0.0};
                rep.status = std::string("failed: ") + e.what();
            }
            if (rep.status != "ok") failed.fetch_add(1);
            trained.fetch_add(1);
            std::lock_guard<std::mutex> lock(io_mutex);
            write_file_atomic(path.string(), report_to_json(rep));
        }
    };

    int n_threads = std::max(1, std::min<int>(matrix.parallelism,
                                              static_cast<int>(matrix.cells.size())));
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    MatrixResult res;
    res.trained = trained.load();
    res.skipped = skipped.load();
    res.failed = failed.load();
    res.reports = load_reports(matrix.outdir);
    write_file_atomic((fs::path(matrix.outdir) / "runs.csv").string(), runs_csv(res.reports));
    write_file_atomic((fs::path(matrix.outdir) / "aggregate.csv").string(),
                      aggregate_csv(res.reports));
    return res;
}

// ---------------------------------------------------------------------------
// Sweep plot (self-contained SVG)
// ---------------------------------------------------------------------------

std::string sweep_svg(const std::vector<RunReport>& reports, const std::string& task) {
    std::vector<AggregateRow> rows;
    for (const auto& r : aggregate(reports))
        if (r.task == task) rows.push_back(r);
    require(!rows.empty(), "no reports for task ", task);

    std::map<std::string, std::map<int, std::pair<double, double>>> series;
    std::set<int> ms;
    for (const auto& r : rows) {
        std::string label = r.model + "+" + r.variant + (r.test_set == "holdout" ? "" : ":" + r.test_set);
        series[label][r.m] = {r.mean_test, r.std_test};
        ms.insert(r.m);
    }

    const double W = 640, H = 420, L = 60, R = 190, Tm = 30, B = 50;
    const double pw = W - L - R, ph = H - Tm - B;
    int max_m = *ms.rbegin();
    auto X = [&](double m) { return L + (max_m > 0 ? m / max_m : 0.0) * pw; };
    auto Y = [&](double acc) { return Tm + (1.0 - acc) * ph; };

    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
    std::ostringstream svg;
    svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H
        << "' viewBox='0 0 " << W << " " << H << "'>\n";
    svg << "<rect width='" << W << "' height='" << H << "' fill='white'/>\n";
    svg << "<text x='" << (L + pw / 2) << "' y='18' text-anchor='middle' font-size='14'>" << task
        << ": test accuracy vs m</text>\n";
    // axes
    svg << "<line x1='" << L << "' y1='" << Tm << "' x2='" << L << "' y2='" << (Tm + ph)
        << "' stroke='black'/>\n";
    svg << "<line x1='" << L << "' y1='" << (Tm + ph) << "' x2='" << (L + pw) << "' y2='"
        << (Tm + ph) << "' stroke='black'/>\n";
    for (double a = 0.0; a <= 1.001; a += 0.25) {
        svg << "<line x1='" << (L - 4) << "' y1='" << Y(a) << "' x2='" << (L + pw) << "' y2='"
            << Y(a) << "' stroke='#dddddd'/>\n";
        svg << "<text x='" << (L - 8) << "' y='" << (Y(a) + 4)
            << "' text-anchor='end' font-size='11'>" << a << "</text>\n";
    }
    for (int m : ms) {
        svg << "<text x='" << X(m) << "' y='" << (Tm + ph + 16)
            << "' text-anchor='middle' font-size='11'>" << m << "</text>\n";
    }
    svg << "<text x='" << (L + pw / 2) << "' y='" << (H - 12)
        << "' text-anchor='middle' font-size='12'>m (held-out shapes)</text>\n";

    int ci = 0;
    double ly = Tm + 10;
    for (const auto& [label, pts] : series) {
        const char* color = colors[ci % 8];
        std::ostringstream poly;
        for (const auto& [m, v] : pts) poly << X(m) << "," << Y(v.first) << " ";
        svg << "<polyline points='" << poly.str() << "' fill='none' stroke='" << color
            << "' stroke-width='1.5'/>\n";
        for (const auto& [m, v] : pts) {
            svg << "<circle cx='" << X(m) << "' cy='" << Y(v.first) << "' r='2.5' fill='"
                << color << "'/>\n";
            if (v.second > 0) {
                svg << "<line x1='" << X(m) << "' y1='" << Y(v.first - v.second) << "' x2='"
                    << X(m) << "' y2='" << Y(v.first + v.second) << "' stroke='" << color
                    << "'/>\n";
            }
        }
        svg << "<line x1='" << (L + pw + 10) << "' y1='" << ly << "' x2='" << (L + pw + 28)
            << "' y2='" << ly << "' stroke='" << color << "' stroke-width='2'/>\n";
        svg << "<text x='" << (L + pw + 32) << "' y='" << (ly + 4) << "' font-size='10'>" << label
            << "</text>\n";
        ly += 16;
        ++ci;
    }
    svg << "</svg>\n";
    return svg.str();
}

std::string cited_baselines_csv() {
    // Reference accuracies for baselines that are cited, not reproduced.
    return
        "task,test_set,model,mean,std,source\n"
        "game_same,hexominoes,predinet,99.1,0.5,cited (not reproduced)\n"
        "game_same,stripes,predinet,97.7,1.5,cited (not reproduced)\n"
        "game_between,hexominoes,predinet,94.4,3.6,cited (not reproduced)\n"
        "game_between,stripes,predinet,92.4,5.4,cited (not reproduced)\n"
        "game_occurs,hexominoes,predinet,92.9,3.3,cited (not reproduced)\n"
        "game_occurs,stripes,predinet,87.4,6.5,cited (not reproduced)\n"
        "game_xoccurs,hexominoes,predinet,67.2,8.7,cited (not reproduced)\n"
        "game_xoccurs,stripes,predinet,61.3,6.3,cited (not reproduced)\n"
        "game_row_matching,hexominoes,predinet,50.3,0.5,cited (not reproduced)\n"
        "game_row_matching,stripes,predinet,50.5,0.5,cited (not reproduced)\n"
        "game_colour_shape,hexominoes,predinet,74.9,10.6,cited (not reproduced)\n"
        "game_left_of,hexominoes,predinet,94.9,0.9,cited (not reproduced)\n"
        "game_same,hexominoes,mnm,97.3,1.5,cited (not reproduced)\n"
        "game_same,stripes,mnm,95.5,2.0,cited (not reproduced)\n"
        "game_between,hexominoes,mnm,93.6,2.3,cited (not reproduced)\n"
        "game_between,stripes,mnm,90.2,5.2,cited (not reproduced)\n"
        "game_occurs,hexominoes,mnm,84.9,2.8,cited (not reproduced)\n"
        "game_occurs,stripes,mnm,77.0,4.5,cited (not reproduced)\n"
        "game_xoccurs,hexominoes,mnm,73.8,6.6,cited (not reproduced)\n"
        "game_xoccurs,stripes,mnm,70.6,6.2,cited (not reproduced)\n"
        "game_row_matching,hexominoes,mnm,49.9,0.3,cited (not reproduced)\n"
        "game_row_matching,stripes,mnm,49.8,0.6,cited (not reproduced)\n"
        "game_colour_shape,hexominoes,mnm,75.7,12.1,cited (not reproduced)\n"
        "game_left_of,hexominoes,mnm,97.5,1.2,cited (not reproduced)\n"
        "game_same,hexominoes,ntm,97.2,1.7,cited (not reproduced)\n"
        "game_same,stripes,ntm,93.4,5.3,cited (not reproduced)\n"
        "game_between,hexominoes,ntm,96.3,0.7,cited (not reproduced)\n"
        "game_between,stripes,ntm,93.5,2.5,cited (not reproduced)\n"
        "game_occurs,hexominoes,ntm,93.5,8.1,cited (not reproduced)\n"
        "game_occurs,stripes,ntm,87.1,11.0,cited (not reproduced)\n"
        "game_xoccurs,hexominoes,ntm,84.2,5.0,cited (not reproduced)\n"
        "game_xoccurs,stripes,ntm,81.7,5.8,cited (not reproduced)\n"
        "game_row_matching,hexominoes,ntm,50.2,0.5,cited (not reproduced)\n"
        "game_row_matching,stripes,ntm,49.9,0.5,cited (not reproduced)\n"
        "game_colour_shape,hexominoes,ntm,88.0,2.4,cited (not reproduced)\n"
        "game_left_of,hexominoes,ntm,97.5,0.9,cited (not reproduced)\n"
        "game_same,hexominoes,rn,92.9,2.8,cited (not reproduced)\n"
        "game_same,stripes,rn,83.7,10.2,cited (not reproduced)\n"
        "game_between,hexominoes,rn,73.6,8.2,cited (not reproduced)\n"
        "game_between,stripes,rn,54.5,5.7,cited (not reproduced)\n"
        "game_occurs,hexominoes,rn,71.2,6.6,cited (not reproduced)\n"
        "game_occurs,stripes,rn,54.6,4.0,cited (not reproduced)\n"
        "game_xoccurs,hexominoes,rn,65.7,5.5,cited (not reproduced)\n"
        "game_xoccurs,stripes,rn,61.7,7.4,cited (not reproduced)\n"
        "game_row_matching,hexominoes,rn,50.5,0.3,cited (not reproduced)\n"
        "game_row_matching,stripes,rn,50.4,0.4,cited (not reproduced)\n"
        "game_colour_shape,hexominoes,rn,77.5,9.2,cited (not reproduced)\n"
        "game_left_of,hexominoes,rn,51.0,2.1,cited (not reproduced)\n";
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

namespace {

constexpr char kDatasetMagic[4] = {'C', 'R', 'N', 'L'};
constexpr uint16_t kDatasetVersion = 1;

struct Writer {
    FILE* f;
    void u8(uint8_t v) { std::fputc(v, f); }
    void u16(uint16_t v) {
        u8(static_cast<uint8_t>(v));
        u8(static_cast<uint8_t>(v >> 8));
    }
    void u32(uint32_t v) {
        u16(static_cast<uint16_t>(v));
        u16(static_cast<uint16_t>(v >> 16));
    }
    void bytes(const void* p, size_t n) { std::fwrite(p, 1, n, f); }
};

struct Reader {
    FILE* f;
    const std::string& path;
    void need(void* p, size_t n, const char* what) {
        long off = std::ftell(f);
        if (std::fread(p, 1, n, f) != n)
            fail("dataset file ", path, " truncated at offset ", off, " while reading ", what);
    }
    uint8_t u8(const char* what) {
        uint8_t v;
        need(&v, 1, what);
        return v;
    }
    uint16_t u16(const char* what) {
        uint8_t b[2];
        need(b, 2, what);
        return static_cast<uint16_t>(b[0] | (b[1] << 8));
    }
    uint32_t u32(const char* what) {
        uint16_t lo = u16(what), hi = u16(what);
        return static_cast<uint32_t>(lo) | (static_cast<uint32_t>(hi) << 16);
    }
};

uint8_t to_byte(float v) { return static_cast<uint8_t>(std::lround(v * 255.0f)); }

}  // namespace

void export_dataset(const TaskContext& ctx, const TaskConfig& task, int m, uint64_t seed,
                    bool test_side, int count, const std::string& path) {
    require(count >= 1, "dataset export needs at least one episode");
    Split split = split_glyphs(task, m, mix64(seed ^ 0x5B117));
    std::vector<Episode> eps =
        gen_episodes(ctx, task, split, test_side, mix64(seed ^ 0xDA7A), 0, count);

    FILE* f = std::fopen(path.c_str(), "wb");
    require(f != nullptr, "cannot open ", path, " for writing");
    Writer w{f};
    w.bytes(kDatasetMagic, 4);
    w.u16(kDatasetVersion);
    std::string tname = task.name();
    w.u16(static_cast<uint16_t>(tname.size()));
    w.bytes(tname.data(), tname.size());
    int S = eps[0].images[0].shape[1];
    w.u16(static_cast<uint16_t>(S));
    w.u16(3);  // channels
    w.u32(static_cast<uint32_t>(eps.size()));
    std::vector<uint8_t> buf;
    for (const Episode& ep : eps) {
        w.u16(static_cast<uint16_t>(ep.images.size()));
        w.u16(static_cast<uint16_t>(ep.num_classes));
        w.u16(static_cast<uint16_t>(ep.label));
        for (const auto& img : ep.images) {
            buf.resize(img.size());
            for (long i = 0; i < img.size(); ++i) buf[i] = to_byte(img[i]);
            w.bytes(buf.data(), buf.size());
        }
        json meta;
        meta["task"] = ep.meta.task;
        meta["family"] = ep.meta.family;
        meta["glyph_ids"] = ep.meta.glyph_ids;
        meta["colors"] = ep.meta.colors;
        meta["orients"] = ep.meta.orients;
        meta["bg_colors"] = ep.meta.bg_colors;
        meta["pattern"] = ep.meta.pattern;
        meta["answer_pos"] = ep.meta.answer_pos;
        meta["test_side"] = ep.meta.test_side;
        std::string ms = meta.dump();
        w.u32(static_cast<uint32_t>(ms.size()));
        w.bytes(ms.data(), ms.size());
    }
    std::fclose(f);
}

std::vector<Episode> import_dataset(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    require(f != nullptr, "cannot open ", path);
    Reader r{f, path};
    char magic[4];
    r.need(magic, 4, "magic");
    if (std::memcmp(magic, kDatasetMagic, 4) != 0) {
        std::fclose(f);
        fail("dataset file ", path, " has magic '", std::string(magic, 4),
             "', expected 'CRNL'");
    }
    uint16_t ver = r.u16("version");
    if (ver != kDatasetVersion) {
        std::fclose(f);
        fail("dataset file ", path, " has version ", ver, ", expected ", kDatasetVersion);
    }
    uint16_t tlen = r.u16("task id length");
    std::string tname(tlen, '\0');
    r.need(tname.data(), tlen, "task id");
    uint16_t S = r.u16("image size");
    uint16_t C = r.u16("channels");
    uint32_t count = r.u32("episode count");
    std::vector<Episode> out;
    out.reserve(count);
    std::vector<uint8_t> buf(static_cast<size_t>(C) * S * S);
    for (uint32_t e = 0; e < count; ++e) {
        Episode ep;
        uint16_t T = r.u16("sequence length");
        ep.num_classes = r.u16("class count");
        ep.label = r.u16("label");
        for (int t = 0; t < T; ++t) {
            r.need(buf.data(), buf.size(), "image bytes");
            Array<float> img({C, S, S});
            for (long i = 0; i < img.size(); ++i) img[i] = buf[i] / 255.0f;
            ep.images.push_back(std::move(img));
        }
        uint32_t mlen = r.u32("metadata length");
        std::string ms(mlen, '\0');
        r.need(ms.data(), mlen, "metadata");
        json meta = json::parse(ms);
        ep.meta.task = meta.at("task");
        ep.meta.family = meta.at("family");
        ep.meta.glyph_ids = meta.at("glyph_ids").get<std::vector<int>>();
        ep.meta.colors = meta.at("colors").get<std::vector<int>>();
        ep.meta.orients = meta.at("orients").get<std::vector<int>>();
        ep.meta.bg_colors = meta.at("bg_colors").get<std::vector<int>>();
        ep.meta.pattern = meta.at("pattern");
        ep.meta.answer_pos = meta.at("answer_pos");
        ep.meta.test_side = meta.at("test_side");
        require(ep.meta.task == tname, "episode task '", ep.meta.task,
                "' does not match file task '", tname, "'");
        out.push_back(std::move(ep));
    }
    std::fclose(f);
    return out;
}

// ---------------------------------------------------------------------------
// Check suites
// ---------------------------------------------------------------------------

namespace {

ModelConfig tiny_model_config(HeadKind head) {
    ModelConfig cfg;
    cfg.head = head;
    cfg.enc.image_size = 8;
    cfg.enc.conv_layers = 2;
    cfg.enc.channels = 4;
    cfg.enc.fc_hidden = 12;
    cfg.enc.out_dim = 10;
    cfg.seq_len = 2;
    cfg.num_classes = 3;
    cfg.decoder_hidden = 16;
    cfg.tf_dim = 16;
    cfg.tf_heads = 2;
    cfg.tf_qk_dim = 4;
    cfg.tf_pos_dim = 4;
    cfg.tf_ffn_mult = 2;
    cfg.lstm_hidden = 12;
    cfg.esbn_key_dim = 8;
    if (head == HeadKind::transformer) cfg.sim = SimMode::asymmetric;
    return cfg;
}

Episode synthetic_episode(const EncoderConfig& e, int T, int classes, uint64_t seed) {
    Rng rng = Rng::from(seed, 0x5E9);
    Episode ep;
    ep.num_classes = classes;
    ep.label = static_cast<int>(rng.randint(classes));
    for (int t = 0; t < T; ++t) {
        Array<float> img({e.in_channels, e.image_size, e.image_size});
        for (auto& v : img.v) v = static_cast<float>(rng.uniform(0.05, 0.95));
        ep.images.push_back(std::move(img));
    }
    return ep;
}

// loss of the full model on one episode as a function of its parameters
double head_loss(const Model<double>& model, const Episode& ep) {
    Tape<double> tape;
    auto b = model.bind(tape);
    NodeId logits = model.forward_episode(b, ep);
    return tape.val(tape.cross_entropy(logits, ep.label))[0];
}

// relu inputs within `margin` of zero make central differences unreliable
template <typename T>
bool has_kink(const Tape<T>& tape, double margin) {
    for (NodeId id = 0; id < static_cast<NodeId>(tape.size()); ++id) {
        if (tape.op_of(id) != Prim::relu && tape.op_of(id) != Prim::l1_norm) continue;
        for (const T& v : tape.val(tape.inputs_of(id)[0]).v)
            if (std::abs(static_cast<double>(v)) < margin) return true;
    }
    return false;
}

CheckResult head_fd_check(HeadKind head, int probes) {
    CheckResult res;
    res.name = std::string("gradients: model head '") + head_name(head) + "' (T=2)";
    ModelConfig cfg = tiny_model_config(head);
    const double eps = 1e-6, tol = 1e-5;

    Model<double> model(cfg, 0xF00D + static_cast<uint64_t>(head));
    Episode ep;
    bool found = false;
    for (uint64_t attempt = 0; attempt < 64 && !found; ++attempt) {
        ep = synthetic_episode(cfg.enc, cfg.seq_len, cfg.num_classes, 100 + attempt);
        Tape<double> tape;
        auto b = model.bind(tape);
        NodeId logits = model.forward_episode(b, ep);
        (void)logits;
        found = !has_kink(tape, 64 * eps);
    }
    if (!found) {
        res.pass = false;
        res.detail = "could not find a kink-free probe episode";
        return res;
    }

    Tape<double> tape;
    auto b = model.bind(tape);
    NodeId logits = model.forward_episode(b, ep);
    NodeId loss = tape.cross_entropy(logits, ep.label);
    tape.backward(loss);

    Rng rng = Rng::from(0xBEEF, static_cast<uint64_t>(head));
    double max_err = 0;
    for (int p = 0; p < probes; ++p) {
        size_t pi = rng.randint(static_cast<long>(model.params().count()));
        Parameter<double>& param = model.params().at(pi);
        long j = rng.randint(param.value.size());
        double analytic = tape.has_grad(b.ids[pi]) ? tape.grad(b.ids[pi])[j] : 0.0;
        double saved = param.value[j];
        param.value[j] = saved + eps;
        double up = head_loss(model, ep);
        param.value[j] = saved - eps;
        double dn = head_loss(model, ep);
        param.value[j] = saved;
        double fd = (up - dn) / (2 * eps);
        double err = std::abs(fd - analytic) / std::max({1.0, std::abs(fd), std::abs(analytic)});
        max_err = std::max(max_err, err);
    }
    res.pass = max_err < tol;
    std::ostringstream os;
    os << "max rel err " << max_err << " over " << probes << " probes (tol " << tol << ")";
    res.detail = os.str();
    return res;
}

}  // namespace

std::vector<CheckResult> run_gradient_checks(int primitive_trials, int head_probes) {
    std::vector<CheckResult> out;
    for (const FdReport& r : fd_check_all(primitive_trials, 1e-5, 1e-5)) {
        CheckResult c;
        c.name = "gradients: primitive '" + r.primitive + "'";
        c.pass = r.pass;
        std::ostringstream os;
        os << "max rel err " << r.max_rel_err << " over " << r.trials << " trials (tol " << r.tol
           << ")";
        c.detail = os.str();
        out.push_back(std::move(c));
    }
    for (HeadKind head : {HeadKind::corelnet, HeadKind::corelnet_t, HeadKind::transformer,
                          HeadKind::lstm, HeadKind::esbn})
        out.push_back(head_fd_check(head, head_probes));
    return out;
}

// ---------------------------------------------------------------------------
// Task battery
// ---------------------------------------------------------------------------

namespace {

// Miller-Madow bias-corrected plug-in estimate. The raw plug-in estimator is
// biased upward by about (Kx-1)(Ky-1)/(2 N ln 2), which alone would exceed the
// 0.01-bit threshold for 100 colors at any practical sample size.
double mutual_information_bits(const std::map<std::pair<int, int>, long>& joint, long total) {
    std::map<int, long> px, py;
    for (const auto& [k, n] : joint) {
        px[k.first] += n;
        py[k.second] += n;
    }
    double mi = 0;
    for (const auto& [k, n] : joint) {
        double pxy = static_cast<double>(n) / total;
        double p1 = static_cast<double>(px[k.first]) / total;
        double p2 = static_cast<double>(py[k.second]) / total;
        mi += pxy * std::log2(pxy / (p1 * p2));
    }
    double bias = static_cast<double>(px.size() - 1) * static_cast<double>(py.size() - 1) /
                  (2.0 * total * std::log(2.0));
    return std::max(0.0, mi - bias);
}

}  // namespace

std::vector<CheckResult> run_task_checks(const TaskContext& ctx, int episodes_per_task) {
    std::vector<CheckResult> out;
    for (const std::string& tname : all_task_names()) {
        TaskConfig task = task_from_name(tname);
        TaskInfo info = task_info(task);
        int m = info.max_m;
        Split split = split_glyphs(task, m, 11);
        std::set<int> train_set(split.train_ids.begin(), split.train_ids.end());
        std::set<int> test_set(split.test_ids.begin(), split.test_ids.end());
        auto train_whitelist = holdout_patterns(task, false);
        auto test_patterns = holdout_patterns(task, true);

        long oracle_ok = 0, n = 0;
        long label_counts[16] = {0};
        long pos_counts[16] = {0};
        bool hygiene = true, patterns_ok = true;
        std::map<std::pair<int, int>, long> joint;  // (bg color of first object, label)
        std::string fail_detail;

        int per_side = episodes_per_task / 2;
        for (int side = 0; side < 2; ++side) {
            bool test_side = side == 1;
            for (int i = 0; i < per_side; ++i) {
                TaskConfig side_task = task;
                if (task.is_game() && test_side)
                    side_task.game_family = i % 2 ? GlyphFamily::stripe : GlyphFamily::hexomino;
                Episode ep = gen_episode(ctx, side_task, split, test_side, 0xC0FFEE, i);
                ++n;
                int ol = oracle_label(ep);
                if (ol == ep.label) ++oracle_ok;
                label_counts[ep.label] += test_side ? 0 : 1;
                if (ep.meta.answer_pos >= 0 && !test_side) pos_counts[ep.meta.answer_pos] += 1;

                if (!task.is_game()) {
                    const std::set<int>& allowed = test_side && m > 0 ? test_set : train_set;
                    for (int g : ep.meta.glyph_ids)
                        if (g >= 0 && !allowed.count(g)) hygiene = false;
                }
                if (info.relation_holdout && task.kind != TaskKind::dist_n) {
                    // every '|'-separated component must come from the side's set
                    std::vector<std::string> comps;
                    std::string cur;
                    for (char c : ep.meta.pattern + "|") {
                        if (c == '|') {
                            comps.push_back(cur);
                            cur.clear();
                        } else
                            cur.push_back(c);
                    }
                    bool any_test_pattern = false;
                    for (const auto& p : comps) {
                        const auto& allowed = test_side ? test_patterns : train_whitelist;
                        if (std::find(allowed.begin(), allowed.end(), p) == allowed.end())
                            patterns_ok = false;
                        if (test_side && task.kind == TaskKind::same_diff6 && p == "AAB")
                            any_test_pattern = true;
                        if (test_side && task.kind != TaskKind::same_diff6 &&
                            std::find(train_whitelist.begin(), train_whitelist.end(), p) !=
                                train_whitelist.end())
                            patterns_ok = false;
                    }
                    if (test_side && task.kind == TaskKind::same_diff6 && !any_test_pattern)
                        patterns_ok = false;
                }
                if (task.kind == TaskKind::dist_n && task.restricted) {
                    const std::string& p = ep.meta.pattern;
                    bool preserves = true;
                    for (int k = 0; k < task.n - 3; ++k)
                        if (p[k] - '0' >= task.n - 3) preserves = false;
                    if (preserves == test_side) patterns_ok = false;
                }
                if (task.spurious && !test_side)
                    joint[{ep.meta.bg_colors[0], ep.label}] += 1;
                if (i < 100) {
                    try {
                        oracle_verify_images(ctx, ep);
                    } catch (const Error& e) {
                        hygiene = false;
                        fail_detail = e.what();
                    }
                }
            }
        }

        CheckResult agree;
        agree.name = "tasks: " + tname + " oracle agreement";
        agree.pass = oracle_ok == n;
        agree.detail = std::to_string(oracle_ok) + "/" + std::to_string(n);
        out.push_back(agree);

        CheckResult hyg;
        hyg.name = "tasks: " + tname + " split hygiene";
        hyg.pass = hygiene && patterns_ok;
        hyg.detail = hygiene ? (patterns_ok ? "ok" : "pattern leak") : ("glyph leak " + fail_detail);
        out.push_back(hyg);

        CheckResult bal;
        bal.name = "tasks: " + tname + " balance";
        double worst = 0;
        double uniform = 1.0 / info.num_classes;
        for (int c = 0; c < info.num_classes; ++c) {
            double frac = static_cast<double>(label_counts[c]) / per_side;
            worst = std::max(worst, std::abs(frac - uniform));
        }
        bal.pass = worst < 0.02;
        bal.detail = "max label-frequency deviation " + fmt_double(worst);
        out.push_back(bal);

        if (task.spurious) {
            CheckResult mi;
            mi.name = "tasks: " + tname + " spurious independence";
            double bits = mutual_information_bits(joint, per_side);
            mi.pass = bits < 0.01;
            mi.detail = "MI(background color; label) = " + fmt_double(bits) + " bits";
            out.push_back(mi);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Structural invariants
// ---------------------------------------------------------------------------

namespace {

// random orthogonal matrix via Householder products
Array<double> random_orthogonal(int d, uint64_t seed) {
    Rng rng = Rng::from(seed, 0x0A7B);
    Array<double> q({d, d});
    for (int i = 0; i < d; ++i) q[i * d + i] = 1.0;
    for (int rep = 0; rep < 3; ++rep) {
        std::vector<double> v(d);
        double norm = 0;
        for (int i = 0; i < d; ++i) {
            v[i] = rng.uniform(-1, 1);
            norm += v[i] * v[i];
        }
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        // q = q (I - 2 v v^T)
        std::vector<double> qv(d, 0.0);
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) qv[i] += q[i * d + j] * v[j];
        for (int i = 0; i < d; ++i)
            for (int j = 0; j < d; ++j) q[i * d + j] -= 2 * qv[i] * v[j];
    }
    return q;
}

template <typename T>
Array<T> matmul_plain(const Array<T>& a, const Array<T>& b) {
    Array<T> c({a.shape[0], b.shape[1]});
    for (int i = 0; i < a.shape[0]; ++i)
        for (int k = 0; k < a.shape[1]; ++k) {
            T av = a[i * a.shape[1] + k];
            for (int j = 0; j < b.shape[1]; ++j)
                c[i * b.shape[1] + j] += av * b[k * b.shape[1] + j];
        }
    return c;
}

CheckResult check(const std::string& name, bool pass, const std::string& detail = "") {
    return {name, pass, detail};
}

}  // namespace

std::vector<CheckResult> run_invariant_checks(const TaskContext& ctx) {
    std::vector<CheckResult> out;
    const TaskConfig sd = task_from_name("same_diff");
    const TaskConfig rmts = task_from_name("rmts");

    // --- separation contract: orthogonal maps of the encodings leave
    // relational models' logits unchanged ---
    {
        const int T = 6, d = 128;
        Rng rng = Rng::from(5, 0x0B5);
        Array<double> Z({T, d});
        for (auto& v : Z.v) v = rng.uniform(-1.5, 1.5);
        Array<double> M = random_orthogonal(d, 17);
        Array<double> ZM = matmul_plain(Z, M);
        double worst = 0;
        for (HeadKind head : {HeadKind::corelnet, HeadKind::corelnet_t, HeadKind::esbn}) {
            ModelConfig cfg;
            cfg.head = head;
            cfg.seq_len = T;
            cfg.num_classes = 2;
            Model<double> model(cfg, 99);
            Tape<double> tape;
            auto b = model.bind(tape);
            const Array<double>& l0 = tape.val(model.head_logits(b, tape.leaf(Z)));
            const Array<double>& l1 = tape.val(model.head_logits(b, tape.leaf(ZM)));
            for (long i = 0; i < l0.size(); ++i)
                worst = std::max(worst, std::abs(l0[i] - l1[i]));
        }
        out.push_back(check("invariants: orthogonal-map invariance (corelnet/corelnet_t/esbn)",
                            worst < 1e-9, "max logit drift " + fmt_double(worst)));

        // sensory models must NOT be invariant
        ModelConfig tf;
        tf.head = HeadKind::transformer;
        tf.sim = SimMode::asymmetric;
        tf.seq_len = T;
        tf.num_classes = 2;
        Model<double> model(tf, 99);
        Tape<double> tape;
        auto b = model.bind(tape);
        const Array<double>& l0 = tape.val(model.head_logits(b, tape.leaf(Z)));
        const Array<double>& l1 = tape.val(model.head_logits(b, tape.leaf(ZM)));
        double drift = 0;
        for (long i = 0; i < l0.size(); ++i) drift = std::max(drift, std::abs(l0[i] - l1[i]));
        out.push_back(check("invariants: transformer is sensory-sensitive", drift > 1e-6,
                            "logit drift " + fmt_double(drift)));
    }

    // --- sign-flip orthogonal maps are exact in float ---
    {
        const int T = 4, d = 128;
        Rng rng = Rng::from(6, 0x0B6);
        Array<float> Z({T, d});
        for (auto& v : Z.v) v = static_cast<float>(rng.uniform(-1.5, 1.5));
        Array<float> Zf = Z;
        for (int j = 0; j < d; ++j)
            if (j % 3 == 0)
                for (int i = 0; i < T; ++i) Zf[i * d + j] = -Zf[i * d + j];
        ModelConfig cfg;
        cfg.head = HeadKind::corelnet;
        cfg.seq_len = T;
        cfg.num_classes = 3;
        Model<float> model(cfg, 7);
        Tape<float> tape;
        auto b = model.bind(tape);
        const Array<float>& l0 = tape.val(model.head_logits(b, tape.leaf(Z)));
        const Array<float>& l1 = tape.val(model.head_logits(b, tape.leaf(Zf)));
        out.push_back(check("invariants: sign-flip map leaves corelnet logits bit-identical",
                            l0.v == l1.v));
    }

    // --- R row-stochastic, S symmetric, Cauchy-Schwarz ---
    {
        const int T = 9, d = 128;
        Rng rng = Rng::from(7, 0x0B7);
        Array<float> Z({T, d});
        for (auto& v : Z.v) v = static_cast<float>(rng.uniform(-2, 2));
        ModelConfig cfg;
        cfg.head = HeadKind::corelnet;
        cfg.seq_len = T;
        cfg.num_classes = 2;
        Model<float> model(cfg, 8);
        Tape<float> tape;
        auto b = model.bind(tape);
        auto sim = model.similarity(b, tape.leaf(Z));
        const Array<float>& S = tape.val(sim.S);
        const Array<float>& R = tape.val(sim.R);
        bool rows_ok = true, sym_ok = true, cs_ok = true, range_ok = true;
        for (int i = 0; i < T; ++i) {
            double sum = 0;
            for (int j = 0; j < T; ++j) {
                sum += R[i * T + j];
                range_ok = range_ok && R[i * T + j] >= 0 && R[i * T + j] <= 1;
                sym_ok = sym_ok && S[i * T + j] == S[j * T + i];
                double lhs = static_cast<double>(S[i * T + j]) * S[i * T + j];
                double rhs = static_cast<double>(S[i * T + i]) * S[j * T + j];
                cs_ok = cs_ok && lhs <= rhs * (1 + 1e-6) + 1e-6;
            }
            rows_ok = rows_ok && std::abs(sum - 1.0) < 1e-6;
        }
        out.push_back(check("invariants: R row-stochastic in [0,1]", rows_ok && range_ok));
        out.push_back(check("invariants: S symmetric (exact) + Cauchy-Schwarz", sym_ok && cs_ok));
    }

    // --- TCN affine invariance ---
    {
        const int T = 6, d = 128;
        Rng rng = Rng::from(8, 0x0B8);
        Array<float> Q({T, d});
        for (auto& v : Q.v) v = static_cast<float>(rng.uniform(-2, 2));
        Array<float> Qa = Q;
        for (int j = 0; j < d; ++j) {
            float s = static_cast<float>(rng.uniform(0.2, 3.0));
            float c = static_cast<float>(rng.uniform(-2, 2));
            for (int i = 0; i < T; ++i) Qa[i * d + j] = Qa[i * d + j] * s + c;
        }
        ModelConfig cfg;
        cfg.head = HeadKind::corelnet;
        cfg.seq_len = T;
        cfg.num_classes = 2;
        Model<float> model(cfg, 9);
        Tape<float> tape;
        auto b = model.bind(tape);
        const Array<float>& z0 = tape.val(model.tcn(b, tape.leaf(Q)));
        const Array<float>& z1 = tape.val(model.tcn(b, tape.leaf(Qa)));
        double worst = 0;
        for (long i = 0; i < z0.size(); ++i)
            worst = std::max(worst, static_cast<double>(std::abs(z0[i] - z1[i])));
        out.push_back(check("invariants: TCN per-feature affine invariance", worst < 1e-5,
                            "max drift " + fmt_double(worst)));
    }

    // --- permutation equivariance of R (both similarity modes) ---
    {
        const int T = 7, d = 128;
        Rng rng = Rng::from(9, 0x0B9);
        Array<float> Z({T, d});
        for (auto& v : Z.v) v = static_cast<float>(rng.uniform(-2, 2));
        std::vector<int> perm(T);
        for (int i = 0; i < T; ++i) perm[i] = i;
        rng.shuffle(perm);
        Array<float> Zp({T, d});
        for (int i = 0; i < T; ++i)
            for (int j = 0; j < d; ++j) Zp[i * d + j] = Z[perm[i] * d + j];
        // scores are bitwise equivariant; softmax rows renormalize the same
        // values in permuted order, so R matches to roundoff
        bool s_exact = true;
        double r_drift = 0;
        for (SimMode mode : {SimMode::symmetric, SimMode::asymmetric}) {
            ModelConfig cfg;
            cfg.head = HeadKind::corelnet;
            cfg.sim = mode;
            cfg.seq_len = T;
            cfg.num_classes = 2;
            Model<float> model(cfg, 10);
            Tape<float> tape;
            auto b = model.bind(tape);
            auto sim0 = model.similarity(b, tape.leaf(Z));
            auto sim1 = model.similarity(b, tape.leaf(Zp));
            const Array<float>& S = tape.val(sim0.S);
            const Array<float>& Sp = tape.val(sim1.S);
            const Array<float>& R = tape.val(sim0.R);
            const Array<float>& Rp = tape.val(sim1.R);
            for (int i = 0; i < T; ++i)
                for (int j = 0; j < T; ++j) {
                    if (Sp[i * T + j] != S[perm[i] * T + perm[j]]) s_exact = false;
                    r_drift = std::max(r_drift,
                                       static_cast<double>(std::abs(
                                           Rp[i * T + j] - R[perm[i] * T + perm[j]])));
                }
        }
        out.push_back(check("invariants: permutation maps S to P S P^T exactly, R to 1e-6",
                            s_exact && r_drift < 1e-6,
                            "R drift " + fmt_double(r_drift)));
    }

    // --- the corelnet decoder stays position-sensitive (briefly trained) ---
    {
        TrainConfig tc;
        tc.iterations = 120;
        tc.batch_size = 16;
        tc.eval_every = 0;
        tc.eval_episodes = 64;
        tc.final_eval_episodes = 64;
        ModelConfig mc;
        mc.head = HeadKind::corelnet;
        std::unique_ptr<Model<float>> model;
        TaskContext tiny = TaskContext::make(16, 2022);
        ModelConfig fastmc = mc;
        fastmc.enc.conv_layers = 2;
        train_run(tiny, rmts, fastmc, tc, 0, 3, &model);
        Split split = split_glyphs(rmts, 0, 3);
        Episode ep = gen_episode(tiny, rmts, split, false, 0xFEED, 0);
        Episode swapped = ep;
        for (int i = 0; i < 2; ++i) {
            std::swap(swapped.images[2 + i], swapped.images[4 + i]);
            std::swap(swapped.meta.glyph_ids[2 + i], swapped.meta.glyph_ids[4 + i]);
        }
        Tape<float> tape;
        auto b = model->bind(tape);
        const Array<float> l0 = tape.val(model->forward_episode(b, ep));
        const Array<float> l1 = tape.val(model->forward_episode(b, swapped));
        double drift = 0;
        for (long i = 0; i < l0.size(); ++i)
            drift = std::max(drift, static_cast<double>(std::abs(l0[i] - l1[i])));
        out.push_back(check("invariants: corelnet decoder is position-sensitive", drift > 1e-6,
                            "logit drift " + fmt_double(drift) + " under target-pair swap"));
    }

    // --- frozen encoder stays bit-identical through training steps ---
    {
        TaskContext tiny = TaskContext::make(16, 2022);
        ModelConfig mc;
        mc.head = HeadKind::corelnet;
        mc.random_encoder = true;
        mc.enc.conv_layers = 2;
        TrainConfig tc;
        tc.iterations = 30;
        tc.batch_size = 8;
        tc.eval_every = 0;
        tc.eval_episodes = 16;
        tc.final_eval_episodes = 16;
        std::unique_ptr<Model<float>> model;
        ModelConfig resolved = resolve_model(mc, sd, tiny);
        Model<float> fresh(resolved, mix64(4 ^ 0xA11CE));
        uint64_t before = fresh.encoder_checksum();
        train_run(tiny, sd, mc, tc, 0, 4, &model);
        out.push_back(check("invariants: frozen encoder checksum unchanged",
                            model->encoder_checksum() == before));
    }

    // --- seed determinism of the full train/evaluate pipeline ---
    {
        TaskContext tiny = TaskContext::make(16, 2022);
        ModelConfig mc;
        mc.head = HeadKind::corelnet;
        mc.enc.conv_layers = 2;
        TrainConfig tc;
        tc.iterations = 40;
        tc.batch_size = 8;
        tc.eval_every = 20;
        tc.eval_episodes = 32;
        tc.final_eval_episodes = 32;
        RunReport a = train_run(tiny, sd, mc, tc, 10, 5);
        RunReport b = train_run(tiny, sd, mc, tc, 10, 5);
        bool same = a.losses == b.losses && a.final_test == b.final_test &&
                    a.curve.size() == b.curve.size();
        for (size_t i = 0; same && i < a.curve.size(); ++i)
            same = a.curve[i].train_acc == b.curve[i].train_acc &&
                   a.curve[i].test_accs == b.curve[i].test_accs;
        out.push_back(check("invariants: seed determinism (bitwise loss/accuracy series)", same));
    }

    // --- evaluation does not mutate parameters ---
    {
        ModelConfig cfg;
        cfg.head = HeadKind::corelnet;
        cfg.seq_len = 2;
        cfg.num_classes = 2;
        cfg.enc.image_size = ctx.image_size;
        Model<float> model(cfg, 11);
        Split split = split_glyphs(sd, 0, 6);
        std::vector<Episode> eps = gen_episodes(ctx, sd, split, false, 0xAB, 0, 16);
        uint64_t before = model.params().checksum_all();
        evaluate(model, eps);
        out.push_back(check("invariants: evaluation leaves parameters bit-identical",
                            model.params().checksum_all() == before));
    }

    return out;
}

}  // namespace corelnet
