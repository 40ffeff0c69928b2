#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "drml/datasets.hpp"
#include "drml/diagnostics.hpp"
#include "drml/episodic.hpp"
#include "drml/formulations.hpp"
#include "drml/surface.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("bad JSON in " + path + ": " + e.what());
    }
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open output: " + path);
    out << text;
}

drml::Head parse_head(const json& j) {
    drml::Head head;
    head.kind = drml::head_kind_from_string(j.value("kind", "dr"));
    head.log_rho = j.value("log_rho", 2.0);
    head.scale_s = j.value("scale_s", 2.0);
    head.margin_m = j.value("margin_m", 0.0);
    return head;
}

drml::SyntheticConfig parse_synthetic(const json& j) {
    drml::SyntheticConfig cfg;
    cfg.n_classes = j.value("n_classes", cfg.n_classes);
    cfg.dim = j.value("dim", cfg.dim);
    cfg.points_per_class = j.value("points_per_class", cfg.points_per_class);
    cfg.separation = j.value("separation", cfg.separation);
    cfg.spread = j.value("spread", cfg.spread);
    if (j.contains("split_fractions")) {
        const auto f = j.at("split_fractions");
        cfg.train_frac = f.at(0);
        cfg.val_frac = f.at(1);
        cfg.test_frac = f.at(2);
    }
    return cfg;
}

drml::Dataset load_dataset(const json& j, std::uint64_t seed) {
    if (j.contains("csv")) return drml::load_csv(j.at("csv"));
    const json syn = j.value("synthetic", json::object());
    return drml::generate_synthetic(parse_synthetic(syn),
                                    j.value("seed", seed));
}

drml::DistanceMode parse_mode(const std::string& s) {
    if (s == "prototype") return drml::DistanceMode::Prototype;
    if (s == "nn") return drml::DistanceMode::NearestNeighbor;
    throw ConfigError("unknown distance mode: " + s);
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
    json cfg = config_path.empty() ? json::object() : load_json(config_path);
    const std::uint64_t used_seed = seed.value_or(cfg.value("seed", 0));
    const drml::SyntheticConfig syn =
        parse_synthetic(cfg.value("synthetic", json::object()));
    const drml::Dataset ds = drml::generate_synthetic(syn, used_seed);
    fs::create_directories(out_dir);
    drml::save_csv(ds, out_dir + "/dataset.csv");
    json manifest;
    manifest["seed"] = used_seed;
    manifest["synthetic"] = {{"n_classes", syn.n_classes},
                             {"dim", syn.dim},
                             {"points_per_class", syn.points_per_class},
                             {"separation", syn.separation},
                             {"spread", syn.spread},
                             {"split_fractions",
                              {syn.train_frac, syn.val_frac, syn.test_frac}}};
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << out_dir << "/dataset.csv (" << ds.points.size()
              << " points)\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<std::uint64_t> seed) {
    const json cfg = load_json(config_path);
    drml::TrainConfig tc;
    tc.seed = seed.value_or(cfg.value("seed", 0));
    const json protocol = cfg.value("protocol", json::object());
    tc.n_way = protocol.value("n_way", tc.n_way);
    tc.k_shot = protocol.value("k_shot", tc.k_shot);
    tc.n_query = protocol.value("n_query", tc.n_query);
    tc.episodes = protocol.value("episodes", tc.episodes);
    tc.lr = cfg.value("lr", tc.lr);
    tc.head = parse_head(cfg.value("head", json::object()));
    tc.mode = parse_mode(cfg.value("mode", "prototype"));
    tc.val_episodes = cfg.value("val_episodes", tc.val_episodes);

    const drml::Dataset ds =
        load_dataset(cfg.value("dataset", json::object()), tc.seed);

    drml::MlpParams best;
    const drml::TrainLog log = drml::train(ds, tc, nullptr, &best);

    fs::create_directories(out_dir);
    drml::save_train_log(log, out_dir + "/trainlog.csv",
                         out_dir + "/checkpoints.bin");
    drml::save_params(best, tc.head.kind, out_dir + "/model.bin",
                      out_dir + "/model.json");
    json manifest = cfg;
    manifest["seed"] = tc.seed;
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote " << log.checkpoints.size() << " checkpoints to "
              << out_dir << "/trainlog.csv\n";
    return 0;
}

int cmd_evaluate(const std::string& config_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed) {
    const json cfg = load_json(config_path);
    drml::EvalConfig ec;
    ec.seed = seed.value_or(cfg.value("seed", 0));
    const json protocol = cfg.value("protocol", json::object());
    ec.n_way = protocol.value("n_way", ec.n_way);
    ec.k_shot = protocol.value("k_shot", ec.k_shot);
    ec.n_query = protocol.value("n_query", ec.n_query);
    ec.n_episodes = cfg.value("n_episodes", ec.n_episodes);
    ec.mode = parse_mode(cfg.value("mode", "prototype"));

    const std::string model_bin = cfg.at("model_bin");
    const std::string model_json = cfg.at("model_json");
    drml::HeadKind kind = drml::HeadKind::SoftmaxSq;
    const drml::MlpParams params = drml::load_params(model_bin, model_json, &kind);
    ec.head.kind = kind;
    ec.head.log_rho = params.log_rho;

    const drml::Dataset ds =
        load_dataset(cfg.value("dataset", json::object()), ec.seed);
    const drml::Split split =
        drml::split_from_string(cfg.value("split", "test"));
    const drml::EvalResult res = drml::evaluate(params, ds, split, ec);
    std::printf("accuracy %.5f +/- %.5f (%zu episodes)\n", res.mean_accuracy,
                res.ci_half_width, ec.n_episodes);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        json out;
        out["mean_accuracy"] = res.mean_accuracy;
        out["ci_half_width"] = res.ci_half_width;
        out["n_episodes"] = ec.n_episodes;
        write_text(out_dir + "/eval.json", out.dump(2) + "\n");
    }
    return 0;
}

int cmd_diagnose(const std::string& run_a, const std::string& run_b,
                 const std::string& out_dir) {
    const drml::TrainLog log_a =
        drml::load_train_log(run_a + "/trainlog.csv", run_a + "/checkpoints.bin");
    const drml::TrainLog log_b =
        drml::load_train_log(run_b + "/trainlog.csv", run_b + "/checkpoints.bin");
    const drml::ComparisonReport report = drml::compare_runs(log_a, log_b);
    const std::string csv = drml::comparison_csv(report);
    std::cout << csv;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text(out_dir + "/comparison.csv", csv);
    }
    return 0;
}

json extrema_json(const drml::ExtremaReport& report) {
    json j;
    j["argmax"] = report.argmax;
    j["max_value"] = report.max_value;
    j["argmin"] = report.argmin;
    j["min_value"] = report.min_value;
    j["flat"] = report.flat;
    return j;
}

int cmd_surface(const std::string& config_path, const std::string& out_dir) {
    const json cfg = load_json(config_path);
    const std::string domain = cfg.value("domain", "plane");
    const drml::Head head = parse_head(cfg.value("head", json::object()));
    const std::size_t refine_steps = cfg.value("refine_steps", 40);
    fs::create_directories(out_dir);

    std::vector<drml::Vec> points;
    std::size_t resolution;
    if (domain == "plane") {
        resolution = cfg.value("resolution", 201);
        if (cfg.contains("prototypes")) {
            for (const auto& p : cfg.at("prototypes"))
                points.push_back(p.get<drml::Vec>());
        } else {
            // Equilateral default layout.
            points = {{0.0, 1.0},
                      {-std::sqrt(3.0) / 2.0, -0.5},
                      {std::sqrt(3.0) / 2.0, -0.5}};
        }
    } else if (domain == "sphere") {
        resolution = cfg.value("resolution", 181);
        if (cfg.contains("class_vectors")) {
            for (const auto& p : cfg.at("class_vectors"))
                points.push_back(p.get<drml::Vec>());
        } else {
            points = {{0.0, 0.0, 1.0}, {0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}};
        }
    } else {
        throw ConfigError("unknown surface domain: " + domain);
    }

    const std::vector<std::string> names = {"red", "green", "blue"};
    json extrema;
    for (std::size_t target = 0; target < points.size(); ++target) {
        drml::ConfidenceGrid grid;
        if (domain == "plane") {
            const drml::PlaneBounds bounds = drml::default_plane_bounds(points);
            grid = drml::plane_grid(points, head, static_cast<int>(target), bounds,
                                    resolution);
        } else {
            grid = drml::sphere_grid(points, head, static_cast<int>(target),
                                     resolution);
        }
        const std::string name =
            target < names.size() ? names[target] : "class" + std::to_string(target);
        drml::write_grid_csv(grid, out_dir + "/grid_" + name + ".csv");
        drml::write_grid_pgm(grid, out_dir + "/grid_" + name + ".pgm");
        extrema[name] = extrema_json(drml::find_extrema(grid, refine_steps));
    }
    write_text(out_dir + "/extrema.json", extrema.dump(2) + "\n");
    json manifest = cfg;
    manifest["domain"] = domain;
    write_text(out_dir + "/manifest.json", manifest.dump(2) + "\n");
    std::cout << "wrote grids and extrema report to " << out_dir << "\n";
    return 0;
}

// Case (a): d = (1, 2); case (b): d = (2, 4); true class is the first.
int cmd_reproduce_table1() {
    struct Row {
        const char* name;
        double d1, d2;
    };
    const Row rows[] = {{"(a)", 1.0, 2.0}, {"(b)", 2.0, 4.0}};
    const double expected[2][4] = {{0.95257, 0.80000, 0.048587, 0.22314},
                                   {0.99999, 0.80000, 6.1442e-6, 0.22314}};
    bool ok = true;
    std::printf("%-6s %-8s %-8s %-10s %-10s %-12s %-12s\n", "case", "d1", "d2",
                "sigma_c1", "delta_c1", "L_S", "L_DR");
    for (int i = 0; i < 2; ++i) {
        const std::vector<double> d = {rows[i].d1, rows[i].d2};
        const drml::ConfidenceVector sm = drml::softmax_confidences(d);
        const drml::ConfidenceVector dr = drml::dr_confidences(d, 2.0);
        const double sigma = sm.probs[0];
        const double delta = dr.probs[0];
        const double loss_s = drml::cross_entropy(sm, 0);
        const double loss_dr = drml::cross_entropy(dr, 0);
        std::printf("%-6s %-8.1f %-8.1f %-10.5f %-10.5f %-12.5g %-12.5f\n",
                    rows[i].name, rows[i].d1, rows[i].d2, sigma, delta, loss_s,
                    loss_dr);
        const double got[4] = {sigma, delta, loss_s, loss_dr};
        for (int k = 0; k < 4; ++k)
            if (std::abs(got[k] - expected[i][k]) >
                1e-4 * std::abs(expected[i][k]))
                ok = false;
    }
    if (!ok) {
        std::cerr << "self-check failed: values deviate from the reference\n";
        return kExitNumeric;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Metric-learning laboratory: softmax vs distance-ratio heads"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    std::optional<std::uint64_t> seed;
    std::string run_a, run_b;

    auto add_common = [&](CLI::App* cmd, bool need_config) {
        auto* opt = cmd->add_option("--config", config_path, "JSON config file");
        if (need_config) opt->required();
        cmd->add_option("--out", out_dir, "output directory");
        cmd->add_option("--seed", seed, "seed override");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    add_common(gen, false);
    gen->get_option("--out")->required();

    CLI::App* train_cmd = app.add_subcommand("train", "run episodic training");
    add_common(train_cmd, true);
    train_cmd->get_option("--out")->required();

    CLI::App* eval_cmd = app.add_subcommand("evaluate", "evaluate a trained model");
    add_common(eval_cmd, true);

    CLI::App* diag = app.add_subcommand("diagnose", "compare two training runs");
    diag->add_option("run_a", run_a, "first run directory")->required();
    diag->add_option("run_b", run_b, "second run directory")->required();
    diag->add_option("--out", out_dir, "output directory");

    CLI::App* surf = app.add_subcommand("surface", "export confidence surfaces");
    add_common(surf, true);
    surf->get_option("--out")->required();

    app.add_subcommand("reproduce-table1",
                       "print the toy-example table and self-check it");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(config_path, out_dir, seed);
        if (train_cmd->parsed()) return cmd_train(config_path, out_dir, seed);
        if (eval_cmd->parsed()) return cmd_evaluate(config_path, out_dir, seed);
        if (diag->parsed()) return cmd_diagnose(run_a, run_b, out_dir);
        if (surf->parsed()) return cmd_surface(config_path, out_dir);
        return cmd_reproduce_table1();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const drml::NumericalFailure& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::runtime_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return kExitIo;
    }
}
