#include "neumiss/checkpoint.hpp"
#include "neumiss/dataset_io.hpp"
#include "neumiss/diagnostics.hpp"
#include "neumiss/em.hpp"
#include "neumiss/errors.hpp"
#include "neumiss/experiment.hpp"
#include "neumiss/imputer.hpp"
#include "neumiss/metrics.hpp"
#include "neumiss/mlp.hpp"
#include "neumiss/network.hpp"
#include "neumiss/oracle.hpp"
#include "neumiss/plot.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace neumiss;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitVerify = 2;
constexpr int kExitRuntime = 3;

std::string read_text(const fs::path& path, const char* what) {
    std::ifstream in(path);
    if (!in) throw ConfigError(std::string("cannot open ") + what + " '" + path.string() + "'");
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

struct GenerateArgs {
    std::string config;
    Index d = 10;
    Index n = 10000;
    Index n_test = 0;
    std::string mechanism = "mcar";
    double snr = 10.0;
    double missing_rate = 0.5;
};

// A gt spec is a JSON object with any of d, n, n_test, mechanism, snr, missing_rate.
void apply_gt_spec(GenerateArgs& a, const CLI::App& cmd) {
    if (a.config.empty()) return;
    const auto j = nlohmann::json::parse(read_text(a.config, "config"));
    for (const auto& [key, value] : j.items()) {
        // Explicit flags win over the file.
        if (cmd.count("--" + key) > 0) continue;
        if (key == "d") a.d = value.get<Index>();
        else if (key == "n") a.n = value.get<Index>();
        else if (key == "n_test") a.n_test = value.get<Index>();
        else if (key == "mechanism") a.mechanism = value.get<std::string>();
        else if (key == "snr") a.snr = value.get<double>();
        else if (key == "missing_rate") a.missing_rate = value.get<double>();
        else throw ConfigError("unknown key '" + key + "' in " + a.config);
    }
}

int run_generate(GenerateArgs a, const CLI::App& cmd, std::uint64_t seed, const std::string& out) {
    apply_gt_spec(a, cmd);
    if (a.d < 1 || a.n < 1) throw ConfigError("generate: d and n must be positive");
    const auto mech = sim::parse_mechanism(a.mechanism);
    RngStream gt_rng(seed, stable_hash("generate/gt"));
    const auto gt = sim::make_ground_truth(gt_rng, a.d, a.snr, mech, a.missing_rate);
    RngStream data_rng(seed, stable_hash("generate/data"));
    const auto train = sim::draw_dataset(data_rng, gt, a.n);

    const fs::path dir = out.empty() ? fs::path(".") : fs::path(out);
    fs::create_directories(dir);
    sim::write_dataset_csv(dir / "train.csv", train);
    std::cout << "wrote " << (dir / "train.csv").string() << " (" << train.rows() << " rows, missing rate "
              << train.missing_rate() << ")\n";
    if (a.n_test > 0) {
        const auto test = sim::draw_dataset(data_rng, gt, a.n_test);
        sim::write_dataset_csv(dir / "test.csv", test);
        std::cout << "wrote " << (dir / "test.csv").string() << " (" << test.rows() << " rows)\n";
        if (mech != sim::MechanismKind::selfmask_probit) {
            std::cout << "bayes r2 on test " << r2_score(test.y(), oracle::bayes_predictions(gt, test)) << '\n';
        }
    }
    return kExitOk;
}

struct TrainArgs {
    std::string data;
    std::string method = "neumiss";
    Index capacity = 3;
    std::string config;
};

Model fit_model(const TrainArgs& a, const sim::MaskedDataset& data, std::uint64_t seed) {
    const auto overrides = a.config.empty() ? bench::TrainOverrides{}
                                            : bench::parse_train_overrides(read_text(a.config, "config"));
    RngStream rng(seed, stable_hash("train/" + a.method));
    if (a.method == "neumiss" || a.method == "neumiss_res") {
        auto cfg = overrides.neumiss;
        cfg.validation_fraction = overrides.validation_fraction;
        return net::train(data, a.capacity, a.method == "neumiss_res", cfg, rng).weights;
    }
    if (a.method == "mlp" || a.method == "mlp_deep") {
        auto cfg = overrides.mlp;
        cfg.validation_fraction = overrides.validation_fraction;
        const auto widths = a.method == "mlp" ? std::vector<Index>{a.capacity * data.dim()}
                                              : mlp::deep_widths(data.dim(), a.capacity);
        auto split = net::split_validation(data, cfg.validation_fraction, rng);
        return mlp::train(split.fit, split.validation, widths, cfg, rng).weights;
    }
    if (a.method == "em") {
        baselines::EmOptions opt;
        opt.tol = overrides.em_tol;
        opt.max_iter = overrides.em_max_iter;
        return baselines::em_fit(data, opt);
    }
    if (a.method == "mice_lr") {
        return baselines::impute_lr_train(data, overrides.imputer_iterations, overrides.ridge_penalty);
    }
    throw ConfigError("train: unknown method '" + a.method +
                      "' (expected neumiss, neumiss_res, mlp, mlp_deep, em or mice_lr)");
}

int run_train(const TrainArgs& a, std::uint64_t seed, const std::string& out) {
    const auto data = sim::read_dataset_csv(fs::path(a.data));
    const auto model = fit_model(a, data, seed);
    const fs::path path = out.empty() ? fs::path("model.json") : fs::path(out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    save_model(path, model);
    std::cout << "trained " << model_kind(model) << " on " << data.rows() << " rows; train r2 "
              << r2_score(data.y(), predict_model(model, data)) << "; wrote " << path.string() << '\n';
    return kExitOk;
}

int run_evaluate(const std::string& checkpoint, const std::string& data_path) {
    const auto model = load_model(fs::path(checkpoint));
    const auto data = sim::read_dataset_csv(fs::path(data_path));
    const auto pred = predict_model(model, data);
    std::cout << "r2 " << r2_score(data.y(), pred) << "\nmse " << mean_squared_error(data.y(), pred) << '\n';
    return kExitOk;
}

int run_bench(const std::string& config, const CLI::App& cmd, std::uint64_t seed, const std::string& out,
              Index jobs) {
    if (config.empty()) throw ConfigError("bench: --config is required");
    auto cfg = bench::load_config(fs::path(config));
    if (cmd.count("--seed") > 0) cfg.base_seed = seed;
    if (!out.empty()) cfg.output_dir = out;
    bench::RunOptions options;
    options.jobs = jobs;
    options.log = &std::cerr;
    const auto path = bench::run_experiment(cfg, options);
    std::cout << "results in " << path.string() << '\n';
    return kExitOk;
}

int run_plot(const std::string& results, const std::string& kind, const std::string& out) {
    const auto figure = bench::parse_figure_kind(kind);
    fs::path svg = out.empty() ? fs::path(results).replace_extension(".svg") : fs::path(out);
    if (fs::is_directory(svg)) svg /= std::string(bench::to_string(figure)) + ".svg";
    bench::plot_results(fs::path(results), figure, svg);
    std::cout << "wrote " << svg.string() << '\n';
    return kExitOk;
}

int run_verify(std::uint64_t seed) {
    const auto report = diag::run_verify(seed);
    report.print(std::cout);
    return report.all_passed() ? kExitOk : kExitVerify;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"NeuMiss networks and missing-value baselines"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    std::string out;
    Index jobs = 1;

    auto* gen = app.add_subcommand("generate", "Draw a ground truth and write masked dataset CSVs to --out DIR");
    GenerateArgs gen_args;
    gen->add_option("--config", gen_args.config, "JSON gt spec (d, n, n_test, mechanism, snr, missing_rate)");
    gen->add_option("--d", gen_args.d, "Number of features");
    gen->add_option("--n", gen_args.n, "Training rows");
    gen->add_option("--n_test", gen_args.n_test, "Test rows (0: no test file)");
    gen->add_option("--mechanism", gen_args.mechanism, "mcar, mar, gaussian_sm or probit_sm");
    gen->add_option("--snr", gen_args.snr, "Signal-to-noise ratio");
    gen->add_option("--missing_rate", gen_args.missing_rate, "Target missing rate");
    gen->add_option("--seed", seed, "Seed");
    gen->add_option("--out", out, "Output directory");

    auto* train = app.add_subcommand("train", "Fit one model and write a JSON checkpoint to --out");
    TrainArgs train_args;
    train->add_option("--data", train_args.data, "Training CSV")->required();
    train->add_option("--method", train_args.method, "neumiss, neumiss_res, mlp, mlp_deep, em or mice_lr");
    train->add_option("--capacity", train_args.capacity, "Depth for NeuMiss and MLP-deep, width multiple for MLP");
    train->add_option("--config", train_args.config, "JSON train_config overrides");
    train->add_option("--seed", seed, "Seed");
    train->add_option("--out", out, "Checkpoint path");

    auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a dataset");
    std::string checkpoint;
    std::string eval_data;
    evaluate->add_option("--checkpoint", checkpoint, "Checkpoint JSON")->required();
    evaluate->add_option("--data", eval_data, "Dataset CSV")->required();

    auto* bench_cmd = app.add_subcommand("bench", "Run an experiment grid from a JSON config");
    std::string bench_config;
    bench_cmd->add_option("--config", bench_config, "Experiment config JSON");
    bench_cmd->add_option("--seed", seed, "Override base_seed");
    bench_cmd->add_option("--out", out, "Override output_dir");
    bench_cmd->add_option("--jobs", jobs, "Cells run in parallel")->check(CLI::PositiveNumber);

    auto* plot = app.add_subcommand("plot", "Render an SVG figure from a results CSV");
    std::string results;
    std::string kind = "capacity";
    plot->add_option("--results", results, "Results CSV")->required();
    plot->add_option("--kind", kind, "capacity, depth_panels or boxplot");
    plot->add_option("--out", out, "SVG path or directory");

    auto* verify = app.add_subcommand("verify", "Run the bound, gradient and equivalence checks");
    verify->add_option("--seed", seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return run_generate(gen_args, *gen, seed, out);
        if (train->parsed()) return run_train(train_args, seed, out);
        if (evaluate->parsed()) return run_evaluate(checkpoint, eval_data);
        if (bench_cmd->parsed()) return run_bench(bench_config, *bench_cmd, seed, out, jobs);
        if (plot->parsed()) return run_plot(results, kind, out);
        if (verify->parsed()) return run_verify(seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    return kExitUsage;
}
