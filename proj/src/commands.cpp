#include "hiergauss/commands.hpp"

#include "hiergauss/error.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace hiergauss::cli {

namespace {

Dataset load_for_training(const std::filesystem::path& path, bool do_scale) {
    if (!std::filesystem::exists(path)) {
        throw Error("data file not found: " + path.string());
    }
    Dataset raw = load(path);
    return do_scale ? scale(raw) : raw;
}

OptimizerConfig load_config(const std::optional<std::filesystem::path>& path) {
    if (!path) {
        return {};
    }
    std::ifstream in(*path);
    if (!in) {
        throw Error("cannot open config file " + path->string());
    }
    try {
        return optimizer_config_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path->string() + ": " + e.what(), 0);
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << text;
}

}  // namespace

void write_model(const std::filesystem::path& path, const TrainedModel& model,
                 const std::optional<ScalingRecord>& scaling) {
    auto j = to_json(model);
    if (scaling) {
        j["scaling"] = to_json(*scaling);
    }
    write_text_file(path, j.dump(2) + "\n");
}

TrainResult train(const TrainOptions& opts, std::ostream& log) {
    const Dataset data = load_for_training(opts.data, opts.scale);
    KernelArchitecture arch = opts.arch ? load_architecture(*opts.arch) : standard_gaussian(data.dim(), 1.0);
    TrainResult result{fit(arch, data.samples, 1.0), data.scaling, std::nullopt};
    double lambda = 0.0;
    if (opts.grid) {
        const CVGrid grid = make_grid(opts.grid_settings, arch, data.samples.x);
        const GridSearchResult gs = grid_search(arch, data.samples, grid, opts.seed);
        arch = arch.with_gamma(gs.gamma);
        lambda = gs.lambda;
        log << "grid search selected lambda=" << gs.lambda << " gamma=" << gs.gamma << " cv_risk=" << gs.cv_risk
            << '\n';
        result.grid = gs;
    } else if (opts.lambda) {
        lambda = *opts.lambda;
    } else {
        throw InvalidArgument("either --lambda or --grid is required");
    }
    result.model = fit(arch, data.samples, lambda);
    write_model(opts.out, result.model, result.scaling);
    return result;
}

OptimizeResult optimize(const OptimizeOptions& opts) {
    const Dataset data = load_for_training(opts.data, opts.scale);
    OptimizerConfig cfg = load_config(opts.config);
    if (opts.seed) {
        cfg.seed = *opts.seed;
    }
    const std::vector<KernelArchitecture> menu =
        opts.arch ? std::vector<KernelArchitecture>{load_architecture(*opts.arch)} : menu_for(opts.menu, data.dim());

    SelectionResult selection = select_architecture(data.samples, menu, cfg);
    const CandidateResult& chosen = selection.chosen();
    TrainedModel model = fit(chosen.arch, data.samples, chosen.lambda);

    const KernelArchitecture isotropic = standard_gaussian(data.dim(), 1.0);
    const double baseline =
        grid_search(isotropic, data.samples, make_grid(cfg.grid, isotropic, data.samples.x), selection.cv_seed)
            .cv_risk;

    write_model(opts.out, model, data.scaling);
    if (opts.trace) {
        std::ofstream trace(*opts.trace);
        if (!trace) {
            throw Error("cannot write trace file " + opts.trace->string());
        }
        for (std::size_t c = 0; c < selection.candidates.size(); ++c) {
            write_trace_jsonl(trace, selection.candidates[c].trace, c);
        }
    }
    return {std::move(selection), std::move(model), baseline, data.scaling};
}

void print_optimize_summary(std::ostream& out, const OptimizeResult& r, OutputFormat format) {
    const CandidateResult& chosen = r.selection.chosen();
    if (format == OutputFormat::json) {
        nlohmann::json candidates = nlohmann::json::array();
        for (const auto& c : r.selection.candidates) {
            candidates.push_back({{"depth", c.arch.depth()},
                                  {"weights", c.arch.weight_count()},
                                  {"cv_risk", c.cv_risk},
                                  {"best_test_error", c.trace.best_test_error()}});
        }
        out << nlohmann::json{{"chosen", r.selection.index},
                              {"lambda", chosen.lambda},
                              {"gamma", chosen.arch.gamma()},
                              {"hierarchical_cv_risk", chosen.cv_risk},
                              {"baseline_cv_risk", r.baseline_cv_risk},
                              {"candidates", candidates}}
                   .dump(2)
            << '\n';
        return;
    }
    for (std::size_t c = 0; c < r.selection.candidates.size(); ++c) {
        const auto& cand = r.selection.candidates[c];
        out << (c == r.selection.index ? "* " : "  ") << "candidate " << c << ": depth " << cand.arch.depth() << ", "
            << cand.arch.weight_count() << " weights, cv error " << cand.cv_risk << '\n';
    }
    out << "hierarchical cv error " << chosen.cv_risk << " (lambda " << chosen.lambda << ", gamma "
        << chosen.arch.gamma() << ")\n";
    out << "baseline cv error     " << r.baseline_cv_risk << '\n';
}

PredictResult predict(const PredictOptions& opts) {
    std::ifstream in(opts.model);
    if (!in) {
        throw Error("cannot open model file " + opts.model.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(opts.model.string() + ": " + e.what(), 0);
    }
    const TrainedModel model = model_from_json(j);
    if (!std::filesystem::exists(opts.data)) {
        throw Error("data file not found: " + opts.data.string());
    }
    Dataset data = load(opts.data);
    if (j.contains("scaling")) {
        data = apply_scaling(data, scaling_from_json(j.at("scaling")));
    }
    PredictResult result;
    result.predictions = hiergauss::predict(model, data.samples.x, true);
    for (std::size_t i = 0; i < result.predictions.size(); ++i) {
        const double diff = data.samples.y[i] - result.predictions[i];
        result.squared_error += diff * diff;
    }
    result.squared_error /= static_cast<double>(result.predictions.size());
    if (opts.out) {
        std::ostringstream text;
        text.precision(17);
        for (const double p : result.predictions) {
            text << p << '\n';
        }
        write_text_file(*opts.out, text.str());
    }
    return result;
}

std::size_t default_jobs() {
    if (const char* env = std::getenv("HIERGAUSS_JOBS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) {
                return static_cast<std::size_t>(v);
            }
        } catch (const std::exception&) {
        }
    }
    return 1;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Hierarchical Gaussian kernel machines with optimized weights"};
    app.require_subcommand(1);

    const std::map<std::string, OutputFormat> formats{{"text", OutputFormat::text}, {"json", OutputFormat::json}};
    const std::map<std::string, MenuChoice> menus{{"full", MenuChoice::full},
                                                  {"inhomogeneous", MenuChoice::inhomogeneous}};

    std::uint64_t seed = 0;
    std::size_t jobs = default_jobs();
    std::optional<std::filesystem::path> config;
    OutputFormat format = OutputFormat::text;
    const auto add_common = [&](CLI::App* sub) {
        sub->add_option("--seed", seed, "Random seed");
        sub->add_option("--jobs", jobs, "Worker threads (default: HIERGAUSS_JOBS or 1)")->check(CLI::PositiveNumber);
        sub->add_option("--config", config, "Optimizer config (JSON)")->check(CLI::ExistingFile);
        sub->add_option("--format", format, "Output format")->transform(CLI::CheckedTransformer(formats));
    };

    TrainOptions train_opts;
    std::optional<double> lambda;
    auto* train_cmd = app.add_subcommand("train", "Fit a kernel least-squares model");
    train_cmd->add_option("--data", train_opts.data, "Training data (.csv or LIBSVM)")->required();
    train_cmd->add_option("--arch", train_opts.arch, "Kernel architecture (JSON)");
    auto* lambda_opt = train_cmd->add_option("--lambda", lambda, "Regularization parameter")->check(CLI::PositiveNumber);
    train_cmd->add_flag("--grid", train_opts.grid, "Select lambda and gamma by 5-fold CV")->excludes(lambda_opt);
    train_cmd->add_flag("!--no-scale", train_opts.scale, "Use the data as is instead of scaling to [-1,1]");
    train_cmd->add_option("--out", train_opts.out, "Model output (JSON)")->required();
    add_common(train_cmd);

    OptimizeOptions opt_opts;
    std::optional<std::filesystem::path> trace_path;
    auto* opt_cmd = app.add_subcommand("optimize", "Optimize kernel weights and select an architecture");
    opt_cmd->add_option("--data", opt_opts.data, "Training data (.csv or LIBSVM)")->required();
    opt_cmd->add_option("--arch", opt_opts.arch, "Single architecture instead of the candidate menu");
    opt_cmd->add_option("--menu", opt_opts.menu, "Candidate menu")->transform(CLI::CheckedTransformer(menus));
    opt_cmd->add_option("--out", opt_opts.out, "Model output (JSON)")->required();
    opt_cmd->add_option("--trace", trace_path, "Trace output (JSON lines)");
    opt_cmd->add_flag("!--no-scale", opt_opts.scale, "Use the data as is instead of scaling to [-1,1]");
    add_common(opt_cmd);

    PredictOptions pred_opts;
    auto* pred_cmd = app.add_subcommand("predict", "Evaluate a model on a dataset");
    pred_cmd->add_option("--model", pred_opts.model, "Model file (JSON)")->required();
    pred_cmd->add_option("--data", pred_opts.data, "Data (.csv or LIBSVM)")->required();
    pred_cmd->add_option("--out", pred_opts.out, "Write predictions to this file instead of stdout");
    add_common(pred_cmd);

    BenchmarkSettings bench;
    std::vector<std::filesystem::path> bench_data;
    std::optional<std::filesystem::path> report_path;
    bench.plan.repetitions = 30;
    auto* bench_cmd = app.add_subcommand("bench", "Compare the baseline and the optimized kernel over resamples");
    bench_cmd->add_option("--data", bench_data, "Datasets (repeatable)")->required();
    bench_cmd->add_option("--train-size", bench.plan.train_size, "Training samples per repetition")->required();
    bench_cmd->add_option("--test-size", bench.plan.test_size, "Test samples per repetition")->required();
    bench_cmd->add_option("--reps", bench.plan.repetitions, "Repetitions")->check(CLI::PositiveNumber);
    bench_cmd->add_option("--menu", bench.menu, "Candidate menu")->transform(CLI::CheckedTransformer(menus));
    bench_cmd->add_option("--out", report_path, "Also write the JSON report here");
    add_common(bench_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (train_cmd->parsed()) {
            train_opts.lambda = lambda;
            train_opts.seed = seed;
            if (config) {
                train_opts.grid_settings = load_config(config).grid;
            }
            const TrainResult r = train(train_opts, err);
            if (format == OutputFormat::json) {
                nlohmann::json j{{"model", train_opts.out.string()}, {"lambda", r.model.lambda},
                                 {"gamma", r.model.arch.gamma()}};
                if (r.grid) {
                    j["cv_risk"] = r.grid->cv_risk;
                }
                out << j.dump(2) << '\n';
            } else {
                out << "wrote " << train_opts.out.string() << " (lambda " << r.model.lambda << ", gamma "
                    << r.model.arch.gamma() << ")\n";
            }
        } else if (opt_cmd->parsed()) {
            opt_opts.config = config;
            opt_opts.trace = trace_path;
            if (opt_cmd->count("--seed") > 0) {
                opt_opts.seed = seed;
            }
            const OptimizeResult r = optimize(opt_opts);
            print_optimize_summary(out, r, format);
        } else if (pred_cmd->parsed()) {
            const PredictResult r = predict(pred_opts);
            if (format == OutputFormat::json) {
                out << nlohmann::json{{"predictions", r.predictions}, {"squared_error", r.squared_error}}.dump(2)
                    << '\n';
            } else {
                if (!pred_opts.out) {
                    const auto precision = out.precision(17);
                    for (const double p : r.predictions) {
                        out << p << '\n';
                    }
                    out.precision(precision);
                }
                err << "clipped least-squares error: " << r.squared_error << '\n';
            }
        } else if (bench_cmd->parsed()) {
            bench.datasets = bench_data;
            bench.cfg = load_config(config);
            bench.plan.seed = seed;
            bench.jobs = jobs;
            const BenchmarkReport report = run_benchmark(bench);
            if (report_path) {
                write_text_file(*report_path, report.to_json().dump(2) + "\n");
            }
            if (format == OutputFormat::json) {
                out << report.to_json().dump(2) << '\n';
            } else {
                out << report.format_table();
            }
            for (const auto& d : report.datasets) {
                if (d.failure) {
                    err << "dataset " << d.dataset << " failed: " << *d.failure << '\n';
                }
            }
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace hiergauss::cli
