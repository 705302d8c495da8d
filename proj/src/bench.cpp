#include "hiergauss/bench.hpp"

#include "hiergauss/error.hpp"
#include "hiergauss/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

namespace hiergauss {

PipelineOutcome run_baseline(const LabeledSet& train, const LabeledSet& test, const GridSettings& grid_settings,
                             std::uint64_t seed) {
    const KernelArchitecture arch = standard_gaussian(train.dim(), 1.0);
    const CVGrid grid = make_grid(grid_settings, arch, train.x);
    const GridSearchResult gs = grid_search(arch, train, grid, seed);
    const EnsembleModel ensemble = cv_average_predictor(arch, train, gs.lambda, gs.gamma, seed, grid.folds);
    PipelineOutcome out;
    out.test_error = clipped_squared_error(ensemble, test);
    out.lambda = gs.lambda;
    out.gamma = gs.gamma;
    out.cv_risk = gs.cv_risk;
    return out;
}

PipelineOutcome run_hierarchical(const LabeledSet& train, const LabeledSet& test,
                                 const std::vector<KernelArchitecture>& menu, const OptimizerConfig& cfg) {
    SelectionResult selection = select_architecture(train, menu, cfg);
    const CandidateResult& chosen = selection.chosen();
    const EnsembleModel ensemble = cv_average_predictor(chosen.arch, train, chosen.lambda, chosen.arch.gamma(),
                                                        selection.cv_seed, cfg.grid.folds);
    PipelineOutcome out;
    out.test_error = clipped_squared_error(ensemble, test);
    out.lambda = chosen.lambda;
    out.gamma = chosen.arch.gamma();
    out.cv_risk = chosen.cv_risk;
    out.selection = std::move(selection);
    return out;
}

double mean_of(std::span<const double> values) {
    if (values.empty()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
    if (values.size() < 2) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    const double m = mean_of(values);
    double acc = 0.0;
    for (const double v : values) {
        acc += (v - m) * (v - m);
    }
    return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

std::vector<KernelArchitecture> menu_for(MenuChoice choice, std::size_t dim) {
    if (choice == MenuChoice::inhomogeneous) {
        ArchitectureMenu menu;
        menu.node_counts.clear();
        return build_candidate_architectures(dim, menu);
    }
    return build_candidate_architectures(dim);
}

namespace {

nlohmann::json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

std::string mean_std(const MethodSummary& m) {
    // leading zero dropped, five decimals
    const auto fmt5 = [](double v) {
        if (!std::isfinite(v)) {
            return std::string("n/a");
        }
        auto s = fmt::format("{:.5f}", v);
        if (s.rfind("0.", 0) == 0) {
            s.erase(0, 1);
        }
        return s;
    };
    return fmt5(m.mean) + " +- " + fmt5(m.stddev);
}

struct Cell {
    std::size_t dataset = 0;
    std::size_t method = 0;
    std::size_t rep = 0;
    double error = 0.0;
    double seconds = 0.0;
    std::string failure;
};

}  // namespace

nlohmann::json BenchmarkReport::to_json() const {
    nlohmann::json datasets_json = nlohmann::json::array();
    for (const auto& d : datasets) {
        nlohmann::json methods = nlohmann::json::array();
        for (const auto& m : d.methods) {
            nlohmann::json errors = nlohmann::json::array();
            for (const double e : m.errors) {
                errors.push_back(number_or_null(e));
            }
            methods.push_back({{"method", m.method},
                               {"errors", errors},
                               {"seconds", m.seconds},
                               {"mean", number_or_null(m.mean)},
                               {"stddev", number_or_null(m.stddev)}});
        }
        nlohmann::json entry{{"dataset", d.dataset}, {"methods", methods}, {"best", d.best_method}};
        if (d.failure) {
            entry["failure"] = *d.failure;
        }
        datasets_json.push_back(std::move(entry));
    }
    return {{"repetitions", repetitions}, {"metric", "clipped least-squares error"}, {"datasets", datasets_json}};
}

std::string BenchmarkReport::format_table() const {
    std::size_t name_width = 8;
    for (const auto& d : datasets) {
        name_width = std::max(name_width, d.dataset.size());
    }
    std::string out = fmt::format("{:<{}} | {:<24} | {:<24} | {}\n", "Data Set", name_width, kBaselineMethod,
                                  kHierarchicalMethod, "best");
    out += std::string(name_width + 3 + 24 + 3 + 24 + 3 + 22, '-') + '\n';
    for (const auto& d : datasets) {
        if (d.failure) {
            out += fmt::format("{:<{}} | failed: {}\n", d.dataset, name_width, *d.failure);
            continue;
        }
        std::string cols[2] = {"n/a", "n/a"};
        for (const auto& m : d.methods) {
            cols[m.method == kBaselineMethod ? 0 : 1] = mean_std(m);
        }
        out += fmt::format("{:<{}} | {:<24} | {:<24} | {}\n", d.dataset, name_width, cols[0], cols[1],
                           d.best_method);
    }
    out += fmt::format("average least-squares error of clipped predictions over {} repetitions\n", repetitions);
    return out;
}

BenchmarkReport run_benchmark(const BenchmarkSettings& settings) {
    settings.cfg.validate();
    if (settings.plan.repetitions < 1) {
        throw InvalidArgument("benchmark needs at least one repetition");
    }
    const std::vector<std::string> method_names{kBaselineMethod, kHierarchicalMethod};

    BenchmarkReport report;
    report.repetitions = settings.plan.repetitions;
    std::vector<Dataset> raw(settings.datasets.size());
    std::vector<Cell> cells;
    for (std::size_t d = 0; d < settings.datasets.size(); ++d) {
        DatasetSummary summary;
        summary.dataset = settings.datasets[d].filename().string();
        try {
            raw[d] = load(settings.datasets[d]);
            (void)resample_indices(raw[d].size(), settings.plan, 0);
            for (std::size_t rep = 0; rep < settings.plan.repetitions; ++rep) {
                for (std::size_t m = 0; m < method_names.size(); ++m) {
                    cells.push_back({d, m, rep, 0.0, 0.0, {}});
                }
            }
        } catch (const std::exception& e) {
            summary.failure = e.what();
        }
        report.datasets.push_back(std::move(summary));
    }

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t c = next++; c < cells.size(); c = next++) {
            Cell& cell = cells[c];
            const auto start = std::chrono::steady_clock::now();
            try {
                const auto idx = resample_indices(raw[cell.dataset].size(), settings.plan, cell.rep);
                Dataset train_raw{raw[cell.dataset].samples.subset(idx.train), {}, {}};
                Dataset test_raw{raw[cell.dataset].samples.subset(idx.test), {}, {}};
                const Dataset train = scale(train_raw);
                const Dataset test = apply_scaling(test_raw, *train.scaling);
                const std::uint64_t seed = derive_seed(settings.plan.seed, {cell.dataset, cell.method, cell.rep});
                if (cell.method == 0) {
                    cell.error = run_baseline(train.samples, test.samples, settings.cfg.grid, seed).test_error;
                } else {
                    OptimizerConfig cfg = settings.cfg;
                    cfg.seed = seed;
                    cell.error =
                        run_hierarchical(train.samples, test.samples, menu_for(settings.menu, train.dim()), cfg)
                            .test_error;
                }
            } catch (const std::exception& e) {
                cell.failure = e.what();
                cell.error = std::numeric_limits<double>::quiet_NaN();
            }
            cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        }
    };
    const std::size_t jobs = std::max<std::size_t>(1, std::min(settings.jobs, cells.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < jobs; ++t) {
            pool.emplace_back(worker);
        }
        worker();
    }

    for (std::size_t d = 0; d < report.datasets.size(); ++d) {
        auto& summary = report.datasets[d];
        if (summary.failure) {
            continue;
        }
        for (std::size_t m = 0; m < method_names.size(); ++m) {
            MethodSummary ms;
            ms.method = method_names[m];
            ms.errors.assign(settings.plan.repetitions, 0.0);
            ms.seconds.assign(settings.plan.repetitions, 0.0);
            for (const auto& cell : cells) {
                if (cell.dataset != d || cell.method != m) {
                    continue;
                }
                ms.errors[cell.rep] = cell.error;
                ms.seconds[cell.rep] = cell.seconds;
                if (!cell.failure.empty() && !summary.failure) {
                    summary.failure = ms.method + " repetition " + std::to_string(cell.rep) + ": " + cell.failure;
                }
            }
            ms.mean = mean_of(ms.errors);
            ms.stddev = sample_stddev(ms.errors);
            summary.methods.push_back(std::move(ms));
        }
        const auto best = std::min_element(summary.methods.begin(), summary.methods.end(),
                                           [](const auto& a, const auto& b) { return a.mean < b.mean; });
        summary.best_method = best->method;
    }
    return report;
}

}  // namespace hiergauss
