#pragma once

#include "hiergauss/bench.hpp"
#include "hiergauss/data.hpp"
#include "hiergauss/optimizer.hpp"
#include "hiergauss/solver.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

namespace hiergauss::cli {

enum class OutputFormat { text, json };

struct TrainOptions {
    std::filesystem::path data;
    std::optional<std::filesystem::path> arch;  ///< default: isotropic Gaussian with gamma 1
    std::optional<double> lambda;
    bool grid = false;
    bool scale = true;
    std::filesystem::path out;
    std::uint64_t seed = 0;
    GridSettings grid_settings;
};

struct TrainResult {
    TrainedModel model;
    std::optional<ScalingRecord> scaling;
    std::optional<GridSearchResult> grid;
};

/// Fits a model at fixed lambda, or after a CV grid search over (lambda, gamma),
/// and writes it as JSON (with the scaling record when the data was scaled).
TrainResult train(const TrainOptions& opts, std::ostream& log);

struct OptimizeOptions {
    std::filesystem::path data;
    std::optional<std::filesystem::path> arch;  ///< when absent the candidate menu is used
    MenuChoice menu = MenuChoice::full;
    std::optional<std::filesystem::path> config;
    std::optional<std::uint64_t> seed;  ///< overrides the config seed
    std::filesystem::path out;
    std::optional<std::filesystem::path> trace;
    bool scale = true;
};

struct OptimizeResult {
    SelectionResult selection;
    TrainedModel model;
    double baseline_cv_risk = 0.0;
    std::optional<ScalingRecord> scaling;
};

/// Weight optimization with architecture selection; writes the final model
/// (fitted on all data) and the line-delimited trace.
OptimizeResult optimize(const OptimizeOptions& opts);

void print_optimize_summary(std::ostream& out, const OptimizeResult& result, OutputFormat format);

struct PredictOptions {
    std::filesystem::path model;
    std::filesystem::path data;
    std::optional<std::filesystem::path> out;
};

struct PredictResult {
    std::vector<double> predictions;  ///< clipped, in the model's label scale
    double squared_error = 0.0;
};

PredictResult predict(const PredictOptions& opts);

void write_model(const std::filesystem::path& path, const TrainedModel& model,
                 const std::optional<ScalingRecord>& scaling);

/// Default for --jobs: HIERGAUSS_JOBS if set and valid, else 1.
[[nodiscard]] std::size_t default_jobs();

/// Full command line entry point. Returns 0 on success, 2 on usage errors and
/// 1 on runtime errors; diagnostics go to `err`, results to `out`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace hiergauss::cli
