#pragma once

#include "hiergauss/data.hpp"
#include "hiergauss/kernel.hpp"
#include "hiergauss/optimizer.hpp"
#include "hiergauss/solver.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hiergauss {

inline constexpr const char* kBaselineMethod = "baseline-gaussian-svm";
inline constexpr const char* kHierarchicalMethod = "hierarchical-optimized";

struct PipelineOutcome {
    double test_error = 0.0;  ///< clipped least-squares error on the test set
    double lambda = 0.0;
    double gamma = 0.0;
    double cv_risk = 0.0;
    std::optional<SelectionResult> selection;  ///< hierarchical pipeline only
};

/// Isotropic Gaussian kernel, (lambda, gamma) by 5-fold CV grid search, final
/// predictor the clipped average of the five fold models.
[[nodiscard]] PipelineOutcome run_baseline(const LabeledSet& train, const LabeledSet& test,
                                           const GridSettings& grid, std::uint64_t seed);

/// Weight optimization for every candidate, kernel chosen by 5-fold CV, final
/// predictor the clipped average of the five fold models.
[[nodiscard]] PipelineOutcome run_hierarchical(const LabeledSet& train, const LabeledSet& test,
                                               const std::vector<KernelArchitecture>& menu,
                                               const OptimizerConfig& cfg);

/// Sample standard deviation (n - 1 denominator); NaN for fewer than two values.
[[nodiscard]] double sample_stddev(std::span<const double> values);
[[nodiscard]] double mean_of(std::span<const double> values);

struct MethodSummary {
    std::string method;
    std::vector<double> errors;   ///< per repetition
    std::vector<double> seconds;  ///< wall clock per repetition
    double mean = 0.0;
    double stddev = 0.0;
};

struct DatasetSummary {
    std::string dataset;
    std::vector<MethodSummary> methods;
    std::string best_method;
    std::optional<std::string> failure;
};

struct BenchmarkReport {
    std::size_t repetitions = 0;
    std::vector<DatasetSummary> datasets;

    [[nodiscard]] nlohmann::json to_json() const;
    /// Mean +- std per (dataset, method), best method in the last column.
    [[nodiscard]] std::string format_table() const;
};

enum class MenuChoice { full, inhomogeneous };

struct BenchmarkSettings {
    std::vector<std::filesystem::path> datasets;
    ResamplePlan plan;
    OptimizerConfig cfg;
    MenuChoice menu = MenuChoice::full;
    std::size_t jobs = 1;
};

/// Runs every (dataset, method, repetition) cell. Cells run on up to `jobs`
/// threads; each draws from a stream keyed by (seed, dataset, method, rep).
/// A dataset that fails to load or run is reported and skipped.
[[nodiscard]] BenchmarkReport run_benchmark(const BenchmarkSettings& settings);

[[nodiscard]] std::vector<KernelArchitecture> menu_for(MenuChoice choice, std::size_t dim);

}  // namespace hiergauss
