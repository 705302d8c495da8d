#pragma once

#include "hiergauss/grad.hpp"
#include "hiergauss/kernel.hpp"
#include "hiergauss/random.hpp"
#include "hiergauss/solver.hpp"
#include "hiergauss/types.hpp"

#include <json.hpp>

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

namespace hiergauss {

/// Control constants of the weight optimization.
struct OptimizerConfig {
    std::size_t M_outer = 15;
    std::size_t L_inner = 10;
    std::size_t N1 = 1000;  ///< annealing steps after each SVM refit
    std::size_t N2 = 500;   ///< annealing steps after a local minimum
    std::size_t N3 = 10;    ///< gradient steps per inner iteration
    std::array<double, 3> split_fracs{0.4444, 0.2222, 0.3334};
    double sa_initial_accept = 0.5;
    double sa_temp_coeff = 100.0;
    double sa_proposal_sigma = 0.5;  ///< log-normal proposal w' = w exp(sigma xi)
    double armijo_c = 1e-4;
    double backtrack_factor = 0.5;
    double eta0 = 1.0;
    std::size_t max_backtracks = 40;
    double grad_tol = 1e-8;
    std::uint64_t seed = 0;
    bool initialize_weights = true;  ///< replace the given weights by initialize_weights()
    GridSettings grid;

    void validate() const;
};

[[nodiscard]] nlohmann::json to_json(const OptimizerConfig& cfg);
/// Missing fields keep their defaults; unknown fields are rejected.
[[nodiscard]] OptimizerConfig optimizer_config_from_json(const nlohmann::json& j);

/// Index sets of the three-way split.
struct SplitIndices {
    std::vector<std::size_t> d1;  ///< SVM training part
    std::vector<std::size_t> d2;  ///< validation-risk part
    std::vector<std::size_t> d3;  ///< test-error part
};

/// Seeded shuffle cut into blocks of sizes round(frac * n), the last block
/// taking the remainder. Every block must be nonempty and n >= 10.
[[nodiscard]] SplitIndices three_way_split(std::size_t n, const std::array<double, 3>& fracs, std::uint64_t seed);

using RiskFn = std::function<double(std::span<const double>)>;
using RiskGradFn = std::function<RiskGradient(std::span<const double>)>;

struct AnnealingState {
    std::size_t iteration = 0;  ///< completed steps
    std::size_t total = 0;      ///< N
    std::vector<double> weights;
    double risk = 0.0;
    Rng rng;
};

/// Probability of keeping a proposal: 1 for delta < 0; otherwise
/// initial_accept * exp(-(temp_coeff * i / sqrt(N)) * delta / risk_old), or 0
/// when risk_old <= 1e-15.
[[nodiscard]] double sa_acceptance_threshold(double delta, double risk_old, std::size_t iteration, std::size_t total,
                                             const OptimizerConfig& cfg);

struct SaStepReport {
    std::size_t iteration = 0;  ///< i after the increment
    std::size_t weight_index = 0;
    double old_value = 0.0;
    double new_value = 0.0;
    double risk_old = 0.0;
    double risk_new = 0.0;
    double threshold = 0.0;
    bool accepted = false;
};

/// One annealing step: perturb one uniformly chosen weight, keep it if the
/// risk drops or a uniform draw falls below the acceptance threshold.
SaStepReport sa_step(AnnealingState& state, const RiskFn& risk, const OptimizerConfig& cfg);

struct GdStepReport {
    bool accepted = false;
    bool local_minimum = false;
    double eta = 0.0;
    double risk_before = 0.0;
    double risk_after = 0.0;
    double grad_norm_sq = 0.0;
    double armijo_c = 0.0;
    std::size_t backtracks = 0;

    /// risk_after <= risk_before - armijo_c * eta * grad_norm_sq
    [[nodiscard]] bool satisfies_armijo() const noexcept {
        return risk_after <= risk_before - armijo_c * eta * grad_norm_sq;
    }
};

struct GdStepResult {
    std::vector<double> weights;
    GdStepReport report;
};

/// One gradient step with backtracking (Armijo) line search from cfg.eta0.
/// Weights are floored at kWeightFloor before each trial evaluation. A gradient
/// of norm <= grad_tol or an exhausted search reports a local minimum and
/// returns the weights unchanged.
[[nodiscard]] GdStepResult gd_step(std::span<const double> weights, const RiskFn& risk, const RiskGradFn& risk_grad,
                                   const OptimizerConfig& cfg);

enum class TracePhase { split, svm_refit, sa, gd, test, reshuffle };

[[nodiscard]] const char* to_string(TracePhase phase) noexcept;

struct TraceRecord {
    TracePhase phase = TracePhase::split;
    std::size_t outer = 0;
    std::size_t inner = 0;
    std::size_t step = 0;
    std::size_t split_id = 0;
    double risk = 0.0;  ///< D2 risk after the event (sa, gd, svm_refit)
    bool accepted = false;
    // sa
    std::size_t weight_index = 0;
    double delta = 0.0;
    // gd
    GdStepReport gd;
    // svm_refit
    double lambda = 0.0;
    double gamma = 0.0;
    double cv_risk = 0.0;
    // test
    double test_error = 0.0;
    double best_test_error = 0.0;
    // split, reshuffle
    std::optional<SplitIndices> indices;
};

[[nodiscard]] nlohmann::json to_json(const TraceRecord& record);

/// State that produced the best D3 error: kernel (weights and gamma), the
/// SVM coefficients on D1 of the split with id `split_id`, and lambda.
struct BestSnapshot {
    KernelArchitecture arch;
    double lambda = 0.0;
    std::vector<double> alphas;
    std::size_t split_id = 0;
    double test_error = 0.0;
};

struct OptimizationTrace {
    std::vector<TraceRecord> records;
    std::vector<SplitIndices> splits;  ///< indexed by split_id
    std::optional<BestSnapshot> best;

    [[nodiscard]] double best_test_error() const;
    [[nodiscard]] std::vector<double> best_weights() const;
};

/// Interleaved simulated annealing and line-search gradient descent on the
/// validation risk, with a fixed test part for model selection:
///   split D into D1, D2, D3
///   repeat M times:
///     grid-search lambda, gamma and fit alpha on D1
///     anneal R_D2 for N1 steps
///     repeat L times:
///       anneal N2 steps if the last gradient phase hit a local minimum,
///       else take N3 gradient steps; record the D3 error and keep the best
///     reshuffle D1 and D2 if the D3 error did not improve
[[nodiscard]] OptimizationTrace optimize_weights(const LabeledSet& data, const KernelArchitecture& arch,
                                                 const OptimizerConfig& cfg);

struct CandidateResult {
    KernelArchitecture arch;  ///< optimized weights, CV-selected gamma
    double lambda = 0.0;
    double cv_risk = 0.0;
    OptimizationTrace trace;
};

struct SelectionResult {
    std::size_t index = 0;
    std::vector<CandidateResult> candidates;
    std::uint64_t cv_seed = 0;  ///< fold seed used for scoring every candidate

    [[nodiscard]] const CandidateResult& chosen() const { return candidates.at(index); }
};

/// Optimizes every candidate and keeps the one with the smallest 5-fold CV
/// error on `data` (ties: fewer weights, then earlier position).
[[nodiscard]] SelectionResult select_architecture(const LabeledSet& data, const std::vector<KernelArchitecture>& menu,
                                                  const OptimizerConfig& cfg);

/// One JSON object per line. `candidate` adds a "candidate" field to each line.
void write_trace_jsonl(std::ostream& out, const OptimizationTrace& trace, std::optional<std::size_t> candidate = {});

}  // namespace hiergauss
