#pragma once

#include "hiergauss/kernel.hpp"
#include "hiergauss/types.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hiergauss {

/// Regularized kernel least-squares decision function f = sum_i alpha_i k(x_i, .).
struct TrainedModel {
    std::vector<double> alphas;
    SampleMatrix anchors;
    double lambda = 1.0;
    KernelArchitecture arch;
    double clip_bound = 1.0;
};

/// max(-bound, min(bound, t)).
[[nodiscard]] constexpr double clip_value(double t, double bound) noexcept {
    return t < -bound ? -bound : (t > bound ? bound : t);
}

/// Minimizer of lambda ||f||_H^2 + (1/n) sum (y_i - f(x_i))^2, i.e. the
/// solution of (K + n lambda I) alpha = y. Uses a Cholesky factorization
/// (LDLT if that fails) with one step of iterative refinement.
[[nodiscard]] TrainedModel fit(const KernelArchitecture& arch, const LabeledSet& data, double lambda);

/// Same, starting from a precomputed training Gram matrix.
[[nodiscard]] std::vector<double> solve_coefficients(const Eigen::MatrixXd& k, std::span<const double> y, double lambda);

[[nodiscard]] double predict(const TrainedModel& model, Sample x, bool clip);
[[nodiscard]] std::vector<double> predict(const TrainedModel& model, const SampleMatrix& X, bool clip);

/// Mean of (y - prediction)^2 over a labeled set, clipped predictions.
[[nodiscard]] double clipped_squared_error(const TrainedModel& model, const LabeledSet& data);

/// Candidate values for the cross-validated grid search.
struct CVGrid {
    std::vector<double> lambdas;
    std::vector<double> gammas;
    std::size_t folds = 5;

    /// Throws InvalidArgument unless both sequences are nonempty, positive and
    /// non-decreasing, and folds >= 2.
    void validate() const;
};

/// Recipe for a CVGrid: lambda geometric over [lambda_min, lambda_max], gamma
/// geometric over [gamma_low, gamma_high] times the median root feature distance.
struct GridSettings {
    double lambda_min = 1e-6;
    double lambda_max = 1.0;
    std::size_t lambda_count = 10;
    double gamma_low = 0.05;
    double gamma_high = 20.0;
    std::size_t gamma_count = 10;
    std::size_t folds = 5;
};

[[nodiscard]] std::vector<double> geometric_sequence(double lo, double hi, std::size_t count);

[[nodiscard]] CVGrid make_grid(const GridSettings& settings, const KernelArchitecture& arch, const SampleMatrix& X);

/// Seeded uniform shuffle cut into k contiguous blocks whose sizes differ by at most one.
[[nodiscard]] std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k, std::uint64_t seed);

struct GridSearchResult {
    double lambda = 0.0;
    double gamma = 0.0;
    double cv_risk = 0.0;
    Eigen::MatrixXd cell_risks;  ///< rows index lambdas, columns gammas
};

/// Cross-validated least-squares error of clipped predictions for every
/// (lambda, gamma) cell; gamma replaces the root gamma of `arch`. Ties go to the
/// larger lambda, then the larger gamma.
[[nodiscard]] GridSearchResult grid_search(const KernelArchitecture& arch, const LabeledSet& data, const CVGrid& grid,
                                           std::uint64_t seed);

/// CV error of clipped predictions at fixed lambda, using arch's own gamma and
/// the folds of make_folds(n, folds, seed).
[[nodiscard]] double cv_error(const KernelArchitecture& arch, const LabeledSet& data, double lambda, std::size_t folds,
                              std::uint64_t seed);

/// Average of fold models, each clipped, with the mean clipped again.
struct EnsembleModel {
    std::vector<TrainedModel> members;
    double clip_bound = 1.0;

    [[nodiscard]] double predict(Sample x) const;
    [[nodiscard]] std::vector<double> predict(const SampleMatrix& X) const;
};

/// One model per CV fold, trained on the remaining folds.
[[nodiscard]] EnsembleModel cv_average_predictor(const KernelArchitecture& arch, const LabeledSet& data, double lambda,
                                                 double gamma, std::uint64_t seed, std::size_t folds = 5);

[[nodiscard]] double clipped_squared_error(const EnsembleModel& model, const LabeledSet& data);

[[nodiscard]] nlohmann::json to_json(const TrainedModel& model);
[[nodiscard]] TrainedModel model_from_json(const nlohmann::json& j);

}  // namespace hiergauss
