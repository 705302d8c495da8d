#pragma once

#include "hiergauss/kernel.hpp"
#include "hiergauss/types.hpp"

#include <span>
#include <vector>

namespace hiergauss {

/// Kernel value and its partial derivatives in FlatWeights order.
struct KernelGradient {
    double value = 0.0;
    std::vector<double> partials;
};

/// Validation risk and its partial derivatives in FlatWeights order.
struct RiskGradient {
    double risk = 0.0;
    std::vector<double> partials;
};

enum class LossKind { least_squares, hinge };

/// Loss L(y, t) with its derivative in t. Least squares is (y - t)^2;
/// hinge is max(0, 1 - y t) with subgradient 0 at the kink.
class LossFunction {
public:
    constexpr LossFunction() = default;
    constexpr explicit LossFunction(LossKind kind) : kind_(kind) {}

    [[nodiscard]] constexpr LossKind kind() const noexcept { return kind_; }

    [[nodiscard]] constexpr double value(double y, double t) const noexcept {
        if (kind_ == LossKind::hinge) {
            const double m = 1.0 - y * t;
            return m > 0.0 ? m : 0.0;
        }
        return (y - t) * (y - t);
    }

    [[nodiscard]] constexpr double derivative(double y, double t) const noexcept {
        if (kind_ == LossKind::hinge) {
            return y * t < 1.0 ? -y : 0.0;
        }
        return 2.0 * (t - y);
    }

private:
    LossKind kind_ = LossKind::least_squares;
};

/// Analytic derivatives of the kernel with respect to every width and weight,
/// computed in one pass over the tree. For an internal node with value k,
/// child values k_i and weights w_i (gamma = 1 below the root):
///   dk/dw_i = -4 gamma^-2 w_i (1 - k_i) k
///   dk/du   =  2 gamma^-2 w_i^2 k dk_i/du   for u inside child i
/// and for a leaf dk/dv_j = -2 gamma^-2 v_j (x_j - x'_j)^2 k.
[[nodiscard]] KernelGradient kernel_gradient(const KernelArchitecture& arch, Sample x, Sample xp);

/// Allocation-free variant. `partials` must hold arch.weight_count() values;
/// returns the kernel value.
double kernel_gradient_into(const KernelArchitecture& arch, Sample x, Sample xp, std::span<double> partials);

/// Unclipped decision values f(x'_j) = sum_i alpha_i k(anchor_i, x'_j).
[[nodiscard]] std::vector<double> decision_values(const KernelArchitecture& arch, std::span<const double> alphas,
                                                  const SampleMatrix& anchors, const SampleMatrix& points);

/// (1/n') sum_j L(y'_j, f(x'_j)) with unclipped f.
[[nodiscard]] double validation_risk(const KernelArchitecture& arch, std::span<const double> alphas,
                                     const SampleMatrix& anchors, const LabeledSet& validation,
                                     const LossFunction& loss = {});

/// Risk as above together with
///   dR/dw = (1/n') sum_j L'(y'_j, f(x'_j)) sum_i alpha_i dk(x_i, x'_j)/dw.
/// Summation runs sequentially in index order.
[[nodiscard]] RiskGradient risk_and_gradient(const KernelArchitecture& arch, std::span<const double> alphas,
                                             const SampleMatrix& anchors, const LabeledSet& validation,
                                             const LossFunction& loss = {});

}  // namespace hiergauss
