#pragma once

#include "hiergauss/types.hpp"

#include <json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace hiergauss {

/// Lower bound applied to |w| for every stored width and child weight.
inline constexpr double kWeightFloor = 1e-8;

/// Node of a hierarchical Gaussian kernel tree.
///
/// A leaf is an inhomogeneous Gaussian over a subset of input coordinates:
/// its pre-exponent distance is sum_j v_j^2 (x_j - x'_j)^2. An internal node
/// combines child kernels k_i with weights w_i into the feature-space distance
/// 2 sum_i w_i^2 (1 - k_i). Indices are 0-based in memory and 1-based in JSON.
class KernelNode {
public:
    enum class Kind { leaf, internal };

    static KernelNode leaf(std::vector<std::size_t> indices, std::vector<double> widths);
    static KernelNode internal(std::vector<KernelNode> children, std::vector<double> weights);

    [[nodiscard]] Kind kind() const noexcept { return kind_; }
    [[nodiscard]] bool is_leaf() const noexcept { return kind_ == Kind::leaf; }

    [[nodiscard]] const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    [[nodiscard]] const std::vector<double>& widths() const noexcept { return widths_; }
    [[nodiscard]] const std::vector<KernelNode>& children() const noexcept { return children_; }
    [[nodiscard]] const std::vector<double>& weights() const noexcept { return weights_; }

    /// 1 for a leaf, 1 + depth of the children otherwise.
    [[nodiscard]] std::size_t depth() const noexcept { return depth_; }
    /// Widths plus child weights in this subtree.
    [[nodiscard]] std::size_t weight_count() const noexcept { return weight_count_; }

private:
    KernelNode() = default;

    Kind kind_ = Kind::leaf;
    std::vector<std::size_t> indices_;
    std::vector<double> widths_;
    std::vector<KernelNode> children_;
    std::vector<double> weights_;
    std::size_t depth_ = 1;
    std::size_t weight_count_ = 0;

    friend class KernelArchitecture;
};

/// Role of one trainable parameter.
enum class WeightRole { leaf_width, child_weight };

/// Position of a trainable parameter inside the tree.
struct WeightSlot {
    std::vector<std::size_t> path;  ///< child indices from the root to the owning node
    std::size_t slot = 0;           ///< width or child-weight index within that node
    WeightRole role = WeightRole::leaf_width;
};

/// All trainable parameters of a tree in depth-first order: a node's own
/// widths or child weights first, then each child's subtree in turn.
struct FlatWeights {
    std::vector<double> values;
    std::vector<WeightSlot> layout;
};

/// A hierarchical Gaussian kernel: tree, root width gamma and input dimension.
///
/// gamma scales only the root: k(x,x') = exp(-gamma^-2 * D(x,x')) where D is the
/// root's pre-exponent distance. Every node below the root uses gamma = 1.
class KernelArchitecture {
public:
    KernelArchitecture(KernelNode root, double gamma, std::size_t input_dim);

    [[nodiscard]] const KernelNode& root() const noexcept { return root_; }
    [[nodiscard]] double gamma() const noexcept { return gamma_; }
    [[nodiscard]] std::size_t input_dim() const noexcept { return input_dim_; }
    [[nodiscard]] std::size_t depth() const noexcept { return root_.depth(); }
    [[nodiscard]] std::size_t weight_count() const noexcept { return root_.weight_count(); }

    /// True when the leaf index sets together cover every input coordinate.
    [[nodiscard]] bool universal_cover() const noexcept { return universal_cover_; }

    [[nodiscard]] KernelArchitecture with_gamma(double gamma) const;

    /// Replaces all trainable parameters (FlatWeights order). Values are stored
    /// as max(|w|, kWeightFloor); the kernel only depends on w^2.
    [[nodiscard]] KernelArchitecture with_weights(std::span<const double> values) const;

    [[nodiscard]] FlatWeights flatten() const;
    [[nodiscard]] std::vector<double> weights() const;

private:
    KernelNode root_;
    double gamma_;
    std::size_t input_dim_;
    bool universal_cover_ = false;
};

/// max(|w|, kWeightFloor).
[[nodiscard]] inline double floor_weight(double w) noexcept {
    const double a = std::fabs(w);
    return a < kWeightFloor || std::isnan(a) ? kWeightFloor : a;
}

/// exp(-distance / gamma^2). Every kernel value in the library goes through
/// this function so that Gram matrices built from cached distances agree
/// bit-for-bit with pointwise evaluation.
[[nodiscard]] inline double gaussian_of_distance(double distance, double gamma) noexcept {
    return std::exp(-distance / (gamma * gamma));
}

/// Root pre-exponent distance D(x,x') with gamma factored out.
[[nodiscard]] double feature_distance_sq(const KernelArchitecture& arch, Sample x, Sample xp);

/// Recursive evaluation of the kernel. Result in (0, 1], exactly 1 for x == x'.
[[nodiscard]] double eval(const KernelArchitecture& arch, Sample x, Sample xp);

/// Independent evaluation through the product formula: each node is the
/// product over children of exp(-gamma^-2 w_i^2 d_i^2), d_i^2 = 2 - 2 k_i, and
/// each leaf the product over coordinates of exp(-gamma^-2 v_j^2 (x_j - x'_j)^2).
[[nodiscard]] double eval_product_form(const KernelArchitecture& arch, Sample x, Sample xp);

/// Dense matrix of kernel values, rows indexing X and columns indexing X'.
class GramMatrix {
public:
    GramMatrix() = default;
    explicit GramMatrix(Eigen::MatrixXd entries) : entries_(std::move(entries)) {}

    [[nodiscard]] Eigen::Index rows() const noexcept { return entries_.rows(); }
    [[nodiscard]] Eigen::Index cols() const noexcept { return entries_.cols(); }
    [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return entries_(i, j); }
    [[nodiscard]] const Eigen::MatrixXd& matrix() const noexcept { return entries_; }

private:
    Eigen::MatrixXd entries_;
};

/// entries(i, j) = eval(arch, X[i], X'[j]).
[[nodiscard]] GramMatrix gram(const KernelArchitecture& arch, const SampleMatrix& X, const SampleMatrix& Xp);

/// entries(i, j) = feature_distance_sq(arch, X[i], X'[j]); the Gram matrix for
/// any root gamma is gaussian_of_distance applied entrywise.
[[nodiscard]] Eigen::MatrixXd distance_matrix(const KernelArchitecture& arch, const SampleMatrix& X, const SampleMatrix& Xp);

/// Applies gaussian_of_distance entrywise.
[[nodiscard]] Eigen::MatrixXd kernel_from_distances(const Eigen::MatrixXd& distances, double gamma);

/// Depth-1 kernel over all coordinates with widths 1/gamma and root gamma 1,
/// i.e. exp(-gamma^-2 ||x - x'||^2).
[[nodiscard]] KernelArchitecture standard_gaussian(std::size_t dim, double gamma);

/// How first-layer nodes of the depth-2 candidates pick their coordinates.
enum class IndexAssignment { all, random_subset };

struct ArchitectureMenu {
    bool include_inhomogeneous = true;
    std::vector<std::size_t> node_counts{4, 6, 8, 10, 12, 16};
    IndexAssignment assignment = IndexAssignment::all;
    std::size_t subset_size = 0;  ///< random_subset only; 0 means ceil(d / 2)
    std::uint64_t seed = 0;
};

/// One depth-1 inhomogeneous kernel followed by one depth-2 kernel per entry
/// of `node_counts`. Widths and weights start at 1; see initialize_weights.
[[nodiscard]] std::vector<KernelArchitecture> build_candidate_architectures(std::size_t dim,
                                                                            const ArchitectureMenu& menu = {});

/// Data-dependent starting weights. A leaf at the root gets widths 1 (with the
/// root gamma chosen by grid search this is the isotropic Gaussian); a leaf
/// below an internal node gets widths 1/delta_I with delta_I the median pairwise
/// distance on its coordinates; internal nodes get weights 1/sqrt(l).
[[nodiscard]] KernelArchitecture initialize_weights(const KernelArchitecture& arch, const SampleMatrix& X);

/// Median of sqrt(feature_distance_sq) over distinct pairs of (at most the
/// first `max_points`) rows of X. Returns 1 when every pair coincides.
[[nodiscard]] double median_feature_distance(const KernelArchitecture& arch, const SampleMatrix& X,
                                             std::size_t max_points = 300);

[[nodiscard]] nlohmann::json to_json(const KernelArchitecture& arch);
[[nodiscard]] KernelArchitecture architecture_from_json(const nlohmann::json& j);
[[nodiscard]] KernelArchitecture load_architecture(const std::filesystem::path& path);
void save_architecture(const KernelArchitecture& arch, const std::filesystem::path& path);

}  // namespace hiergauss
