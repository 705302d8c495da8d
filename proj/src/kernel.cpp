#include "hiergauss/kernel.hpp"

#include "hiergauss/error.hpp"
#include "hiergauss/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <utility>

namespace hiergauss {

namespace {

void require_valid_parameter(double v, const char* what) {
    if (!std::isfinite(v) || !(v > 0.0)) {
        throw InvalidArgument(std::string(what) + " must be finite and strictly positive, got " + std::to_string(v));
    }
}

// Pre-exponent distance of a node with gamma = 1. eval() and the gradient
// code in grad.cpp must accumulate in exactly this order.
double node_distance(const KernelNode& node, const double* x, const double* xp) {
    if (node.is_leaf()) {
        const auto& idx = node.indices();
        const auto& v = node.widths();
        double acc = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const double diff = x[idx[j]] - xp[idx[j]];
            acc += v[j] * v[j] * (diff * diff);
        }
        return acc;
    }
    const auto& children = node.children();
    const auto& w = node.weights();
    double acc = 0.0;
    for (std::size_t i = 0; i < children.size(); ++i) {
        const double child = std::exp(-node_distance(children[i], x, xp));
        acc += w[i] * w[i] * (1.0 - child);
    }
    return 2.0 * acc;
}

double node_product_form(const KernelNode& node, double inv_gamma_sq, const double* x, const double* xp) {
    double prod = 1.0;
    if (node.is_leaf()) {
        const auto& idx = node.indices();
        const auto& v = node.widths();
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const double diff = x[idx[j]] - xp[idx[j]];
            prod *= std::exp(-inv_gamma_sq * v[j] * v[j] * diff * diff);
        }
        return prod;
    }
    const auto& children = node.children();
    const auto& w = node.weights();
    for (std::size_t i = 0; i < children.size(); ++i) {
        const double child = node_product_form(children[i], 1.0, x, xp);
        const double feature_dist_sq = 2.0 - 2.0 * child;
        prod *= std::exp(-inv_gamma_sq * w[i] * w[i] * feature_dist_sq);
    }
    return prod;
}

void check_dims(const KernelArchitecture& arch, Sample x, Sample xp) {
    if (x.size() != arch.input_dim() || xp.size() != arch.input_dim()) {
        throw DimensionError("sample dimension " + std::to_string(x.size()) + "/" + std::to_string(xp.size()) +
                             " does not match kernel input dimension " + std::to_string(arch.input_dim()));
    }
}

void check_dims(const KernelArchitecture& arch, const SampleMatrix& X, const SampleMatrix& Xp) {
    if (X.rows() == 0 || Xp.rows() == 0) {
        throw InvalidArgument("Gram matrix requested for an empty sample set");
    }
    if (static_cast<std::size_t>(X.cols()) != arch.input_dim() ||
        static_cast<std::size_t>(Xp.cols()) != arch.input_dim()) {
        throw DimensionError("sample set dimension does not match kernel input dimension " +
                             std::to_string(arch.input_dim()));
    }
}

void mark_cover(const KernelNode& node, std::vector<bool>& seen) {
    if (node.is_leaf()) {
        for (const std::size_t i : node.indices()) {
            seen[i] = true;
        }
        return;
    }
    for (const auto& c : node.children()) {
        mark_cover(c, seen);
    }
}

std::size_t max_index(const KernelNode& node) {
    if (node.is_leaf()) {
        return *std::max_element(node.indices().begin(), node.indices().end());
    }
    std::size_t m = 0;
    for (const auto& c : node.children()) {
        m = std::max(m, max_index(c));
    }
    return m;
}

void flatten_into(const KernelNode& node, std::vector<std::size_t>& path, FlatWeights& out) {
    if (node.is_leaf()) {
        for (std::size_t j = 0; j < node.widths().size(); ++j) {
            out.values.push_back(node.widths()[j]);
            out.layout.push_back({path, j, WeightRole::leaf_width});
        }
        return;
    }
    for (std::size_t i = 0; i < node.weights().size(); ++i) {
        out.values.push_back(node.weights()[i]);
        out.layout.push_back({path, i, WeightRole::child_weight});
    }
    for (std::size_t i = 0; i < node.children().size(); ++i) {
        path.push_back(i);
        flatten_into(node.children()[i], path, out);
        path.pop_back();
    }
}

double median_of(std::vector<double> v) {
    if (v.empty()) {
        return 0.0;
    }
    const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    double m = *mid;
    if (v.size() % 2 == 0) {
        m = 0.5 * (m + *std::max_element(v.begin(), mid));
    }
    return m;
}

double median_subset_distance(const SampleMatrix& X, const std::vector<std::size_t>& idx, std::size_t max_points) {
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(X.rows()), max_points);
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            double acc = 0.0;
            for (const std::size_t j : idx) {
                const double diff = X(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(j)) -
                                    X(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(j));
                acc += diff * diff;
            }
            if (acc > 0.0) {
                dists.push_back(std::sqrt(acc));
            }
        }
    }
    const double m = median_of(std::move(dists));
    return m > 0.0 ? m : 1.0;
}

KernelNode initialize_node(const KernelNode& node, bool is_root, const SampleMatrix& X) {
    if (node.is_leaf()) {
        const double width = is_root ? 1.0 : 1.0 / median_subset_distance(X, node.indices(), 300);
        return KernelNode::leaf(node.indices(), std::vector<double>(node.widths().size(), width));
    }
    std::vector<KernelNode> children;
    children.reserve(node.children().size());
    for (const auto& c : node.children()) {
        children.push_back(initialize_node(c, false, X));
    }
    const double w = 1.0 / std::sqrt(static_cast<double>(children.size()));
    return KernelNode::internal(std::move(children), std::vector<double>(node.weights().size(), w));
}

}  // namespace

KernelNode KernelNode::leaf(std::vector<std::size_t> indices, std::vector<double> widths) {
    if (indices.empty()) {
        throw InvalidArgument("leaf must have at least one coordinate");
    }
    if (indices.size() != widths.size()) {
        throw InvalidArgument("leaf has " + std::to_string(indices.size()) + " indices but " +
                              std::to_string(widths.size()) + " widths");
    }
    auto sorted = indices;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw InvalidArgument("leaf indices must be distinct");
    }
    for (const double v : widths) {
        require_valid_parameter(v, "leaf width");
    }
    KernelNode n;
    n.kind_ = Kind::leaf;
    n.indices_ = std::move(indices);
    n.widths_ = std::move(widths);
    n.depth_ = 1;
    n.weight_count_ = n.widths_.size();
    return n;
}

KernelNode KernelNode::internal(std::vector<KernelNode> children, std::vector<double> weights) {
    if (children.empty()) {
        throw InvalidArgument("internal node must have at least one child");
    }
    if (children.size() != weights.size()) {
        throw InvalidArgument("internal node has " + std::to_string(children.size()) + " children but " +
                              std::to_string(weights.size()) + " weights");
    }
    for (const double w : weights) {
        require_valid_parameter(w, "child weight");
    }
    const std::size_t child_depth = children.front().depth();
    std::size_t count = weights.size();
    for (const auto& c : children) {
        if (c.depth() != child_depth) {
            throw InvalidArgument("all children of an internal node must have the same depth");
        }
        count += c.weight_count();
    }
    KernelNode n;
    n.kind_ = Kind::internal;
    n.children_ = std::move(children);
    n.weights_ = std::move(weights);
    n.depth_ = child_depth + 1;
    n.weight_count_ = count;
    return n;
}

KernelArchitecture::KernelArchitecture(KernelNode root, double gamma, std::size_t input_dim)
    : root_(std::move(root)), gamma_(gamma), input_dim_(input_dim) {
    require_valid_parameter(gamma_, "gamma");
    if (input_dim_ == 0) {
        throw InvalidArgument("input dimension must be at least 1");
    }
    if (max_index(root_) >= input_dim_) {
        throw InvalidArgument("leaf index " + std::to_string(max_index(root_) + 1) + " exceeds input dimension " +
                              std::to_string(input_dim_));
    }
    std::vector<bool> seen(input_dim_, false);
    mark_cover(root_, seen);
    universal_cover_ = std::all_of(seen.begin(), seen.end(), [](bool b) { return b; });
}

KernelArchitecture KernelArchitecture::with_gamma(double gamma) const {
    return {root_, gamma, input_dim_};
}

namespace {

KernelNode rebuild(const KernelNode& node, std::span<const double> values, std::size_t& pos) {
    if (node.is_leaf()) {
        std::vector<double> widths(node.widths().size());
        for (auto& v : widths) {
            v = floor_weight(values[pos++]);
        }
        return KernelNode::leaf(node.indices(), std::move(widths));
    }
    std::vector<double> weights(node.weights().size());
    for (auto& w : weights) {
        w = floor_weight(values[pos++]);
    }
    std::vector<KernelNode> children;
    children.reserve(node.children().size());
    for (const auto& c : node.children()) {
        children.push_back(rebuild(c, values, pos));
    }
    return KernelNode::internal(std::move(children), std::move(weights));
}

}  // namespace

KernelArchitecture KernelArchitecture::with_weights(std::span<const double> values) const {
    if (values.size() != weight_count()) {
        throw InvalidArgument("expected " + std::to_string(weight_count()) + " weights, got " +
                              std::to_string(values.size()));
    }
    std::size_t pos = 0;
    return {rebuild(root_, values, pos), gamma_, input_dim_};
}

FlatWeights KernelArchitecture::flatten() const {
    FlatWeights out;
    out.values.reserve(weight_count());
    out.layout.reserve(weight_count());
    std::vector<std::size_t> path;
    flatten_into(root_, path, out);
    return out;
}

std::vector<double> KernelArchitecture::weights() const {
    return flatten().values;
}

double feature_distance_sq(const KernelArchitecture& arch, Sample x, Sample xp) {
    check_dims(arch, x, xp);
    return node_distance(arch.root(), x.data(), xp.data());
}

double eval(const KernelArchitecture& arch, Sample x, Sample xp) {
    return gaussian_of_distance(feature_distance_sq(arch, x, xp), arch.gamma());
}

double eval_product_form(const KernelArchitecture& arch, Sample x, Sample xp) {
    check_dims(arch, x, xp);
    const double inv_gamma_sq = 1.0 / (arch.gamma() * arch.gamma());
    return node_product_form(arch.root(), inv_gamma_sq, x.data(), xp.data());
}

Eigen::MatrixXd distance_matrix(const KernelArchitecture& arch, const SampleMatrix& X, const SampleMatrix& Xp) {
    check_dims(arch, X, Xp);
    Eigen::MatrixXd d(X.rows(), Xp.rows());
    const bool same = &X == &Xp;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double* xi = X.data() + i * X.cols();
        for (Eigen::Index j = same ? i : 0; j < Xp.rows(); ++j) {
            d(i, j) = node_distance(arch.root(), xi, Xp.data() + j * Xp.cols());
        }
    }
    if (same) {
        // node_distance is symmetric bit-for-bit in its two arguments
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            for (Eigen::Index j = 0; j < i; ++j) {
                d(i, j) = d(j, i);
            }
        }
    }
    return d;
}

Eigen::MatrixXd kernel_from_distances(const Eigen::MatrixXd& distances, double gamma) {
    return distances.unaryExpr([gamma](double dist) { return gaussian_of_distance(dist, gamma); });
}

GramMatrix gram(const KernelArchitecture& arch, const SampleMatrix& X, const SampleMatrix& Xp) {
    return GramMatrix(kernel_from_distances(distance_matrix(arch, X, Xp), arch.gamma()));
}

KernelArchitecture standard_gaussian(std::size_t dim, double gamma) {
    require_valid_parameter(gamma, "gamma");
    if (dim == 0) {
        throw InvalidArgument("input dimension must be at least 1");
    }
    std::vector<std::size_t> idx(dim);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return {KernelNode::leaf(std::move(idx), std::vector<double>(dim, 1.0 / gamma)), 1.0, dim};
}

std::vector<KernelArchitecture> build_candidate_architectures(std::size_t dim, const ArchitectureMenu& menu) {
    if (dim == 0) {
        throw InvalidArgument("input dimension must be at least 1");
    }
    std::vector<std::size_t> all(dim);
    std::iota(all.begin(), all.end(), std::size_t{0});

    std::vector<KernelArchitecture> out;
    if (menu.include_inhomogeneous) {
        out.emplace_back(KernelNode::leaf(all, std::vector<double>(dim, 1.0)), 1.0, dim);
    }
    Rng rng(derive_seed(menu.seed, {0x6d656e75}));
    for (const std::size_t l : menu.node_counts) {
        if (l == 0) {
            throw InvalidArgument("node count must be at least 1");
        }
        std::vector<std::vector<std::size_t>> sets(l);
        if (menu.assignment == IndexAssignment::all) {
            std::fill(sets.begin(), sets.end(), all);
        } else {
            const std::size_t k = menu.subset_size == 0 ? (dim + 1) / 2 : std::min(menu.subset_size, dim);
            // every coordinate is placed once round-robin so the cover stays universal
            std::vector<std::size_t> order = all;
            std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t c = 0; c < dim; ++c) {
                sets[c % l].push_back(order[c]);
            }
            for (auto& s : sets) {
                std::vector<std::size_t> pool;
                for (const std::size_t c : all) {
                    if (std::find(s.begin(), s.end(), c) == s.end()) {
                        pool.push_back(c);
                    }
                }
                std::shuffle(pool.begin(), pool.end(), rng);
                for (std::size_t p = 0; s.size() < k && p < pool.size(); ++p) {
                    s.push_back(pool[p]);
                }
                std::sort(s.begin(), s.end());
            }
        }
        std::vector<KernelNode> children;
        children.reserve(l);
        for (auto& s : sets) {
            const std::size_t sz = s.size();
            children.push_back(KernelNode::leaf(std::move(s), std::vector<double>(sz, 1.0)));
        }
        out.emplace_back(KernelNode::internal(std::move(children), std::vector<double>(l, 1.0)), 1.0, dim);
    }
    return out;
}

KernelArchitecture initialize_weights(const KernelArchitecture& arch, const SampleMatrix& X) {
    if (static_cast<std::size_t>(X.cols()) != arch.input_dim()) {
        throw DimensionError("sample dimension does not match kernel input dimension");
    }
    return {initialize_node(arch.root(), true, X), arch.gamma(), arch.input_dim()};
}

double median_feature_distance(const KernelArchitecture& arch, const SampleMatrix& X, std::size_t max_points) {
    if (static_cast<std::size_t>(X.cols()) != arch.input_dim()) {
        throw DimensionError("sample dimension does not match kernel input dimension");
    }
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(X.rows()), max_points);
    std::vector<double> dists;
    dists.reserve(n * (n > 0 ? n - 1 : 0) / 2);
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = a + 1; b < n; ++b) {
            const double d = node_distance(arch.root(), X.data() + a * X.cols(), X.data() + b * X.cols());
            if (d > 0.0) {
                dists.push_back(std::sqrt(d));
            }
        }
    }
    const double m = median_of(std::move(dists));
    return m > 0.0 ? m : 1.0;
}

}  // namespace hiergauss
