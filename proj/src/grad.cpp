#include "hiergauss/grad.hpp"

#include "hiergauss/error.hpp"

#include <cmath>
#include <string>

namespace hiergauss {

namespace {

// Returns the node's pre-exponent distance s (gamma = 1) and writes ds/du for
// every parameter u of the subtree into `out`, in FlatWeights order. The
// distance is accumulated exactly like node_distance() in kernel.cpp.
double node_gradient(const KernelNode& node, const double* x, const double* xp, double* out) {
    if (node.is_leaf()) {
        const auto& idx = node.indices();
        const auto& v = node.widths();
        double acc = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const double diff = x[idx[j]] - xp[idx[j]];
            const double diff_sq = diff * diff;
            acc += v[j] * v[j] * diff_sq;
            out[j] = 2.0 * v[j] * diff_sq;
        }
        return acc;
    }
    const auto& children = node.children();
    const auto& w = node.weights();
    const std::size_t l = children.size();
    double* child_out = out + l;
    double acc = 0.0;
    for (std::size_t i = 0; i < l; ++i) {
        const double child_dist = node_gradient(children[i], x, xp, child_out);
        const double child = std::exp(-child_dist);
        acc += w[i] * w[i] * (1.0 - child);
        out[i] = 4.0 * w[i] * (1.0 - child);
        // d(1 - k_i)/du = k_i * ds_i/du
        const double scale = 2.0 * w[i] * w[i] * child;
        const std::size_t count = children[i].weight_count();
        for (std::size_t p = 0; p < count; ++p) {
            child_out[p] *= scale;
        }
        child_out += count;
    }
    return 2.0 * acc;
}

void check_risk_inputs(const KernelArchitecture& arch, std::span<const double> alphas, const SampleMatrix& anchors,
                       const LabeledSet& validation) {
    if (alphas.size() != static_cast<std::size_t>(anchors.rows())) {
        throw DimensionError("got " + std::to_string(alphas.size()) + " coefficients for " +
                             std::to_string(anchors.rows()) + " anchors");
    }
    if (validation.size() == 0) {
        throw InvalidArgument("validation set is empty");
    }
    if (static_cast<std::size_t>(validation.x.rows()) != validation.size()) {
        throw DimensionError("validation samples and labels differ in count");
    }
    if (static_cast<std::size_t>(anchors.cols()) != arch.input_dim() || validation.dim() != arch.input_dim()) {
        throw DimensionError("sample dimension does not match kernel input dimension");
    }
}

}  // namespace

double kernel_gradient_into(const KernelArchitecture& arch, Sample x, Sample xp, std::span<double> partials) {
    if (x.size() != arch.input_dim() || xp.size() != arch.input_dim()) {
        throw DimensionError("sample dimension does not match kernel input dimension " +
                             std::to_string(arch.input_dim()));
    }
    if (partials.size() != arch.weight_count()) {
        throw DimensionError("gradient buffer has the wrong size");
    }
    const double dist = node_gradient(arch.root(), x.data(), xp.data(), partials.data());
    const double gamma = arch.gamma();
    const double value = gaussian_of_distance(dist, gamma);
    const double scale = -value / (gamma * gamma);
    for (double& p : partials) {
        p *= scale;
    }
    return value;
}

KernelGradient kernel_gradient(const KernelArchitecture& arch, Sample x, Sample xp) {
    KernelGradient g;
    g.partials.resize(arch.weight_count());
    g.value = kernel_gradient_into(arch, x, xp, g.partials);
    return g;
}

std::vector<double> decision_values(const KernelArchitecture& arch, std::span<const double> alphas,
                                    const SampleMatrix& anchors, const SampleMatrix& points) {
    if (alphas.size() != static_cast<std::size_t>(anchors.rows())) {
        throw DimensionError("coefficient count does not match anchor count");
    }
    const Eigen::MatrixXd k = gram(arch, points, anchors).matrix();
    const Eigen::Map<const Eigen::VectorXd> a(alphas.data(), static_cast<Eigen::Index>(alphas.size()));
    const Eigen::VectorXd f = k * a;
    return {f.data(), f.data() + f.size()};
}

double validation_risk(const KernelArchitecture& arch, std::span<const double> alphas, const SampleMatrix& anchors,
                       const LabeledSet& validation, const LossFunction& loss) {
    check_risk_inputs(arch, alphas, anchors, validation);
    const auto f = decision_values(arch, alphas, anchors, validation.x);
    double acc = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
        acc += loss.value(validation.y[j], f[j]);
    }
    return acc / static_cast<double>(validation.size());
}

RiskGradient risk_and_gradient(const KernelArchitecture& arch, std::span<const double> alphas,
                               const SampleMatrix& anchors, const LabeledSet& validation, const LossFunction& loss) {
    check_risk_inputs(arch, alphas, anchors, validation);
    const std::size_t p = arch.weight_count();
    RiskGradient out;
    out.partials.assign(p, 0.0);
    std::vector<double> point_grad(p);
    std::vector<double> pair_grad(p);
    for (std::size_t j = 0; j < validation.size(); ++j) {
        const Sample xj = validation.sample(j);
        std::fill(point_grad.begin(), point_grad.end(), 0.0);
        double f = 0.0;
        for (std::size_t i = 0; i < alphas.size(); ++i) {
            if (alphas[i] == 0.0) {
                continue;
            }
            const double k = kernel_gradient_into(arch, row(anchors, static_cast<Eigen::Index>(i)), xj, pair_grad);
            f += alphas[i] * k;
            for (std::size_t q = 0; q < p; ++q) {
                point_grad[q] += alphas[i] * pair_grad[q];
            }
        }
        out.risk += loss.value(validation.y[j], f);
        const double dl = loss.derivative(validation.y[j], f);
        for (std::size_t q = 0; q < p; ++q) {
            out.partials[q] += dl * point_grad[q];
        }
    }
    const double inv_n = 1.0 / static_cast<double>(validation.size());
    out.risk *= inv_n;
    for (double& v : out.partials) {
        v *= inv_n;
    }
    return out;
}

}  // namespace hiergauss
