#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <span>
#include <vector>

namespace hiergauss {

/// One input vector.
using Sample = std::span<const double>;

/// Samples stored as rows.
using SampleMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[nodiscard]] inline Sample row(const SampleMatrix& X, Eigen::Index i) {
    return {X.data() + i * X.cols(), static_cast<std::size_t>(X.cols())};
}

/// Samples with one scalar label each.
struct LabeledSet {
    SampleMatrix x;
    std::vector<double> y;

    [[nodiscard]] std::size_t size() const noexcept { return y.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(x.cols()); }
    [[nodiscard]] Sample sample(std::size_t i) const { return row(x, static_cast<Eigen::Index>(i)); }

    /// Rows selected by `indices`, in that order.
    [[nodiscard]] LabeledSet subset(std::span<const std::size_t> indices) const {
        LabeledSet out;
        out.x.resize(static_cast<Eigen::Index>(indices.size()), x.cols());
        out.y.reserve(indices.size());
        for (std::size_t r = 0; r < indices.size(); ++r) {
            out.x.row(static_cast<Eigen::Index>(r)) = x.row(static_cast<Eigen::Index>(indices[r]));
            out.y.push_back(y[indices[r]]);
        }
        return out;
    }
};

}  // namespace hiergauss
