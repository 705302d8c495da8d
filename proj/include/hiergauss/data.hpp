#pragma once

#include "hiergauss/types.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace hiergauss {

enum class FileFormat { csv, libsvm };

/// `.csv` maps to csv, everything else to libsvm.
[[nodiscard]] FileFormat format_from_path(const std::filesystem::path& path);

/// Per-coordinate affine map onto [-1, 1], fitted on training data.
struct ScalingRecord {
    std::vector<double> feature_min;
    std::vector<double> feature_max;
    double label_min = 0.0;
    double label_max = 0.0;
};

/// Samples, labels and optional column names; `scaling` is set once the
/// data has been mapped onto [-1, 1].
struct Dataset {
    LabeledSet samples;
    std::vector<std::string> feature_names;
    std::optional<ScalingRecord> scaling;

    [[nodiscard]] std::size_t size() const noexcept { return samples.size(); }
    [[nodiscard]] std::size_t dim() const noexcept { return samples.dim(); }
};

/// Comma separated, optional header row, label in the last column.
[[nodiscard]] Dataset parse_csv(std::istream& in);

/// `label index:value ...` with 1-based indices; missing entries are 0. The
/// dimension is the largest index seen unless `declared_dim` is given.
[[nodiscard]] Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> declared_dim = {});

[[nodiscard]] Dataset load(const std::filesystem::path& path, FileFormat format,
                           std::optional<std::size_t> declared_dim = {});
[[nodiscard]] Dataset load(const std::filesystem::path& path);

void write_csv(std::ostream& out, const Dataset& data);
void save_csv(const std::filesystem::path& path, const Dataset& data);

/// Fits a ScalingRecord on `raw` and applies it. Constant columns map to 0.
[[nodiscard]] Dataset scale(const Dataset& raw);

/// Applies a stored record. Values outside the fitted range are not clipped.
[[nodiscard]] Dataset apply_scaling(const Dataset& raw, const ScalingRecord& record);

/// Inverse of the label part of the map.
[[nodiscard]] double unscale_label(double scaled, const ScalingRecord& record);

[[nodiscard]] nlohmann::json to_json(const ScalingRecord& record);
[[nodiscard]] ScalingRecord scaling_from_json(const nlohmann::json& j);

struct ResamplePlan {
    std::size_t train_size = 0;
    std::size_t test_size = 0;
    std::size_t repetitions = 1;
    std::uint64_t seed = 0;
};

struct ResampleIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Disjoint subsample for repetition `rep`, drawn from a stream keyed by (seed, rep).
[[nodiscard]] ResampleIndices resample_indices(std::size_t n, const ResamplePlan& plan, std::size_t rep);

[[nodiscard]] std::pair<Dataset, Dataset> resample(const Dataset& data, const ResamplePlan& plan, std::size_t rep);

}  // namespace hiergauss
