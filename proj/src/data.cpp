#include "hiergauss/data.hpp"

#include "hiergauss/error.hpp"
#include "hiergauss/random.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>
#include <string_view>

namespace hiergauss {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

std::optional<double> to_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) {
        return std::nullopt;
    }
    if (s.front() == '+') {
        s.remove_prefix(1);
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        return std::nullopt;
    }
    return v;
}

std::vector<std::string_view> split_commas(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

Dataset from_rows(const std::vector<std::vector<double>>& rows, const std::vector<double>& labels, std::size_t dim) {
    Dataset d;
    d.samples.x = SampleMatrix::Zero(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            d.samples.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
        }
    }
    d.samples.y = labels;
    return d;
}

void require_finite(const Dataset& d) {
    if (!d.samples.x.allFinite()) {
        throw InvalidArgument("dataset contains non-finite feature values");
    }
    for (const double y : d.samples.y) {
        if (!std::isfinite(y)) {
            throw InvalidArgument("dataset contains non-finite labels");
        }
    }
}

double scale_value(double v, double lo, double hi) {
    if (hi == lo) {
        return 0.0;
    }
    return 2.0 * (v - lo) / (hi - lo) - 1.0;
}

}  // namespace

FileFormat format_from_path(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext == ".csv" ? FileFormat::csv : FileFormat::libsvm;
}

Dataset parse_csv(std::istream& in) {
    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
    std::vector<std::string> header;
    std::size_t width = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto t = trim(line);
        if (t.empty()) {
            continue;
        }
        const auto fields = split_commas(t);
        std::vector<double> values;
        values.reserve(fields.size());
        bool numeric = true;
        for (const auto f : fields) {
            const auto v = to_double(f);
            if (!v) {
                numeric = false;
                break;
            }
            values.push_back(*v);
        }
        if (!numeric) {
            if (rows.empty() && header.empty()) {
                for (const auto f : fields) {
                    header.emplace_back(f);
                }
                width = fields.size();
                continue;
            }
            throw ParseError("malformed CSV row", line_no);
        }
        if (width == 0) {
            width = values.size();
        }
        if (values.size() != width) {
            throw ParseError("expected " + std::to_string(width) + " columns, found " + std::to_string(values.size()),
                             line_no);
        }
        if (values.size() < 2) {
            throw ParseError("row needs at least one feature and a label", line_no);
        }
        labels.push_back(values.back());
        values.pop_back();
        rows.push_back(std::move(values));
    }
    if (rows.empty()) {
        throw ParseError("CSV input contains no data rows", 0);
    }
    Dataset d = from_rows(rows, labels, width - 1);
    if (!header.empty()) {
        d.feature_names.assign(header.begin(), header.end() - 1);
    }
    require_finite(d);
    return d;
}

Dataset parse_libsvm(std::istream& in, std::optional<std::size_t> declared_dim) {
    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
    std::size_t dim = 0;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto t = trim(line);
        if (const auto hash = t.find('#'); hash != std::string_view::npos) {
            t = trim(t.substr(0, hash));
        }
        if (t.empty()) {
            continue;
        }
        std::istringstream tokens{std::string(t)};
        std::string tok;
        tokens >> tok;
        const auto label = to_double(tok);
        if (!label || tok.find(':') != std::string::npos) {
            throw ParseError("missing or malformed label \"" + tok + "\"", line_no);
        }
        std::vector<double> row;
        std::size_t last_index = 0;
        while (tokens >> tok) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos) {
                throw ParseError("expected index:value, found \"" + tok + "\"", line_no);
            }
            std::size_t index = 0;
            const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + colon, index);
            const auto value = to_double(std::string_view(tok).substr(colon + 1));
            if (ec != std::errc{} || ptr != tok.data() + colon || index == 0 || !value) {
                throw ParseError("malformed feature \"" + tok + "\"", line_no);
            }
            if (index <= last_index) {
                throw ParseError("feature indices must be strictly increasing", line_no);
            }
            if (declared_dim && index > *declared_dim) {
                throw ParseError("feature index " + std::to_string(index) + " exceeds declared dimension " +
                                     std::to_string(*declared_dim),
                                 line_no);
            }
            last_index = index;
            row.resize(index, 0.0);
            row[index - 1] = *value;
        }
        dim = std::max(dim, row.size());
        labels.push_back(*label);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw ParseError("LIBSVM input contains no data rows", 0);
    }
    if (declared_dim) {
        dim = *declared_dim;
    }
    if (dim == 0) {
        throw ParseError("LIBSVM input has no features", 0);
    }
    Dataset d = from_rows(rows, labels, dim);
    require_finite(d);
    return d;
}

Dataset load(const std::filesystem::path& path, FileFormat format, std::optional<std::size_t> declared_dim) {
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open data file " + path.string());
    }
    try {
        return format == FileFormat::csv ? parse_csv(in) : parse_libsvm(in, declared_dim);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what(), e.line());
    }
}

Dataset load(const std::filesystem::path& path) {
    return load(path, format_from_path(path));
}

void write_csv(std::ostream& out, const Dataset& data) {
    const auto precision = out.precision(std::numeric_limits<double>::max_digits10);
    if (!data.feature_names.empty()) {
        for (const auto& name : data.feature_names) {
            out << name << ',';
        }
        out << "label\n";
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t c = 0; c < data.dim(); ++c) {
            out << data.samples.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) << ',';
        }
        out << data.samples.y[i] << '\n';
    }
    out.precision(precision);
}

void save_csv(const std::filesystem::path& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write data file " + path.string());
    }
    write_csv(out, data);
}

Dataset scale(const Dataset& raw) {
    if (raw.size() == 0) {
        throw InvalidArgument("cannot scale an empty dataset");
    }
    require_finite(raw);
    ScalingRecord rec;
    const auto& x = raw.samples.x;
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        rec.feature_min.push_back(x.col(c).minCoeff());
        rec.feature_max.push_back(x.col(c).maxCoeff());
    }
    const auto [lo, hi] = std::minmax_element(raw.samples.y.begin(), raw.samples.y.end());
    rec.label_min = *lo;
    rec.label_max = *hi;
    return apply_scaling(raw, rec);
}

Dataset apply_scaling(const Dataset& raw, const ScalingRecord& rec) {
    if (rec.feature_min.size() != raw.dim() || rec.feature_max.size() != raw.dim()) {
        throw DimensionError("scaling record has " + std::to_string(rec.feature_min.size()) +
                             " columns, dataset has " + std::to_string(raw.dim()));
    }
    require_finite(raw);
    Dataset out = raw;
    for (Eigen::Index c = 0; c < out.samples.x.cols(); ++c) {
        const auto k = static_cast<std::size_t>(c);
        for (Eigen::Index i = 0; i < out.samples.x.rows(); ++i) {
            out.samples.x(i, c) = scale_value(raw.samples.x(i, c), rec.feature_min[k], rec.feature_max[k]);
        }
    }
    for (double& y : out.samples.y) {
        y = scale_value(y, rec.label_min, rec.label_max);
    }
    out.scaling = rec;
    return out;
}

double unscale_label(double scaled, const ScalingRecord& rec) {
    if (rec.label_max == rec.label_min) {
        return rec.label_min;
    }
    return rec.label_min + 0.5 * (scaled + 1.0) * (rec.label_max - rec.label_min);
}

nlohmann::json to_json(const ScalingRecord& r) {
    return {{"feature_min", r.feature_min},
            {"feature_max", r.feature_max},
            {"label_min", r.label_min},
            {"label_max", r.label_max}};
}

ScalingRecord scaling_from_json(const nlohmann::json& j) {
    try {
        ScalingRecord r;
        j.at("feature_min").get_to(r.feature_min);
        j.at("feature_max").get_to(r.feature_max);
        j.at("label_min").get_to(r.label_min);
        j.at("label_max").get_to(r.label_max);
        if (r.feature_min.size() != r.feature_max.size()) {
            throw ParseError("scaling record min/max lengths differ", 0);
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scaling record: ") + e.what(), 0);
    }
}

ResampleIndices resample_indices(std::size_t n, const ResamplePlan& plan, std::size_t rep) {
    if (plan.repetitions < 1 || rep >= plan.repetitions) {
        throw InvalidArgument("repetition " + std::to_string(rep) + " outside plan of " +
                              std::to_string(plan.repetitions));
    }
    if (plan.train_size == 0 || plan.test_size == 0 || plan.train_size + plan.test_size > n) {
        throw InvalidArgument("train size " + std::to_string(plan.train_size) + " + test size " +
                              std::to_string(plan.test_size) + " exceeds the " + std::to_string(n) + " samples");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(plan.seed, {0x72657073, rep}));
    std::shuffle(order.begin(), order.end(), rng);
    ResampleIndices out;
    out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(plan.train_size));
    out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(plan.train_size),
                    order.begin() + static_cast<std::ptrdiff_t>(plan.train_size + plan.test_size));
    return out;
}

std::pair<Dataset, Dataset> resample(const Dataset& data, const ResamplePlan& plan, std::size_t rep) {
    const auto idx = resample_indices(data.size(), plan, rep);
    Dataset train{data.samples.subset(idx.train), data.feature_names, data.scaling};
    Dataset test{data.samples.subset(idx.test), data.feature_names, data.scaling};
    return {std::move(train), std::move(test)};
}

}  // namespace hiergauss
