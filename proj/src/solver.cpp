#include "hiergauss/solver.hpp"

#include "hiergauss/error.hpp"
#include "hiergauss/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace hiergauss {

namespace {

void check_training_set(const KernelArchitecture& arch, const LabeledSet& data) {
    if (data.size() == 0) {
        throw InvalidArgument("training set is empty");
    }
    if (static_cast<std::size_t>(data.x.rows()) != data.size()) {
        throw DimensionError("training samples and labels differ in count");
    }
    if (data.dim() != arch.input_dim()) {
        throw DimensionError("training data has dimension " + std::to_string(data.dim()) + ", kernel expects " +
                             std::to_string(arch.input_dim()));
    }
}

void check_lambda(double lambda) {
    if (!std::isfinite(lambda) || !(lambda > 0.0)) {
        throw InvalidArgument("lambda must be finite and strictly positive");
    }
}

std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& held_out) {
    std::vector<bool> out(n, false);
    for (const std::size_t i : held_out) {
        out[i] = true;
    }
    std::vector<std::size_t> rest;
    rest.reserve(n - held_out.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (!out[i]) {
            rest.push_back(i);
        }
    }
    return rest;
}

double fold_squared_error(const Eigen::MatrixXd& k_val, std::span<const double> alphas, std::span<const double> y,
                          double clip_bound) {
    const Eigen::Map<const Eigen::VectorXd> a(alphas.data(), static_cast<Eigen::Index>(alphas.size()));
    const Eigen::VectorXd f = k_val * a;
    double acc = 0.0;
    for (Eigen::Index j = 0; j < f.size(); ++j) {
        const double diff = y[static_cast<std::size_t>(j)] - clip_value(f(j), clip_bound);
        acc += diff * diff;
    }
    return acc;
}

// Solves (K + n lambda I) alpha = y, factorizing in `work` so repeated solves
// of the same size reuse one allocation.
std::vector<double> solve_with_buffer(const Eigen::MatrixXd& k, std::span<const double> y, double lambda,
                                      Eigen::MatrixXd& work) {
    check_lambda(lambda);
    const Eigen::Index n = k.rows();
    if (k.cols() != n || static_cast<std::size_t>(n) != y.size()) {
        throw DimensionError("Gram matrix and label vector sizes differ");
    }
    const double shift = static_cast<double>(n) * lambda;
    work = k;
    work.diagonal().array() += shift;
    const Eigen::Map<const Eigen::VectorXd> rhs(y.data(), n);
    const auto residual = [&](const Eigen::VectorXd& a) -> Eigen::VectorXd {
        return rhs - k * a - shift * a;
    };

    Eigen::VectorXd alpha;
    Eigen::LLT<Eigen::Ref<Eigen::MatrixXd>> llt(work);
    if (llt.info() == Eigen::Success) {
        alpha = llt.solve(rhs);
        alpha += llt.solve(residual(alpha));
    } else {
        work = k;
        work.diagonal().array() += shift;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(work);
        if (ldlt.info() != Eigen::Success) {
            throw SolverError("regularized Gram matrix could not be factorized");
        }
        alpha = ldlt.solve(rhs);
        alpha += ldlt.solve(residual(alpha));
    }
    if (!alpha.allFinite()) {
        throw SolverError("kernel system produced non-finite coefficients");
    }
    return {alpha.data(), alpha.data() + alpha.size()};
}

}  // namespace

std::vector<double> solve_coefficients(const Eigen::MatrixXd& k, std::span<const double> y, double lambda) {
    Eigen::MatrixXd work;
    return solve_with_buffer(k, y, lambda, work);
}

TrainedModel fit(const KernelArchitecture& arch, const LabeledSet& data, double lambda) {
    check_lambda(lambda);
    check_training_set(arch, data);
    const auto k = gram(arch, data.x, data.x);
    return TrainedModel{solve_coefficients(k.matrix(), data.y, lambda), data.x, lambda, arch, 1.0};
}

double predict(const TrainedModel& model, Sample x, bool clip) {
    if (x.size() != model.arch.input_dim()) {
        throw DimensionError("sample dimension does not match model");
    }
    double f = 0.0;
    for (std::size_t i = 0; i < model.alphas.size(); ++i) {
        f += model.alphas[i] * eval(model.arch, row(model.anchors, static_cast<Eigen::Index>(i)), x);
    }
    return clip ? clip_value(f, model.clip_bound) : f;
}

std::vector<double> predict(const TrainedModel& model, const SampleMatrix& X, bool clip) {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        out.push_back(predict(model, row(X, i), clip));
    }
    return out;
}

double clipped_squared_error(const TrainedModel& model, const LabeledSet& data) {
    const auto p = predict(model, data.x, true);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += (data.y[i] - p[i]) * (data.y[i] - p[i]);
    }
    return acc / static_cast<double>(data.size());
}

void CVGrid::validate() const {
    const auto check = [](const std::vector<double>& v, const char* name) {
        if (v.empty()) {
            throw InvalidArgument(std::string(name) + " grid is empty");
        }
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i]) || !(v[i] > 0.0)) {
                throw InvalidArgument(std::string(name) + " grid values must be positive");
            }
            if (i > 0 && v[i] < v[i - 1]) {
                throw InvalidArgument(std::string(name) + " grid must be sorted");
            }
        }
    };
    check(lambdas, "lambda");
    check(gammas, "gamma");
    if (folds < 2) {
        throw InvalidArgument("cross validation needs at least 2 folds");
    }
}

std::vector<double> geometric_sequence(double lo, double hi, std::size_t count) {
    if (count == 0 || !(lo > 0.0) || !(hi >= lo)) {
        throw InvalidArgument("geometric sequence needs 0 < lo <= hi and count >= 1");
    }
    if (count == 1) {
        return {lo};
    }
    std::vector<double> out(count);
    const double ratio = std::log(hi / lo) / static_cast<double>(count - 1);
    for (std::size_t i = 0; i < count; ++i) {
        out[i] = lo * std::exp(ratio * static_cast<double>(i));
    }
    out.back() = hi;
    return out;
}

CVGrid make_grid(const GridSettings& s, const KernelArchitecture& arch, const SampleMatrix& X) {
    const double delta = median_feature_distance(arch, X);
    CVGrid g{geometric_sequence(s.lambda_min, s.lambda_max, s.lambda_count),
             geometric_sequence(s.gamma_low * delta, s.gamma_high * delta, s.gamma_count), s.folds};
    g.validate();
    return g;
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) {
        throw InvalidArgument("cross validation needs at least 2 folds");
    }
    if (n < k) {
        throw InvalidArgument("dataset of size " + std::to_string(n) + " is smaller than the fold count " +
                              std::to_string(k));
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0x666f6c64}));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> folds(k);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                        order.begin() + static_cast<std::ptrdiff_t>(pos + size));
        pos += size;
    }
    return folds;
}

GridSearchResult grid_search(const KernelArchitecture& arch, const LabeledSet& data, const CVGrid& grid,
                             std::uint64_t seed) {
    grid.validate();
    check_training_set(arch, data);
    const auto folds = make_folds(data.size(), grid.folds, seed);
    const auto n_l = static_cast<Eigen::Index>(grid.lambdas.size());
    const auto n_g = static_cast<Eigen::Index>(grid.gammas.size());
    Eigen::MatrixXd sse = Eigen::MatrixXd::Zero(n_l, n_g);
    Eigen::MatrixXd work;

    for (const auto& held_out : folds) {
        const auto train_idx = complement(data.size(), held_out);
        const LabeledSet train = data.subset(train_idx);
        const LabeledSet val = data.subset(held_out);
        const Eigen::MatrixXd d_train = distance_matrix(arch, train.x, train.x);
        const Eigen::MatrixXd d_val = distance_matrix(arch, val.x, train.x);
        for (Eigen::Index c = 0; c < n_g; ++c) {
            const double gamma = grid.gammas[static_cast<std::size_t>(c)];
            const Eigen::MatrixXd k_train = kernel_from_distances(d_train, gamma);
            const Eigen::MatrixXd k_val = kernel_from_distances(d_val, gamma);
            for (Eigen::Index r = 0; r < n_l; ++r) {
                const auto alphas = solve_with_buffer(k_train, train.y, grid.lambdas[static_cast<std::size_t>(r)], work);
                sse(r, c) += fold_squared_error(k_val, alphas, val.y, 1.0);
            }
        }
    }

    GridSearchResult out;
    out.cell_risks = sse / static_cast<double>(data.size());
    bool have = false;
    for (Eigen::Index r = 0; r < n_l; ++r) {
        for (Eigen::Index c = 0; c < n_g; ++c) {
            const double risk = out.cell_risks(r, c);
            const double lambda = grid.lambdas[static_cast<std::size_t>(r)];
            const double gamma = grid.gammas[static_cast<std::size_t>(c)];
            const bool better = !have || risk < out.cv_risk ||
                                (risk == out.cv_risk &&
                                 (lambda > out.lambda || (lambda == out.lambda && gamma > out.gamma)));
            if (better) {
                out.lambda = lambda;
                out.gamma = gamma;
                out.cv_risk = risk;
                have = true;
            }
        }
    }
    return out;
}

double cv_error(const KernelArchitecture& arch, const LabeledSet& data, double lambda, std::size_t folds,
                std::uint64_t seed) {
    check_lambda(lambda);
    check_training_set(arch, data);
    double sse = 0.0;
    for (const auto& held_out : make_folds(data.size(), folds, seed)) {
        const auto train_idx = complement(data.size(), held_out);
        const LabeledSet train = data.subset(train_idx);
        const LabeledSet val = data.subset(held_out);
        const Eigen::MatrixXd k_train = kernel_from_distances(distance_matrix(arch, train.x, train.x), arch.gamma());
        const Eigen::MatrixXd k_val = kernel_from_distances(distance_matrix(arch, val.x, train.x), arch.gamma());
        sse += fold_squared_error(k_val, solve_coefficients(k_train, train.y, lambda), val.y, 1.0);
    }
    return sse / static_cast<double>(data.size());
}

double EnsembleModel::predict(Sample x) const {
    if (members.empty()) {
        throw InvalidArgument("ensemble has no members");
    }
    double acc = 0.0;
    for (const auto& m : members) {
        acc += hiergauss::predict(m, x, true);
    }
    return clip_value(acc / static_cast<double>(members.size()), clip_bound);
}

std::vector<double> EnsembleModel::predict(const SampleMatrix& X) const {
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        out.push_back(predict(row(X, i)));
    }
    return out;
}

EnsembleModel cv_average_predictor(const KernelArchitecture& arch, const LabeledSet& data, double lambda, double gamma,
                                   std::uint64_t seed, std::size_t folds) {
    check_training_set(arch, data);
    const KernelArchitecture with_gamma = arch.with_gamma(gamma);
    EnsembleModel ensemble;
    for (const auto& held_out : make_folds(data.size(), folds, seed)) {
        ensemble.members.push_back(fit(with_gamma, data.subset(complement(data.size(), held_out)), lambda));
    }
    return ensemble;
}

double clipped_squared_error(const EnsembleModel& model, const LabeledSet& data) {
    const auto p = model.predict(data.x);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        acc += (data.y[i] - p[i]) * (data.y[i] - p[i]);
    }
    return acc / static_cast<double>(data.size());
}

nlohmann::json to_json(const TrainedModel& model) {
    nlohmann::json anchors = nlohmann::json::array();
    for (Eigen::Index i = 0; i < model.anchors.rows(); ++i) {
        const Sample r = row(model.anchors, i);
        anchors.push_back(std::vector<double>(r.begin(), r.end()));
    }
    return {{"alphas", model.alphas},
            {"anchors", anchors},
            {"lambda", model.lambda},
            {"clip_bound", model.clip_bound},
            {"architecture", to_json(model.arch)}};
}

TrainedModel model_from_json(const nlohmann::json& j) {
    for (const char* key : {"alphas", "anchors", "lambda", "clip_bound", "architecture"}) {
        if (!j.contains(key)) {
            throw ParseError(std::string("model is missing \"") + key + "\"", 0);
        }
    }
    auto arch = architecture_from_json(j.at("architecture"));
    const auto alphas = j.at("alphas").get<std::vector<double>>();
    const auto rows = j.at("anchors").get<std::vector<std::vector<double>>>();
    if (rows.size() != alphas.size()) {
        throw ParseError("model has " + std::to_string(alphas.size()) + " alphas but " + std::to_string(rows.size()) +
                             " anchors",
                         0);
    }
    SampleMatrix anchors(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(arch.input_dim()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != arch.input_dim()) {
            throw ParseError("anchor " + std::to_string(i) + " has the wrong dimension", 0);
        }
        for (std::size_t c = 0; c < rows[i].size(); ++c) {
            anchors(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
        }
    }
    const double lambda = j.at("lambda").get<double>();
    const double clip_bound = j.at("clip_bound").get<double>();
    check_lambda(lambda);
    if (!(clip_bound > 0.0)) {
        throw ParseError("clip_bound must be positive", 0);
    }
    return TrainedModel{alphas, std::move(anchors), lambda, std::move(arch), clip_bound};
}

}  // namespace hiergauss
