#include "hiergauss/error.hpp"
#include "hiergauss/solver.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

using namespace hiergauss;

namespace {

LabeledSet random_problem(std::mt19937_64& rng, std::size_t n, std::size_t d) {
    LabeledSet s;
    s.x = oracle::random_samples(rng, n, d);
    for (std::size_t i = 0; i < n; ++i) {
        s.y.push_back(oracle::uniform(rng, -1.0, 1.0));
    }
    return s;
}

double residual_inf(const Eigen::MatrixXd& k, const std::vector<double>& alpha, const std::vector<double>& y,
                    double lambda) {
    const auto n = k.rows();
    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double r = static_cast<double>(n) * lambda * alpha[static_cast<std::size_t>(i)] - y[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < n; ++j) {
            r += k(i, j) * alpha[static_cast<std::size_t>(j)];
        }
        worst = std::max(worst, std::fabs(r));
    }
    return worst;
}

}  // namespace

TEST_CASE("single training point") {
    const auto arch = standard_gaussian(2, 1.0);
    LabeledSet d;
    d.x.resize(1, 2);
    d.x << 0.3, -0.7;
    d.y = {0.8};
    const auto m = fit(arch, d, 0.25);
    REQUIRE(m.alphas.size() == 1);
    CHECK(m.alphas[0] == doctest::Approx(0.8 / 1.25).epsilon(1e-15));
}

TEST_CASE("zero labels give zero coefficients") {
    std::mt19937_64 rng(1);
    auto d = random_problem(rng, 12, 3);
    std::fill(d.y.begin(), d.y.end(), 0.0);
    const auto m = fit(standard_gaussian(3, 0.7), d, 1e-3);
    for (const double a : m.alphas) {
        CHECK(a == 0.0);
    }
    CHECK(predict(m, d.sample(0), false) == 0.0);
    CHECK(predict(m, d.sample(0), true) == 0.0);
}

TEST_CASE("coefficients match a dense elimination") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 10; ++t) {
        const auto arch = oracle::random_architecture(rng, 3, 1 + static_cast<std::size_t>(t % 3));
        const auto d = random_problem(rng, 30, 3);
        const double lambda = std::pow(10.0, -oracle::uniform(rng, 1.0, 5.0));
        const auto m = fit(arch, d, lambda);
        std::vector<std::vector<long double>> a(30, std::vector<long double>(30));
        for (std::size_t i = 0; i < 30; ++i) {
            for (std::size_t j = 0; j < 30; ++j) {
                a[i][j] = oracle::kernel(arch, oracle::widen(arch.weights()), d.sample(i), d.sample(j));
            }
            a[i][i] += 30.0L * lambda;
        }
        const auto ref = oracle::dense_solve(a, {d.y.begin(), d.y.end()});
        for (std::size_t i = 0; i < 30; ++i) {
            CHECK(std::fabs(m.alphas[i] - ref[i]) <= 1e-10);
        }
        CHECK(residual_inf(gram(arch, d.x, d.x).matrix(), m.alphas, d.y, lambda) <= 1e-8);
    }
}

TEST_CASE("fit errors") {
    std::mt19937_64 rng(3);
    const auto d = random_problem(rng, 5, 2);
    CHECK_THROWS_AS((void)fit(standard_gaussian(2, 1.0), d, 0.0), InvalidArgument);
    CHECK_THROWS_AS((void)fit(standard_gaussian(2, 1.0), d, -1.0), InvalidArgument);
    CHECK_THROWS_AS((void)fit(standard_gaussian(3, 1.0), d, 0.1), DimensionError);
    LabeledSet empty;
    empty.x.resize(0, 2);
    CHECK_THROWS_AS((void)fit(standard_gaussian(2, 1.0), empty, 0.1), InvalidArgument);
}

TEST_CASE("prediction and clipping") {
    const auto arch = standard_gaussian(1, 1.0);
    SampleMatrix anchors(1, 1);
    anchors << 0.2;
    const TrainedModel big{{3.7}, anchors, 0.1, arch, 1.0};
    const std::vector<double> at{0.2};
    CHECK(predict(big, at, false) == 3.7);
    CHECK(predict(big, at, true) == 1.0);
    const TrainedModel neg{{-3.7}, anchors, 0.1, arch, 1.0};
    CHECK(predict(neg, at, true) == -1.0);
    const TrainedModel zero{{0.0}, anchors, 0.1, arch, 1.0};
    CHECK(predict(zero, at, true) == 0.0);
    const std::vector<double> wrong{0.1, 0.2};
    CHECK_THROWS_AS((void)predict(big, wrong, true), DimensionError);

    std::mt19937_64 rng(4);
    const auto karch = oracle::random_architecture(rng, 3, 2);
    const auto d = random_problem(rng, 20, 3);
    const auto m = fit(karch, d, 1e-3);
    for (int t = 0; t < 20; ++t) {
        const auto x = oracle::random_point(rng, 3);
        double f = 0.0;
        double magnitude = 0.0;
        for (std::size_t i = 0; i < 20; ++i) {
            const double term = m.alphas[i] * eval(karch, d.sample(i), x);
            f += term;
            magnitude += std::fabs(term);
        }
        // summation error is relative to the terms, not to the (cancelling) sum
        CHECK(std::fabs(predict(m, x, false) - f) <= 1e-14 * magnitude);
    }
}

TEST_CASE("regularized objective is minimal at the solution") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 10; ++t) {
        const auto arch = oracle::random_architecture(rng, 2, 1 + static_cast<std::size_t>(t % 2));
        const auto d = random_problem(rng, 25, 2);
        const double lambda = 1e-3;
        const auto m = fit(arch, d, lambda);
        const Eigen::MatrixXd k = gram(arch, d.x, d.x).matrix();
        const Eigen::Map<const Eigen::VectorXd> y(d.y.data(), 25);
        const auto objective = [&](const Eigen::VectorXd& a) {
            return lambda * a.dot(k * a) + (y - k * a).squaredNorm() / 25.0;
        };
        const Eigen::VectorXd alpha = Eigen::Map<const Eigen::VectorXd>(m.alphas.data(), 25);
        const double best = objective(alpha);
        for (int p = 0; p < 20; ++p) {
            Eigen::VectorXd delta(25);
            for (auto& v : delta) {
                v = oracle::uniform(rng, -1.0, 1.0);
            }
            delta *= 1e-3 / delta.norm();
            CHECK(objective(alpha + delta) >= best);
        }
    }
}

TEST_CASE("regularization monotonicity") {
    std::mt19937_64 rng(6);
    const auto arch = standard_gaussian(2, 0.5);
    const auto d = random_problem(rng, 30, 2);
    const Eigen::MatrixXd k = gram(arch, d.x, d.x).matrix();
    const Eigen::Map<const Eigen::VectorXd> y(d.y.data(), 30);
    double prev_fit = -1.0;
    double prev_norm = std::numeric_limits<double>::infinity();
    for (const double lambda : geometric_sequence(1e-6, 1.0, 10)) {
        const auto m = fit(arch, d, lambda);
        const Eigen::Map<const Eigen::VectorXd> a(m.alphas.data(), 30);
        const double train = (y - k * a).squaredNorm() / 30.0;
        const double norm = a.dot(k * a);
        CHECK(train >= prev_fit - 1e-12);
        CHECK(norm <= prev_norm + 1e-12);
        prev_fit = train;
        prev_norm = norm;
    }
}

TEST_CASE("interpolation limit") {
    LabeledSet d;
    d.x.resize(10, 1);
    for (int i = 0; i < 10; ++i) {
        d.x(i, 0) = -1.0 + 0.2 * i;
        d.y.push_back(std::sin(3.0 * i));
    }
    const auto arch = standard_gaussian(1, 0.05);
    const auto m = fit(arch, d, 1e-10);
    for (std::size_t i = 0; i < 10; ++i) {
        CHECK(std::fabs(predict(m, d.sample(i), false) - d.y[i]) <= 1e-6);
    }
}

TEST_CASE("clipping never increases the squared error") {
    std::mt19937_64 rng(7);
    for (int t = 0; t < 10; ++t) {
        const auto d = random_problem(rng, 30, 2);
        const auto m = fit(standard_gaussian(2, 0.2), d, 1e-6);
        const auto test = random_problem(rng, 40, 2);
        double unclipped = 0.0;
        for (std::size_t i = 0; i < test.size(); ++i) {
            const double f = predict(m, test.sample(i), false);
            unclipped += (test.y[i] - f) * (test.y[i] - f);
        }
        CHECK(clipped_squared_error(m, test) <= unclipped / 40.0);
    }
}

TEST_CASE("folds") {
    const auto folds = make_folds(23, 5, 9);
    REQUIRE(folds.size() == 5);
    std::set<std::size_t> seen;
    std::size_t lo = 100;
    std::size_t hi = 0;
    for (const auto& f : folds) {
        lo = std::min(lo, f.size());
        hi = std::max(hi, f.size());
        seen.insert(f.begin(), f.end());
    }
    CHECK(seen.size() == 23);
    CHECK(hi - lo <= 1);
    CHECK(make_folds(23, 5, 9) == folds);
    CHECK(make_folds(23, 5, 10) != folds);
    CHECK_THROWS_AS((void)make_folds(4, 5, 1), InvalidArgument);
    CHECK_THROWS_AS((void)make_folds(10, 1, 1), InvalidArgument);
}

TEST_CASE("geometric grids") {
    const auto g = geometric_sequence(1e-6, 1.0, 10);
    REQUIRE(g.size() == 10);
    CHECK(g.front() == 1e-6);
    CHECK(g.back() == 1.0);
    for (std::size_t i = 1; i < g.size(); ++i) {
        CHECK(g[i] / g[i - 1] == doctest::Approx(std::pow(1e6, 1.0 / 9.0)));
    }
    std::mt19937_64 rng(8);
    const auto X = oracle::random_samples(rng, 40, 3);
    const auto grid = make_grid(GridSettings{}, standard_gaussian(3, 1.0), X);
    CHECK(grid.lambdas.size() == 10);
    CHECK(grid.gammas.size() == 10);
    CHECK(grid.folds == 5);
    CHECK(grid.gammas.back() / grid.gammas.front() == doctest::Approx(400.0));
    CVGrid bad{{1.0, 0.5}, {1.0}, 5};
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("grid search") {
    std::mt19937_64 rng(9);
    const auto d = random_problem(rng, 30, 2);
    const auto arch = standard_gaussian(2, 1.0);

    const auto single = grid_search(arch, d, CVGrid{{0.01}, {0.7}, 5}, 1);
    CHECK(single.lambda == 0.01);
    CHECK(single.gamma == 0.7);
    CHECK(single.cv_risk == doctest::Approx(cv_error(arch.with_gamma(0.7), d, 0.01, 5, 1)).epsilon(1e-12));

    // every cell scores zero when all labels are zero: ties resolve to the largest pair
    auto zero = d;
    std::fill(zero.y.begin(), zero.y.end(), 0.0);
    const auto tied = grid_search(arch, zero, CVGrid{{1e-3, 1e-2, 1e-2}, {0.5, 1.0, 1.0}, 5}, 2);
    CHECK(tied.cv_risk == 0.0);
    CHECK(tied.lambda == 1e-2);
    CHECK(tied.gamma == 1.0);

    const auto full = grid_search(arch, d, make_grid(GridSettings{}, arch, d.x), 3);
    CHECK(full.cell_risks.rows() == 10);
    CHECK(full.cell_risks.minCoeff() == full.cv_risk);
    CHECK_THROWS_AS((void)grid_search(arch, d.subset(std::vector<std::size_t>{0, 1, 2}), CVGrid{{1.0}, {1.0}, 5}, 1),
                    InvalidArgument);
}

TEST_CASE("grid search recovers a known width") {
    const std::vector<double> gammas = geometric_sequence(0.1, 10.0, 10);
    const double step = std::log(gammas[1] / gammas[0]);
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto task = oracle::make_isotropic_task(2, 1.0, 100 + seed, 6);
        const auto d = oracle::sample_task(task, 200, 2, 200 + seed, 0.02);
        const auto gs = grid_search(standard_gaussian(2, 1.0), d, CVGrid{geometric_sequence(1e-7, 1e-2, 10), gammas, 5},
                                    seed);
        if (std::fabs(std::log(gs.gamma)) <= step * 1.0001) {
            ++hits;
        }
    }
    CHECK(hits >= 8);
}

TEST_CASE("fold-averaged predictor") {
    std::mt19937_64 rng(10);
    const auto d = random_problem(rng, 40, 2);
    const auto arch = standard_gaussian(2, 1.0);
    const auto ens = cv_average_predictor(arch, d, 1e-3, 0.5, 4);
    REQUIRE(ens.members.size() == 5);
    for (const auto& m : ens.members) {
        CHECK(m.arch.gamma() == 0.5);
        CHECK(m.alphas.size() == 32);
    }
    for (int t = 0; t < 1000; ++t) {
        const auto x = oracle::random_point(rng, 2);
        double mean = 0.0;
        for (const auto& m : ens.members) {
            mean += std::clamp(predict(m, x, false), -1.0, 1.0);
        }
        mean = std::clamp(mean / 5.0, -1.0, 1.0);
        const double p = ens.predict(x);
        REQUIRE(p == doctest::Approx(mean).epsilon(1e-14).scale(1e-14));
        REQUIRE(p >= -1.0);
        REQUIRE(p <= 1.0);
    }

    // identical samples: every fold model equals the full-data model
    LabeledSet same;
    same.x = SampleMatrix::Constant(10, 2, 0.25);
    same.y.assign(10, 0.6);
    const auto dup = cv_average_predictor(arch, same, 0.1, 1.0, 3);
    const auto whole = fit(arch, same, 0.1);
    for (int t = 0; t < 20; ++t) {
        const auto x = oracle::random_point(rng, 2);
        CHECK(dup.predict(x) == doctest::Approx(predict(whole, x, true)).epsilon(1e-12));
    }
}

TEST_CASE("model JSON round trip") {
    std::mt19937_64 rng(11);
    const auto arch = oracle::random_architecture(rng, 3, 2);
    const auto d = random_problem(rng, 15, 3);
    const auto m = fit(arch, d, 1e-2);
    const auto text = to_json(m).dump();
    const auto back = model_from_json(nlohmann::json::parse(text));
    CHECK(back.lambda == m.lambda);
    CHECK(back.clip_bound == 1.0);
    for (int t = 0; t < 50; ++t) {
        const auto x = oracle::random_point(rng, 3);
        CHECK(predict(back, x, false) == predict(m, x, false));
    }
    auto broken = to_json(m);
    broken.erase("alphas");
    CHECK_THROWS_AS((void)model_from_json(broken), ParseError);
}
