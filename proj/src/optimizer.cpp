#include "hiergauss/optimizer.hpp"

#include "hiergauss/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <string>

namespace hiergauss {

namespace {

// stream tags for derive_seed
constexpr std::uint64_t kSplitStream = 1;
constexpr std::uint64_t kGridStream = 2;
constexpr std::uint64_t kReshuffleStream = 3;
constexpr std::uint64_t kAnnealStream = 4;
constexpr std::uint64_t kCandidateStream = 5;
constexpr std::uint64_t kSelectionStream = 6;

double clipped_test_error(const KernelArchitecture& arch, std::span<const double> alphas, const SampleMatrix& anchors,
                          const LabeledSet& test) {
    const auto f = decision_values(arch, alphas, anchors, test.x);
    double acc = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) {
        const double diff = test.y[j] - clip_value(f[j], 1.0);
        acc += diff * diff;
    }
    return acc / static_cast<double>(test.size());
}

}  // namespace

void OptimizerConfig::validate() const {
    if (M_outer < 1 || L_inner < 1) {
        throw InvalidArgument("M_outer and L_inner must be at least 1");
    }
    double sum = 0.0;
    for (const double f : split_fracs) {
        if (!(f > 0.0) || !std::isfinite(f)) {
            throw InvalidArgument("split fractions must be positive");
        }
        sum += f;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw InvalidArgument("split fractions must sum to 1");
    }
    if (!(sa_initial_accept >= 0.0) || !(sa_temp_coeff >= 0.0) || !(sa_proposal_sigma > 0.0)) {
        throw InvalidArgument("annealing constants must be nonnegative (proposal sigma positive)");
    }
    if (!(armijo_c > 0.0 && armijo_c < 1.0) || !(backtrack_factor > 0.0 && backtrack_factor < 1.0)) {
        throw InvalidArgument("armijo_c and backtrack_factor must lie in (0, 1)");
    }
    if (!(eta0 > 0.0) || max_backtracks < 1 || !(grad_tol >= 0.0)) {
        throw InvalidArgument("eta0 must be positive, max_backtracks >= 1, grad_tol >= 0");
    }
}

nlohmann::json to_json(const OptimizerConfig& c) {
    return {{"M_outer", c.M_outer},
            {"L_inner", c.L_inner},
            {"N1", c.N1},
            {"N2", c.N2},
            {"N3", c.N3},
            {"split_fracs", c.split_fracs},
            {"sa_initial_accept", c.sa_initial_accept},
            {"sa_temp_coeff", c.sa_temp_coeff},
            {"sa_proposal_sigma", c.sa_proposal_sigma},
            {"armijo_c", c.armijo_c},
            {"backtrack_factor", c.backtrack_factor},
            {"eta0", c.eta0},
            {"max_backtracks", c.max_backtracks},
            {"grad_tol", c.grad_tol},
            {"seed", c.seed},
            {"initialize_weights", c.initialize_weights},
            {"grid",
             {{"lambda_min", c.grid.lambda_min},
              {"lambda_max", c.grid.lambda_max},
              {"lambda_count", c.grid.lambda_count},
              {"gamma_low", c.grid.gamma_low},
              {"gamma_high", c.grid.gamma_high},
              {"gamma_count", c.grid.gamma_count},
              {"folds", c.grid.folds}}}};
}

OptimizerConfig optimizer_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) {
        throw ParseError("optimizer config must be a JSON object", 0);
    }
    OptimizerConfig c;
    const auto defaults = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!defaults.contains(key)) {
            throw ParseError("unknown optimizer config field \"" + key + "\"", 0);
        }
    }
    if (j.contains("grid")) {
        for (const auto& [key, value] : j.at("grid").items()) {
            if (!defaults.at("grid").contains(key)) {
                throw ParseError("unknown grid field \"" + key + "\"", 0);
            }
        }
    }
    try {
        const auto get = [&j](const char* key, auto& field) {
            if (j.contains(key)) {
                j.at(key).get_to(field);
            }
        };
        get("M_outer", c.M_outer);
        get("L_inner", c.L_inner);
        get("N1", c.N1);
        get("N2", c.N2);
        get("N3", c.N3);
        get("split_fracs", c.split_fracs);
        get("sa_initial_accept", c.sa_initial_accept);
        get("sa_temp_coeff", c.sa_temp_coeff);
        get("sa_proposal_sigma", c.sa_proposal_sigma);
        get("armijo_c", c.armijo_c);
        get("backtrack_factor", c.backtrack_factor);
        get("eta0", c.eta0);
        get("max_backtracks", c.max_backtracks);
        get("grad_tol", c.grad_tol);
        get("seed", c.seed);
        get("initialize_weights", c.initialize_weights);
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            const auto gget = [&g](const char* key, auto& field) {
                if (g.contains(key)) {
                    g.at(key).get_to(field);
                }
            };
            gget("lambda_min", c.grid.lambda_min);
            gget("lambda_max", c.grid.lambda_max);
            gget("lambda_count", c.grid.lambda_count);
            gget("gamma_low", c.grid.gamma_low);
            gget("gamma_high", c.grid.gamma_high);
            gget("gamma_count", c.grid.gamma_count);
            gget("folds", c.grid.folds);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("optimizer config: ") + e.what(), 0);
    }
    c.validate();
    return c;
}

SplitIndices three_way_split(std::size_t n, const std::array<double, 3>& fracs, std::uint64_t seed) {
    if (n < 10) {
        throw InvalidArgument("three-way split needs at least 10 samples, got " + std::to_string(n));
    }
    const auto s1 = static_cast<std::size_t>(std::llround(fracs[0] * static_cast<double>(n)));
    const auto s2 = static_cast<std::size_t>(std::llround(fracs[1] * static_cast<double>(n)));
    if (!(fracs[0] > 0.0 && fracs[1] > 0.0 && fracs[2] > 0.0) || s1 == 0 || s2 == 0 || s1 + s2 >= n) {
        throw InvalidArgument("every part of the three-way split must be nonempty");
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {kSplitStream}));
    std::shuffle(order.begin(), order.end(), rng);
    SplitIndices out;
    out.d1.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(s1));
    out.d2.assign(order.begin() + static_cast<std::ptrdiff_t>(s1), order.begin() + static_cast<std::ptrdiff_t>(s1 + s2));
    out.d3.assign(order.begin() + static_cast<std::ptrdiff_t>(s1 + s2), order.end());
    return out;
}

double sa_acceptance_threshold(double delta, double risk_old, std::size_t iteration, std::size_t total,
                               const OptimizerConfig& cfg) {
    if (delta < 0.0) {
        return 1.0;
    }
    if (risk_old <= 1e-15 || total == 0) {
        return 0.0;
    }
    const double temperature = cfg.sa_temp_coeff * static_cast<double>(iteration) / std::sqrt(static_cast<double>(total));
    return cfg.sa_initial_accept * std::exp(-temperature * (delta / risk_old));
}

SaStepReport sa_step(AnnealingState& state, const RiskFn& risk, const OptimizerConfig& cfg) {
    if (state.iteration >= state.total) {
        throw InvalidArgument("annealing already completed its " + std::to_string(state.total) + " steps");
    }
    if (state.weights.empty()) {
        throw InvalidArgument("annealing needs at least one weight");
    }
    SaStepReport rep;
    rep.iteration = ++state.iteration;
    std::uniform_int_distribution<std::size_t> pick(0, state.weights.size() - 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    rep.weight_index = pick(state.rng);
    rep.old_value = state.weights[rep.weight_index];
    rep.new_value = floor_weight(rep.old_value * std::exp(cfg.sa_proposal_sigma * normal(state.rng)));
    const double draw = uniform01(state.rng);

    state.weights[rep.weight_index] = rep.new_value;
    rep.risk_old = state.risk;
    rep.risk_new = risk(state.weights);
    const double delta = rep.risk_new - rep.risk_old;
    rep.threshold = std::isfinite(rep.risk_new)
                        ? sa_acceptance_threshold(delta, rep.risk_old, rep.iteration, state.total, cfg)
                        : 0.0;
    rep.accepted = std::isfinite(rep.risk_new) && (delta < 0.0 || draw < rep.threshold);
    if (rep.accepted) {
        state.risk = rep.risk_new;
    } else {
        state.weights[rep.weight_index] = rep.old_value;
    }
    return rep;
}

GdStepResult gd_step(std::span<const double> weights, const RiskFn& risk, const RiskGradFn& risk_grad,
                     const OptimizerConfig& cfg) {
    GdStepResult out{{weights.begin(), weights.end()}, {}};
    auto& rep = out.report;
    rep.armijo_c = cfg.armijo_c;
    const RiskGradient rg = risk_grad(weights);
    rep.risk_before = rg.risk;
    rep.risk_after = rg.risk;
    for (const double g : rg.partials) {
        rep.grad_norm_sq += g * g;
    }
    if (!std::isfinite(rep.grad_norm_sq) || std::sqrt(rep.grad_norm_sq) <= cfg.grad_tol) {
        rep.local_minimum = true;
        return out;
    }
    std::vector<double> trial(weights.size());
    double eta = cfg.eta0;
    for (std::size_t t = 0; t < cfg.max_backtracks; ++t, eta *= cfg.backtrack_factor) {
        for (std::size_t q = 0; q < trial.size(); ++q) {
            trial[q] = floor_weight(weights[q] - eta * rg.partials[q]);
        }
        const double r = risk(trial);
        if (std::isfinite(r) && r <= rg.risk - cfg.armijo_c * eta * rep.grad_norm_sq) {
            rep.accepted = true;
            rep.eta = eta;
            rep.risk_after = r;
            rep.backtracks = t;
            out.weights = trial;
            return out;
        }
    }
    rep.backtracks = cfg.max_backtracks;
    rep.local_minimum = true;
    return out;
}

const char* to_string(TracePhase phase) noexcept {
    switch (phase) {
        case TracePhase::split: return "split";
        case TracePhase::svm_refit: return "SVM-refit";
        case TracePhase::sa: return "SA";
        case TracePhase::gd: return "GD";
        case TracePhase::test: return "test";
        case TracePhase::reshuffle: return "reshuffle";
    }
    return "unknown";
}

nlohmann::json to_json(const TraceRecord& r) {
    nlohmann::json j{{"phase", to_string(r.phase)}, {"outer", r.outer}, {"inner", r.inner}, {"split", r.split_id}};
    switch (r.phase) {
        case TracePhase::split:
        case TracePhase::reshuffle:
            if (r.indices) {
                j["d1"] = r.indices->d1;
                j["d2"] = r.indices->d2;
                j["d3"] = r.indices->d3;
            }
            break;
        case TracePhase::svm_refit:
            j["lambda"] = r.lambda;
            j["gamma"] = r.gamma;
            j["cv_risk"] = r.cv_risk;
            j["risk"] = r.risk;
            break;
        case TracePhase::sa:
            j["step"] = r.step;
            j["weight"] = r.weight_index;
            j["delta"] = r.delta;
            j["risk"] = r.risk;
            j["accepted"] = r.accepted;
            break;
        case TracePhase::gd:
            j["step"] = r.step;
            j["accepted"] = r.accepted;
            j["local_minimum"] = r.gd.local_minimum;
            j["eta"] = r.gd.eta;
            j["risk_before"] = r.gd.risk_before;
            j["risk"] = r.risk;
            j["grad_norm_sq"] = r.gd.grad_norm_sq;
            j["armijo_c"] = r.gd.armijo_c;
            break;
        case TracePhase::test:
            j["test_error"] = r.test_error;
            j["best_test_error"] = r.best_test_error;
            j["accepted"] = r.accepted;
            break;
    }
    return j;
}

double OptimizationTrace::best_test_error() const {
    return best ? best->test_error : std::numeric_limits<double>::infinity();
}

std::vector<double> OptimizationTrace::best_weights() const {
    return best ? best->arch.weights() : std::vector<double>{};
}

OptimizationTrace optimize_weights(const LabeledSet& data, const KernelArchitecture& arch, const OptimizerConfig& cfg) {
    cfg.validate();
    if (data.dim() != arch.input_dim()) {
        throw DimensionError("data dimension does not match the kernel");
    }
    OptimizationTrace trace;
    SplitIndices split = three_way_split(data.size(), cfg.split_fracs, cfg.seed);
    trace.splits.push_back(split);
    {
        TraceRecord r;
        r.phase = TracePhase::split;
        r.indices = split;
        trace.records.push_back(std::move(r));
    }
    const LabeledSet d3 = data.subset(split.d3);

    KernelArchitecture current = cfg.initialize_weights ? initialize_weights(arch, data.subset(split.d1).x) : arch;
    std::vector<double> weights = current.weights();
    Rng anneal_rng(derive_seed(cfg.seed, {kAnnealStream}));
    double best_error = std::numeric_limits<double>::infinity();

    for (std::size_t outer = 1; outer <= cfg.M_outer; ++outer) {
        const std::size_t split_id = trace.splits.size() - 1;
        const LabeledSet d1 = data.subset(split.d1);
        const LabeledSet d2 = data.subset(split.d2);

        // SVM on D1 with lambda and gamma from the grid
        current = current.with_weights(weights);
        const CVGrid grid = make_grid(cfg.grid, current, d1.x);
        const GridSearchResult gs = grid_search(current, d1, grid, derive_seed(cfg.seed, {kGridStream, outer}));
        current = current.with_gamma(gs.gamma);
        const TrainedModel model = fit(current, d1, gs.lambda);
        const std::vector<double> alphas = model.alphas;

        const KernelArchitecture base = current;
        const RiskFn risk = [&](std::span<const double> w) {
            return validation_risk(base.with_weights(w), alphas, d1.x, d2);
        };
        const RiskGradFn risk_grad = [&](std::span<const double> w) {
            return risk_and_gradient(base.with_weights(w), alphas, d1.x, d2);
        };
        double current_risk = risk(weights);
        {
            TraceRecord r;
            r.phase = TracePhase::svm_refit;
            r.outer = outer;
            r.split_id = split_id;
            r.lambda = gs.lambda;
            r.gamma = gs.gamma;
            r.cv_risk = gs.cv_risk;
            r.risk = current_risk;
            trace.records.push_back(std::move(r));
        }

        const auto anneal = [&](std::size_t steps, std::size_t inner) {
            AnnealingState st{0, steps, weights, current_risk, std::move(anneal_rng)};
            for (std::size_t s = 0; s < steps; ++s) {
                const SaStepReport rep = sa_step(st, risk, cfg);
                TraceRecord r;
                r.phase = TracePhase::sa;
                r.outer = outer;
                r.inner = inner;
                r.step = rep.iteration;
                r.split_id = split_id;
                r.weight_index = rep.weight_index;
                r.delta = rep.risk_new - rep.risk_old;
                r.risk = st.risk;
                r.accepted = rep.accepted;
                trace.records.push_back(std::move(r));
            }
            weights = std::move(st.weights);
            current_risk = st.risk;
            anneal_rng = std::move(st.rng);
        };

        anneal(cfg.N1, 0);

        bool local_minimum = false;
        bool improved = false;
        for (std::size_t inner = 1; inner <= cfg.L_inner; ++inner) {
            if (local_minimum) {
                anneal(cfg.N2, inner);
                local_minimum = false;
            } else {
                for (std::size_t s = 1; s <= cfg.N3; ++s) {
                    GdStepResult res = gd_step(weights, risk, risk_grad, cfg);
                    weights = std::move(res.weights);
                    current_risk = res.report.risk_after;
                    TraceRecord r;
                    r.phase = TracePhase::gd;
                    r.outer = outer;
                    r.inner = inner;
                    r.step = s;
                    r.split_id = split_id;
                    r.accepted = res.report.accepted;
                    r.risk = current_risk;
                    r.gd = res.report;
                    trace.records.push_back(std::move(r));
                    if (res.report.local_minimum) {
                        local_minimum = true;
                        break;
                    }
                }
            }

            const KernelArchitecture evaluated = base.with_weights(weights);
            const double test_error = clipped_test_error(evaluated, alphas, d1.x, d3);
            TraceRecord r;
            r.phase = TracePhase::test;
            r.outer = outer;
            r.inner = inner;
            r.split_id = split_id;
            r.test_error = test_error;
            if (test_error < best_error) {
                best_error = test_error;
                trace.best = BestSnapshot{evaluated, gs.lambda, alphas, split_id, test_error};
                improved = true;
                r.accepted = true;
            }
            r.best_test_error = best_error;
            trace.records.push_back(std::move(r));
        }

        if (!improved) {
            std::vector<std::size_t> pool = split.d1;
            pool.insert(pool.end(), split.d2.begin(), split.d2.end());
            Rng rng(derive_seed(cfg.seed, {kReshuffleStream, outer}));
            std::shuffle(pool.begin(), pool.end(), rng);
            const auto n1 = static_cast<std::ptrdiff_t>(split.d1.size());
            split.d1.assign(pool.begin(), pool.begin() + n1);
            split.d2.assign(pool.begin() + n1, pool.end());
            trace.splits.push_back(split);
            TraceRecord rec;
            rec.phase = TracePhase::reshuffle;
            rec.outer = outer;
            rec.split_id = trace.splits.size() - 1;
            rec.indices = split;
            trace.records.push_back(std::move(rec));
        }
    }
    return trace;
}

SelectionResult select_architecture(const LabeledSet& data, const std::vector<KernelArchitecture>& menu,
                                    const OptimizerConfig& cfg) {
    if (menu.empty()) {
        throw InvalidArgument("architecture menu is empty");
    }
    SelectionResult out;
    out.cv_seed = derive_seed(cfg.seed, {kSelectionStream});
    for (std::size_t c = 0; c < menu.size(); ++c) {
        OptimizerConfig run_cfg = cfg;
        run_cfg.seed = derive_seed(cfg.seed, {kCandidateStream, c});
        OptimizationTrace trace = optimize_weights(data, menu[c], run_cfg);
        const KernelArchitecture optimized = trace.best->arch;
        const CVGrid grid = make_grid(cfg.grid, optimized, data.x);
        const GridSearchResult gs = grid_search(optimized, data, grid, out.cv_seed);
        out.candidates.push_back({optimized.with_gamma(gs.gamma), gs.lambda, gs.cv_risk, std::move(trace)});
    }
    for (std::size_t c = 1; c < out.candidates.size(); ++c) {
        const auto& cand = out.candidates[c];
        const auto& best = out.candidates[out.index];
        if (cand.cv_risk < best.cv_risk ||
            (cand.cv_risk == best.cv_risk && cand.arch.weight_count() < best.arch.weight_count())) {
            out.index = c;
        }
    }
    return out;
}

void write_trace_jsonl(std::ostream& out, const OptimizationTrace& trace, std::optional<std::size_t> candidate) {
    for (const auto& r : trace.records) {
        auto j = to_json(r);
        if (candidate) {
            j["candidate"] = *candidate;
        }
        out << j.dump() << '\n';
    }
}

}  // namespace hiergauss
