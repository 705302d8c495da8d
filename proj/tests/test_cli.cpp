#include "hiergauss/commands.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

using namespace hiergauss;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = 0;
    std::string out;
    std::string err;
};

Outcome run_cli(std::initializer_list<std::string> args) {
    std::vector<std::string> owned{"hiergauss"};
    owned.insert(owned.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : owned) {
        argv.push_back(a.c_str());
    }
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch() {
    auto dir = fs::temp_directory_path() / "hiergauss_test_cli";
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

fs::path write_dataset(const std::string& name, const LabeledSet& samples) {
    const auto path = scratch() / name;
    save_csv(path, Dataset{samples, {}, {}});
    return path;
}

fs::path write_config(const std::string& name, const std::string& json) {
    const auto path = scratch() / name;
    std::ofstream(path) << json;
    return path;
}

const char* kTinyConfig = R"({"M_outer": 1, "L_inner": 2, "N1": 20, "N2": 10, "N3": 2,
    "grid": {"lambda_count": 4, "gamma_count": 4}})";

}  // namespace

TEST_CASE("usage errors exit with 2") {
    CHECK(run_cli({}).code == 2);
    CHECK(run_cli({"frobnicate"}).code == 2);
    const auto missing = run_cli({"train", "--out", "x.json"});
    CHECK(missing.code == 2);
    CHECK(missing.err.find("--data") != std::string::npos);
    CHECK(run_cli({"train", "--data", "a.csv", "--out", "b.json", "--lambda", "-1"}).code == 2);
    CHECK(run_cli({"train", "--data", "a.csv", "--out", "b.json", "--format", "xml"}).code == 2);
    CHECK(run_cli({"train", "--data", "a.csv", "--out", "b.json", "--lambda", "0.1", "--grid"}).code == 2);
    const auto help = run_cli({"--help"});
    CHECK(help.code == 0);
    CHECK(help.out.find("optimize") != std::string::npos);
    CHECK(help.err.empty());
}

TEST_CASE("runtime errors exit with 1 and name the path") {
    const auto r = run_cli({"train", "--data", "/nonexistent/train.csv", "--lambda", "0.1", "--out",
                            (scratch() / "m.json").string()});
    CHECK(r.code == 1);
    CHECK(r.err.find("/nonexistent/train.csv") != std::string::npos);
    CHECK(r.out.empty());

    const auto data = write_dataset("few.csv", oracle::relevant_coordinate_task(30, 1));
    const auto no_lambda = run_cli({"train", "--data", data.string(), "--out", (scratch() / "m.json").string()});
    CHECK(no_lambda.code == 1);
}

TEST_CASE("train with fixed lambda matches the library") {
    const auto samples = oracle::relevant_coordinate_task(60, 2);
    const auto data = write_dataset("train.csv", samples);
    const auto arch_path = scratch() / "arch.json";
    std::mt19937_64 rng(3);
    const auto arch = oracle::random_architecture(rng, 10, 2);
    save_architecture(arch, arch_path);
    const auto model_path = scratch() / "fixed.json";
    const auto r = run_cli({"train", "--data", data.string(), "--arch", arch_path.string(), "--lambda", "0.01",
                            "--out", model_path.string()});
    REQUIRE(r.code == 0);

    const auto j = nlohmann::json::parse(read_file(model_path));
    REQUIRE(j.contains("scaling"));
    const auto model = model_from_json(j);
    const auto scaled = scale(load(data));
    const auto reference = fit(arch, scaled.samples, 0.01);
    for (int t = 0; t < 20; ++t) {
        const auto x = oracle::random_point(rng, 10);
        CHECK(predict(model, x, false) == predict(reference, x, false));
    }

    const auto predicted = run_cli({"predict", "--model", model_path.string(), "--data", data.string(), "--format",
                                    "json"});
    REQUIRE(predicted.code == 0);
    const auto pj = nlohmann::json::parse(predicted.out);
    const auto expected = predict(reference, scaled.samples.x, true);
    REQUIRE(pj.at("predictions").size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(pj.at("predictions")[i].get<double>() == expected[i]);
    }
    CHECK(pj.at("squared_error").get<double>() == doctest::Approx(clipped_squared_error(reference, scaled.samples)));

    const auto text = run_cli({"predict", "--model", model_path.string(), "--data", data.string()});
    REQUIRE(text.code == 0);
    std::istringstream lines(text.out);
    std::size_t count = 0;
    for (std::string line; std::getline(lines, line);) {
        CHECK(std::stod(line) == expected[count]);
        ++count;
    }
    CHECK(count == expected.size());
    CHECK(text.err.find("error") != std::string::npos);

    const auto to_file = scratch() / "pred.txt";
    REQUIRE(run_cli({"predict", "--model", model_path.string(), "--data", data.string(), "--out", to_file.string()})
                .code == 0);
    CHECK(read_file(to_file) == text.out);
}

TEST_CASE("train with grid search logs the selection") {
    const auto data = write_dataset("grid.csv", oracle::relevant_coordinate_task(60, 4));
    const auto model_path = scratch() / "grid.json";
    const auto r = run_cli({"train", "--data", data.string(), "--grid", "--out", model_path.string(), "--seed", "3"});
    REQUIRE(r.code == 0);
    CHECK(r.err.find("lambda=") != std::string::npos);
    CHECK(r.err.find("gamma=") != std::string::npos);
    const auto model = model_from_json(nlohmann::json::parse(read_file(model_path)));
    CHECK(model.arch.depth() == 1);
}

TEST_CASE("optimize is reproducible under a fixed seed") {
    const auto data = write_dataset("opt.csv", oracle::relevant_coordinate_task(80, 5));
    const auto cfg = write_config("tiny.json", kTinyConfig);
    const auto run_once = [&](const std::string& tag, const std::string& seed) {
        const auto trace = scratch() / ("trace_" + tag + ".jsonl");
        const auto model = scratch() / ("model_" + tag + ".json");
        const auto r = run_cli({"optimize", "--data", data.string(), "--config", cfg.string(), "--seed", seed,
                                "--menu", "inhomogeneous", "--out", model.string(), "--trace", trace.string()});
        REQUIRE(r.code == 0);
        return std::make_pair(read_file(trace), read_file(model));
    };
    const auto a = run_once("a", "7");
    const auto b = run_once("b", "7");
    const auto c = run_once("c", "8");
    CHECK_FALSE(a.first.empty());
    CHECK(a.first == b.first);
    CHECK(a.second == b.second);
    CHECK(a.first != c.first);
}

TEST_CASE("optimize with a degenerate config") {
    const auto data = write_dataset("deg.csv", oracle::relevant_coordinate_task(60, 6));
    const auto cfg = write_config("deg.json", R"({"M_outer": 1, "L_inner": 1, "N1": 0, "N2": 0, "N3": 0})");
    const auto model_path = scratch() / "deg_model.json";
    const auto r = run_cli({"optimize", "--data", data.string(), "--config", cfg.string(), "--out",
                            model_path.string(), "--format", "json"});
    REQUIRE(r.code == 0);
    const auto summary = nlohmann::json::parse(r.out);
    CHECK(summary.at("candidates").size() == 7);
    CHECK(summary.contains("baseline_cv_risk"));
    const auto model = model_from_json(nlohmann::json::parse(read_file(model_path)));
    CHECK(model.alphas.size() == 60);
}

TEST_CASE("optimize with a single architecture and text summary") {
    const auto data = write_dataset("single.csv", oracle::relevant_coordinate_task(60, 7));
    const auto cfg = write_config("single_cfg.json", kTinyConfig);
    const auto arch_path = scratch() / "single_arch.json";
    save_architecture(build_candidate_architectures(10)[0], arch_path);
    const auto r = run_cli({"optimize", "--data", data.string(), "--arch", arch_path.string(), "--config",
                            cfg.string(), "--out", (scratch() / "single_model.json").string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("* candidate 0") != std::string::npos);
    CHECK(r.out.find("baseline cv error") != std::string::npos);
}

TEST_CASE("optimize beats the isotropic baseline on a relevant-coordinate task") {
    const auto data = write_dataset("relevant.csv", oracle::relevant_coordinate_task(300, 8, 0.05));
    const auto cfg = write_config("relevant_cfg.json", R"({"M_outer": 2, "L_inner": 4, "N1": 100, "N2": 50, "N3": 10,
        "grid": {"lambda_count": 6, "gamma_count": 6}})");
    const auto r = run_cli({"optimize", "--data", data.string(), "--config", cfg.string(), "--menu", "inhomogeneous",
                            "--seed", "1", "--format", "json", "--out", (scratch() / "relevant_model.json").string()});
    REQUIRE(r.code == 0);
    const auto summary = nlohmann::json::parse(r.out);
    INFO(r.out);
    CHECK(summary.at("hierarchical_cv_risk").get<double>() < summary.at("baseline_cv_risk").get<double>());
}

TEST_CASE("benchmark report") {
    const auto data = write_dataset("bench.csv", oracle::relevant_coordinate_task(80, 9));
    const auto cfg = write_config("bench_cfg.json", kTinyConfig);
    const auto report_path = scratch() / "report.json";
    const auto r = run_cli({"bench", "--data", data.string(), "--data", (scratch() / "absent.csv").string(),
                            "--train-size", "40", "--test-size", "30", "--reps", "2", "--config", cfg.string(),
                            "--menu", "inhomogeneous", "--jobs", "2", "--out", report_path.string()});
    REQUIRE(r.code == 0);
    CHECK(r.out.find("bench.csv") != std::string::npos);
    CHECK(r.out.find("absent.csv | failed") != std::string::npos);
    CHECK(r.err.find("absent.csv") != std::string::npos);

    const auto report = nlohmann::json::parse(read_file(report_path));
    CHECK(report.at("repetitions") == 2);
    const auto& ds = report.at("datasets");
    REQUIRE(ds.size() == 2);
    CHECK(ds[1].contains("failure"));
    const auto& methods = ds[0].at("methods");
    REQUIRE(methods.size() == 2);
    for (const auto& m : methods) {
        const auto errors = m.at("errors").get<std::vector<double>>();
        REQUIRE(errors.size() == 2);
        const double mean = (errors[0] + errors[1]) / 2.0;
        const double sd = std::sqrt(((errors[0] - mean) * (errors[0] - mean) + (errors[1] - mean) * (errors[1] - mean)));
        CHECK(m.at("mean").get<double>() == doctest::Approx(mean).epsilon(1e-14));
        CHECK(m.at("stddev").get<double>() == doctest::Approx(sd).epsilon(1e-12));
        char cell[64];
        std::snprintf(cell, sizeof cell, "%.5f +- %.5f", mean, sd);
        std::string expected = cell;
        for (std::size_t pos; (pos = expected.find("0.")) != std::string::npos && (pos == 0 || expected[pos - 1] == ' ');) {
            expected.erase(pos, 1);
        }
        CHECK(r.out.find(expected) != std::string::npos);
    }

    // identical output when run serially
    const auto serial = run_cli({"bench", "--data", data.string(), "--train-size", "40", "--test-size", "30",
                                 "--reps", "2", "--config", cfg.string(), "--menu", "inhomogeneous", "--jobs", "1",
                                 "--format", "json"});
    REQUIRE(serial.code == 0);
    const auto sj = nlohmann::json::parse(serial.out);
    for (std::size_t m = 0; m < 2; ++m) {
        CHECK(sj.at("datasets")[0].at("methods")[m].at("errors") == methods[m].at("errors"));
    }
}

TEST_CASE("jobs default from the environment") {
    ::setenv("HIERGAUSS_JOBS", "3", 1);
    CHECK(cli::default_jobs() == 3);
    ::setenv("HIERGAUSS_JOBS", "zero", 1);
    CHECK(cli::default_jobs() == 1);
    ::unsetenv("HIERGAUSS_JOBS");
    CHECK(cli::default_jobs() == 1);
}
