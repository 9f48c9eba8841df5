#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "bdsde/experiments.hpp"
#include "bdsde/field.hpp"

using namespace bdsde;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

struct TmpDir {
    std::string path;
    explicit TmpDir(const std::string& name) : path("harness_test_" + name) {
        std::filesystem::remove_all(path);
        std::filesystem::create_directories(path);
    }
    ~TmpDir() { std::filesystem::remove_all(path); }
};

} // namespace

TEST_CASE("config parse, serialize, parse is the identity") {
    const std::string text = R"(
# a comment
[experiment]
kind = qv-check
seed = 7

[kernel]
family = constant
q0 = 1.5  # trailing comment

[grids]
n_steps = 128
)";
    auto a = Config::parse(text);
    auto b = Config::parse(a.serialize());
    CHECK(a == b);
    CHECK(a.serialize() == b.serialize());
    CHECK(a.hash() == b.hash());
    CHECK(a.get_double("kernel", "q0") == 1.5);
    CHECK(a.get_int("grids", "n_steps") == 128);
    CHECK(a.get_str("experiment", "kind") == "qv-check");
}

TEST_CASE("malformed config lists the offending lines") {
    try {
        Config::parse("[unterminated\nkey without equals\n");
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        REQUIRE(e.keys.size() == 2);
        CHECK(e.keys[0].find("line 1") != std::string::npos);
        CHECK(e.keys[1].find("line 2") != std::string::npos);
    }
}

TEST_CASE("typed getters flag bad values with their keys") {
    auto cfg = Config::parse("[a]\nx = notanumber\nb = maybe\n");
    CHECK_THROWS_AS(cfg.get_double("a", "x"), ConfigError);
    CHECK_THROWS_AS(cfg.get_int("a", "x"), ConfigError);
    CHECK_THROWS_AS(cfg.get_bool("a", "b", true), ConfigError);
    CHECK_THROWS_AS(cfg.get_str("a", "missing"), ConfigError);
    CHECK(cfg.get_double("a", "missing", 2.0) == 2.0);
    auto lst = Config::parse("[a]\nv = 1, 2.5, 3\n").get_list("a", "v");
    CHECK(lst == std::vector<double>{1.0, 2.5, 3.0});
}

TEST_CASE("unknown experiment kind is a config error") {
    auto cfg = Config::parse("[experiment]\nkind = frobnicate\n");
    TmpDir tmp("unknown");
    CHECK_THROWS_AS(run(cfg, tmp.path), ConfigError);
}

TEST_CASE("small qv-check run produces a passing manifest and outputs") {
    auto cfg = Config::parse(R"(
[experiment]
kind = qv-check
seed = 5
[kernel]
family = constant
q0 = 1.0
[coefficients]
family = ou
theta = 1.0
sigma = 1.0
[grids]
horizon = 1.0
n_steps = 512
n_realizations = 64
n_paths = 1
[tolerances]
qv_rel = 0.1
)");
    TmpDir tmp("qv");
    auto manifest = run(cfg, tmp.path);
    CHECK(manifest.pass);
    REQUIRE(manifest.assertions.size() == 1);
    CHECK(manifest.assertions[0].name == "qv_rel_err");
    CHECK(std::filesystem::exists(tmp.path + "/qv.csv"));
    CHECK(std::filesystem::exists(tmp.path + "/report.json"));
    CHECK(std::filesystem::exists(tmp.path + "/manifest.json"));

    auto plots = emit_plots(manifest, tmp.path);
    REQUIRE(plots.size() == 1);
    CHECK(std::filesystem::file_size(tmp.path + "/" + plots[0]) > 0);
}

TEST_CASE("identical config and seed reproduce byte-identical outputs") {
    auto cfg = Config::parse(R"(
[experiment]
kind = solve-bdsde
seed = 77
[kernel]
family = exponential
scale = 1.0
amplitude = 0.5
[coefficients]
family = ou
theta = 1.0
sigma = 1.0
[driver]
f = linear_y
lambda = -0.5
g = linear_y
beta = 0.4
[terminal]
kind = gaussian_bump
[start]
kind = spread
lo = -1.0
hi = 1.0
[grids]
horizon = 0.5
n_steps = 16
n_paths = 2048
[probes]
x = -0.5, 0.0, 0.5
[output]
dump_field = true
)");
    TmpDir ta("det_a"), tb("det_b");
    auto ma = run(cfg, ta.path);
    auto mb = run(cfg, tb.path);
    CHECK(ma.config_hash == mb.config_hash);
    for (const auto& rel : ma.outputs)
        CHECK(slurp(ta.path + "/" + rel) == slurp(tb.path + "/" + rel));

    // and a different seed changes the data
    auto cfg2 = cfg;
    cfg2.set("experiment", "seed", "78");
    TmpDir tc("det_c");
    auto mc = run(cfg2, tc.path);
    CHECK(slurp(ta.path + "/u0.csv") != slurp(tc.path + "/u0.csv"));
}

TEST_CASE("field container round trip through the runner output is lossless") {
    auto cfg = Config::parse(R"(
[experiment]
kind = solve-bdsde
seed = 99
[kernel]
family = constant
q0 = 1.0
[coefficients]
family = constant
sigma = 1.0
[driver]
f = zero
g = linear_y
beta = 1.0
[terminal]
kind = poly_clamped
a1 = 1.0
clamp = 8.0
[start]
kind = spread
lo = -1.0
hi = 1.0
[grids]
horizon = 1.0
n_steps = 8
n_paths = 512
[probes]
x = 0.0
[output]
dump_field = true
)");
    TmpDir tmp("roundtrip");
    run(cfg, tmp.path);
    auto f = FieldRealization::read_file(tmp.path + "/field.bin");
    std::ostringstream os(std::ios::binary);
    f.serialize(os);
    CHECK(os.str() == slurp(tmp.path + "/field.bin"));
}

TEST_CASE("solve-spde runner checks the heat oracle and emits artifacts") {
    auto cfg = Config::parse(R"(
[experiment]
kind = solve-spde
seed = 3
[kernel]
family = constant
q0 = 1.0
[coefficients]
family = constant
sigma = 1.4142135623730951
[driver]
f = zero
g = zero
[terminal]
kind = gaussian_bump
amp = 1.0
center = 0.0
width = 1.0
[grids]
horizon = 0.25
n_steps = 256
x_lo = -8.0
x_hi = 8.0
x_nodes = 400
[check]
heat_oracle = true
[tolerances]
heat_linf = 1e-3
)");
    TmpDir tmp("spde");
    auto manifest = run(cfg, tmp.path);
    CHECK(manifest.pass);
    CHECK(std::filesystem::exists(tmp.path + "/solution.csv"));
    auto plots = emit_plots(manifest, tmp.path);
    CHECK_FALSE(plots.empty());
}

TEST_CASE("oracle runner writes the estimator record") {
    auto cfg = Config::parse(R"(
[experiment]
kind = oracle
seed = 4
[kernel]
family = constant
q0 = 1.0
[terminal]
kind = cosine
amp = 1.0
wavenumber = 0.0
[oracle]
estimator = explicit_linear_fk
x = 0.0
[grids]
horizon = 1.0
n_steps = 32
n_paths = 2000
)");
    TmpDir tmp("oracle");
    auto manifest = run(cfg, tmp.path);
    auto j = nlohmann::json::parse(slurp(tmp.path + "/oracle.json"));
    CHECK(j.at("M").get<std::size_t>() == 2000);
    CHECK(j.at("mean").get<double>() > 0.0);
    CHECK(manifest.pass);
}
