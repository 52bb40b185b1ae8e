#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hyperflow/experiments.hpp"

using namespace hyperflow;
using experiments::ConvergenceReport;
using experiments::SimConfig;

namespace fs = std::filesystem;

namespace {

// small enough to keep the whole suite in the seconds range
SimConfig small_config() {
    SimConfig c;
    c.r_max = 0.6;
    c.h = 0.04;
    c.T = 0.04;
    c.save_every = 0.02;
    c.K_radius = 0.3;
    c.epsilons = {0.3, 0.15};
    c.initial = {{0.0, 0.0, 0.0}, 0.12, 1.0};
    c.n_r = 8;
    c.n_theta = 16;
    return c;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("config JSON round trip is byte identical") {
    SimConfig c = small_config();
    c.q = 2;
    c.J = {"gaussian", 0.35};
    c.g1 = {"affine_boundary", 0.8, {0.3, 0.1, 0.0}};
    std::string t1 = c.to_json_text();
    SimConfig c2 = SimConfig::from_json_text(t1);
    CHECK(c2.to_json_text() == t1);
    // defaults survive a trip through an empty object
    SimConfig d = SimConfig::from_json_text("{}");
    CHECK(d.to_json_text() == SimConfig{}.to_json_text());
}

TEST_CASE("config validation rejects malformed input") {
    auto reject = [](void (*mutate)(SimConfig&)) {
        SimConfig c = small_config();
        mutate(c);
        CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    };
    reject([](SimConfig& c) { c.N = 4; });
    reject([](SimConfig& c) { c.r_max = 1.5; });
    reject([](SimConfig& c) { c.h = 0.0; });
    reject([](SimConfig& c) { c.T = -1.0; });
    reject([](SimConfig& c) { c.K_radius = c.r_max; });
    reject([](SimConfig& c) { c.epsilons = {}; });
    reject([](SimConfig& c) { c.epsilons = {0.2, 0.4}; });
    reject([](SimConfig& c) { c.epsilons = {0.4, 0.4}; });
    reject([](SimConfig& c) { c.q = 0.5; });
    reject([](SimConfig& c) { c.initial.center = {0.55, 0.0, 0.0}; });
    reject([](SimConfig& c) { c.n_r = 1; });
    SimConfig ok = small_config();
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("unknown kernel shapes are rejected") {
    SimConfig c = small_config();
    c.J.shape = "zigzag";
    CHECK_THROWS_AS(c.make_J(), std::invalid_argument);
    c = small_config();
    c.g1.type = "quadratic";
    CHECK_THROWS_AS(c.make_G(), std::invalid_argument);
}

TEST_CASE("selftest passes, is seed-deterministic, and catches faults") {
    std::ostringstream o1, o2, o3;
    CHECK(experiments::run_selftest(42, o1) == 0);
    CHECK(experiments::run_selftest(42, o2) == 0);
    CHECK(o1.str() == o2.str());
    // a deliberately wrong volume-density exponent must be detected
    CHECK(experiments::run_selftest(42, o3, /*corrupt_rho=*/true) > 0);
    CHECK(o3.str().find("[FAIL]") != std::string::npos);
}

TEST_CASE("transport study: decreasing error, conserved mass") {
    SimConfig c = small_config();
    ConvergenceReport rep = experiments::run_transport_convergence(c);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.mode == "transport");
    for (const auto& r : rep.rows) {
        CHECK(std::isfinite(r.err_l2_spacetime));
        CHECK(r.err_l2_spacetime > 0);
        CHECK(r.mass_drift <= 1e-12);
        CHECK(r.linf_excess <= 1e-12);
    }
    CHECK(rep.rows[1].err_l2_spacetime < rep.rows[0].err_l2_spacetime);
    CHECK(rep.ref_self_error < rep.rows[1].err_l2_spacetime);
    REQUIRE(rep.ratios.size() == 1);
    CHECK(rep.ratios[0] ==
          doctest::Approx(rep.rows[1].err_l2_spacetime / rep.rows[0].err_l2_spacetime));
    REQUIRE(rep.monitors.size() == 2);
    CHECK(rep.monitors[0].rows.size() >= 2);
}

TEST_CASE("convdiff study: decreasing error for q = 2") {
    SimConfig c = small_config();
    c.q = 2;
    c.h = 0.03;  // the eps^-2-scaled operator needs h well below eps
    c.J = {"gaussian", 0.3};
    ConvergenceReport rep = experiments::run_convdiff_convergence(c);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.mode == "convdiff");
    CHECK(rep.rows[1].err_l2_spacetime < rep.rows[0].err_l2_spacetime);
    for (const auto& r : rep.rows) CHECK(r.mass_drift <= 1e-12);
}

TEST_CASE("simulate mode runs the monitors only") {
    SimConfig c = small_config();
    c.J = {"gaussian", 0.3};
    ConvergenceReport rep = experiments::run_simulate(c);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.mode == "simulate");
    for (const auto& r : rep.rows) {
        CHECK(r.err_l2_spacetime == 0.0);
        CHECK(r.mass_drift <= 1e-12);
    }
}

TEST_CASE("emit_report writes the full file set and stable JSON") {
    SimConfig c = small_config();
    ConvergenceReport rep = experiments::run_transport_convergence(c);
    fs::path dir = fs::temp_directory_path() / "hyperflow_test_report";
    fs::remove_all(dir);
    experiments::emit_report(rep, dir.string());
    CHECK(fs::exists(dir / "report.csv"));
    CHECK(fs::exists(dir / "report.json"));
    CHECK(fs::exists(dir / "timings.csv"));
    CHECK(fs::exists(dir / "monitors_eps_0.3.csv"));
    CHECK(fs::exists(dir / "monitors_eps_0.15.csv"));
    // one header line plus one row per epsilon
    std::string csv = slurp(dir / "report.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + (long)rep.rows.size());
    // JSON parse -> re-emit is byte identical
    std::string js = slurp(dir / "report.json");
    ConvergenceReport back = experiments::report_from_json_text(js);
    CHECK(experiments::report_to_json_text(back) == js);
    fs::remove_all(dir);
}

TEST_CASE("report.csv is byte-identical across reruns and thread counts") {
    SimConfig c = small_config();
    auto render = [](const ConvergenceReport& rep) {
        fs::path dir = fs::temp_directory_path() / "hyperflow_test_det";
        fs::remove_all(dir);
        experiments::emit_report(rep, dir.string());
        std::string s = slurp(dir / "report.csv");
        fs::remove_all(dir);
        return s;
    };
    nonlocal::set_threads(1);
    std::string a = render(experiments::run_transport_convergence(c));
    std::string b = render(experiments::run_transport_convergence(c));
    nonlocal::set_threads(4);
    std::string d = render(experiments::run_transport_convergence(c));
    nonlocal::set_threads(1);
    CHECK(a == b);
    CHECK(a == d);
}
