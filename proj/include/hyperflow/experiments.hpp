#pragma once
#ifndef HYPERFLOW_EXPERIMENTS_HPP
#define HYPERFLOW_EXPERIMENTS_HPP

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hyperflow/field.hpp"
#include "hyperflow/kernels.hpp"
#include "hyperflow/localref.hpp"
#include "hyperflow/nonlocal.hpp"

namespace hyperflow::experiments {

struct ShapeSpec {
    std::string shape = "smooth_bump";  // indicator | gaussian | smooth_bump
    double param = 1.0;
};

struct G1Spec {
    std::string type = "affine_boundary";  // constant | affine_boundary
    double c = 1.0;
    geom::Vec a{0.5, 0.0, 0.0};
};

struct SimConfig {
    int N = 2;
    double r_max = 0.9;
    double h = 0.012;
    double T = 0.2;
    double dt_user = 0.0;
    double save_every = 0.05;
    bool has_J = true;
    ShapeSpec J{"gaussian", 0.4};
    bool has_G = true;
    G1Spec g1{};
    ShapeSpec xi{};
    double q = 1.0;
    std::vector<double> epsilons{0.4, 0.2, 0.1};
    field::BumpSpec initial{{0.0, 0.0, 0.0}, 0.25, 1.0};
    double K_radius = 0.5;
    int n_r = 16;
    int n_theta = 32;
    double R_supp = 0.0;  // 0: derived from the kernel effective supports
    uint64_t seed = 12345;
    bool dump_trajectories = false;

    static SimConfig from_json_file(const std::string& path);
    static SimConfig from_json_text(const std::string& text);
    std::string to_json_text() const;  // canonical (byte-stable) serialization

    void validate() const;  // structural checks + kernel moment validators
    kernels::RadialKernel make_J() const;
    kernels::ConvectionKernel make_G() const;
    double quad_R() const;
    nonlocal::FiberQuadrature make_quadrature() const;
};

struct ReportRow {
    double eps = 0;
    double err_l2_spacetime = 0;
    double err_l2_final = 0;
    double mass_drift = 0;
    double linf_excess = 0;
    double runtime_sec = 0;  // deterministic placeholder; real times in timings.csv
};

struct ConvergenceReport {
    SimConfig cfg;
    std::string mode;  // transport | convdiff | simulate
    std::vector<ReportRow> rows;
    std::vector<double> ratios;  // err(eps_{i+1}) / err(eps_i)
    std::string reference_info;
    double ref_self_error = 0.0;
    std::vector<nonlocal::EvolutionMonitors> monitors;  // one per eps
    std::vector<double> wall_times;                     // not part of determinism
    std::vector<field::Trajectory> trajectories;        // filled when dumping
};

// deterministic invariant sweep; returns the number of failed suites.
// corrupt_rho deliberately mis-states the volume density exponent so the
// Jacobian suite must fail (fault-injection hook for the harness tests)
int run_selftest(uint64_t seed, std::ostream& out, bool corrupt_rho = false);

ConvergenceReport run_transport_convergence(const SimConfig& cfg);
ConvergenceReport run_convdiff_convergence(const SimConfig& cfg);
ConvergenceReport run_simulate(const SimConfig& cfg);

std::string report_to_json_text(const ConvergenceReport& rep);
ConvergenceReport report_from_json_text(const std::string& text);

// writes report.csv, report.json, monitors_eps_<eps>.csv, timings.csv (and
// trajectory dumps when configured) into dir
void emit_report(const ConvergenceReport& rep, const std::string& dir);

}  // namespace hyperflow::experiments

#endif
