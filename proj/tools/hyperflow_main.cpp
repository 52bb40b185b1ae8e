#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "hyperflow/experiments.hpp"

namespace hfx = hyperflow::experiments;
namespace kernels = hyperflow::kernels;

int main(int argc, char** argv) {
    CLI::App app{"hyperflow: non-local convection-diffusion dynamics on hyperbolic space"};
    app.require_subcommand(1);

    int threads = 0;
    app.add_option("--threads", threads, "worker threads for operator application (0 = serial)");

    uint64_t seed = 12345;
    auto* self = app.add_subcommand("selftest", "run the deterministic invariant sweep");
    self->add_option("--seed", seed, "random seed for the sweep");

    std::string cfg_path, out_dir;
    auto* mom = app.add_subcommand("moments", "print kernel moments for a config");
    mom->add_option("--config", cfg_path, "JSON config file")->required();

    auto* sim = app.add_subcommand("simulate", "evolve the non-local dynamics per epsilon");
    sim->add_option("--config", cfg_path, "JSON config file")->required();
    sim->add_option("--out", out_dir, "output directory")->required();

    auto* tra = app.add_subcommand("transport", "transport concentration limit study");
    tra->add_option("--config", cfg_path, "JSON config file")->required();
    tra->add_option("--out", out_dir, "output directory")->required();

    auto* con = app.add_subcommand("converge", "convection-diffusion concentration limit study");
    con->add_option("--config", cfg_path, "JSON config file")->required();
    con->add_option("--out", out_dir, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        hyperflow::nonlocal::set_threads(threads);

        if (self->parsed()) return hfx::run_selftest(seed, std::cout) == 0 ? 0 : 1;

        hfx::SimConfig cfg = hfx::SimConfig::from_json_file(cfg_path);
        cfg.validate();

        if (mom->parsed()) {
            if (cfg.has_J) {
                kernels::RadialKernel J = cfg.make_J();
                std::cout << "A_J        = " << kernels::moment_AJ(J, cfg.N) << "\n";
                std::cout << "Mtilde_J   = " << kernels::moment_Mtilde_J(J, cfg.N) << "\n";
            }
            if (cfg.has_G) {
                std::cout << "M_G        = " << kernels::moment_MG(cfg.make_G(), cfg.N) << "\n";
            }
            if (!cfg.has_J && !cfg.has_G) std::cout << "config has no kernels\n";
            return 0;
        }

        hfx::ConvergenceReport rep;
        if (sim->parsed()) rep = hfx::run_simulate(cfg);
        if (tra->parsed()) rep = hfx::run_transport_convergence(cfg);
        if (con->parsed()) rep = hfx::run_convdiff_convergence(cfg);
        hfx::emit_report(rep, out_dir);
        std::cout << "mode " << rep.mode << ": " << rep.rows.size()
                  << " epsilon rows written to " << out_dir << "\n";
        for (size_t i = 0; i < rep.rows.size(); ++i) {
            std::cout << "  eps=" << rep.rows[i].eps;
            if (rep.mode != "simulate")
                std::cout << "  err_l2_spacetime=" << rep.rows[i].err_l2_spacetime;
            std::cout << "  mass_drift=" << rep.rows[i].mass_drift << "\n";
        }
        if (rep.mode != "simulate")
            std::cout << "reference self-error " << rep.ref_self_error << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
