// Acceptance gate: one PASS/FAIL line per criterion, pinned tolerances.
// Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hyperflow/experiments.hpp"
#include "hyperflow/quadrature.hpp"

using namespace hyperflow;
using geom::Model;
using geom::Point;
using geom::TangentVector;
using geom::Vec;

namespace fs = std::filesystem;

namespace {

constexpr double pi = std::numbers::pi;

double now_minus(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Point rand_ball(std::mt19937_64& rng, int dim, double rmax) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Point p{Model::Ball, dim, {}};
    for (;;) {
        for (int d = 0; d < dim; ++d) p.x[d] = U(rng);
        if (geom::dot(p.x, p.x, dim) < rmax * rmax) return p;
    }
}

Vec rand_fiber(std::mt19937_64& rng, int dim, double scale) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Vec v{};
    for (int d = 0; d < dim; ++d) v[d] = scale * U(rng);
    return v;
}

double det2(double a, double b, double c, double d) { return a * d - b * c; }

double det3(const std::array<std::array<double, 3>, 3>& m) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
           m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

// chart Jacobian determinant of a half-space -> half-space map by central FD
template <class Map>
double fd_det(const Map& f, const Point& x, double step) {
    const int N = x.dim;
    std::array<std::array<double, 3>, 3> J{};
    for (int i = 0; i < N; ++i) {
        Point xp = x, xm = x;
        xp.x[i] += step;
        xm.x[i] -= step;
        Point yp = f(xp), ym = f(xm);
        for (int j = 0; j < N; ++j) J[j][i] = (yp.x[j] - ym.x[j]) / (2.0 * step);
    }
    if (N == 2) return det2(J[0][0], J[0][1], J[1][0], J[1][1]);
    return det3(J);
}

// determinant of d exp_x at W between orthonormal frames (conformal chart)
double fd_det_exp(const Point& x, const Vec& W, double step) {
    const int N = x.dim;
    double lx = geom::lambda_ball(x);
    std::array<std::array<double, 3>, 3> J{};
    Point y0 = geom::exp_map(TangentVector{x, W});
    double ly = geom::lambda_ball(y0);
    for (int i = 0; i < N; ++i) {
        TangentVector wp{x, W}, wm{x, W};
        wp.fiber[i] += step / lx;
        wm.fiber[i] -= step / lx;
        Point yp = geom::exp_map(wp), ym = geom::exp_map(wm);
        for (int j = 0; j < N; ++j) J[j][i] = ly * (yp.x[j] - ym.x[j]) / (2.0 * step);
    }
    if (N == 2) return det2(J[0][0], J[0][1], J[1][0], J[1][1]);
    return det3(J);
}

struct Gate {
    int failures = 0;

    void report(int num, const std::string& name, bool ok, const std::string& detail) {
        std::printf("%s  criterion %d: %s  [%s]\n", ok ? "PASS" : "FAIL", num, name.c_str(),
                    detail.c_str());
        std::fflush(stdout);
        if (!ok) ++failures;
    }
};

// ---------------------------------------------------------------- criterion 1

void criterion_geometry(Gate& gate) {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2024);
    std::ostringstream d;
    bool ok = true;

    double worst = 0;  // exp/log round trip
    for (int dim : {2, 3})
        for (int i = 0; i < 300; ++i) {
            Point x = rand_ball(rng, dim, 0.9), y = rand_ball(rng, dim, 0.9);
            Point z = geom::exp_map(geom::log_map(x, y));
            Vec e{};
            for (int k = 0; k < dim; ++k) e[k] = z.x[k] - y.x[k];
            worst = std::max(worst, geom::enorm(e, dim));
        }
    ok &= worst <= 1e-9;
    d << "roundtrip " << worst;

    worst = 0;  // FD det(d exp) vs radial density
    for (int dim : {2, 3})
        for (int i = 0; i < 40; ++i) {
            Point x = rand_ball(rng, dim, 0.6);
            Vec W = rand_fiber(rng, dim, 1.2);
            double r = geom::hyp_norm(TangentVector{x, W});
            double det = fd_det_exp(x, W, 1e-5);
            double rho = geom::jacobian_rho(r, dim);
            worst = std::max(worst, std::abs(det - rho) / rho);
        }
    ok &= worst <= 1e-5;
    d << ", det(dexp) " << worst;

    // shift map in the half-space chart: numeric Jacobian vs C_V, plus the
    // exponential bounds, on 10^4 samples
    double worst_jac = 0;
    bool bounds_ok = true;
    for (int i = 0; i < 10000; ++i) {
        int dim = (i % 2) ? 3 : 2;
        Vec V = rand_fiber(rng, dim, 1.5);
        double cv = geom::shift_jacobian_cv(V, dim);
        double nv = geom::enorm(V, dim);
        bounds_ok &= cv > 0 && cv >= std::exp(-nv) - 1e-12 && cv <= std::exp(nv) + 1e-12;
        if (i % 50 == 0) {  // FD determinant on a subsample (cost control)
            Point h = geom::to_model(rand_ball(rng, dim, 0.8), Model::HalfSpace);
            auto shift = [&](const Point& p) {
                TangentVector w{p, {}};
                for (int k = 0; k < dim; ++k) w.fiber[k] = p.x[dim - 1] * V[k];
                return geom::exp_map(w);
            };
            double det = fd_det(shift, h, 1e-6 * h.x[dim - 1]);
            worst_jac = std::max(worst_jac, std::abs(det - cv) / cv);
        }
    }
    ok &= bounds_ok && worst_jac <= 1e-6;
    d << ", shift jac " << worst_jac;

    worst = 0;  // the Cayley transform preserves hyperbolic distance
    for (int dim : {2, 3})
        for (int i = 0; i < 300; ++i) {
            Point x = rand_ball(rng, dim, 0.9), y = rand_ball(rng, dim, 0.9);
            double d1 = geom::distance(x, y);
            double d2 = geom::distance(geom::cayley(x), geom::cayley(y));
            worst = std::max(worst, std::abs(d1 - d2));
        }
    ok &= worst <= 1e-11;
    d << ", cayley " << worst;

    double el = now_minus(t0);
    ok &= el < 30.0;
    d << ", " << el << "s";
    gate.report(1, "geometry invariants", ok, d.str());
}

// ---------------------------------------------------------------- criterion 2

void criterion_kernels(Gate& gate) {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2025);
    std::ostringstream d;
    bool ok = true;

    kernels::ConvectionKernel K{kernels::g1_affine(1.0, {0.5, 0.0, 0.0}, 2),
                                kernels::make_smooth_bump(1.0), 2};

    double worst = 0;  // geodesic flow invariance, 10^3 samples
    std::uniform_real_distribution<double> T(-3.0, 3.0);
    for (int i = 0; i < 1000; ++i) {
        Point x = rand_ball(rng, 2, 0.9);
        TangentVector v{x, rand_fiber(rng, 2, 0.8)};
        double g0 = kernels::eval_G_tilde(K, v);
        double gt = kernels::eval_G_tilde(K, geom::geodesic_flow(v, T(rng)));
        worst = std::max(worst, std::abs(gt - g0));
    }
    ok &= worst <= 1e-9;
    d << "invariance " << worst;

    worst = 0;  // dissipativity residual
    for (double eps : {0.5, 0.25, 0.1}) {
        Point y = rand_ball(rng, 2, 0.4);
        double scale = 1.0;
        double r = kernels::dissipativity_residual(K, y, eps, 1.0, 48, 64, &scale);
        worst = std::max(worst, std::abs(r) / scale);
    }
    ok &= worst <= 1e-6;
    d << ", dissipativity " << worst;

    double aj = kernels::moment_AJ(kernels::make_indicator(1.0), 2);
    ok &= std::abs(aj - pi / 8.0) <= 1e-9;
    d << ", A_J-pi/8 " << std::abs(aj - pi / 8.0);

    double mg = kernels::moment_MG(K, 2);  // |X_G| <= M(G tilde) everywhere sampled
    worst = 0;
    for (int i = 0; i < 200; ++i) {
        Point x = rand_ball(rng, 2, 0.9);
        worst = std::max(worst, geom::hyp_norm(kernels::first_moment_field(K, x)) - mg);
    }
    ok &= worst <= 1e-9 * mg;
    d << ", |X|-M_G " << worst;

    double el = now_minus(t0);
    ok &= el < 60.0;
    d << ", " << el << "s";
    gate.report(2, "kernel properties", ok, d.str());
}

// ---------------------------------------------------------------- criterion 3

void criterion_structure(Gate& gate) {
    auto t0 = std::chrono::steady_clock::now();
    std::ostringstream d;
    bool ok = true;
    try {
        experiments::SimConfig cfg;  // default configuration, every epsilon
        experiments::ConvergenceReport rep = experiments::run_simulate(cfg);
        double per_eps_limit = 300.0;
        for (size_t i = 0; i < rep.rows.size(); ++i) {
            const auto& rows = rep.monitors[i].rows;
            double mass0 = rows.front().mass, l1_0 = rows.front().l1;
            double linf0 = rows.front().linf, l2_0 = rows.front().l2;
            double worst_mass = 0, worst_linf = 0, worst_l2 = 0, worst_energy = 0;
            double prev_l2 = l2_0;
            for (const auto& r : rows) {
                worst_mass = std::max(worst_mass, std::abs(r.mass - mass0));
                worst_linf = std::max(worst_linf, r.linf - linf0);
                worst_l2 = std::max(worst_l2, r.l2 - prev_l2);
                prev_l2 = r.l2;
                worst_energy = std::max(
                    worst_energy, (r.l2 * r.l2 + 0.5 * r.j_energy_cum) / (l2_0 * l2_0) - 1.0);
            }
            bool row_ok = worst_mass <= 1e-7 * l1_0 && worst_linf <= 1e-8 &&
                          worst_l2 <= 1e-8 * l2_0 && worst_energy <= 1e-6 &&
                          rep.wall_times[i] <= per_eps_limit;
            ok &= row_ok;
            d << (i ? "; " : "") << "eps=" << rep.rows[i].eps << " mass " << worst_mass
              << " linf " << worst_linf << " l2 " << worst_l2 << " energy " << worst_energy;
        }
    } catch (const std::exception& e) {
        ok = false;
        d << "exception: " << e.what();
    }
    d << ", " << now_minus(t0) << "s";
    gate.report(3, "structure preservation (default config)", ok, d.str());
}

// ---------------------------------------------------------------- criterion 4

void criterion_duality(Gate& gate) {
    auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(2026);
    std::ostringstream d;
    bool ok = true;

    experiments::SimConfig cfg;
    kernels::ConvectionKernel K = cfg.make_G();
    auto g = field::Grid::create(2, 0.7, 0.025);
    auto quad = nonlocal::FiberQuadrature::create(2, 12, 24, 1.0);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    std::vector<double> u(g->n()), v(g->n()), lg(g->n()), lga(g->n());
    for (size_t i = 0; i < g->n(); ++i) {
        u[i] = U(rng);
        v[i] = U(rng);
    }
    for (double eps : {1.0, 0.3, 0.1}) {
        nonlocal::AssembledOperators ops = nonlocal::assemble(g, quad, eps, nullptr, &K);
        ops.apply_LG(u.data(), lg.data());
        ops.apply_LG_adjoint(v.data(), lga.data());
        double lhs = 0, rhs = 0, nu = 0, nv = 0;
        for (size_t i = 0; i < g->n(); ++i) {
            lhs += g->w[i] * lg[i] * v[i];
            rhs += g->w[i] * u[i] * lga[i];
            nu += g->w[i] * u[i] * u[i];
            nv += g->w[i] * v[i] * v[i];
        }
        double gap = std::abs(lhs - rhs) / (std::sqrt(nu) * std::sqrt(nv));
        ok &= gap <= 1e-6;
        d << "eps=" << eps << " gap " << gap << "; ";
    }
    d << now_minus(t0) << "s";
    gate.report(4, "adjoint duality", ok, d.str());
}

// ---------------------------------------------------------------- criterion 5

void criterion_transport(Gate& gate) {
    auto t0 = std::chrono::steady_clock::now();
    std::ostringstream d;
    bool ok = true;
    try {
        experiments::SimConfig cfg;  // run_transport_convergence forces J=0, q=1
        experiments::ConvergenceReport rep = experiments::run_transport_convergence(cfg);
        const auto& r = rep.rows;
        bool decreasing = true;
        for (size_t i = 1; i < r.size(); ++i)
            decreasing &= r[i].err_l2_spacetime < r[i - 1].err_l2_spacetime;
        double e04 = r.front().err_l2_spacetime, e01 = r.back().err_l2_spacetime;
        ok &= decreasing && e01 <= 0.5 * e04 && rep.ref_self_error <= 0.2 * e01;
        d << "err " << e04 << " -> " << e01 << " (ratio " << e01 / e04 << "), self-err "
          << rep.ref_self_error;
    } catch (const std::exception& e) {
        ok = false;
        d << "exception: " << e.what();
    }
    double el = now_minus(t0);
    ok &= el <= 900.0;
    d << ", " << el << "s";
    gate.report(5, "transport concentration limit", ok, d.str());
}

// ---------------------------------------------------------------- criterion 6

void criterion_convdiff(Gate& gate) {
    auto t0 = std::chrono::steady_clock::now();
    std::ostringstream d;
    bool ok = true;
    try {
        for (double q : {1.0, 2.0}) {
            experiments::SimConfig cfg;  // default config: Gaussian J + convection
            cfg.q = q;
            experiments::ConvergenceReport rep = experiments::run_convdiff_convergence(cfg);
            const auto& r = rep.rows;
            bool decreasing = true;
            for (size_t i = 1; i < r.size(); ++i)
                decreasing &= r[i].err_l2_spacetime < r[i - 1].err_l2_spacetime;
            double e04 = r.front().err_l2_spacetime, e01 = r.back().err_l2_spacetime;
            ok &= decreasing && e01 <= 0.5 * e04;
            d << "q=" << q << " err " << e04 << " -> " << e01 << " (ratio " << e01 / e04
              << "); ";
        }
        // pure-diffusion sub-case: pointwise operator limit at the bump
        // center, evaluated by fiber quadrature on the analytic initial datum
        // (free of grid interpolation error)
        experiments::SimConfig cfg;
        kernels::RadialKernel J = cfg.make_J();
        double A = kernels::moment_AJ(J, cfg.N);
        auto quad = cfg.make_quadrature();
        auto u0 = [&](const Point& p) {
            Point b = geom::to_model(p, Model::Ball);
            return field::eval_bump(cfg.initial, cfg.N, b.x);
        };
        Point c{Model::Ball, cfg.N, cfg.initial.center};
        double fd = 1e-4, lam = geom::lambda_ball(c);
        double lap = 0;  // conformal chart, gradient of lambda vanishes at 0
        for (int k = 0; k < cfg.N; ++k) {
            Point pp = c, pm = c;
            pp.x[k] += fd;
            pm.x[k] -= fd;
            lap += (u0(pp) + u0(pm) - 2.0 * u0(c)) / (fd * fd);
        }
        lap /= lam * lam;
        double prev = std::numeric_limits<double>::infinity();
        bool monotone = true;
        for (double eps : cfg.epsilons) {
            double val = nonlocal::apply_LJ_eps_at(u0, J, eps, quad, c);
            double gap = std::abs(val - A * lap);
            monotone &= gap < prev;
            prev = gap;
            d << "eps=" << eps << " |L_J u - A lap u| " << gap << "; ";
        }
        ok &= monotone;
    } catch (const std::exception& e) {
        ok = false;
        d << "exception: " << e.what();
    }
    double el = now_minus(t0);
    ok &= el <= 1800.0;
    d << el << "s";
    gate.report(6, "convection-diffusion concentration limit", ok, d.str());
}

// ---------------------------------------------------------------- criterion 7

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_determinism(Gate& gate, const fs::path& bindir) {
    auto t0 = std::chrono::steady_clock::now();
    std::ostringstream d;
    bool ok = true;

    fs::path work = fs::temp_directory_path() / "hyperflow_acceptance_det";
    fs::remove_all(work);
    fs::create_directories(work);
    {
        std::ofstream cfg(work / "config.json");
        cfg << "{\"r_max\": 0.6, \"h\": 0.03, \"T\": 0.04, \"save_every\": 0.02,\n"
               " \"K_radius\": 0.3, \"epsilons\": [0.3, 0.15], \"q\": 2,\n"
               " \"initial\": {\"center\": [0, 0], \"width\": 0.12, \"amplitude\": 1.0},\n"
               " \"J\": {\"shape\": \"gaussian\", \"param\": 0.3},\n"
               " \"n_r\": 8, \"n_theta\": 16, \"seed\": 7}\n";
    }
    fs::path cli = bindir / "hyperflow";
    std::vector<std::string> outs;
    for (int threads : {1, 4}) {
        fs::path out = work / ("out_t" + std::to_string(threads));
        std::string cmd = "\"" + cli.string() + "\" --threads " + std::to_string(threads) +
                          " converge --config \"" + (work / "config.json").string() +
                          "\" --out \"" + out.string() + "\" > /dev/null";
        int rc = std::system(cmd.c_str());
        if (rc != 0) {
            ok = false;
            d << "exit code " << rc << " at threads=" << threads << "; ";
        }
        outs.push_back(slurp(out / "report.csv"));
    }
    ok &= outs.size() == 2 && !outs[0].empty() && outs[0] == outs[1];
    d << (ok ? "report.csv byte-identical across thread counts" : "report.csv differs");
    fs::remove_all(work);
    d << ", " << now_minus(t0) << "s";
    gate.report(7, "determinism across worker threads", ok, d.str());
}

}  // namespace

int main(int, char** argv) {
    Gate gate;
    criterion_geometry(gate);
    criterion_kernels(gate);
    criterion_structure(gate);
    criterion_duality(gate);
    criterion_transport(gate);
    criterion_convdiff(gate);
    criterion_determinism(gate, fs::path(argv[0]).parent_path());
    if (gate.failures == 0)
        std::printf("acceptance: all 7 criteria passed\n");
    else
        std::printf("acceptance: %d criteria FAILED\n", gate.failures);
    return gate.failures;
}
