#include "hyperflow/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace hyperflow::experiments {

namespace fs = std::filesystem;
using field::BumpSpec;
using field::Grid;
using field::ScalarField;
using field::Trajectory;
using field::VectorFieldSampler;
using geom::Model;
using geom::Point;
using geom::Vec;
using json = nlohmann::ordered_json;

namespace {

kernels::RadialKernel make_shape(const ShapeSpec& s) {
    if (s.shape == "indicator") return kernels::make_indicator(s.param);
    if (s.shape == "gaussian") return kernels::make_gaussian(s.param);
    if (s.shape == "smooth_bump") return kernels::make_smooth_bump(s.param);
    throw std::invalid_argument("unknown kernel shape: " + s.shape);
}

double wall_seconds(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt_eps(double eps) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", eps);
    return buf;
}

json cfg_to_json(const SimConfig& c) {
    json j;
    j["N"] = c.N;
    j["r_max"] = c.r_max;
    j["h"] = c.h;
    j["T"] = c.T;
    j["dt_user"] = c.dt_user;
    j["save_every"] = c.save_every;
    if (c.has_J)
        j["J"] = {{"shape", c.J.shape}, {"param", c.J.param}};
    else
        j["J"] = nullptr;
    if (c.has_G) {
        json a = json::array();
        for (int d = 0; d < c.N; ++d) a.push_back(c.g1.a[d]);
        j["G"] = {{"g1", {{"type", c.g1.type}, {"c", c.g1.c}, {"a", a}}},
                  {"xi", {{"shape", c.xi.shape}, {"param", c.xi.param}}}};
    } else {
        j["G"] = nullptr;
    }
    j["q"] = c.q;
    j["epsilons"] = c.epsilons;
    {
        json ctr = json::array();
        for (int d = 0; d < c.N; ++d) ctr.push_back(c.initial.center[d]);
        j["initial"] = {{"center", ctr}, {"width", c.initial.width},
                        {"amplitude", c.initial.amplitude}};
    }
    j["K_radius"] = c.K_radius;
    j["quadrature"] = {{"n_r", c.n_r}, {"n_theta", c.n_theta}, {"R_supp", c.R_supp}};
    j["seed"] = c.seed;
    j["dump_trajectories"] = c.dump_trajectories;
    return j;
}

SimConfig cfg_from_json(const json& j) {
    SimConfig c;
    c.N = j.value("N", c.N);
    c.r_max = j.value("r_max", c.r_max);
    c.h = j.value("h", c.h);
    c.T = j.value("T", c.T);
    c.dt_user = j.value("dt_user", c.dt_user);
    c.save_every = j.value("save_every", c.save_every);
    if (j.contains("J") && !j["J"].is_null()) {
        c.has_J = true;
        c.J.shape = j["J"].value("shape", c.J.shape);
        c.J.param = j["J"].value("param", c.J.param);
    } else if (j.contains("J")) {
        c.has_J = false;
    }
    if (j.contains("G") && !j["G"].is_null()) {
        c.has_G = true;
        const json& g = j["G"];
        if (g.contains("g1")) {
            c.g1.type = g["g1"].value("type", c.g1.type);
            c.g1.c = g["g1"].value("c", c.g1.c);
            if (g["g1"].contains("a")) {
                c.g1.a = {};
                for (size_t d = 0; d < g["g1"]["a"].size() && d < 3; ++d)
                    c.g1.a[d] = g["g1"]["a"][d].get<double>();
            }
        }
        if (g.contains("xi")) {
            c.xi.shape = g["xi"].value("shape", c.xi.shape);
            c.xi.param = g["xi"].value("param", c.xi.param);
        }
    } else if (j.contains("G")) {
        c.has_G = false;
    }
    c.q = j.value("q", c.q);
    if (j.contains("epsilons")) c.epsilons = j["epsilons"].get<std::vector<double>>();
    if (j.contains("initial")) {
        const json& in = j["initial"];
        if (in.contains("center")) {
            c.initial.center = {};
            for (size_t d = 0; d < in["center"].size() && d < 3; ++d)
                c.initial.center[d] = in["center"][d].get<double>();
        }
        c.initial.width = in.value("width", c.initial.width);
        c.initial.amplitude = in.value("amplitude", c.initial.amplitude);
    }
    c.K_radius = j.value("K_radius", c.K_radius);
    if (j.contains("quadrature")) {
        const json& qd = j["quadrature"];
        c.n_r = qd.value("n_r", c.n_r);
        c.n_theta = qd.value("n_theta", c.n_theta);
        c.R_supp = qd.value("R_supp", c.R_supp);
    }
    c.seed = j.value("seed", c.seed);
    c.dump_trajectories = j.value("dump_trajectories", c.dump_trajectories);
    return c;
}

VectorFieldSampler drift_field(const kernels::ConvectionKernel& K, int N, double r_max,
                               double cache_h) {
    VectorFieldSampler X;
    X.dim = N;
    X.fn = [K](const Point& p) { return kernels::first_moment_field(K, p); };
    X.build_cache(std::min(0.97, r_max + 0.1), cache_h);
    return X;
}

// restrict a fine-grid trajectory (spacing h/2, same r_max) to the coarse grid
Trajectory restrict_to(const Trajectory& fine, std::shared_ptr<const Grid> coarse) {
    Trajectory out;
    const Grid& gf = *fine.front().second.grid;
    for (const auto& [t, uf] : fine) {
        ScalarField uc = ScalarField::zeros(coarse);
        for (size_t i = 0; i < coarse->n(); ++i) {
            auto k = coarse->node_k[i];
            int ki = 2 * k[0], kj = 2 * k[1], kk = 2 * k[2];
            if (std::abs(ki) > gf.m || std::abs(kj) > gf.m || std::abs(kk) > gf.m) continue;
            int32_t id = gf.node_id[gf.box_index(ki, kj, kk)];
            if (id >= 0) uc.v[i] = uf.v[id];
        }
        out.push_back({t, uc});
    }
    return out;
}

void fill_row_from_monitors(ReportRow& row, const nonlocal::EvolutionMonitors& m) {
    if (m.rows.empty()) return;
    double mass0 = m.rows.front().mass, linf0 = m.rows.front().linf;
    for (const auto& r : m.rows) {
        row.mass_drift = std::max(row.mass_drift, std::abs(r.mass - mass0));
        row.linf_excess = std::max(row.linf_excess, r.linf - linf0);
    }
    row.linf_excess = std::max(row.linf_excess, 0.0);
}

void fill_ratios(ConvergenceReport& rep) {
    rep.ratios.clear();
    for (size_t i = 1; i < rep.rows.size(); ++i) {
        double prev = rep.rows[i - 1].err_l2_spacetime;
        rep.ratios.push_back(prev > 0 ? rep.rows[i].err_l2_spacetime / prev : 0.0);
    }
}

}  // namespace

SimConfig SimConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read config " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

SimConfig SimConfig::from_json_text(const std::string& text) {
    return cfg_from_json(json::parse(text));
}

std::string SimConfig::to_json_text() const { return cfg_to_json(*this).dump(2) + "\n"; }

kernels::RadialKernel SimConfig::make_J() const {
    if (!has_J) throw std::logic_error("config has no J kernel");
    return make_shape(J);
}

kernels::ConvectionKernel SimConfig::make_G() const {
    if (!has_G) throw std::logic_error("config has no G kernel");
    kernels::G1 g = g1.type == "constant" ? kernels::g1_constant(g1.c, N)
                                          : kernels::g1_affine(g1.c, g1.a, N);
    if (g1.type != "constant" && g1.type != "affine_boundary")
        throw std::invalid_argument("unknown g1 type: " + g1.type);
    return kernels::ConvectionKernel{g, make_shape(xi), N};
}

double SimConfig::quad_R() const {
    if (R_supp > 0) return R_supp;
    double R = 0;
    if (has_J) R = std::max(R, kernels::effective_support(make_shape(J), N));
    if (has_G) R = std::max(R, kernels::effective_support(make_shape(xi), N));
    if (R <= 0) R = 1.0;
    return R;
}

nonlocal::FiberQuadrature SimConfig::make_quadrature() const {
    return nonlocal::FiberQuadrature::create(N, n_r, n_theta, quad_R());
}

void SimConfig::validate() const {
    if (N < 2 || N > 3) throw std::invalid_argument("N must be 2 or 3");
    if (!(r_max > 0 && r_max < 1)) throw std::invalid_argument("r_max must lie in (0,1)");
    if (!(h > 0 && h < r_max)) throw std::invalid_argument("bad grid spacing h");
    if (T < 0) throw std::invalid_argument("T must be non-negative");
    if (!(K_radius > 0 && K_radius < r_max))
        throw std::invalid_argument("K_radius must lie in (0, r_max)");
    if (epsilons.empty()) throw std::invalid_argument("epsilon list is empty");
    for (size_t i = 0; i < epsilons.size(); ++i) {
        if (!(epsilons[i] > 0 && epsilons[i] <= 1))
            throw std::invalid_argument("epsilons must lie in (0, 1]");
        if (i > 0 && !(epsilons[i] < epsilons[i - 1]))
            throw std::invalid_argument("epsilons must be strictly decreasing");
    }
    if (q < 1) throw std::invalid_argument("nonlinearity exponent q must be >= 1");
    if (geom::enorm(initial.center, N) + initial.width > r_max + 1e-12)
        throw std::invalid_argument("initial bump support exceeds r_max");
    if (n_r < 2 || n_theta < 2) throw std::invalid_argument("bad quadrature resolution");
    // moment validators: every required moment must be finite (MomentError
    // otherwise, naming the divergent integral)
    if (has_J) {
        kernels::RadialKernel Jk = make_J();
        kernels::moment_AJ(Jk, N);
        kernels::moment_Mtilde_J(Jk, N);
    }
    if (has_G) kernels::moment_MG(make_G(), N);
}

ConvergenceReport run_transport_convergence(const SimConfig& cfg_in) {
    SimConfig cfg = cfg_in;
    cfg.has_J = false;  // pure convection limit
    cfg.q = 1;
    cfg.validate();
    if (!cfg.has_G) throw std::invalid_argument("transport experiment requires a G kernel");

    ConvergenceReport rep;
    rep.cfg = cfg;
    rep.mode = "transport";

    auto grid = Grid::create(cfg.N, cfg.r_max, cfg.h);
    ScalarField u0 = field::make_initial(cfg.initial, grid);
    kernels::ConvectionKernel K = cfg.make_G();
    nonlocal::FiberQuadrature quad = cfg.make_quadrature();
    kernels::Nonlinearity f{1.0};
    std::vector<double> times = nonlocal::snapshot_times(cfg.T, cfg.save_every);

    auto u0fn = [&](const Point& p) {
        Point b = geom::to_model(p, Model::Ball);
        return field::eval_bump(cfg.initial, cfg.N, b.x);
    };
    auto make_reference = [&](double cache_h, double flow_dt) {
        VectorFieldSampler X = drift_field(K, cfg.N, cfg.r_max, cache_h);
        Trajectory ref;
        for (double t : times)
            ref.push_back({t, localref::transport_exact_fn(u0fn, grid, X, t, flow_dt)});
        return ref;
    };
    Trajectory ref = make_reference(cfg.h / 2, 0.005);
    Trajectory ref2 = make_reference(cfg.h / 4, 0.0025);
    rep.ref_self_error = field::spacetime_l2_error(ref, ref2, cfg.K_radius);
    rep.reference_info = "transport_exact along first_moment_field (cache h/2, RK4 dt 5e-3); "
                         "self-error from one cache/step refinement";

    for (double eps : cfg.epsilons) {
        auto t0 = std::chrono::steady_clock::now();
        nonlocal::AssembledOperators ops = nonlocal::assemble(grid, quad, eps, nullptr, &K);
        nonlocal::EvolveResult r = nonlocal::evolve_nonlocal(u0, ops, f, cfg.T,
                                                             nonlocal::Scheme::RK2, cfg.dt_user,
                                                             cfg.save_every);
        ReportRow row;
        row.eps = eps;
        row.err_l2_spacetime = field::spacetime_l2_error(r.traj, ref, cfg.K_radius);
        row.err_l2_final = field::l2_error_at(r.traj.back().second, ref.back().second,
                                              cfg.K_radius);
        fill_row_from_monitors(row, r.monitors);
        rep.rows.push_back(row);
        rep.monitors.push_back(std::move(r.monitors));
        rep.wall_times.push_back(wall_seconds(t0));
        if (cfg.dump_trajectories) rep.trajectories.push_back(std::move(r.traj));
    }
    fill_ratios(rep);
    return rep;
}

ConvergenceReport run_convdiff_convergence(const SimConfig& cfg) {
    cfg.validate();
    if (!cfg.has_J) throw std::invalid_argument("convdiff experiment requires a J kernel");

    ConvergenceReport rep;
    rep.cfg = cfg;
    rep.mode = "convdiff";

    auto grid = Grid::create(cfg.N, cfg.r_max, cfg.h);
    ScalarField u0 = field::make_initial(cfg.initial, grid);
    kernels::RadialKernel Jk = cfg.make_J();
    double A = kernels::moment_AJ(Jk, cfg.N);
    kernels::ConvectionKernel K{};
    if (cfg.has_G) K = cfg.make_G();
    nonlocal::FiberQuadrature quad = cfg.make_quadrature();
    kernels::Nonlinearity f{cfg.q};

    auto make_reference = [&](double href) {
        auto gf = Grid::create(cfg.N, cfg.r_max, href);
        ScalarField u0f = field::make_initial(cfg.initial, gf);
        VectorFieldSampler X;
        if (cfg.has_G) X = drift_field(K, cfg.N, cfg.r_max, href);
        return localref::evolve_local_convdiff(u0f, A, cfg.has_G ? &X : nullptr, f, cfg.T,
                                               cfg.save_every);
    };
    Trajectory ref = restrict_to(make_reference(cfg.h / 2), grid);
    {
        auto gmid = Grid::create(cfg.N, cfg.r_max, cfg.h / 2);
        Trajectory ref2 = restrict_to(restrict_to(make_reference(cfg.h / 4), gmid), grid);
        rep.ref_self_error = field::spacetime_l2_error(ref, ref2, cfg.K_radius);
    }
    rep.reference_info = "local convection-diffusion FD reference at h/2 (A = moment_AJ, "
                         "X = first_moment_field); self-error from one h refinement";

    for (double eps : cfg.epsilons) {
        auto t0 = std::chrono::steady_clock::now();
        nonlocal::AssembledOperators ops =
            nonlocal::assemble(grid, quad, eps, &Jk, cfg.has_G ? &K : nullptr);
        nonlocal::EvolveResult r = nonlocal::evolve_nonlocal(u0, ops, f, cfg.T,
                                                             nonlocal::Scheme::RK2, cfg.dt_user,
                                                             cfg.save_every);
        ReportRow row;
        row.eps = eps;
        row.err_l2_spacetime = field::spacetime_l2_error(r.traj, ref, cfg.K_radius);
        row.err_l2_final = field::l2_error_at(r.traj.back().second, ref.back().second,
                                              cfg.K_radius);
        fill_row_from_monitors(row, r.monitors);
        rep.rows.push_back(row);
        rep.monitors.push_back(std::move(r.monitors));
        rep.wall_times.push_back(wall_seconds(t0));
        if (cfg.dump_trajectories) rep.trajectories.push_back(std::move(r.traj));
    }
    fill_ratios(rep);
    return rep;
}

ConvergenceReport run_simulate(const SimConfig& cfg) {
    cfg.validate();
    ConvergenceReport rep;
    rep.cfg = cfg;
    rep.mode = "simulate";
    rep.reference_info = "none (plain evolution with monitors)";

    auto grid = Grid::create(cfg.N, cfg.r_max, cfg.h);
    ScalarField u0 = field::make_initial(cfg.initial, grid);
    kernels::RadialKernel Jk{};
    kernels::ConvectionKernel K{};
    if (cfg.has_J) Jk = cfg.make_J();
    if (cfg.has_G) K = cfg.make_G();
    nonlocal::FiberQuadrature quad = cfg.make_quadrature();
    kernels::Nonlinearity f{cfg.q};

    for (double eps : cfg.epsilons) {
        auto t0 = std::chrono::steady_clock::now();
        nonlocal::AssembledOperators ops = nonlocal::assemble(
            grid, quad, eps, cfg.has_J ? &Jk : nullptr, cfg.has_G ? &K : nullptr);
        nonlocal::EvolveResult r = nonlocal::evolve_nonlocal(u0, ops, f, cfg.T,
                                                             nonlocal::Scheme::RK2, cfg.dt_user,
                                                             cfg.save_every);
        ReportRow row;
        row.eps = eps;
        fill_row_from_monitors(row, r.monitors);
        rep.rows.push_back(row);
        rep.monitors.push_back(std::move(r.monitors));
        rep.wall_times.push_back(wall_seconds(t0));
        if (cfg.dump_trajectories) rep.trajectories.push_back(std::move(r.traj));
    }
    fill_ratios(rep);
    return rep;
}

std::string report_to_json_text(const ConvergenceReport& rep) {
    json j;
    j["mode"] = rep.mode;
    j["config"] = cfg_to_json(rep.cfg);
    j["reference"] = {{"info", rep.reference_info}, {"self_error", rep.ref_self_error}};
    json rows = json::array();
    for (const auto& r : rep.rows)
        rows.push_back({{"eps", r.eps},
                        {"err_l2_spacetime", r.err_l2_spacetime},
                        {"err_l2_final", r.err_l2_final},
                        {"mass_drift", r.mass_drift},
                        {"linf_excess", r.linf_excess},
                        {"runtime_sec", r.runtime_sec}});
    j["rows"] = rows;
    j["ratios"] = rep.ratios;
    return j.dump(2) + "\n";
}

ConvergenceReport report_from_json_text(const std::string& text) {
    json j = json::parse(text);
    ConvergenceReport rep;
    rep.mode = j.value("mode", "");
    rep.cfg = cfg_from_json(j.at("config"));
    rep.reference_info = j.at("reference").value("info", "");
    rep.ref_self_error = j.at("reference").value("self_error", 0.0);
    for (const auto& r : j.at("rows")) {
        ReportRow row;
        row.eps = r.value("eps", 0.0);
        row.err_l2_spacetime = r.value("err_l2_spacetime", 0.0);
        row.err_l2_final = r.value("err_l2_final", 0.0);
        row.mass_drift = r.value("mass_drift", 0.0);
        row.linf_excess = r.value("linf_excess", 0.0);
        row.runtime_sec = r.value("runtime_sec", 0.0);
        rep.rows.push_back(row);
    }
    if (j.contains("ratios")) rep.ratios = j["ratios"].get<std::vector<double>>();
    return rep;
}

void emit_report(const ConvergenceReport& rep, const std::string& dir) {
    fs::create_directories(dir);
    {
        std::ofstream csv(fs::path(dir) / "report.csv");
        if (!csv) throw std::runtime_error("cannot write report.csv in " + dir);
        csv << "eps,err_l2_spacetime,err_l2_final,mass_drift,linf_excess,runtime_sec\n";
        char buf[256];
        for (const auto& r : rep.rows) {
            std::snprintf(buf, sizeof buf, "%.12e,%.12e,%.12e,%.12e,%.12e,%.12e\n", r.eps,
                          r.err_l2_spacetime, r.err_l2_final, r.mass_drift, r.linf_excess,
                          r.runtime_sec);
            csv << buf;
        }
    }
    {
        std::ofstream js(fs::path(dir) / "report.json");
        if (!js) throw std::runtime_error("cannot write report.json in " + dir);
        js << report_to_json_text(rep);
    }
    for (size_t i = 0; i < rep.monitors.size() && i < rep.rows.size(); ++i)
        nonlocal::save_monitors(rep.monitors[i], (fs::path(dir) / ("monitors_eps_" +
                                                 fmt_eps(rep.rows[i].eps) + ".csv")).string());
    {
        // real wall-clock times; excluded from the byte-stability contract
        std::ofstream tm(fs::path(dir) / "timings.csv");
        tm << "eps,wall_sec\n";
        char buf[96];
        for (size_t i = 0; i < rep.wall_times.size() && i < rep.rows.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%s,%.6f\n", fmt_eps(rep.rows[i].eps).c_str(),
                          rep.wall_times[i]);
            tm << buf;
        }
    }
    for (size_t i = 0; i < rep.trajectories.size() && i < rep.rows.size(); ++i)
        field::save_trajectory(rep.trajectories[i], dir,
                               "traj_eps_" + fmt_eps(rep.rows[i].eps));
}

}  // namespace hyperflow::experiments
