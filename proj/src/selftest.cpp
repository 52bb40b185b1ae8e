#include <cmath>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "hyperflow/experiments.hpp"
#include "hyperflow/quadrature.hpp"

namespace hyperflow::experiments {

using geom::Model;
using geom::Point;
using geom::TangentVector;
using geom::Vec;

namespace {

constexpr double pi = std::numbers::pi;

struct Suite {
    std::ostream& out;
    int failures = 0;

    void check(const std::string& name, bool ok, const std::string& detail) {
        if (ok) {
            out << "[ok]   " << name << "\n";
        } else {
            out << "[FAIL] " << name << ": " << detail << "\n";
            ++failures;
        }
    }
};

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

// determinant of d exp_x at W between orthonormal frames (conformal ball chart)
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

double hyperbolic_ball_volume(int N, double R) {
    // closed forms: |S^{N-1}| int_0^R sinh(r)^{N-1} dr
    if (N == 2) return 2.0 * pi * (std::cosh(R) - 1.0);
    return pi * (std::sinh(2.0 * R) - 2.0 * R);
}

}  // namespace

int run_selftest(uint64_t seed, std::ostream& out, bool corrupt_rho) {
    Suite S{out};
    std::mt19937_64 rng(seed);

    {  // exponential/logarithm round trip
        double worst = 0;
        for (int dim : {2, 3})
            for (int i = 0; i < 200; ++i) {
                Point x = rand_ball(rng, dim, 0.9);
                Point y = rand_ball(rng, dim, 0.9);
                Point z = geom::exp_map(geom::log_map(x, y));
                Vec d{};
                for (int k = 0; k < dim; ++k) d[k] = z.x[k] - y.x[k];
                worst = std::max(worst, geom::enorm(d, dim));
            }
        std::ostringstream msg;
        msg << "worst deviation " << worst;
        S.check("exp/log round trip", worst < 1e-9, msg.str());
    }

    {  // Cayley involution between the two models
        double worst = 0;
        for (int dim : {2, 3})
            for (int i = 0; i < 200; ++i) {
                Point x = rand_ball(rng, dim, 0.95);
                Point z = geom::cayley(geom::cayley(x));
                Vec d{};
                for (int k = 0; k < dim; ++k) d[k] = z.x[k] - x.x[k];
                worst = std::max(worst, geom::enorm(d, dim));
            }
        std::ostringstream msg;
        msg << "worst deviation " << worst;
        S.check("Cayley involution", worst < 1e-11, msg.str());
    }

    {  // polar volume density against closed-form ball volumes
        auto rho = [&](double r, int N) {
            // the corrupt variant mis-states the exponent and must be caught
            return std::pow(geom::sinhc(r), corrupt_rho ? N : N - 1);
        };
        double worst = 0;
        for (int N : {2, 3})
            for (double R : {0.5, 1.0, 2.0}) {
                quad::Rule1D gl = quad::gauss_legendre(64, 0.0, R);
                double vol = 0;
                for (size_t k = 0; k < gl.x.size(); ++k)
                    vol += gl.w[k] * std::pow(gl.x[k], N - 1) * rho(gl.x[k], N);
                vol *= quad::sphere_area(N);
                double exact = hyperbolic_ball_volume(N, R);
                worst = std::max(worst, std::abs(vol - exact) / exact);
            }
        std::ostringstream msg;
        msg << "worst relative deviation " << worst;
        S.check("polar volume density vs closed-form ball volume", worst < 1e-9, msg.str());
    }

    {  // finite-difference det(d exp) against the radial density
        double worst = 0;
        for (int dim : {2, 3})
            for (int i = 0; i < 40; ++i) {
                Point x = rand_ball(rng, dim, 0.6);
                Vec W = rand_fiber(rng, dim, 1.2);
                double r = geom::hyp_norm(TangentVector{x, W});
                double det = fd_det_exp(x, W, 1e-5);
                double rho = geom::jacobian_rho(r, dim);
                worst = std::max(worst, std::abs(det - rho) / rho);
            }
        std::ostringstream msg;
        msg << "worst relative deviation " << worst;
        S.check("det(d exp) matches radial density", worst < 1e-5, msg.str());
    }

    {  // shift Jacobian: closed forms and positivity bounds
        double s = 0.7;
        bool ok = std::abs(geom::shift_jacobian_cv(Vec{0.0, s, 0.0}, 2) - std::exp(s)) < 1e-12 &&
                  std::abs(geom::shift_jacobian_cv(Vec{s, 0.0, 0.0}, 2) - 1.0 / std::cosh(s)) <
                      1e-12;
        double worst_bound = 0;
        for (int dim : {2, 3})
            for (int i = 0; i < 2000; ++i) {
                Vec V = rand_fiber(rng, dim, 2.0);
                double nv = geom::enorm(V, dim);
                double cv = geom::shift_jacobian_cv(V, dim);
                if (!(cv > 0) || cv < std::exp(-nv) - 1e-12 || cv > std::exp(nv) + 1e-12)
                    worst_bound = std::max(worst_bound, 1.0);
            }
        S.check("shift Jacobian closed forms and bounds", ok && worst_bound == 0,
                "closed form or exp(-|V|) <= C_V <= exp(|V|) violated");
    }

    {  // convection kernel invariance along the geodesic flow
        kernels::ConvectionKernel K{kernels::g1_affine(1.0, {0.4, 0.2, 0.0}, 2),
                                    kernels::make_smooth_bump(1.0), 2};
        std::uniform_real_distribution<double> T(-3.0, 3.0);
        double worst = 0;
        for (int i = 0; i < 200; ++i) {
            Point x = rand_ball(rng, 2, 0.9);
            Vec W = rand_fiber(rng, 2, 0.8);
            TangentVector v{x, W};
            double g0 = kernels::eval_G_tilde(K, v);
            double gt = kernels::eval_G_tilde(K, geom::geodesic_flow(v, T(rng)));
            worst = std::max(worst, std::abs(gt - g0));
        }
        std::ostringstream msg;
        msg << "worst drift " << worst;
        S.check("kernel invariance along the geodesic flow", worst < 1e-9, msg.str());
    }

    {  // moment values and divergence detection
        double aj = kernels::moment_AJ(kernels::make_indicator(1.0), 2);
        bool value_ok = std::abs(aj - pi / 8.0) < 1e-9;
        bool caught = false;
        try {
            kernels::moment_Mtilde_of([](double r) { return std::exp(-r); }, 2);
        } catch (const kernels::MomentError&) {
            caught = true;
        }
        std::ostringstream msg;
        msg << "A_J(indicator) = " << aj << ", divergent tail "
            << (caught ? "caught" : "NOT caught");
        S.check("second moment value and tail divergence detection", value_ok && caught,
                msg.str());
    }

    {  // antisymmetric part of the convection kernel integrates to ~0
        kernels::ConvectionKernel K{kernels::g1_affine(1.0, {0.5, 0.0, 0.0}, 2),
                                    kernels::make_smooth_bump(1.0), 2};
        double worst = 0;
        for (double eps : {0.5, 0.25}) {
            Point y = rand_ball(rng, 2, 0.4);
            double scale = 1.0;
            double r = kernels::dissipativity_residual(K, y, eps, 1.0, 48, 64, &scale);
            worst = std::max(worst, std::abs(r) / scale);
        }
        std::ostringstream msg;
        msg << "worst relative residual " << worst;
        S.check("convection kernel dissipativity residual", worst < 1e-6, msg.str());
    }

    {  // interpolation error contracts at second order under grid refinement
        auto smooth = [](const Vec& x) {
            return std::cos(3.0 * x[0]) * std::sin(2.0 * x[1] + 0.3);
        };
        auto err_on = [&](double h) {
            auto g = field::Grid::create(2, 0.7, h);
            field::ScalarField f = field::ScalarField::zeros(g);
            for (size_t i = 0; i < g->n(); ++i) f.v[i] = smooth(g->coord[i]);
            double e = 0;
            std::mt19937_64 local(99);  // same probe points for both grids
            for (int i = 0; i < 400; ++i) {
                Point p = rand_ball(local, 2, 0.5);
                e = std::max(e, std::abs(field::sample(f, p) - smooth(p.x)));
            }
            return e;
        };
        double ratio = err_on(0.04) / err_on(0.02);
        std::ostringstream msg;
        msg << "coarse/fine error ratio " << ratio;
        S.check("grid interpolation refines at second order", ratio > 3.0 && ratio < 5.5,
                msg.str());
    }

    {  // assembled operators: exact structure on a small grid
        auto g = field::Grid::create(2, 0.5, 0.05);
        kernels::RadialKernel J = kernels::make_smooth_bump(1.0);
        kernels::ConvectionKernel K{kernels::g1_affine(1.0, {0.5, 0.0, 0.0}, 2),
                                    kernels::make_smooth_bump(1.0), 2};
        auto quad = nonlocal::FiberQuadrature::create(2, 8, 16, 1.0);
        nonlocal::AssembledOperators ops = nonlocal::assemble(g, quad, 0.3, &J, &K);

        std::vector<double> ones(g->n(), 1.0), outbuf(g->n());
        ops.apply_LJ(ones.data(), outbuf.data());
        double cj = 0;
        for (double v : outbuf) cj = std::max(cj, std::abs(v));
        ops.apply_LG(ones.data(), outbuf.data());
        double cg = 0;
        for (double v : outbuf) cg = std::max(cg, std::abs(v));

        field::ScalarField u = field::ScalarField::zeros(g), v = field::ScalarField::zeros(g);
        std::uniform_real_distribution<double> U(-1.0, 1.0);
        for (size_t i = 0; i < g->n(); ++i) {
            u.v[i] = U(rng);
            v.v[i] = U(rng);
        }
        std::vector<double> lg(g->n()), lga(g->n());
        ops.apply_LG(u.v.data(), lg.data());
        ops.apply_LG_adjoint(v.v.data(), lga.data());
        double lhs = 0, rhs = 0, scale = 0;
        for (size_t i = 0; i < g->n(); ++i) {
            lhs += g->w[i] * lg[i] * v.v[i];
            rhs += g->w[i] * u.v[i] * lga[i];
            scale += g->w[i] * (std::abs(lg[i] * v.v[i]) + std::abs(u.v[i] * lga[i]));
        }
        double dual = std::abs(lhs - rhs) / std::max(scale, 1e-300);

        std::vector<double> lj(g->n());
        ops.apply_LJ(u.v.data(), lj.data());
        double diss = 0;
        for (size_t i = 0; i < g->n(); ++i) diss += g->w[i] * lj[i] * u.v[i];

        std::ostringstream msg;
        msg << "constants " << std::max(cj, cg) << ", duality " << dual << ", (L_J u, u) "
            << diss;
        S.check("assembled operator structure (constants, duality, dissipation)",
                cj == 0.0 && cg == 0.0 && dual < 1e-12 && diss <= 1e-12, msg.str());
    }

    {  // characteristics: Killing field has zero divergence; flow inverts cleanly
        field::VectorFieldSampler X;
        X.dim = 2;
        X.fn = [](const Point& p) {
            Point h = geom::to_model(p, Model::HalfSpace);
            TangentVector w{h, {}};
            for (int d = 0; d < 2; ++d) w.fiber[d] = h.x[d];
            return geom::to_model(w, Model::Ball);
        };
        double worst_div = 0, worst_inv = 0;
        for (int i = 0; i < 50; ++i) {
            Point p = rand_ball(rng, 2, 0.8);
            worst_div = std::max(worst_div, std::abs(localref::div_X(X, p)));
            auto fwd = localref::flow_X(X, p, 0.4, 0.005);
            auto back = localref::flow_X(X, fwd.position, -0.4, 0.005);
            Vec d{};
            for (int k = 0; k < 2; ++k) d[k] = back.position.x[k] - p.x[k];
            worst_inv = std::max(worst_inv, geom::enorm(d, 2) + std::abs(back.log_density +
                                                                         fwd.log_density));
        }
        std::ostringstream msg;
        msg << "worst divergence " << worst_div << ", worst inversion error " << worst_inv;
        S.check("characteristic flow (Killing divergence, invertibility)",
                worst_div < 1e-6 && worst_inv < 1e-8, msg.str());
    }

    out << (S.failures == 0 ? "selftest: all suites passed\n"
                            : "selftest: FAILURES detected\n");
    return S.failures;
}

}  // namespace hyperflow::experiments
