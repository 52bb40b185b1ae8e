#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <numbers>
#include <random>

#include "hyperflow/kernels.hpp"
#include "hyperflow/quadrature.hpp"

using namespace hyperflow;
using namespace hyperflow::kernels;
using geom::Model;
using geom::Point;
using geom::TangentVector;
using geom::Vec;

namespace {

std::mt19937 rng(777);

Point rand_ball(int dim, double rmax = 0.7) {
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Point p{Model::Ball, dim, {}};
    for (;;) {
        for (int d = 0; d < dim; ++d) p.x[d] = U(rng);
        if (geom::dot(p.x, p.x, dim) < rmax * rmax) return p;
    }
}

constexpr double pi = std::numbers::pi;

}  // namespace

TEST_CASE("gauss-legendre rule integrates polynomials exactly") {
    auto r = quad::gauss_legendre(16, 0.0, 2.0);
    double s31 = 0, s0 = 0;
    for (int i = 0; i < 16; ++i) {
        s31 += r.w[i] * std::pow(r.x[i], 31);
        s0 += r.w[i];
    }
    CHECK(std::abs(s0 - 2.0) < 1e-14);
    CHECK(std::abs(s31 - std::pow(2.0, 32) / 32.0) < 1e-9 * std::pow(2.0, 32) / 32.0);
}

TEST_CASE("sphere rules have correct total weight and moments") {
    for (int dim : {2, 3}) {
        auto s = quad::sphere_rule(dim, 32);
        double tot = 0;
        Vec mean{};
        for (size_t k = 0; k < s.w.size(); ++k) {
            tot += s.w[k];
            for (int d = 0; d < dim; ++d) mean[d] += s.w[k] * s.dir[k][d];
            CHECK(std::abs(geom::enorm(s.dir[k], dim) - 1.0) < 1e-14);
        }
        CHECK(std::abs(tot - quad::sphere_area(dim)) < 1e-12);
        for (int d = 0; d < dim; ++d) CHECK(std::abs(mean[d]) < 1e-13);
    }
}

TEST_CASE("radial kernel shapes") {
    auto ind = make_indicator(1.0);
    CHECK(ind(0.5) == 1.0);
    CHECK(ind(1.5) == 0.0);
    auto g = make_gaussian(2.0);
    CHECK(g(0.0) == 1.0);
    CHECK(std::abs(g(2.0) - std::exp(-1.0)) < 1e-15);
    auto b = make_smooth_bump(1.0);
    CHECK(b(0.0) == 1.0);
    CHECK(b(1.0) == 0.0);
    CHECK(b(0.999999) < 1e-10);
    CHECK_THROWS_AS(make_indicator(-1.0), std::invalid_argument);
}

TEST_CASE("eval_J_eps rescaling") {
    auto J = make_indicator(1.0);
    CHECK(eval_J_eps(J, 0.3, 1.0, 2) == J(0.3));
    CHECK(std::abs(eval_J_eps(J, 0.25, 0.5, 2) - 16.0) < 1e-12);
    CHECK(eval_J_eps(J, 0.51, 0.5, 2) == 0.0);
    CHECK_THROWS_AS(eval_J_eps(J, 0.1, 0.0, 2), std::invalid_argument);
    // homogeneity J_eps(eps r) = eps^{-N-2} J(r)
    auto G = make_gaussian(1.0);
    for (double r : {0.1, 0.7, 2.0})
        CHECK(std::abs(eval_J_eps(G, 0.25 * r, 0.25, 3) -
                       std::pow(0.25, -5) * G(r)) < 1e-9 * std::pow(0.25, -5));
}

TEST_CASE("g1 construction and sup") {
    CHECK_THROWS_AS(g1_affine(1.0, Vec{1.5, 0.0, 0.0}, 2), std::invalid_argument);
    CHECK_THROWS_AS(g1_constant(-1.0, 2), std::invalid_argument);
    auto g = g1_affine(1.0, Vec{0.5, 0.0, 0.0}, 2);
    CHECK(std::abs(g.sup() - 1.5) < 1e-15);
    CHECK(std::abs(g1_constant(2.0, 2).sup() - 2.0) < 1e-15);
}

TEST_CASE("eval_G_tilde separated form and flow invariance") {
    ConvectionKernel Kc{g1_constant(0.8, 2), make_gaussian(1.0), 2};
    Point x = rand_ball(2);
    TangentVector w{x, {0.1, 0.05, 0.0}};
    double n = geom::hyp_norm(w);
    CHECK(std::abs(eval_G_tilde(Kc, w) - 0.8 * Kc.xi(n)) < 1e-12);
    CHECK(eval_G_tilde(Kc, TangentVector{x, {}}) == 0.0);

    ConvectionKernel Ka{g1_affine(1.0, Vec{0.5, 0.0, 0.0}, 2), make_gaussian(1.0), 2};
    // doubling w keeps the g1 factor, changes only xi
    TangentVector w2 = w;
    for (int d = 0; d < 2; ++d) w2.fiber[d] *= 2.0;
    double r1 = eval_G_tilde(Ka, w) / Ka.xi(geom::hyp_norm(w));
    double r2 = eval_G_tilde(Ka, w2) / Ka.xi(geom::hyp_norm(w2));
    CHECK(std::abs(r1 - r2) < 1e-11);

    std::uniform_real_distribution<double> T(-3.0, 3.0), S(0.3, 2.0), U(-1.0, 1.0);
    for (int dim : {2, 3}) {
        ConvectionKernel K{g1_affine(1.0, Vec{0.3, dim == 3 ? 0.2 : 0.0, 0.1}, dim),
                           make_gaussian(1.0), dim};
        for (int k = 0; k < 1000; ++k) {
            Point p = rand_ball(dim);
            TangentVector v{p, {}};
            for (int d = 0; d < dim; ++d) v.fiber[d] = U(rng);
            double nv = geom::hyp_norm(v);
            if (nv < 1e-6) continue;
            double sp = S(rng);
            for (int d = 0; d < dim; ++d) v.fiber[d] *= sp / nv;
            double g0 = eval_G_tilde(K, v);
            double gt = eval_G_tilde(K, geom::geodesic_flow(v, T(rng)));
            CHECK(std::abs(gt - g0) <= 1e-9 * (1.0 + g0));
        }
    }
}

TEST_CASE("eval_G_eps definition and model independence") {
    ConvectionKernel Kc{g1_constant(1.0, 2), make_gaussian(1.0), 2};
    for (int k = 0; k < 50; ++k) {
        Point x = rand_ball(2), y = rand_ball(2);
        double d = geom::distance(x, y);
        if (d < 1e-3) continue;
        double eps = 0.5;
        double v = eval_G_eps(Kc, x, y, eps, 2);
        CHECK(std::abs(v - std::pow(eps, -3) * Kc.xi(d / eps)) < 1e-9 * (1.0 + v));
        // half-space evaluation agrees
        ConvectionKernel Ka{g1_affine(1.0, Vec{0.5, 0.2, 0.0}, 2), make_gaussian(1.0), 2};
        double b = eval_G_eps(Ka, x, y, eps, 2);
        double h = eval_G_eps(Ka, geom::cayley(x), geom::cayley(y), eps, 2);
        CHECK(std::abs(b - h) < 1e-10 * (1.0 + b));
    }
    CHECK_THROWS_AS(eval_G_eps(Kc, Point{Model::Ball, 2, {0.1, 0.0}},
                               Point{Model::Ball, 2, {0.1, 0.0}}, 1.0, 2),
                    std::domain_error);
}

TEST_CASE("moment_AJ closed forms") {
    CHECK(std::abs(moment_AJ(make_indicator(1.0), 2) - pi / 8.0) < 1e-12);
    CHECK(std::abs(moment_AJ(make_gaussian(1.0), 2) - pi / 4.0) < 1e-11);
    // N=3 indicator: (4pi/6) * 1/5
    CHECK(std::abs(moment_AJ(make_indicator(1.0), 3) - 4.0 * pi / 30.0) < 1e-12);
}

TEST_CASE("moment_Mtilde closed form and divergence detection") {
    // 2*pi * int_0^1 (1+r^2) e^r sinh r dr = pi*(3(e^2-1)/4 - 4/3)
    double e2 = std::exp(2.0);
    double expect = pi * (3.0 * (e2 - 1.0) / 4.0 - 4.0 / 3.0);
    CHECK(std::abs(moment_Mtilde_J(make_indicator(1.0), 2) - expect) < 1e-10 * expect);
    CHECK_THROWS_AS(moment_Mtilde_of([](double r) { return std::exp(-r); }, 2), MomentError);
    CHECK(moment_Mtilde_J(make_gaussian(1.0), 2) > 0.0);
}

TEST_CASE("moment_MG closed form and affine scaling") {
    // 2*pi * int_0^1 (1+r) e^r sinh r dr = pi*((3e^2-1)/4 - 3/2)
    double e2 = std::exp(2.0);
    double expect = pi * ((3.0 * e2 - 1.0) / 4.0 - 1.5);
    ConvectionKernel Kc{g1_constant(1.0, 2), make_indicator(1.0), 2};
    CHECK(std::abs(moment_MG(Kc, 2) - expect) < 1e-10 * expect);
    ConvectionKernel Ka{g1_affine(1.0, Vec{0.5, 0.0, 0.0}, 2), make_indicator(1.0), 2};
    CHECK(std::abs(moment_MG(Ka, 2) - 1.5 * expect) < 1e-10 * expect);
}

TEST_CASE("first moment field: constant kernel vanishes, bound holds") {
    ConvectionKernel Kc{g1_constant(1.0, 2), make_gaussian(1.0), 2};
    for (int k = 0; k < 5; ++k) {
        Point x = rand_ball(2);
        TangentVector X = first_moment_field(Kc, x);
        CHECK(geom::hyp_norm(X) < 1e-12);
    }
    for (int dim : {2, 3}) {
        ConvectionKernel Ka{g1_affine(1.0, Vec{0.5, dim == 3 ? 0.3 : 0.0, 0.1}, dim),
                            make_gaussian(1.0), dim};
        double M = moment_MG(Ka, dim);
        for (int k = 0; k < 10; ++k) {
            Point x = rand_ball(dim);
            CHECK(geom::hyp_norm(first_moment_field(Ka, x)) <= M * (1.0 + 1e-12));
        }
    }
}

TEST_CASE("first moment field matches brute-force Cartesian fiber quadrature") {
    ConvectionKernel Ka{g1_affine(1.0, Vec{0.5, 0.0, 0.0}, 2), make_gaussian(1.0), 2};
    double M = moment_MG(Ka, 2);
    for (int k = 0; k < 5; ++k) {
        Point x = k == 0 ? Point{Model::Ball, 2, {}} : rand_ball(2, 0.5);
        TangentVector X = first_moment_field(Ka, x);
        double cf = geom::lambda_ball(x);
        // midpoint rule over the orthonormal-coordinate fiber plane
        double hW = 0.025, R = 8.0;
        int m = int(R / hW);
        Vec acc{};
        for (int i = -m; i < m; ++i) {
            for (int j = -m; j < m; ++j) {
                Vec W{(i + 0.5) * hW, (j + 0.5) * hW, 0.0};
                double r = geom::enorm(W, 2);
                if (r > R) continue;
                TangentVector w{x, {W[0] / cf, W[1] / cf, 0.0}};
                double g = eval_G_tilde(Ka, w);
                acc[0] -= g * W[0] * hW * hW;
                acc[1] -= g * W[1] * hW * hW;
            }
        }
        CHECK(std::abs(X.fiber[0] * cf - acc[0]) < 1e-6 * M);
        CHECK(std::abs(X.fiber[1] * cf - acc[1]) < 1e-6 * M);
    }
}

TEST_CASE("dissipativity residual") {
    double R = 14.0;  // gaussian xi at eps<=1: tail mass beyond R/eps < 1e-10
    ConvectionKernel Kc{g1_constant(1.0, 2), make_gaussian(1.0), 2};
    double scale = 0;
    double r0 = dissipativity_residual(Kc, Point{Model::Ball, 2, {}}, 0.5, R, 48, 64, &scale);
    CHECK(scale > 0);
    CHECK(std::abs(r0) < 1e-10 * scale);
    ConvectionKernel Ka{g1_affine(1.0, Vec{0.5, 0.0, 0.0}, 2), make_gaussian(1.0), 2};
    for (double eps : {1.0, 0.5, 0.1}) {
        for (int k = 0; k < 5; ++k) {
            Point y = rand_ball(2, 0.5);
            double s = 0;
            double r = dissipativity_residual(Ka, y, eps, R, 48, 64, &s);
            CHECK(std::abs(r) <= 1e-6 * s);
            // refinement stability
            double s2 = 0;
            double r2 = dissipativity_residual(Ka, y, eps, R, 96, 128, &s2);
            CHECK(std::abs(r - r2) <= 1e-6 * s);
        }
    }
}

TEST_CASE("effective support") {
    CHECK(effective_support(make_indicator(0.7), 2) == 0.7);
    CHECK(effective_support(make_smooth_bump(1.3), 2) == 1.3);
    double R = effective_support(make_gaussian(1.0), 2);
    CHECK(R > 3.0);
    auto g = make_gaussian(1.0);
    CHECK(g(R) * (1.0 + R * R) * std::exp(R) * std::sinh(R) < 1e-11);
}
