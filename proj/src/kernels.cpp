#include "hyperflow/kernels.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>

#include "hyperflow/quadrature.hpp"

namespace hyperflow::kernels {

using geom::Point;
using geom::TangentVector;
using geom::Vec;

double RadialKernel::operator()(double r) const {
    if (r < 0) r = -r;
    switch (shape) {
        case Shape::Indicator:
            return r <= param ? 1.0 : 0.0;
        case Shape::Gaussian: {
            double t = r / param;
            return std::exp(-t * t);
        }
        case Shape::SmoothBump: {
            double t = r / param;
            if (t >= 1.0) return 0.0;
            return std::exp(1.0 - 1.0 / (1.0 - t * t));
        }
    }
    return 0.0;
}

static void check_radius(double p) {
    if (!(p > 0)) throw std::invalid_argument("radial kernel parameter must be positive");
}

RadialKernel make_indicator(double R) {
    check_radius(R);
    return {RadialKernel::Shape::Indicator, R};
}
RadialKernel make_gaussian(double s) {
    check_radius(s);
    return {RadialKernel::Shape::Gaussian, s};
}
RadialKernel make_smooth_bump(double R) {
    check_radius(R);
    return {RadialKernel::Shape::SmoothBump, R};
}

double G1::operator()(const geom::BoundaryPoint& sm, const geom::BoundaryPoint& sp) const {
    (void)sm;
    if (type == Type::Constant) return c;
    return c + geom::dot(a, sp.dir, dim);
}

double G1::sup() const {
    if (type == Type::Constant) return c;
    return c + geom::enorm(a, dim);
}

G1 g1_constant(double c, int dim) {
    if (c < 0) throw std::invalid_argument("g1 constant must be >= 0");
    return {G1::Type::Constant, c, {}, dim};
}

G1 g1_affine(double c, const Vec& a, int dim) {
    if (c < 0 || geom::enorm(a, dim) > c)
        throw std::invalid_argument("affine g1 requires |a| <= c for non-negativity");
    return {G1::Type::AffineBoundary, c, a, dim};
}

double Nonlinearity::operator()(double r) const {
    if (q == 1.0) return r;
    return std::copysign(std::pow(std::abs(r), q), r);
}

double Nonlinearity::dmax(double bound) const {
    if (q == 1.0) return 1.0;
    return q * std::pow(std::abs(bound), q - 1.0);
}

double eval_J_eps(const RadialKernel& J, double r, double eps, int N) {
    if (!(eps > 0)) throw std::invalid_argument("eval_J_eps: eps must be positive");
    if (r < 0) throw std::invalid_argument("eval_J_eps: r must be >= 0");
    return std::pow(eps, -(N + 2)) * J(r / eps);
}

double eval_G_tilde(const ConvectionKernel& K, const TangentVector& w) {
    double n = geom::hyp_norm(w);
    if (n == 0.0) return 0.0;
    auto [sm, sp] = geom::boundary_endpoints(w);
    return K.g1(sm, sp) * K.xi(n);
}

double eval_G_eps(const ConvectionKernel& K, const Point& x, const Point& y, double eps, int N) {
    if (!(eps > 0)) throw std::invalid_argument("eval_G_eps: eps must be positive");
    TangentVector w = geom::log_map(x, y);
    double d = geom::hyp_norm(w);
    if (d == 0.0) throw std::domain_error("eval_G_eps: undefined on the diagonal");
    auto [sm, sp] = geom::boundary_endpoints(w);
    return std::pow(eps, -(N + 1)) * K.g1(sm, sp) * K.xi(d / eps);
}

double radial_moment(const std::function<double(double)>& f) {
    using GK = boost::math::quadrature::gauss_kronrod<double, 15>;
    double total = GK::integrate(f, 0.0, 1.0, 12, 1e-12);
    double lo = 1.0;
    double prev_block = std::abs(total);
    int small_streak = 0;
    for (int k = 0; k < 48; ++k) {
        double hi = 2.0 * lo;
        double block = GK::integrate(f, lo, hi, 12, 1e-12);
        total += block;
        double mag = std::abs(block);
        if (!std::isfinite(block) || mag > 1e12)
            throw MomentError("radial moment diverges on [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "]");
        if (mag <= 1e-14 * (std::abs(total) + 1e-300)) {
            if (++small_streak >= 2) return total;
        } else {
            small_streak = 0;
            if (k >= 6 && mag > 0.9 * prev_block)
                throw MomentError("radial moment tail fails to decay beyond r = " +
                                  std::to_string(lo));
        }
        prev_block = mag;
        lo = hi;
    }
    throw MomentError("radial moment tail fails to converge");
}

double moment_AJ(const RadialKernel& J, int N) {
    double I = radial_moment([&](double r) { return J(r) * std::pow(r, N + 1); });
    return quad::sphere_area(N) / (2.0 * N) * I;
}

double moment_Mtilde_of(const std::function<double(double)>& J, int N) {
    return quad::sphere_area(N) * radial_moment([&, N](double r) {
               return J(r) * (1.0 + r * r) * std::pow(std::exp(r) * std::sinh(r), N - 1);
           });
}

double moment_Mtilde_J(const RadialKernel& J, int N) {
    return moment_Mtilde_of([&](double r) { return J(r); }, N);
}

double moment_MG_of(const std::function<double(double)>& kG, int N) {
    return quad::sphere_area(N) * radial_moment([&, N](double r) {
               return kG(r) * (1.0 + r) * std::pow(std::exp(r) * std::sinh(r), N - 1);
           });
}

double moment_MG(const ConvectionKernel& K, int N) {
    double s = K.g1.sup();
    return moment_MG_of([&, s](double r) { return s * K.xi(r); }, N);
}

TangentVector first_moment_field(const ConvectionKernel& K, const Point& x, int n_ang) {
    const int N = x.dim;
    double radial = radial_moment([&](double r) { return K.xi(r) * std::pow(r, N); });
    quad::SphereRule sph = quad::sphere_rule(N, n_ang);
    // orthonormal frame in a conformal chart: e_d / conformal factor
    double cf = x.model == geom::Model::Ball ? geom::lambda_ball(x) : 1.0 / x.x[N - 1];
    Vec acc{};
    for (size_t k = 0; k < sph.dir.size(); ++k) {
        TangentVector tau{x, {}};
        for (int d = 0; d < N; ++d) tau.fiber[d] = sph.dir[k][d] / cf;
        auto [sm, sp] = geom::boundary_endpoints(tau);
        double g = K.g1(sm, sp) * sph.w[k];
        for (int d = 0; d < N; ++d) acc[d] += g * sph.dir[k][d];
    }
    TangentVector out{x, {}};
    for (int d = 0; d < N; ++d) out.fiber[d] = -radial * acc[d] / cf;
    return out;
}

double dissipativity_residual(const ConvectionKernel& K, const Point& y, double eps, double R,
                              int n_r, int n_ang, double* scale_out) {
    const int N = y.dim;
    quad::Rule1D rad = quad::gauss_legendre(n_r, 0.0, R);
    quad::SphereRule sph = quad::sphere_rule(N, n_ang);
    double cf = y.model == geom::Model::Ball ? geom::lambda_ball(y) : 1.0 / y.x[N - 1];
    double resid = 0.0, scale = 0.0;
    double pref = std::pow(eps, -(N + 1));
    for (size_t k = 0; k < sph.dir.size(); ++k) {
        // boundary data of the ray from y is radius-independent
        TangentVector tau{y, {}};
        for (int d = 0; d < N; ++d) tau.fiber[d] = sph.dir[k][d] / cf;
        auto [sm, sp] = geom::boundary_endpoints(tau);
        double g_out = K.g1(sm, sp);
        for (int i = 0; i < n_r; ++i) {
            double r = rad.x[i];
            double w = rad.w[i] * sph.w[k] * std::pow(r, N - 1) * geom::jacobian_rho(r, N);
            TangentVector W = tau;
            for (int d = 0; d < N; ++d) W.fiber[d] *= r;
            Point xw = geom::exp_map(W);
            double g_eps_yx = pref * g_out * K.xi(r / eps);  // G_eps(y, x_w)
            double g_eps_xy = eval_G_eps(K, xw, y, eps, N);  // full geometric path
            resid += w * (g_eps_xy - g_eps_yx);
            scale += w * g_eps_yx;
        }
    }
    if (scale_out) *scale_out = scale;
    return resid;
}

double effective_support(const RadialKernel& k, int N) {
    if (k.shape != RadialKernel::Shape::Gaussian) return k.param;
    auto integrand = [&](double r) {
        return k(r) * (1.0 + r * r) * std::pow(std::exp(r) * std::sinh(r), N - 1);
    };
    double peak = 0.0, r = 0.0;
    for (;;) {
        double v = integrand(r);
        peak = std::max(peak, v);
        if (r > 0.5 && v < 1e-12 * peak) return r;
        r += 0.05;
        if (r > 1000.0) throw MomentError("effective_support: integrand does not decay");
    }
}

}  // namespace hyperflow::kernels
