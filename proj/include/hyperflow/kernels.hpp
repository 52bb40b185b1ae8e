#pragma once
#ifndef HYPERFLOW_KERNELS_HPP
#define HYPERFLOW_KERNELS_HPP

#include <functional>
#include <stdexcept>
#include <string>

#include "hyperflow/geometry.hpp"

namespace hyperflow::kernels {

struct MomentError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RadialKernel {
    enum class Shape { Indicator, Gaussian, SmoothBump };
    Shape shape;
    double param;  // radius R (Indicator, SmoothBump) or scale s (Gaussian)

    double operator()(double r) const;
};

RadialKernel make_indicator(double R);
RadialKernel make_gaussian(double s);
RadialKernel make_smooth_bump(double R);

// g1(sigma-, sigma+): constant c, or c + a . sigma+ with |a|_e <= c (so g1 >= 0)
struct G1 {
    enum class Type { Constant, AffineBoundary };
    Type type;
    double c;
    geom::Vec a{};
    int dim = 2;

    double operator()(const geom::BoundaryPoint& sm, const geom::BoundaryPoint& sp) const;
    double sup() const;  // ||g1||_inf over the boundary sphere
};

G1 g1_constant(double c, int dim);
G1 g1_affine(double c, const geom::Vec& a, int dim);

struct ConvectionKernel {
    G1 g1;
    RadialKernel xi;
    int dim;
};

struct Nonlinearity {
    double q = 1.0;  // f(r) = |r|^{q-1} r, q >= 1
    double operator()(double r) const;
    double dmax(double bound) const;  // sup |f'| on [-bound, bound]
};

double eval_J_eps(const RadialKernel& J, double r, double eps, int N);
double eval_G_tilde(const ConvectionKernel& K, const geom::TangentVector& w);
double eval_G_eps(const ConvectionKernel& K, const geom::Point& x, const geom::Point& y,
                  double eps, int N);

// adaptive integral of f over [0, inf); throws MomentError on tail divergence
double radial_moment(const std::function<double(double)>& f);

double moment_AJ(const RadialKernel& J, int N);
double moment_Mtilde_J(const RadialKernel& J, int N);
double moment_MG(const ConvectionKernel& K, int N);
// generic forms used by validators/tests to probe arbitrary radial profiles
double moment_Mtilde_of(const std::function<double(double)>& J, int N);
double moment_MG_of(const std::function<double(double)>& kG, int N);

geom::TangentVector first_moment_field(const ConvectionKernel& K, const geom::Point& x,
                                       int n_ang = 64);

// quadrature of  int_{d(x,y)<=R} [G_eps(x,y) - G_eps(y,x)] dmu(x)  at y;
// scale_out (if given) receives int G_eps(y,x) dmu(x) for normalization
double dissipativity_residual(const ConvectionKernel& K, const geom::Point& y, double eps,
                              double R, int n_r = 48, int n_ang = 64,
                              double* scale_out = nullptr);

// truncation radius: kernel support for compact shapes, else where the full
// moment integrand k(r)(1+r^2)(e^r sinh r)^{N-1} falls below 1e-12 of its peak
double effective_support(const RadialKernel& k, int N);

}  // namespace hyperflow::kernels

#endif
