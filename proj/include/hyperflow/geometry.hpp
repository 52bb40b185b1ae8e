#pragma once
#ifndef HYPERFLOW_GEOMETRY_HPP
#define HYPERFLOW_GEOMETRY_HPP

#include <array>
#include <cmath>
#include <utility>

// Hyperbolic space H^N (curvature -1), N in {2,3}, in the Poincare ball and
// upper half-space models. All maps are closed-form; no ODE integration.

namespace hyperflow::geom {

enum class Model { Ball, HalfSpace };

using Vec = std::array<double, 3>;  // only the first `dim` entries are used

inline double dot(const Vec& a, const Vec& b, int dim) {
    double s = 0;
    for (int d = 0; d < dim; ++d) s += a[d] * b[d];
    return s;
}
inline double enorm(const Vec& a, int dim) { return std::sqrt(dot(a, a, dim)); }

struct Point {
    Model model;
    int dim;
    Vec x{};
};

struct TangentVector {
    Point base;
    Vec fiber{};  // Euclidean chart components at base
};

// Ball-model representation of the sphere at infinity; half-space endpoints
// (including the point at infinity) are mapped through the boundary extension
// of the Cayley transform.
struct BoundaryPoint {
    int dim;
    Vec dir{};  // |dir|_e = 1
};

double lambda_ball(const Point& p);            // 2/(1-|x|^2)
void check_domain(const Point& p);             // throws std::domain_error

Point cayley(const Point& p);                  // half-space <-> ball isometry
TangentVector cayley_tangent(const TangentVector& w);
Point to_model(const Point& p, Model m);
TangentVector to_model(const TangentVector& w, Model m);

double hyp_norm(const TangentVector& w);
double distance(const Point& x, const Point& y);

Point exp_map(const TangentVector& w);
TangentVector log_map(const Point& x, const Point& y);
TangentVector geodesic_flow(const TangentVector& w, double t);
std::pair<BoundaryPoint, BoundaryPoint> boundary_endpoints(const TangentVector& w);
TangentVector parallel_transport(const Point& x, const Point& y, const TangentVector& v);

double sinhc(double r);                        // sinh(r)/r, series near 0
double jacobian_rho(double r, int N);          // (sinh r / r)^(N-1)
double shift_jacobian_cv(const Vec& V, int dim);

}  // namespace hyperflow::geom

#endif
