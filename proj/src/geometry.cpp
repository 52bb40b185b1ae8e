#include "hyperflow/geometry.hpp"

#include <stdexcept>

namespace hyperflow::geom {

double sinhc(double r) {
    if (std::abs(r) < 1e-6) return 1.0 + r * r / 6.0;
    return std::sinh(r) / r;
}

double jacobian_rho(double r, int N) {
    if (r < 0) throw std::domain_error("jacobian_rho: r < 0");
    return std::pow(sinhc(r), N - 1);
}

double lambda_ball(const Point& p) {
    double n2 = dot(p.x, p.x, p.dim);
    return 2.0 / (1.0 - n2);
}

void check_domain(const Point& p) {
    if (p.dim < 2 || p.dim > 3) throw std::domain_error("point dimension must be 2 or 3");
    if (p.model == Model::Ball) {
        if (dot(p.x, p.x, p.dim) >= 1.0) throw std::domain_error("ball point with |x| >= 1");
    } else {
        if (!(p.x[p.dim - 1] > 0.0)) throw std::domain_error("half-space point with x_N <= 0");
    }
    for (int d = 0; d < p.dim; ++d)
        if (!std::isfinite(p.x[d])) throw std::domain_error("non-finite coordinate");
}

Point cayley(const Point& p) {
    check_domain(p);
    const int N = p.dim;
    Point q;
    q.dim = N;
    if (p.model == Model::HalfSpace) {
        // (x', x_N) -> (2x', |x|^2 - 1)/s,  s = |x'|^2 + (x_N + 1)^2
        double n2 = dot(p.x, p.x, N);
        double s = n2 + 2.0 * p.x[N - 1] + 1.0;
        q.model = Model::Ball;
        for (int d = 0; d < N - 1; ++d) q.x[d] = 2.0 * p.x[d] / s;
        q.x[N - 1] = (n2 - 1.0) / s;
    } else {
        // (y', y_N) -> (2y', 1 - |y|^2)/t,  t = |y'|^2 + (1 - y_N)^2
        double n2 = dot(p.x, p.x, N);
        double t = n2 - 2.0 * p.x[N - 1] + 1.0;
        q.model = Model::HalfSpace;
        for (int d = 0; d < N - 1; ++d) q.x[d] = 2.0 * p.x[d] / t;
        q.x[N - 1] = (1.0 - n2) / t;
    }
    return q;
}

TangentVector cayley_tangent(const TangentVector& w) {
    const Point& p = w.base;
    check_domain(p);
    const int N = p.dim;
    TangentVector out;
    out.base = cayley(p);
    double n2 = dot(p.x, p.x, N);
    Vec grad{};  // gradient of the conformal denominator
    if (p.model == Model::HalfSpace) {
        double s = n2 + 2.0 * p.x[N - 1] + 1.0;
        for (int d = 0; d < N; ++d) grad[d] = 2.0 * p.x[d];
        grad[N - 1] += 2.0;
        double gw = dot(grad, w.fiber, N);
        for (int i = 0; i < N - 1; ++i)
            out.fiber[i] = 2.0 * w.fiber[i] / s - 2.0 * p.x[i] * gw / (s * s);
        double xw = dot(p.x, w.fiber, N);
        out.fiber[N - 1] = 2.0 * xw / s - (n2 - 1.0) * gw / (s * s);
    } else {
        double t = n2 - 2.0 * p.x[N - 1] + 1.0;
        for (int d = 0; d < N; ++d) grad[d] = 2.0 * p.x[d];
        grad[N - 1] -= 2.0;
        double gw = dot(grad, w.fiber, N);
        for (int i = 0; i < N - 1; ++i)
            out.fiber[i] = 2.0 * w.fiber[i] / t - 2.0 * p.x[i] * gw / (t * t);
        double xw = dot(p.x, w.fiber, N);
        out.fiber[N - 1] = -2.0 * xw / t - (1.0 - n2) * gw / (t * t);
    }
    return out;
}

Point to_model(const Point& p, Model m) { return p.model == m ? p : cayley(p); }

TangentVector to_model(const TangentVector& w, Model m) {
    return w.base.model == m ? w : cayley_tangent(w);
}

double hyp_norm(const TangentVector& w) {
    double e = enorm(w.fiber, w.base.dim);
    if (w.base.model == Model::Ball) return lambda_ball(w.base) * e;
    return e / w.base.x[w.base.dim - 1];
}

double distance(const Point& xin, const Point& yin) {
    Point x = xin;
    Point y = to_model(yin, x.model);
    check_domain(x);
    check_domain(y);
    const int N = x.dim;
    Vec d{};
    for (int i = 0; i < N; ++i) d[i] = x.x[i] - y.x[i];
    double dd = dot(d, d, N);
    double arg;
    if (x.model == Model::Ball) {
        arg = 1.0 + 2.0 * dd / ((1.0 - dot(x.x, x.x, N)) * (1.0 - dot(y.x, y.x, N)));
    } else {
        arg = 1.0 + dd / (2.0 * x.x[N - 1] * y.x[N - 1]);
    }
    if (arg < 1.0) arg = 1.0;
    return std::acosh(arg);
}

double shift_jacobian_cv(const Vec& V, int dim) {
    double r = enorm(V, dim);
    if (r == 0.0) return 1.0;
    // equals (cosh r + sin(theta) sinh r) / (cos^2(theta) cosh^2 r + sin^2(theta))
    return 1.0 / (std::cosh(r) - V[dim - 1] * sinhc(r));
}

Point exp_map(const TangentVector& win) {
    TangentVector w = to_model(win, Model::HalfSpace);
    const int N = w.base.dim;
    double yN = w.base.x[N - 1];
    Vec V{};
    for (int d = 0; d < N; ++d) V[d] = w.fiber[d] / yN;
    double r = enorm(V, N);
    Point out;
    out.model = Model::HalfSpace;
    out.dim = N;
    if (r < 1e-14) {
        for (int d = 0; d < N; ++d) out.x[d] = w.base.x[d] + w.fiber[d];
    } else {
        double cv = shift_jacobian_cv(V, N);
        double b = sinhc(r);
        for (int d = 0; d < N - 1; ++d) out.x[d] = w.base.x[d] + yN * b * cv * V[d];
        out.x[N - 1] = yN * cv;
    }
    return to_model(out, win.base.model);
}

TangentVector log_map(const Point& xin, const Point& yin) {
    Point x = to_model(xin, Model::HalfSpace);
    Point y = to_model(yin, Model::HalfSpace);
    const int N = x.dim;
    double xN = x.x[N - 1], yN = y.x[N - 1];
    Vec dxp{};
    for (int d = 0; d < N - 1; ++d) dxp[d] = y.x[d] - x.x[d];
    double L = enorm(dxp, N - 1);
    TangentVector w;
    w.base = x;
    if (L < 1e-13 * (xN + yN)) {
        w.fiber[N - 1] = xN * std::log(yN / xN);
    } else {
        Vec u{};
        for (int d = 0; d < N - 1; ++d) u[d] = dxp[d] / L;
        double a = (L * L + yN * yN - xN * xN) / (2.0 * L);
        double R = std::hypot(a, xN);
        double cphi = -a / R, sphi = xN / R;
        // travel from x toward y decreases the circle angle
        double d = distance(x, y);
        for (int i = 0; i < N - 1; ++i) w.fiber[i] = d * xN * sphi * u[i];
        w.fiber[N - 1] = -d * xN * cphi;
    }
    if (xin.model == Model::Ball) return cayley_tangent(w);
    return w;
}

TangentVector geodesic_flow(const TangentVector& win, double t) {
    TangentVector w = to_model(win, Model::HalfSpace);
    const int N = w.base.dim;
    double xN = w.base.x[N - 1];
    Vec V{};
    for (int d = 0; d < N; ++d) V[d] = w.fiber[d] / xN;
    double r = enorm(V, N);
    if (r == 0.0 || t == 0.0) return win;
    TangentVector out;
    out.base.model = Model::HalfSpace;
    out.base.dim = N;
    double Lh = enorm(V, N - 1);
    if (Lh < 1e-13 * r) {
        double sg = V[N - 1] >= 0 ? 1.0 : -1.0;
        double nN = xN * std::exp(sg * r * t);
        for (int d = 0; d < N - 1; ++d) out.base.x[d] = w.base.x[d];
        out.base.x[N - 1] = nN;
        out.fiber[N - 1] = sg * r * nN;
    } else {
        Vec u{};
        for (int d = 0; d < N - 1; ++d) u[d] = V[d] / Lh;
        double st = V[N - 1] / r, ct = Lh / r;  // sin/cos of the inclination
        // Closed form along the semicircle, regrouped so that
        // cosh(rt) - st*sinh(rt) = (s1*e^{rt} + s2*e^{-rt})/2 with s1,s2 >= 0
        // never cancels; s1 = 1-st, s2 = 1+st computed via ct^2 to keep
        // relative accuracy when |st| is close to 1.
        double s1, s2;
        if (st >= 0) {
            s2 = 1.0 + st;
            s1 = ct * ct / s2;
        } else {
            s1 = 1.0 - st;
            s2 = ct * ct / s1;
        }
        double rt = r * t;
        double m = std::exp(-2.0 * std::abs(rt));
        double E = std::exp(-std::abs(rt));
        double a = rt >= 0 ? s1 : s1 * m;
        double b = rt >= 0 ? s2 * m : s2;
        double denom = a + b;
        double yN = 2.0 * xN * E / denom;
        double posu = (rt >= 0 ? 1.0 : -1.0) * xN * ct * (1.0 - m) / denom;
        double cn = -(a - b) / denom;      // cos of the new circle angle
        double sn = yN * ct / xN;          // sin of the new circle angle
        for (int d = 0; d < N - 1; ++d) out.base.x[d] = w.base.x[d] + posu * u[d];
        out.base.x[N - 1] = yN;
        for (int d = 0; d < N - 1; ++d) out.fiber[d] = r * yN * sn * u[d];
        out.fiber[N - 1] = r * yN * cn;
    }
    return to_model(out, win.base.model);
}

static BoundaryPoint boundary_from_half(const Vec& zp, int N, bool at_infinity) {
    BoundaryPoint b;
    b.dim = N;
    if (at_infinity) {
        b.dir[N - 1] = 1.0;
        return b;
    }
    double n2 = dot(zp, zp, N - 1);
    double s = n2 + 1.0;
    for (int d = 0; d < N - 1; ++d) b.dir[d] = 2.0 * zp[d] / s;
    b.dir[N - 1] = (n2 - 1.0) / s;
    return b;
}

std::pair<BoundaryPoint, BoundaryPoint> boundary_endpoints(const TangentVector& win) {
    TangentVector w = to_model(win, Model::HalfSpace);
    const int N = w.base.dim;
    double xN = w.base.x[N - 1];
    Vec V{};
    for (int d = 0; d < N; ++d) V[d] = w.fiber[d] / xN;
    double r = enorm(V, N);
    if (r == 0.0) throw std::domain_error("boundary_endpoints: zero vector");
    double Lh = enorm(V, N - 1);
    Vec foot{};
    if (Lh < 1e-13 * r) {
        for (int d = 0; d < N - 1; ++d) foot[d] = w.base.x[d];
        BoundaryPoint fin = boundary_from_half(foot, N, false);
        BoundaryPoint inf = boundary_from_half(foot, N, true);
        if (V[N - 1] > 0) return {fin, inf};
        return {inf, fin};
    }
    Vec u{};
    for (int d = 0; d < N - 1; ++d) u[d] = V[d] / Lh;
    double st = V[N - 1] / r, ct = Lh / r;
    double R = xN / ct;
    Vec plus{}, minus{};
    for (int d = 0; d < N - 1; ++d) {
        double c = w.base.x[d] + xN * (st / ct) * u[d];
        plus[d] = c + R * u[d];
        minus[d] = c - R * u[d];
    }
    return {boundary_from_half(minus, N, false), boundary_from_half(plus, N, false)};
}

// inversion z -> a + (z - a)/|z - a|^2 with a on the boundary: an isometry of
// the half-space; its differential is conformal with factor 1/|z - a|^2.
static Vec invert_point(const Vec& z, const Vec& a, int N) {
    Vec d{};
    for (int i = 0; i < N; ++i) d[i] = z[i] - a[i];
    double n2 = dot(d, d, N);
    Vec out{};
    for (int i = 0; i < N; ++i) out[i] = a[i] + d[i] / n2;
    return out;
}

static Vec invert_tangent(const Vec& z, const Vec& a, const Vec& h, int N) {
    Vec d{};
    for (int i = 0; i < N; ++i) d[i] = z[i] - a[i];
    double n2 = dot(d, d, N);
    double dh = dot(d, h, N);
    Vec out{};
    for (int i = 0; i < N; ++i) out[i] = (h[i] - 2.0 * dh * d[i] / n2) / n2;
    return out;
}

TangentVector parallel_transport(const Point& xin, const Point& yin, const TangentVector& vin) {
    Point x = to_model(xin, Model::HalfSpace);
    Point y = to_model(yin, Model::HalfSpace);
    TangentVector v = to_model(vin, Model::HalfSpace);
    const int N = x.dim;
    double xN = x.x[N - 1], yN = y.x[N - 1];
    Vec dxp{};
    for (int d = 0; d < N - 1; ++d) dxp[d] = y.x[d] - x.x[d];
    double L = enorm(dxp, N - 1);
    TangentVector out;
    out.base = y;
    if (L < 1e-13 * (xN + yN)) {
        double s = yN / xN;
        for (int d = 0; d < N; ++d) out.fiber[d] = s * v.fiber[d];
    } else {
        Vec u{};
        for (int d = 0; d < N - 1; ++d) u[d] = dxp[d] / L;
        double a = (L * L + yN * yN - xN * xN) / (2.0 * L);
        double R = std::hypot(a, xN);
        Vec ctr{};  // inversion center: a boundary endpoint of the geodesic
        for (int d = 0; d < N - 1; ++d) ctr[d] = x.x[d] + (a - R) * u[d];
        Vec x1 = invert_point(x.x, ctr, N);
        Vec y1 = invert_point(y.x, ctr, N);
        Vec v1 = invert_tangent(x.x, ctr, v.fiber, N);
        double s = y1[N - 1] / x1[N - 1];
        for (int d = 0; d < N; ++d) v1[d] *= s;
        out.fiber = invert_tangent(y1, ctr, v1, N);
    }
    if (yin.model == Model::Ball) return cayley_tangent(out);
    return out;
}

}  // namespace hyperflow::geom
