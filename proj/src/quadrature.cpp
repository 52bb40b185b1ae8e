#include "hyperflow/quadrature.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hyperflow::quad {

Rule1D gauss_legendre(int n, double a, double b) {
    if (n < 1 || b <= a) throw std::invalid_argument("gauss_legendre: bad parameters");
    Rule1D r;
    r.x.resize(n);
    r.w.resize(n);
    const int m = (n + 1) / 2;
    for (int i = 0; i < m; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double pp = 0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int j = 0; j < n; ++j) {
                double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * j + 1.0) * z * p1 - j * p2) / (j + 1.0);
            }
            pp = n * (z * p0 - p1) / (z * z - 1.0);
            double dz = p0 / pp;
            z -= dz;
            if (std::abs(dz) < 1e-15) break;
        }
        double xm = 0.5 * (b + a), xl = 0.5 * (b - a);
        r.x[i] = xm - xl * z;
        r.x[n - 1 - i] = xm + xl * z;
        r.w[i] = 2.0 * xl / ((1.0 - z * z) * pp * pp);
        r.w[n - 1 - i] = r.w[i];
    }
    return r;
}

double sphere_area(int N) {
    if (N == 2) return 2.0 * std::numbers::pi;
    if (N == 3) return 4.0 * std::numbers::pi;
    throw std::invalid_argument("sphere_area: N must be 2 or 3");
}

SphereRule sphere_rule(int dim, int n_ang) {
    if (n_ang < 4) throw std::invalid_argument("sphere_rule: n_ang too small");
    SphereRule s;
    const double two_pi = 2.0 * std::numbers::pi;
    if (dim == 2) {
        s.dir.resize(n_ang);
        s.w.assign(n_ang, two_pi / n_ang);
        for (int k = 0; k < n_ang; ++k) {
            double th = two_pi * (k + 0.5) / n_ang;
            s.dir[k] = geom::Vec{std::cos(th), std::sin(th), 0.0};
        }
    } else if (dim == 3) {
        int np = n_ang / 2;
        Rule1D pol = gauss_legendre(np, -1.0, 1.0);
        s.dir.reserve(np * n_ang);
        s.w.reserve(np * n_ang);
        for (int i = 0; i < np; ++i) {
            double c = pol.x[i], st = std::sqrt(std::max(0.0, 1.0 - c * c));
            for (int k = 0; k < n_ang; ++k) {
                double ph = two_pi * (k + 0.5) / n_ang;
                s.dir.push_back(geom::Vec{st * std::cos(ph), st * std::sin(ph), c});
                s.w.push_back(pol.w[i] * two_pi / n_ang);
            }
        }
    } else {
        throw std::invalid_argument("sphere_rule: dim must be 2 or 3");
    }
    return s;
}

}  // namespace hyperflow::quad
