#include "hyperflow/localref.hpp"

#include <cmath>
#include <stdexcept>

namespace hyperflow::localref {

using field::Grid;
using field::ScalarField;
using geom::Point;
using geom::Vec;

namespace {

Vec chart_velocity(const field::VectorFieldSampler& X, int dim, const Vec& x) {
    Point p{geom::Model::Ball, dim, x};
    return X(p).fiber;
}

}  // namespace

double div_X(const field::VectorFieldSampler& X, const Point& p) {
    Point b = geom::to_model(p, geom::Model::Ball);
    const int N = b.dim;
    const double s = 1e-4;
    if (geom::enorm(b.x, N) + 2 * s >= 1.0)
        throw std::domain_error("div_X: point too close to the model boundary");
    auto lamN = [N](const Vec& x) {
        return std::pow(2.0 / (1.0 - geom::dot(x, x, N)), N);
    };
    double acc = 0;
    for (int d = 0; d < N; ++d) {
        Vec xp = b.x, xm = b.x;
        xp[d] += s;
        xm[d] -= s;
        double fp = lamN(xp) * chart_velocity(X, N, xp)[d];
        double fm = lamN(xm) * chart_velocity(X, N, xm)[d];
        acc += (fp - fm) / (2 * s);
    }
    return acc / lamN(b.x);
}

CharacteristicState flow_X(const field::VectorFieldSampler& X, const Point& p, double t,
                           double dt, double limit) {
    CharacteristicState st{geom::to_model(p, geom::Model::Ball), 0.0, false};
    if (t == 0.0) return st;
    if (!(dt > 0)) throw std::invalid_argument("flow_X: dt must be positive");
    const int N = st.position.dim;
    long n = std::max(1L, long(std::ceil(std::abs(t) / dt - 1e-12)));
    double ds = t / n;
    auto vel = [&](const Vec& x) { return chart_velocity(X, N, x); };
    auto alpha = [&](const Vec& x) { return div_X(X, Point{geom::Model::Ball, N, x}); };
    Vec y = st.position.x;
    double ell = 0.0;
    for (long k = 0; k < n; ++k) {
        if (geom::enorm(y, N) + 2e-4 >= limit) {
            st.exited = true;
            break;
        }
        Vec k1 = vel(y);
        double a1 = alpha(y);
        Vec y2{}, y3{}, y4{};
        for (int d = 0; d < N; ++d) y2[d] = y[d] + 0.5 * ds * k1[d];
        Vec k2 = vel(y2);
        double a2 = alpha(y2);
        for (int d = 0; d < N; ++d) y3[d] = y[d] + 0.5 * ds * k2[d];
        Vec k3 = vel(y3);
        double a3 = alpha(y3);
        for (int d = 0; d < N; ++d) y4[d] = y[d] + ds * k3[d];
        Vec k4 = vel(y4);
        double a4 = alpha(y4);
        for (int d = 0; d < N; ++d)
            y[d] += ds / 6.0 * (k1[d] + 2 * k2[d] + 2 * k3[d] + k4[d]);
        ell += -ds / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4);
    }
    st.position.x = y;
    st.log_density = ell;
    return st;
}

namespace {

ScalarField transport_impl(const std::function<double(const Point&)>& eval_u0,
                           std::shared_ptr<const Grid> g, const field::VectorFieldSampler& X,
                           double t, double dt) {
    if (t < 0) throw std::invalid_argument("transport_exact: t must be non-negative");
    ScalarField out = ScalarField::zeros(g);
    for (size_t i = 0; i < g->n(); ++i) {
        Point p{geom::Model::Ball, g->dim, g->coord[i]};
        if (t == 0) {
            out.v[i] = eval_u0(p);
            continue;
        }
        CharacteristicState st = flow_X(X, p, -t, dt);
        if (st.exited) continue;
        // backward log-density equals +int_0^t alpha along the backward path
        out.v[i] = std::exp(-st.log_density) * eval_u0(st.position);
    }
    return out;
}

}  // namespace

ScalarField transport_exact(const ScalarField& u0, const field::VectorFieldSampler& X, double t,
                            double dt) {
    if (t == 0) return u0;
    return transport_impl([&u0](const Point& p) { return field::sample(u0, p); }, u0.grid, X, t,
                          dt);
}

ScalarField transport_exact_fn(const std::function<double(const Point&)>& u0,
                               std::shared_ptr<const Grid> g, const field::VectorFieldSampler& X,
                               double t, double dt) {
    return transport_impl(u0, g, X, t, dt);
}

field::Trajectory evolve_local_convdiff(const ScalarField& u0, double A,
                                        const field::VectorFieldSampler* X,
                                        const kernels::Nonlinearity& f, double T,
                                        double save_every, double dt_user) {
    const Grid& g = *u0.grid;
    const int N = g.dim;
    const size_t n = g.n();
    const double h = g.h;
    const double inf = std::numeric_limits<double>::infinity();

    // node-wise geometry and velocity tables
    std::vector<double> lamN(n);
    std::vector<std::array<int32_t, 6>> nb(n);  // +d then -d neighbors
    std::vector<std::array<double, 3>> cp(n), cm(n), Xc(n);
    auto lam = [N](const Vec& x) { return 2.0 / (1.0 - geom::dot(x, x, N)); };
    for (size_t i = 0; i < n; ++i) {
        const Vec& x = g.coord[i];
        lamN[i] = std::pow(lam(x), N);
        auto k = g.node_k[i];
        for (int d = 0; d < N; ++d) {
            int kk[3] = {k[0], k[1], k[2]};
            kk[d] += 1;
            nb[i][d] = (kk[d] > g.m) ? -1 : g.node_id[g.box_index(kk[0], kk[1], kk[2])];
            kk[d] -= 2;
            nb[i][3 + d] = (kk[d] < -g.m) ? -1 : g.node_id[g.box_index(kk[0], kk[1], kk[2])];
            Vec xf = x;
            xf[d] += 0.5 * h;
            cp[i][d] = std::pow(lam(xf), N - 2);
            xf[d] -= h;
            cm[i][d] = std::pow(lam(xf), N - 2);
            Xc[i][d] = 0.0;
        }
        if (X) {
            Point p{geom::Model::Ball, N, x};
            Vec v = (*X)(p).fiber;
            for (int d = 0; d < N; ++d) Xc[i][d] = v[d];
        }
    }

    double umax0 = field::lp_norm(u0, inf);
    double fpmax = f.dmax(umax0);

    // CFL bound: diffusion in chart coordinates plus convection wave speed
    double max_inv_lam2 = 0.0, vmax = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double l = std::pow(lamN[i], 1.0 / N);
        max_inv_lam2 = std::max(max_inv_lam2, 1.0 / (l * l));
        if (X) vmax = std::max(vmax, l * geom::enorm({Xc[i][0], Xc[i][1], Xc[i][2]}, N) * fpmax);
    }
    double dt_diff = A > 0 ? h * h / (4.0 * A * max_inv_lam2) : inf;
    double dt_conv = vmax > 0 ? h / vmax : inf;
    double dt = 0.4 * std::min(dt_diff, dt_conv);
    if (dt_user > 0) {
        if (dt_user > dt && std::isfinite(dt))
            throw std::invalid_argument("evolve_local_convdiff: user dt violates the CFL bound");
        dt = dt_user;
    }
    if (!std::isfinite(dt)) dt = T > 0 ? T : 1.0;

    std::vector<double> save_times{0.0};
    if (save_every > 0)
        for (double t = save_every; t < T - 1e-12; t += save_every) save_times.push_back(t);
    if (T > 0) save_times.push_back(T);

    field::Trajectory traj;
    ScalarField u = u0;
    traj.push_back({0.0, u});
    if (T <= 0) return traj;

    std::vector<double> fp_diff(n), fp_conv(n), rhs(n), rhs2(n), u1(n);
    auto eval_rhs = [&](const std::vector<double>& w, std::vector<double>& out) {
        for (int d = 0; d < N; ++d) {
            // plus-face fluxes for axis d
            for (size_t i = 0; i < n; ++i) {
                int32_t r = nb[i][d];
                double uR = r >= 0 ? w[r] : 0.0;
                fp_diff[i] = cp[i][d] * (uR - w[i]) / h;
                if (X) {
                    double phiL = lamN[i] * Xc[i][d] * f(w[i]);
                    double phiR = r >= 0 ? lamN[r] * Xc[r][d] * f(uR) : 0.0;
                    double a = fpmax * std::abs(lamN[i] * Xc[i][d]);
                    if (r >= 0) a = std::max(a, fpmax * std::abs(lamN[r] * Xc[r][d]));
                    fp_conv[i] = 0.5 * (phiL + phiR) - 0.5 * a * (uR - w[i]);
                }
            }
            for (size_t i = 0; i < n; ++i) {
                int32_t l = nb[i][3 + d];
                double dm, cmf = 0.0;
                if (l >= 0) {
                    dm = fp_diff[l];
                    if (X) cmf = fp_conv[l];
                } else {
                    dm = cm[i][d] * (w[i] - 0.0) / h;
                    if (X) {
                        double phiR = lamN[i] * Xc[i][d] * f(w[i]);
                        double a = fpmax * std::abs(lamN[i] * Xc[i][d]);
                        cmf = 0.5 * phiR - 0.5 * a * (w[i] - 0.0);
                    }
                }
                double term = A * (fp_diff[i] - dm) / h;
                if (X) term -= (fp_conv[i] - cmf) / h;
                if (d == 0)
                    out[i] = term / lamN[i];
                else
                    out[i] += term / lamN[i];
            }
        }
    };

    for (size_t seg = 1; seg < save_times.size(); ++seg) {
        double t0 = save_times[seg - 1], t1 = save_times[seg];
        long nsteps = std::max(1L, long(std::ceil((t1 - t0) / dt - 1e-12)));
        double ds = (t1 - t0) / nsteps;
        for (long s = 0; s < nsteps; ++s) {
            eval_rhs(u.v, rhs);
            for (size_t i = 0; i < n; ++i) u1[i] = u.v[i] + ds * rhs[i];
            eval_rhs(u1, rhs2);
            for (size_t i = 0; i < n; ++i) u.v[i] += 0.5 * ds * (rhs[i] + rhs2[i]);
        }
        traj.push_back({t1, u});
    }
    return traj;
}

}  // namespace hyperflow::localref
