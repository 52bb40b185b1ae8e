#include "hyperflow/field.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hyperflow::field {

using geom::Point;
using geom::Vec;

size_t Grid::box_index(int i, int j, int k) const {
    size_t s = side();
    size_t idx = size_t(i + m) * s + size_t(j + m);
    if (dim == 3) idx = idx * s + size_t(k + m);
    return idx;
}

std::shared_ptr<const Grid> Grid::create(int dim, double r_max, double h) {
    if (dim < 2 || dim > 3) throw std::invalid_argument("grid dim must be 2 or 3");
    if (!(r_max > 0 && r_max < 1)) throw std::invalid_argument("r_max must lie in (0,1)");
    if (!(h > 0 && h < r_max)) throw std::invalid_argument("bad grid spacing");
    auto g = std::make_shared<Grid>();
    g->dim = dim;
    g->r_max = r_max;
    g->h = h;
    g->m = int(std::floor(r_max / h + 1e-9));
    int side = 2 * g->m + 1;
    size_t box = dim == 2 ? size_t(side) * side : size_t(side) * side * side;
    g->node_id.assign(box, -1);
    const double r2 = r_max * r_max;
    auto consider = [&](int i, int j, int k) {
        Vec x{i * h, j * h, dim == 3 ? k * h : 0.0};
        if (geom::dot(x, x, dim) > r2 + 1e-12) return;
        g->node_id[g->box_index(i, j, k)] = int32_t(g->coord.size());
        g->node_k.push_back({int16_t(i), int16_t(j), int16_t(k)});
        g->coord.push_back(x);
        double lam = 2.0 / (1.0 - geom::dot(x, x, dim));
        g->w.push_back(std::pow(lam, dim) * std::pow(h, dim));
    };
    for (int i = -g->m; i <= g->m; ++i)
        for (int j = -g->m; j <= g->m; ++j) {
            if (dim == 2)
                consider(i, j, 0);
            else
                for (int k = -g->m; k <= g->m; ++k) consider(i, j, k);
        }
    return g;
}

ScalarField ScalarField::zeros(std::shared_ptr<const Grid> g) {
    ScalarField f;
    f.v.assign(g->n(), 0.0);
    f.grid = std::move(g);
    return f;
}

Stencil gather(const Grid& g, const Vec& x) {
    Stencil s;
    const int dim = g.dim;
    int c[3] = {0, 0, 0};
    double t[3] = {0, 0, 0};
    for (int d = 0; d < dim; ++d) {
        double u = x[d] / g.h;
        if (u < -g.m || u > g.m) return s;
        double fl = std::floor(u);
        int ci = int(fl);
        if (ci >= g.m) ci = g.m - 1;
        if (ci < -g.m) ci = -g.m;
        c[d] = ci;
        t[d] = u - ci;
    }
    int corners = 1 << dim;
    for (int b = 0; b < corners; ++b) {
        double wt = 1.0;
        int k[3] = {c[0], c[1], c[2]};
        for (int d = 0; d < dim; ++d) {
            if (b & (1 << d)) {
                k[d] += 1;
                wt *= t[d];
            } else {
                wt *= 1.0 - t[d];
            }
        }
        if (wt == 0.0) continue;
        int32_t id = g.node_id[g.box_index(k[0], k[1], k[2])];
        if (id < 0) continue;
        s.id[s.n] = id;
        s.w[s.n] = wt;
        ++s.n;
    }
    return s;
}

double sample(const ScalarField& f, const Point& p) {
    Point b = geom::to_model(p, geom::Model::Ball);
    const Grid& g = *f.grid;
    if (geom::dot(b.x, b.x, g.dim) > g.r_max * g.r_max) return 0.0;
    Stencil s = gather(g, b.x);
    double acc = 0.0;
    for (int i = 0; i < s.n; ++i) acc += s.w[i] * f.v[s.id[i]];
    return acc;
}

double pairwise_sum(const double* v, size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (size_t i = 0; i < n; ++i) s += v[i];
        return s;
    }
    size_t half = n / 2;
    return pairwise_sum(v, half) + pairwise_sum(v + half, n - half);
}

double lp_norm(const ScalarField& f, double p) {
    const size_t n = f.v.size();
    if (std::isinf(p)) {
        double mx = 0.0;
        for (double x : f.v) mx = std::max(mx, std::abs(x));
        return mx;
    }
    std::vector<double> terms(n);
    if (p == 1.0)
        for (size_t i = 0; i < n; ++i) terms[i] = std::abs(f.v[i]) * f.grid->w[i];
    else if (p == 2.0)
        for (size_t i = 0; i < n; ++i) terms[i] = f.v[i] * f.v[i] * f.grid->w[i];
    else
        throw std::invalid_argument("lp_norm: p must be 1, 2 or inf");
    double s = pairwise_sum(terms.data(), n);
    return p == 1.0 ? s : std::sqrt(s);
}

double mass(const ScalarField& f) {
    const size_t n = f.v.size();
    std::vector<double> terms(n);
    for (size_t i = 0; i < n; ++i) terms[i] = f.v[i] * f.grid->w[i];
    return pairwise_sum(terms.data(), n);
}

double boundary_mass(const ScalarField& f) {
    const Grid& g = *f.grid;
    double thr = 0.9 * g.r_max;
    std::vector<double> terms;
    terms.reserve(g.n() / 4);
    for (size_t i = 0; i < g.n(); ++i)
        if (geom::enorm(g.coord[i], g.dim) >= thr) terms.push_back(std::abs(f.v[i]) * g.w[i]);
    return pairwise_sum(terms.data(), terms.size());
}

double l2_error_at(const ScalarField& a, const ScalarField& b, double K_radius) {
    const Grid& g = *a.grid;
    if (b.grid->dim != g.dim || b.grid->h != g.h || b.grid->r_max != g.r_max ||
        b.v.size() != a.v.size())
        throw std::invalid_argument("l2_error_at: mismatched grids");
    double K2 = K_radius * K_radius;
    std::vector<double> terms;
    terms.reserve(g.n());
    for (size_t i = 0; i < g.n(); ++i) {
        if (geom::dot(g.coord[i], g.coord[i], g.dim) > K2) continue;
        double d = a.v[i] - b.v[i];
        terms.push_back(d * d * g.w[i]);
    }
    return std::sqrt(pairwise_sum(terms.data(), terms.size()));
}

double spacetime_l2_error(const Trajectory& a, const Trajectory& b, double K_radius) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("spacetime_l2_error: mismatched timelines");
    size_t nt = a.size();
    std::vector<double> terms(nt);
    for (size_t i = 0; i < nt; ++i) {
        if (std::abs(a[i].first - b[i].first) > 1e-12)
            throw std::invalid_argument("spacetime_l2_error: mismatched time stamps");
        double wt;
        if (nt == 1)
            wt = 1.0;
        else if (i == 0)
            wt = 0.5 * (a[1].first - a[0].first);
        else if (i == nt - 1)
            wt = 0.5 * (a[nt - 1].first - a[nt - 2].first);
        else
            wt = 0.5 * (a[i + 1].first - a[i - 1].first);
        double e = l2_error_at(a[i].second, b[i].second, K_radius);
        terms[i] = wt * e * e;
    }
    return std::sqrt(pairwise_sum(terms.data(), nt));
}

double eval_bump(const BumpSpec& b, int dim, const Vec& x) {
    Vec d{};
    for (int i = 0; i < dim; ++i) d[i] = x[i] - b.center[i];
    double rho2 = geom::dot(d, d, dim) / (b.width * b.width);
    if (rho2 >= 1.0) return 0.0;
    return b.amplitude * std::exp(1.0 - 1.0 / (1.0 - rho2));
}

ScalarField make_initial(const BumpSpec& b, std::shared_ptr<const Grid> g) {
    if (geom::enorm(b.center, g->dim) + b.width > g->r_max + 1e-12)
        throw std::invalid_argument("initial bump support exceeds r_max");
    if (b.width <= 0) throw std::invalid_argument("initial bump width must be positive");
    ScalarField f = ScalarField::zeros(g);
    for (size_t i = 0; i < g->n(); ++i) f.v[i] = eval_bump(b, g->dim, g->coord[i]);
    return f;
}

void save_field(const ScalarField& f, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    char buf[160];
    std::snprintf(buf, sizeof buf, "# field N=%d r_max=%.17g h=%.17g order=lex\n", f.grid->dim,
                  f.grid->r_max, f.grid->h);
    out << buf;
    for (double v : f.v) {
        std::snprintf(buf, sizeof buf, "%.17g\n", v);
        out << buf;
    }
}

ScalarField load_field(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot read " + path);
    std::string header;
    std::getline(in, header);
    int dim = 0;
    double r_max = 0, h = 0;
    if (std::sscanf(header.c_str(), "# field N=%d r_max=%lg h=%lg", &dim, &r_max, &h) != 3)
        throw std::runtime_error("bad field header in " + path);
    ScalarField f = ScalarField::zeros(Grid::create(dim, r_max, h));
    for (size_t i = 0; i < f.v.size(); ++i)
        if (!(in >> f.v[i])) throw std::runtime_error("truncated field file " + path);
    return f;
}

void save_trajectory(const Trajectory& t, const std::string& dir, const std::string& prefix) {
    std::ofstream idx(dir + "/" + prefix + "_index.csv");
    if (!idx) throw std::runtime_error("cannot write trajectory index in " + dir);
    idx << "idx,t,file\n";
    char buf[128];
    for (size_t i = 0; i < t.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%s_%04zu.csv", prefix.c_str(), i);
        std::string fname = buf;
        save_field(t[i].second, dir + "/" + fname);
        std::snprintf(buf, sizeof buf, "%zu,%.12e,%s\n", i, t[i].first, fname.c_str());
        idx << buf;
    }
}

geom::TangentVector VectorFieldSampler::operator()(const Point& p) const {
    Point b = geom::to_model(p, geom::Model::Ball);
    if (!cache_comp.empty()) {
        geom::TangentVector out{b, {}};
        for (int d = 0; d < dim; ++d) out.fiber[d] = sample(cache_comp[d], b);
        return out;
    }
    return fn(b);
}

void VectorFieldSampler::build_cache(double r_max, double h) {
    auto g = Grid::create(dim, r_max, h);
    cache_comp.clear();
    for (int d = 0; d < dim; ++d) cache_comp.push_back(ScalarField::zeros(g));
    for (size_t i = 0; i < g->n(); ++i) {
        Point p{geom::Model::Ball, dim, g->coord[i]};
        geom::TangentVector X = fn(p);
        for (int d = 0; d < dim; ++d) cache_comp[d].v[i] = X.fiber[d];
    }
    cache_grid = g;
}

double VectorFieldSampler::sup_chart_norm() const {
    if (cache_comp.empty()) throw std::logic_error("sup_chart_norm requires a cache");
    double mx = 0.0;
    for (size_t i = 0; i < cache_grid->n(); ++i) {
        Vec v{};
        for (int d = 0; d < dim; ++d) v[d] = cache_comp[d].v[i];
        mx = std::max(mx, geom::enorm(v, dim));
    }
    return mx;
}

}  // namespace hyperflow::field
