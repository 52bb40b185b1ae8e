#pragma once
#ifndef HYPERFLOW_FIELD_HPP
#define HYPERFLOW_FIELD_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hyperflow/geometry.hpp"

namespace hyperflow::field {

// Cartesian lattice of spacing h in ball coordinates, masked to |x|_e <= r_max.
// Node order is lexicographic in the lattice indices.
struct Grid {
    int dim;
    double r_max, h;
    int m;                            // lattice indices run in [-m, m] per axis
    std::vector<int32_t> node_id;     // full box -> node index, -1 off the mask
    std::vector<std::array<int16_t, 3>> node_k;
    std::vector<geom::Vec> coord;     // ball coordinates per node
    std::vector<double> w;            // mu-weight lambda^N h^N per node

    size_t n() const { return coord.size(); }
    int side() const { return 2 * m + 1; }
    size_t box_index(int i, int j, int k) const;

    static std::shared_ptr<const Grid> create(int dim, double r_max, double h);
};

struct ScalarField {
    std::shared_ptr<const Grid> grid;
    std::vector<double> v;

    static ScalarField zeros(std::shared_ptr<const Grid> g);
};

// multilinear interpolation stencil at a ball point (missing corners dropped;
// they carry value 0 by the extension-by-zero convention)
struct Stencil {
    int32_t id[8];
    double w[8];
    int n = 0;
};
Stencil gather(const Grid& g, const geom::Vec& x);

double sample(const ScalarField& f, const geom::Point& p);
double pairwise_sum(const double* v, size_t n);  // fixed-order deterministic
double lp_norm(const ScalarField& f, double p);  // p in {1, 2, inf}
double mass(const ScalarField& f);
double boundary_mass(const ScalarField& f);      // |u| mass on the outer 10% shell

using Trajectory = std::vector<std::pair<double, ScalarField>>;

double spacetime_l2_error(const Trajectory& a, const Trajectory& b, double K_radius);
double l2_error_at(const ScalarField& a, const ScalarField& b, double K_radius);

struct BumpSpec {
    geom::Vec center{};
    double width = 0.2;
    double amplitude = 1.0;
};
double eval_bump(const BumpSpec& b, int dim, const geom::Vec& x);
ScalarField make_initial(const BumpSpec& b, std::shared_ptr<const Grid> g);

void save_field(const ScalarField& f, const std::string& path);
ScalarField load_field(const std::string& path);
void save_trajectory(const Trajectory& t, const std::string& dir, const std::string& prefix);

struct VectorFieldSampler {
    int dim = 2;
    std::function<geom::TangentVector(const geom::Point&)> fn;
    std::shared_ptr<const Grid> cache_grid;
    std::vector<ScalarField> cache_comp;  // ball-chart components

    geom::TangentVector operator()(const geom::Point& p) const;
    void build_cache(double r_max, double h);
    double sup_chart_norm() const;  // max Euclidean chart magnitude over cache
};

}  // namespace hyperflow::field

#endif
