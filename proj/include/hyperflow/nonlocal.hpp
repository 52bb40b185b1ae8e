#pragma once
#ifndef HYPERFLOW_NONLOCAL_HPP
#define HYPERFLOW_NONLOCAL_HPP

#include <memory>
#include <vector>

#include "hyperflow/field.hpp"
#include "hyperflow/kernels.hpp"
#include "hyperflow/quadrature.hpp"

namespace hyperflow::nonlocal {

struct MonitorError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// radial Gauss-Legendre x angular product rule on the tangent fiber
struct FiberQuadrature {
    int dim, n_r, n_ang;
    double R_supp;
    quad::Rule1D radial;
    quad::SphereRule sphere;

    static FiberQuadrature create(int dim, int n_r, int n_ang, double R_supp);
};

// worker threads for operator application (output independent of the setting)
void set_threads(int n);
int threads();

// Non-local operators assembled as sparse matrices from the fiber-quadrature
// stencils, in mu-weighted form. The J part is symmetrized and applied as a
// graph Laplacian; the G part is balanced so row and column sums agree. This
// makes mass conservation, L2 decay, the maximum principle and adjoint
// duality exact at the discrete level (see README).
struct AssembledOperators {
    std::shared_ptr<const field::Grid> grid;
    double eps = 1.0;
    bool has_J = false, has_G = false;
    std::vector<int64_t> row_ptr;
    std::vector<int32_t> col;
    std::vector<double> vJ;  // symmetric graph weights (mu-weighted)
    std::vector<double> vG;  // balanced convection weights (mu-weighted)
    std::vector<double> dJ;  // row sums of vJ
    std::vector<double> tG;  // balanced marginal per node

    void apply_LJ(const double* u, double* out) const;
    void apply_LG(const double* fu, double* out) const;
    void apply_LG_adjoint(const double* v, double* out) const;
    double j_energy(const std::vector<double>& u) const;  // sum_ij W_ij (u_i-u_j)^2
    double max_row_rate(double fprime_max) const;
};

AssembledOperators assemble(std::shared_ptr<const field::Grid> grid, const FiberQuadrature& q,
                            double eps, const kernels::RadialKernel* J,
                            const kernels::ConvectionKernel* G);

field::ScalarField apply_LJ_eps(const field::ScalarField& u, const kernels::RadialKernel& J,
                                double eps, const FiberQuadrature& q);
field::ScalarField apply_LGf_eps(const field::ScalarField& u, const kernels::ConvectionKernel& K,
                                 const kernels::Nonlinearity& f, double eps,
                                 const FiberQuadrature& q);
field::ScalarField apply_LG_adjoint(const field::ScalarField& psi,
                                    const kernels::ConvectionKernel& K, double eps,
                                    const FiberQuadrature& q);

// operator value at one point with exact (analytic) evaluation of u: the same
// fiber quadrature, free of grid interpolation error
double apply_LJ_eps_at(const std::function<double(const geom::Point&)>& u,
                       const kernels::RadialKernel& J, double eps, const FiberQuadrature& q,
                       const geom::Point& x);

double stable_dt(const kernels::RadialKernel* J, const kernels::ConvectionKernel* K,
                 const kernels::Nonlinearity& f, double eps, const FiberQuadrature& q,
                 double u_bound);

struct MonitorRow {
    double t, mass, l1, l2, linf, boundary_mass, j_energy_cum;
};

struct EvolutionMonitors {
    std::vector<MonitorRow> rows;
};

enum class Scheme { Euler, RK2 };

struct EvolveResult {
    field::Trajectory traj;
    EvolutionMonitors monitors;
};

// explicit time integration with structure monitors; aborts via MonitorError
// if a conservation/decay property fails beyond the stated slack
EvolveResult evolve_nonlocal(const field::ScalarField& u0, const AssembledOperators& ops,
                             const kernels::Nonlinearity& f, double T, Scheme scheme,
                             double dt_user, double save_every);

// convenience form that assembles the operators internally
EvolveResult evolve_nonlocal(const field::ScalarField& u0, const kernels::RadialKernel* J,
                             const kernels::ConvectionKernel* K, const kernels::Nonlinearity& f,
                             double eps, double T, Scheme scheme, const FiberQuadrature& q,
                             double dt_user = 0.0, double save_every = 0.0);

void save_monitors(const EvolutionMonitors& m, const std::string& path);

// snapshot times used by evolve_nonlocal: 0, multiples of save_every, T
std::vector<double> snapshot_times(double T, double save_every);

}  // namespace hyperflow::nonlocal

#endif
