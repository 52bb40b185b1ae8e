#pragma once
#ifndef HYPERFLOW_LOCALREF_HPP
#define HYPERFLOW_LOCALREF_HPP

#include <functional>

#include "hyperflow/field.hpp"
#include "hyperflow/kernels.hpp"

namespace hyperflow::localref {

// backward-flow state: position and the accumulated -int div(X) along the path
struct CharacteristicState {
    geom::Point position;
    double log_density = 0.0;
    bool exited = false;
};

// Riemannian divergence via central differences of the ball-chart flux
// lambda^N X_e (step 1e-4)
double div_X(const field::VectorFieldSampler& X, const geom::Point& p);

// RK4 flow of X for (possibly negative) time t with augmented log-density;
// integration stops with exited=true if the path leaves |x|_e < limit
CharacteristicState flow_X(const field::VectorFieldSampler& X, const geom::Point& p, double t,
                           double dt, double limit = 1.0 - 1e-9);

// u(t,x) = exp(-int_0^t div X(Phi_{-tau}(x)) dtau) * u0(Phi_{-t}(x))
field::ScalarField transport_exact(const field::ScalarField& u0,
                                   const field::VectorFieldSampler& X, double t,
                                   double dt = 0.005);

// same solution formula with the initial datum evaluated analytically at the
// foot point (no interpolation error; used for reference solutions)
field::ScalarField transport_exact_fn(const std::function<double(const geom::Point&)>& u0,
                                      std::shared_ptr<const field::Grid> g,
                                      const field::VectorFieldSampler& X, double t,
                                      double dt = 0.005);

// conservative finite differences in ball coordinates for
// d_t u = A*Lap u - div(f(u) X), zero Dirichlet outside the mask;
// centered diffusion fluxes, local Lax-Friedrichs convection fluxes, RK2
field::Trajectory evolve_local_convdiff(const field::ScalarField& u0, double A,
                                        const field::VectorFieldSampler* X,
                                        const kernels::Nonlinearity& f, double T,
                                        double save_every = 0.0, double dt_user = 0.0);

}  // namespace hyperflow::localref

#endif
