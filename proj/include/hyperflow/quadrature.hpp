#pragma once
#ifndef HYPERFLOW_QUADRATURE_HPP
#define HYPERFLOW_QUADRATURE_HPP

#include <vector>

#include "hyperflow/geometry.hpp"

namespace hyperflow::quad {

struct Rule1D {
    std::vector<double> x, w;
};

// Gauss-Legendre nodes/weights on [a, b]
Rule1D gauss_legendre(int n, double a, double b);

struct SphereRule {
    std::vector<geom::Vec> dir;  // unit vectors, orthonormal coordinates
    std::vector<double> w;       // weights summing to Vol(S^{N-1})
};

// N=2: n_ang uniform angles; N=3: (n_ang/2)-point Gauss-Legendre in the polar
// cosine x n_ang uniform azimuths
SphereRule sphere_rule(int dim, int n_ang);

double sphere_area(int N);  // Vol(S^{N-1})

}  // namespace hyperflow::quad

#endif
