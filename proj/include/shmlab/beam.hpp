#pragma once

#include <Eigen/Dense>

#include <array>
#include <vector>

namespace shmlab::fem {

using Matrix8d = Eigen::Matrix<double, 8, 8>;

/// Isotropic material with hysteretic structural damping.
struct Material {
    double youngs_modulus = 2.1e11; // Pa, structural steel default
    double density = 7850.0;        // kg/m^3
    double loss_factor = 0.01;      // dimensionless eta in K*(1 + i*eta)

    void validate() const;
};

/// Circular cross-section quantities derived from a diameter.
struct SectionProperties {
    double area;          // m^2, pi d^2 / 4
    double second_moment; // m^4, pi d^4 / 64
};

SectionProperties section_properties(double diameter);

/// Cantilever beam of four equal-length circular elements.
///
/// Node numbering runs 1 (fixed end) through 5 (free end); element k
/// spans nodes k and k+1 and carries its own diameter.
struct BeamModel {
    double length_total = 1.0;
    std::array<double, 4> diameters{0.01, 0.01, 0.01, 0.01};
    Material material;

    static constexpr int kElements = 4;

    double element_length() const { return length_total / kElements; }
    void validate() const;
};

/// 4x4 stiffness/mass pair for one Euler-Bernoulli element, DOF order
/// (v1, theta1, v2, theta2).
struct ElementMatrices {
    Eigen::Matrix4d stiffness;
    Eigen::Matrix4d mass;
    double element_length;
};

/// K = EI/l^3 * [[12, 6l, -12, 6l], [6l, 4l^2, -6l, 2l^2], ...],
/// M = rho*A*l/420 * [[156, 22l, 54, -13l], [22l, 4l^2, 13l, -3l^2], ...].
ElementMatrices element_matrices(double flexural_rigidity, double mass_per_length,
                                 double element_length);

/// Constrained global system: node 1 clamped, 8 remaining DOFs
/// (translation, rotation) for nodes 2..5.
struct AssembledSystem {
    Matrix8d stiffness;
    Matrix8d mass;

    /// Retained-DOF index of a node's transverse translation. Nodes 2..5.
    static int translation_dof(int node);
    /// Retained-DOF index of a node's rotation. Nodes 2..5.
    static int rotation_dof(int node);
};

AssembledSystem assemble(const BeamModel& model);

/// All 8 natural frequencies of the constrained system, ascending, rad/s.
std::vector<double> natural_frequencies(const AssembledSystem& system);

} // namespace shmlab::fem
