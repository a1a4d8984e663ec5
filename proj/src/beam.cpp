#include "shmlab/beam.hpp"

#include "shmlab/errors.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace shmlab::fem {

void Material::validate() const {
    if (!(youngs_modulus > 0.0) || !std::isfinite(youngs_modulus)) {
        throw ConfigError("youngs_modulus must be positive and finite");
    }
    if (!(density > 0.0) || !std::isfinite(density)) {
        throw ConfigError("density must be positive and finite");
    }
    if (!(loss_factor >= 0.0) || !std::isfinite(loss_factor)) {
        throw ConfigError("loss_factor must be non-negative and finite");
    }
}

SectionProperties section_properties(double diameter) {
    if (!(diameter > 0.0) || !std::isfinite(diameter)) {
        throw ConfigError("invalid geometry: diameter must be positive and finite, got " +
                          std::to_string(diameter));
    }
    const double d2 = diameter * diameter;
    return SectionProperties{
        .area = std::numbers::pi * d2 / 4.0,
        .second_moment = std::numbers::pi * d2 * d2 / 64.0,
    };
}

void BeamModel::validate() const {
    if (!(length_total > 0.0) || !std::isfinite(length_total)) {
        throw ConfigError("length_total must be positive and finite");
    }
    for (double d : diameters) {
        if (!(d > 0.0) || !std::isfinite(d)) {
            throw ConfigError("every element diameter must be positive and finite");
        }
    }
    material.validate();
}

ElementMatrices element_matrices(double flexural_rigidity, double mass_per_length,
                                 double element_length) {
    if (!(flexural_rigidity > 0.0) || !(mass_per_length > 0.0) || !(element_length > 0.0)) {
        throw ConfigError("element_matrices requires positive EI, rhoA and length");
    }
    const double l = element_length;
    const double l2 = l * l;

    Eigen::Matrix4d k;
    k << 12.0, 6.0 * l, -12.0, 6.0 * l,      //
        6.0 * l, 4.0 * l2, -6.0 * l, 2.0 * l2, //
        -12.0, -6.0 * l, 12.0, -6.0 * l,     //
        6.0 * l, 2.0 * l2, -6.0 * l, 4.0 * l2;
    k *= flexural_rigidity / (l2 * l);

    Eigen::Matrix4d m;
    m << 156.0, 22.0 * l, 54.0, -13.0 * l,     //
        22.0 * l, 4.0 * l2, 13.0 * l, -3.0 * l2, //
        54.0, 13.0 * l, 156.0, -22.0 * l,      //
        -13.0 * l, -3.0 * l2, -22.0 * l, 4.0 * l2;
    m *= mass_per_length * l / 420.0;

    return ElementMatrices{.stiffness = k, .mass = m, .element_length = l};
}

int AssembledSystem::translation_dof(int node) {
    if (node < 2 || node > 5) {
        throw ConfigError("node " + std::to_string(node) + " is constrained or out of range");
    }
    return 2 * (node - 2);
}

int AssembledSystem::rotation_dof(int node) {
    return translation_dof(node) + 1;
}

AssembledSystem assemble(const BeamModel& model) {
    model.validate();
    const double l = model.element_length();

    // Global 10x10 over nodes 1..5, DOFs (v, theta) per node.
    Eigen::Matrix<double, 10, 10> k_global = Eigen::Matrix<double, 10, 10>::Zero();
    Eigen::Matrix<double, 10, 10> m_global = Eigen::Matrix<double, 10, 10>::Zero();

    for (int e = 0; e < BeamModel::kElements; ++e) {
        const SectionProperties sect = section_properties(model.diameters[e]);
        const ElementMatrices em = element_matrices(model.material.youngs_modulus * sect.second_moment,
                                                    model.material.density * sect.area, l);
        const int base = 2 * e; // element e couples nodes e+1 and e+2
        k_global.block<4, 4>(base, base) += em.stiffness;
        m_global.block<4, 4>(base, base) += em.mass;
    }

    // Clamp node 1: drop its translation and rotation rows/columns.
    AssembledSystem sys;
    sys.stiffness = k_global.block<8, 8>(2, 2);
    sys.mass = m_global.block<8, 8>(2, 2);
    return sys;
}

std::vector<double> natural_frequencies(const AssembledSystem& system) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix8d> solver(system.stiffness, system.mass);
    if (solver.info() != Eigen::Success) {
        throw NumericError("generalized eigensolve failed; mass matrix not positive-definite?");
    }
    std::vector<double> omegas;
    omegas.reserve(8);
    for (int i = 0; i < 8; ++i) {
        const double lambda = solver.eigenvalues()(i);
        if (!(lambda > 0.0)) {
            throw NumericError("non-positive eigenvalue " + std::to_string(lambda) +
                               "; system is not a constrained SPD pencil");
        }
        omegas.push_back(std::sqrt(lambda));
    }
    return omegas;
}

} // namespace shmlab::fem
