#pragma once

#include "shmlab/beam.hpp"
#include "shmlab/frf.hpp"
#include "shmlab/tensor.hpp"

#include <Eigen/Dense>

#include <complex>
#include <vector>

// Independent oracles used by the unit and acceptance suites. Everything in
// this header recomputes results from first principles; nothing may call the
// code path it is checking.

namespace oracle {

// Naive direct-stiffness assembly over explicit DOF index lists for a chain
// of `n_elements` equal-length elements, clamped at node 1. Returns the
// constrained (2n x 2n) stiffness/mass pair.
struct GenericSystem {
    Eigen::MatrixXd stiffness;
    Eigen::MatrixXd mass;
};

inline GenericSystem assemble_chain(const std::vector<double>& diameters,
                                    const shmlab::fem::Material& material, double length_total) {
    using namespace shmlab::fem;
    const int n_elements = static_cast<int>(diameters.size());
    const int n_dofs = 2 * (n_elements + 1);
    const double l = length_total / n_elements;

    Eigen::MatrixXd k_full = Eigen::MatrixXd::Zero(n_dofs, n_dofs);
    Eigen::MatrixXd m_full = Eigen::MatrixXd::Zero(n_dofs, n_dofs);
    for (int e = 0; e < n_elements; ++e) {
        const SectionProperties sect = section_properties(diameters[static_cast<std::size_t>(e)]);
        const ElementMatrices em = element_matrices(material.youngs_modulus * sect.second_moment,
                                                    material.density * sect.area, l);
        const int dof[4] = {2 * e, 2 * e + 1, 2 * e + 2, 2 * e + 3};
        for (int a = 0; a < 4; ++a) {
            for (int b = 0; b < 4; ++b) {
                k_full(dof[a], dof[b]) += em.stiffness(a, b);
                m_full(dof[a], dof[b]) += em.mass(a, b);
            }
        }
    }
    GenericSystem sys;
    sys.stiffness = k_full.bottomRightCorner(n_dofs - 2, n_dofs - 2);
    sys.mass = m_full.bottomRightCorner(n_dofs - 2, n_dofs - 2);
    return sys;
}

// Analytic Euler-Bernoulli cantilever frequency for mode n given
// (beta_n L)^2; omega = (bL)^2 sqrt(EI / rhoA) / L^2.
inline double analytic_cantilever_omega(double beta_l_squared, double flexural_rigidity,
                                        double mass_per_length, double length) {
    return beta_l_squared * std::sqrt(flexural_rigidity / mass_per_length) / (length * length);
}

// Modal superposition of the full constrained pencil: exact for the discrete
// system when all modes are kept, with the same hysteretic damping model.
inline std::vector<double> modal_frf_magnitude(const Eigen::MatrixXd& stiffness,
                                               const Eigen::MatrixXd& mass, int force_dof,
                                               int response_dof, double eta,
                                               const std::vector<double>& omegas) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(stiffness, mass);
    const Eigen::VectorXd lambdas = solver.eigenvalues();
    const Eigen::MatrixXd modes = solver.eigenvectors(); // M-orthonormal columns

    std::vector<double> magnitude;
    magnitude.reserve(omegas.size());
    for (double omega : omegas) {
        std::complex<double> displacement = 0.0;
        for (Eigen::Index j = 0; j < lambdas.size(); ++j) {
            const std::complex<double> denominator(lambdas(j) - omega * omega,
                                                   lambdas(j) * eta);
            displacement += modes(response_dof, j) * modes(force_dof, j) / denominator;
        }
        magnitude.push_back(omega * omega * std::abs(displacement));
    }
    return magnitude;
}

// Quadruple-loop cross-correlation reference for conv2d. Input (H, W, C)
// row-major, kernel matrix (F*F*C) x K with row order (fi, fj, c).
inline shmlab::nn::Tensor reference_conv2d(const shmlab::nn::Tensor& input,
                                           const Eigen::MatrixXd& kernel,
                                           const Eigen::VectorXd& bias, int extent, int stride,
                                           int padding) {
    const std::int64_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
    const std::int64_t out_h = (h - extent + 2 * padding) / stride + 1;
    const std::int64_t out_w = (w - extent + 2 * padding) / stride + 1;
    const std::int64_t filters = kernel.cols();
    shmlab::nn::Tensor out({out_h, out_w, filters});
    for (std::int64_t oi = 0; oi < out_h; ++oi) {
        for (std::int64_t oj = 0; oj < out_w; ++oj) {
            for (std::int64_t k = 0; k < filters; ++k) {
                double acc = bias(k);
                for (int fi = 0; fi < extent; ++fi) {
                    for (int fj = 0; fj < extent; ++fj) {
                        const std::int64_t ii = oi * stride + fi - padding;
                        const std::int64_t jj = oj * stride + fj - padding;
                        if (ii < 0 || ii >= h || jj < 0 || jj >= w) {
                            continue;
                        }
                        for (std::int64_t ch = 0; ch < c; ++ch) {
                            acc += input.at3(ii, jj, ch) *
                                   kernel((static_cast<std::int64_t>(fi) * extent + fj) * c + ch, k);
                        }
                    }
                }
                out.at3(oi, oj, k) = acc;
            }
        }
    }
    return out;
}

inline double relative_error(double a, double b, double floor = 1.0) {
    return std::abs(a - b) / std::max({floor, std::abs(a), std::abs(b)});
}

} // namespace oracle
