#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "shmlab/beam.hpp"
#include "shmlab/errors.hpp"
#include "shmlab/rng.hpp"
#include "test_support.hpp"

#include <Eigen/Cholesky>

using namespace shmlab;
using namespace shmlab::fem;

TEST_CASE("section properties of a circular rod") {
    const SectionProperties s = section_properties(0.01);
    CHECK(s.area == doctest::Approx(7.853982e-5).epsilon(1e-6));
    CHECK(s.second_moment == doctest::Approx(4.908739e-10).epsilon(1e-6));

    // doubling the diameter scales area x4 and second moment x16
    const SectionProperties d2 = section_properties(0.02);
    CHECK(d2.area == doctest::Approx(4.0 * s.area).epsilon(1e-12));
    CHECK(d2.second_moment == doctest::Approx(16.0 * s.second_moment).epsilon(1e-12));

    CHECK_THROWS_AS(section_properties(0.0), ConfigError);
    CHECK_THROWS_AS(section_properties(-0.01), ConfigError);
    CHECK_THROWS_AS(section_properties(std::nan("")), ConfigError);
}

TEST_CASE("material and model validation") {
    Material m;
    CHECK_NOTHROW(m.validate());
    m.loss_factor = -1.0;
    CHECK_THROWS_AS(m.validate(), ConfigError);

    BeamModel model;
    CHECK_NOTHROW(model.validate());
    model.diameters[2] = 0.0;
    CHECK_THROWS_AS(model.validate(), ConfigError);
}

TEST_CASE("element stiffness entries and rigid-body null vectors") {
    const ElementMatrices em = element_matrices(1.0, 1.0, 1.0);
    CHECK(em.stiffness(0, 0) == doctest::Approx(12.0));
    CHECK(em.stiffness(1, 1) == doctest::Approx(4.0));
    CHECK(em.stiffness(0, 2) == doctest::Approx(-12.0));

    // total translational mass: r^T M r = rho*A*l for r = [1,0,1,0]
    Eigen::Vector4d translation(1.0, 0.0, 1.0, 0.0);
    CHECK(translation.dot(em.mass * translation) == doctest::Approx(1.0).epsilon(1e-14));

    CHECK_THROWS_AS(element_matrices(0.0, 1.0, 1.0), ConfigError);
    CHECK_THROWS_AS(element_matrices(1.0, -1.0, 1.0), ConfigError);

    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const double ei = std::exp(rng.uniform(-2.0, 6.0));
        const double rho_a = std::exp(rng.uniform(-3.0, 3.0));
        const double l = std::exp(rng.uniform(-2.0, 1.0));
        const ElementMatrices e = element_matrices(ei, rho_a, l);

        CHECK((e.stiffness - e.stiffness.transpose()).norm() <= 1e-12 * e.stiffness.norm());
        CHECK((e.mass - e.mass.transpose()).norm() <= 1e-12 * e.mass.norm());

        const Eigen::Vector4d rigid_translation(1.0, 0.0, 1.0, 0.0);
        const Eigen::Vector4d rigid_rotation(-l / 2.0, 1.0, l / 2.0, 1.0);
        CHECK((e.stiffness * rigid_translation).norm() <= 1e-10 * e.stiffness.norm());
        CHECK((e.stiffness * rigid_rotation).norm() <= 1e-10 * e.stiffness.norm());

        CHECK(rigid_translation.dot(e.mass * rigid_translation) ==
              doctest::Approx(rho_a * l).epsilon(1e-12));
    }
}

TEST_CASE("assembly matches the naive triple-loop oracle") {
    BeamModel model;
    model.diameters = {0.008, 0.012, 0.01, 0.014};
    const AssembledSystem sys = assemble(model);

    const oracle::GenericSystem ref =
        oracle::assemble_chain({0.008, 0.012, 0.01, 0.014}, model.material, model.length_total);
    CHECK((sys.stiffness - ref.stiffness).norm() == 0.0);
    CHECK((sys.mass - ref.mass).norm() == 0.0);
}

TEST_CASE("shared-node stiffness superposes two elements") {
    BeamModel model; // uniform d = 0.01
    const AssembledSystem sys = assemble(model);
    const SectionProperties sect = section_properties(0.01);
    const double ei = model.material.youngs_modulus * sect.second_moment;
    const double l = model.element_length();
    const int dof = AssembledSystem::translation_dof(2);
    CHECK(sys.stiffness(dof, dof) == doctest::Approx(24.0 * ei / (l * l * l)).epsilon(1e-12));
}

TEST_CASE("constrained system is symmetric positive-definite") {
    BeamModel model;
    model.diameters = {0.005, 0.015, 0.007, 0.011};
    const AssembledSystem sys = assemble(model);
    CHECK((sys.stiffness - sys.stiffness.transpose()).norm() <= 1e-12 * sys.stiffness.norm());
    CHECK((sys.mass - sys.mass.transpose()).norm() <= 1e-12 * sys.mass.norm());
    CHECK(Eigen::LLT<Matrix8d>(sys.stiffness).info() == Eigen::Success);
    CHECK(Eigen::LLT<Matrix8d>(sys.mass).info() == Eigen::Success);
}

TEST_CASE("natural frequencies track the analytic cantilever") {
    BeamModel model; // steel, uniform d = 0.01, L = 1
    const AssembledSystem sys = assemble(model);
    const std::vector<double> omegas = natural_frequencies(sys);
    REQUIRE(omegas.size() == 8);
    for (std::size_t i = 0; i < omegas.size(); ++i) {
        CHECK(omegas[i] > 0.0);
        if (i > 0) {
            CHECK(omegas[i] > omegas[i - 1]);
        }
    }

    const SectionProperties sect = section_properties(0.01);
    const double ei = model.material.youngs_modulus * sect.second_moment;
    const double rho_a = model.material.density * sect.area;
    const double beta_l_squared[3] = {3.5160, 22.034, 61.697};
    const double tolerance[3] = {0.02, 0.02, 0.06};
    for (int mode = 0; mode < 3; ++mode) {
        const double analytic =
            oracle::analytic_cantilever_omega(beta_l_squared[mode], ei, rho_a, model.length_total);
        CHECK(std::abs(omegas[static_cast<std::size_t>(mode)] - analytic) <=
              tolerance[mode] * analytic);
    }
    CHECK(omegas[0] == doctest::Approx(45.5).epsilon(0.02));
}

TEST_CASE("frequencies scale with the square root of stiffness") {
    BeamModel model;
    const std::vector<double> base = natural_frequencies(assemble(model));
    model.material.youngs_modulus *= 4.0;
    const std::vector<double> stiffer = natural_frequencies(assemble(model));
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(stiffer[i] == doctest::Approx(2.0 * base[i]).epsilon(1e-10));
    }
}

TEST_CASE("mesh refinement converges toward the analytic fundamental") {
    Material material;
    const double d = 0.01, length = 1.0;
    const SectionProperties sect = section_properties(d);
    const double analytic = oracle::analytic_cantilever_omega(
        3.5160, material.youngs_modulus * sect.second_moment, material.density * sect.area, length);

    auto fundamental = [&](int elements) {
        const oracle::GenericSystem sys =
            oracle::assemble_chain(std::vector<double>(elements, d), material, length);
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> solver(sys.stiffness, sys.mass);
        return std::sqrt(solver.eigenvalues()(0));
    };
    const double coarse = fundamental(4);
    const double fine = fundamental(8);
    CHECK(std::abs(fine - analytic) < std::abs(coarse - analytic));
}
