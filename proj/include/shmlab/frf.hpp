#pragma once

#include "shmlab/beam.hpp"

#include <array>
#include <string>
#include <vector>

namespace shmlab::fem {

enum class GridSpacing { Linear, Log };

std::string to_string(GridSpacing g);
GridSpacing grid_spacing_from_string(const std::string& name);

/// Harmonic sweep: unit force at one node, |acceleration| recorded at others.
struct SweepConfig {
    double omega_min = 0.1;    // rad/s
    double omega_max = 1000.0; // rad/s
    int n_points = 10000;
    GridSpacing spacing = GridSpacing::Linear;
    int excitation_node = 5;
    double excitation_amplitude = 1.0; // N
    std::vector<int> response_nodes{5, 4, 3, 2};

    void validate() const;
};

/// Grid over [omega_min, omega_max] including both endpoints; log spacing
/// keeps the sample density proportional to the hysteretic peak width.
std::vector<double> frequency_grid(const SweepConfig& sweep);

/// Harmonic response magnitudes, one array of length n_points per response
/// node, in the configured node order.
///
/// Each grid point solves (K(1 + i*eta) - omega^2 M) u = F directly and
/// records |a| = omega^2 |u| at the node's translational DOF.
std::vector<std::vector<double>> frequency_response(const AssembledSystem& system,
                                                    const SweepConfig& sweep,
                                                    const Material& material);

enum class Normalization { MaxAbs };

std::string to_string(Normalization n);
Normalization normalization_from_string(const std::string& name);

/// One dataset row: concatenated normalized responses plus the four
/// element diameters that produced them.
struct FrfSample {
    std::vector<double> features;
    std::array<double, 4> targets;
};

/// Concatenates responses in the configured node order, applies per-sample
/// normalization, and records the model diameters as targets.
FrfSample build_sample(const BeamModel& model, const SweepConfig& sweep,
                       Normalization normalization);

} // namespace shmlab::fem
