#include "shmlab/frf.hpp"

#include "shmlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <complex>

namespace shmlab::fem {

namespace {
using Complex = std::complex<double>;
using Matrix8c = Eigen::Matrix<Complex, 8, 8>;
using Vector8c = Eigen::Matrix<Complex, 8, 1>;
} // namespace

void SweepConfig::validate() const {
    if (!(omega_min > 0.0) || !(omega_max > omega_min)) {
        throw ConfigError("sweep requires 0 < omega_min < omega_max");
    }
    if (n_points < 2) {
        throw ConfigError("sweep requires n_points >= 2");
    }
    if (!(excitation_amplitude != 0.0) || !std::isfinite(excitation_amplitude)) {
        throw ConfigError("excitation_amplitude must be nonzero and finite");
    }
    auto check_node = [](int node) {
        if (node < 2 || node > 5) {
            throw ConfigError("node " + std::to_string(node) +
                              " is not an unconstrained node (expected 2..5)");
        }
    };
    check_node(excitation_node);
    if (response_nodes.empty()) {
        throw ConfigError("at least one response node is required");
    }
    for (int node : response_nodes) {
        check_node(node);
    }
}

std::string to_string(GridSpacing g) {
    switch (g) {
    case GridSpacing::Linear:
        return "linear";
    case GridSpacing::Log:
        return "log";
    }
    throw ConfigError("unknown grid spacing");
}

GridSpacing grid_spacing_from_string(const std::string& name) {
    if (name == "linear") {
        return GridSpacing::Linear;
    }
    if (name == "log") {
        return GridSpacing::Log;
    }
    throw ConfigError("unknown grid spacing: " + name);
}

std::vector<double> frequency_grid(const SweepConfig& sweep) {
    sweep.validate();
    std::vector<double> grid(sweep.n_points);
    if (sweep.spacing == GridSpacing::Linear) {
        const double step = (sweep.omega_max - sweep.omega_min) / (sweep.n_points - 1);
        for (int i = 0; i < sweep.n_points; ++i) {
            grid[i] = sweep.omega_min + step * i;
        }
    } else {
        const double log_min = std::log(sweep.omega_min);
        const double step = (std::log(sweep.omega_max) - log_min) / (sweep.n_points - 1);
        for (int i = 0; i < sweep.n_points; ++i) {
            grid[i] = std::exp(log_min + step * i);
        }
        grid.front() = sweep.omega_min;
    }
    grid.back() = sweep.omega_max;
    return grid;
}

std::vector<std::vector<double>> frequency_response(const AssembledSystem& system,
                                                    const SweepConfig& sweep,
                                                    const Material& material) {
    sweep.validate();
    material.validate();

    const Matrix8c k_complex =
        system.stiffness.cast<Complex>() * Complex(1.0, material.loss_factor);
    const Matrix8c m_complex = system.mass.cast<Complex>();

    Vector8c force = Vector8c::Zero();
    force(AssembledSystem::translation_dof(sweep.excitation_node)) = sweep.excitation_amplitude;

    const std::vector<double> grid = frequency_grid(sweep);
    std::vector<std::vector<double>> response(sweep.response_nodes.size());
    for (auto& channel : response) {
        channel.resize(grid.size());
    }

    Matrix8c dynamic;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double omega = grid[g];
        dynamic = k_complex - (omega * omega) * m_complex;
        Eigen::PartialPivLU<Matrix8c> lu(dynamic);
        const Vector8c displacement = lu.solve(force);
        const double residual = (dynamic * displacement - force).norm();
        if (!std::isfinite(residual) || residual > 1e-6 * force.norm()) {
            throw NumericError("singular dynamic stiffness at omega = " + std::to_string(omega) +
                               " rad/s (undamped pole?)");
        }
        for (std::size_t n = 0; n < sweep.response_nodes.size(); ++n) {
            const int dof = AssembledSystem::translation_dof(sweep.response_nodes[n]);
            response[n][g] = omega * omega * std::abs(displacement(dof));
        }
    }
    return response;
}

std::string to_string(Normalization n) {
    switch (n) {
    case Normalization::MaxAbs:
        return "max-abs";
    }
    throw ConfigError("unknown normalization");
}

Normalization normalization_from_string(const std::string& name) {
    if (name == "max-abs") {
        return Normalization::MaxAbs;
    }
    throw ConfigError("unknown normalization: " + name);
}

FrfSample build_sample(const BeamModel& model, const SweepConfig& sweep,
                       Normalization normalization) {
    const AssembledSystem system = assemble(model);
    const auto channels = frequency_response(system, sweep, model.material);

    FrfSample sample;
    sample.features.reserve(channels.size() * channels.front().size());
    for (const auto& channel : channels) {
        sample.features.insert(sample.features.end(), channel.begin(), channel.end());
    }

    switch (normalization) {
    case Normalization::MaxAbs: {
        double peak = 0.0;
        for (double v : sample.features) {
            peak = std::max(peak, std::abs(v));
        }
        if (!(peak > 0.0)) {
            throw NumericError("all-zero response; cannot normalize");
        }
        for (double& v : sample.features) {
            v /= peak;
        }
        break;
    }
    }

    sample.targets = model.diameters;
    return sample;
}

} // namespace shmlab::fem
