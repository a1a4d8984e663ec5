#include "shmlab/network.hpp"

#include "shmlab/blob_io.hpp"
#include "shmlab/errors.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace shmlab::nn {

using nlohmann::json;

void Sequential::add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
}

Tensor Sequential::forward(const Tensor& input) {
    Tensor x = input;
    for (auto& layer : layers_) {
        x = layer->forward(x);
    }
    return x;
}

Tensor Sequential::backward(const Tensor& upstream) {
    Tensor g = upstream;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
        g = (*it)->backward(g);
    }
    return g;
}

std::vector<ParamRef> Sequential::params() {
    std::vector<ParamRef> refs;
    for (auto& layer : layers_) {
        for (const auto& ref : layer->params()) {
            refs.push_back(ref);
        }
    }
    return refs;
}

void Sequential::zero_grads() {
    for (const auto& ref : params()) {
        std::fill(ref.grad, ref.grad + ref.size, 0.0);
    }
}

std::int64_t Sequential::param_count() {
    std::int64_t n = 0;
    for (const auto& ref : params()) {
        n += ref.size;
    }
    return n;
}

std::vector<std::vector<std::int64_t>> Sequential::shape_trace(
    std::vector<std::int64_t> input_shape) const {
    std::vector<std::vector<std::int64_t>> trace{input_shape};
    for (const auto& layer : layers_) {
        trace.push_back(layer->output_shape(trace.back()));
    }
    return trace;
}

json Sequential::architecture() const {
    json layers = json::array();
    for (const auto& layer : layers_) {
        layers.push_back(layer->describe());
    }
    return layers;
}

std::unique_ptr<Layer> make_layer(const json& description) {
    const std::string kind = description.at("kind").get<std::string>();
    if (kind == "conv2d") {
        ConvSpec spec;
        spec.filters = description.at("filters").get<int>();
        spec.extent = description.at("extent").get<int>();
        spec.stride = description.at("stride").get<int>();
        spec.padding = description.at("padding").get<int>();
        return std::make_unique<Conv2dLayer>(description.at("in_channels").get<int>(), spec);
    }
    if (kind == "relu") {
        return std::make_unique<ReluLayer>();
    }
    if (kind == "maxpool2d") {
        return std::make_unique<MaxPool2dLayer>(description.at("extent").get<int>(),
                                                description.at("stride").get<int>());
    }
    if (kind == "global_average_pool") {
        return std::make_unique<GlobalAveragePoolLayer>();
    }
    if (kind == "dense") {
        return std::make_unique<DenseLayer>(description.at("inputs").get<int>(),
                                            description.at("outputs").get<int>());
    }
    if (kind == "flatten") {
        return std::make_unique<FlattenLayer>();
    }
    throw IoError("unknown layer kind in checkpoint: " + kind);
}

void save_network(Sequential& net, const std::filesystem::path& stem, json header) {
    header["architecture"] = net.architecture();
    header["format_version"] = 1;

    std::vector<float> blob;
    blob.reserve(static_cast<std::size_t>(net.param_count()));
    for (const auto& ref : net.params()) {
        for (std::int64_t i = 0; i < ref.size; ++i) {
            blob.push_back(static_cast<float>(ref.value[i]));
        }
    }

    std::filesystem::create_directories(stem.parent_path());
    std::ofstream out(stem.string() + ".json");
    if (!out) {
        throw IoError("cannot write checkpoint header " + stem.string() + ".json");
    }
    out << header.dump(2) << "\n";
    write_f32_blob(stem.string() + ".f32", blob.data(), blob.size());
}

LoadedNetwork load_network(const std::filesystem::path& stem) {
    std::ifstream in(stem.string() + ".json");
    if (!in) {
        throw IoError("missing checkpoint " + stem.string() + ".json");
    }
    LoadedNetwork loaded;
    try {
        in >> loaded.header;
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint header: " + std::string(e.what()));
    }
    for (const auto& row : loaded.header.at("architecture")) {
        loaded.net.add(make_layer(row));
    }
    const std::vector<float> blob = read_f32_blob(stem.string() + ".f32");
    std::size_t offset = 0;
    for (const auto& ref : loaded.net.params()) {
        if (offset + static_cast<std::size_t>(ref.size) > blob.size()) {
            throw IoError("checkpoint blob too short for architecture: " + stem.string());
        }
        for (std::int64_t i = 0; i < ref.size; ++i) {
            ref.value[i] = blob[offset++];
        }
    }
    if (offset != blob.size()) {
        throw IoError("checkpoint blob has trailing data: " + stem.string());
    }
    return loaded;
}

FiniteDifferenceReport finite_difference_check(Sequential& net, const Tensor& input,
                                               double tolerance) {
    constexpr std::int64_t kMaxParams = 10000;
    if (net.param_count() > kMaxParams) {
        throw ConfigError("finite_difference_check limited to 1e4 parameters, got " +
                          std::to_string(net.param_count()));
    }

    auto loss_of = [&net](const Tensor& x) {
        const Tensor out = net.forward(x);
        double loss = 0.0;
        for (double v : out.data) {
            loss += 0.5 * v * v;
        }
        return loss;
    };

    // analytic pass: upstream gradient of 0.5*sum(out^2) is out itself
    net.zero_grads();
    const Tensor out = net.forward(input);
    const Tensor input_grad = net.backward(out);

    FiniteDifferenceReport report;
    auto check_slot = [&](double* slot, double analytic) {
        const double h = 1e-5 * std::max(1.0, std::abs(*slot));
        const double saved = *slot;
        *slot = saved + h;
        const double plus = loss_of(input);
        *slot = saved - h;
        const double minus = loss_of(input);
        *slot = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
        report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic - numeric) / scale);
        ++report.checked_parameters;
    };

    for (const auto& ref : net.params()) {
        for (std::int64_t i = 0; i < ref.size; ++i) {
            check_slot(ref.value + i, ref.grad[i]);
        }
    }
    Tensor probe = input;
    for (std::size_t i = 0; i < probe.data.size(); ++i) {
        const double saved = probe.data[i];
        const double h = 1e-5 * std::max(1.0, std::abs(saved));
        probe.data[i] = saved + h;
        const double plus = loss_of(probe);
        probe.data[i] = saved - h;
        const double minus = loss_of(probe);
        probe.data[i] = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        const double analytic = input_grad.data[i];
        const double scale = std::max({1.0, std::abs(analytic), std::abs(numeric)});
        report.max_rel_error = std::max(report.max_rel_error, std::abs(analytic - numeric) / scale);
        ++report.checked_parameters;
    }

    report.pass = report.max_rel_error <= tolerance;
    return report;
}

} // namespace shmlab::nn
