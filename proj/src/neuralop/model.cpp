#include "onli/neuralop/model.hpp"

#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "onli/random.hpp"

namespace onli {

void ModelConfig::validate() const {
    auto positive = [](int v, const char* key) {
        if (v < 1) throw ConfigError(std::string("model.") + key + " must be positive");
    };
    positive(layers, "layers");
    positive(modes, "modes");
    positive(width, "width");
    positive(in_channels, "in_channels");
    positive(out_channels, "out_channels");
    if (spade) {
        positive(spade_hidden, "spade_hidden");
        if (spade_classes < 2) throw ConfigError("model.spade_classes must be at least 2");
        if (spade_classes > 65535) throw ConfigError("model.spade_classes exceeds the label range");
    }
}

std::string format_model_config(const ModelConfig& c) {
    std::ostringstream out;
    out << "layers = " << c.layers << '\n'
        << "modes = " << c.modes << '\n'
        << "width = " << c.width << '\n'
        << "in_channels = " << c.in_channels << '\n'
        << "out_channels = " << c.out_channels << '\n'
        << "spade = " << (c.spade ? 1 : 0) << '\n'
        << "spade_hidden = " << c.spade_hidden << '\n'
        << "spade_classes = " << c.spade_classes << '\n'
        << "activation = " << activation_name(c.activation) << '\n';
    return out.str();
}

ModelConfig parse_model_config(const std::string& text) {
    ModelConfig c;
    std::map<std::string, int*> ints{{"layers", &c.layers},
                                     {"modes", &c.modes},
                                     {"width", &c.width},
                                     {"in_channels", &c.in_channels},
                                     {"out_channels", &c.out_channels},
                                     {"spade_hidden", &c.spade_hidden},
                                     {"spade_classes", &c.spade_classes}};
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("model config: malformed line '" + line + "'");
        auto trim = [](const std::string& s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
        if (key == "activation") {
            c.activation = parse_activation(value);
        } else if (key == "spade") {
            if (value != "0" && value != "1") throw ConfigError("model config: spade must be 0 or 1");
            c.spade = value == "1";
        } else if (auto it = ints.find(key); it != ints.end()) {
            int v = 0;
            const auto res = std::from_chars(value.data(), value.data() + value.size(), v);
            if (res.ec != std::errc() || res.ptr != value.data() + value.size())
                throw ConfigError("model config: non-integer value for " + key);
            *it->second = v;
        } else {
            throw ConfigError("model config: unknown key '" + key + "'");
        }
    }
    c.validate();
    return c;
}

ParamLayout param_layout(const ModelConfig& c) {
    const std::size_t w = c.width, h = c.spade_hidden, K = c.spade_classes;
    ParamLayout L{};
    std::size_t at = 0;
    auto take = [&](std::size_t n) {
        const std::size_t o = at;
        at += n;
        return o;
    };
    L.lift_w = take(w * c.in_channels);
    L.lift_b = take(w);
    for (int l = 0; l < c.layers; ++l) {
        LayerOffsets o{};
        o.spectral = take(2 * SpectralConv::weight_count(c.modes, c.width, c.width));
        o.local_w = take(w * w);
        o.local_b = take(w);
        if (c.spade) {
            o.conv1_w = take(h * K);
            o.conv1_b = take(h);
            o.gamma_w = take(w * h);
            o.gamma_b = take(w);
            o.beta_w = take(w * h);
            o.beta_b = take(w);
        }
        L.layers.push_back(o);
    }
    L.proj1_w = take(w * w);
    L.proj1_b = take(w);
    L.proj2_w = take(static_cast<std::size_t>(c.out_channels) * w);
    L.proj2_b = take(c.out_channels);
    L.total = at;
    return L;
}

std::vector<ParamGroup> param_groups(const ModelConfig& c) {
    const ParamLayout L = param_layout(c);
    std::vector<std::pair<std::string, std::size_t>> starts{{"lift.weight", L.lift_w}, {"lift.bias", L.lift_b}};
    for (int l = 0; l < c.layers; ++l) {
        const auto& o = L.layers[l];
        const std::string p = "layer" + std::to_string(l) + ".";
        starts.emplace_back(p + "spectral", o.spectral);
        starts.emplace_back(p + "local.weight", o.local_w);
        starts.emplace_back(p + "local.bias", o.local_b);
        if (c.spade) {
            starts.emplace_back(p + "spade.conv1.weight", o.conv1_w);
            starts.emplace_back(p + "spade.conv1.bias", o.conv1_b);
            starts.emplace_back(p + "spade.gamma.weight", o.gamma_w);
            starts.emplace_back(p + "spade.gamma.bias", o.gamma_b);
            starts.emplace_back(p + "spade.beta.weight", o.beta_w);
            starts.emplace_back(p + "spade.beta.bias", o.beta_b);
        }
    }
    starts.emplace_back("proj1.weight", L.proj1_w);
    starts.emplace_back("proj1.bias", L.proj1_b);
    starts.emplace_back("proj2.weight", L.proj2_w);
    starts.emplace_back("proj2.bias", L.proj2_b);
    std::vector<ParamGroup> groups;
    for (std::size_t i = 0; i < starts.size(); ++i) {
        const std::size_t end = i + 1 < starts.size() ? starts[i + 1].second : L.total;
        groups.push_back({starts[i].first, starts[i].second, end - starts[i].second});
    }
    return groups;
}

std::size_t spade_block_size(const ModelConfig& c) {
    const std::size_t w = c.width, h = c.spade_hidden, K = c.spade_classes;
    return h * K + h + 2 * (w * h + w);
}

std::size_t param_count(const ModelConfig& c) {
    const std::size_t w = c.width, m = c.modes, T = c.layers;
    const std::size_t per_layer = 2 * 4 * m * m * m * w * w + w * w + w + (c.spade ? spade_block_size(c) : 0);
    return w * c.in_channels + w + T * per_layer + w * w + w + c.out_channels * w + c.out_channels;
}

std::size_t param_count_complex_as_one(const ModelConfig& c) {
    return param_count(c) - static_cast<std::size_t>(c.layers) * SpectralConv::weight_count(c.modes, c.width, c.width);
}

Model::Model(const ModelConfig& c) : config(c), layout(param_layout(c)), params(layout.total, 0.0) {
    c.validate();
}

SpadeWeights Model::spade(int layer) const {
    const auto& o = layout.layers[layer];
    const double* p = params.data();
    return {config.spade_classes, config.spade_hidden, config.width, p + o.conv1_w, p + o.conv1_b,
            p + o.gamma_w,        p + o.gamma_b,       p + o.beta_w, p + o.beta_b};
}

Model init_model(const ModelConfig& c, std::uint64_t seed) {
    Model model(c);
    Rng rng(seed);
    double* p = model.params.data();
    auto uniform = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
        const double a = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t i = 0; i < n; ++i) p[off + i] = rng.uniform(-a, a);
    };
    const std::size_t w = c.width, h = c.spade_hidden, K = c.spade_classes;
    const ParamLayout& L = model.layout;
    uniform(L.lift_w, w * c.in_channels, c.in_channels);
    uniform(L.lift_b, w, c.in_channels);
    const double m3 = static_cast<double>(c.modes) * c.modes * c.modes;
    const double sd = std::sqrt(1.0 / (static_cast<double>(w) * m3) / 2.0);
    for (int l = 0; l < c.layers; ++l) {
        const auto& o = L.layers[l];
        const std::size_t n = 2 * SpectralConv::weight_count(c.modes, c.width, c.width);
        for (std::size_t i = 0; i < n; ++i) p[o.spectral + i] = sd * rng.normal();
        uniform(o.local_w, w * w, w);
        uniform(o.local_b, w, w);
        if (c.spade) {
            uniform(o.conv1_w, h * K, K);
            uniform(o.conv1_b, h, K);
            uniform(o.gamma_w, w * h, h);
            for (std::size_t i = 0; i < w; ++i) p[o.gamma_b + i] = 1.0;
            uniform(o.beta_w, w * h, h);
            uniform(o.beta_b, w, h);
        }
    }
    uniform(L.proj1_w, w * w, w);
    uniform(L.proj1_b, w, w);
    uniform(L.proj2_w, c.out_channels * w, w);
    uniform(L.proj2_b, c.out_channels, w);
    return model;
}

void check_forward_inputs(const Model& model, const RealVolume& x, const SegmentationMask* mask) {
    const ModelConfig& c = model.config;
    if (model.params.size() != param_count(c)) throw SizingError("model parameter vector has the wrong length");
    if (x.channels != c.in_channels)
        throw SizingError("model input has " + std::to_string(x.channels) + " channels, expected " +
                          std::to_string(c.in_channels));
    SpectralConv::check_capacity(x.grid, c.modes);
    if (c.spade) {
        if (mask == nullptr) throw ConfigError("model uses SPADE conditioning but no segmentation mask was given");
        if (!mask->grid.same_shape(x.grid))
            throw GeometryError("segmentation mask grid does not match the feature grid");
        for (auto l : mask->labels)
            if (l >= c.spade_classes)
                throw ConfigError("segmentation label " + std::to_string(l) + " exceeds model.spade_classes");
    }
}

RealVolume model_forward(const Model& model, const RealVolume& x, const SegmentationMask* mask) {
    check_forward_inputs(model, x, mask);
    const ModelConfig& c = model.config;
    const ParamLayout& L = model.layout;
    const double* p = model.params.data();
    const int w = c.width;

    const SpectralConv conv(x.grid, c.modes, w, w);
    RealVolume v(x.grid, w), z(x.grid, w);
    RealVolume normed;
    if (c.spade) normed = RealVolume(x.grid, w);
    pointwise_linear(x.data, c.in_channels, p + L.lift_w, p + L.lift_b, w, v.data);
    for (int l = 0; l < c.layers; ++l) {
        const auto& o = L.layers[l];
        conv.forward(v.data, model.spectral(l), z.data);
        pointwise_linear(v.data, w, p + o.local_w, p + o.local_b, w, z.data, true);
        if (c.spade) {
            instance_norm_forward(z.data, w, normed.data);
            spade_apply(spade_tables(model.spade(l), c.activation), w, mask->labels, normed.data, z.data);
        }
        if (l + 1 < c.layers)
            activation_forward(c.activation, z.data, v.data);
        else
            std::swap(v, z);
    }
    pointwise_linear(v.data, w, p + L.proj1_w, p + L.proj1_b, w, z.data);
    activation_forward(c.activation, z.data, z.data);
    RealVolume out(x.grid, c.out_channels);
    pointwise_linear(z.data, w, p + L.proj2_w, p + L.proj2_b, c.out_channels, out.data);
    require_finite(out, "model_forward");
    return out;
}

} // namespace onli
