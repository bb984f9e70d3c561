#include "onli/preprocess/preprocess.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include "onli/log.hpp"

namespace onli {

TimeSeriesField::TimeSeriesField(const Grid3& g, int frames_, double period_s, int periods_)
    : grid(g), frames(frames_), periods(periods_), dt(period_s / frames_), period(period_s),
      omega(2.0 * std::numbers::pi / period_s) {
    if (frames < 4) throw SizingError("time series needs at least 4 frames per period");
    if (periods < 1) throw SizingError("time series needs at least one period");
    if (!(period_s > 0.0)) throw ContractError("period must be positive");
    data.assign(3 * total_frames() * g.voxels(), 0.0);
}

ComplexVolume extract_harmonic(const TimeSeriesField& ts) {
    if (ts.frames < 4) throw SizingError("extract_harmonic: fewer than 4 frames per period");
    if (std::abs(ts.frames * ts.dt - ts.period) > 1e-9 * ts.period)
        throw ContractError("extract_harmonic: frames do not span exactly one period");
    if (std::abs(ts.omega * ts.period - 2.0 * std::numbers::pi) > 1e-9)
        throw ContractError("extract_harmonic: omega is not the fundamental of the sampled period");
    if (ts.data.size() != 3 * ts.total_frames() * ts.grid.voxels())
        throw SizingError("extract_harmonic: data length does not match shape");

    const std::size_t n = ts.grid.voxels();
    std::vector<std::complex<double>> kernel(static_cast<std::size_t>(ts.frames));
    for (int j = 0; j < ts.frames; ++j) kernel[j] = std::polar(1.0, -ts.omega * ts.dt * j);
    const double scale = 1.0 / (static_cast<double>(ts.frames) * ts.periods);

    ComplexVolume u(ts.grid, 3);
    for (int d = 0; d < 3; ++d) {
        auto out = u.channel(d);
        for (int p = 0; p < ts.periods; ++p)
            for (int j = 0; j < ts.frames; ++j) {
                const auto w = kernel[j] * scale;
                const std::size_t frame = static_cast<std::size_t>(p) * ts.frames + j;
                for (std::size_t v = 0; v < n; ++v) out[v] += ts.at(d, frame, v) * w;
            }
    }
    require_finite(u, "extract_harmonic");
    return u;
}

std::vector<std::complex<double>> partial_derivative(const ComplexVolume& u, int c, int axis) {
    const Grid3& g = u.grid;
    g.require_min_extent(4, "finite-difference stencil");
    const int n = axis == 0 ? g.nx : (axis == 1 ? g.ny : g.nz);
    const double h = axis == 0 ? g.dx : (axis == 1 ? g.dy : g.dz);
    const std::size_t stride = axis == 0 ? static_cast<std::size_t>(g.ny) * g.nz : (axis == 1 ? g.nz : 1);
    const double inv2h = 1.0 / (2.0 * h);

    std::vector<std::complex<double>> out(g.voxels());
    const auto f = u.channel(c);
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j)
            for (int k = 0; k < g.nz; ++k) {
                const std::size_t p = g.index(i, j, k);
                const int pos = axis == 0 ? i : (axis == 1 ? j : k);
                std::complex<double> d;
                if (pos == 0) d = (-3.0 * f[p] + 4.0 * f[p + stride] - f[p + 2 * stride]) * inv2h;
                else if (pos == n - 1) d = (3.0 * f[p] - 4.0 * f[p - stride] + f[p - 2 * stride]) * inv2h;
                else d = (f[p + stride] - f[p - stride]) * inv2h;
                out[p] = d;
            }
    return out;
}

ComplexVolume curl(const ComplexVolume& u) {
    if (u.channels != 3) throw SizingError("curl needs a 3-component field");
    u.grid.require_min_extent(4, "curl stencil");
    const auto dzy = partial_derivative(u, 2, 1), dyz = partial_derivative(u, 1, 2);
    const auto dxz = partial_derivative(u, 0, 2), dzx = partial_derivative(u, 2, 0);
    const auto dyx = partial_derivative(u, 1, 0), dxy = partial_derivative(u, 0, 1);
    ComplexVolume out(u.grid, 3);
    const std::size_t n = u.voxels();
    for (std::size_t v = 0; v < n; ++v) {
        out.data[v] = dzy[v] - dyz[v];
        out.data[n + v] = dxz[v] - dzx[v];
        out.data[2 * n + v] = dyx[v] - dxy[v];
    }
    return out;
}

RealVolume assemble_input(const ComplexVolume& c, double f_hz) {
    if (c.channels != 3) throw SizingError("assemble_input needs a 3-component curl");
    if (!(f_hz > 0.0)) throw ContractError("assemble_input: frequency must be positive");
    RealVolume out(c.grid, input_channels);
    const std::size_t n = c.voxels();
    for (int d = 0; d < 3; ++d) {
        const auto src = c.channel(d);
        auto re = out.channel(d);
        auto im = out.channel(3 + d);
        for (std::size_t v = 0; v < n; ++v) {
            re[v] = src[v].real();
            im[v] = src[v].imag();
        }
    }
    const double f = f_hz / 100.0;
    for (auto& x : out.channel(6)) x = f;
    return out;
}

SplitInput split_input(const RealVolume& in) {
    if (in.channels != input_channels) throw SizingError("split_input expects 7 channels");
    SplitInput s{ComplexVolume(in.grid, 3), in.channel(6)[0] * 100.0};
    const std::size_t n = in.voxels();
    for (int d = 0; d < 3; ++d) {
        auto dst = s.curl.channel(d);
        const auto re = in.channel(d);
        const auto im = in.channel(3 + d);
        for (std::size_t v = 0; v < n; ++v) dst[v] = {re[v], im[v]};
    }
    return s;
}

RealVolume modulus_target(const ComplexVolume& mu) {
    if (mu.channels != 1) throw SizingError("modulus_target expects a single complex channel");
    RealVolume out(mu.grid, target_channels);
    const std::size_t n = mu.voxels();
    for (std::size_t v = 0; v < n; ++v) {
        out.data[v] = mu.data[v].real();
        out.data[n + v] = mu.data[v].imag();
    }
    return out;
}

namespace {

// Running per-channel moments, merged sample by sample (Chan et al.).
struct Moments {
    double count = 0.0, mean = 0.0, m2 = 0.0;

    void merge(std::span<const double> xs) {
        if (xs.empty()) return;
        double s = 0.0;
        for (double x : xs) s += x;
        const double nb = static_cast<double>(xs.size());
        const double mb = s / nb;
        double m2b = 0.0;
        for (double x : xs) m2b += (x - mb) * (x - mb);
        const double n = count + nb;
        const double delta = mb - mean;
        mean += delta * nb / n;
        m2 += m2b + delta * delta * count * nb / n;
        count = n;
    }
};

void fit_role(std::span<const RealVolume> samples, const char* role, std::vector<double>& mean,
              std::vector<double>& stdev) {
    const int c = samples.front().channels;
    std::vector<Moments> acc(static_cast<std::size_t>(c));
    for (const auto& s : samples) {
        if (s.channels != c) throw SizingError(std::string("fit_normalizer: inconsistent ") + role + " channels");
        for (int ch = 0; ch < c; ++ch) acc[ch].merge(s.channel(ch));
    }
    mean.resize(c);
    stdev.resize(c);
    for (int ch = 0; ch < c; ++ch) {
        mean[ch] = acc[ch].mean;
        double sd = std::sqrt(acc[ch].m2 / acc[ch].count);
        if (!std::isfinite(mean[ch]) || !std::isfinite(sd))
            throw NumericalError(std::string("fit_normalizer: non-finite ") + role + " statistics in channel " +
                                 std::to_string(ch));
        if (!(sd >= normalizer_std_floor)) {
            warn(std::string("fit_normalizer: ") + role + " channel " + std::to_string(ch) +
                 " is constant; standard deviation floored");
            sd = normalizer_std_floor;
        }
        stdev[ch] = sd;
    }
}

RealVolume affine(const RealVolume& v, const NormalizerStats& stats, Role role, bool forward) {
    const auto& mean = stats.mean(role);
    const auto& sd = stats.stdev(role);
    if (static_cast<std::size_t>(v.channels) != mean.size())
        throw SizingError("normalizer channel count does not match volume");
    RealVolume out(v.grid, v.channels);
    for (int c = 0; c < v.channels; ++c) {
        const auto src = v.channel(c);
        auto dst = out.channel(c);
        if (forward)
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = (src[i] - mean[c]) / sd[c];
        else
            for (std::size_t i = 0; i < src.size(); ++i) dst[i] = src[i] * sd[c] + mean[c];
    }
    return out;
}

} // namespace

NormalizerStats fit_normalizer(std::span<const RealVolume> inputs, std::span<const RealVolume> targets) {
    if (inputs.size() < 2 || targets.size() < 2)
        throw SizingError("fit_normalizer needs at least two samples");
    NormalizerStats s;
    fit_role(inputs, "input", s.input_mean, s.input_std);
    fit_role(targets, "target", s.target_mean, s.target_std);
    return s;
}

RealVolume normalize(const RealVolume& v, const NormalizerStats& stats, Role role) {
    return affine(v, stats, role, true);
}

RealVolume denormalize(const RealVolume& v, const NormalizerStats& stats, Role role) {
    return affine(v, stats, role, false);
}

std::string format_normalizer(const NormalizerStats& stats) {
    std::ostringstream out;
    out.precision(17);
    auto dump = [&](const char* role, const std::vector<double>& mean, const std::vector<double>& sd) {
        for (std::size_t c = 0; c < mean.size(); ++c) {
            out << role << '.' << c << ".mean = " << mean[c] << '\n';
            out << role << '.' << c << ".std = " << sd[c] << '\n';
        }
    };
    dump("input", stats.input_mean, stats.input_std);
    dump("target", stats.target_mean, stats.target_std);
    return out.str();
}

NormalizerStats parse_normalizer(const std::string& text) {
    std::map<std::string, double> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("normalizer file: malformed line '" + line + "'");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        double x = 0.0;
        const auto res = std::from_chars(value.data(), value.data() + value.size(), x);
        if (res.ec != std::errc() || res.ptr != value.data() + value.size())
            throw ConfigError("normalizer file: non-numeric value for " + key);
        kv[key] = x;
    }
    NormalizerStats s;
    auto collect = [&](const std::string& role, std::vector<double>& mean, std::vector<double>& sd) {
        for (std::size_t c = 0;; ++c) {
            const auto m = kv.find(role + "." + std::to_string(c) + ".mean");
            const auto d = kv.find(role + "." + std::to_string(c) + ".std");
            if (m == kv.end() && d == kv.end()) break;
            if (m == kv.end() || d == kv.end())
                throw ConfigError("normalizer file: incomplete entry for " + role + " channel " + std::to_string(c));
            mean.push_back(m->second);
            sd.push_back(d->second);
        }
    };
    collect("input", s.input_mean, s.input_std);
    collect("target", s.target_mean, s.target_std);
    if (s.input_mean.empty() || s.target_mean.empty()) throw ConfigError("normalizer file: missing statistics");
    return s;
}

void save_normalizer(const std::filesystem::path& path, const NormalizerStats& stats) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << format_normalizer(stats);
}

NormalizerStats load_normalizer(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_normalizer(buf.str());
}

} // namespace onli
