#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "onli/field/volume.hpp"

namespace onli {

// Real displacement samples r(x, t): 3 directions x (frames * periods) x voxels.
// Frame j of each period is taken at t = j * dt with frames * dt = period.
struct TimeSeriesField {
    Grid3 grid;
    int frames = 0;
    int periods = 1;
    double dt = 0.0;
    double period = 0.0;
    double omega = 0.0;
    std::vector<double> data;

    TimeSeriesField() = default;
    TimeSeriesField(const Grid3& g, int frames, double period_s, int periods = 1);

    std::size_t total_frames() const { return static_cast<std::size_t>(frames) * periods; }
    double& at(int direction, std::size_t frame, std::size_t voxel) {
        return data[(static_cast<std::size_t>(direction) * total_frames() + frame) * grid.voxels() + voxel];
    }
    double at(int direction, std::size_t frame, std::size_t voxel) const {
        return data[(static_cast<std::size_t>(direction) * total_frames() + frame) * grid.voxels() + voxel];
    }
};

// u(x) = (1/Nt) sum_j r(x, t_j) exp(-i omega t_j), the temporal Fourier
// coefficient at the actuation frequency. Multi-period records are averaged
// over periods first.
ComplexVolume extract_harmonic(const TimeSeriesField& ts);

// Curl of a 3-component field: second-order central differences inside,
// second-order one-sided differences on the boundary planes.
ComplexVolume curl(const ComplexVolume& u);

// Derivative of channel c along axis (0 = x, 1 = y, 2 = z) with the same stencils.
std::vector<std::complex<double>> partial_derivative(const ComplexVolume& u, int c, int axis);

inline constexpr int input_channels = 7;
inline constexpr int target_channels = 2;

// 7 channels: Re curl x/y/z, Im curl x/y/z, f_hz / 100.
RealVolume assemble_input(const ComplexVolume& curl_field, double f_hz);

struct SplitInput {
    ComplexVolume curl;
    double f_hz;
};
SplitInput split_input(const RealVolume& input);

// Storage / loss modulus channels from a complex modulus field with C = 1.
RealVolume modulus_target(const ComplexVolume& mu);

enum class Role { input, target };

struct NormalizerStats {
    std::vector<double> input_mean, input_std;
    std::vector<double> target_mean, target_std;

    const std::vector<double>& mean(Role r) const { return r == Role::input ? input_mean : target_mean; }
    const std::vector<double>& stdev(Role r) const { return r == Role::input ? input_std : target_std; }
};

inline constexpr double normalizer_std_floor = 1e-8;

// Per-channel mean and population standard deviation pooled over every voxel
// of every sample. Requires at least two samples.
NormalizerStats fit_normalizer(std::span<const RealVolume> inputs, std::span<const RealVolume> targets);

RealVolume normalize(const RealVolume& v, const NormalizerStats& stats, Role role);
RealVolume denormalize(const RealVolume& v, const NormalizerStats& stats, Role role);

// Key-value text, one "role.channel.field = value" line per statistic, 17
// significant digits.
std::string format_normalizer(const NormalizerStats& stats);
NormalizerStats parse_normalizer(const std::string& text);
void save_normalizer(const std::filesystem::path& path, const NormalizerStats& stats);
NormalizerStats load_normalizer(const std::filesystem::path& path);

} // namespace onli
