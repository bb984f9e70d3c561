#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "onli/field/volume.hpp"

namespace onli {

// Undefined statistic: zero variance, zero reference, empty dynamic range.
class DegenerateError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class EmptyRegionError : public GeometryError {
public:
    using GeometryError::GeometryError;
};

// Region names for mask labels; labels past the table are "label_N".
std::string region_name(int label);
inline constexpr const char* whole_region = "whole";

double regional_mean(const RealVolume& vol, int channel, const SegmentationMask& mask, int label);

double pearson_r(std::span<const double> x, std::span<const double> y);

double ape(double pred_mean, double gt_mean);

struct SsimOptions {
    double sigma = 1.5;
    int radius = 5;  // 11^3 support
    std::optional<double> range;  // L; default max - min of the truth inside the mask
};

// Mean local SSIM of channel ca of a against channel cb of b (b is the
// reference). Window statistics use every voxel of the truncated Gaussian
// window inside the grid, renormalized at the faces; only window centers
// inside `region` of the mask are averaged (all voxels when mask is null).
double ssim3d(const RealVolume& a, const RealVolume& b, const SegmentationMask* mask = nullptr, int region = -1,
              const SsimOptions& opt = {}, int ca = 0, int cb = 0);

inline constexpr double damping_floor_pa = 1.0;

struct DerivedMaps {
    RealVolume magnitude;
    RealVolume damping;                // mu'' / (2 mu'); 0 where invalid
    std::vector<std::uint8_t> valid;   // damping defined (mu' > floor)
};

DerivedMaps derived_maps(const RealVolume& mu);

struct TTest {
    double t = 0.0;
    double p = 1.0;
    int df = 0;
};

TTest paired_t_test(std::span<const double> a, std::span<const double> b);

enum class CiMethod { normal, student_t };

CiMethod parse_ci_method(const std::string& s);

struct FoldStats {
    std::vector<double> losses;
    double mean = 0.0, std = 0.0, ci_low = 0.0, ci_high = 0.0;
    bool single = false;  // one fold: std and CI collapse to the mean
};

FoldStats fold_stats(std::span<const double> losses, CiMethod method = CiMethod::normal);

} // namespace onli
