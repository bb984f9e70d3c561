#pragma once

#include <cstdint>
#include <vector>

#include "onli/field/volume.hpp"

namespace onli {

struct InversionResult {
    ComplexVolume mu;            // C = 1; 0 where invalid
    std::vector<std::uint8_t> valid;  // 1 per voxel with a usable estimate
    double floor = 0.0;          // Laplacian magnitude floor that was applied

    std::size_t valid_count() const;
};

// Algebraic Helmholtz inversion mu = -rho omega^2 u / lap(u) on a field of any
// channel count (displacement or its curl). Components are combined by least
// squares, which weights each by |lap u_c|^2. Only voxels with all six
// neighbors are evaluated; components whose Laplacian magnitude does not exceed
// 1e-8 times the median per-voxel Laplacian magnitude are dropped.
InversionResult direct_inversion(const ComplexVolume& u, double density, double omega);

// Same 7-point Laplacian the inversion uses; boundary voxels are left at 0.
std::vector<std::complex<double>> laplacian(const ComplexVolume& u, int c);

inline constexpr double laplacian_floor_factor = 1e-8;

} // namespace onli
