#pragma once

#include <array>
#include <string>
#include <vector>

#include "onli/field/volume.hpp"

namespace onli {

enum class Face { x_low, x_high, y_low, y_high, z_low, z_high };

enum class BoundaryKind { sponge, free };

// Time-harmonic shear-wave problem, one scalar equation per displacement
// component (time convention e^{+i omega t}):
//   div(mu grad u) + rho omega^2 (1 - i s(x)) u = 0
// The x = 0 voxel plane is prescribed as the drive. Every other face is either
// a sponge (s ramps quadratically from 0 to sponge_strength over
// sponge_voxels, zero displacement beyond) or free (zero normal flux).
struct SolverConfig {
    double omega = 2.0 * 3.141592653589793 * 50.0;
    double density = 1000.0;
    std::array<double, 3> drive{0.0, 1.0, 0.0};
    // Faces x_high, y_low, y_high, z_low, z_high; x_low is the driven plane.
    std::array<BoundaryKind, 5> faces{BoundaryKind::sponge, BoundaryKind::sponge, BoundaryKind::sponge,
                                      BoundaryKind::sponge, BoundaryKind::sponge};
    int sponge_voxels = 6;
    double sponge_strength = 2.0;
    double tolerance = 1e-8;
    int max_iterations = 5000;
    // Grids up to this many voxels are factorized directly.
    std::size_t direct_limit = 48 * 48 * 48;

    void validate() const;
};

struct SolveReport {
    std::string method;
    double residual = 0.0;  // worst relative residual over components
    int refinements = 0;
    std::vector<double> history;
};

// Damping profile s(x) for the configuration.
std::vector<double> sponge_profile(const Grid3& g, const SolverConfig& cfg);

// Returns the 3-component displacement, the drive plane included.
ComplexVolume solve_forward(const ComplexVolume& mu, const SolverConfig& cfg, SolveReport* report = nullptr);

// ||A u - b|| / ||b|| per component, recomputed from the stencil without the
// assembled matrix; worst component returned. Components with no drive report
// ||A u|| relative to 1.
double forward_residual(const ComplexVolume& mu, const SolverConfig& cfg, const ComplexVolume& u);

} // namespace onli
