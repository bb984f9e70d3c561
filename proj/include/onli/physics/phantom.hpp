#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "onli/field/volume.hpp"

namespace onli {

enum class Shape { sphere, box, ellipsoid };

Shape parse_shape(const std::string& name);
std::string shape_name(Shape s);

// Center and size in meters. size is the radius for a sphere, the half-extents
// for a box and the semi-axes for an ellipsoid (sphere uses size[0] only).
struct Inclusion {
    Shape shape = Shape::sphere;
    std::array<double, 3> center{};
    std::array<double, 3> size{};
    double storage = 2500.0;  // Pa
    double loss = 500.0;      // Pa
    int label = 1;
};

struct PhantomSpec {
    Grid3 grid;
    double storage = 2500.0;
    double loss = 500.0;
    std::vector<Inclusion> inclusions;
    double density = 1000.0;
    double blur_voxels = 1.0;  // Gaussian sigma applied to the modulus field; 0 disables
    int classes = 6;
    // Relative amplitude of a smooth random texture on the modulus, drawn from the seed.
    double texture = 0.0;

    void validate() const;
};

struct Phantom {
    ComplexVolume mu;  // C = 1, mu' + i mu''
    SegmentationMask mask;
};

// Mask labels come from the un-blurred shapes (voxel centers inside the
// shape); later inclusions overwrite earlier ones, with a warning.
Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed);

bool inside(const Inclusion& inc, double x, double y, double z);

// Random brain-like phantoms. Each inclusion class has its own storage
// modulus band, so the mask is informative about stiffness.
struct PhantomDistribution {
    Grid3 grid = Grid3::cube(32, 2e-3);
    int min_inclusions = 2, max_inclusions = 4;
    double background_min = 2300.0, background_max = 2700.0;
    // Storage band per inclusion class 1..classes-1.
    std::vector<std::array<double, 2>> class_storage{
        {1500.0, 1900.0}, {1900.0, 2300.0}, {2300.0, 2700.0}, {2700.0, 3100.0}, {3100.0, 3500.0}};
    double loss_ratio_min = 0.23, loss_ratio_max = 0.27;  // mu'' / mu' of the background
    // Damping band per inclusion class; empty means the background range.
    std::vector<std::array<double, 2>> class_loss_ratio{
        {0.15, 0.19}, {0.19, 0.23}, {0.23, 0.27}, {0.27, 0.31}, {0.31, 0.35}};
    double radius_min_voxels = 3.0, radius_max_voxels = 7.0;
    int margin_voxels = 7;  // inclusion centers stay this far from every face
    double blur_voxels = 1.0;
    double texture = 0.0;

    void validate() const;
};

PhantomSpec sample_phantom_spec(const PhantomDistribution& dist, std::uint64_t seed);

} // namespace onli
