#include "onli/field/volume.hpp"

#include <cmath>
#include <string>

namespace onli {

Grid3::Grid3(int nx_, int ny_, int nz_, double dx_, double dy_, double dz_)
    : nx(nx_), ny(ny_), nz(nz_), dx(dx_), dy(dy_), dz(dz_) {
    if (nx <= 0 || ny <= 0 || nz <= 0) throw SizingError("grid counts must be positive");
    if (!(dx > 0.0) || !(dy > 0.0) || !(dz > 0.0)) throw GeometryError("grid spacing must be positive");
    constexpr std::size_t limit = std::size_t{1} << 40;
    if (voxels() > limit) throw SizingError("grid exceeds the supported voxel count");
}

void Grid3::require_min_extent(int n, const char* what) const {
    const char* axis = nullptr;
    if (nx < n) axis = "x";
    else if (ny < n) axis = "y";
    else if (nz < n) axis = "z";
    if (axis != nullptr) {
        throw SizingError(std::string(what) + ": grid axis " + axis + " has fewer than " + std::to_string(n) +
                          " voxels");
    }
}

void require_finite(const RealVolume& v, const char* what) {
    for (double x : v.data)
        if (!std::isfinite(x)) throw NumericalError(std::string(what) + ": non-finite sample");
}

void require_finite(const ComplexVolume& v, const char* what) {
    for (const auto& z : v.data)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            throw NumericalError(std::string(what) + ": non-finite sample");
}

SegmentationMask::SegmentationMask(const Grid3& g, int k) : grid(g), classes(k), labels(g.voxels(), 0) {
    if (k < 2) throw SizingError("segmentation mask needs at least two classes");
}

SegmentationMask::SegmentationMask(const Grid3& g, int k, std::vector<std::uint16_t> values)
    : grid(g), classes(k), labels(std::move(values)) {
    if (labels.size() != g.voxels()) throw SizingError("mask label count does not match grid");
    validate();
}

void SegmentationMask::validate() const {
    if (classes < 2) throw SizingError("segmentation mask needs at least two classes");
    for (auto l : labels)
        if (l >= classes) throw SizingError("mask label " + std::to_string(l) + " exceeds class count");
}

std::vector<std::size_t> SegmentationMask::histogram() const {
    std::vector<std::size_t> h(static_cast<std::size_t>(classes), 0);
    for (auto l : labels) ++h[l];
    return h;
}

RealVolume SegmentationMask::one_hot() const {
    RealVolume out(grid, classes);
    const std::size_t n = grid.voxels();
    for (std::size_t v = 0; v < n; ++v) out.data[labels[v] * n + v] = 1.0;
    return out;
}

RealVolume real_part(const ComplexVolume& v) {
    RealVolume out(v.grid, v.channels);
    for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = v.data[i].real();
    return out;
}

RealVolume imag_part(const ComplexVolume& v) {
    RealVolume out(v.grid, v.channels);
    for (std::size_t i = 0; i < v.data.size(); ++i) out.data[i] = v.data[i].imag();
    return out;
}

ComplexVolume make_complex(const RealVolume& re, const RealVolume& im) {
    if (re.grid != im.grid || re.channels != im.channels)
        throw GeometryError("real and imaginary parts differ in shape");
    ComplexVolume out(re.grid, re.channels);
    for (std::size_t i = 0; i < re.data.size(); ++i) out.data[i] = {re.data[i], im.data[i]};
    return out;
}

} // namespace onli
