#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "onli/error.hpp"

namespace onli {

// Regular voxel grid. Spacing is in meters. Voxel (i, j, k) has its center at
// ((i + 0.5) dx, (j + 0.5) dy, (k + 0.5) dz).
struct Grid3 {
    int nx = 0, ny = 0, nz = 0;
    double dx = 1.0, dy = 1.0, dz = 1.0;

    Grid3() = default;
    Grid3(int nx_, int ny_, int nz_, double dx_ = 1.0, double dy_ = 1.0, double dz_ = 1.0);

    static Grid3 cube(int n, double h = 1.0) { return Grid3(n, n, n, h, h, h); }

    std::size_t voxels() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * ny + j) * nz + k;
    }
    bool same_shape(const Grid3& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }
    bool operator==(const Grid3& o) const = default;

    // All counts >= n; throws SizingError naming the axis otherwise.
    void require_min_extent(int n, const char* what) const;
};

// C x nx x ny x nz samples, channel-major, then x, y, z (z fastest).
template <class T>
struct Volume {
    Grid3 grid;
    int channels = 0;
    std::vector<T> data;

    Volume() = default;
    Volume(const Grid3& g, int c) : grid(g), channels(c), data(g.voxels() * static_cast<std::size_t>(c)) {
        if (c <= 0) throw SizingError("volume channel count must be positive");
    }
    Volume(const Grid3& g, int c, std::vector<T> values) : grid(g), channels(c), data(std::move(values)) {
        if (c <= 0) throw SizingError("volume channel count must be positive");
        if (data.size() != g.voxels() * static_cast<std::size_t>(c))
            throw SizingError("volume data length does not match C*nx*ny*nz");
    }

    std::size_t voxels() const { return grid.voxels(); }

    std::span<T> channel(int c) { return {data.data() + static_cast<std::size_t>(c) * voxels(), voxels()}; }
    std::span<const T> channel(int c) const {
        return {data.data() + static_cast<std::size_t>(c) * voxels(), voxels()};
    }

    T& at(int c, int i, int j, int k) { return data[static_cast<std::size_t>(c) * voxels() + grid.index(i, j, k)]; }
    const T& at(int c, int i, int j, int k) const {
        return data[static_cast<std::size_t>(c) * voxels() + grid.index(i, j, k)];
    }

    bool operator==(const Volume& o) const = default;
};

using ComplexVolume = Volume<std::complex<double>>;
using RealVolume = Volume<double>;

// Throws NumericalError if any sample is NaN or infinite.
void require_finite(const RealVolume& v, const char* what);
void require_finite(const ComplexVolume& v, const char* what);

struct SegmentationMask {
    Grid3 grid;
    int classes = 6;
    std::vector<std::uint16_t> labels;

    SegmentationMask() = default;
    SegmentationMask(const Grid3& g, int k);
    SegmentationMask(const Grid3& g, int k, std::vector<std::uint16_t> values);

    std::uint16_t& at(int i, int j, int k) { return labels[grid.index(i, j, k)]; }
    std::uint16_t at(int i, int j, int k) const { return labels[grid.index(i, j, k)]; }

    // Voxel count per class.
    std::vector<std::size_t> histogram() const;
    // K-channel one-hot encoding.
    RealVolume one_hot() const;
    // Throws if any label >= classes or classes < 2.
    void validate() const;

    bool operator==(const SegmentationMask& o) const = default;
};

RealVolume real_part(const ComplexVolume& v);
RealVolume imag_part(const ComplexVolume& v);
ComplexVolume make_complex(const RealVolume& re, const RealVolume& im);

} // namespace onli
