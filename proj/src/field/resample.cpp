#include "onli/field/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "onli/field/fft.hpp"

namespace onli {

void require_same_extent(const Grid3& s, const Grid3& t) {
    auto check = [](double a, double b, const char* axis) {
        if (std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(a)))
            throw GeometryError(std::string("resample: physical extent differs along ") + axis);
    };
    check(s.nx * s.dx, t.nx * t.dx, "x");
    check(s.ny * s.dy, t.ny * t.dy, "y");
    check(s.nz * s.dz, t.nz * t.dz, "z");
}

namespace {

struct Axis {
    std::vector<int> lo;
    std::vector<double> frac;
};

// Continuous source index of each target center, split into a base index and a
// weight toward base + 1.
Axis axis_weights(int n_src, double h_src, int n_dst, double h_dst) {
    Axis a;
    a.lo.resize(n_dst);
    a.frac.resize(n_dst);
    for (int i = 0; i < n_dst; ++i) {
        double s = (i + 0.5) * h_dst / h_src - 0.5;
        s = std::clamp(s, 0.0, static_cast<double>(n_src - 1));
        int lo = std::min(static_cast<int>(std::floor(s)), std::max(n_src - 2, 0));
        a.lo[i] = lo;
        a.frac[i] = n_src > 1 ? s - lo : 0.0;
    }
    return a;
}

template <class T>
Volume<T> trilinear(const Volume<T>& v, const Grid3& target) {
    if (v.grid == target) return v;
    require_same_extent(v.grid, target);
    const Grid3& g = v.grid;
    const Axis ax = axis_weights(g.nx, g.dx, target.nx, target.dx);
    const Axis ay = axis_weights(g.ny, g.dy, target.ny, target.dy);
    const Axis az = axis_weights(g.nz, g.dz, target.nz, target.dz);
    auto clamp_up = [](int i, int n) { return std::min(i + 1, n - 1); };

    Volume<T> out(target, v.channels);
    for (int c = 0; c < v.channels; ++c)
        for (int i = 0; i < target.nx; ++i) {
            const int x0 = ax.lo[i], x1 = clamp_up(x0, g.nx);
            const double fx = ax.frac[i];
            for (int j = 0; j < target.ny; ++j) {
                const int y0 = ay.lo[j], y1 = clamp_up(y0, g.ny);
                const double fy = ay.frac[j];
                for (int k = 0; k < target.nz; ++k) {
                    const int z0 = az.lo[k], z1 = clamp_up(z0, g.nz);
                    const double fz = az.frac[k];
                    auto lerp_z = [&](int x, int y) {
                        return v.at(c, x, y, z0) * (1.0 - fz) + v.at(c, x, y, z1) * fz;
                    };
                    const T c00 = lerp_z(x0, y0), c01 = lerp_z(x0, y1);
                    const T c10 = lerp_z(x1, y0), c11 = lerp_z(x1, y1);
                    const T c0 = c00 * (1.0 - fy) + c01 * fy;
                    const T c1 = c10 * (1.0 - fy) + c11 * fy;
                    out.at(c, i, j, k) = c0 * (1.0 - fx) + c1 * fx;
                }
            }
        }
    return out;
}

} // namespace

ComplexVolume resample_trilinear(const ComplexVolume& v, const Grid3& target) { return trilinear(v, target); }
RealVolume resample_trilinear(const RealVolume& v, const Grid3& target) { return trilinear(v, target); }

SegmentationMask resample_nearest(const SegmentationMask& mask, const Grid3& target) {
    if (mask.grid == target) return mask;
    require_same_extent(mask.grid, target);
    const Grid3& g = mask.grid;
    auto nearest = [](int i, int n_src, double h_src, double h_dst) {
        const double s = (i + 0.5) * h_dst / h_src;
        return std::clamp(static_cast<int>(std::floor(s)), 0, n_src - 1);
    };
    SegmentationMask out(target, mask.classes);
    for (int i = 0; i < target.nx; ++i) {
        const int si = nearest(i, g.nx, g.dx, target.dx);
        for (int j = 0; j < target.ny; ++j) {
            const int sj = nearest(j, g.ny, g.dy, target.dy);
            for (int k = 0; k < target.nz; ++k)
                out.at(i, j, k) = mask.at(si, sj, nearest(k, g.nz, g.dz, target.dz));
        }
    }
    return out;
}

RealVolume resample_spectral(const RealVolume& v, const Grid3& target) {
    if (v.grid == target) return v;
    require_same_extent(v.grid, target);
    const Grid3& s = v.grid;
    ComplexVolume cv(s, v.channels);
    for (std::size_t i = 0; i < v.data.size(); ++i) cv.data[i] = v.data[i];
    const ComplexVolume spec = fftn(cv);

    // Signed frequency kept only if strictly inside both Nyquist limits.
    auto keep = [](int k, int ns, int nt) {
        return 2 * std::abs(k) < ns && 2 * std::abs(k) < nt;
    };
    auto signed_k = [](int idx, int n) { return idx <= n / 2 ? idx : idx - n; };
    auto wrap = [](int k, int n) { return ((k % n) + n) % n; };
    // Sample i sits at (i + 1/2) h, so each grid carries a half-voxel phase.
    auto phase = [](int k, int n) { return std::numbers::pi * k / n; };

    ComplexVolume tspec(target, v.channels);
    const double scale = static_cast<double>(target.voxels()) / static_cast<double>(s.voxels());
    for (int c = 0; c < v.channels; ++c)
        for (int ix = 0; ix < s.nx; ++ix) {
            const int kx = signed_k(ix, s.nx);
            if (!keep(kx, s.nx, target.nx)) continue;
            for (int iy = 0; iy < s.ny; ++iy) {
                const int ky = signed_k(iy, s.ny);
                if (!keep(ky, s.ny, target.ny)) continue;
                for (int iz = 0; iz < s.nz; ++iz) {
                    const int kz = signed_k(iz, s.nz);
                    if (!keep(kz, s.nz, target.nz)) continue;
                    const double shift = -phase(kx, s.nx) - phase(ky, s.ny) - phase(kz, s.nz) +
                                         phase(kx, target.nx) + phase(ky, target.ny) + phase(kz, target.nz);
                    tspec.at(c, wrap(kx, target.nx), wrap(ky, target.ny), wrap(kz, target.nz)) =
                        spec.at(c, ix, iy, iz) * std::polar(scale, shift);
                }
            }
        }
    const ComplexVolume back = fftn(tspec, true);
    RealVolume out(target, v.channels);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = back.data[i].real();
    return out;
}

} // namespace onli
