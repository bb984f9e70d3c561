#include "onli/physics/inversion.hpp"

#include <algorithm>
#include <cmath>

namespace onli {

using cd = std::complex<double>;

std::size_t InversionResult::valid_count() const {
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

std::vector<cd> laplacian(const ComplexVolume& u, int c) {
    const Grid3& g = u.grid;
    const auto f = u.channel(c);
    std::vector<cd> out(g.voxels(), cd{});
    const std::size_t sx = static_cast<std::size_t>(g.ny) * g.nz, sy = g.nz;
    const double hx = 1.0 / (g.dx * g.dx), hy = 1.0 / (g.dy * g.dy), hz = 1.0 / (g.dz * g.dz);
    for (int i = 1; i + 1 < g.nx; ++i)
        for (int j = 1; j + 1 < g.ny; ++j)
            for (int k = 1; k + 1 < g.nz; ++k) {
                const std::size_t p = g.index(i, j, k);
                const cd two = 2.0 * f[p];
                out[p] = (f[p - sx] + f[p + sx] - two) * hx + (f[p - sy] + f[p + sy] - two) * hy +
                         (f[p - 1] + f[p + 1] - two) * hz;
            }
    return out;
}

InversionResult direct_inversion(const ComplexVolume& u, double density, double omega) {
    if (u.channels < 1) throw SizingError("direct_inversion needs at least one component");
    if (!(density > 0.0) || !(omega > 0.0)) throw ConfigError("direct_inversion: density and omega must be positive");
    const Grid3& g = u.grid;
    if (g.nx < 3 || g.ny < 3 || g.nz < 3) throw SizingError("direct_inversion needs at least 3 voxels per axis");
    std::vector<std::vector<cd>> lap;
    for (int c = 0; c < u.channels; ++c) lap.push_back(laplacian(u, c));

    std::vector<std::size_t> interior;
    for (int i = 1; i + 1 < g.nx; ++i)
        for (int j = 1; j + 1 < g.ny; ++j)
            for (int k = 1; k + 1 < g.nz; ++k) interior.push_back(g.index(i, j, k));
    std::vector<double> mag;
    mag.reserve(interior.size());
    for (std::size_t p : interior) {
        double s = 0.0;
        for (const auto& l : lap) s += std::norm(l[p]);
        mag.push_back(std::sqrt(s));
    }
    std::nth_element(mag.begin(), mag.begin() + mag.size() / 2, mag.end());
    const double eps = laplacian_floor_factor * mag[mag.size() / 2];

    InversionResult r{ComplexVolume(g, 1), std::vector<std::uint8_t>(g.voxels(), 0), eps};
    const double k2 = density * omega * omega;
    for (std::size_t p : interior) {
        cd num{};
        double den = 0.0;
        for (int c = 0; c < u.channels; ++c) {
            const cd l = lap[c][p];
            if (!(std::abs(l) > eps)) continue;
            num += std::conj(l) * u.channel(c)[p];
            den += std::norm(l);
        }
        if (den == 0.0) continue;
        r.mu.data[p] = -k2 * num / den;
        r.valid[p] = 1;
    }
    return r;
}

} // namespace onli
