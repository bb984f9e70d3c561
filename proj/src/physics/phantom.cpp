#include "onli/physics/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "onli/log.hpp"
#include "onli/random.hpp"

namespace onli {

Shape parse_shape(const std::string& name) {
    if (name == "sphere") return Shape::sphere;
    if (name == "box") return Shape::box;
    if (name == "ellipsoid") return Shape::ellipsoid;
    throw ConfigError("unknown inclusion shape '" + name + "'");
}

std::string shape_name(Shape s) {
    switch (s) {
    case Shape::sphere: return "sphere";
    case Shape::box: return "box";
    case Shape::ellipsoid: return "ellipsoid";
    }
    return "?";
}

void PhantomSpec::validate() const {
    if (!(storage > 0.0)) throw ConfigError("phantom.storage must be positive (got " + std::to_string(storage) + ")");
    if (!(loss >= 0.0)) throw ConfigError("phantom.loss must be non-negative");
    if (!(density > 0.0)) throw ConfigError("phantom.density must be positive");
    if (!(blur_voxels >= 0.0)) throw ConfigError("phantom.blur must be non-negative");
    if (!(texture >= 0.0 && texture < 1.0)) throw ConfigError("phantom.texture must lie in [0, 1)");
    if (classes < 2 || classes > 65535) throw ConfigError("phantom.classes must lie in [2, 65535]");
    const double ext[3] = {grid.nx * grid.dx, grid.ny * grid.dy, grid.nz * grid.dz};
    for (std::size_t i = 0; i < inclusions.size(); ++i) {
        const auto& inc = inclusions[i];
        const std::string tag = "inclusion " + std::to_string(i) + ": ";
        if (!(inc.storage > 0.0)) throw ConfigError(tag + "storage modulus must be positive");
        if (!(inc.loss >= 0.0)) throw ConfigError(tag + "loss modulus must be non-negative");
        if (inc.label < 1 || inc.label >= classes) throw ConfigError(tag + "label outside 1..classes-1");
        for (int a = 0; a < 3; ++a) {
            if (!(inc.center[a] >= 0.0 && inc.center[a] <= ext[a])) throw ConfigError(tag + "center outside the grid");
            if (!(inc.size[a] > 0.0) && (a == 0 || inc.shape != Shape::sphere))
                throw ConfigError(tag + "size must be positive");
        }
    }
}

bool inside(const Inclusion& inc, double x, double y, double z) {
    const double d[3] = {x - inc.center[0], y - inc.center[1], z - inc.center[2]};
    switch (inc.shape) {
    case Shape::sphere: return d[0] * d[0] + d[1] * d[1] + d[2] * d[2] <= inc.size[0] * inc.size[0];
    case Shape::box:
        return std::abs(d[0]) <= inc.size[0] && std::abs(d[1]) <= inc.size[1] && std::abs(d[2]) <= inc.size[2];
    case Shape::ellipsoid: {
        double s = 0.0;
        for (int a = 0; a < 3; ++a) s += (d[a] / inc.size[a]) * (d[a] / inc.size[a]);
        return s <= 1.0;
    }
    }
    return false;
}

namespace {

// Separable Gaussian blur, truncated at 3 sigma and renormalized at the faces.
void blur(std::vector<double>& f, const Grid3& g, double sigma) {
    if (sigma <= 0.0) return;
    const int r = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> w(2 * r + 1);
    for (int t = -r; t <= r; ++t) w[t + r] = std::exp(-0.5 * t * t / (sigma * sigma));
    const int n[3] = {g.nx, g.ny, g.nz};
    const std::size_t stride[3] = {static_cast<std::size_t>(g.ny) * g.nz, static_cast<std::size_t>(g.nz), 1};
    std::vector<double> out(f.size());
    for (int axis = 0; axis < 3; ++axis) {
        for (int i = 0; i < g.nx; ++i)
            for (int j = 0; j < g.ny; ++j)
                for (int k = 0; k < g.nz; ++k) {
                    const int pos = axis == 0 ? i : (axis == 1 ? j : k);
                    const std::size_t p = g.index(i, j, k);
                    double s = 0.0, ws = 0.0;
                    for (int t = -r; t <= r; ++t) {
                        const int q = pos + t;
                        if (q < 0 || q >= n[axis]) continue;
                        s += w[t + r] * f[p + static_cast<std::ptrdiff_t>(t) * static_cast<std::ptrdiff_t>(stride[axis])];
                        ws += w[t + r];
                    }
                    out[p] = s / ws;
                }
        f.swap(out);
    }
}

} // namespace

Phantom generate_phantom(const PhantomSpec& spec, std::uint64_t seed) {
    spec.validate();
    const Grid3& g = spec.grid;
    const std::size_t V = g.voxels();
    std::vector<double> re(V, spec.storage), im(V, spec.loss);
    SegmentationMask mask(g, spec.classes);
    std::vector<int> owner(V, -1);
    for (std::size_t n = 0; n < spec.inclusions.size(); ++n) {
        const auto& inc = spec.inclusions[n];
        bool overlapped = false;
        for (int i = 0; i < g.nx; ++i)
            for (int j = 0; j < g.ny; ++j)
                for (int k = 0; k < g.nz; ++k) {
                    if (!inside(inc, (i + 0.5) * g.dx, (j + 0.5) * g.dy, (k + 0.5) * g.dz)) continue;
                    const std::size_t p = g.index(i, j, k);
                    if (owner[p] >= 0) overlapped = true;
                    owner[p] = static_cast<int>(n);
                    re[p] = inc.storage;
                    im[p] = inc.loss;
                    mask.labels[p] = static_cast<std::uint16_t>(inc.label);
                }
        if (overlapped) warn("phantom: inclusion " + std::to_string(n) + " overlaps an earlier one and overrides it");
    }
    if (spec.texture > 0.0) {
        Rng rng(mix_seed(seed, 77));
        std::vector<double> noise(V);
        for (auto& x : noise) x = rng.normal();
        blur(noise, g, 2.0);
        double ss = 0.0;
        for (double x : noise) ss += x * x;
        const double sd = std::sqrt(ss / static_cast<double>(V));
        for (std::size_t p = 0; p < V; ++p) {
            const double f = 1.0 + spec.texture * std::clamp(noise[p] / sd, -2.0, 2.0) / 2.0;
            re[p] *= f;
            im[p] *= f;
        }
    }
    blur(re, g, spec.blur_voxels);
    blur(im, g, spec.blur_voxels);
    Phantom ph{ComplexVolume(g, 1), std::move(mask)};
    for (std::size_t p = 0; p < V; ++p) ph.mu.data[p] = {re[p], im[p]};
    return ph;
}

void PhantomDistribution::validate() const {
    if (min_inclusions < 0 || max_inclusions < min_inclusions)
        throw ConfigError("dataset.inclusions_min and dataset.inclusions_max must satisfy 0 <= min <= max");
    if (!(background_min > 0.0) || background_max < background_min)
        throw ConfigError("dataset.background_min must be positive and not above dataset.background_max");
    if (class_storage.empty() || class_storage.size() > 65534)
        throw ConfigError("dataset.class_storage needs at least one inclusion class");
    for (const auto& b : class_storage)
        if (!(b[0] > 0.0) || b[1] < b[0]) throw ConfigError("dataset.class_storage bands must be positive and ordered (lo:hi)");
    if (!(loss_ratio_min >= 0.0) || loss_ratio_max < loss_ratio_min)
        throw ConfigError("dataset.loss_ratio_min must be non-negative and not above dataset.loss_ratio_max");
    if (!class_loss_ratio.empty() && class_loss_ratio.size() != class_storage.size())
        throw ConfigError("dataset.class_loss_ratio needs one band per dataset.class_storage band (" +
                          std::to_string(class_storage.size()) + "), got " + std::to_string(class_loss_ratio.size()));
    for (const auto& b : class_loss_ratio)
        if (!(b[0] >= 0.0) || b[1] < b[0])
            throw ConfigError("dataset.class_loss_ratio bands must be non-negative and ordered (lo:hi)");
    if (!(radius_min_voxels > 0.0) || radius_max_voxels < radius_min_voxels)
        throw ConfigError("dataset.radius_min must be positive and not above dataset.radius_max");
    if (2 * margin_voxels >= std::min({grid.nx, grid.ny, grid.nz}))
        throw ConfigError("dataset.margin leaves no room for inclusion centers");
    if (!(blur_voxels >= 0.0)) throw ConfigError("dataset.blur must be non-negative");
    if (!(texture >= 0.0 && texture < 1.0)) throw ConfigError("dataset.texture must lie in [0, 1)");
}

PhantomSpec sample_phantom_spec(const PhantomDistribution& d, std::uint64_t seed) {
    d.validate();
    Rng rng(seed);
    PhantomSpec s;
    s.grid = d.grid;
    s.classes = static_cast<int>(d.class_storage.size()) + 1;
    s.blur_voxels = d.blur_voxels;
    s.texture = d.texture;
    s.storage = rng.uniform(d.background_min, d.background_max);
    s.loss = s.storage * rng.uniform(d.loss_ratio_min, d.loss_ratio_max);
    const int count = d.min_inclusions + static_cast<int>(rng.below(d.max_inclusions - d.min_inclusions + 1));
    const Grid3& g = d.grid;
    const int n[3] = {g.nx, g.ny, g.nz};
    const double h[3] = {g.dx, g.dy, g.dz};
    std::vector<std::uint8_t> taken(g.voxels(), 0);
    for (int c = 0; c < count; ++c) {
        // redraw a few times to keep inclusions apart; overlap is allowed as a last resort
        Inclusion inc;
        for (int attempt = 0; attempt < 50; ++attempt) {
            inc = Inclusion{};
            inc.label = 1 + static_cast<int>(rng.below(d.class_storage.size()));
            inc.shape = static_cast<Shape>(rng.below(3));
            for (int a = 0; a < 3; ++a) inc.center[a] = rng.uniform(d.margin_voxels, n[a] - d.margin_voxels) * h[a];
            const double r = rng.uniform(d.radius_min_voxels, d.radius_max_voxels);
            for (int a = 0; a < 3; ++a) {
                const double f = inc.shape == Shape::sphere ? 1.0
                                 : inc.shape == Shape::box  ? rng.uniform(0.6, 0.9)
                                                            : rng.uniform(0.6, 1.2);
                inc.size[a] = r * f * h[inc.shape == Shape::sphere ? 0 : a];
            }
            if (inc.shape == Shape::sphere) inc.size[1] = inc.size[2] = inc.size[0];
            bool clear = true;
            std::vector<std::size_t> cells;
            for (int i = 0; i < n[0] && clear; ++i)
                for (int j = 0; j < n[1] && clear; ++j)
                    for (int k = 0; k < n[2]; ++k) {
                        if (!inside(inc, (i + 0.5) * h[0], (j + 0.5) * h[1], (k + 0.5) * h[2])) continue;
                        const std::size_t p = g.index(i, j, k);
                        if (taken[p]) {
                            clear = false;
                            break;
                        }
                        cells.push_back(p);
                    }
            if (clear || attempt == 49)
                for (std::size_t p : cells) taken[p] = 1;
            if (clear) break;
        }
        const auto& band = d.class_storage[inc.label - 1];
        inc.storage = rng.uniform(band[0], band[1]);
        const double lo = d.class_loss_ratio.empty() ? d.loss_ratio_min : d.class_loss_ratio[inc.label - 1][0];
        const double hi = d.class_loss_ratio.empty() ? d.loss_ratio_max : d.class_loss_ratio[inc.label - 1][1];
        inc.loss = inc.storage * rng.uniform(lo, hi);
        s.inclusions.push_back(inc);
    }
    return s;
}

} // namespace onli
