#include "onli/eval/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace onli {

std::string region_name(int label) {
    static const char* names[] = {"background", "cortical_gm", "white_matter", "subcortical_gm",
                                  "brainstem_cerebellum", "csf"};
    if (label >= 0 && label < 6) return names[label];
    return "label_" + std::to_string(label);
}

double regional_mean(const RealVolume& vol, int channel, const SegmentationMask& mask, int label) {
    if (!vol.grid.same_shape(mask.grid)) throw GeometryError("regional_mean: mask grid differs from the volume");
    if (channel < 0 || channel >= vol.channels) throw SizingError("regional_mean: channel out of range");
    const auto v = vol.channel(channel);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < v.size(); ++p)
        if (label < 0 || mask.labels[p] == label) {
            s += v[p];
            ++n;
        }
    if (n == 0) throw EmptyRegionError("region '" + region_name(label) + "' has no voxels");
    return s / static_cast<double>(n);
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw SizingError("pearson_r: lists differ in length");
    if (x.size() < 3) throw SizingError("pearson_r needs at least 3 pairs");
    // Welford co-moment update, single pass.
    double mx = 0, my = 0, sxx = 0, syy = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double n = static_cast<double>(i + 1);
        const double dx = x[i] - mx, dy = y[i] - my;
        mx += dx / n;
        my += dy / n;
        sxx += dx * (x[i] - mx);
        syy += dy * (y[i] - my);
        sxy += dx * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) throw DegenerateError("pearson_r: zero variance, correlation undefined");
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double ape(double pred_mean, double gt_mean) {
    if (gt_mean == 0.0) throw DegenerateError("ape: ground truth mean is zero");
    return 100.0 * std::abs(pred_mean - gt_mean) / std::abs(gt_mean);
}

namespace {

void gaussian_filter(std::vector<double>& f, const Grid3& g, const std::vector<double>& w, int r) {
    const int n[3] = {g.nx, g.ny, g.nz};
    const std::ptrdiff_t stride[3] = {static_cast<std::ptrdiff_t>(g.ny) * g.nz, g.nz, 1};
    std::vector<double> out(f.size());
    for (int axis = 0; axis < 3; ++axis) {
        for (int i = 0; i < g.nx; ++i)
            for (int j = 0; j < g.ny; ++j)
                for (int k = 0; k < g.nz; ++k) {
                    const int pos = axis == 0 ? i : (axis == 1 ? j : k);
                    const std::size_t p = g.index(i, j, k);
                    double s = 0.0, ws = 0.0;
                    for (int t = std::max(-r, -pos); t <= std::min(r, n[axis] - 1 - pos); ++t) {
                        s += w[t + r] * f[p + t * stride[axis]];
                        ws += w[t + r];
                    }
                    out[p] = s / ws;
                }
        f.swap(out);
    }
}

} // namespace

double ssim3d(const RealVolume& a, const RealVolume& b, const SegmentationMask* mask, int region,
              const SsimOptions& opt, int ca, int cb) {
    if (!a.grid.same_shape(b.grid)) throw SizingError("ssim3d: shapes differ");
    if (mask && !mask->grid.same_shape(a.grid)) throw GeometryError("ssim3d: mask grid differs");
    if (ca < 0 || ca >= a.channels || cb < 0 || cb >= b.channels) throw SizingError("ssim3d: channel out of range");
    const Grid3& g = a.grid;
    const auto x = a.channel(ca), y = b.channel(cb);
    auto in_region = [&](std::size_t p) { return !mask || region < 0 || mask->labels[p] == region; };

    double L;
    if (opt.range) {
        L = *opt.range;
    } else {
        double lo = INFINITY, hi = -INFINITY;
        for (std::size_t p = 0; p < y.size(); ++p)
            if (in_region(p)) {
                lo = std::min(lo, y[p]);
                hi = std::max(hi, y[p]);
            }
        L = hi - lo;
    }
    if (!(L > 0.0)) throw DegenerateError("ssim3d: dynamic range L is zero");
    const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);

    const int r = opt.radius;
    std::vector<double> w(2 * r + 1);
    for (int t = -r; t <= r; ++t) w[t + r] = std::exp(-0.5 * t * t / (opt.sigma * opt.sigma));
    const std::size_t V = g.voxels();
    std::vector<double> mx(x.begin(), x.end()), my(y.begin(), y.end()), xx(V), yy(V), xy(V);
    for (std::size_t p = 0; p < V; ++p) {
        xx[p] = x[p] * x[p];
        yy[p] = y[p] * y[p];
        xy[p] = x[p] * y[p];
    }
    for (auto* f : {&mx, &my, &xx, &yy, &xy}) gaussian_filter(*f, g, w, r);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < V; ++p) {
        if (!in_region(p)) continue;
        const double vx = xx[p] - mx[p] * mx[p], vy = yy[p] - my[p] * my[p], cxy = xy[p] - mx[p] * my[p];
        s += (2 * mx[p] * my[p] + c1) * (2 * cxy + c2) / ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
        ++n;
    }
    if (n == 0) throw EmptyRegionError("ssim3d: region '" + region_name(region) + "' has no voxels");
    return s / static_cast<double>(n);
}

DerivedMaps derived_maps(const RealVolume& mu) {
    if (mu.channels != 2) throw SizingError("derived_maps expects storage and loss channels");
    const std::size_t V = mu.grid.voxels();
    DerivedMaps d{RealVolume(mu.grid, 1), RealVolume(mu.grid, 1), std::vector<std::uint8_t>(V, 0)};
    const auto s = mu.channel(0), l = mu.channel(1);
    for (std::size_t p = 0; p < V; ++p) {
        d.magnitude.data[p] = std::hypot(s[p], l[p]);
        if (s[p] > damping_floor_pa) {
            d.damping.data[p] = l[p] / (2.0 * s[p]);
            d.valid[p] = 1;
        }
    }
    return d;
}

TTest paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw SizingError("paired_t_test: lists differ in length");
    if (a.size() < 2) throw SizingError("paired_t_test needs at least 2 pairs");
    const double n = static_cast<double>(a.size());
    double mean = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) mean += a[i] - b[i];
    mean /= n;
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - b[i] - mean) * (a[i] - b[i] - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (!(sd > 0.0)) throw DegenerateError("paired_t_test: differences have zero variance");
    TTest r;
    r.df = static_cast<int>(a.size()) - 1;
    r.t = mean / (sd / std::sqrt(n));
    const boost::math::students_t dist(r.df);
    r.p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(r.t)));
    return r;
}

CiMethod parse_ci_method(const std::string& s) {
    if (s == "normal") return CiMethod::normal;
    if (s == "t") return CiMethod::student_t;
    throw ConfigError("unknown confidence interval method '" + s + "' (expected normal or t)");
}

FoldStats fold_stats(std::span<const double> losses, CiMethod method) {
    if (losses.empty()) throw SizingError("fold_stats: no folds");
    FoldStats f;
    f.losses.assign(losses.begin(), losses.end());
    const double n = static_cast<double>(losses.size());
    for (double v : losses) f.mean += v;
    f.mean /= n;
    if (losses.size() == 1) {
        f.single = true;
        f.ci_low = f.ci_high = f.mean;
        return f;
    }
    double ss = 0.0;
    for (double v : losses) ss += (v - f.mean) * (v - f.mean);
    f.std = std::sqrt(ss / (n - 1.0));
    const double q = method == CiMethod::normal
                         ? boost::math::quantile(boost::math::normal(), 0.975)
                         : boost::math::quantile(boost::math::students_t(n - 1.0), 0.975);
    const double half = q * f.std / std::sqrt(n);
    f.ci_low = f.mean - half;
    f.ci_high = f.mean + half;
    return f;
}

} // namespace onli
