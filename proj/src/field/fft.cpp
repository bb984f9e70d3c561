#include "onli/field/fft.hpp"

#include <fftw3.h>

#include <climits>
#include <map>
#include <mutex>
#include <numbers>
#include <tuple>
#include <vector>

namespace onli {

namespace {

enum class PlanKind { c2c_forward, c2c_inverse, r2c, c2r };

// FFTW planning is not thread-safe; execution with the new-array interface is.
// FFTW_ESTIMATE keeps plan selection deterministic, which the reproducibility
// guarantees rely on.
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    fftw_plan get(PlanKind kind, const Grid3& g) {
        std::lock_guard lock(mutex_);
        const auto key = std::make_tuple(kind, g.nx, g.ny, g.nz);
        if (auto it = plans_.find(key); it != plans_.end()) return it->second;

        const std::size_t n = g.voxels();
        const std::size_t h = static_cast<std::size_t>(g.nx) * g.ny * (g.nz / 2 + 1);
        constexpr unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        fftw_plan plan = nullptr;
        switch (kind) {
        case PlanKind::c2c_forward:
        case PlanKind::c2c_inverse: {
            auto* a = fftw_alloc_complex(n);
            auto* b = fftw_alloc_complex(n);
            plan = fftw_plan_dft_3d(g.nx, g.ny, g.nz, a, b,
                                    kind == PlanKind::c2c_forward ? FFTW_FORWARD : FFTW_BACKWARD, flags);
            fftw_free(a);
            fftw_free(b);
            break;
        }
        case PlanKind::r2c: {
            auto* a = fftw_alloc_real(n);
            auto* b = fftw_alloc_complex(h);
            plan = fftw_plan_dft_r2c_3d(g.nx, g.ny, g.nz, a, b, flags);
            fftw_free(a);
            fftw_free(b);
            break;
        }
        case PlanKind::c2r: {
            auto* a = fftw_alloc_complex(h);
            auto* b = fftw_alloc_real(n);
            plan = fftw_plan_dft_c2r_3d(g.nx, g.ny, g.nz, a, b, flags);
            fftw_free(a);
            fftw_free(b);
            break;
        }
        }
        if (plan == nullptr) throw SizingError("FFT planner rejected the grid shape");
        plans_.emplace(key, plan);
        return plan;
    }

private:
    PlanCache() = default;
    ~PlanCache() {
        for (auto& [key, plan] : plans_) fftw_destroy_plan(plan);
    }

    std::mutex mutex_;
    std::map<std::tuple<PlanKind, int, int, int>, fftw_plan> plans_;
};

void check_fft_size(const Grid3& g) {
    if (g.voxels() > static_cast<std::size_t>(INT_MAX))
        throw SizingError("volume too large for a single 3D FFT (voxel count overflows the transform size)");
}

fftw_complex* as_fftw(std::complex<double>* p) { return reinterpret_cast<fftw_complex*>(p); }

} // namespace

ComplexVolume fftn(const ComplexVolume& v, bool inverse) {
    check_fft_size(v.grid);
    ComplexVolume out(v.grid, v.channels);
    fftw_plan plan = PlanCache::instance().get(inverse ? PlanKind::c2c_inverse : PlanKind::c2c_forward, v.grid);
    const std::size_t n = v.voxels();
    std::vector<std::complex<double>> scratch(n);
    for (int c = 0; c < v.channels; ++c) {
        auto src = v.channel(c);
        std::copy(src.begin(), src.end(), scratch.begin());
        auto dst = out.channel(c);
        fftw_execute_dft(plan, as_fftw(scratch.data()), as_fftw(dst.data()));
        if (inverse) {
            const double scale = 1.0 / static_cast<double>(n);
            for (auto& z : dst) z *= scale;
        }
    }
    return out;
}

ComplexVolume naive_dftn(const ComplexVolume& v, bool inverse) {
    const Grid3& g = v.grid;
    if (g.voxels() > naive_dft_max_voxels)
        throw SizingError("naive_dftn refuses volumes above " + std::to_string(naive_dft_max_voxels) + " voxels");

    const double sign = inverse ? 1.0 : -1.0;
    auto twiddles = [sign](int n) {
        std::vector<std::complex<double>> t(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) t[k] = std::polar(1.0, sign * 2.0 * std::numbers::pi * k / n);
        return t;
    };
    const auto tx = twiddles(g.nx), ty = twiddles(g.ny), tz = twiddles(g.nz);
    const double scale = inverse ? 1.0 / static_cast<double>(g.voxels()) : 1.0;

    ComplexVolume out(g, v.channels);
    for (int c = 0; c < v.channels; ++c) {
        for (int kx = 0; kx < g.nx; ++kx)
            for (int ky = 0; ky < g.ny; ++ky)
                for (int kz = 0; kz < g.nz; ++kz) {
                    std::complex<double> acc = 0.0;
                    for (int x = 0; x < g.nx; ++x) {
                        const auto ex = tx[(static_cast<long>(kx) * x) % g.nx];
                        for (int y = 0; y < g.ny; ++y) {
                            const auto exy = ex * ty[(static_cast<long>(ky) * y) % g.ny];
                            for (int z = 0; z < g.nz; ++z)
                                acc += v.at(c, x, y, z) * (exy * tz[(static_cast<long>(kz) * z) % g.nz]);
                        }
                    }
                    out.at(c, kx, ky, kz) = acc * scale;
                }
    }
    return out;
}

RealFft3::RealFft3(const Grid3& grid)
    : grid_(grid),
      real_size_(grid.voxels()),
      half_size_(static_cast<std::size_t>(grid.nx) * grid.ny * (grid.nz / 2 + 1)),
      half_nz_(grid.nz / 2 + 1) {
    check_fft_size(grid);
    forward_plan_ = PlanCache::instance().get(PlanKind::r2c, grid);
    inverse_plan_ = PlanCache::instance().get(PlanKind::c2r, grid);
}

void RealFft3::forward(std::span<const double> in, std::span<std::complex<double>> out) const {
    if (in.size() != real_size_ || out.size() != half_size_) throw SizingError("RealFft3::forward size mismatch");
    // FFTW never writes to the input of an out-of-place r2c transform.
    fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), const_cast<double*>(in.data()),
                         as_fftw(out.data()));
}

void RealFft3::symmetrize_plane(std::span<std::complex<double>> spec, int kz) const {
    const int nx = grid_.nx, ny = grid_.ny;
    auto at = [&](int x, int y) -> std::complex<double>& {
        return spec[(static_cast<std::size_t>(x) * ny + y) * half_nz_ + kz];
    };
    for (int x = 0; x < nx; ++x) {
        const int mx = (nx - x) % nx;
        for (int y = 0; y < ny; ++y) {
            const int my = (ny - y) % ny;
            // Visit each conjugate pair once.
            if (std::make_pair(x, y) > std::make_pair(mx, my)) continue;
            const auto a = at(x, y);
            const auto b = at(mx, my);
            const auto s = 0.5 * (a + std::conj(b));
            at(x, y) = s;
            at(mx, my) = std::conj(s);
        }
    }
}

void RealFft3::inverse(std::span<std::complex<double>> in, std::span<double> out) const {
    if (in.size() != half_size_ || out.size() != real_size_) throw SizingError("RealFft3::inverse size mismatch");
    symmetrize_plane(in, 0);
    if (grid_.nz % 2 == 0 && grid_.nz > 1) symmetrize_plane(in, grid_.nz / 2);
    fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_), as_fftw(in.data()), out.data());
}

} // namespace onli
