#include "onli/neuralop/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "onli/error.hpp"
#include "onli/log.hpp"

namespace onli {

namespace {

constexpr std::size_t block_voxels = 512;

int threads() { return thread_limit(); }

} // namespace

Activation parse_activation(const std::string& name) {
    if (name == "gelu") return Activation::gelu;
    if (name == "relu") return Activation::relu;
    throw ConfigError("unknown activation '" + name + "' (expected gelu or relu)");
}

std::string activation_name(Activation a) { return a == Activation::gelu ? "gelu" : "relu"; }

double activate(Activation a, double x) {
    if (a == Activation::relu) return x > 0.0 ? x : 0.0;
    return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double activate_derivative(Activation a, double x) {
    if (a == Activation::relu) return x > 0.0 ? 1.0 : 0.0;
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) * (std::numbers::inv_sqrtpi / std::numbers::sqrt2);
    return cdf + x * pdf;
}

void activation_forward(Activation a, std::span<const double> in, std::span<double> out) {
    if (in.size() != out.size()) throw SizingError("activation: size mismatch");
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = activate(a, in[i]);
}

void activation_backward(Activation a, std::span<const double> in, std::span<const double> gout,
                         std::span<double> gin) {
    if (in.size() != gout.size() || in.size() != gin.size()) throw SizingError("activation: size mismatch");
    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(in.size());
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) gin[i] += gout[i] * activate_derivative(a, in[i]);
}

void pointwise_linear(std::span<const double> in, int cin, const double* W, const double* b, int cout,
                      std::span<double> out, bool accumulate) {
    const std::size_t V = in.size() / static_cast<std::size_t>(cin);
    if (V * cin != in.size() || out.size() != V * cout) throw SizingError("pointwise_linear: size mismatch");
    const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((V + block_voxels - 1) / block_voxels);
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (std::ptrdiff_t bi = 0; bi < blocks; ++bi) {
        double tmp[block_voxels];
        const std::size_t s = static_cast<std::size_t>(bi) * block_voxels;
        const std::size_t len = std::min(block_voxels, V - s);
        for (int o = 0; o < cout; ++o) {
            const double bias = b ? b[o] : 0.0;
            for (std::size_t t = 0; t < len; ++t) tmp[t] = bias;
            for (int i = 0; i < cin; ++i) {
                const double w = W[static_cast<std::size_t>(o) * cin + i];
                const double* src = in.data() + static_cast<std::size_t>(i) * V + s;
                for (std::size_t t = 0; t < len; ++t) tmp[t] += w * src[t];
            }
            double* dst = out.data() + static_cast<std::size_t>(o) * V + s;
            if (accumulate)
                for (std::size_t t = 0; t < len; ++t) dst[t] += tmp[t];
            else
                for (std::size_t t = 0; t < len; ++t) dst[t] = tmp[t];
        }
    }
}

void pointwise_linear_backward(std::span<const double> in, int cin, const double* W, int cout,
                               std::span<const double> gout, std::span<double> gin, double* gW, double* gb) {
    const std::size_t V = in.size() / static_cast<std::size_t>(cin);
    if (gout.size() != V * cout) throw SizingError("pointwise_linear_backward: size mismatch");
    if (!gin.empty()) {
        if (gin.size() != in.size()) throw SizingError("pointwise_linear_backward: gin size mismatch");
        const std::ptrdiff_t blocks = static_cast<std::ptrdiff_t>((V + block_voxels - 1) / block_voxels);
#pragma omp parallel for num_threads(threads()) schedule(static)
        for (std::ptrdiff_t bi = 0; bi < blocks; ++bi) {
            const std::size_t s = static_cast<std::size_t>(bi) * block_voxels;
            const std::size_t len = std::min(block_voxels, V - s);
            for (int i = 0; i < cin; ++i) {
                double* dst = gin.data() + static_cast<std::size_t>(i) * V + s;
                for (int o = 0; o < cout; ++o) {
                    const double w = W[static_cast<std::size_t>(o) * cin + i];
                    const double* g = gout.data() + static_cast<std::size_t>(o) * V + s;
                    for (std::size_t t = 0; t < len; ++t) dst[t] += w * g[t];
                }
            }
        }
    }
    const std::ptrdiff_t pairs = static_cast<std::ptrdiff_t>(cout) * cin;
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (std::ptrdiff_t p = 0; p < pairs; ++p) {
        const std::size_t o = static_cast<std::size_t>(p) / cin, i = static_cast<std::size_t>(p) % cin;
        const double* g = gout.data() + o * V;
        const double* x = in.data() + i * V;
        double acc = 0.0;
        for (std::size_t v = 0; v < V; ++v) acc += g[v] * x[v];
        gW[p] += acc;
    }
    if (gb)
        for (int o = 0; o < cout; ++o) {
            const double* g = gout.data() + static_cast<std::size_t>(o) * V;
            double acc = 0.0;
            for (std::size_t v = 0; v < V; ++v) acc += g[v];
            gb[o] += acc;
        }
}

namespace {

// std::complex multiplication goes through the Annex G NaN-recovery path.
inline std::complex<double> cmul(std::complex<double> a, std::complex<double> b) {
    return {a.real() * b.real() - a.imag() * b.imag(), a.real() * b.imag() + a.imag() * b.real()};
}

inline std::complex<double> cmul_conj(std::complex<double> a, std::complex<double> b) {
    // conj(a) * b
    return {a.real() * b.real() + a.imag() * b.imag(), a.real() * b.imag() - a.imag() * b.real()};
}

} // namespace

void SpectralConv::check_capacity(const Grid3& grid, int modes) {
    if (modes < 1) throw CapacityError("spectral layer needs at least one retained mode");
    if (2 * modes > grid.nx)
        throw CapacityError("modes " + std::to_string(modes) + " exceed capacity along x (nx = " +
                            std::to_string(grid.nx) + ", need nx >= 2m)");
    if (2 * modes > grid.ny)
        throw CapacityError("modes " + std::to_string(modes) + " exceed capacity along y (ny = " +
                            std::to_string(grid.ny) + ", need ny >= 2m)");
    if (modes > grid.nz / 2 + 1)
        throw CapacityError("modes " + std::to_string(modes) + " exceed capacity along z (nz = " +
                            std::to_string(grid.nz) + ", need nz/2 + 1 >= m)");
}

SpectralConv::SpectralConv(const Grid3& grid, int modes, int cin, int cout)
    : grid_(grid), modes_(modes), cin_(cin), cout_(cout), fft_((check_capacity(grid, modes), grid)) {
    const int m = modes, hz = fft_.half_nz();
    const double n = static_cast<double>(grid.voxels());
    index_.reserve(4 * static_cast<std::size_t>(m) * m * m);
    for (int b = 0; b < 4; ++b) {
        const int bx = b / 2, by = b % 2;
        for (int mx = 0; mx < m; ++mx)
            for (int my = 0; my < m; ++my)
                for (int mz = 0; mz < m; ++mz) {
                    const int kx = bx ? grid.nx - m + mx : mx;
                    const int ky = by ? grid.ny - m + my : my;
                    index_.push_back((static_cast<std::size_t>(kx) * grid.ny + ky) * hz + mz);
                    const bool edge = mz == 0 || (grid.nz % 2 == 0 && mz == grid.nz / 2);
                    weight_.push_back((edge ? 1.0 : 2.0) / n);
                }
    }
}

void SpectralConv::forward(std::span<const double> in, const std::complex<double>* R, std::span<double> out,
                           std::vector<std::complex<double>>* saved) const {
    const std::size_t V = grid_.voxels(), M = index_.size(), H = fft_.half_size();
    if (in.size() != V * cin_ || out.size() != V * cout_) throw SizingError("spectral_conv: feature size mismatch");

    std::vector<std::complex<double>> X(static_cast<std::size_t>(cin_) * M);
#pragma omp parallel num_threads(threads())
    {
        std::vector<std::complex<double>> spec(H);
#pragma omp for schedule(static)
        for (int i = 0; i < cin_; ++i) {
            fft_.forward(in.subspan(static_cast<std::size_t>(i) * V, V), spec);
            auto* x = X.data() + static_cast<std::size_t>(i) * M;
            for (std::size_t q = 0; q < M; ++q) x[q] = spec[index_[q]];
        }
    }

    std::vector<std::complex<double>> Y(static_cast<std::size_t>(cout_) * M);
    const std::ptrdiff_t modes = static_cast<std::ptrdiff_t>(M);
#pragma omp parallel num_threads(threads())
    {
        std::vector<std::complex<double>> acc(cout_);
#pragma omp for schedule(static)
        for (std::ptrdiff_t q = 0; q < modes; ++q) {
            std::fill(acc.begin(), acc.end(), std::complex<double>{});
            const auto* r = R + static_cast<std::size_t>(q) * cin_ * cout_;
            for (int i = 0; i < cin_; ++i) {
                const auto xi = X[static_cast<std::size_t>(i) * M + q];
                const auto* ri = r + static_cast<std::size_t>(i) * cout_;
                for (int o = 0; o < cout_; ++o) acc[o] += cmul(xi, ri[o]);
            }
            for (int o = 0; o < cout_; ++o) Y[static_cast<std::size_t>(o) * M + q] = acc[o];
        }
    }

    const double scale = 1.0 / static_cast<double>(V);
#pragma omp parallel num_threads(threads())
    {
        std::vector<std::complex<double>> spec(H);
#pragma omp for schedule(static)
        for (int o = 0; o < cout_; ++o) {
            std::fill(spec.begin(), spec.end(), std::complex<double>{});
            const auto* y = Y.data() + static_cast<std::size_t>(o) * M;
            for (std::size_t q = 0; q < M; ++q) spec[index_[q]] = y[q];
            auto dst = out.subspan(static_cast<std::size_t>(o) * V, V);
            fft_.inverse(spec, dst);
            for (auto& v : dst) v *= scale;
        }
    }
    if (saved) *saved = std::move(X);
}

void SpectralConv::backward(std::span<const double> gout, const std::vector<std::complex<double>>& saved,
                            const std::complex<double>* R, std::span<double> gin,
                            std::complex<double>* gR) const {
    const std::size_t V = grid_.voxels(), M = index_.size(), H = fft_.half_size();
    if (gout.size() != V * cout_ || saved.size() != M * cin_)
        throw SizingError("spectral_conv backward: size mismatch");

    std::vector<std::complex<double>> GY(static_cast<std::size_t>(cout_) * M);
#pragma omp parallel num_threads(threads())
    {
        std::vector<std::complex<double>> spec(H);
#pragma omp for schedule(static)
        for (int o = 0; o < cout_; ++o) {
            fft_.forward(gout.subspan(static_cast<std::size_t>(o) * V, V), spec);
            auto* g = GY.data() + static_cast<std::size_t>(o) * M;
            for (std::size_t q = 0; q < M; ++q) g[q] = spec[index_[q]] * weight_[q];
        }
    }

    std::vector<std::complex<double>> GX(static_cast<std::size_t>(cin_) * M);
    const std::ptrdiff_t modes = static_cast<std::ptrdiff_t>(M);
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (std::ptrdiff_t q = 0; q < modes; ++q) {
        const auto* r = R + static_cast<std::size_t>(q) * cin_ * cout_;
        auto* gr = gR + static_cast<std::size_t>(q) * cin_ * cout_;
        for (int i = 0; i < cin_; ++i) {
            const auto xi = saved[static_cast<std::size_t>(i) * M + q];
            std::complex<double> gx{};
            for (int o = 0; o < cout_; ++o) {
                const auto gy = GY[static_cast<std::size_t>(o) * M + q];
                gr[static_cast<std::size_t>(i) * cout_ + o] += cmul_conj(xi, gy);
                gx += cmul_conj(r[static_cast<std::size_t>(i) * cout_ + o], gy);
            }
            GX[static_cast<std::size_t>(i) * M + q] = gx;
        }
    }

    if (gin.empty()) return;
    if (gin.size() != V * cin_) throw SizingError("spectral_conv backward: gin size mismatch");
    const double n = static_cast<double>(V);
#pragma omp parallel num_threads(threads())
    {
        std::vector<std::complex<double>> spec(H);
        std::vector<double> tmp(V);
#pragma omp for schedule(static)
        for (int i = 0; i < cin_; ++i) {
            std::fill(spec.begin(), spec.end(), std::complex<double>{});
            const auto* g = GX.data() + static_cast<std::size_t>(i) * M;
            for (std::size_t q = 0; q < M; ++q) spec[index_[q]] = g[q] / (weight_[q] * n);
            fft_.inverse(spec, tmp);
            auto dst = gin.subspan(static_cast<std::size_t>(i) * V, V);
            for (std::size_t v = 0; v < V; ++v) dst[v] += tmp[v];
        }
    }
}

void instance_norm_forward(std::span<const double> in, int channels, std::span<double> out) {
    const std::size_t V = in.size() / static_cast<std::size_t>(channels);
    if (out.size() != in.size()) throw SizingError("instance_norm: size mismatch");
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (int c = 0; c < channels; ++c) {
        const double* x = in.data() + static_cast<std::size_t>(c) * V;
        double* y = out.data() + static_cast<std::size_t>(c) * V;
        double s = 0.0;
        for (std::size_t v = 0; v < V; ++v) s += x[v];
        const double mean = s / static_cast<double>(V);
        double ss = 0.0;
        for (std::size_t v = 0; v < V; ++v) ss += (x[v] - mean) * (x[v] - mean);
        const double inv = 1.0 / std::sqrt(ss / static_cast<double>(V) + instance_norm_eps);
        for (std::size_t v = 0; v < V; ++v) y[v] = (x[v] - mean) * inv;
    }
}

void instance_norm_backward(std::span<const double> in, int channels, std::span<const double> gout,
                            std::span<double> gin) {
    const std::size_t V = in.size() / static_cast<std::size_t>(channels);
    if (gout.size() != in.size() || gin.size() != in.size()) throw SizingError("instance_norm: size mismatch");
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (int c = 0; c < channels; ++c) {
        const double* x = in.data() + static_cast<std::size_t>(c) * V;
        const double* g = gout.data() + static_cast<std::size_t>(c) * V;
        double* gx = gin.data() + static_cast<std::size_t>(c) * V;
        const double nv = static_cast<double>(V);
        double s = 0.0;
        for (std::size_t v = 0; v < V; ++v) s += x[v];
        const double mean = s / nv;
        double ss = 0.0;
        for (std::size_t v = 0; v < V; ++v) ss += (x[v] - mean) * (x[v] - mean);
        const double inv = 1.0 / std::sqrt(ss / nv + instance_norm_eps);
        double gs = 0.0, gys = 0.0;
        for (std::size_t v = 0; v < V; ++v) {
            gs += g[v];
            gys += g[v] * (x[v] - mean) * inv;
        }
        const double gm = gs / nv, gym = gys / nv;
        for (std::size_t v = 0; v < V; ++v) gx[v] += inv * (g[v] - gm - (x[v] - mean) * inv * gym);
    }
}

SpadeTables spade_tables(const SpadeWeights& w, Activation a) {
    SpadeTables t;
    const std::size_t K = w.classes, Hd = w.hidden, Wd = w.width;
    t.pre.resize(K * Hd);
    t.act.resize(K * Hd);
    t.gamma.resize(K * Wd);
    t.beta.resize(K * Wd);
    for (std::size_t c = 0; c < K; ++c) {
        // 1x1x1 conv of a one-hot vector selects column c.
        for (std::size_t h = 0; h < Hd; ++h) {
            t.pre[c * Hd + h] = w.conv1_b[h] + w.conv1_w[h * K + c];
            t.act[c * Hd + h] = activate(a, t.pre[c * Hd + h]);
        }
        const double* act = t.act.data() + c * Hd;
        for (std::size_t o = 0; o < Wd; ++o) {
            double g = w.gamma_b[o], b = w.beta_b[o];
            for (std::size_t h = 0; h < Hd; ++h) {
                g += w.gamma_w[o * Hd + h] * act[h];
                b += w.beta_w[o * Hd + h] * act[h];
            }
            t.gamma[c * Wd + o] = g;
            t.beta[c * Wd + o] = b;
        }
    }
    return t;
}

void spade_apply(const SpadeTables& t, int width, std::span<const std::uint16_t> labels,
                 std::span<const double> normalized, std::span<double> out) {
    const std::size_t V = labels.size();
    if (normalized.size() != V * width || out.size() != V * width) throw SizingError("spade: size mismatch");
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (int o = 0; o < width; ++o) {
        const double* n = normalized.data() + static_cast<std::size_t>(o) * V;
        double* y = out.data() + static_cast<std::size_t>(o) * V;
        for (std::size_t v = 0; v < V; ++v) {
            const std::size_t c = labels[v];
            y[v] = t.gamma[c * width + o] * n[v] + t.beta[c * width + o];
        }
    }
}

void spade_backward(const SpadeWeights& w, const SpadeTables& t, Activation a,
                    std::span<const std::uint16_t> labels, std::span<const double> normalized,
                    std::span<const double> gout, const SpadeGrads& g, std::span<double> gnormalized) {
    const std::size_t V = labels.size(), K = w.classes, Hd = w.hidden, Wd = w.width;
    if (normalized.size() != V * Wd || gout.size() != V * Wd || gnormalized.size() != V * Wd)
        throw SizingError("spade backward: size mismatch");
    std::vector<double> sg(K * Wd, 0.0), sb(K * Wd, 0.0);
#pragma omp parallel for num_threads(threads()) schedule(static)
    for (std::size_t o = 0; o < Wd; ++o) {
        const double* n = normalized.data() + o * V;
        const double* go = gout.data() + o * V;
        double* gn = gnormalized.data() + o * V;
        std::vector<double> accg(K, 0.0), accb(K, 0.0);
        for (std::size_t v = 0; v < V; ++v) {
            const std::size_t c = labels[v];
            accg[c] += go[v] * n[v];
            accb[c] += go[v];
            gn[v] = t.gamma[c * Wd + o] * go[v];
        }
        for (std::size_t c = 0; c < K; ++c) {
            sg[c * Wd + o] = accg[c];
            sb[c * Wd + o] = accb[c];
        }
    }
    for (std::size_t c = 0; c < K; ++c) {
        const double* act = t.act.data() + c * Hd;
        std::vector<double> ga(Hd, 0.0);
        for (std::size_t o = 0; o < Wd; ++o) {
            const double gg = sg[c * Wd + o], gb = sb[c * Wd + o];
            g.gamma_b[o] += gg;
            g.beta_b[o] += gb;
            for (std::size_t h = 0; h < Hd; ++h) {
                g.gamma_w[o * Hd + h] += gg * act[h];
                g.beta_w[o * Hd + h] += gb * act[h];
                ga[h] += w.gamma_w[o * Hd + h] * gg + w.beta_w[o * Hd + h] * gb;
            }
        }
        for (std::size_t h = 0; h < Hd; ++h) {
            const double gp = ga[h] * activate_derivative(a, t.pre[c * Hd + h]);
            g.conv1_w[h * K + c] += gp;
            g.conv1_b[h] += gp;
        }
    }
}

} // namespace onli
